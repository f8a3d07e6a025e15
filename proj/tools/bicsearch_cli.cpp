// Command-line front end. Talks to the library through the C interface only.
#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <string>

#include "bicsearch/bicsearch.h"

using nlohmann::json;

namespace {

struct Failure {
  bics_status status;
};

void check(bics_status s) {
  if (s != BICS_OK) throw Failure{s};
}

struct OwnedString {
  char* p = nullptr;
  ~OwnedString() { bics_string_free(p); }
  std::string str() const { return p ? p : ""; }
};

using ConfigPtr = std::unique_ptr<bics_config, decltype(&bics_config_free)>;
using RepoPtr = std::unique_ptr<bics_repo, decltype(&bics_repo_close)>;

struct Options {
  std::size_t max_depth = 100;
  std::size_t candidate_cap = 200;
  std::size_t top_k = 20;
  std::size_t max_steps = 50;
  std::size_t max_diff_reads = 3;
  std::string policy = "deterministic";
  std::string cassette;
  std::size_t workers = 1;
  std::string repos_dir = "repos";
  std::string cache_dir;
  bool no_sanitize = false;
};

void add_config_flags(CLI::App* cmd, Options& o, bool search) {
  cmd->add_option("--max-depth", o.max_depth, "File-history depth bound")->capture_default_str();
  cmd->add_option("--candidate-cap", o.candidate_cap, "Maximum candidate commits per graph")->capture_default_str();
  cmd->add_option("--top-k", o.top_k, "Candidates shown to the agent")->capture_default_str();
  cmd->add_option("--repos-dir", o.repos_dir, "Directory holding fetched repositories")->capture_default_str();
  if (!search) return;
  cmd->add_option("--max-steps", o.max_steps, "Agent tool-call budget")->capture_default_str();
  cmd->add_option("--max-diff-reads", o.max_diff_reads, "Agent diff-read budget")->capture_default_str();
  cmd->add_option("--policy", o.policy, "deterministic, replay or llm")
      ->check(CLI::IsMember({"deterministic", "replay", "llm"}))
      ->capture_default_str();
  cmd->add_option("--cassette", o.cassette, "Cassette to replay (replay) or record into (llm)");
  cmd->add_option("--workers", o.workers, "Parallel cases")->capture_default_str();
}

ConfigPtr make_config(const Options& o) {
  bics_config* raw = nullptr;
  check(bics_config_new(&raw));
  ConfigPtr cfg(raw, &bics_config_free);
  auto set = [&](const char* k, const std::string& v) { check(bics_config_set(cfg.get(), k, v.c_str())); };
  set("max_depth", std::to_string(o.max_depth));
  set("candidate_cap", std::to_string(o.candidate_cap));
  set("top_k", std::to_string(o.top_k));
  set("max_steps", std::to_string(o.max_steps));
  set("max_diff_reads", std::to_string(o.max_diff_reads));
  set("policy", o.policy);
  set("workers", std::to_string(o.workers));
  set("repos_dir", o.repos_dir);
  set("sanitize", o.no_sanitize ? "false" : "true");
  if (!o.cassette.empty()) set("cassette", o.cassette);
  if (!o.cache_dir.empty()) set("cache_dir", o.cache_dir);
  return cfg;
}

RepoPtr open_repo(const std::string& path) {
  bics_repo* raw = nullptr;
  check(bics_repo_open(path.c_str(), &raw));
  return RepoPtr(raw, &bics_repo_close);
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::binary);
  f << text;
  if (!f) throw std::runtime_error("cannot write " + path.string());
}

void report_dataset_errors(const json& j) {
  for (const auto& e : j.value("dataset_errors", json::array()))
    std::cerr << "dataset: " << e.get<std::string>() << "\n";
}

std::string str_or(const json& j, const char* key, const char* fallback) {
  return j.contains(key) && j[key].is_string() ? j[key].get<std::string>() : fallback;
}

} // namespace

int main(int argc, char** argv) {
  CLI::App app{"Locate bug-inducing commits from bug-fixing commits"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(bics_version()));

  Options o;
  std::string repo, bfc, transcript, out, dataset, ablation = "full", configs;
  bool print_json = false, by_category = false;

  auto* identify = app.add_subcommand("identify", "Identify the inducing commit of one fix");
  identify->add_option("--repo", repo, "Local repository")->required();
  identify->add_option("--bfc", bfc, "Bug-fixing commit")->required();
  identify->add_option("--transcript", transcript, "Transcript output (default: transcript-<bfc>.jsonl)");
  identify->add_flag("--json", print_json, "Print the decision as JSON");
  identify->add_flag("--no-sanitize", o.no_sanitize, "Keep commit messages unsanitized");
  add_config_flags(identify, o, true);

  auto* evaluate = app.add_subcommand("evaluate", "Score one pipeline configuration over a dataset");
  evaluate->add_option("dataset", dataset, "Dataset file (JSON lines)")->required();
  evaluate->add_option("--ablation", ablation, "blame-only, blame-fallback, tkg-only, agent-only or full")
      ->capture_default_str();
  evaluate->add_option("--out", out, "Directory for records.jsonl and report.json");
  evaluate->add_option("--cache-dir", o.cache_dir, "Per-case results cache");
  evaluate->add_flag("--by-category", by_category, "Break true positives down by category");
  evaluate->add_flag("--no-sanitize", o.no_sanitize, "Refused: evaluation always sanitizes");
  add_config_flags(evaluate, o, true);

  auto* categorize = app.add_subcommand("categorize", "Distribution of ground-truth categories");
  categorize->add_option("dataset", dataset, "Dataset file (JSON lines)")->required();
  categorize->add_option("--out", out, "File for the JSON report");
  categorize->add_option("--workers", o.workers, "Parallel cases")->capture_default_str();
  add_config_flags(categorize, o, false);

  auto* ablate = app.add_subcommand("ablate", "Compare pipeline configurations with paired tests");
  ablate->add_option("dataset", dataset, "Dataset file (JSON lines)")->required();
  ablate->add_option("--configs", configs, "Comma-separated configurations; the last is the reference")
      ->default_val("blame-only,blame-fallback,tkg-only,agent-only,full");
  ablate->add_option("--out", out, "File for the JSON report");
  ablate->add_option("--cache-dir", o.cache_dir, "Per-case results cache");
  add_config_flags(ablate, o, true);

  auto* graph_export = app.add_subcommand("graph-export", "Write the knowledge graph of one fix");
  graph_export->add_option("--repo", repo, "Local repository")->required();
  graph_export->add_option("--bfc", bfc, "Bug-fixing commit")->required();
  graph_export->add_option("--out", out, "Output file (default: stdout)");
  graph_export->add_flag("--no-sanitize", o.no_sanitize, "Keep commit messages unsanitized");
  add_config_flags(graph_export, o, false);

  auto* fetch = app.add_subcommand("fetch", "Clone or update the repositories a dataset names");
  fetch->add_option("dataset", dataset, "Dataset file (JSON lines)")->required();
  fetch->add_option("--repos-dir", o.repos_dir, "Destination directory")->capture_default_str();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*identify) {
      auto cfg = make_config(o);
      auto r = open_repo(repo);
      if (transcript.empty()) transcript = "transcript-" + bfc.substr(0, 12) + ".jsonl";
      OwnedString s;
      check(bics_identify(r.get(), bfc.c_str(), cfg.get(), transcript.c_str(), &s.p));
      if (print_json) {
        std::cout << s.str();
        return 0;
      }
      auto j = json::parse(s.str());
      std::cout << "bfc:                 " << j["bfc"].get<std::string>() << "\n"
                << "predicted_bic:       " << str_or(j, "predicted_bic", "(none)") << "\n"
                << "kind:                " << str_or(j, "kind", "-") << "\n"
                << "reason:              " << j["reason"].get<std::string>() << "\n"
                << "steps:               " << j["steps_used"] << " (diff reads " << j["diff_reads_used"] << ")\n"
                << "fallback:            " << (j["fallback"].get<bool>() ? "yes" : "no") << "\n"
                << "used_fallback_blame: " << (j["used_fallback_blame"].get<bool>() ? "true" : "false") << "\n"
                << "tokens:              " << j["tokens_in"] << " in, " << j["tokens_out"] << " out\n"
                << "policy:              " << j["policy"].get<std::string>() << "\n"
                << "config_digest:       " << j["config_digest"].get<std::string>() << "\n"
                << "transcript:          " << transcript << "\n";
      if (!j["error"].get<std::string>().empty()) std::cout << "error:               " << j["error"] << "\n";
    } else if (*evaluate) {
      if (o.no_sanitize) {
        std::cerr << "error: --no-sanitize is refused for evaluate; benchmark runs always sanitize messages\n";
        return 2;
      }
      auto cfg = make_config(o);
      OwnedString s;
      check(bics_evaluate(dataset.c_str(), cfg.get(), ablation.c_str(), by_category ? 1 : 0, &s.p));
      auto j = json::parse(s.str());
      report_dataset_errors(j);
      std::cout << j["table"].get<std::string>();
      if (!out.empty()) {
        write_text(std::filesystem::path(out) / "records.jsonl", j["records"].get<std::string>());
        write_text(std::filesystem::path(out) / "report.json", j["report"].dump(2) + "\n");
      }
    } else if (*categorize) {
      auto cfg = make_config(o);
      OwnedString s;
      check(bics_categorize(dataset.c_str(), cfg.get(), &s.p));
      auto j = json::parse(s.str());
      report_dataset_errors(j);
      std::cout << j["table"].get<std::string>();
      if (!out.empty()) write_text(out, s.str());
    } else if (*ablate) {
      auto cfg = make_config(o);
      OwnedString s;
      check(bics_ablate(dataset.c_str(), cfg.get(), configs.c_str(), &s.p));
      auto j = json::parse(s.str());
      report_dataset_errors(j);
      std::cout << j["table"].get<std::string>();
      if (!out.empty()) write_text(out, s.str());
    } else if (*graph_export) {
      auto cfg = make_config(o);
      auto r = open_repo(repo);
      OwnedString s;
      check(bics_graph_export(r.get(), bfc.c_str(), cfg.get(), &s.p));
      if (out.empty()) std::cout << s.str();
      else write_text(out, s.str());
    } else if (*fetch) {
      auto cfg = make_config(o);
      OwnedString s;
      check(bics_fetch(dataset.c_str(), cfg.get(), &s.p));
      auto j = json::parse(s.str());
      report_dataset_errors(j);
      bool failed = false;
      for (const auto& r : j["repos"]) {
        std::cout << r["action"].get<std::string>() << " " << r["repo"].get<std::string>() << " -> "
                  << r["dir"].get<std::string>() << "\n";
        if (r["action"] == "failed") {
          std::cerr << "fetch failed for " << r["repo"].get<std::string>() << ": " << r["error"].get<std::string>()
                    << "\n";
          failed = true;
        }
      }
      if (failed) return 1;
    }
  } catch (const Failure& f) {
    std::cerr << "error: " << bics_last_error() << "\n";
    return f.status == BICS_INVALID_ARGUMENT ? 2 : 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
