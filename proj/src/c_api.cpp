#include "bicsearch/bicsearch.h"

#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <string>

#include "bicsearch/agent.hpp"
#include "bicsearch/categorizer.hpp"
#include "bicsearch/dataset.hpp"
#include "bicsearch/errors.hpp"
#include "bicsearch/eval.hpp"
#include "bicsearch/tkg.hpp"
#include "bicsearch/util.hpp"
#include "bicsearch/vcs.hpp"

using namespace bicsearch;
using nlohmann::json;

struct bics_repo {
  vcs::Repository repo;
};

struct bics_config {
  eval::RunConfig run;
};

namespace {

thread_local std::string g_last_error;

static_assert(static_cast<int>(ErrorCode::Internal) + 1 == BICS_INTERNAL);

bics_status status_of(ErrorCode c) { return static_cast<bics_status>(static_cast<int>(c) + 1); }

bics_status fail(bics_status s, std::string msg) {
  g_last_error = std::move(msg);
  return s;
}

template <class F>
bics_status guarded(F&& f) {
  g_last_error.clear();
  try {
    f();
    return BICS_OK;
  } catch (const Error& e) {
    return fail(status_of(e.code()), e.what());
  } catch (const std::filesystem::filesystem_error& e) {
    return fail(BICS_IO, std::string("Io: ") + e.what());
  } catch (const std::exception& e) {
    return fail(BICS_INTERNAL, std::string("Internal: ") + e.what());
  }
}

char* dup(const std::string& s) {
  auto* p = static_cast<char*>(std::malloc(s.size() + 1));
  if (!p) throw std::bad_alloc();
  std::memcpy(p, s.c_str(), s.size() + 1);
  return p;
}

void require(const void* p, const char* what) {
  if (!p) throw Error(ErrorCode::InvalidArgument, std::string(what) + " is null");
}

std::size_t positive(const std::string& key, const std::string& v) {
  std::size_t pos = 0;
  unsigned long long n = 0;
  try {
    n = std::stoull(v, &pos);
  } catch (const std::exception&) {
    pos = 0;
  }
  if (pos != v.size() || v.empty() || v[0] == '-')
    throw Error(ErrorCode::InvalidArgument, key + " expects a non-negative integer, got '" + v + "'");
  return static_cast<std::size_t>(n);
}

struct Loaded {
  eval::DatasetLoad data;
  eval::RunConfig cfg;
};

// Relative repository paths in a dataset resolve against the dataset's own
// directory unless base_dir is configured.
Loaded load(const char* dataset_path, const bics_config* cfg) {
  require(dataset_path, "dataset path");
  require(cfg, "config");
  Loaded l{eval::load_dataset(dataset_path), cfg->run};
  if (l.cfg.base_dir.empty()) l.cfg.base_dir = std::filesystem::absolute(dataset_path).parent_path();
  return l;
}

json depth_json(const categorize::DepthSummary& d) {
  auto opt = [](const std::optional<std::int64_t>& v) { return v ? json(*v) : json(nullptr); };
  return {{"n", d.n}, {"p50", opt(d.p50)}, {"p80", opt(d.p80)}, {"max", opt(d.max)}, {"coverage", d.coverage}};
}

} // namespace

extern "C" {

const char* bics_version(void) { return "0.1.0"; }

const char* bics_status_name(bics_status status) {
  if (status == BICS_OK) return "Ok";
  if (status < BICS_OK || status > BICS_INTERNAL) return "Unknown";
  return to_string(static_cast<ErrorCode>(static_cast<int>(status) - 1)).data();
}

const char* bics_last_error(void) { return g_last_error.c_str(); }

void bics_string_free(char* s) { std::free(s); }

bics_status bics_config_new(bics_config** out) {
  return guarded([&] {
    require(out, "out");
    *out = new bics_config();
  });
}

void bics_config_free(bics_config* cfg) { delete cfg; }

bics_status bics_config_set(bics_config* cfg, const char* key, const char* value) {
  return guarded([&] {
    require(cfg, "config");
    require(key, "key");
    require(value, "value");
    std::string k = key, v = value;
    auto& r = cfg->run;
    if (k == "max_depth") r.tkg.max_depth = positive(k, v);
    else if (k == "candidate_cap") r.tkg.candidate_cap = positive(k, v);
    else if (k == "top_k") r.tkg.top_k = positive(k, v);
    else if (k == "max_steps") r.budget.max_steps = positive(k, v);
    else if (k == "max_diff_reads") r.budget.max_diff_reads = positive(k, v);
    else if (k == "workers") r.workers = positive(k, v);
    else if (k == "sanitize") {
      if (v != "true" && v != "false") throw Error(ErrorCode::InvalidArgument, "sanitize expects true or false");
      r.tkg.sanitize = v == "true";
    } else if (k == "policy") {
      auto p = eval::policy_kind_from_string(v);
      if (!p) throw Error(ErrorCode::InvalidArgument, "unknown policy '" + v + "'");
      r.policy = *p;
    } else if (k == "cassette") r.cassette = v;
    else if (k == "repos_dir") r.repos_dir = v;
    else if (k == "base_dir") r.base_dir = v;
    else if (k == "cache_dir") r.cache_dir = v;
    else throw Error(ErrorCode::InvalidArgument, "unknown config key '" + k + "'");
  });
}

bics_status bics_config_describe(const bics_config* cfg, char** out_json) {
  return guarded([&] {
    require(cfg, "config");
    require(out_json, "out");
    *out_json = dup(json{{"digest", cfg->run.digest()}, {"config", cfg->run.to_json()}}.dump(2) + "\n");
  });
}

bics_status bics_repo_open(const char* path, bics_repo** out) {
  return guarded([&] {
    require(path, "path");
    require(out, "out");
    *out = new bics_repo{vcs::Repository(path)};
  });
}

void bics_repo_close(bics_repo* repo) { delete repo; }

bics_status bics_identify(bics_repo* repo, const char* bfc, const bics_config* cfg, const char* transcript_path,
                          char** out_json) {
  return guarded([&] {
    require(repo, "repo");
    require(bfc, "bfc");
    require(cfg, "config");
    require(out_json, "out");
    cfg->run.validate();
    auto id = repo->repo.resolve(bfc);
    eval::PolicyBundle bundle(cfg->run);
    auto res = eval::identify(repo->repo, id, cfg->run, bundle.policy());
    bundle.finish();
    if (transcript_path) agent::write_transcript(transcript_path, res.decision);
    auto j = agent::decision_json(res.decision, res.build.graph);
    j["bfc"] = id.str();
    j["policy"] = bundle.policy().identity();
    j["config_digest"] = cfg->run.digest();
    j["candidates"] = res.candidates.candidates.size();
    *out_json = dup(j.dump(2) + "\n");
  });
}

bics_status bics_graph_export(bics_repo* repo, const char* bfc, const bics_config* cfg, char** out_json) {
  return guarded([&] {
    require(repo, "repo");
    require(bfc, "bfc");
    require(cfg, "config");
    require(out_json, "out");
    auto id = repo->repo.resolve(bfc);
    auto build = tkg::build_for_fix(repo->repo, id, cfg->run.tkg);
    *out_json = dup(tkg::export_graph(build.graph));
  });
}

bics_status bics_categorize(const char* dataset_path, const bics_config* cfg, char** out_json) {
  return guarded([&] {
    require(out_json, "out");
    auto l = load(dataset_path, cfg);
    categorize::ReportOptions opts{l.cfg.repos_dir, l.cfg.base_dir, l.cfg.tkg.max_depth, l.cfg.workers};
    auto report = categorize::category_report(l.data.cases, opts);

    json records = json::array();
    for (const auto& r : report.records) {
      json j = {{"dataset", r.dataset}, {"repo", r.repo}, {"bfc", r.bfc.str()}, {"bic", r.bic.str()}};
      if (r.category) {
        j["category"] = categorize::to_string(r.category->kind);
        j["depth"] = r.category->depth ? json(*r.category->depth) : json(nullptr);
        if (r.category->fallback_kind) j["fallback_category"] = categorize::to_string(*r.category->fallback_kind);
      } else {
        j["error"] = r.error;
      }
      records.push_back(j);
    }
    json dist = json::object();
    for (const auto& [name, row] : report.by_dataset) {
      json counts = json::object(), pct = json::object();
      for (auto k : categorize::kAllKinds) {
        auto it = row.counts.find(k);
        counts[std::string(categorize::to_string(k))] = it == row.counts.end() ? 0 : it->second;
        pct[std::string(categorize::to_string(k))] = row.percent(k);
      }
      dist[name] = {{"cases", row.cases}, {"bics", row.bics}, {"counts", counts}, {"percent", pct},
                    {"errors", row.errors}};
    }
    json out = {{"table", categorize::render_report_table(report)},
                {"records", records},
                {"distribution", dist},
                {"depth_coverage",
                 {{"max_depth", report.max_depth},
                  {"BlameAncestor", depth_json(report.blame_ancestor_depths)},
                  {"BfcAncestor", depth_json(report.bfc_ancestor_depths)}}},
                {"dataset_errors", l.data.errors}};
    *out_json = dup(out.dump(2) + "\n");
  });
}

bics_status bics_evaluate(const char* dataset_path, const bics_config* cfg, const char* ablation, int by_category,
                          char** out_json) {
  return guarded([&] {
    require(ablation, "ablation");
    require(out_json, "out");
    auto a = eval::ablation_from_string(ablation);
    if (!a) throw Error(ErrorCode::InvalidArgument, std::string("unknown ablation '") + ablation + "'");
    auto l = load(dataset_path, cfg);
    l.cfg.validate();
    eval::PolicyBundle bundle(l.cfg);
    auto run = eval::run_ablation(*a, l.data.cases, l.cfg, bundle.policy());
    bundle.finish();
    std::map<eval::TpCategory, std::int64_t> breakdown;
    if (by_category) {
      categorize::ReportOptions opts{l.cfg.repos_dir, l.cfg.base_dir, l.cfg.tkg.max_depth, l.cfg.workers};
      auto cats = eval::categories_by_case(categorize::category_report(l.data.cases, opts));
      breakdown = eval::breakdown_by_category(run.metrics, cats);
      run.metrics.tp_by_category = breakdown;
    }
    json out = {{"report", run.report_json()},
                {"records", eval::case_records_jsonl(run)},
                {"table", eval::render_metrics_table(run, by_category ? &breakdown : nullptr)},
                {"dataset_errors", l.data.errors}};
    *out_json = dup(out.dump(2) + "\n");
  });
}

bics_status bics_ablate(const char* dataset_path, const bics_config* cfg, const char* ablations, char** out_json) {
  return guarded([&] {
    require(ablations, "ablations");
    require(out_json, "out");
    std::vector<eval::Ablation> configs;
    std::string list = ablations;
    std::size_t start = 0;
    while (start <= list.size()) {
      auto end = list.find(',', start);
      if (end == std::string::npos) end = list.size();
      auto name = util::trim(std::string_view(list).substr(start, end - start));
      auto a = eval::ablation_from_string(name);
      if (!a) throw Error(ErrorCode::InvalidArgument, "unknown ablation '" + name + "'");
      configs.push_back(*a);
      start = end + 1;
    }
    auto l = load(dataset_path, cfg);
    l.cfg.validate();
    eval::PolicyBundle bundle(l.cfg);
    auto cmp = eval::compare_ablations(configs, l.data.cases, l.cfg, bundle.policy());
    bundle.finish();
    auto out = eval::ablation_json(cmp);
    out["table"] = eval::render_ablation_table(cmp);
    out["dataset_errors"] = l.data.errors;
    *out_json = dup(out.dump(2) + "\n");
  });
}

bics_status bics_fetch(const char* dataset_path, const bics_config* cfg, char** out_json) {
  return guarded([&] {
    require(out_json, "out");
    auto l = load(dataset_path, cfg);
    json repos = json::array();
    for (auto& r : eval::fetch_repos(l.data.cases, l.cfg.repos_dir, l.cfg.base_dir))
      repos.push_back({{"repo", r.repo_ref}, {"dir", r.dir.string()}, {"action", r.action}, {"error", r.error}});
    *out_json = dup(json{{"repos", repos}, {"dataset_errors", l.data.errors}}.dump(2) + "\n");
  });
}

bics_status bics_sanitize_message(const char* message, char** out) {
  return guarded([&] {
    require(message, "message");
    require(out, "out");
    *out = dup(tkg::sanitize_message(message));
  });
}

} // extern "C"
