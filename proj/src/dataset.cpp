#include "bicsearch/dataset.hpp"
#include "bicsearch/errors.hpp"
#include "bicsearch/util.hpp"

#include <json.hpp>

#include <algorithm>
#include <cctype>
#include <set>

namespace bicsearch::eval {

using nlohmann::json;

namespace {

vcs::CommitId commit_field(const json& v, const char* what) {
  if (!v.is_string()) throw Error(ErrorCode::DatasetFormat, std::string(what) + " must be a string");
  auto s = v.get<std::string>();
  if (!vcs::CommitId::valid(s))
    throw Error(ErrorCode::DatasetFormat, std::string(what) + " is not a 40-hex commit id: " + s);
  return vcs::CommitId::parse(s);
}

EvalCase parse_record(const std::string& line) {
  json j;
  try {
    j = json::parse(line);
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::DatasetFormat, std::string("invalid JSON: ") + e.what());
  }
  if (!j.is_object()) throw Error(ErrorCode::DatasetFormat, "record is not an object");
  if (!j.contains("repo") || !j["repo"].is_string() || j["repo"].get<std::string>().empty())
    throw Error(ErrorCode::DatasetFormat, "missing repo");
  if (!j.contains("bfc")) throw Error(ErrorCode::DatasetFormat, "missing bfc");
  if (!j.contains("bics") || !j["bics"].is_array() || j["bics"].empty())
    throw Error(ErrorCode::DatasetFormat, "bics must be a nonempty array");

  EvalCase c{j["repo"].get<std::string>(), commit_field(j["bfc"], "bfc"), {}, "", "", 0};
  for (const auto& b : j["bics"]) {
    auto id = commit_field(b, "bic");
    if (id == c.bfc) throw Error(ErrorCode::DatasetFormat, "bic equals bfc");
    if (std::find(c.ground_truth.begin(), c.ground_truth.end(), id) == c.ground_truth.end())
      c.ground_truth.push_back(id);
  }
  c.dataset_tag = j.value("dataset", std::string("default"));
  c.language_tag = j.value("language", std::string());
  return c;
}

} // namespace

DatasetLoad parse_dataset(std::string_view text) {
  DatasetLoad out;
  auto lines = util::split_lines(text);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    auto t = util::trim(lines[i]);
    if (t.empty() || t.starts_with('#')) continue;
    try {
      auto c = parse_record(t);
      c.line_no = i + 1;
      out.cases.push_back(std::move(c));
    } catch (const Error& e) {
      out.errors.push_back("line " + std::to_string(i + 1) + ": " + e.what());
    }
  }
  return out;
}

DatasetLoad load_dataset(const std::filesystem::path& path) { return parse_dataset(util::read_file(path)); }

bool is_remote_ref(std::string_view repo_ref) {
  return repo_ref.find("://") != std::string_view::npos || repo_ref.starts_with("git@");
}

std::string repo_dir_name(std::string_view repo_ref) {
  std::string s(repo_ref);
  while (!s.empty() && (s.back() == '/')) s.pop_back();
  if (s.ends_with(".git")) s.resize(s.size() - 4);
  for (char& c : s)
    if (c == ':') c = '/';
  auto last = s.rfind('/');
  std::string name = last == std::string::npos ? s : s.substr(last + 1);
  std::string owner;
  if (last != std::string::npos && last > 0) {
    auto prev = s.rfind('/', last - 1);
    owner = s.substr(prev == std::string::npos ? 0 : prev + 1, last - (prev == std::string::npos ? 0 : prev + 1));
  }
  std::string out = owner.empty() ? name : owner + "__" + name;
  for (char& c : out)
    if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_' || c == '.')) c = '_';
  return out.empty() ? "repo" : out;
}

std::filesystem::path resolve_repo(const std::string& repo_ref, const std::filesystem::path& repos_dir,
                                   const std::filesystem::path& base_dir) {
  if (is_remote_ref(repo_ref)) return repos_dir / repo_dir_name(repo_ref);
  std::filesystem::path p(repo_ref);
  if (p.is_relative() && !base_dir.empty()) p = base_dir / p;
  return p;
}

std::vector<FetchResult> fetch_repos(const std::vector<EvalCase>& cases, const std::filesystem::path& repos_dir,
                                     const std::filesystem::path& base_dir) {
  std::vector<FetchResult> out;
  std::set<std::string> seen;
  for (const auto& c : cases) {
    if (!seen.insert(c.repo_ref).second) continue;
    FetchResult r{c.repo_ref, resolve_repo(c.repo_ref, repos_dir, base_dir), "", ""};
    util::ProcessResult p;
    if (!is_remote_ref(c.repo_ref)) {
      r.action = std::filesystem::exists(r.dir) ? "local" : "failed";
      if (r.action == "failed") r.error = "no such directory";
      out.push_back(r);
      continue;
    }
    if (std::filesystem::exists(r.dir)) {
      r.action = "updated";
      p = util::run_process({"git", "-C", r.dir.string(), "fetch", "--quiet", c.repo_ref, "+refs/heads/*:refs/heads/*"});
    } else {
      r.action = "cloned";
      std::filesystem::create_directories(repos_dir);
      p = util::run_process({"git", "clone", "--quiet", "--bare", c.repo_ref, r.dir.string()});
    }
    if (p.exit_code != 0) {
      r.action = "failed";
      r.error = util::trim(p.err);
    }
    out.push_back(r);
  }
  return out;
}

} // namespace bicsearch::eval
