#include "bicsearch/traversal.hpp"

#include <algorithm>
#include <map>
#include <set>

namespace bicsearch::traversal {

using vcs::CommitId;

namespace {

std::set<std::string> fix_paths(const vcs::Repository& repo, const CommitId& bfc, bool parent_side) {
  std::set<std::string> paths;
  for (const auto& fc : repo.compute_diff(bfc)) {
    if (parent_side) paths.insert(fc.old_path ? *fc.old_path : *fc.new_path);
    else paths.insert(fc.new_path ? *fc.new_path : *fc.old_path);
  }
  return paths;
}

} // namespace

std::vector<Source> blame_ancestor_sources(const vcs::Repository& repo, const CommitId& bfc,
                                           const blame::BlameSet& blame_set) {
  std::vector<std::pair<CommitId, std::int64_t>> origins(blame_set.per_origin_counts.begin(),
                                                         blame_set.per_origin_counts.end());
  std::stable_sort(origins.begin(), origins.end(), [](const auto& a, const auto& b) { return a.second > b.second; });

  std::map<CommitId, std::set<std::string>> blamed_paths;
  for (const auto& e : blame_set.entries) blamed_paths[e.origin].insert(e.origin_path);
  auto shared = fix_paths(repo, bfc, true);

  std::vector<Source> out;
  for (const auto& [origin, n] : origins) {
    std::set<std::string> paths = blamed_paths[origin];
    paths.insert(shared.begin(), shared.end());
    for (const auto& p : paths) out.push_back({origin, p});
  }
  return out;
}

std::vector<Source> bfc_ancestor_sources(const vcs::Repository& repo, const CommitId& bfc) {
  std::vector<Source> out;
  for (const auto& p : fix_paths(repo, bfc, false)) out.push_back({bfc, p});
  return out;
}

std::vector<Step> walk(const vcs::Repository& repo, const Source& src, std::size_t max_depth) {
  const auto& history = repo.file_history(src.start, src.path, max_depth + 1);
  std::size_t offset = (!history.empty() && history.front() == src.start) ? 0 : 1;
  std::vector<Step> out;
  for (std::size_t i = 0; i < history.size(); ++i) {
    std::size_t depth = i + offset;
    if (depth == 0) continue;
    if (depth > max_depth) break;
    out.push_back({history[i], depth});
  }
  return out;
}

} // namespace bicsearch::traversal
