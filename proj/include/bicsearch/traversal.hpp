#pragma once

#include <string>
#include <utility>
#include <vector>

#include "bicsearch/blame.hpp"
#include "bicsearch/vcs.hpp"

namespace bicsearch::traversal {

// A starting point for a backward file-history walk.
struct Source {
  vcs::CommitId start;
  std::string path;

  bool operator==(const Source&) const = default;
};

struct Step {
  vcs::CommitId commit;
  std::size_t depth = 0; // 1 = first commit past the start
};

// One source per (blame commit, path): the paths the commit was blamed
// under plus every file the fix touched. Blame commits are ordered by
// blamed-line count (descending), then id.
std::vector<Source> blame_ancestor_sources(const vcs::Repository& repo, const vcs::CommitId& bfc,
                                           const blame::BlameSet& blame_set);

// One source per file changed by the fix, starting at the fix itself.
std::vector<Source> bfc_ancestor_sources(const vcs::Repository& repo, const vcs::CommitId& bfc);

// Commits strictly behind `src.start` in the file's history, at depth
// 1..max_depth, newest first.
std::vector<Step> walk(const vcs::Repository& repo, const Source& src, std::size_t max_depth);

} // namespace bicsearch::traversal
