#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <vector>

#include "bicsearch/vcs.hpp"

namespace bicsearch::blame {

struct BlameSet {
  std::vector<vcs::BlameEntry> entries;
  std::map<vcs::CommitId, std::int64_t> per_origin_counts;
  bool used_fallback = false;

  std::vector<vcs::CommitId> origins() const;
};

struct BlameStats {
  std::int64_t total_blame_commits = 0;
  std::int64_t blamed_lines = 0;
  bool single_responsible = false;
  // Present only for a strict majority (> 50%) of blamed lines.
  std::optional<vcs::CommitId> dominant_commit;
  // Share of the most-blamed origin; above 0.5 exactly when dominant_commit is set.
  double dominant_fraction = 0.0;

  bool operator==(const BlameStats&) const = default;
};

/// True iff no hunk of any change deletes a line.
bool is_blameless(const std::vector<vcs::FileChange>& changes);

/// Blames every deleted line of the fix at its first parent.
/// Throws BlamelessInput when the fix has nothing to blame.
BlameSet blame_deleted_lines(const vcs::Repository& repo, const vcs::CommitId& bfc);

/// For an additions-only fix: blames up to two parent lines on each side of
/// every contiguous block of added lines.
BlameSet fallback_context_blame(const vcs::Repository& repo, const vcs::CommitId& bfc);

/// Picks blame_deleted_lines or fallback_context_blame by is_blameless.
BlameSet blame_for_fix(const vcs::Repository& repo, const vcs::CommitId& bfc);

BlameStats compute_blame_stats(const BlameSet& bs);

// Parent-revision lines adjacent to each added block of `fc`, clamped to
// [1, parent_line_count].
std::set<std::int64_t> fallback_context_lines(const vcs::FileChange& fc, std::int64_t parent_line_count);

// Number of contiguous blocks of added lines across all hunks of `fc`.
std::size_t added_block_count(const vcs::FileChange& fc);

} // namespace bicsearch::blame
