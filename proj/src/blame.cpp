#include "bicsearch/blame.hpp"
#include "bicsearch/errors.hpp"

#include <algorithm>

namespace bicsearch::blame {

using vcs::CommitId;
using vcs::FileChange;
using vcs::LineKind;

std::vector<CommitId> BlameSet::origins() const {
  std::vector<CommitId> out;
  out.reserve(per_origin_counts.size());
  for (const auto& [id, n] : per_origin_counts) out.push_back(id);
  return out;
}

bool is_blameless(const std::vector<FileChange>& changes) {
  for (const auto& fc : changes)
    for (const auto& h : fc.hunks)
      if (!h.deleted_lines.empty()) return false;
  return true;
}

namespace {

void tally(BlameSet& bs) {
  bs.per_origin_counts.clear();
  for (const auto& e : bs.entries) ++bs.per_origin_counts[e.origin];
}

} // namespace

BlameSet blame_deleted_lines(const vcs::Repository& repo, const CommitId& bfc) {
  const auto& rec = repo.read_commit(bfc);
  const auto& changes = repo.compute_diff(bfc);
  if (is_blameless(changes) || rec.is_root())
    throw Error(ErrorCode::BlamelessInput, bfc.str() + " deletes no lines");
  const CommitId& parent = rec.parents.front();

  BlameSet bs;
  for (const auto& fc : changes) {
    if (fc.binary || !fc.old_path) continue;
    std::set<std::int64_t> lines;
    for (const auto& h : fc.hunks)
      for (const auto& d : h.deleted_lines) lines.insert(d.line);
    if (lines.empty()) continue;
    auto entries = repo.blame_lines(parent, *fc.old_path, lines);
    bs.entries.insert(bs.entries.end(), entries.begin(), entries.end());
  }
  tally(bs);
  return bs;
}

std::set<std::int64_t> fallback_context_lines(const FileChange& fc, std::int64_t parent_line_count) {
  std::set<std::int64_t> out;
  if (fc.binary || !fc.old_path || parent_line_count <= 0) return out;
  auto add = [&](std::int64_t l) {
    if (l >= 1 && l <= parent_line_count) out.insert(l);
  };
  for (const auto& h : fc.hunks) {
    // With a zero-length old side, old_start names the line the hunk follows.
    std::int64_t last_old = h.old_count == 0 ? h.old_start : h.old_start - 1;
    bool in_block = false;
    for (const auto& l : h.body) {
      if (l.kind == LineKind::Added) {
        if (!in_block) {
          add(last_old - 1);
          add(last_old);
          add(last_old + 1);
          add(last_old + 2);
        }
        in_block = true;
        continue;
      }
      in_block = false;
      ++last_old;
    }
  }
  return out;
}

std::size_t added_block_count(const FileChange& fc) {
  std::size_t n = 0;
  for (const auto& h : fc.hunks) {
    bool in_block = false;
    for (const auto& l : h.body) {
      bool added = l.kind == LineKind::Added;
      if (added && !in_block) ++n;
      in_block = added;
    }
  }
  return n;
}

BlameSet fallback_context_blame(const vcs::Repository& repo, const CommitId& bfc) {
  const auto& rec = repo.read_commit(bfc);
  BlameSet bs;
  bs.used_fallback = true;
  if (rec.is_root()) return bs;
  const CommitId& parent = rec.parents.front();
  for (const auto& fc : repo.compute_diff(bfc)) {
    if (fc.binary || !fc.old_path) continue;
    auto count = repo.line_count(parent, *fc.old_path);
    if (!count) continue;
    auto lines = fallback_context_lines(fc, *count);
    if (lines.empty()) continue;
    auto entries = repo.blame_lines(parent, *fc.old_path, lines);
    bs.entries.insert(bs.entries.end(), entries.begin(), entries.end());
  }
  tally(bs);
  return bs;
}

BlameSet blame_for_fix(const vcs::Repository& repo, const CommitId& bfc) {
  if (is_blameless(repo.compute_diff(bfc))) return fallback_context_blame(repo, bfc);
  return blame_deleted_lines(repo, bfc);
}

BlameStats compute_blame_stats(const BlameSet& bs) {
  BlameStats s;
  s.total_blame_commits = static_cast<std::int64_t>(bs.per_origin_counts.size());
  for (const auto& [id, n] : bs.per_origin_counts) s.blamed_lines += n;
  s.single_responsible = s.total_blame_commits == 1;
  if (s.blamed_lines == 0) return s;

  auto top = std::max_element(bs.per_origin_counts.begin(), bs.per_origin_counts.end(),
                               [](const auto& a, const auto& b) { return a.second < b.second; });
  s.dominant_fraction = static_cast<double>(top->second) / static_cast<double>(s.blamed_lines);
  if (2 * top->second > s.blamed_lines) s.dominant_commit = top->first;
  return s;
}

} // namespace bicsearch::blame
