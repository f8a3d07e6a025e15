#pragma once

#include <compare>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "bicsearch/util.hpp"

namespace bicsearch::vcs {

/// Full 40-character lowercase commit hash.
class CommitId {
public:
  // The all-zero id; never names a real commit.
  CommitId() : value_(40, '0') {}

  static bool valid(std::string_view text);
  // Throws InvalidArgument unless `text` matches ^[0-9a-f]{40}$.
  static CommitId parse(std::string_view text);

  const std::string& str() const noexcept { return value_; }
  std::string abbrev(std::size_t n = 12) const { return value_.substr(0, n); }

  auto operator<=>(const CommitId&) const = default;

private:
  explicit CommitId(std::string v) : value_(std::move(v)) {}
  std::string value_;
};

struct CommitRecord {
  CommitId id;
  std::int64_t author_time = 0;
  std::int64_t commit_time = 0;
  std::string message_raw;
  std::vector<CommitId> parents;

  bool is_root() const noexcept { return parents.empty(); }
  bool is_merge() const noexcept { return parents.size() >= 2; }
};

enum class LineKind { Context, Deleted, Added };

struct HunkLine {
  LineKind kind = LineKind::Context;
  std::string text;
  // Followed by "\ No newline at end of file" in the unified diff.
  bool no_newline = false;

  bool operator==(const HunkLine&) const = default;
};

struct NumberedLine {
  std::int64_t line = 0;
  std::string text;

  bool operator==(const NumberedLine&) const = default;
};

struct DiffHunk {
  std::int64_t old_start = 0;
  std::int64_t old_count = 0;
  std::int64_t new_start = 0;
  std::int64_t new_count = 0;
  std::string header_context;
  std::vector<NumberedLine> deleted_lines;
  std::vector<NumberedLine> added_lines;
  std::vector<HunkLine> body;

  bool operator==(const DiffHunk&) const = default;
};

struct FileChange {
  std::optional<std::string> old_path;
  std::optional<std::string> new_path;
  std::vector<DiffHunk> hunks;
  bool binary = false;
  // Raw lines from "diff --git" up to the first hunk header, kept so the
  // change renders back byte-identically.
  std::vector<std::string> header_lines;

  const std::string& path() const { return new_path ? *new_path : *old_path; }
  bool is_addition() const noexcept { return !old_path.has_value(); }
  bool is_deletion() const noexcept { return !new_path.has_value(); }
  bool is_rename() const { return old_path && new_path && *old_path != *new_path; }

  bool operator==(const FileChange&) const = default;
};

struct BlameEntry {
  std::string file;
  std::int64_t line = 0;
  CommitId origin;
  // Path of the blamed line inside `origin`; differs from `file` across renames.
  std::string origin_path;

  bool operator==(const BlameEntry&) const = default;
};

/// Parses `git diff` unified output (with extended headers) into changes.
std::vector<FileChange> parse_unified_diff(std::string_view text);

/// Inverse of parse_unified_diff for anything it produced.
std::string render_diff(const std::vector<FileChange>& changes);

/// Extracts the value of a C-style quoted or plain path token as git prints it.
std::string unquote_path(std::string_view token);

// A read-only handle on a local git repository. Memoizes commit metadata,
// diffs and histories, so one handle must stay confined to one thread.
class Repository {
public:
  explicit Repository(std::filesystem::path path);

  const std::filesystem::path& path() const noexcept { return path_; }

  // Resolves any revision expression (full id, unique prefix, ref).
  CommitId resolve(std::string_view rev) const;
  bool exists(const CommitId& id) const;

  const CommitRecord& read_commit(const CommitId& id) const;

  // Merge commits are diffed against their first parent.
  const std::vector<FileChange>& compute_diff(const CommitId& id) const;

  // One entry per requested line, in ascending line order.
  std::vector<BlameEntry> blame_lines(const CommitId& revision, const std::string& file,
                                      const std::set<std::int64_t>& lines) const;

  // Newest first, at most `max_depth` entries, following renames.
  const std::vector<CommitId>& file_history(const CommitId& start, const std::string& file,
                                            std::size_t max_depth) const;

  // Number of lines of `file` at `revision`, or nullopt if absent there.
  std::optional<std::int64_t> line_count(const CommitId& revision, const std::string& file) const;

  bool is_ancestor(const CommitId& ancestor, const CommitId& descendant) const;

  // Runs git against this repository with a sanitized configuration.
  util::ProcessResult git(std::vector<std::string> args) const;

private:
  std::filesystem::path path_;
  mutable std::map<CommitId, CommitRecord> commits_;
  mutable std::map<CommitId, std::vector<FileChange>> diffs_;
  mutable std::map<std::string, std::vector<CommitId>> histories_;
  mutable std::map<std::string, std::optional<std::int64_t>> line_counts_;
};

/// Base git invocation with config isolation, shared by every git call.
std::vector<std::string> git_base_args();

} // namespace bicsearch::vcs
