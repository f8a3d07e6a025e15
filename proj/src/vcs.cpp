#include "bicsearch/vcs.hpp"
#include "bicsearch/errors.hpp"

#include <algorithm>
#include <charconv>
#include <sstream>

namespace bicsearch::vcs {

// ============================================================================
// CommitId
// ============================================================================

bool CommitId::valid(std::string_view text) {
  if (text.size() != 40) return false;
  return std::all_of(text.begin(), text.end(),
                     [](char c) { return (c >= '0' && c <= '9') || (c >= 'a' && c <= 'f'); });
}

CommitId CommitId::parse(std::string_view text) {
  if (!valid(text))
    throw Error(ErrorCode::InvalidArgument, "not a 40-hex commit id: '" + std::string(text) + "'");
  return CommitId(std::string(text));
}

// ============================================================================
// Unified diff parsing
// ============================================================================

namespace {

std::int64_t to_int(std::string_view s) {
  std::int64_t v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size())
    throw Error(ErrorCode::MalformedDocument, "bad number in hunk header: '" + std::string(s) + "'");
  return v;
}

// "-12,3" or "+7" → (start, count)
std::pair<std::int64_t, std::int64_t> parse_range(std::string_view r) {
  r.remove_prefix(1);
  auto comma = r.find(',');
  if (comma == std::string_view::npos) return {to_int(r), 1};
  return {to_int(r.substr(0, comma)), to_int(r.substr(comma + 1))};
}

std::string render_range(char sign, std::int64_t start, std::int64_t count) {
  std::string s(1, sign);
  s += std::to_string(start);
  if (count != 1) s += "," + std::to_string(count);
  return s;
}

DiffHunk parse_hunk_header(std::string_view line) {
  // @@ -a,b +c,d @@ context
  auto end = line.find(" @@", 3);
  if (!line.starts_with("@@ -") || end == std::string_view::npos)
    throw Error(ErrorCode::MalformedDocument, "bad hunk header: " + std::string(line));
  auto ranges = line.substr(3, end - 3);
  auto space = ranges.find(' ');
  if (space == std::string_view::npos)
    throw Error(ErrorCode::MalformedDocument, "bad hunk header: " + std::string(line));
  DiffHunk h;
  std::tie(h.old_start, h.old_count) = parse_range(ranges.substr(0, space));
  std::tie(h.new_start, h.new_count) = parse_range(ranges.substr(space + 1));
  auto rest = line.substr(end + 3);
  if (rest.starts_with(' ')) rest.remove_prefix(1);
  h.header_context = std::string(rest);
  return h;
}

std::optional<std::string> strip_side_prefix(std::string_view token, char side) {
  std::string p = unquote_path(token);
  if (p == "/dev/null") return std::nullopt;
  if (p.size() >= 2 && p[0] == side && p[1] == '/') return p.substr(2);
  return p;
}

// Best-effort split of "a/X b/Y" from a diff --git line.
void paths_from_git_line(std::string_view rest, std::optional<std::string>& old_p,
                         std::optional<std::string>& new_p) {
  if (rest.starts_with('"')) {
    auto close = rest.find('"', 1);
    while (close != std::string_view::npos && rest[close - 1] == '\\') close = rest.find('"', close + 1);
    if (close == std::string_view::npos) return;
    old_p = strip_side_prefix(rest.substr(0, close + 1), 'a');
    auto tail = rest.substr(close + 1);
    if (tail.starts_with(' ')) tail.remove_prefix(1);
    new_p = strip_side_prefix(tail, 'b');
    return;
  }
  // Symmetric case: "a/P b/P".
  if (rest.size() % 2 == 1) {
    auto half = rest.size() / 2;
    auto left = rest.substr(0, half), right = rest.substr(half + 1);
    if (rest[half] == ' ' && left.size() > 2 && left.substr(2) == right.substr(2)) {
      old_p = strip_side_prefix(left, 'a');
      new_p = strip_side_prefix(right, 'b');
      return;
    }
  }
  auto sep = rest.find(" b/");
  if (sep == std::string_view::npos) return;
  old_p = strip_side_prefix(rest.substr(0, sep), 'a');
  new_p = strip_side_prefix(rest.substr(sep + 1), 'b');
}

} // namespace

std::string unquote_path(std::string_view token) {
  if (token.size() < 2 || token.front() != '"' || token.back() != '"') return std::string(token);
  std::string out;
  for (std::size_t i = 1; i + 1 < token.size(); ++i) {
    char c = token[i];
    if (c != '\\' || i + 2 >= token.size()) {
      out.push_back(c);
      continue;
    }
    char n = token[++i];
    switch (n) {
    case 'n': out.push_back('\n'); break;
    case 't': out.push_back('\t'); break;
    case 'a': out.push_back('\a'); break;
    case 'b': out.push_back('\b'); break;
    case 'f': out.push_back('\f'); break;
    case 'r': out.push_back('\r'); break;
    case 'v': out.push_back('\v'); break;
    case '\\': out.push_back('\\'); break;
    case '"': out.push_back('"'); break;
    default:
      if (n >= '0' && n <= '7' && i + 2 < token.size()) {
        int v = (n - '0') * 64 + (token[i + 1] - '0') * 8 + (token[i + 2] - '0');
        out.push_back(static_cast<char>(v));
        i += 2;
      } else {
        out.push_back(n);
      }
    }
  }
  return out;
}

std::vector<FileChange> parse_unified_diff(std::string_view text) {
  std::vector<FileChange> changes;
  auto lines = util::split_lines(text);

  struct Pending {
    FileChange fc;
    std::optional<std::string> git_old, git_new;
    std::optional<std::string> minus, plus;
    std::optional<std::string> rename_from, rename_to;
    bool saw_minus = false, saw_plus = false;
    bool created = false, deleted = false;
  };
  std::optional<Pending> cur;

  auto finish = [&] {
    if (!cur) return;
    auto& p = *cur;
    if (p.saw_minus) p.fc.old_path = p.minus;
    else if (p.rename_from) p.fc.old_path = p.rename_from;
    else p.fc.old_path = p.git_old;
    if (p.saw_plus) p.fc.new_path = p.plus;
    else if (p.rename_to) p.fc.new_path = p.rename_to;
    else p.fc.new_path = p.git_new;
    if (p.created) p.fc.old_path.reset();
    if (p.deleted) p.fc.new_path.reset();
    if (!p.fc.old_path && !p.fc.new_path)
      throw Error(ErrorCode::MalformedDocument, "file change without any path");
    changes.push_back(std::move(p.fc));
    cur.reset();
  };

  std::size_t i = 0;
  while (i < lines.size()) {
    const std::string& line = lines[i];
    if (line.starts_with("diff --git ")) {
      finish();
      cur.emplace();
      cur->fc.header_lines.push_back(line);
      paths_from_git_line(std::string_view(line).substr(11), cur->git_old, cur->git_new);
      ++i;
      continue;
    }
    if (!cur) {
      // Anything before the first file header (e.g. a commit id line) is ignored.
      ++i;
      continue;
    }
    auto& p = *cur;
    if (line.starts_with("@@ ")) {
      DiffHunk h = parse_hunk_header(line);
      std::int64_t old_left = h.old_count, new_left = h.new_count;
      std::int64_t old_no = h.old_start, new_no = h.new_start;
      ++i;
      while (i < lines.size() && (old_left > 0 || new_left > 0 || lines[i].starts_with('\\'))) {
        const std::string& b = lines[i];
        if (b.starts_with('\\')) {
          if (!h.body.empty()) h.body.back().no_newline = true;
          ++i;
          continue;
        }
        char tag = b.empty() ? ' ' : b[0];
        std::string body_text = b.empty() ? std::string() : b.substr(1);
        if (tag == ' ') {
          h.body.push_back({LineKind::Context, body_text, false});
          ++old_no, ++new_no, --old_left, --new_left;
        } else if (tag == '-') {
          h.deleted_lines.push_back({old_no, body_text});
          h.body.push_back({LineKind::Deleted, std::move(body_text), false});
          ++old_no, --old_left;
        } else if (tag == '+') {
          h.added_lines.push_back({new_no, body_text});
          h.body.push_back({LineKind::Added, std::move(body_text), false});
          ++new_no, --new_left;
        } else {
          throw Error(ErrorCode::MalformedDocument, "unexpected hunk line: " + b);
        }
        ++i;
      }
      if (old_left < 0 || new_left < 0 || old_left > 0 || new_left > 0)
        throw Error(ErrorCode::MalformedDocument, "hunk line counts do not match header");
      p.fc.hunks.push_back(std::move(h));
      continue;
    }
    if (!p.fc.hunks.empty())
      throw Error(ErrorCode::MalformedDocument, "unexpected line after hunk: " + line);

    p.fc.header_lines.push_back(line);
    std::string_view v(line);
    if (v.starts_with("new file mode")) p.created = true;
    else if (v.starts_with("deleted file mode")) p.deleted = true;
    else if (v.starts_with("rename from ")) p.rename_from = unquote_path(v.substr(12));
    else if (v.starts_with("rename to ")) p.rename_to = unquote_path(v.substr(10));
    else if (v.starts_with("--- ")) p.saw_minus = true, p.minus = strip_side_prefix(v.substr(4), 'a');
    else if (v.starts_with("+++ ")) p.saw_plus = true, p.plus = strip_side_prefix(v.substr(4), 'b');
    else if (v.starts_with("Binary files ") || v == "GIT binary patch") p.fc.binary = true;
    ++i;
  }
  finish();
  return changes;
}

std::string render_diff(const std::vector<FileChange>& changes) {
  std::string out;
  for (const auto& fc : changes) {
    for (const auto& h : fc.header_lines) out += h + "\n";
    for (const auto& h : fc.hunks) {
      out += "@@ " + render_range('-', h.old_start, h.old_count) + " " +
             render_range('+', h.new_start, h.new_count) + " @@";
      if (!h.header_context.empty()) out += " " + h.header_context;
      out += "\n";
      for (const auto& l : h.body) {
        out.push_back(l.kind == LineKind::Context ? ' ' : l.kind == LineKind::Deleted ? '-' : '+');
        out += l.text;
        out += "\n";
        if (l.no_newline) out += "\\ No newline at end of file\n";
      }
    }
  }
  return out;
}

// ============================================================================
// Repository
// ============================================================================

std::vector<std::string> git_base_args() {
  return {"git", "-c", "core.quotepath=false", "-c", "safe.directory=*", "-c", "log.showSignature=false",
          "-c", "color.ui=false"};
}

namespace {

const std::vector<std::string>& git_env() {
  static const std::vector<std::string> env = {
      "GIT_CONFIG_NOSYSTEM=1", "GIT_CONFIG_GLOBAL=/dev/null", "GIT_OPTIONAL_LOCKS=0",
      "GIT_TERMINAL_PROMPT=0", "LC_ALL=C", "GIT_PAGER=cat"};
  return env;
}

std::int64_t parse_ident_time(std::string_view ident_line) {
  // "author Name <mail> 1700000000 +0000"
  auto gt = ident_line.rfind('>');
  if (gt == std::string_view::npos) return 0;
  std::istringstream ss{std::string(ident_line.substr(gt + 1))};
  std::int64_t t = 0;
  ss >> t;
  return t;
}

} // namespace

util::ProcessResult Repository::git(std::vector<std::string> args) const {
  auto argv = git_base_args();
  argv.insert(argv.begin() + 1, {"-C", path_.string()});
  argv.insert(argv.end(), std::make_move_iterator(args.begin()), std::make_move_iterator(args.end()));
  return util::run_process(argv, {}, {}, git_env());
}

Repository::Repository(std::filesystem::path path) : path_(std::move(path)) {
  std::error_code ec;
  if (!std::filesystem::is_directory(path_, ec))
    throw Error(ErrorCode::RepoAccess, "not a directory: " + path_.string());
  auto r = git({"rev-parse", "--git-dir"});
  if (r.exit_code != 0)
    throw Error(ErrorCode::RepoAccess, "not a git repository: " + path_.string() + ": " + util::trim(r.err));
}

CommitId Repository::resolve(std::string_view rev) const {
  if (rev.empty() || rev.starts_with('-'))
    throw Error(ErrorCode::UnknownCommit, "cannot resolve '" + std::string(rev) + "'");
  auto r = git({"rev-parse", "--verify", "--quiet", std::string(rev) + "^{commit}"});
  auto out = util::trim(r.out);
  if (r.exit_code != 0 || !CommitId::valid(out))
    throw Error(ErrorCode::UnknownCommit, "cannot resolve '" + std::string(rev) + "'");
  return CommitId::parse(out);
}

bool Repository::exists(const CommitId& id) const {
  if (commits_.count(id)) return true;
  auto r = git({"cat-file", "-e", id.str() + "^{commit}"});
  return r.exit_code == 0;
}

const CommitRecord& Repository::read_commit(const CommitId& id) const {
  if (auto it = commits_.find(id); it != commits_.end()) return it->second;
  auto r = git({"cat-file", "commit", id.str()});
  if (r.exit_code != 0) throw Error(ErrorCode::UnknownCommit, id.str());

  CommitRecord rec{id, 0, 0, {}, {}};
  std::string_view raw(r.out);
  auto sep = raw.find("\n\n");
  std::string_view headers = raw.substr(0, sep);
  rec.message_raw = sep == std::string_view::npos ? std::string() : std::string(raw.substr(sep + 2));
  for (const auto& h : util::split_lines(headers)) {
    std::string_view v(h);
    if (v.starts_with("parent ")) rec.parents.push_back(CommitId::parse(v.substr(7, 40)));
    else if (v.starts_with("author ")) rec.author_time = parse_ident_time(v);
    else if (v.starts_with("committer ")) rec.commit_time = parse_ident_time(v);
  }
  return commits_.emplace(id, std::move(rec)).first->second;
}

const std::vector<FileChange>& Repository::compute_diff(const CommitId& id) const {
  if (auto it = diffs_.find(id); it != diffs_.end()) return it->second;
  const auto& rec = read_commit(id);
  std::vector<std::string> args = {"diff-tree", "-r",          "-p",          "-M",
                                   "--no-commit-id", "--no-color", "--no-ext-diff", "--no-textconv",
                                   "--src-prefix=a/", "--dst-prefix=b/"};
  if (rec.is_root()) {
    args.push_back("--root");
    args.push_back(id.str());
  } else {
    args.push_back(rec.parents.front().str());
    args.push_back(id.str());
  }
  auto r = git(std::move(args));
  if (r.exit_code != 0) throw Error(ErrorCode::RepoAccess, "diff-tree failed: " + util::trim(r.err));
  return diffs_.emplace(id, parse_unified_diff(r.out)).first->second;
}

std::optional<std::int64_t> Repository::line_count(const CommitId& revision, const std::string& file) const {
  std::string key = revision.str() + ":" + file;
  if (auto it = line_counts_.find(key); it != line_counts_.end()) return it->second;
  auto r = git({"cat-file", "blob", key});
  std::optional<std::int64_t> n;
  if (r.exit_code == 0) {
    std::int64_t c = std::count(r.out.begin(), r.out.end(), '\n');
    if (!r.out.empty() && r.out.back() != '\n') ++c;
    n = c;
  }
  return line_counts_.emplace(key, n).first->second;
}

std::vector<BlameEntry> Repository::blame_lines(const CommitId& revision, const std::string& file,
                                                const std::set<std::int64_t>& lines) const {
  auto count = line_count(revision, file);
  if (!count) throw Error(ErrorCode::FileAbsentAtRevision, file + " at " + revision.str());
  if (lines.empty()) return {};
  if (*lines.begin() < 1 || *lines.rbegin() > *count)
    throw Error(ErrorCode::LineOutOfRange, file + " has " + std::to_string(*count) + " lines at " +
                                               revision.abbrev());

  std::vector<std::string> args = {"blame", "--line-porcelain"};
  auto it = lines.begin();
  while (it != lines.end()) {
    std::int64_t lo = *it, hi = *it;
    for (++it; it != lines.end() && *it == hi + 1; ++it) hi = *it;
    args.push_back("-L");
    args.push_back(std::to_string(lo) + "," + std::to_string(hi));
  }
  args.push_back(revision.str());
  args.push_back("--");
  args.push_back(file);
  auto r = git(std::move(args));
  if (r.exit_code != 0) throw Error(ErrorCode::RepoAccess, "blame failed: " + util::trim(r.err));

  std::vector<BlameEntry> entries;
  std::string sha, origin_path;
  std::int64_t final_line = 0;
  for (const auto& l : util::split_lines(r.out)) {
    if (l.starts_with('\t')) {
      if (lines.count(final_line))
        entries.push_back({file, final_line, CommitId::parse(sha), origin_path.empty() ? file : origin_path});
      continue;
    }
    std::string_view v(l);
    if (v.starts_with("filename ")) {
      origin_path = unquote_path(v.substr(9));
      continue;
    }
    auto sp = v.find(' ');
    if (sp == 40 && CommitId::valid(v.substr(0, 40))) {
      std::istringstream ss{std::string(v.substr(41))};
      std::int64_t orig = 0;
      ss >> orig >> final_line;
      sha = std::string(v.substr(0, 40));
      origin_path.clear();
    }
  }
  std::sort(entries.begin(), entries.end(), [](auto& a, auto& b) { return a.line < b.line; });
  if (entries.size() != lines.size())
    throw Error(ErrorCode::Internal, "blame returned " + std::to_string(entries.size()) + " entries for " +
                                         std::to_string(lines.size()) + " lines");
  return entries;
}

const std::vector<CommitId>& Repository::file_history(const CommitId& start, const std::string& file,
                                                      std::size_t max_depth) const {
  std::string key = start.str() + "\n" + std::to_string(max_depth) + "\n" + file;
  if (auto it = histories_.find(key); it != histories_.end()) return it->second;
  read_commit(start);
  std::vector<CommitId> out;
  if (max_depth > 0) {
    auto r = git({"log", "--follow", "--format=%H", "-n", std::to_string(max_depth), start.str(), "--", file});
    if (r.exit_code != 0) throw Error(ErrorCode::RepoAccess, "log failed: " + util::trim(r.err));
    for (const auto& l : util::split_lines(r.out))
      if (CommitId::valid(l)) out.push_back(CommitId::parse(l));
  }
  return histories_.emplace(key, std::move(out)).first->second;
}

bool Repository::is_ancestor(const CommitId& ancestor, const CommitId& descendant) const {
  auto r = git({"merge-base", "--is-ancestor", ancestor.str(), descendant.str()});
  if (r.exit_code > 1) throw Error(ErrorCode::RepoAccess, "merge-base failed: " + util::trim(r.err));
  return r.exit_code == 0;
}

} // namespace bicsearch::vcs
