#include "fixture_repo.hpp"

#include "bicsearch/errors.hpp"
#include "bicsearch/util.hpp"

#include <stdexcept>

#include <unistd.h>

namespace fixture {

namespace bu = bicsearch::util;

std::string lines(const std::vector<std::string>& ls) {
  std::string s;
  for (const auto& l : ls) s += l + "\n";
  return s;
}

namespace {

const std::vector<std::string> kEnv = {"GIT_CONFIG_NOSYSTEM=1", "GIT_CONFIG_GLOBAL=/dev/null", "LC_ALL=C"};

void must(const bu::ProcessResult& r, const std::string& what) {
  if (r.exit_code != 0) throw std::runtime_error(what + " failed: " + r.err);
}

} // namespace

Repo::Repo() {
  std::string tmpl = (std::filesystem::temp_directory_path() / "bicsearch-fixture-XXXXXX").string();
  if (!::mkdtemp(tmpl.data())) throw std::runtime_error("mkdtemp failed");
  dir_ = tmpl;
  must(bu::run_process({"git", "init", "-q", dir_.string()}, {}, {}, kEnv), "git init");
  must(bu::run_process({"git", "-C", dir_.string(), "symbolic-ref", "HEAD", "refs/heads/main"}, {}, {}, kEnv),
       "symbolic-ref");
}

Repo::Repo(Repo&& o) noexcept
    : dir_(std::move(o.dir_)), stream_(std::move(o.stream_)), next_mark_(o.next_mark_),
      ids_(std::move(o.ids_)), finished_(o.finished_) {
  o.dir_.clear();
}

Repo::~Repo() {
  if (dir_.empty()) return;
  std::error_code ec;
  std::filesystem::remove_all(dir_, ec);
}

int Repo::commit(std::vector<int> parents, std::vector<Op> ops, std::string message, std::int64_t time,
                 std::string branch) {
  int mark = next_mark_++;
  std::string ref = "refs/heads/" + branch;
  auto& s = stream_;
  if (parents.empty()) s += "reset " + ref + "\n\n";
  s += "commit " + ref + "\n";
  s += "mark :" + std::to_string(mark) + "\n";
  s += "author Fixture <fixture@example.com> " + std::to_string(time) + " +0000\n";
  s += "committer Fixture <fixture@example.com> " + std::to_string(time) + " +0000\n";
  s += "data " + std::to_string(message.size()) + "\n" + message + "\n";
  for (std::size_t i = 0; i < parents.size(); ++i)
    s += (i == 0 ? "from :" : "merge :") + std::to_string(parents[i]) + "\n";
  for (const auto& op : ops) {
    switch (op.kind) {
    case Op::Kind::Write:
      s += "M 100644 inline " + op.path + "\ndata " + std::to_string(op.arg.size()) + "\n" + op.arg + "\n";
      break;
    case Op::Kind::Delete:
      s += "D " + op.path + "\n";
      break;
    case Op::Kind::Rename:
      s += "R " + op.path + " " + op.arg + "\n";
      break;
    }
  }
  s += "\n";
  return mark;
}

void Repo::finish() {
  if (finished_) return;
  auto marks = dir_ / ".git" / "fixture-marks";
  must(bu::run_process({"git", "-C", dir_.string(), "fast-import", "--quiet", "--export-marks=" + marks.string()},
                       {}, stream_ + "done\n", kEnv),
       "fast-import");
  for (const auto& l : bu::split_lines(bu::read_file(marks))) {
    auto sp = l.find(' ');
    if (l.empty() || l[0] != ':' || sp == std::string::npos) continue;
    ids_.emplace(std::stoi(l.substr(1, sp - 1)), bicsearch::vcs::CommitId::parse(l.substr(sp + 1)));
  }
  finished_ = true;
}

bicsearch::vcs::CommitId Repo::id(int mark) const {
  auto it = ids_.find(mark);
  if (it == ids_.end()) throw std::runtime_error("unknown fixture mark " + std::to_string(mark));
  return it->second;
}

TempDir::TempDir() {
  std::string tmpl = (std::filesystem::temp_directory_path() / "bicsearch-scratch-XXXXXX").string();
  if (!::mkdtemp(tmpl.data())) throw std::runtime_error("mkdtemp failed");
  dir_ = tmpl;
}

TempDir::~TempDir() {
  std::error_code ec;
  std::filesystem::remove_all(dir_, ec);
}

} // namespace fixture
