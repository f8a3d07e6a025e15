#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "bicsearch/vcs.hpp"

namespace bicsearch::eval {

/// One bug-fixing commit with its developer-annotated inducing commits.
struct EvalCase {
  std::string repo_ref; // local path or clone URL
  vcs::CommitId bfc;
  std::vector<vcs::CommitId> ground_truth; // nonempty
  std::string dataset_tag;
  std::string language_tag;
  std::size_t line_no = 0; // 1-based line in the dataset file

  std::string key() const { return repo_ref + "@" + bfc.str(); }
};

struct DatasetLoad {
  std::vector<EvalCase> cases;
  std::vector<std::string> errors; // "line N: reason", one per rejected line
};

// One JSON object per line: {"repo", "bfc", "bics": [...], "dataset", "language"}.
// Blank lines and lines starting with '#' are skipped; bad lines are reported
// and skipped without aborting the load.
DatasetLoad parse_dataset(std::string_view text);
DatasetLoad load_dataset(const std::filesystem::path& path);

bool is_remote_ref(std::string_view repo_ref);

// "https://github.com/owner/name.git" -> "owner__name"
std::string repo_dir_name(std::string_view repo_ref);

// Local directory holding the repository of `repo_ref`. Relative local
// paths are taken against `base_dir`; remote refs map into `repos_dir`.
std::filesystem::path resolve_repo(const std::string& repo_ref, const std::filesystem::path& repos_dir,
                                   const std::filesystem::path& base_dir = {});

struct FetchResult {
  std::string repo_ref;
  std::filesystem::path dir;
  std::string action; // "cloned", "updated", "local" or "failed"
  std::string error;
};

// Clones (bare) every distinct remote repository of `cases` into `repos_dir`,
// or fetches into an existing clone. Local refs are only checked for presence.
std::vector<FetchResult> fetch_repos(const std::vector<EvalCase>& cases, const std::filesystem::path& repos_dir,
                                     const std::filesystem::path& base_dir = {});

} // namespace bicsearch::eval
