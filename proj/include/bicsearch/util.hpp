#pragma once

#include <filesystem>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

namespace bicsearch::util {

struct ProcessResult {
  int exit_code = -1;
  std::string out;
  std::string err;
};

// Runs argv[0] from PATH with the given arguments, capturing both streams.
// Never goes through a shell. `stdin_data` is written to the child's stdin;
// `env_overrides` entries ("KEY=value") replace same-named variables.
ProcessResult run_process(const std::vector<std::string>& argv,
                          const std::filesystem::path& cwd = {},
                          std::string_view stdin_data = {},
                          const std::vector<std::string>& env_overrides = {});

std::string sha256_hex(std::string_view data);

std::vector<std::string> split_lines(std::string_view text);

std::string trim(std::string_view s);

// Collapses every run of whitespace to one space and trims both ends.
std::string normalize_whitespace(std::string_view s);

std::string read_file(const std::filesystem::path& path);

// Writes through a sibling temp file and renames, so readers never observe a
// partially written file.
void write_file_atomic(const std::filesystem::path& path, std::string_view content);

bool is_hex(std::string_view s);

// Calls fn(i) for every i in [0, n) on up to `workers` threads. Exceptions
// escaping fn are rethrown (first one wins) after all workers stop.
void parallel_for(std::size_t n, std::size_t workers, const std::function<void(std::size_t)>& fn);

} // namespace bicsearch::util
