#pragma once

#include <optional>
#include <string>

#include "bicsearch/categorizer.hpp"
#include "fixture_repo.hpp"

namespace fixture {

// A finished repository holding one fix and one inducing commit whose
// category is known by construction.
struct Scenario {
  std::string name;
  Repo repo;
  int bfc = 0;
  int bic = 0;
  bicsearch::categorize::Kind kind;
  std::optional<std::int64_t> depth;
};

// The inducing commit is blamed directly by the fix's deleted line.
Scenario blame_scenario();
// C1 introduces the bug, C2 reformats the same line, C3 fixes it.
Scenario blame_ancestor_scenario();
// C1 creates the file, C2 introduces the bug elsewhere, C3 touches a C1 line.
Scenario bfc_ancestor_scenario();
// The fix only adds lines.
Scenario blameless_scenario();
// The inducing commit sits on a merged side branch and only edits another file.
Scenario unreachable_scenario();

// Introduction followed by `reformats` edits of the same line, then a fix.
// The inducing commit is at depth `reformats` behind the blame commit.
Scenario deep_ancestor_scenario(int reformats);

} // namespace fixture

namespace fixture {

// Randomized multi-file C history with function-shaped files, occasional
// merged side branches and repeated timestamps. `mainline` lists the marks
// reachable by first parent, oldest first.
struct RandomHistory {
  Repo repo;
  std::vector<int> mainline;
};

RandomHistory random_history(std::uint64_t seed, int commits);

} // namespace fixture
