#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "bicsearch/dataset.hpp"
#include "bicsearch/vcs.hpp"

namespace bicsearch::categorize {

enum class Kind { Blame, BlameAncestor, BfcAncestor, Blameless, Unreachable };
inline constexpr std::array<Kind, 5> kAllKinds = {Kind::Blame, Kind::BlameAncestor, Kind::BfcAncestor,
                                                  Kind::Blameless, Kind::Unreachable};

std::string_view to_string(Kind k);
std::optional<Kind> kind_from_string(std::string_view s);

struct BicCategory {
  Kind kind = Kind::Unreachable;
  std::optional<std::int64_t> depth; // BlameAncestor / BfcAncestor only
  // For Blameless fixes: where the inducing commit sits relative to the
  // context-line (fallback) blame set. Informational only.
  std::optional<Kind> fallback_kind;
  std::optional<std::int64_t> fallback_depth;

  bool operator==(const BicCategory&) const = default;
};

/// Classifies `bic` relative to the blame results of `bfc`. Ancestor
/// traversal is bounded by `max_depth`; anything beyond is Unreachable.
BicCategory categorize(const vcs::Repository& repo, const vcs::CommitId& bfc, const vcs::CommitId& bic,
                       std::size_t max_depth = 100);

// ----------------------------------------------------------------------------
// Distribution report
// ----------------------------------------------------------------------------

struct PairRecord {
  std::string dataset;
  std::string repo;
  vcs::CommitId bfc;
  vcs::CommitId bic;
  std::optional<BicCategory> category; // absent when categorization failed
  std::string error;
};

struct DistributionRow {
  std::int64_t cases = 0;
  std::int64_t bics = 0; // categorized pairs
  std::map<Kind, std::int64_t> counts;
  std::int64_t errors = 0;

  double percent(Kind k) const;
};

struct DepthSummary {
  std::int64_t n = 0;
  std::optional<std::int64_t> p50, p80, max;
  // coverage[d-1] = share of the category reached within depth d.
  std::vector<double> coverage;
};

struct CategoryReport {
  std::size_t max_depth = 100;
  std::vector<PairRecord> records;
  std::map<std::string, DistributionRow> by_dataset; // plus a "Total" row
  DepthSummary blame_ancestor_depths;
  DepthSummary bfc_ancestor_depths;
};

// Pure aggregation over already-categorized pairs.
CategoryReport tabulate(std::vector<PairRecord> records, std::size_t max_depth);

struct ReportOptions {
  std::filesystem::path repos_dir;
  std::filesystem::path base_dir;
  std::size_t max_depth = 100;
  std::size_t workers = 1;
};

// Categorizes every (bfc, bic) pair of every case. Per-pair failures are
// recorded on the pair, never thrown.
CategoryReport category_report(const std::vector<eval::EvalCase>& cases, const ReportOptions& opts);

std::string render_report_table(const CategoryReport& report);

} // namespace bicsearch::categorize
