#include "bicsearch/categorizer.hpp"

#include "bicsearch/blame.hpp"
#include "bicsearch/errors.hpp"
#include "bicsearch/traversal.hpp"
#include "bicsearch/util.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <set>
#include <sstream>

namespace bicsearch::categorize {

using vcs::CommitId;

std::string_view to_string(Kind k) {
  switch (k) {
  case Kind::Blame: return "Blame";
  case Kind::BlameAncestor: return "BlameAncestor";
  case Kind::BfcAncestor: return "BfcAncestor";
  case Kind::Blameless: return "Blameless";
  case Kind::Unreachable: return "Unreachable";
  }
  return "Unreachable";
}

std::optional<Kind> kind_from_string(std::string_view s) {
  for (auto k : kAllKinds)
    if (to_string(k) == s) return k;
  return std::nullopt;
}

namespace {

struct Location {
  Kind kind = Kind::Unreachable;
  std::optional<std::int64_t> depth;
};

Location locate(const vcs::Repository& repo, const CommitId& bfc, const CommitId& bic,
                const blame::BlameSet& bs, std::size_t max_depth) {
  if (bs.per_origin_counts.count(bic)) return {Kind::Blame, std::nullopt};

  std::optional<std::size_t> best;
  for (const auto& src : traversal::blame_ancestor_sources(repo, bfc, bs)) {
    for (const auto& step : traversal::walk(repo, src, max_depth)) {
      if (step.commit == bic) {
        if (!best || step.depth < *best) best = step.depth;
        break;
      }
    }
  }
  if (best) return {Kind::BlameAncestor, static_cast<std::int64_t>(*best)};

  // Backward from the fix, strictly between the fix and the first blame
  // commit met on that file's history.
  for (const auto& src : traversal::bfc_ancestor_sources(repo, bfc)) {
    for (const auto& step : traversal::walk(repo, src, max_depth)) {
      if (bs.per_origin_counts.count(step.commit)) break;
      if (step.commit == bic) {
        if (!best || step.depth < *best) best = step.depth;
        break;
      }
    }
  }
  if (best) return {Kind::BfcAncestor, static_cast<std::int64_t>(*best)};
  return {Kind::Unreachable, std::nullopt};
}

} // namespace

BicCategory categorize(const vcs::Repository& repo, const CommitId& bfc, const CommitId& bic,
                       std::size_t max_depth) {
  const auto& fix = repo.read_commit(bfc);
  const auto& cand = repo.read_commit(bic);
  if (cand.commit_time > fix.commit_time)
    throw Error(ErrorCode::TemporalViolation, bic.abbrev() + " is newer than fix " + bfc.abbrev());

  BicCategory out;
  if (blame::is_blameless(repo.compute_diff(bfc))) {
    out.kind = Kind::Blameless;
    auto sub = locate(repo, bfc, bic, blame::fallback_context_blame(repo, bfc), max_depth);
    out.fallback_kind = sub.kind;
    out.fallback_depth = sub.depth;
    return out;
  }
  auto loc = locate(repo, bfc, bic, blame::blame_deleted_lines(repo, bfc), max_depth);
  out.kind = loc.kind;
  out.depth = loc.depth;
  return out;
}

// ============================================================================
// Report
// ============================================================================

double DistributionRow::percent(Kind k) const {
  if (bics == 0) return 0.0;
  auto it = counts.find(k);
  return 100.0 * static_cast<double>(it == counts.end() ? 0 : it->second) / static_cast<double>(bics);
}

namespace {

DepthSummary summarize(std::vector<std::int64_t> depths, std::size_t max_depth) {
  DepthSummary s;
  s.n = static_cast<std::int64_t>(depths.size());
  s.coverage.assign(max_depth, 0.0);
  if (depths.empty()) return s;
  std::sort(depths.begin(), depths.end());
  auto rank = [&](double p) {
    auto idx = static_cast<std::size_t>(std::ceil(p * static_cast<double>(depths.size())));
    return depths[std::max<std::size_t>(idx, 1) - 1];
  };
  s.p50 = rank(0.5);
  s.p80 = rank(0.8);
  s.max = depths.back();
  std::size_t j = 0;
  for (std::size_t d = 1; d <= max_depth; ++d) {
    while (j < depths.size() && depths[j] <= static_cast<std::int64_t>(d)) ++j;
    s.coverage[d - 1] = static_cast<double>(j) / static_cast<double>(depths.size());
  }
  return s;
}

} // namespace

CategoryReport tabulate(std::vector<PairRecord> records, std::size_t max_depth) {
  CategoryReport rep;
  rep.max_depth = max_depth;
  std::map<std::string, std::set<std::string>> cases;
  std::vector<std::int64_t> ba, fa;
  for (const auto& r : records) {
    for (const std::string& key : {r.dataset, std::string("Total")}) {
      auto& row = rep.by_dataset[key];
      cases[key].insert(r.repo + "@" + r.bfc.str());
      if (!r.category) {
        ++row.errors;
        continue;
      }
      ++row.bics;
      ++row.counts[r.category->kind];
    }
    if (r.category && r.category->depth) {
      if (r.category->kind == Kind::BlameAncestor) ba.push_back(*r.category->depth);
      if (r.category->kind == Kind::BfcAncestor) fa.push_back(*r.category->depth);
    }
  }
  for (auto& [k, row] : rep.by_dataset) row.cases = static_cast<std::int64_t>(cases[k].size());
  rep.blame_ancestor_depths = summarize(std::move(ba), max_depth);
  rep.bfc_ancestor_depths = summarize(std::move(fa), max_depth);
  rep.records = std::move(records);
  return rep;
}

CategoryReport category_report(const std::vector<eval::EvalCase>& cases, const ReportOptions& opts) {
  std::vector<std::vector<PairRecord>> per_case(cases.size());
  util::parallel_for(cases.size(), opts.workers, [&](std::size_t i) {
    const auto& c = cases[i];
    auto& out = per_case[i];
    std::optional<vcs::Repository> repo;
    std::string repo_error;
    try {
      repo.emplace(eval::resolve_repo(c.repo_ref, opts.repos_dir, opts.base_dir));
    } catch (const Error& e) {
      repo_error = e.what();
    }
    for (const auto& bic : c.ground_truth) {
      PairRecord rec{c.dataset_tag, c.repo_ref, c.bfc, bic, std::nullopt, repo_error};
      if (repo) {
        try {
          rec.category = categorize(*repo, c.bfc, bic, opts.max_depth);
        } catch (const Error& e) {
          rec.error = e.what();
        }
      }
      out.push_back(std::move(rec));
    }
  });
  std::vector<PairRecord> flat;
  for (auto& v : per_case)
    for (auto& r : v) flat.push_back(std::move(r));
  return tabulate(std::move(flat), opts.max_depth);
}

std::string render_report_table(const CategoryReport& report) {
  std::ostringstream os;
  char buf[64];
  auto cell = [&](const DistributionRow& row, Kind k) {
    auto it = row.counts.find(k);
    std::snprintf(buf, sizeof buf, "%lld (%.1f%%)", static_cast<long long>(it == row.counts.end() ? 0 : it->second),
                  row.percent(k));
    return std::string(buf);
  };
  std::snprintf(buf, sizeof buf, "%-16s %6s %6s", "Dataset", "Cases", "BICs");
  os << buf;
  for (auto k : kAllKinds) {
    std::snprintf(buf, sizeof buf, " %16s", std::string(to_string(k)).c_str());
    os << buf;
  }
  os << " " << "Errors" << "\n";
  auto emit = [&](const std::string& name, const DistributionRow& row) {
    std::snprintf(buf, sizeof buf, "%-16s %6lld %6lld", name.c_str(), static_cast<long long>(row.cases),
                  static_cast<long long>(row.bics));
    os << buf;
    for (auto k : kAllKinds) {
      std::snprintf(buf, sizeof buf, " %16s", cell(row, k).c_str());
      os << buf;
    }
    os << " " << row.errors << "\n";
  };
  for (const auto& [name, row] : report.by_dataset)
    if (name != "Total") emit(name, row);
  if (auto it = report.by_dataset.find("Total"); it != report.by_dataset.end()) emit("Total", it->second);

  auto depth_line = [&](const char* label, const DepthSummary& s) {
    os << label << ": n=" << s.n;
    if (s.p50) os << " p50=" << *s.p50 << " p80=" << *s.p80 << " max=" << *s.max;
    os << "\n";
  };
  depth_line("BlameAncestor depth", report.blame_ancestor_depths);
  depth_line("BfcAncestor depth", report.bfc_ancestor_depths);
  return os.str();
}

} // namespace bicsearch::categorize
