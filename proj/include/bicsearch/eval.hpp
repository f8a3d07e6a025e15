#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "bicsearch/agent.hpp"
#include "bicsearch/categorizer.hpp"
#include "bicsearch/dataset.hpp"
#include "bicsearch/tkg.hpp"

namespace bicsearch::eval {

using CommitSet = std::set<vcs::CommitId>;

// ----------------------------------------------------------------------------
// Metrics
// ----------------------------------------------------------------------------

/// Categories of the true-positive breakdown, in assignment priority order.
enum class TpCategory { Blame, Ancestor, Blameless, Other };
inline constexpr std::array<TpCategory, 4> kTpCategories = {TpCategory::Blame, TpCategory::Ancestor,
                                                            TpCategory::Blameless, TpCategory::Other};
std::string_view to_string(TpCategory c);

struct MetricsReport {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::int64_t true_positives = 0; // sum of |P ∩ G|
  std::int64_t predicted = 0;      // sum of |P|
  std::int64_t ground_truth = 0;   // sum of |G|
  std::map<std::string, bool> correct; // case key -> P ∩ G nonempty
  std::map<std::string, std::int64_t> hits; // case key -> |P ∩ G|
  std::map<TpCategory, std::int64_t> tp_by_category; // filled by breakdown_by_category

  bool operator==(const MetricsReport&) const = default;
};

/// Micro-averaged precision, recall and F1 over all cases. Throws KeyMismatch
/// unless both maps cover the same cases.
MetricsReport score(const std::map<std::string, CommitSet>& predictions,
                    const std::map<std::string, CommitSet>& truth);

struct PairedTest {
  std::int64_t a_only = 0; // cases only the first run got right
  std::int64_t b_only = 0;
  double p_value = 1.0;
  bool exact = true;
  bool no_discordant_pairs = false;
  double cohens_g = 0.0;

  std::string_view effect() const; // "negligible", "small", "medium", "large"
};

inline constexpr double kMediumEffect = 0.15;
inline constexpr double kLargeEffect = 0.25;
// Above this many discordant pairs the chi-square approximation is used.
inline constexpr std::int64_t kExactMcNemarLimit = 1000;

/// Two-sided McNemar p-value on the discordant counts.
double mcnemar_p(std::int64_t a_only, std::int64_t b_only, bool* exact = nullptr);
double cohens_g(std::int64_t a_only, std::int64_t b_only);

/// McNemar and Cohen's g over paired correctness bits.
PairedTest mcnemar(const std::vector<bool>& a, const std::vector<bool>& b);
// Pairs the two reports by case key; throws KeyMismatch on differing cases.
PairedTest mcnemar(const MetricsReport& a, const MetricsReport& b);

// One category per case, by the priority Blame > Ancestor > Blameless, from
// the categories of its ground-truth members.
TpCategory case_category(const std::vector<categorize::BicCategory>& members);

/// Tallies each case's |P ∩ G| under its category. Cases absent from
/// `categories` count as Other.
std::map<TpCategory, std::int64_t>
breakdown_by_category(const MetricsReport& report,
                      const std::map<std::string, std::vector<categorize::BicCategory>>& categories);

// Ground-truth categories per case key, from a categorizer report.
std::map<std::string, std::vector<categorize::BicCategory>> categories_by_case(const categorize::CategoryReport& r);

// ----------------------------------------------------------------------------
// Pipelines
// ----------------------------------------------------------------------------

enum class Ablation { BlameOnly, BlameFallback, TkgOnly, AgentOnly, FullPipeline };
inline constexpr std::array<Ablation, 5> kAllAblations = {Ablation::BlameOnly, Ablation::BlameFallback,
                                                          Ablation::TkgOnly, Ablation::AgentOnly,
                                                          Ablation::FullPipeline};
std::string_view to_string(Ablation a);
std::optional<Ablation> ablation_from_string(std::string_view s);

enum class PolicyKind { Deterministic, Replay, Llm };
std::string_view to_string(PolicyKind k);
std::optional<PolicyKind> policy_kind_from_string(std::string_view s);

struct RunConfig {
  tkg::TkgConfig tkg;
  agent::Budget budget;
  PolicyKind policy = PolicyKind::Deterministic;
  std::filesystem::path cassette; // Replay: read from; Llm: recorded to when set
  std::size_t workers = 1;
  std::filesystem::path repos_dir = "repos";
  std::filesystem::path base_dir; // relative local repo paths resolve against this
  std::filesystem::path cache_dir; // empty disables the results cache

  void validate() const;
  // Fields that influence results; paths and worker counts are excluded.
  nlohmann::json to_json() const;
  std::string digest() const;
};

// Owns the backend chain behind a policy built from a RunConfig.
class PolicyBundle {
public:
  explicit PolicyBundle(const RunConfig& cfg);
  ~PolicyBundle();
  PolicyBundle(const PolicyBundle&) = delete;
  PolicyBundle& operator=(const PolicyBundle&) = delete;

  agent::Policy& policy() { return *policy_; }
  // Writes the recorded cassette when recording; no-op otherwise.
  void finish();

private:
  std::unique_ptr<llm::Cassette> cassette_;
  std::unique_ptr<llm::ChatBackend> backend_;
  std::unique_ptr<llm::ChatBackend> recorder_;
  std::unique_ptr<agent::Policy> policy_;
  std::filesystem::path record_to_;
};

struct IdentifyResult {
  tkg::BuildResult build;
  agent::CandidateList candidates;
  agent::Decision decision;
};

/// Blame, candidate collection, graph build and search for one fix.
IdentifyResult identify(const vcs::Repository& repo, const vcs::CommitId& bfc, const RunConfig& cfg,
                        agent::Policy& policy);

struct CaseResult {
  std::string key;
  std::optional<vcs::CommitId> predicted;
  bool correct = false;
  std::string error;
  std::size_t steps_used = 0;
  std::size_t diff_reads_used = 0;
  bool fallback = false;
  llm::Usage usage;

  nlohmann::json to_json() const;
  static CaseResult from_json(const nlohmann::json& j);
  bool operator==(const CaseResult&) const = default;
};

/// Runs one ablation on one case. Failures come back as an empty prediction
/// with `error` set.
CaseResult run_case(Ablation a, const EvalCase& c, const RunConfig& cfg, agent::Policy& policy);

struct AblationRun {
  Ablation ablation = Ablation::FullPipeline;
  std::string config_digest;
  std::string policy_identity;
  std::vector<CaseResult> cases; // dataset order
  MetricsReport metrics;
  llm::Usage usage;

  nlohmann::json report_json() const;
};

/// Runs `a` over all cases on cfg.workers threads, reusing cached per-case
/// results when cfg.cache_dir is set.
AblationRun run_ablation(Ablation a, const std::vector<EvalCase>& cases, const RunConfig& cfg, agent::Policy& policy);

// Cache file for one (ablation, case, config, policy) combination.
std::filesystem::path cache_path(const RunConfig& cfg, Ablation a, const EvalCase& c, std::string_view policy_identity);

std::string case_records_jsonl(const AblationRun& run);
std::string render_metrics_table(const AblationRun& run, const std::map<TpCategory, std::int64_t>* breakdown = nullptr);

struct AblationComparison {
  std::vector<AblationRun> runs;
  std::vector<PairedTest> vs_reference; // runs[i] against runs.back()
};

AblationComparison compare_ablations(const std::vector<Ablation>& configs, const std::vector<EvalCase>& cases,
                                     const RunConfig& cfg, agent::Policy& policy);
std::string render_ablation_table(const AblationComparison& cmp);
nlohmann::json ablation_json(const AblationComparison& cmp);

} // namespace bicsearch::eval
