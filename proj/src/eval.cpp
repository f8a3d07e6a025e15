#include "bicsearch/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <mutex>
#include <sstream>

#include "bicsearch/blame.hpp"
#include "bicsearch/errors.hpp"
#include "bicsearch/util.hpp"

namespace bicsearch::eval {

using nlohmann::json;
using vcs::CommitId;

// ============================================================================
// Metrics
// ============================================================================

std::string_view to_string(TpCategory c) {
  switch (c) {
  case TpCategory::Blame: return "Blame";
  case TpCategory::Ancestor: return "Ancestor";
  case TpCategory::Blameless: return "Blameless";
  case TpCategory::Other: return "Other";
  }
  return "?";
}

MetricsReport score(const std::map<std::string, CommitSet>& predictions,
                    const std::map<std::string, CommitSet>& truth) {
  if (predictions.size() != truth.size() ||
      !std::equal(predictions.begin(), predictions.end(), truth.begin(),
                  [](const auto& a, const auto& b) { return a.first == b.first; }))
    throw Error(ErrorCode::KeyMismatch, "predictions and ground truth cover different cases");

  MetricsReport r;
  auto t = truth.begin();
  for (const auto& [key, pred] : predictions) {
    const auto& gt = (t++)->second;
    std::int64_t hit = 0;
    for (const auto& id : pred) hit += gt.count(id);
    r.true_positives += hit;
    r.predicted += static_cast<std::int64_t>(pred.size());
    r.ground_truth += static_cast<std::int64_t>(gt.size());
    r.correct[key] = hit > 0;
    r.hits[key] = hit;
  }
  if (r.predicted > 0) r.precision = static_cast<double>(r.true_positives) / static_cast<double>(r.predicted);
  if (r.ground_truth > 0) r.recall = static_cast<double>(r.true_positives) / static_cast<double>(r.ground_truth);
  if (r.precision + r.recall > 0) r.f1 = 2 * r.precision * r.recall / (r.precision + r.recall);
  return r;
}

std::string_view PairedTest::effect() const {
  if (cohens_g >= kLargeEffect) return "large";
  if (cohens_g >= kMediumEffect) return "medium";
  if (cohens_g >= 0.05) return "small";
  return "negligible";
}

double mcnemar_p(std::int64_t a_only, std::int64_t b_only, bool* exact) {
  if (a_only < 0 || b_only < 0) throw Error(ErrorCode::InvalidArgument, "negative discordant count");
  std::int64_t n = a_only + b_only;
  if (exact) *exact = n <= kExactMcNemarLimit;
  if (n == 0) return 1.0;
  if (n <= kExactMcNemarLimit) {
    std::int64_t k = std::min(a_only, b_only);
    double term = std::ldexp(1.0, -static_cast<int>(n)); // C(n,0) / 2^n
    double tail = 0.0;
    for (std::int64_t i = 0; i <= k; ++i) {
      tail += term;
      term = term * static_cast<double>(n - i) / static_cast<double>(i + 1);
    }
    return std::min(1.0, 2.0 * tail);
  }
  double diff = std::abs(static_cast<double>(a_only - b_only)) - 1.0;
  double stat = diff * diff / static_cast<double>(n);
  return std::erfc(std::sqrt(stat / 2.0));
}

double cohens_g(std::int64_t a_only, std::int64_t b_only) {
  std::int64_t n = a_only + b_only;
  if (n == 0) return 0.0;
  return std::abs(static_cast<double>(b_only) / static_cast<double>(n) - 0.5);
}

PairedTest mcnemar(const std::vector<bool>& a, const std::vector<bool>& b) {
  if (a.size() != b.size()) throw Error(ErrorCode::KeyMismatch, "paired vectors differ in length");
  PairedTest t;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i] && !b[i]) ++t.a_only;
    if (b[i] && !a[i]) ++t.b_only;
  }
  t.no_discordant_pairs = t.a_only + t.b_only == 0;
  t.p_value = mcnemar_p(t.a_only, t.b_only, &t.exact);
  t.cohens_g = cohens_g(t.a_only, t.b_only);
  return t;
}

PairedTest mcnemar(const MetricsReport& a, const MetricsReport& b) {
  if (a.correct.size() != b.correct.size())
    throw Error(ErrorCode::KeyMismatch, "reports cover different cases");
  std::vector<bool> va, vb;
  auto it = b.correct.begin();
  for (const auto& [key, ok] : a.correct) {
    if (it->first != key) throw Error(ErrorCode::KeyMismatch, "reports cover different cases");
    va.push_back(ok);
    vb.push_back((it++)->second);
  }
  return mcnemar(va, vb);
}

TpCategory case_category(const std::vector<categorize::BicCategory>& members) {
  auto any = [&](auto pred) { return std::any_of(members.begin(), members.end(), pred); };
  using categorize::Kind;
  if (any([](const auto& c) { return c.kind == Kind::Blame; })) return TpCategory::Blame;
  if (any([](const auto& c) { return c.kind == Kind::BlameAncestor || c.kind == Kind::BfcAncestor; }))
    return TpCategory::Ancestor;
  if (any([](const auto& c) { return c.kind == Kind::Blameless; })) return TpCategory::Blameless;
  return TpCategory::Other;
}

std::map<TpCategory, std::int64_t>
breakdown_by_category(const MetricsReport& report,
                      const std::map<std::string, std::vector<categorize::BicCategory>>& categories) {
  std::map<TpCategory, std::int64_t> out;
  for (auto c : kTpCategories) out[c] = 0;
  for (const auto& [key, hit] : report.hits) {
    auto it = categories.find(key);
    auto cat = it == categories.end() ? TpCategory::Other : case_category(it->second);
    out[cat] += hit;
  }
  return out;
}

std::map<std::string, std::vector<categorize::BicCategory>> categories_by_case(const categorize::CategoryReport& r) {
  std::map<std::string, std::vector<categorize::BicCategory>> out;
  for (const auto& rec : r.records) {
    auto& v = out[rec.repo + "@" + rec.bfc.str()];
    if (rec.category) v.push_back(*rec.category);
  }
  return out;
}

// ============================================================================
// Configuration
// ============================================================================

std::string_view to_string(Ablation a) {
  switch (a) {
  case Ablation::BlameOnly: return "blame-only";
  case Ablation::BlameFallback: return "blame-fallback";
  case Ablation::TkgOnly: return "tkg-only";
  case Ablation::AgentOnly: return "agent-only";
  case Ablation::FullPipeline: return "full";
  }
  return "?";
}

std::optional<Ablation> ablation_from_string(std::string_view s) {
  for (auto a : kAllAblations)
    if (to_string(a) == s) return a;
  return std::nullopt;
}

std::string_view to_string(PolicyKind k) {
  switch (k) {
  case PolicyKind::Deterministic: return "deterministic";
  case PolicyKind::Replay: return "replay";
  case PolicyKind::Llm: return "llm";
  }
  return "?";
}

std::optional<PolicyKind> policy_kind_from_string(std::string_view s) {
  for (auto k : {PolicyKind::Deterministic, PolicyKind::Replay, PolicyKind::Llm})
    if (to_string(k) == s) return k;
  return std::nullopt;
}

void RunConfig::validate() const {
  tkg.validate();
  if (budget.max_steps == 0) throw Error(ErrorCode::InvalidArgument, "max_steps must be positive");
  if (workers == 0) throw Error(ErrorCode::InvalidArgument, "workers must be positive");
  if (policy == PolicyKind::Replay && cassette.empty())
    throw Error(ErrorCode::InvalidArgument, "replay policy needs a cassette path");
}

json RunConfig::to_json() const {
  return {{"tkg",
           {{"max_depth", tkg.max_depth},
            {"candidate_cap", tkg.candidate_cap},
            {"top_k", tkg.top_k},
            {"sanitize", tkg.sanitize}}},
          {"budget", {{"max_steps", budget.max_steps}, {"max_diff_reads", budget.max_diff_reads}}},
          {"policy", to_string(policy)}};
}

std::string RunConfig::digest() const { return util::sha256_hex(to_json().dump()); }

PolicyBundle::PolicyBundle(const RunConfig& cfg) {
  switch (cfg.policy) {
  case PolicyKind::Deterministic: policy_ = std::make_unique<agent::DeterministicPolicy>(); break;
  case PolicyKind::Replay:
    backend_ = std::make_unique<llm::ReplayBackend>(llm::Cassette::load(cfg.cassette));
    policy_ = std::make_unique<agent::LlmPolicy>(*backend_);
    break;
  case PolicyKind::Llm:
    backend_ = std::make_unique<llm::HttpChatBackend>(llm::EndpointConfig::from_env());
    if (!cfg.cassette.empty()) {
      cassette_ = std::make_unique<llm::Cassette>();
      recorder_ = std::make_unique<llm::RecordingBackend>(*backend_, *cassette_);
      record_to_ = cfg.cassette;
    }
    policy_ = std::make_unique<agent::LlmPolicy>(recorder_ ? *recorder_ : *backend_);
    break;
  }
}

PolicyBundle::~PolicyBundle() = default;

void PolicyBundle::finish() {
  if (cassette_ && !record_to_.empty()) cassette_->save(record_to_);
}

// ============================================================================
// Pipelines
// ============================================================================

IdentifyResult identify(const vcs::Repository& repo, const CommitId& bfc, const RunConfig& cfg,
                        agent::Policy& policy) {
  cfg.tkg.validate();
  auto build = tkg::build_for_fix(repo, bfc, cfg.tkg);
  auto cands = agent::list_candidates(build.graph, cfg.tkg.top_k);
  auto decision = agent::run_search(build.graph, cands, policy, cfg.budget);
  return {std::move(build), std::move(cands), std::move(decision)};
}

namespace {

// Blame origins, newest commit first.
std::vector<CommitId> newest_first(const vcs::Repository& repo, const blame::BlameSet& bs) {
  std::vector<std::pair<std::int64_t, CommitId>> timed;
  for (const auto& id : bs.origins()) timed.emplace_back(repo.read_commit(id).commit_time, id);
  std::sort(timed.begin(), timed.end(), [](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first > b.first;
    return a.second < b.second;
  });
  std::vector<CommitId> out;
  for (auto& [t, id] : timed) out.push_back(id);
  return out;
}

std::optional<CommitId> most_recent(const vcs::Repository& repo, const blame::BlameSet& bs) {
  auto v = newest_first(repo, bs);
  if (v.empty()) return std::nullopt;
  return v.front();
}

} // namespace

CaseResult run_case(Ablation a, const EvalCase& c, const RunConfig& cfg, agent::Policy& policy) {
  CaseResult r;
  r.key = c.key();
  try {
    vcs::Repository repo(resolve_repo(c.repo_ref, cfg.repos_dir, cfg.base_dir));
    switch (a) {
    case Ablation::BlameOnly:
      if (!blame::is_blameless(repo.compute_diff(c.bfc)))
        r.predicted = most_recent(repo, blame::blame_deleted_lines(repo, c.bfc));
      break;
    case Ablation::BlameFallback: r.predicted = most_recent(repo, blame::blame_for_fix(repo, c.bfc)); break;
    case Ablation::TkgOnly: {
      auto build = tkg::build_for_fix(repo, c.bfc, cfg.tkg);
      auto cands = agent::list_candidates(build.graph, cfg.tkg.top_k);
      if (!cands.candidates.empty()) r.predicted = cands.candidates.front().commit;
      break;
    }
    case Ablation::AgentOnly: {
      auto build = tkg::build_for_fix(repo, c.bfc, cfg.tkg);
      agent::PlainPrompt prompt{build.graph, newest_first(repo, build.blame_set)};
      auto choice = policy.choose_without_tools(prompt);
      r.predicted = choice.pick;
      r.usage = choice.usage;
      break;
    }
    case Ablation::FullPipeline: {
      auto res = identify(repo, c.bfc, cfg, policy);
      const auto& d = res.decision;
      r.predicted = d.predicted_bic;
      r.steps_used = d.steps_used;
      r.diff_reads_used = d.diff_reads_used;
      r.fallback = d.fallback;
      r.usage = d.usage;
      r.error = d.error;
      break;
    }
    }
  } catch (const std::exception& e) {
    r.predicted.reset();
    r.error = e.what();
  }
  r.correct = r.predicted && std::find(c.ground_truth.begin(), c.ground_truth.end(), *r.predicted) !=
                                 c.ground_truth.end();
  return r;
}

json CaseResult::to_json() const {
  return {{"case", key},
          {"predicted", predicted ? json(predicted->str()) : json(nullptr)},
          {"correct", correct},
          {"error", error},
          {"steps_used", steps_used},
          {"diff_reads_used", diff_reads_used},
          {"fallback", fallback},
          {"tokens_in", usage.input_tokens},
          {"tokens_out", usage.output_tokens}};
}

CaseResult CaseResult::from_json(const json& j) {
  try {
    CaseResult r;
    r.key = j.at("case").get<std::string>();
    if (!j.at("predicted").is_null()) r.predicted = CommitId::parse(j.at("predicted").get<std::string>());
    r.correct = j.at("correct").get<bool>();
    r.error = j.at("error").get<std::string>();
    r.steps_used = j.at("steps_used").get<std::size_t>();
    r.diff_reads_used = j.at("diff_reads_used").get<std::size_t>();
    r.fallback = j.at("fallback").get<bool>();
    r.usage = {j.at("tokens_in").get<std::int64_t>(), j.at("tokens_out").get<std::int64_t>()};
    return r;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::MalformedDocument, std::string("case record: ") + e.what());
  } catch (const Error& e) {
    throw Error(ErrorCode::MalformedDocument, std::string("case record: ") + e.what());
  }
}

std::filesystem::path cache_path(const RunConfig& cfg, Ablation a, const EvalCase& c,
                                 std::string_view policy_identity) {
  std::string material = std::string(to_string(a)) + "\n" + c.key() + "\n" + cfg.digest() + "\n" +
                         std::string(policy_identity);
  return cfg.cache_dir / (util::sha256_hex(material) + ".json");
}

AblationRun run_ablation(Ablation a, const std::vector<EvalCase>& cases, const RunConfig& cfg,
                         agent::Policy& policy) {
  cfg.validate();
  if (!cfg.tkg.sanitize)
    throw Error(ErrorCode::InvalidArgument, "message sanitization cannot be disabled for evaluation runs");
  std::set<std::string> keys;
  for (const auto& c : cases)
    if (!keys.insert(c.key()).second) throw Error(ErrorCode::InvalidArgument, "duplicate case " + c.key());

  AblationRun run;
  run.ablation = a;
  run.config_digest = cfg.digest();
  run.policy_identity = policy.identity();
  run.cases.resize(cases.size());
  if (!cfg.cache_dir.empty()) std::filesystem::create_directories(cfg.cache_dir);

  util::parallel_for(cases.size(), cfg.workers, [&](std::size_t i) {
    const auto& c = cases[i];
    std::filesystem::path cached;
    if (!cfg.cache_dir.empty()) {
      cached = cache_path(cfg, a, c, run.policy_identity);
      if (std::filesystem::exists(cached)) {
        try {
          auto r = CaseResult::from_json(json::parse(util::read_file(cached)));
          if (r.key == c.key()) {
            run.cases[i] = std::move(r);
            return;
          }
        } catch (const std::exception&) {
          // unreadable cache entry: recompute and overwrite
        }
      }
    }
    run.cases[i] = run_case(a, c, cfg, policy);
    if (!cached.empty()) util::write_file_atomic(cached, run.cases[i].to_json().dump() + "\n");
  });

  std::map<std::string, CommitSet> pred, truth;
  for (std::size_t i = 0; i < cases.size(); ++i) {
    const auto& r = run.cases[i];
    auto& p = pred[r.key];
    if (r.predicted) p.insert(*r.predicted);
    truth[r.key] = CommitSet(cases[i].ground_truth.begin(), cases[i].ground_truth.end());
    run.usage += r.usage;
  }
  run.metrics = score(pred, truth);
  return run;
}

json AblationRun::report_json() const {
  std::int64_t errors = 0, fallbacks = 0;
  for (const auto& c : cases) {
    errors += !c.error.empty();
    fallbacks += c.fallback;
  }
  json j = {{"ablation", to_string(ablation)},
            {"config_digest", config_digest},
            {"policy", policy_identity},
            {"cases", cases.size()},
            {"errors", errors},
            {"fallbacks", fallbacks},
            {"precision", metrics.precision},
            {"recall", metrics.recall},
            {"f1", metrics.f1},
            {"true_positives", metrics.true_positives},
            {"predicted", metrics.predicted},
            {"ground_truth", metrics.ground_truth},
            {"tokens_in", usage.input_tokens},
            {"tokens_out", usage.output_tokens}};
  if (!metrics.tp_by_category.empty()) {
    json b = json::object();
    for (const auto& [cat, n] : metrics.tp_by_category) b[std::string(to_string(cat))] = n;
    j["tp_by_category"] = b;
  }
  return j;
}

std::string case_records_jsonl(const AblationRun& run) {
  std::string out;
  for (const auto& c : run.cases) {
    auto j = c.to_json();
    j["ablation"] = to_string(run.ablation);
    j["config_digest"] = run.config_digest;
    out += j.dump() + "\n";
  }
  return out;
}

namespace {

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

std::string pad(std::string s, std::size_t w) {
  if (s.size() < w) s.append(w - s.size(), ' ');
  return s;
}

} // namespace

std::string render_metrics_table(const AblationRun& run, const std::map<TpCategory, std::int64_t>* breakdown) {
  const auto& m = run.metrics;
  std::int64_t errors = 0;
  for (const auto& c : run.cases) errors += !c.error.empty();
  std::ostringstream os;
  os << pad("Config", 16) << pad("Cases", 7) << pad("TP", 6) << pad("Precision", 11) << pad("Recall", 9)
     << pad("F1", 8) << "Errors\n";
  os << pad(std::string(to_string(run.ablation)), 16) << pad(std::to_string(run.cases.size()), 7)
     << pad(std::to_string(m.true_positives), 6) << pad(fmt("%.3f", m.precision), 11)
     << pad(fmt("%.3f", m.recall), 9) << pad(fmt("%.3f", m.f1), 8) << errors << "\n";
  if (!run.cases.empty() && (run.usage.input_tokens > 0 || run.usage.output_tokens > 0)) {
    double n = static_cast<double>(run.cases.size());
    os << "Tokens: " << run.usage.input_tokens << " in, " << run.usage.output_tokens << " out ("
       << fmt("%.1f", static_cast<double>(run.usage.input_tokens) / n) << " / "
       << fmt("%.1f", static_cast<double>(run.usage.output_tokens) / n) << " per case)\n";
  }
  if (breakdown) {
    os << "True positives by category:";
    for (auto c : kTpCategories) {
      auto it = breakdown->find(c);
      os << " " << to_string(c) << "=" << (it == breakdown->end() ? 0 : it->second);
    }
    os << "\n";
  }
  os << "Config digest: " << run.config_digest << "\n";
  return os.str();
}

AblationComparison compare_ablations(const std::vector<Ablation>& configs, const std::vector<EvalCase>& cases,
                                     const RunConfig& cfg, agent::Policy& policy) {
  if (configs.empty()) throw Error(ErrorCode::InvalidArgument, "no ablation configurations given");
  AblationComparison cmp;
  for (auto a : configs) cmp.runs.push_back(run_ablation(a, cases, cfg, policy));
  for (const auto& r : cmp.runs) cmp.vs_reference.push_back(mcnemar(r.metrics, cmp.runs.back().metrics));
  return cmp;
}

std::string render_ablation_table(const AblationComparison& cmp) {
  std::ostringstream os;
  std::string ref(to_string(cmp.runs.back().ablation));
  os << pad("Config", 16) << pad("Precision", 11) << pad("Recall", 9) << pad("F1", 8) << pad("Only/Ref", 10)
     << pad("p", 10) << pad("g", 7) << "Effect\n";
  for (std::size_t i = 0; i < cmp.runs.size(); ++i) {
    const auto& r = cmp.runs[i];
    const auto& t = cmp.vs_reference[i];
    os << pad(std::string(to_string(r.ablation)), 16) << pad(fmt("%.3f", r.metrics.precision), 11)
       << pad(fmt("%.3f", r.metrics.recall), 9) << pad(fmt("%.3f", r.metrics.f1), 8);
    if (i + 1 == cmp.runs.size()) {
      os << "(reference)\n";
      continue;
    }
    os << pad(std::to_string(t.a_only) + "/" + std::to_string(t.b_only), 10)
       << pad(t.no_discordant_pairs ? "1 (none)" : fmt("%.4g", t.p_value), 10) << pad(fmt("%.3f", t.cohens_g), 7)
       << t.effect() << "\n";
  }
  os << "Paired tests compare each configuration against " << ref << ".\n";
  os << "Config digest: " << cmp.runs.back().config_digest << "\n";
  return os.str();
}

json ablation_json(const AblationComparison& cmp) {
  json runs = json::array();
  for (std::size_t i = 0; i < cmp.runs.size(); ++i) {
    auto j = cmp.runs[i].report_json();
    const auto& t = cmp.vs_reference[i];
    j["vs_reference"] = {{"reference", to_string(cmp.runs.back().ablation)},
                         {"only_this", t.a_only},
                         {"only_reference", t.b_only},
                         {"p_value", t.p_value},
                         {"exact", t.exact},
                         {"no_discordant_pairs", t.no_discordant_pairs},
                         {"cohens_g", t.cohens_g},
                         {"effect", t.effect()}};
    runs.push_back(j);
  }
  return {{"runs", runs}};
}

} // namespace bicsearch::eval
