#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "bicsearch/llm.hpp"
#include "bicsearch/tkg.hpp"

namespace bicsearch::agent {

struct FitnessScores {
  double blame = 1.0;
  double blame_ancestor = 0.6;
  double bfc_ancestor = 0.3;

  double of(tkg::CommitKind k) const;
};

struct Candidate {
  vcs::CommitId commit;
  tkg::CommitKind kind = tkg::CommitKind::Blame;
  double fitness = 0.0;
  std::size_t rank = 0; // 1-based
  std::int64_t commit_time = 0;

  bool operator==(const Candidate&) const = default;
};

struct CandidateList {
  std::vector<Candidate> candidates;
  blame::BlameStats blame_stats;
  bool used_fallback = false;
};

/// Commit nodes other than the bfc, by fitness then newest first, cut to top_k.
CandidateList list_candidates(const tkg::Graph& g, std::size_t top_k, const FitnessScores& scores = {});

struct Budget {
  std::size_t max_steps = 50;
  std::size_t max_diff_reads = 3;
};

enum class Tool { ListCandidates, TraverseGraph, QueryNode, ReadNodeContent, Decide, NoTool };

std::string_view tool_name(Tool t);
std::optional<Tool> tool_from_name(std::string_view name);

struct ToolRequest {
  Tool tool = Tool::ListCandidates;
  std::string sha;
  std::string reason;
  std::string note; // NoTool: the policy's text reply

  nlohmann::json to_json() const;
  bool operator==(const ToolRequest&) const = default;
};

struct ToolResponse {
  bool ok = true;
  std::string text;

  bool operator==(const ToolResponse&) const = default;
};

struct TranscriptEntry {
  std::size_t step = 0; // 0 = listing issued by the loop before the policy runs
  ToolRequest request;
  ToolResponse response;
  llm::Usage usage;

  bool operator==(const TranscriptEntry&) const = default;
};

struct Decision {
  std::optional<vcs::CommitId> predicted_bic;
  std::string reason;
  std::size_t steps_used = 0;
  std::size_t diff_reads_used = 0;
  bool fallback = false;
  std::string error; // PolicyFailure text, if any
  llm::Usage usage;
  std::vector<TranscriptEntry> transcript;

  bool operator==(const Decision&) const = default;
};

// Tool implementations. Each returns in-band error text instead of throwing.
std::string render_candidates(const tkg::Graph& g, const CandidateList& list);
ToolResponse traverse_graph(const tkg::Graph& g, std::string_view sha);
ToolResponse query_node(const tkg::Graph& g, std::string_view sha);
// Increments `diff_reads_used` only on success.
ToolResponse read_node_content(const tkg::Graph& g, std::string_view sha, const Budget& budget,
                               std::size_t& diff_reads_used);

struct SearchContext {
  const tkg::Graph& graph;
  const CandidateList& candidates;
  const std::vector<TranscriptEntry>& transcript;
  const Budget& budget;
  std::size_t steps_used = 0;
  std::size_t diff_reads_used = 0;
};

struct PolicyAction {
  ToolRequest request;
  llm::Usage usage;
};

// One choice among plain-text candidates, without tools.
struct PlainChoice {
  std::optional<vcs::CommitId> pick;
  std::string reason;
  llm::Usage usage;
};

struct PlainPrompt {
  const tkg::Graph& graph;            // fix and candidate metadata
  std::vector<vcs::CommitId> offered; // graph commit nodes, newest first
};

class Policy {
public:
  virtual ~Policy() = default;
  // Stateless with respect to the loop: everything needed is in `ctx`.
  virtual PolicyAction next_action(const SearchContext& ctx) = 0;
  virtual PlainChoice choose_without_tools(const PlainPrompt& prompt) = 0;
  virtual std::string identity() const = 0;
};

// Decides for the rank-1 candidate immediately.
class DeterministicPolicy : public Policy {
public:
  PolicyAction next_action(const SearchContext& ctx) override;
  PlainChoice choose_without_tools(const PlainPrompt& prompt) override;
  std::string identity() const override { return "deterministic"; }
};

// Replays a fixed request list, indexed by step. With `cycle`, the list
// repeats; otherwise running past its end is a PolicyFailure.
class ScriptedPolicy : public Policy {
public:
  explicit ScriptedPolicy(std::vector<ToolRequest> script, bool cycle = false)
      : script_(std::move(script)), cycle_(cycle) {}
  PolicyAction next_action(const SearchContext& ctx) override;
  PlainChoice choose_without_tools(const PlainPrompt& prompt) override;
  std::string identity() const override;

private:
  std::vector<ToolRequest> script_;
  bool cycle_;
};

struct PromptConfig {
  std::string system_prompt; // empty selects the built-in prompt
  std::size_t max_diff_chars = 12000;
};

// Drives a chat backend with tool calling. Shareable across loops when the
// backend is.
class LlmPolicy : public Policy {
public:
  explicit LlmPolicy(llm::ChatBackend& backend, PromptConfig prompt = {});
  PolicyAction next_action(const SearchContext& ctx) override;
  PlainChoice choose_without_tools(const PlainPrompt& prompt) override;
  std::string identity() const override;

  // Exposed for tests: the exact request next_action would send.
  llm::ChatRequest build_request(const SearchContext& ctx) const;
  static std::vector<llm::ToolSchema> tool_schemas();

private:
  llm::ChatBackend& backend_;
  PromptConfig prompt_;
};

Decision run_search(const tkg::Graph& g, const CandidateList& candidates, Policy& policy, const Budget& budget = {});

// One JSON record per exchange, then a final record with the decision.
std::string transcript_jsonl(const Decision& d);
void write_transcript(const std::filesystem::path& path, const Decision& d);

nlohmann::json decision_json(const Decision& d, const tkg::Graph& g);

} // namespace bicsearch::agent
