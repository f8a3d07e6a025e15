#include "bicsearch/agent.hpp"

#include "bicsearch/errors.hpp"
#include "bicsearch/util.hpp"

#include <algorithm>
#include <cctype>
#include <tuple>

namespace bicsearch::agent {

using nlohmann::json;
using tkg::CommitKind;
using vcs::CommitId;

double FitnessScores::of(CommitKind k) const {
  switch (k) {
  case CommitKind::Blame: return blame;
  case CommitKind::BlameAncestor: return blame_ancestor;
  case CommitKind::BfcAncestor: return bfc_ancestor;
  case CommitKind::Bfc: break;
  }
  return 0.0;
}

CandidateList list_candidates(const tkg::Graph& g, std::size_t top_k, const FitnessScores& scores) {
  CandidateList out;
  for (const auto* c : g.chronological()) {
    if (c->id == g.bfc()) continue;
    out.candidates.push_back({c->id, c->kind, scores.of(c->kind), 0, c->commit_time});
  }
  std::sort(out.candidates.begin(), out.candidates.end(), [](const Candidate& a, const Candidate& b) {
    if (a.fitness != b.fitness) return a.fitness > b.fitness;
    if (a.commit_time != b.commit_time) return a.commit_time > b.commit_time;
    return a.commit < b.commit;
  });
  if (out.candidates.size() > top_k) out.candidates.resize(top_k);
  for (std::size_t i = 0; i < out.candidates.size(); ++i) out.candidates[i].rank = i + 1;
  if (const auto* bfc = g.commit(g.bfc())) {
    if (bfc->blame_stats) out.blame_stats = *bfc->blame_stats;
    out.used_fallback = bfc->used_fallback;
  }
  return out;
}

std::string_view tool_name(Tool t) {
  switch (t) {
  case Tool::ListCandidates: return "list_candidates";
  case Tool::TraverseGraph: return "traverse_graph";
  case Tool::QueryNode: return "query_node";
  case Tool::ReadNodeContent: return "read_node_content";
  case Tool::Decide: return "decide";
  case Tool::NoTool: return "none";
  }
  return "none";
}

std::optional<Tool> tool_from_name(std::string_view name) {
  for (auto t : {Tool::ListCandidates, Tool::TraverseGraph, Tool::QueryNode, Tool::ReadNodeContent, Tool::Decide})
    if (tool_name(t) == name) return t;
  return std::nullopt;
}

json ToolRequest::to_json() const {
  json j = {{"tool", tool_name(tool)}};
  if (!sha.empty()) j["sha"] = sha;
  if (!reason.empty()) j["reason"] = reason;
  if (!note.empty()) j["note"] = note;
  return j;
}

// ============================================================================
// Tools
// ============================================================================

namespace {

std::string subject(const std::string& message) { return message.substr(0, message.find('\n')); }

json stats_json(const blame::BlameStats& s, bool used_fallback) {
  return {{"total_blame_commits", s.total_blame_commits},
          {"blamed_lines", s.blamed_lines},
          {"single_responsible", s.single_responsible},
          {"dominant_commit", s.dominant_commit ? json(s.dominant_commit->str()) : json(nullptr)},
          {"dominant_fraction", s.dominant_fraction},
          {"used_fallback", used_fallback}};
}

std::vector<std::string> function_labels(const tkg::Graph& g, const std::set<std::string>& ids) {
  std::vector<std::string> out;
  for (const auto& id : ids)
    if (const auto* n = g.find(id)) out.push_back(n->name + " (" + n->path + ")");
  return out;
}

ToolResponse tool_error(const Error& e) { return {false, std::string("error: ") + e.what()}; }

} // namespace

std::string render_candidates(const tkg::Graph& g, const CandidateList& list) {
  json cands = json::array();
  for (const auto& c : list.candidates) {
    const auto* p = g.commit(c.commit);
    cands.push_back({{"rank", c.rank},
                     {"sha", c.commit.str()},
                     {"kind", tkg::to_string(c.kind)},
                     {"fitness", c.fitness},
                     {"commit_time", c.commit_time},
                     {"subject", p ? subject(p->message) : ""}});
  }
  return json{{"candidates", cands}, {"blame_stats", stats_json(list.blame_stats, list.used_fallback)}}.dump();
}

ToolResponse traverse_graph(const tkg::Graph& g, std::string_view sha) {
  try {
    auto self = g.resolve(sha);
    auto mine = g.functions_of(self);
    json related = json::array();
    for (const auto& id : tkg::neighbors(g, sha)) {
      const auto* p = g.commit(id);
      auto theirs = g.functions_of(id);
      bool fn = std::any_of(theirs.begin(), theirs.end(), [&](const auto& f) { return mine.count(f) > 0; });
      related.push_back({{"sha", id.str()},
                         {"kind", tkg::to_string(p->kind)},
                         {"commit_time", p->commit_time},
                         {"shared", fn ? "function" : "file"},
                         {"subject", subject(p->message)}});
    }
    return {true, json{{"sha", self.str()}, {"related", related}}.dump()};
  } catch (const Error& e) {
    return tool_error(e);
  }
}

ToolResponse query_node(const tkg::Graph& g, std::string_view sha) {
  try {
    auto id = g.resolve(sha);
    const auto& c = *g.commit(id);
    auto files = g.files_of(id);
    auto funcs = g.functions_of(id);
    json parents = json::array();
    for (const auto& p : c.parents) parents.push_back(p.str());
    json j = {{"sha", id.str()},
              {"kind", tkg::to_string(c.kind)},
              {"depth", c.depth},
              {"author_time", c.author_time},
              {"commit_time", c.commit_time},
              {"message", c.message},
              {"parents", parents},
              {"files", files},
              {"functions", function_labels(g, funcs)}};
    if (id == g.bfc()) {
      if (c.blame_stats) j["blame_stats"] = stats_json(*c.blame_stats, c.used_fallback);
    } else {
      auto bfc_files = g.files_of(g.bfc());
      auto bfc_funcs = g.functions_of(g.bfc());
      std::set<std::string> shared_files, shared_funcs;
      std::set_intersection(files.begin(), files.end(), bfc_files.begin(), bfc_files.end(),
                            std::inserter(shared_files, shared_files.end()));
      std::set_intersection(funcs.begin(), funcs.end(), bfc_funcs.begin(), bfc_funcs.end(),
                            std::inserter(shared_funcs, shared_funcs.end()));
      j["overlap_with_bfc"] = {{"files", shared_files}, {"functions", function_labels(g, shared_funcs)}};
    }
    return {true, j.dump()};
  } catch (const Error& e) {
    return tool_error(e);
  }
}

ToolResponse read_node_content(const tkg::Graph& g, std::string_view sha, const Budget& budget,
                               std::size_t& diff_reads_used) {
  try {
    auto id = g.resolve(sha);
    if (diff_reads_used >= budget.max_diff_reads)
      return {false, "refused: BudgetExhausted: diff read limit of " + std::to_string(budget.max_diff_reads) +
                         " reached"};
    ++diff_reads_used;
    return {true, vcs::render_diff(g.commit(id)->diff)};
  } catch (const Error& e) {
    return tool_error(e);
  }
}

// ============================================================================
// Loop
// ============================================================================

Decision run_search(const tkg::Graph& g, const CandidateList& candidates, Policy& policy, const Budget& budget) {
  Decision d;
  d.transcript.push_back({0, {Tool::ListCandidates, "", "", ""}, {true, render_candidates(g, candidates)}, {}});

  while (d.steps_used < budget.max_steps) {
    SearchContext ctx{g, candidates, d.transcript, budget, d.steps_used, d.diff_reads_used};
    PolicyAction action;
    try {
      action = policy.next_action(ctx);
    } catch (const std::exception& e) {
      d.error = std::string("PolicyFailure: ") + e.what();
      break;
    }
    ++d.steps_used;
    d.usage += action.usage;
    const auto& req = action.request;
    ToolResponse resp;
    std::optional<CommitId> chosen;
    switch (req.tool) {
    case Tool::ListCandidates: resp = {true, render_candidates(g, candidates)}; break;
    case Tool::TraverseGraph: resp = traverse_graph(g, req.sha); break;
    case Tool::QueryNode: resp = query_node(g, req.sha); break;
    case Tool::ReadNodeContent: resp = read_node_content(g, req.sha, budget, d.diff_reads_used); break;
    case Tool::Decide:
      try {
        auto id = g.resolve(req.sha);
        if (id == g.bfc()) resp = {false, "error: the fix itself cannot be its own inducing commit"};
        else {
          chosen = id;
          resp = {true, "accepted " + id.str()};
        }
      } catch (const Error& e) {
        resp = tool_error(e);
      }
      break;
    case Tool::NoTool: resp = {false, "error: reply with exactly one tool call"}; break;
    }
    d.transcript.push_back({d.steps_used, req, resp, action.usage});
    if (chosen) {
      d.predicted_bic = chosen;
      d.reason = req.reason;
      return d;
    }
  }

  d.fallback = true;
  if (!candidates.candidates.empty()) d.predicted_bic = candidates.candidates.front().commit;
  d.reason = d.error.empty() ? "step budget exhausted; fell back to the rank-1 candidate"
                             : "policy failed; fell back to the rank-1 candidate";
  if (!d.predicted_bic) d.reason += " (no candidates)";
  return d;
}

// ============================================================================
// Built-in policies
// ============================================================================

PolicyAction DeterministicPolicy::next_action(const SearchContext& ctx) {
  if (ctx.candidates.candidates.empty()) throw Error(ErrorCode::PolicyFailure, "no candidates to choose from");
  const auto& top = ctx.candidates.candidates.front();
  return {{Tool::Decide, top.commit.str(), "highest fitness candidate (" + std::string(tkg::to_string(top.kind)) + ")", ""},
          {}};
}

PlainChoice DeterministicPolicy::choose_without_tools(const PlainPrompt& prompt) {
  if (prompt.offered.empty()) return {std::nullopt, "no candidates", {}};
  return {prompt.offered.front(), "most recent candidate", {}};
}

PolicyAction ScriptedPolicy::next_action(const SearchContext& ctx) {
  if (script_.empty()) throw Error(ErrorCode::PolicyFailure, "empty script");
  std::size_t i = ctx.steps_used;
  if (i >= script_.size()) {
    if (!cycle_) throw Error(ErrorCode::PolicyFailure, "script exhausted");
    i %= script_.size();
  }
  return {script_[i], {}};
}

PlainChoice ScriptedPolicy::choose_without_tools(const PlainPrompt& prompt) {
  for (const auto& r : script_) {
    if (r.tool != Tool::Decide) continue;
    for (const auto& id : prompt.offered)
      if (id.str().starts_with(r.sha) && r.sha.size() >= 7) return {id, r.reason, {}};
  }
  return {std::nullopt, "script offers no decision among the candidates", {}};
}

std::string ScriptedPolicy::identity() const {
  json j = json::array();
  for (const auto& r : script_) j.push_back(r.to_json());
  return "scripted:" + util::sha256_hex(j.dump() + (cycle_ ? "+cycle" : "")).substr(0, 16);
}

// ----------------------------------------------------------------------------
// LLM policy
// ----------------------------------------------------------------------------

namespace {

constexpr const char* kSystemPrompt =
    "You identify the bug-inducing commit for a bug-fixing commit.\n"
    "Candidates come from a temporal knowledge graph built around the fix: blame commits last touched the lines the "
    "fix changed; blame_ancestor commits precede them in file history; bfc_ancestor commits precede the fix in the "
    "history of the files it changed. Fitness is a prior, not an answer.\n"
    "Use the tools to inspect candidates. Diff reads are limited, so query metadata and relationships first. Finish by "
    "calling decide with the full sha of exactly one candidate and a short reason.";

constexpr const char* kPlainSystemPrompt =
    "You identify the bug-inducing commit for a bug-fixing commit. Answer with the full sha of exactly one candidate "
    "on the first line, then a short reason.";

std::string clip(const std::string& s, std::size_t n) {
  if (s.size() <= n) return s;
  return s.substr(0, n) + "\n[... " + std::to_string(s.size() - n) + " more characters]\n";
}

std::string fix_summary(const tkg::Graph& g, std::size_t max_diff_chars) {
  const auto& bfc = g.bfc_commit();
  std::string out = "Bug-fixing commit " + bfc.id.str() + "\n";
  out += "Message:\n" + bfc.message + "\n";
  out += "Diff:\n" + clip(vcs::render_diff(bfc.diff), max_diff_chars);
  return out;
}

json sha_param() {
  return {{"type", "object"},
          {"properties", {{"sha", {{"type", "string"}, {"description", "commit sha or unique prefix (7+ chars)"}}}}},
          {"required", {"sha"}}};
}

ToolRequest request_from_call(const llm::ToolCall& call) {
  auto tool = tool_from_name(call.name);
  if (!tool) throw Error(ErrorCode::MalformedResponse, "unknown tool '" + call.name + "'");
  auto str_arg = [&](const char* key) {
    if (!call.arguments.is_object() || !call.arguments.contains(key)) return std::string();
    const auto& v = call.arguments[key];
    return v.is_string() ? v.get<std::string>() : v.dump();
  };
  return {*tool, str_arg("sha"), str_arg("reason"), ""};
}

json arguments_of(const ToolRequest& r) {
  json a = json::object();
  if (r.tool == Tool::ListCandidates) return a;
  a["sha"] = r.sha;
  if (r.tool == Tool::Decide) a["reason"] = r.reason;
  return a;
}

} // namespace

LlmPolicy::LlmPolicy(llm::ChatBackend& backend, PromptConfig prompt) : backend_(backend), prompt_(std::move(prompt)) {}

std::string LlmPolicy::identity() const {
  const std::string& sys = prompt_.system_prompt.empty() ? std::string(kSystemPrompt) : prompt_.system_prompt;
  return "llm:" + backend_.identity() + ":" + util::sha256_hex(sys).substr(0, 12);
}

std::vector<llm::ToolSchema> LlmPolicy::tool_schemas() {
  return {
      {"list_candidates", "Ranked candidate commits with fitness scores and blame statistics.",
       {{"type", "object"}, {"properties", json::object()}}},
      {"traverse_graph",
       "Commits related to the given commit through shared functions (listed first) or shared files.", sha_param()},
      {"query_node", "Metadata of a commit node: message, time, kind, files, functions, overlap with the fix.",
       sha_param()},
      {"read_node_content", "Full unified diff of a commit. Limited number of reads per case.", sha_param()},
      {"decide", "Final answer: the bug-inducing commit.",
       {{"type", "object"},
        {"properties",
         {{"sha", {{"type", "string"}, {"description", "sha of the chosen commit"}}},
          {"reason", {{"type", "string"}, {"description", "why this commit introduced the bug"}}}}},
        {"required", {"sha", "reason"}}}},
  };
}

llm::ChatRequest LlmPolicy::build_request(const SearchContext& ctx) const {
  llm::ChatRequest req;
  req.tools = tool_schemas();
  req.messages.push_back({"system", prompt_.system_prompt.empty() ? kSystemPrompt : prompt_.system_prompt, {}, ""});
  std::string user = fix_summary(ctx.graph, prompt_.max_diff_chars);
  user += "\nBudget: " + std::to_string(ctx.budget.max_steps) + " tool calls, " +
          std::to_string(ctx.budget.max_diff_reads) + " diff reads.\n";
  if (!ctx.transcript.empty()) user += "\nlist_candidates result:\n" + ctx.transcript.front().response.text + "\n";
  req.messages.push_back({"user", user, {}, ""});
  for (const auto& e : ctx.transcript) {
    if (e.step == 0) continue;
    if (e.request.tool == Tool::NoTool) {
      req.messages.push_back({"assistant", e.request.note, {}, ""});
      req.messages.push_back({"user", e.response.text, {}, ""});
      continue;
    }
    std::string id = "call_" + std::to_string(e.step);
    req.messages.push_back(
        {"assistant", "", llm::ToolCall{id, std::string(tool_name(e.request.tool)), arguments_of(e.request)}, ""});
    req.messages.push_back({"tool", e.response.text, {}, id});
  }
  return req;
}

PolicyAction LlmPolicy::next_action(const SearchContext& ctx) {
  auto req = build_request(ctx);
  auto resp = backend_.complete(req);
  llm::check_response(req, resp);
  if (!resp.tool_call) return {{Tool::NoTool, "", "", resp.text}, resp.usage};
  return {request_from_call(*resp.tool_call), resp.usage};
}

PlainChoice LlmPolicy::choose_without_tools(const PlainPrompt& prompt) {
  llm::ChatRequest req;
  req.messages.push_back({"system", kPlainSystemPrompt, {}, ""});
  std::string user = fix_summary(prompt.graph, prompt_.max_diff_chars) + "\nCandidates:\n";
  for (const auto& id : prompt.offered) {
    const auto* c = prompt.graph.commit(id);
    if (!c) continue;
    user += "- " + id.str() + " (" + std::to_string(c->commit_time) + ") " + subject(c->message) + "\n";
  }
  req.messages.push_back({"user", user, {}, ""});
  auto resp = backend_.complete(req);
  llm::check_response(req, resp);

  // First hex token that names exactly one offered commit.
  const auto& t = resp.text;
  std::size_t i = 0;
  while (i < t.size()) {
    if (!std::isxdigit(static_cast<unsigned char>(t[i]))) {
      ++i;
      continue;
    }
    std::size_t j = i;
    while (j < t.size() && std::isxdigit(static_cast<unsigned char>(t[j]))) ++j;
    std::string tok = t.substr(i, j - i);
    std::transform(tok.begin(), tok.end(), tok.begin(), [](unsigned char c) { return std::tolower(c); });
    if (tok.size() >= 7 && tok.size() <= 40) {
      std::optional<CommitId> hit;
      int matches = 0;
      for (const auto& id : prompt.offered)
        if (id.str().starts_with(tok)) {
          hit = id;
          ++matches;
        }
      if (matches == 1) return {hit, t, resp.usage};
    }
    i = j;
  }
  return {std::nullopt, t, resp.usage};
}

// ============================================================================
// Persistence
// ============================================================================

namespace {

json decision_core(const Decision& d) {
  return {{"predicted_bic", d.predicted_bic ? json(d.predicted_bic->str()) : json(nullptr)},
          {"reason", d.reason},
          {"steps_used", d.steps_used},
          {"diff_reads_used", d.diff_reads_used},
          {"fallback", d.fallback},
          {"error", d.error},
          {"tokens_in", d.usage.input_tokens},
          {"tokens_out", d.usage.output_tokens}};
}

} // namespace

std::string transcript_jsonl(const Decision& d) {
  std::string out;
  for (const auto& e : d.transcript) {
    json j = {{"step", e.step},
              {"request", e.request.to_json()},
              {"ok", e.response.ok},
              {"response_digest", util::sha256_hex(e.response.text)},
              {"tokens_in", e.usage.input_tokens},
              {"tokens_out", e.usage.output_tokens}};
    out += j.dump() + "\n";
  }
  out += json{{"decision", decision_core(d)}}.dump() + "\n";
  return out;
}

void write_transcript(const std::filesystem::path& path, const Decision& d) {
  util::write_file_atomic(path, transcript_jsonl(d));
}

json decision_json(const Decision& d, const tkg::Graph& g) {
  json j = decision_core(d);
  const auto* p = d.predicted_bic ? g.commit(*d.predicted_bic) : nullptr;
  j["kind"] = p ? json(tkg::to_string(p->kind)) : json(nullptr);
  j["used_fallback_blame"] = g.bfc_commit().used_fallback;
  return j;
}

} // namespace bicsearch::agent
