#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "bicsearch/blame.hpp"
#include "bicsearch/vcs.hpp"

namespace bicsearch::tkg {

enum class CommitKind { Bfc, Blame, BlameAncestor, BfcAncestor };

std::string_view to_string(CommitKind k);
std::optional<CommitKind> commit_kind_from_string(std::string_view s);

// Lower is stronger: blame < blame_ancestor < bfc_ancestor. The bfc sorts first.
int priority(CommitKind k);

/// Drops "Fixes:", "Reverts:" and "This reverts commit" lines and replaces
/// standalone 7-40 character hex tokens with "<SHA>".
std::string sanitize_message(std::string_view text);

struct TkgConfig {
  std::size_t max_depth = 100;
  std::size_t candidate_cap = 200;
  std::size_t top_k = 20;
  bool sanitize = true;

  // Throws InvalidArgument unless all limits are positive and top_k <= cap.
  void validate() const;
  bool operator==(const TkgConfig&) const = default;
};

struct Label {
  CommitKind kind = CommitKind::Bfc;
  std::size_t depth = 0; // file-history distance from the labeling start
};

struct CandidateSet {
  std::map<vcs::CommitId, Label> commits; // includes the bfc
  std::vector<std::string> errors;        // per-source vcs failures
  std::size_t dropped_newer = 0;          // candidates committed after the fix
  std::size_t dropped_cap = 0;
};

CandidateSet collect_candidates(const vcs::Repository& repo, const vcs::CommitId& bfc,
                                const blame::BlameSet& blame_set, const TkgConfig& cfg);

// ----------------------------------------------------------------------------
// Graph
// ----------------------------------------------------------------------------

enum class NodeType { Commit, File, Function };
enum class EdgeKind { Precedes, ModifiesFile, ModifiesFunction, DefinedIn };

std::string_view to_string(NodeType t);
std::string_view to_string(EdgeKind k);

struct CommitPayload {
  vcs::CommitId id;
  std::int64_t author_time = 0;
  std::int64_t commit_time = 0;
  std::string message;
  std::vector<vcs::CommitId> parents;
  CommitKind kind = CommitKind::Bfc;
  std::size_t depth = 0;
  std::vector<vcs::FileChange> diff;
  // bfc node only
  std::optional<blame::BlameStats> blame_stats;
  bool used_fallback = false;

  bool operator==(const CommitPayload&) const = default;
};

struct Node {
  std::string id;
  NodeType type = NodeType::Commit;
  std::optional<CommitPayload> commit;
  std::string path; // File and Function
  std::string name; // Function

  bool operator==(const Node&) const = default;
};

struct Edge {
  EdgeKind kind = EdgeKind::Precedes;
  std::string from;
  std::string to;

  auto operator<=>(const Edge&) const = default;
};

std::string commit_node_id(const vcs::CommitId& id);
std::string file_node_id(std::string_view path);
std::string function_node_id(std::string_view path, std::string_view name);

/// Function name from a hunk header trailer: text before the first '(',
/// trailing punctuation removed, last identifier kept.
std::optional<std::string> function_name(std::string_view header_context);

// Immutable after construction; safe for concurrent readers.
class Graph {
public:
  Graph() = default;
  Graph(vcs::CommitId bfc, TkgConfig cfg, std::vector<Node> nodes, std::vector<Edge> edges);

  const vcs::CommitId& bfc() const noexcept { return bfc_; }
  const TkgConfig& config() const noexcept { return config_; }
  const std::map<std::string, Node>& nodes() const noexcept { return nodes_; }
  // Sorted and deduplicated.
  const std::vector<Edge>& edges() const noexcept { return edges_; }

  const Node* find(std::string_view node_id) const;
  const CommitPayload* commit(const vcs::CommitId& id) const;
  const CommitPayload& bfc_commit() const;

  // Full id or a unique prefix of at least 7 characters. Throws UnknownNode.
  vcs::CommitId resolve(std::string_view sha) const;

  // Commit payloads ordered by (commit_time, id).
  std::vector<const CommitPayload*> chronological() const;

  std::set<std::string> files_of(const vcs::CommitId& id) const;
  // Function node ids modified by the commit.
  std::set<std::string> functions_of(const vcs::CommitId& id) const;

  std::size_t commit_count() const;

  bool operator==(const Graph& o) const {
    return bfc_ == o.bfc_ && config_ == o.config_ && nodes_ == o.nodes_ && edges_ == o.edges_;
  }

private:
  vcs::CommitId bfc_;
  TkgConfig config_;
  std::map<std::string, Node> nodes_;
  std::vector<Edge> edges_;
  std::map<std::string, std::set<std::string>> out_; // from -> to, modification edges only
};

Graph build_graph(const vcs::Repository& repo, const vcs::CommitId& bfc, const CandidateSet& candidates,
                  const blame::BlameSet& blame_set, const TkgConfig& cfg);

struct BuildResult {
  Graph graph;
  blame::BlameSet blame_set;
  CandidateSet candidates;
};

// blame_for_fix, collect_candidates and build_graph in sequence.
BuildResult build_for_fix(const vcs::Repository& repo, const vcs::CommitId& bfc, const TkgConfig& cfg);

/// Commits sharing a function with `sha`, then commits sharing only a file.
/// Each group is ordered blame, blame_ancestor, bfc_ancestor, then newest
/// first. The bfc and `sha` itself are excluded.
std::vector<vcs::CommitId> neighbors(const Graph& g, std::string_view sha,
                                     const std::set<EdgeKind>& kinds = {EdgeKind::ModifiesFunction,
                                                                        EdgeKind::ModifiesFile});

inline constexpr int kSchemaVersion = 1;

std::string export_graph(const Graph& g);
// Throws MalformedDocument.
Graph import_graph(std::string_view document);

} // namespace bicsearch::tkg
