#include "bicsearch/tkg.hpp"

#include "bicsearch/errors.hpp"
#include "bicsearch/traversal.hpp"

#include <json.hpp>

#include <algorithm>
#include <cctype>
#include <tuple>

namespace bicsearch::tkg {

using nlohmann::json;
using vcs::CommitId;

std::string_view to_string(CommitKind k) {
  switch (k) {
  case CommitKind::Bfc: return "bfc";
  case CommitKind::Blame: return "blame";
  case CommitKind::BlameAncestor: return "blame_ancestor";
  case CommitKind::BfcAncestor: return "bfc_ancestor";
  }
  return "bfc";
}

std::optional<CommitKind> commit_kind_from_string(std::string_view s) {
  for (auto k : {CommitKind::Bfc, CommitKind::Blame, CommitKind::BlameAncestor, CommitKind::BfcAncestor})
    if (to_string(k) == s) return k;
  return std::nullopt;
}

int priority(CommitKind k) { return static_cast<int>(k); }

std::string_view to_string(NodeType t) {
  switch (t) {
  case NodeType::Commit: return "commit";
  case NodeType::File: return "file";
  case NodeType::Function: return "function";
  }
  return "commit";
}

std::string_view to_string(EdgeKind k) {
  switch (k) {
  case EdgeKind::Precedes: return "PRECEDES";
  case EdgeKind::ModifiesFile: return "MODIFIES_FILE";
  case EdgeKind::ModifiesFunction: return "MODIFIES_FUNCTION";
  case EdgeKind::DefinedIn: return "DEFINED_IN";
  }
  return "PRECEDES";
}

// ============================================================================
// Sanitization
// ============================================================================

namespace {

bool word_char(char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_'; }

bool starts_with_ci(std::string_view s, std::string_view prefix) {
  if (s.size() < prefix.size()) return false;
  for (std::size_t i = 0; i < prefix.size(); ++i)
    if (std::tolower(static_cast<unsigned char>(s[i])) != prefix[i]) return false;
  return true;
}

bool is_trailer(std::string_view line) {
  std::size_t i = 0;
  while (i < line.size() && (line[i] == ' ' || line[i] == '\t')) ++i;
  auto rest = line.substr(i);
  return starts_with_ci(rest, "fixes:") || starts_with_ci(rest, "reverts:") ||
         starts_with_ci(rest, "this reverts commit");
}

std::string mask_hex(std::string_view line) {
  std::string out;
  std::size_t i = 0;
  while (i < line.size()) {
    if (!word_char(line[i])) {
      out.push_back(line[i++]);
      continue;
    }
    std::size_t j = i;
    while (j < line.size() && word_char(line[j])) ++j;
    auto word = line.substr(i, j - i);
    bool hex = word.size() >= 7 && word.size() <= 40 &&
               std::all_of(word.begin(), word.end(), [](char c) { return std::isxdigit(static_cast<unsigned char>(c)); });
    out += hex ? std::string_view("<SHA>") : word;
    i = j;
  }
  return out;
}

} // namespace

std::string sanitize_message(std::string_view text) {
  std::string out;
  bool first = true;
  std::size_t pos = 0;
  while (true) {
    auto nl = text.find('\n', pos);
    auto line = text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
    if (!is_trailer(line)) {
      if (!first) out.push_back('\n');
      out += mask_hex(line);
      first = false;
    }
    if (nl == std::string_view::npos) break;
    pos = nl + 1;
  }
  return out;
}

void TkgConfig::validate() const {
  if (max_depth == 0) throw Error(ErrorCode::InvalidArgument, "max_depth must be positive");
  if (candidate_cap == 0) throw Error(ErrorCode::InvalidArgument, "candidate_cap must be positive");
  if (top_k == 0) throw Error(ErrorCode::InvalidArgument, "top_k must be positive");
  if (top_k > candidate_cap) throw Error(ErrorCode::InvalidArgument, "top_k must not exceed candidate_cap");
}

// ============================================================================
// Candidate collection
// ============================================================================

CandidateSet collect_candidates(const vcs::Repository& repo, const CommitId& bfc, const blame::BlameSet& blame_set,
                                const TkgConfig& cfg) {
  cfg.validate();
  CandidateSet out;
  const auto fix_time = repo.read_commit(bfc).commit_time;
  out.commits[bfc] = {CommitKind::Bfc, 0};
  auto newer = [&](const CommitId& id) { return repo.read_commit(id).commit_time > fix_time; };

  std::vector<std::pair<CommitId, std::int64_t>> origins(blame_set.per_origin_counts.begin(),
                                                         blame_set.per_origin_counts.end());
  std::stable_sort(origins.begin(), origins.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
  std::size_t admitted = 0;
  for (const auto& [id, n] : origins) {
    if (id == bfc) continue;
    if (newer(id)) {
      ++out.dropped_newer;
    } else if (admitted < cfg.candidate_cap) {
      out.commits[id] = {CommitKind::Blame, 0};
      ++admitted;
    } else {
      ++out.dropped_cap;
    }
  }

  struct Qualified {
    Label label;
    std::size_t source = 0;
  };
  std::map<CommitId, Qualified> best;
  std::size_t source_index = 0;
  auto visit = [&](const traversal::Source& src, CommitKind kind) {
    std::size_t idx = source_index++;
    std::vector<traversal::Step> steps;
    try {
      steps = traversal::walk(repo, src, cfg.max_depth);
    } catch (const Error& e) {
      out.errors.push_back(src.start.abbrev() + ":" + src.path + ": " + e.what());
      return;
    }
    for (const auto& s : steps) {
      if (s.commit == bfc || blame_set.per_origin_counts.count(s.commit)) continue;
      auto key = std::make_tuple(priority(kind), s.depth, idx);
      auto it = best.find(s.commit);
      if (it == best.end() ||
          key < std::make_tuple(priority(it->second.label.kind), it->second.label.depth, it->second.source))
        best[s.commit] = {{kind, s.depth}, idx};
    }
  };
  for (const auto& src : traversal::blame_ancestor_sources(repo, bfc, blame_set)) visit(src, CommitKind::BlameAncestor);
  for (const auto& src : traversal::bfc_ancestor_sources(repo, bfc)) visit(src, CommitKind::BfcAncestor);

  std::vector<std::pair<CommitId, Qualified>> ordered;
  for (const auto& [id, q] : best) {
    if (newer(id)) ++out.dropped_newer;
    else ordered.emplace_back(id, q);
  }
  // Rounds of increasing depth; blame-ancestor sources lead within a round.
  std::sort(ordered.begin(), ordered.end(), [](const auto& a, const auto& b) {
    return std::make_tuple(a.second.label.depth, priority(a.second.label.kind), a.second.source, a.first) <
           std::make_tuple(b.second.label.depth, priority(b.second.label.kind), b.second.source, b.first);
  });
  for (const auto& [id, q] : ordered) {
    if (admitted < cfg.candidate_cap) {
      out.commits[id] = q.label;
      ++admitted;
    } else {
      ++out.dropped_cap;
    }
  }
  return out;
}

// ============================================================================
// Graph
// ============================================================================

std::string commit_node_id(const CommitId& id) { return "commit:" + id.str(); }
std::string file_node_id(std::string_view path) { return "file:" + std::string(path); }
std::string function_node_id(std::string_view path, std::string_view name) {
  return "function:" + std::string(path) + "#" + std::string(name);
}

std::optional<std::string> function_name(std::string_view ctx) {
  auto paren = ctx.find('(');
  if (paren != std::string_view::npos) ctx = ctx.substr(0, paren);
  while (!ctx.empty() && !word_char(ctx.back())) ctx.remove_suffix(1);
  std::size_t start = ctx.size();
  while (start > 0 && word_char(ctx[start - 1])) --start;
  auto name = ctx.substr(start);
  if (name.empty() || std::isdigit(static_cast<unsigned char>(name.front()))) return std::nullopt;
  return std::string(name);
}

Graph::Graph(CommitId bfc, TkgConfig cfg, std::vector<Node> nodes, std::vector<Edge> edges)
    : bfc_(std::move(bfc)), config_(cfg), edges_(std::move(edges)) {
  for (auto& n : nodes) {
    auto id = n.id;
    nodes_.emplace(std::move(id), std::move(n));
  }
  std::sort(edges_.begin(), edges_.end());
  edges_.erase(std::unique(edges_.begin(), edges_.end()), edges_.end());
  for (const auto& e : edges_)
    if (e.kind == EdgeKind::ModifiesFile || e.kind == EdgeKind::ModifiesFunction) out_[e.from].insert(e.to);
}

const Node* Graph::find(std::string_view node_id) const {
  auto it = nodes_.find(std::string(node_id));
  return it == nodes_.end() ? nullptr : &it->second;
}

const CommitPayload* Graph::commit(const CommitId& id) const {
  const Node* n = find(commit_node_id(id));
  return n && n->commit ? &*n->commit : nullptr;
}

const CommitPayload& Graph::bfc_commit() const {
  const auto* p = commit(bfc_);
  if (!p) throw Error(ErrorCode::UnknownNode, "graph has no bfc node");
  return *p;
}

CommitId Graph::resolve(std::string_view sha) const {
  std::string s(sha);
  for (char& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  if (s.size() < 7 || s.size() > 40 || !std::all_of(s.begin(), s.end(), [](char c) {
        return std::isxdigit(static_cast<unsigned char>(c));
      }))
    throw Error(ErrorCode::UnknownNode, "not a commit id or 7+ character prefix: " + std::string(sha));
  std::optional<CommitId> hit;
  for (auto it = nodes_.lower_bound("commit:" + s); it != nodes_.end(); ++it) {
    if (!it->first.starts_with("commit:" + s)) break;
    if (hit) throw Error(ErrorCode::UnknownNode, "ambiguous commit prefix: " + std::string(sha));
    hit = it->second.commit->id;
  }
  if (!hit) throw Error(ErrorCode::UnknownNode, "no commit node matches " + std::string(sha));
  return *hit;
}

std::vector<const CommitPayload*> Graph::chronological() const {
  std::vector<const CommitPayload*> out;
  for (const auto& [id, n] : nodes_)
    if (n.commit) out.push_back(&*n.commit);
  std::sort(out.begin(), out.end(), [](const auto* a, const auto* b) {
    return std::tie(a->commit_time, a->id) < std::tie(b->commit_time, b->id);
  });
  return out;
}

std::set<std::string> Graph::files_of(const CommitId& id) const {
  std::set<std::string> out;
  auto it = out_.find(commit_node_id(id));
  if (it == out_.end()) return out;
  for (const auto& to : it->second) {
    const Node* n = find(to);
    if (n && n->type == NodeType::File) out.insert(n->path);
  }
  return out;
}

std::set<std::string> Graph::functions_of(const CommitId& id) const {
  std::set<std::string> out;
  auto it = out_.find(commit_node_id(id));
  if (it == out_.end()) return out;
  for (const auto& to : it->second)
    if (to.starts_with("function:")) out.insert(to);
  return out;
}

std::size_t Graph::commit_count() const {
  return static_cast<std::size_t>(
      std::count_if(nodes_.begin(), nodes_.end(), [](const auto& kv) { return kv.second.type == NodeType::Commit; }));
}

Graph build_graph(const vcs::Repository& repo, const CommitId& bfc, const CandidateSet& candidates,
                  const blame::BlameSet& blame_set, const TkgConfig& cfg) {
  std::vector<Node> nodes;
  std::vector<Edge> edges;
  std::set<std::string> seen;
  auto add_node = [&](Node n) {
    if (seen.insert(n.id).second) nodes.push_back(std::move(n));
  };

  for (const auto& [id, label] : candidates.commits) {
    const auto& rec = repo.read_commit(id);
    CommitPayload p;
    p.id = id;
    p.author_time = rec.author_time;
    p.commit_time = rec.commit_time;
    p.message = cfg.sanitize ? sanitize_message(rec.message_raw) : rec.message_raw;
    p.parents = rec.parents;
    p.kind = label.kind;
    p.depth = label.depth;
    p.diff = repo.compute_diff(id);
    if (id == bfc) {
      p.blame_stats = blame::compute_blame_stats(blame_set);
      p.used_fallback = blame_set.used_fallback;
    }
    std::string cid = commit_node_id(id);
    for (const auto& fc : p.diff) {
      const auto& path = fc.path();
      add_node({file_node_id(path), NodeType::File, std::nullopt, path, ""});
      edges.push_back({EdgeKind::ModifiesFile, cid, file_node_id(path)});
      for (const auto& h : fc.hunks) {
        auto name = function_name(h.header_context);
        if (!name) continue;
        auto fid = function_node_id(path, *name);
        add_node({fid, NodeType::Function, std::nullopt, path, *name});
        edges.push_back({EdgeKind::ModifiesFunction, cid, fid});
        edges.push_back({EdgeKind::DefinedIn, fid, file_node_id(path)});
      }
    }
    add_node({cid, NodeType::Commit, std::move(p), "", ""});
  }

  std::vector<std::pair<std::int64_t, CommitId>> order;
  for (const auto& n : nodes)
    if (n.commit) order.emplace_back(n.commit->commit_time, n.commit->id);
  std::sort(order.begin(), order.end());
  for (std::size_t i = 1; i < order.size(); ++i)
    edges.push_back({EdgeKind::Precedes, commit_node_id(order[i - 1].second), commit_node_id(order[i].second)});

  return Graph(bfc, cfg, std::move(nodes), std::move(edges));
}

BuildResult build_for_fix(const vcs::Repository& repo, const CommitId& bfc, const TkgConfig& cfg) {
  cfg.validate();
  auto bs = blame::blame_for_fix(repo, bfc);
  auto cands = collect_candidates(repo, bfc, bs, cfg);
  auto g = build_graph(repo, bfc, cands, bs, cfg);
  return {std::move(g), std::move(bs), std::move(cands)};
}

std::vector<CommitId> neighbors(const Graph& g, std::string_view sha, const std::set<EdgeKind>& kinds) {
  auto self = g.resolve(sha);
  auto my_files = g.files_of(self);
  auto my_funcs = g.functions_of(self);
  bool use_funcs = kinds.count(EdgeKind::ModifiesFunction) > 0;
  bool use_files = kinds.count(EdgeKind::ModifiesFile) > 0;

  auto intersects = [](const std::set<std::string>& a, const std::set<std::string>& b) {
    for (const auto& x : a)
      if (b.count(x)) return true;
    return false;
  };

  struct Hit {
    int group;
    const CommitPayload* c;
  };
  std::vector<Hit> hits;
  for (const auto& [id, n] : g.nodes()) {
    if (!n.commit || n.commit->id == self || n.commit->id == g.bfc()) continue;
    if (use_funcs && intersects(my_funcs, g.functions_of(n.commit->id))) hits.push_back({0, &*n.commit});
    else if (use_files && intersects(my_files, g.files_of(n.commit->id))) hits.push_back({1, &*n.commit});
  }
  std::sort(hits.begin(), hits.end(), [](const Hit& a, const Hit& b) {
    return std::make_tuple(a.group, priority(a.c->kind), -a.c->commit_time, a.c->id) <
           std::make_tuple(b.group, priority(b.c->kind), -b.c->commit_time, b.c->id);
  });
  std::vector<CommitId> out;
  for (const auto& h : hits) out.push_back(h.c->id);
  return out;
}

// ============================================================================
// Export / import
// ============================================================================

namespace {

json stats_json(const blame::BlameStats& s) {
  return {{"total_blame_commits", s.total_blame_commits},
          {"blamed_lines", s.blamed_lines},
          {"single_responsible", s.single_responsible},
          {"dominant_commit", s.dominant_commit ? json(s.dominant_commit->str()) : json(nullptr)},
          {"dominant_fraction", s.dominant_fraction}};
}

[[noreturn]] void malformed(const std::string& what) { throw Error(ErrorCode::MalformedDocument, what); }

const json& field(const json& obj, const char* key) {
  if (!obj.is_object() || !obj.contains(key)) malformed(std::string("missing field ") + key);
  return obj.at(key);
}

std::string str_field(const json& obj, const char* key) {
  const auto& v = field(obj, key);
  if (!v.is_string()) malformed(std::string(key) + " must be a string");
  return v.get<std::string>();
}

std::int64_t int_field(const json& obj, const char* key) {
  const auto& v = field(obj, key);
  if (!v.is_number_integer()) malformed(std::string(key) + " must be an integer");
  return v.get<std::int64_t>();
}

std::size_t size_field(const json& obj, const char* key) {
  auto v = int_field(obj, key);
  if (v < 0) malformed(std::string(key) + " must be nonnegative");
  return static_cast<std::size_t>(v);
}

CommitId id_field(const json& obj, const char* key) {
  auto s = str_field(obj, key);
  if (!CommitId::valid(s)) malformed(std::string(key) + " is not a commit id");
  return CommitId::parse(s);
}

} // namespace

std::string export_graph(const Graph& g) {
  json nodes = json::array();
  for (const auto& [id, n] : g.nodes()) {
    json j = {{"id", n.id}, {"type", to_string(n.type)}};
    if (n.commit) {
      const auto& c = *n.commit;
      json parents = json::array();
      for (const auto& p : c.parents) parents.push_back(p.str());
      j["sha"] = c.id.str();
      j["author_time"] = c.author_time;
      j["commit_time"] = c.commit_time;
      j["message"] = c.message;
      j["parents"] = parents;
      j["kind"] = to_string(c.kind);
      j["depth"] = c.depth;
      j["diff"] = vcs::render_diff(c.diff);
      if (c.blame_stats) j["blame_stats"] = stats_json(*c.blame_stats);
      if (c.used_fallback) j["used_fallback"] = true;
    } else {
      j["path"] = n.path;
      if (n.type == NodeType::Function) j["name"] = n.name;
    }
    nodes.push_back(std::move(j));
  }
  json edges = json::array();
  for (const auto& e : g.edges()) edges.push_back({{"kind", to_string(e.kind)}, {"from", e.from}, {"to", e.to}});
  const auto& cfg = g.config();
  json doc = {{"schema_version", kSchemaVersion},
              {"bfc", g.bfc().str()},
              {"config",
               {{"max_depth", cfg.max_depth},
                {"candidate_cap", cfg.candidate_cap},
                {"top_k", cfg.top_k},
                {"sanitize", cfg.sanitize}}},
              {"nodes", std::move(nodes)},
              {"edges", std::move(edges)}};
  return doc.dump(2) + "\n";
}

Graph import_graph(std::string_view document) {
  json doc;
  try {
    doc = json::parse(document);
  } catch (const json::parse_error& e) {
    malformed(std::string("graph document is not valid JSON: ") + e.what());
  }
  if (!doc.is_object()) malformed("graph document must be an object");
  if (int_field(doc, "schema_version") != kSchemaVersion) malformed("unsupported schema_version");
  auto bfc = id_field(doc, "bfc");

  TkgConfig cfg;
  const auto& jc = field(doc, "config");
  cfg.max_depth = size_field(jc, "max_depth");
  cfg.candidate_cap = size_field(jc, "candidate_cap");
  cfg.top_k = size_field(jc, "top_k");
  if (jc.contains("sanitize")) {
    if (!jc["sanitize"].is_boolean()) malformed("sanitize must be a boolean");
    cfg.sanitize = jc["sanitize"].get<bool>();
  }

  const auto& jn = field(doc, "nodes");
  const auto& je = field(doc, "edges");
  if (!jn.is_array() || !je.is_array()) malformed("nodes and edges must be arrays");

  std::vector<Node> nodes;
  std::set<std::string> ids;
  std::size_t bfc_nodes = 0;
  for (const auto& j : jn) {
    Node n;
    n.id = str_field(j, "id");
    auto type = str_field(j, "type");
    if (type == "commit") {
      n.type = NodeType::Commit;
      CommitPayload c;
      c.id = id_field(j, "sha");
      c.author_time = int_field(j, "author_time");
      c.commit_time = int_field(j, "commit_time");
      c.message = str_field(j, "message");
      const auto& parents = field(j, "parents");
      if (!parents.is_array()) malformed("parents must be an array");
      for (const auto& p : parents) {
        if (!p.is_string() || !CommitId::valid(p.get<std::string>())) malformed("bad parent id");
        c.parents.push_back(CommitId::parse(p.get<std::string>()));
      }
      auto kind = commit_kind_from_string(str_field(j, "kind"));
      if (!kind) malformed("unknown commit kind");
      c.kind = *kind;
      c.depth = size_field(j, "depth");
      try {
        c.diff = vcs::parse_unified_diff(str_field(j, "diff"));
      } catch (const Error& e) {
        malformed(std::string("bad diff in ") + n.id + ": " + e.what());
      }
      if (j.contains("blame_stats")) {
        const auto& s = j["blame_stats"];
        blame::BlameStats st;
        st.total_blame_commits = int_field(s, "total_blame_commits");
        st.blamed_lines = int_field(s, "blamed_lines");
        const auto& single = field(s, "single_responsible");
        if (!single.is_boolean()) malformed("single_responsible must be a boolean");
        st.single_responsible = single.get<bool>();
        const auto& dom = field(s, "dominant_commit");
        if (!dom.is_null()) st.dominant_commit = id_field(s, "dominant_commit");
        const auto& frac = field(s, "dominant_fraction");
        if (!frac.is_number()) malformed("dominant_fraction must be a number");
        st.dominant_fraction = frac.get<double>();
        c.blame_stats = st;
      }
      if (j.contains("used_fallback")) {
        if (!j["used_fallback"].is_boolean()) malformed("used_fallback must be a boolean");
        c.used_fallback = j["used_fallback"].get<bool>();
      }
      if (n.id != commit_node_id(c.id)) malformed("commit node id does not match sha: " + n.id);
      if (c.kind == CommitKind::Bfc) {
        ++bfc_nodes;
        if (c.id != bfc) malformed("bfc node does not match document bfc");
      }
      n.commit = std::move(c);
    } else if (type == "file") {
      n.type = NodeType::File;
      n.path = str_field(j, "path");
      if (n.id != file_node_id(n.path)) malformed("file node id does not match path: " + n.id);
    } else if (type == "function") {
      n.type = NodeType::Function;
      n.path = str_field(j, "path");
      n.name = str_field(j, "name");
      if (n.name.empty()) malformed("function node without name");
      if (n.id != function_node_id(n.path, n.name)) malformed("function node id mismatch: " + n.id);
    } else {
      malformed("unknown node type " + type);
    }
    if (!ids.insert(n.id).second) malformed("duplicate node " + n.id);
    nodes.push_back(std::move(n));
  }
  if (bfc_nodes != 1) malformed("document must contain exactly one bfc node");

  std::map<std::string, NodeType> types;
  for (const auto& n : nodes) types[n.id] = n.type;
  auto expect = [&](const std::string& id, NodeType t) {
    auto it = types.find(id);
    if (it == types.end()) malformed("edge references unknown node " + id);
    if (it->second != t) malformed("edge endpoint has wrong type: " + id);
  };

  std::vector<Edge> edges;
  for (const auto& j : je) {
    Edge e{EdgeKind::Precedes, str_field(j, "from"), str_field(j, "to")};
    auto kind = str_field(j, "kind");
    if (kind == "PRECEDES") {
      e.kind = EdgeKind::Precedes;
      expect(e.from, NodeType::Commit), expect(e.to, NodeType::Commit);
    } else if (kind == "MODIFIES_FILE") {
      e.kind = EdgeKind::ModifiesFile;
      expect(e.from, NodeType::Commit), expect(e.to, NodeType::File);
    } else if (kind == "MODIFIES_FUNCTION") {
      e.kind = EdgeKind::ModifiesFunction;
      expect(e.from, NodeType::Commit), expect(e.to, NodeType::Function);
    } else if (kind == "DEFINED_IN") {
      e.kind = EdgeKind::DefinedIn;
      expect(e.from, NodeType::Function), expect(e.to, NodeType::File);
    } else {
      malformed("unknown edge kind " + kind);
    }
    edges.push_back(std::move(e));
  }
  return Graph(std::move(bfc), cfg, std::move(nodes), std::move(edges));
}

} // namespace bicsearch::tkg
