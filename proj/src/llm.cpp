#include "bicsearch/llm.hpp"

#include "bicsearch/errors.hpp"
#include "bicsearch/util.hpp"

namespace bicsearch::llm {

using nlohmann::json;

std::string request_digest(const ChatRequest& req) {
  std::string canon;
  for (const auto& t : req.tools) canon += "tool:" + t.name + "\n";
  for (const auto& m : req.messages) {
    canon += "role:" + m.role + "\n";
    canon += util::normalize_whitespace(m.content) + "\n";
    if (m.tool_call) canon += "call:" + m.tool_call->name + " " + m.tool_call->arguments.dump() + "\n";
    if (!m.tool_call_id.empty()) canon += "reply:" + m.tool_call_id + "\n";
  }
  return util::sha256_hex(canon);
}

void check_response(const ChatRequest& req, const ChatResponse& resp) {
  if (!resp.tool_call) return;
  for (const auto& t : req.tools)
    if (t.name == resp.tool_call->name) return;
  throw Error(ErrorCode::MalformedResponse, "response calls undeclared tool '" + resp.tool_call->name + "'");
}

json to_json(const ChatResponse& r) {
  json j = {{"text", r.text},
            {"usage", {{"input_tokens", r.usage.input_tokens}, {"output_tokens", r.usage.output_tokens}}}};
  if (r.tool_call)
    j["tool_call"] = {{"id", r.tool_call->id}, {"name", r.tool_call->name}, {"arguments", r.tool_call->arguments}};
  else
    j["tool_call"] = nullptr;
  return j;
}

ChatResponse response_from_json(const json& j) {
  try {
    ChatResponse r;
    r.text = j.at("text").get<std::string>();
    r.usage.input_tokens = j.at("usage").at("input_tokens").get<std::int64_t>();
    r.usage.output_tokens = j.at("usage").at("output_tokens").get<std::int64_t>();
    const auto& tc = j.at("tool_call");
    if (!tc.is_null())
      r.tool_call = ToolCall{tc.at("id").get<std::string>(), tc.at("name").get<std::string>(), tc.at("arguments")};
    return r;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::MalformedDocument, std::string("bad recorded response: ") + e.what());
  }
}

// ============================================================================
// Cassette
// ============================================================================

Cassette::Cassette(const Cassette& o) {
  std::lock_guard lk(o.mu_);
  entries_ = o.entries_;
}

Cassette& Cassette::operator=(const Cassette& o) {
  if (this == &o) return *this;
  std::scoped_lock lk(mu_, o.mu_);
  entries_ = o.entries_;
  return *this;
}

void Cassette::put(const std::string& digest, const ChatResponse& resp) {
  std::lock_guard lk(mu_);
  entries_.emplace(digest, resp);
}

std::optional<ChatResponse> Cassette::get(const std::string& digest) const {
  std::lock_guard lk(mu_);
  auto it = entries_.find(digest);
  if (it == entries_.end()) return std::nullopt;
  return it->second;
}

std::size_t Cassette::size() const {
  std::lock_guard lk(mu_);
  return entries_.size();
}

bool Cassette::operator==(const Cassette& o) const {
  if (this == &o) return true;
  std::scoped_lock lk(mu_, o.mu_);
  return entries_ == o.entries_;
}

std::string Cassette::serialize() const {
  std::lock_guard lk(mu_);
  json entries = json::array();
  for (const auto& [digest, resp] : entries_) entries.push_back({{"digest", digest}, {"response", to_json(resp)}});
  return json{{"version", 1}, {"entries", entries}}.dump(2) + "\n";
}

Cassette Cassette::parse(std::string_view text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::MalformedDocument, std::string("cassette is not valid JSON: ") + e.what());
  }
  if (!j.is_object() || j.value("version", 0) != 1 || !j.contains("entries") || !j["entries"].is_array())
    throw Error(ErrorCode::MalformedDocument, "cassette lacks version 1 entries");
  Cassette c;
  for (const auto& e : j["entries"]) {
    if (!e.is_object() || !e.contains("digest") || !e["digest"].is_string() || !e.contains("response"))
      throw Error(ErrorCode::MalformedDocument, "cassette entry lacks digest or response");
    c.entries_.emplace(e["digest"].get<std::string>(), response_from_json(e["response"]));
  }
  return c;
}

Cassette Cassette::load(const std::filesystem::path& path) { return parse(util::read_file(path)); }

void Cassette::save(const std::filesystem::path& path) const { util::write_file_atomic(path, serialize()); }

ChatResponse RecordingBackend::complete(const ChatRequest& req) {
  auto resp = inner_.complete(req);
  check_response(req, resp);
  cassette_.put(request_digest(req), resp);
  return resp;
}

ReplayBackend::ReplayBackend(Cassette cassette)
    : cassette_(std::move(cassette)), identity_("cassette:" + util::sha256_hex(cassette_.serialize()).substr(0, 16)) {}

ChatResponse ReplayBackend::complete(const ChatRequest& req) {
  auto digest = request_digest(req);
  auto hit = cassette_.get(digest);
  if (!hit) throw Error(ErrorCode::CassetteMiss, "no recorded response for request " + digest.substr(0, 16));
  check_response(req, *hit);
  return *hit;
}

} // namespace bicsearch::llm
