#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace bicsearch::llm {

struct ToolSchema {
  std::string name;
  std::string description;
  nlohmann::json parameters; // JSON schema object

  bool operator==(const ToolSchema&) const = default;
};

struct ToolCall {
  std::string id;
  std::string name;
  nlohmann::json arguments = nlohmann::json::object();

  bool operator==(const ToolCall&) const = default;
};

struct Message {
  std::string role; // system | user | assistant | tool
  std::string content;
  std::optional<ToolCall> tool_call; // assistant turns that called a tool
  std::string tool_call_id;          // tool turns

  bool operator==(const Message&) const = default;
};

struct Usage {
  std::int64_t input_tokens = 0;
  std::int64_t output_tokens = 0;

  Usage& operator+=(const Usage& o) {
    input_tokens += o.input_tokens;
    output_tokens += o.output_tokens;
    return *this;
  }
  bool operator==(const Usage&) const = default;
};

struct ChatRequest {
  std::vector<Message> messages;
  std::vector<ToolSchema> tools;
  double temperature = 0.0;
};

struct ChatResponse {
  std::optional<ToolCall> tool_call;
  std::string text;
  Usage usage;

  bool operator==(const ChatResponse&) const = default;
};

// Digest over whitespace-normalized message content and the declared tool
// names; stable across formatting-only differences.
std::string request_digest(const ChatRequest& req);

// Throws MalformedResponse when the response calls a tool the request did
// not declare.
void check_response(const ChatRequest& req, const ChatResponse& resp);

nlohmann::json to_json(const ChatResponse& r);
ChatResponse response_from_json(const nlohmann::json& j);

class ChatBackend {
public:
  virtual ~ChatBackend() = default;
  virtual ChatResponse complete(const ChatRequest& req) = 0;
  // Stable description of what answers requests (model, cassette digest, ...).
  virtual std::string identity() const = 0;
};

// ----------------------------------------------------------------------------
// HTTP chat-completions backend
// ----------------------------------------------------------------------------

struct EndpointConfig {
  std::string url; // base URL (".../v1") or the full chat/completions URL
  std::string model;
  std::string api_key;
  int max_retries = 4;
  std::chrono::milliseconds base_backoff{500};
  std::chrono::milliseconds max_backoff{8000};
  std::chrono::seconds timeout{120};

  // Reads BICSEARCH_LLM_ENDPOINT, BICSEARCH_LLM_MODEL and BICSEARCH_LLM_API_KEY.
  // Throws InvalidArgument when the endpoint or model is unset.
  static EndpointConfig from_env();
};

inline constexpr const char* kEnvEndpoint = "BICSEARCH_LLM_ENDPOINT";
inline constexpr const char* kEnvModel = "BICSEARCH_LLM_MODEL";
inline constexpr const char* kEnvApiKey = "BICSEARCH_LLM_API_KEY";

// Request body in the chat-completions tool-calling dialect.
nlohmann::json wire_request(const ChatRequest& req, const std::string& model);
// Parses a chat-completions response body. Throws MalformedResponse.
ChatResponse parse_wire_response(std::string_view body);

// Safe to share across threads; each call opens its own connection.
class HttpChatBackend : public ChatBackend {
public:
  using Sleeper = std::function<void(std::chrono::milliseconds)>;

  explicit HttpChatBackend(EndpointConfig cfg, Sleeper sleeper = {});
  ChatResponse complete(const ChatRequest& req) override;
  std::string identity() const override;

private:
  EndpointConfig cfg_;
  Sleeper sleep_;
  std::string origin_; // scheme://host[:port]
  std::string path_;
};

// ----------------------------------------------------------------------------
// Cassettes
// ----------------------------------------------------------------------------

class Cassette {
public:
  Cassette() = default;
  Cassette(const Cassette& o);
  Cassette& operator=(const Cassette& o);

  void put(const std::string& digest, const ChatResponse& resp); // first write wins
  std::optional<ChatResponse> get(const std::string& digest) const;
  std::size_t size() const;

  std::string serialize() const; // byte-stable: entries sorted by digest
  static Cassette parse(std::string_view text); // throws MalformedDocument
  static Cassette load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;

  bool operator==(const Cassette& o) const;

private:
  mutable std::mutex mu_;
  std::map<std::string, ChatResponse> entries_;
};

// Forwards to `inner` and stores each exchange in `cassette`.
class RecordingBackend : public ChatBackend {
public:
  RecordingBackend(ChatBackend& inner, Cassette& cassette) : inner_(inner), cassette_(cassette) {}
  ChatResponse complete(const ChatRequest& req) override;
  std::string identity() const override { return inner_.identity(); }

private:
  ChatBackend& inner_;
  Cassette& cassette_;
};

// Answers only recorded requests; anything else raises CassetteMiss.
class ReplayBackend : public ChatBackend {
public:
  explicit ReplayBackend(Cassette cassette);
  ChatResponse complete(const ChatRequest& req) override;
  std::string identity() const override { return identity_; }

private:
  Cassette cassette_;
  std::string identity_;
};

} // namespace bicsearch::llm
