#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <httplib.h>

#include "bicsearch/errors.hpp"
#include "bicsearch/llm.hpp"

#include <algorithm>
#include <cstdlib>
#include <thread>

namespace bicsearch::llm {

using nlohmann::json;

EndpointConfig EndpointConfig::from_env() {
  auto env = [](const char* name) {
    const char* v = std::getenv(name);
    return std::string(v ? v : "");
  };
  EndpointConfig cfg;
  cfg.url = env(kEnvEndpoint);
  cfg.model = env(kEnvModel);
  cfg.api_key = env(kEnvApiKey);
  if (cfg.url.empty()) throw Error(ErrorCode::InvalidArgument, std::string(kEnvEndpoint) + " is not set");
  if (cfg.model.empty()) throw Error(ErrorCode::InvalidArgument, std::string(kEnvModel) + " is not set");
  return cfg;
}

json wire_request(const ChatRequest& req, const std::string& model) {
  json messages = json::array();
  for (const auto& m : req.messages) {
    json j = {{"role", m.role}};
    if (m.tool_call) {
      j["content"] = nullptr;
      j["tool_calls"] = json::array({{{"id", m.tool_call->id},
                                      {"type", "function"},
                                      {"function",
                                       {{"name", m.tool_call->name}, {"arguments", m.tool_call->arguments.dump()}}}}});
    } else {
      j["content"] = m.content;
    }
    if (!m.tool_call_id.empty()) j["tool_call_id"] = m.tool_call_id;
    messages.push_back(std::move(j));
  }
  json body = {{"model", model}, {"messages", std::move(messages)}, {"temperature", req.temperature}};
  if (!req.tools.empty()) {
    json tools = json::array();
    for (const auto& t : req.tools)
      tools.push_back({{"type", "function"},
                       {"function", {{"name", t.name}, {"description", t.description}, {"parameters", t.parameters}}}});
    body["tools"] = std::move(tools);
    body["tool_choice"] = "auto";
  }
  return body;
}

ChatResponse parse_wire_response(std::string_view body) {
  auto bad = [](const std::string& what) { return Error(ErrorCode::MalformedResponse, what); };
  json j;
  try {
    j = json::parse(body);
  } catch (const json::parse_error& e) {
    throw bad(std::string("response is not JSON: ") + e.what());
  }
  try {
    ChatResponse r;
    const auto& msg = j.at("choices").at(0).at("message");
    if (msg.contains("tool_calls") && msg["tool_calls"].is_array() && !msg["tool_calls"].empty()) {
      const auto& tc = msg["tool_calls"][0];
      ToolCall call;
      call.id = tc.value("id", std::string());
      call.name = tc.at("function").at("name").get<std::string>();
      const auto& args = tc.at("function").at("arguments");
      if (args.is_string()) {
        auto text = args.get<std::string>();
        try {
          call.arguments = text.empty() ? json::object() : json::parse(text);
        } catch (const json::parse_error&) {
          throw bad("tool call arguments are not JSON: " + text);
        }
      } else {
        call.arguments = args;
      }
      if (!call.arguments.is_object()) throw bad("tool call arguments must be an object");
      r.tool_call = std::move(call);
    }
    if (msg.contains("content") && msg["content"].is_string()) r.text = msg["content"].get<std::string>();
    if (j.contains("usage") && j["usage"].is_object()) {
      r.usage.input_tokens = j["usage"].value("prompt_tokens", std::int64_t{0});
      r.usage.output_tokens = j["usage"].value("completion_tokens", std::int64_t{0});
    }
    return r;
  } catch (const json::exception& e) {
    throw bad(std::string("unexpected response shape: ") + e.what());
  }
}

HttpChatBackend::HttpChatBackend(EndpointConfig cfg, Sleeper sleeper) : cfg_(std::move(cfg)), sleep_(std::move(sleeper)) {
  if (!sleep_) sleep_ = [](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); };
  auto scheme_end = cfg_.url.find("://");
  if (scheme_end == std::string::npos) throw Error(ErrorCode::InvalidArgument, "endpoint must be an http(s) URL");
  auto path_start = cfg_.url.find('/', scheme_end + 3);
  origin_ = cfg_.url.substr(0, path_start);
  path_ = path_start == std::string::npos ? "" : cfg_.url.substr(path_start);
  while (!path_.empty() && path_.back() == '/') path_.pop_back();
  if (!path_.ends_with("/chat/completions")) path_ += "/chat/completions";
}

std::string HttpChatBackend::identity() const { return "http:" + cfg_.model; }

ChatResponse HttpChatBackend::complete(const ChatRequest& req) {
  const std::string body = wire_request(req, cfg_.model).dump();
  httplib::Headers headers;
  if (!cfg_.api_key.empty()) headers.emplace("Authorization", "Bearer " + cfg_.api_key);

  std::string last_error;
  bool rate_limited = false;
  for (int attempt = 0; attempt <= cfg_.max_retries; ++attempt) {
    if (attempt > 0) {
      auto delay = cfg_.base_backoff * (1LL << std::min(attempt - 1, 20));
      sleep_(std::min<std::chrono::milliseconds>(delay, cfg_.max_backoff));
    }
    httplib::Client cli(origin_);
    cli.set_connection_timeout(std::chrono::seconds(10));
    cli.set_read_timeout(cfg_.timeout);
    cli.set_write_timeout(cfg_.timeout);
    auto res = cli.Post(path_, headers, body, "application/json");
    if (!res) {
      last_error = "transport error: " + httplib::to_string(res.error());
      rate_limited = false;
      continue;
    }
    if (res->status == 401 || res->status == 403)
      throw Error(ErrorCode::AuthFailure, "endpoint rejected credentials (HTTP " + std::to_string(res->status) + ")");
    if (res->status == 429) {
      last_error = "HTTP 429";
      rate_limited = true;
      continue;
    }
    if (res->status >= 500) {
      last_error = "HTTP " + std::to_string(res->status);
      rate_limited = false;
      continue;
    }
    if (res->status != 200)
      throw Error(ErrorCode::PolicyFailure, "HTTP " + std::to_string(res->status) + ": " + res->body.substr(0, 500));
    auto resp = parse_wire_response(res->body);
    check_response(req, resp);
    return resp;
  }
  if (rate_limited) throw Error(ErrorCode::RateLimited, "rate limited after " + std::to_string(cfg_.max_retries) + " retries");
  throw Error(ErrorCode::PolicyFailure, "endpoint unavailable after retries: " + last_error);
}

} // namespace bicsearch::llm
