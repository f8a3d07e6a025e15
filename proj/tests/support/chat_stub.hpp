#pragma once

#include <atomic>
#include <functional>
#include <string>
#include <utility>

#include "bicsearch/llm.hpp"

namespace fixture {

// Chat backend answering from a function; stands in for a hosted model when
// recording cassettes offline.
class StubChat : public bicsearch::llm::ChatBackend {
public:
  using Fn = std::function<bicsearch::llm::ChatResponse(const bicsearch::llm::ChatRequest&)>;

  explicit StubChat(Fn fn, std::string name = "stub") : fn_(std::move(fn)), name_(std::move(name)) {}

  bicsearch::llm::ChatResponse complete(const bicsearch::llm::ChatRequest& req) override {
    ++calls;
    return fn_(req);
  }
  std::string identity() const override { return name_; }

  std::atomic<int> calls{0};

private:
  Fn fn_;
  std::string name_;
};

inline bicsearch::llm::ChatResponse tool_reply(std::string name, nlohmann::json args, std::int64_t in = 100,
                                               std::int64_t out = 10) {
  bicsearch::llm::ChatResponse r;
  r.tool_call = bicsearch::llm::ToolCall{"call_x", std::move(name), std::move(args)};
  r.usage = {in, out};
  return r;
}

// Number of tool exchanges already present in a request.
inline std::size_t tool_turns(const bicsearch::llm::ChatRequest& req) {
  std::size_t n = 0;
  for (const auto& m : req.messages)
    if (m.role == "tool") ++n;
  return n;
}

} // namespace fixture
