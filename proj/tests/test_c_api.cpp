#include <doctest.h>

#include "bicsearch/bicsearch.h"
#include "scenarios.hpp"

#include <json.hpp>

#include <memory>
#include <string>

using nlohmann::json;

namespace {

std::string take(char* p) {
  std::string s = p ? p : "";
  bics_string_free(p);
  return s;
}

} // namespace

TEST_CASE("C API: status names and errors") {
  CHECK(std::string(bics_status_name(BICS_OK)) == "Ok");
  CHECK(std::string(bics_status_name(BICS_UNKNOWN_COMMIT)) == "UnknownCommit");
  CHECK(std::string(bics_status_name(BICS_INTERNAL)) == "Internal");
  CHECK(std::string(bics_version()) == "0.1.0");

  bics_config* cfg = nullptr;
  REQUIRE(bics_config_new(&cfg) == BICS_OK);
  CHECK(bics_config_set(cfg, "top_k", "5") == BICS_OK);
  CHECK(std::string(bics_last_error()).empty());
  CHECK(bics_config_set(cfg, "top_k", "-1") == BICS_INVALID_ARGUMENT);
  CHECK(bics_config_set(cfg, "api_key", "sk-1") == BICS_INVALID_ARGUMENT);
  CHECK(std::string(bics_last_error()).find("unknown config key") != std::string::npos);
  CHECK(bics_config_set(cfg, "policy", "oracle") == BICS_INVALID_ARGUMENT);
  CHECK(bics_config_set(nullptr, "top_k", "1") == BICS_INVALID_ARGUMENT);

  char* described = nullptr;
  REQUIRE(bics_config_describe(cfg, &described) == BICS_OK);
  auto j = json::parse(take(described));
  CHECK(j["config"]["tkg"]["top_k"] == 5);
  CHECK(j["digest"].get<std::string>().size() == 64);
  bics_config_free(cfg);

  bics_repo* repo = nullptr;
  CHECK(bics_repo_open("/nonexistent/place", &repo) == BICS_REPO_ACCESS);
  CHECK(repo == nullptr);

  char* clean = nullptr;
  REQUIRE(bics_sanitize_message("fix\nFixes: 1234567abc (\"x\")\nsee deadbeef0\n", &clean) == BICS_OK);
  CHECK(take(clean) == "fix\nsee <SHA>\n");
}

TEST_CASE("C API: identify and graph export") {
  auto sc = fixture::blame_scenario();
  bics_config* cfg = nullptr;
  REQUIRE(bics_config_new(&cfg) == BICS_OK);
  bics_repo* repo = nullptr;
  REQUIRE(bics_repo_open(sc.repo.path().c_str(), &repo) == BICS_OK);

  char* out = nullptr;
  auto bfc = sc.repo.id(sc.bfc).str();
  REQUIRE(bics_identify(repo, bfc.c_str(), cfg, nullptr, &out) == BICS_OK);
  auto j = json::parse(take(out));
  CHECK(j["predicted_bic"] == sc.repo.id(sc.bic).str());
  CHECK(j["kind"] == "blame");
  CHECK(j["steps_used"] == 1);
  CHECK(j["policy"] == "deterministic");

  CHECK(bics_identify(repo, "0123456789abcdef", cfg, nullptr, &out) == BICS_UNKNOWN_COMMIT);
  CHECK(std::string(bics_last_error()).find("UnknownCommit") == 0);

  REQUIRE(bics_graph_export(repo, bfc.substr(0, 10).c_str(), cfg, &out) == BICS_OK);
  auto g = json::parse(take(out));
  CHECK(g["schema_version"] == 1);

  REQUIRE(bics_config_set(cfg, "policy", "replay") == BICS_OK);
  CHECK(bics_identify(repo, bfc.c_str(), cfg, nullptr, &out) == BICS_INVALID_ARGUMENT);
  REQUIRE(bics_config_set(cfg, "cassette", "/nonexistent/cassette.json") == BICS_OK);
  CHECK(bics_identify(repo, bfc.c_str(), cfg, nullptr, &out) != BICS_OK);

  bics_repo_close(repo);
  bics_config_free(cfg);
}
