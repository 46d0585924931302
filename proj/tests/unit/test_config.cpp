#include <cstdlib>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "exactrag/config.hpp"
#include "exactrag/errors.hpp"

using namespace exactrag;

namespace {

std::filesystem::path write_temp(const std::string& name, const std::string& text) {
  const auto p = std::filesystem::temp_directory_path() / name;
  std::ofstream(p) << text;
  return p;
}

}  // namespace

TEST_CASE("key-value parsing") {
  const auto kv = parse_key_values("# comment\n graph = a.graph \n\nl=2 # trailing\nprovider=mock\n");
  CHECK(kv.size() == 3);
  CHECK(kv.at("graph") == "a.graph");
  CHECK(kv.at("l") == "2");
  CHECK(kv.at("provider") == "mock");
  CHECK_THROWS_AS(parse_key_values("graph a.graph\n"), ConfigError);
  CHECK_THROWS_AS(parse_key_values("= value\n"), ConfigError);
}

TEST_CASE("settings land in the engine config") {
  RunConfig cfg;
  apply_setting(cfg, "F", "12");
  apply_setting(cfg, "d", "6");
  apply_setting(cfg, "seed", "42");
  apply_setting(cfg, "completion_cap", "7");
  apply_setting(cfg, "assembly_cap", "9");
  apply_setting(cfg, "fallback_cap", "5");
  apply_setting(cfg, "substructure_cap", "16");
  apply_setting(cfg, "token_budget", "300");
  apply_setting(cfg, "learning_rate", "0.25");
  apply_setting(cfg, "violation_tolerance", "1e-5");
  apply_setting(cfg, "grad_clip", "2.5");
  apply_setting(cfg, "timeout_ms", "1500");
  apply_setting(cfg, "retries", "0");
  apply_setting(cfg, "normalize_threshold", "0.8");
  apply_setting(cfg, "provider", "count-oracle");
  const auto& e = cfg.engine;
  CHECK(e.provider.F == 12);
  CHECK(e.dominance_dim == 6);
  CHECK(e.train.d == 6);
  CHECK(e.provider.seed == 42);
  CHECK(e.train.seed == 42);
  CHECK(e.completion_cap == 7);
  CHECK(e.match.assembly_cap == 9);
  CHECK(e.match.fallback_cap == 5);
  CHECK(e.train.substructure_cap == 16);
  CHECK(e.token_budget == 300);
  CHECK(e.train.learning_rate == 0.25);
  CHECK(e.train.violation_tolerance == 1e-5);
  CHECK(e.train.grad_clip == 2.5);
  CHECK(e.provider.http.timeout.count() == 1500);
  CHECK(e.provider.http.retries == 0);
  CHECK(*e.normalize_threshold == 0.8);
  CHECK(e.provider.kind == ProviderKind::kCountOracle);
  CHECK_NOTHROW(validate(cfg));
}

TEST_CASE("bad settings are config errors") {
  RunConfig cfg;
  CHECK_THROWS_AS(apply_setting(cfg, "colour", "blue"), ConfigError);
  CHECK_THROWS_AS(apply_setting(cfg, "l", "two"), ConfigError);
  CHECK_THROWS_AS(apply_setting(cfg, "completion_cap", "0"), ConfigError);
  CHECK_THROWS_AS(apply_setting(cfg, "l", "-1"), ConfigError);
  CHECK_THROWS_AS(apply_setting(cfg, "provider", "gpt"), ConfigError);
  CHECK_THROWS_AS(apply_setting(cfg, "learning_rate", "fast"), ConfigError);

  RunConfig remote;
  apply_setting(remote, "provider", "remote");
  CHECK_THROWS_AS(validate(remote), ConfigError);
  apply_setting(remote, "embedding_endpoint", "http://127.0.0.1:9/embed");
  CHECK_NOTHROW(validate(remote));

  RunConfig fan;
  apply_setting(fan, "min_fanout", "9");
  apply_setting(fan, "max_fanout", "16");
  CHECK_THROWS_AS(validate(fan), ConfigError);
}

TEST_CASE("config files") {
  const auto p = write_temp("exactrag_cfg.conf", "graph = g.graph\nindex = g.idx\nl = 2\njobs = 3\n");
  const auto cfg = load_run_config(p);
  CHECK(cfg.graph == "g.graph");
  CHECK(cfg.index == "g.idx");
  CHECK(cfg.l == 2);
  CHECK(cfg.jobs == 3);
  std::filesystem::remove(p);
  CHECK_THROWS_AS(load_run_config("/nonexistent/exactrag.conf"), ConfigError);
  const auto bad = write_temp("exactrag_bad.conf", "F = 0\n");
  CHECK_THROWS_AS(load_run_config(bad), ConfigError);
  std::filesystem::remove(bad);
}

TEST_CASE("bearer token comes from the environment") {
  RunConfig cfg;
  ::setenv(kTokenEnvVar, "secret-token", 1);
  CHECK(cfg.resolved_engine().provider.http.bearer_token == "secret-token");
  ::unsetenv(kTokenEnvVar);
  CHECK(cfg.resolved_engine().provider.http.bearer_token.empty());
}
