#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>

#include "exactrag/pipeline.hpp"

namespace exactrag {

/// Environment variable holding the bearer token for remote providers.
inline constexpr const char* kTokenEnvVar = "EXACTRAG_API_TOKEN";

struct RunConfig {
  std::string graph;
  std::string index;
  std::string model;
  std::string generation_endpoint;
  std::size_t l = 0;  // 0: pick per query / build the default
  std::size_t jobs = 1;
  EngineConfig engine;

  /// Engine settings with the token taken from the environment.
  EngineConfig resolved_engine() const;
};

/// `key = value` lines; '#' starts a comment. Throws ConfigError on a line
/// without '='.
std::map<std::string, std::string> parse_key_values(const std::string& text);

/// Throws ConfigError for unknown keys and malformed or non-positive values.
void apply_setting(RunConfig& cfg, const std::string& key, const std::string& value);

RunConfig load_run_config(const std::filesystem::path& path);

/// Rejects zero caps and dimensions.
void validate(const RunConfig& cfg);

}  // namespace exactrag
