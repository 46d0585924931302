#include "exactrag/config.hpp"

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "exactrag/errors.hpp"

namespace exactrag {
namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  return s.substr(b, s.find_last_not_of(" \t\r\n") - b + 1);
}

std::uint64_t to_u64(const std::string& key, const std::string& value) {
  try {
    std::size_t pos = 0;
    if (!value.empty() && value[0] == '-') throw std::invalid_argument("negative");
    const auto v = std::stoull(value, &pos);
    if (pos != value.size()) throw std::invalid_argument("trailing");
    return v;
  } catch (const std::exception&) {
    throw ConfigError("setting '" + key + "' expects a non-negative integer, got '" + value + "'");
  }
}

std::size_t positive(const std::string& key, const std::string& value) {
  const auto v = to_u64(key, value);
  if (v == 0) throw ConfigError("setting '" + key + "' must be positive");
  return static_cast<std::size_t>(v);
}

double to_double(const std::string& key, const std::string& value) {
  try {
    std::size_t pos = 0;
    const double v = std::stod(value, &pos);
    if (pos != value.size()) throw std::invalid_argument("trailing");
    return v;
  } catch (const std::exception&) {
    throw ConfigError("setting '" + key + "' expects a number, got '" + value + "'");
  }
}

}  // namespace

EngineConfig RunConfig::resolved_engine() const {
  EngineConfig e = engine;
  if (e.provider.http.bearer_token.empty()) {
    if (const char* tok = std::getenv(kTokenEnvVar)) e.provider.http.bearer_token = tok;
  }
  return e;
}

std::map<std::string, std::string> parse_key_values(const std::string& text) {
  std::map<std::string, std::string> out;
  std::istringstream in(text);
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("config line " + std::to_string(n) + " has no '='");
    const auto key = trim(line.substr(0, eq));
    if (key.empty()) throw ConfigError("config line " + std::to_string(n) + " has an empty key");
    out[key] = trim(line.substr(eq + 1));
  }
  return out;
}

void apply_setting(RunConfig& cfg, const std::string& key, const std::string& value) {
  auto& e = cfg.engine;
  if (key == "graph") cfg.graph = value;
  else if (key == "index") cfg.index = value;
  else if (key == "model") cfg.model = value;
  else if (key == "provider") {
    try {
      e.provider.kind = provider_kind_from_string(value);
    } catch (const Error& err) {
      throw ConfigError(err.what());
    }
  }
  else if (key == "embedding_endpoint") e.provider.endpoint = value;
  else if (key == "generation_endpoint") cfg.generation_endpoint = value;
  else if (key == "F") e.provider.F = positive(key, value);
  else if (key == "d") e.dominance_dim = e.train.d = positive(key, value);
  else if (key == "hidden_dim") e.train.F_hidden = positive(key, value);
  else if (key == "l") cfg.l = positive(key, value);
  else if (key == "seed") e.provider.seed = e.train.seed = to_u64(key, value);
  else if (key == "jobs") cfg.jobs = positive(key, value);
  else if (key == "token_budget") e.token_budget = positive(key, value);
  else if (key == "completion_cap") e.completion_cap = positive(key, value);
  else if (key == "assembly_cap") e.match.assembly_cap = positive(key, value);
  else if (key == "fallback_cap") e.match.fallback_cap = positive(key, value);
  else if (key == "substructure_cap") e.train.substructure_cap = positive(key, value);
  else if (key == "learning_rate") e.train.learning_rate = to_double(key, value);
  else if (key == "max_epochs") e.train.max_epochs = positive(key, value);
  else if (key == "batch_size") e.train.batch_size = positive(key, value);
  else if (key == "tolerance") e.train.tolerance = to_double(key, value);
  else if (key == "violation_tolerance") e.train.violation_tolerance = to_double(key, value);
  else if (key == "grad_clip") e.train.grad_clip = to_double(key, value);
  else if (key == "min_fanout") e.index_params.min_fanout = positive(key, value);
  else if (key == "max_fanout") e.index_params.max_fanout = positive(key, value);
  else if (key == "timeout_ms") e.provider.http.timeout = std::chrono::milliseconds(positive(key, value));
  else if (key == "retries") e.provider.http.retries = static_cast<int>(to_u64(key, value));
  else if (key == "normalize_threshold") e.normalize_threshold = to_double(key, value);
  else throw ConfigError("unknown setting '" + key + "'");
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  RunConfig cfg;
  for (const auto& [k, v] : parse_key_values(ss.str())) apply_setting(cfg, k, v);
  validate(cfg);
  return cfg;
}

void validate(const RunConfig& cfg) {
  const auto& e = cfg.engine;
  if (e.provider.F == 0 || e.dominance_dim < 2) throw ConfigError("F must be positive and d at least 2");
  if (e.completion_cap == 0 || e.match.assembly_cap == 0 || e.match.fallback_cap == 0 ||
      e.train.substructure_cap == 0) {
    throw ConfigError("caps must be positive");
  }
  if (e.index_params.min_fanout < 2 || e.index_params.min_fanout * 2 > e.index_params.max_fanout) {
    throw ConfigError("fan-out bounds need 2 <= min and 2*min <= max");
  }
  if (!(e.train.learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
  if (e.provider.kind == ProviderKind::kRemote && e.provider.endpoint.empty()) {
    throw ConfigError("remote provider needs embedding_endpoint");
  }
}

}  // namespace exactrag
