#include "exactrag/http_client.hpp"

#include <thread>

#include "exactrag/errors.hpp"
#include "httplib.h"

namespace exactrag {
namespace {

struct ParsedUrl {
  std::string host_port;
  std::string path;
};

ParsedUrl parse_url(const std::string& url) {
  constexpr std::string_view kScheme = "http://";
  if (url.rfind(kScheme, 0) != 0) {
    throw ConfigError("unsupported endpoint URL (expected http://host[:port]/path): " + url);
  }
  const auto rest = url.substr(kScheme.size());
  const auto slash = rest.find('/');
  ParsedUrl out;
  out.host_port = "http://" + rest.substr(0, slash);
  out.path = slash == std::string::npos ? "/" : rest.substr(slash);
  if (rest.empty() || slash == 0) throw ConfigError("endpoint URL has no host: " + url);
  return out;
}

}  // namespace

nlohmann::json post_json(const std::string& url, const nlohmann::json& body,
                         const HttpOptions& options) {
  const auto target = parse_url(url);
  httplib::Client client(target.host_port);
  const auto secs = options.timeout.count() / 1000;
  const auto usecs = (options.timeout.count() % 1000) * 1000;
  client.set_connection_timeout(secs, usecs);
  client.set_read_timeout(secs, usecs);
  client.set_write_timeout(secs, usecs);

  httplib::Headers headers;
  if (!options.bearer_token.empty()) {
    headers.emplace("Authorization", "Bearer " + options.bearer_token);
  }
  const std::string payload = body.dump();

  std::string last_error;
  auto backoff = options.initial_backoff;
  for (int attempt = 0; attempt <= options.retries; ++attempt) {
    if (attempt > 0) {
      std::this_thread::sleep_for(backoff);
      backoff *= 2;
    }
    auto res = client.Post(target.path, headers, payload, "application/json");
    if (!res) {
      last_error = "transport error: " + httplib::to_string(res.error());
      continue;
    }
    if (res->status == 429 || res->status >= 500) {
      last_error = "HTTP " + std::to_string(res->status);
      continue;
    }
    if (res->status < 200 || res->status >= 300) {
      throw ProviderError("request to " + url + " failed with HTTP " + std::to_string(res->status),
                          false);
    }
    try {
      return nlohmann::json::parse(res->body);
    } catch (const nlohmann::json::exception& e) {
      throw ProviderError("non-JSON reply from " + url + ": " + e.what(), false);
    }
  }
  throw ProviderError("request to " + url + " failed after " + std::to_string(options.retries + 1) +
                          " attempts (" + last_error + ")",
                      true);
}

}  // namespace exactrag
