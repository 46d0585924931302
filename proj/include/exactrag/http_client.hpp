#pragma once

#include <chrono>
#include <string>

#include "json.hpp"

namespace exactrag {

struct HttpOptions {
  std::chrono::milliseconds timeout{30000};
  int retries = 3;  // attempts after the first one
  std::chrono::milliseconds initial_backoff{500};
  std::string bearer_token;
};

/// POSTs a JSON body and parses a JSON reply. Transport failures, 429 and 5xx
/// responses are retried with exponential backoff; other 4xx statuses fail
/// immediately. Throws ProviderError on failure, ConfigError for unsupported
/// URLs (only plain http:// is supported).
nlohmann::json post_json(const std::string& url, const nlohmann::json& body,
                         const HttpOptions& options);

}  // namespace exactrag
