#pragma once

#include <map>
#include <mutex>
#include <string>
#include <utility>
#include <vector>

#include "exactrag/http_client.hpp"

namespace exactrag {

/// Prompt in, text out. Used for query extraction, question polishing and
/// answer generation.
class TextProvider {
 public:
  virtual ~TextProvider() = default;
  virtual std::string complete(const std::string& prompt) = 0;
};

/// HTTP JSON {"prompt": text} -> {"text": answer}.
class RemoteTextProvider final : public TextProvider {
 public:
  RemoteTextProvider(std::string endpoint, HttpOptions http);
  std::string complete(const std::string& prompt) override;

 private:
  std::string endpoint_;
  HttpOptions http_;
};

/// Canned responses: returns the response of the first key (in insertion
/// order) that occurs in the prompt, or an empty string.
class ScriptedTextProvider final : public TextProvider {
 public:
  ScriptedTextProvider() = default;
  explicit ScriptedTextProvider(std::vector<std::pair<std::string, std::string>> script)
      : script_(std::move(script)) {}

  void add(std::string key, std::string response) {
    script_.emplace_back(std::move(key), std::move(response));
  }
  std::string complete(const std::string& prompt) override;
  std::size_t calls() const { return calls_; }

 private:
  std::vector<std::pair<std::string, std::string>> script_;
  std::size_t calls_ = 0;
};

}  // namespace exactrag
