#pragma once

// Declarative experiment configuration. Every lookup names its default, and
// the value actually used is written into a "resolved" document that is
// echoed into the output directory.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "scoretune/error.hpp"

namespace scoretune::cli {

using json = nlohmann::json;
using ordered_json = nlohmann::ordered_json;

class ConfigError : public Error {
 public:
  using Error::Error;
};

/// A view of one object in the source config plus its slot in the resolved
/// config. Keys are reported as dotted paths ("sampler.T") in errors.
class Section {
 public:
  Section(const json* source, ordered_json* resolved, std::string path);

  bool has(const std::string& key) const;
  std::string path(const std::string& key) const;

  double number(const std::string& key, double fallback);
  double positive(const std::string& key, double fallback);
  double required_number(const std::string& key);
  std::int64_t integer(const std::string& key, std::int64_t fallback);
  std::uint64_t seed(const std::string& key, std::uint64_t fallback);
  bool flag(const std::string& key, bool fallback);
  std::string text(const std::string& key, const std::string& fallback);
  std::string required_text(const std::string& key);
  std::string choice(const std::string& key, const std::string& fallback,
                     const std::vector<std::string>& allowed);
  std::vector<double> numbers(const std::string& key, const std::vector<double>& fallback);
  std::vector<std::vector<double>> rows(const std::string& key,
                                        const std::vector<std::vector<double>>& fallback);

  /// Either a number or one of `words`; returns the word or nullopt with `value` set.
  std::optional<std::string> number_or_word(const std::string& key, const std::string& fallback_word,
                                            const std::vector<std::string>& words, double& value);

  Section child(const std::string& key);

  /// Records a value computed elsewhere (e.g. a solved epsilon) next to the request.
  void note(const std::string& key, const ordered_json& value);

 private:
  const json* lookup(const std::string& key) const;
  [[noreturn]] void fail(const std::string& key, const std::string& what) const;

  const json* source_;
  ordered_json* resolved_;
  std::string path_;
};

/// Parses a config file (or empty path for "all defaults").
json load_config(const std::string& path);
json parse_config_text(const std::string& text, const std::string& origin);

/// Throws ConfigError for keys present in `source` that were never read.
void reject_unknown_keys(const json& source, const ordered_json& resolved, const std::string& path = "");

}  // namespace scoretune::cli
