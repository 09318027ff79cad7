#include "config.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

namespace scoretune::cli {

namespace {
const json kEmpty = json::object();
}

Section::Section(const json* source, ordered_json* resolved, std::string path)
    : source_(source && source->is_object() ? source : &kEmpty), resolved_(resolved), path_(std::move(path)) {
  if (!resolved_->is_object()) *resolved_ = ordered_json::object();
}

bool Section::has(const std::string& key) const { return lookup(key) != nullptr; }

std::string Section::path(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

const json* Section::lookup(const std::string& key) const {
  auto it = source_->find(key);
  if (it == source_->end() || it->is_null()) return nullptr;
  return &*it;
}

void Section::fail(const std::string& key, const std::string& what) const {
  throw ConfigError("config: " + path(key) + ": " + what);
}

double Section::number(const std::string& key, double fallback) {
  double v = fallback;
  if (const json* j = lookup(key)) {
    if (!j->is_number()) fail(key, "expected a number");
    v = j->get<double>();
    if (!std::isfinite(v)) fail(key, "must be finite");
  }
  (*resolved_)[key] = v;
  return v;
}

double Section::positive(const std::string& key, double fallback) {
  const double v = number(key, fallback);
  if (!(v > 0.0)) fail(key, "must be positive");
  return v;
}

double Section::required_number(const std::string& key) {
  if (!lookup(key)) fail(key, "is required");
  return number(key, 0.0);
}

std::int64_t Section::integer(const std::string& key, std::int64_t fallback) {
  std::int64_t v = fallback;
  if (const json* j = lookup(key)) {
    if (!j->is_number_integer()) fail(key, "expected an integer");
    v = j->get<std::int64_t>();
  }
  (*resolved_)[key] = v;
  return v;
}

std::uint64_t Section::seed(const std::string& key, std::uint64_t fallback) {
  std::uint64_t v = fallback;
  if (const json* j = lookup(key)) {
    if (!j->is_number_integer() || (j->is_number_integer() && !j->is_number_unsigned() && j->get<std::int64_t>() < 0))
      fail(key, "expected a non-negative integer");
    v = j->get<std::uint64_t>();
  }
  (*resolved_)[key] = v;
  return v;
}

bool Section::flag(const std::string& key, bool fallback) {
  bool v = fallback;
  if (const json* j = lookup(key)) {
    if (!j->is_boolean()) fail(key, "expected true or false");
    v = j->get<bool>();
  }
  (*resolved_)[key] = v;
  return v;
}

std::string Section::text(const std::string& key, const std::string& fallback) {
  std::string v = fallback;
  if (const json* j = lookup(key)) {
    if (!j->is_string()) fail(key, "expected a string");
    v = j->get<std::string>();
  }
  (*resolved_)[key] = v;
  return v;
}

std::string Section::required_text(const std::string& key) {
  if (!lookup(key)) fail(key, "is required");
  return text(key, "");
}

std::string Section::choice(const std::string& key, const std::string& fallback,
                            const std::vector<std::string>& allowed) {
  const std::string v = text(key, fallback);
  for (const auto& a : allowed)
    if (a == v) return v;
  std::string list;
  for (const auto& a : allowed) list += (list.empty() ? "" : ", ") + a;
  fail(key, "'" + v + "' is not one of: " + list);
}

std::vector<double> Section::numbers(const std::string& key, const std::vector<double>& fallback) {
  std::vector<double> v = fallback;
  if (const json* j = lookup(key)) {
    if (!j->is_array()) fail(key, "expected an array of numbers");
    v.clear();
    for (const auto& e : *j) {
      if (!e.is_number()) fail(key, "expected an array of numbers");
      v.push_back(e.get<double>());
    }
  }
  (*resolved_)[key] = v;
  return v;
}

std::vector<std::vector<double>> Section::rows(const std::string& key,
                                               const std::vector<std::vector<double>>& fallback) {
  std::vector<std::vector<double>> v = fallback;
  if (const json* j = lookup(key)) {
    if (!j->is_array() || j->empty()) fail(key, "expected a non-empty array of rows");
    v.clear();
    for (const auto& row : *j) {
      if (!row.is_array() || row.empty()) fail(key, "each row must be a non-empty array of numbers");
      std::vector<double> r;
      for (const auto& e : row) {
        if (!e.is_number()) fail(key, "each row must be a non-empty array of numbers");
        r.push_back(e.get<double>());
      }
      if (!v.empty() && r.size() != v.front().size()) fail(key, "rows differ in length");
      v.push_back(std::move(r));
    }
  }
  (*resolved_)[key] = v;
  return v;
}

std::optional<std::string> Section::number_or_word(const std::string& key, const std::string& fallback_word,
                                                   const std::vector<std::string>& words, double& value) {
  const json* j = lookup(key);
  if (j && j->is_number()) {
    value = j->get<double>();
    if (!std::isfinite(value)) fail(key, "must be finite");
    (*resolved_)[key] = *j;  // keep integers as integers
    return std::nullopt;
  }
  std::string word = fallback_word;
  if (j) {
    if (!j->is_string()) fail(key, "expected a number or a string");
    word = j->get<std::string>();
  }
  for (const auto& w : words) {
    if (w == word) {
      (*resolved_)[key] = word;
      return word;
    }
  }
  fail(key, "'" + word + "' is neither a number nor a recognised keyword");
}

Section Section::child(const std::string& key) {
  const json* j = lookup(key);
  if (j && !j->is_object()) fail(key, "expected an object");
  ordered_json& slot = (*resolved_)[key];
  if (!slot.is_object()) slot = ordered_json::object();
  return Section(j, &slot, path(key));
}

void Section::note(const std::string& key, const ordered_json& value) { (*resolved_)[key] = value; }

json parse_config_text(const std::string& text, const std::string& origin) {
  try {
    json j = json::parse(text, nullptr, true, /*ignore_comments=*/true);
    if (!j.is_object()) throw ConfigError("config " + origin + ": top level must be an object");
    return j;
  } catch (const json::parse_error& e) {
    throw ConfigError("config " + origin + ": " + e.what());
  }
}

json load_config(const std::string& path) {
  if (path.empty()) return json::object();
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot read config file: " + path);
  std::stringstream ss;
  ss << is.rdbuf();
  return parse_config_text(ss.str(), path);
}

void reject_unknown_keys(const json& source, const ordered_json& resolved, const std::string& path) {
  if (!source.is_object()) return;
  for (const auto& [key, value] : source.items()) {
    const std::string here = path.empty() ? key : path + "." + key;
    if (!resolved.is_object() || !resolved.contains(key))
      throw ConfigError("config: unknown key '" + here + "'");
    if (value.is_object()) reject_unknown_keys(value, resolved.at(key), here);
  }
}

}  // namespace scoretune::cli
