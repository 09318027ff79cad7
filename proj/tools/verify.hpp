#pragma once

// Verifier batteries behind `scoretune verify`.

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

namespace scoretune::cli {

struct Check {
  std::string suite;
  std::string name;
  nlohmann::ordered_json values;
  double tolerance = 0.0;
  bool pass = false;
};

struct BatterySettings {
  std::uint64_t seed = 0;
  int threads = 1;
  // prop1: two-component mixtures, MC estimate of the cross responsibility.
  std::size_t prop1_configs = 50;
  std::size_t prop1_samples = 20000;
  // prop2: radial law checks.
  std::size_t prop2_ks_samples = 10000;
  std::size_t prop2_monotone_samples = 1000000;
  // prop3: Langevin variance on a single Gaussian.
  std::size_t prop3_configs = 20;
  std::size_t prop3_chains = 2000;
};

std::vector<Check> prop1_battery(const BatterySettings& settings);
std::vector<Check> prop2_battery(const BatterySettings& settings);
std::vector<Check> prop3_battery(const BatterySettings& settings);

}  // namespace scoretune::cli
