#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace scoretune::cli {

// Process exit status of every subcommand.
enum ExitCode : int {
  kOk = 0,
  kFailure = 1,       // anything not covered below
  kConfigError = 2,   // bad or infeasible configuration
  kDataError = 3,     // missing or malformed input files
  kVerifyFailed = 4,  // a verification check did not pass
  kDiverged = 5,      // sampling or training blew up
};

struct Invocation {
  std::string command;
  std::filesystem::path config_file;       // empty: defaults only
  std::optional<std::string> config_text;  // inline JSON, takes precedence over config_file
  std::optional<std::uint64_t> seed;       // overrides the config's "seed"
  std::optional<std::filesystem::path> out;  // overrides the config's "out"
  int threads = 1;
  std::string suite = "all";  // verify only: prop1 | prop2 | prop3 | all
};

const std::vector<std::string>& command_names();

/// Runs one subcommand. Progress goes to `log`, errors to `err`; the return
/// value is an ExitCode. Never throws.
int run(const Invocation& invocation, std::ostream& log, std::ostream& err);

/// 64-bit FNV-1a of a file's bytes, as 16 hex digits.
std::string fnv1a_file(const std::filesystem::path& file);

}  // namespace scoretune::cli
