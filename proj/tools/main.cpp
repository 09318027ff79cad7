#include <iostream>

#include <CLI11.hpp>

#include "commands.hpp"

int main(int argc, char** argv) {
  using namespace scoretune::cli;
  CLI::App app{"Noise schedules, step sizes and annealed Langevin sampling for score-based models"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Expand help for all subcommands");

  Invocation inv;
  std::string config;
  std::uint64_t seed = 0;
  std::string out;

  const std::pair<const char*, const char*> commands[] = {
      {"schedule", "Derive sigma1, the geometric schedule and epsilon"},
      {"verify", "Run the verifier batteries and write a JSON report"},
      {"fig2", "Exact-score mixture experiment over CIFAR-10 test images"},
      {"train", "Train a score network with denoising score matching"},
      {"sample", "Annealed Langevin sampling from a checkpoint or an oracle"},
      {"interpolate", "Interpolate between two runs by mixing their noise"},
      {"stats", "Pairwise distance statistics of a dataset"},
  };
  for (const auto& [name, help] : commands) {
    CLI::App* sub = app.add_subcommand(name, help);
    sub->add_option("-c,--config", config, "JSON experiment config")->check(CLI::ExistingFile);
    sub->add_option("--seed", seed, "Top-level seed (overrides the config)");
    sub->add_option("-o,--out", out, "Output directory (overrides the config)");
    sub->add_option("-j,--threads", inv.threads, "Worker threads; results do not depend on it")
        ->check(CLI::PositiveNumber);
    if (std::string(name) == "verify")
      sub->add_option("--suite", inv.suite, "Battery to run")
          ->check(CLI::IsMember({"prop1", "prop2", "prop3", "all"}));
    sub->callback([&inv, name = std::string(name)] { inv.command = name; });
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kConfigError;
  }

  inv.config_file = config;
  for (auto* sub : app.get_subcommands()) {
    if (sub->count("--seed")) inv.seed = seed;
    if (sub->count("--out")) inv.out = out;
  }
  return run(inv, std::cout, std::cerr);
}
