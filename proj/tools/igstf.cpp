// igstf <gen|build|train|eval|ablate|gradcheck> --config <path> [--threads N] [--seed S]

#include <iostream>

#include "CLI11.hpp"
#include "igstf/cli.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Incident-guided spatio-temporal traffic forecasting"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Show help for every command");

  igstf::CommandOptions opt;
  std::size_t threads = 0;
  std::uint64_t seed = 0;
  const std::map<std::string, std::string> about = {
      {"gen", "Generate a synthetic incident-traffic dataset"},
      {"build", "Build graph, relation tensor, instances and splits from raw inputs"},
      {"train", "Train the model and write the model artifact and test metrics"},
      {"eval", "Evaluate the saved model on the test split and plot a forecast"},
      {"ablate", "Train and evaluate the ablation variants"},
      {"gradcheck", "Check analytic gradients against finite differences"}};
  std::vector<CLI::App*> subs;
  for (const auto& [name, _] : igstf::kCommands) {
    CLI::App* sub = app.add_subcommand(name, about.at(name));
    sub->add_option("--config", opt.config, "Run configuration (JSON)")->required();
    sub->add_option("--threads", threads, "Worker threads (default: train.threads)")->check(CLI::PositiveNumber);
    sub->add_option("--seed", seed, "Seed for training and synthetic data");
    subs.push_back(sub);
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? igstf::kExitOk : igstf::kExitUsage;
  }

  for (CLI::App* sub : subs) {
    if (!sub->parsed()) continue;
    if (sub->count("--threads")) opt.threads = threads;
    if (sub->count("--seed")) opt.seed = seed;
    return igstf::run_command(sub->get_name(), opt, std::cout, std::cerr);
  }
  return igstf::kExitUsage;
}
