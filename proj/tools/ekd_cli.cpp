#include <iostream>

#include "CLI11.hpp"
#include "ekd/commands.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Ensemble aggregation checks, simulations and distillation"};
  app.require_subcommand(1);

  ekd::CommandLine cmd;
  std::string config;
  std::uint64_t seed = 0;
  std::size_t trials = 0;
  std::string out = "reports";
  std::vector<std::string> inputs;

  for (const auto& name : ekd::command_names()) {
    auto* sub = app.add_subcommand(name);
    sub->add_option("--out", out, "Output directory for reports")->capture_default_str();
    if (name == "report-merge") {
      sub->add_option("inputs", inputs, "Report files to merge")->required()->check(CLI::ExistingFile);
      continue;
    }
    sub->add_option("--config", config, "JSON config file")->check(CLI::ExistingFile);
    sub->add_option("--seed", seed, "Seed; overrides the config");
    if (name != "distill") sub->add_option("--trials", trials, "Trial count; overrides the config");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : ekd::kExitError;
  }

  auto* sub = app.get_subcommands().front();
  cmd.command = sub->get_name();
  cmd.out_dir = out;
  const auto given = [sub](const char* flag) {
    const auto* opt = sub->get_option_no_throw(flag);
    return opt != nullptr && opt->count() > 0;
  };
  if (given("--config")) cmd.config = config;
  if (given("--seed")) cmd.seed = seed;
  if (given("--trials")) cmd.trials = trials;
  for (const auto& p : inputs) cmd.inputs.emplace_back(p);
  return ekd::run_command(cmd, &std::cout);
}
