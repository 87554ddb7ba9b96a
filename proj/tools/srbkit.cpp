// srbkit command line: run <config.json>, list-models, describe <experiment>.
#include "srbkit/harness.hpp"

#include <CLI11.hpp>

#include <iostream>

int main(int argc, char** argv) {
  namespace h = srb::harness;
  CLI::App app{"SRB toolkit experiment runner"};
  app.require_subcommand(1);

  std::string config_path;
  std::string output_dir;
  int verbosity = 0;
  auto* run = app.add_subcommand("run", "run the experiment described by a JSON config");
  run->add_option("config", config_path, "path to the config file")->required();
  run->add_option("-o,--output-dir", output_dir, "override the config's output_dir");
  run->add_flag("-v,--verbose", verbosity, "print progress to stderr");

  app.add_subcommand("list-models", "list the model zoo with parameter defaults");

  std::string experiment;
  auto* describe = app.add_subcommand("describe", "describe an experiment");
  describe->add_option("experiment", experiment, "experiment name")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (app.got_subcommand("list-models")) {
      std::cout << h::list_models();
      return 0;
    }
    if (app.got_subcommand("describe")) {
      std::cout << h::describe(experiment);
      return 0;
    }
    const h::ExperimentConfig cfg = h::load_config(config_path);
    const std::filesystem::path out = output_dir.empty() ? cfg.output_dir : output_dir;
    const h::RunSummary summary = h::run(cfg, out, verbosity > 0 ? &std::cerr : nullptr);
    for (const auto& a : summary.assertions) {
      std::cout << (a.passed ? "PASS " : "FAIL ") << a.name << ": " << a.detail << "\n";
    }
    std::cout << "summary: " << (out / "summary.json").string() << "\n";
    return summary.passed() ? 0 : 1;
  } catch (const srb::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}
