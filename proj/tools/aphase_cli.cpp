#include "aphase/errors.hpp"
#include "aphase/experiment.hpp"

#include <CLI11.hpp>

#include <iostream>

int main(int argc, char** argv) {
  CLI::App app{"Asymptotic phase and stable-fiber experiments"};
  app.require_subcommand(1);

  std::string config;
  std::optional<std::string> out;
  std::optional<int> workers;
  std::optional<std::uint64_t> seed;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("config", config, "JSON experiment config")->required();
    sub->add_option("--out", out, "output directory (overrides the config)");
    sub->add_option("--workers", workers, "worker threads")->check(CLI::PositiveNumber);
    sub->add_option("--seed", seed, "seed for sampled estimation");
  };
  CLI::App* run = app.add_subcommand("run", "run the experiment named in the config");
  CLI::App* sweep = app.add_subcommand("sweep", "run the config's inputs as a sweep");
  add_common(run);
  add_common(sweep);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    aphase::ExperimentConfig cfg = aphase::load_config(config);
    if (sweep->parsed()) cfg.experiment = "sweep";
    aphase::apply_overrides(cfg, out, workers, seed);
    const aphase::RunOutcome outcome = aphase::run_experiment(cfg);
    const auto& report = outcome.report;
    std::cout << "status: " << report.value("status", "") << " (exit " << static_cast<int>(outcome.code) << ")\n";
    if (report.contains("error")) std::cerr << report["error"]["message"].get<std::string>() << '\n';
    return static_cast<int>(outcome.code);
  } catch (const aphase::Error& e) {
    std::cerr << e.what() << '\n';
    return e.kind() == aphase::ErrorKind::NonHyperbolic || e.kind() == aphase::ErrorKind::ConstantsInfeasible ? 3 : 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
