#include "commands.hpp"
#include "config.hpp"

#include <CLI11.hpp>

#include <iostream>
#include <map>

int main(int argc, char** argv) {
  using namespace tsm::cli;

  CLI::App app{"Score identity experiments: variance studies, losses, training and identity checks"};
  app.require_subcommand(1);
  std::string config_path;
  std::string out_dir = "out";
  std::optional<std::uint64_t> seed;
  unsigned workers = 0;
  app.add_option("--config", config_path, "JSON config file (defaults apply to every missing field)");
  app.add_option("--out", out_dir, "output directory")->capture_default_str();
  app.add_option("--seed", seed, "override the config's master seed");
  app.add_option("--workers", workers, "worker threads (0 = available parallelism)")->capture_default_str();

  std::string chosen;
  const std::map<std::string, std::string> about{
      {"variance-study", "per-time variance of each score estimator"},
      {"weights", "loss weightings and the mixture weights kappa, kappa_bar"},
      {"loss-dist", "distribution of the finite-sample loss"},
      {"train", "train one network per target kind, with checkpoints"},
      {"sample-eval", "sample checkpoints with the reverse SDE and report MMD"},
      {"verify", "identity checks against quadrature and closed forms"},
      {"bridge", "bridge score: closed form against the three estimators"},
      {"so2", "rotation-group posterior score"},
      {"general-noise", "score under a nonlinear observation map"},
  };
  for (const auto& name : command_names()) {
    app.add_subcommand(name, about.count(name) ? about.at(name) : "")->fallthrough()->callback([&chosen, name] { chosen = name; });
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  Config cfg;
  try {
    cfg = config_path.empty() ? parse_config(nlohmann::json::object()) : load_config(config_path);
  } catch (const ConfigError& e) {
    std::cerr << e.what() << '\n';
    return 1;
  }
  if (seed) cfg.seed = *seed;

  try {
    return run_command(chosen, cfg, RunOptions{out_dir, workers});
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
}
