#include <cstdio>
#include <string>

#include "CLI11.hpp"
#include "frips/experiment.hpp"

int main(int argc, char** argv) {
  CLI::App app{"frips: flow-based iterative posterior sampling on manifolds"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_override;
  int workers_override = 0;
  long long seed_override = -1;
  const auto add_common = [&](CLI::App* sub) {
    sub->add_option("config", config_path, "experiment config file")
        ->required();
    sub->add_option("--workers", workers_override,
                    "worker threads (overrides the config)");
    sub->add_option("--seed", seed_override, "seed override");
    sub->add_option("--out", out_override, "output path prefix override");
  };
  CLI::App* cmd_run = app.add_subcommand("run", "run every experiment cell");
  CLI::App* cmd_probe =
      app.add_subcommand("probe", "return-accuracy sweep over the probe grid");
  CLI::App* cmd_validate =
      app.add_subcommand("validate", "parse and check a config, run nothing");
  add_common(cmd_run);
  add_common(cmd_probe);
  add_common(cmd_validate);

  CLI11_PARSE(app, argc, argv);

  try {
    frips::ExperimentConfig cfg = frips::load_config(config_path);
    if (workers_override > 0) cfg.workers = workers_override;
    if (seed_override >= 0)
      cfg.seed = static_cast<std::uint64_t>(seed_override);
    if (!out_override.empty()) cfg.out = out_override;

    if (cmd_validate->parsed()) {
      std::printf("ok: %s (hash %s)\n", cfg.name.c_str(),
                  frips::config_hash_hex(cfg).c_str());
      return 0;
    }

    const frips::ExperimentOutput res =
        cmd_run->parsed() ? frips::run_experiment(cfg) : frips::run_probe(cfg);
    std::printf("wrote %s and %s\n", res.csv_path.c_str(),
                res.json_path.c_str());
    if (res.aborted_cells > 0)
      std::fprintf(stderr, "note: %d of %d cells aborted\n", res.aborted_cells,
                   res.total_cells);
    if (res.total_cells > 0 && res.aborted_cells == res.total_cells) return 3;
    return 0;
  } catch (const frips::ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const frips::FripsError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 3;
  }
}
