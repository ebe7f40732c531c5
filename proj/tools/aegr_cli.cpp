// Command-line front end: prepare datasets, run the detector matrix, export
// plot data.

#include <cstdint>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "aegr/experiment.hpp"

namespace {

aegr::experiment::ExperimentConfig load_config(const std::string& path, const std::string& out,
                                               const std::optional<std::uint64_t>& seed_override) {
  auto cfg = aegr::experiment::ExperimentConfig::load(path);
  if (!out.empty()) cfg.output_dir = out;
  if (seed_override) cfg.seeds = {*seed_override};
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Autoencoder + LOF network anomaly detection benchmark"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_dir;
  std::size_t jobs = 1;
  std::optional<std::uint64_t> seed_override;
  std::string variant_name = "aegr_lof/prune";

  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--config", config_path, "Experiment config (JSON)")->required()->check(CLI::ExistingFile);
    cmd->add_option("--out", out_dir, "Output directory (overrides output_dir in the config)");
    cmd->add_option("--seed-override", seed_override, "Use this single seed instead of the config's seeds");
  };

  auto* prepare = app.add_subcommand("prepare", "Encode, split and normalize the dataset");
  add_common(prepare);
  auto* run = app.add_subcommand("run", "Run every (variant, seed) pair and write reports");
  add_common(run);
  run->add_option("--jobs", jobs, "Worker threads")->check(CLI::PositiveNumber);
  auto* plot = app.add_subcommand("plotdata", "Export latent scatter and KDE curves of a stored run");
  add_common(plot);
  plot->add_option("--variant", variant_name, "Latent-LOF variant to export (detector/modifier)");

  CLI11_PARSE(app, argc, argv);

  try {
    const auto cfg = load_config(config_path, out_dir, seed_override);
    if (*prepare) {
      aegr::experiment::cmd_prepare(cfg, std::cout);
      return 0;
    }
    if (*run) {
      const auto report = aegr::experiment::cmd_run(cfg, {jobs}, std::cout);
      if (!report.all_ok()) {
        std::cerr << "one or more variants failed; see report.json\n";
        return 1;
      }
      return 0;
    }
    if (*plot) {
      const auto variant = aegr::pipeline::VariantSpec::parse(variant_name);
      aegr::experiment::cmd_plotdata(cfg, variant, cfg.seeds.front(), std::cerr);
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
