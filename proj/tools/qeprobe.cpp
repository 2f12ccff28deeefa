// qeprobe command-line entry point.

#include <iostream>

#include <CLI11.hpp>

#include "qeprobe/app.hpp"

namespace {

struct CommonFlags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> reps;
  std::optional<std::string> kinds;
  std::optional<double> threshold;
  std::optional<std::string> out;

  void attach(CLI::App* cmd) {
    cmd->add_option("--config", config, "run configuration (JSON)")->required()->check(CLI::ExistingFile);
    cmd->add_option("--seed", seed, "master seed");
    cmd->add_option("--reps", reps, "repetitions for randomized kinds");
    cmd->add_option("--kinds", kinds, "all, MPP, MAP or a comma list such as MPP1,MAP7");
    cmd->add_option("--threshold", threshold, "quality threshold on standardized scores");
    cmd->add_option("--out", out, "output directory");
  }

  qeprobe::RunConfig load() const {
    qeprobe::ConfigOverrides o;
    o.seed = seed;
    o.repetitions = reps;
    o.kinds = kinds;
    o.threshold = threshold;
    if (out) o.output_dir = *out;
    return qeprobe::load_config(config, o);
  }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"qeprobe: adversarial probing of quality-estimation scorers"};
  app.set_version_flag("--version", std::string(qeprobe::kVersion));
  app.require_subcommand(1);

  CommonFlags validate_flags, perturb_flags, run_flags;
  auto* validate = app.add_subcommand("validate", "check config, corpus, resources and scorers");
  validate_flags.attach(validate);
  auto* perturb = app.add_subcommand("perturb", "generate perturbation variants only");
  perturb_flags.attach(perturb);
  auto* run = app.add_subcommand("run", "generate variants, score them and write reports");
  run_flags.attach(run);

  std::vector<std::string> report_files;
  std::string rank_out = ".";
  auto* rank = app.add_subcommand("rank", "compare model reports by gap and by human correlation");
  rank->add_option("reports", report_files, "model report JSON files")->required()->check(CLI::ExistingFile);
  rank->add_option("--out", rank_out, "directory for ranking.json and plots");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*validate) return qeprobe::cmd_validate(validate_flags.load(), std::cout);
    if (*perturb) return qeprobe::cmd_perturb(perturb_flags.load());
    if (*run) return qeprobe::cmd_run(run_flags.load());
    if (*rank) {
      std::vector<std::filesystem::path> paths(report_files.begin(), report_files.end());
      return qeprobe::cmd_rank(paths, rank_out);
    }
  } catch (const std::exception& e) {
    return qeprobe::detail::report_error(e, std::cerr);
  }
  return 2;
}
