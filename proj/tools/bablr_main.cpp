// bablr: hierarchical bent-line regression with random change points.
//
// Subcommands cover the full pipeline: simulate cohorts, fit by NUTS,
// summarize, plot-ready quantile curves, held-out validation, and
// replicated recovery studies. Flags override config-file values; every
// run writes a manifest sufficient to reproduce it.

#include <deque>
#include <exception>
#include <iostream>
#include <string>
#include <utility>
#include <vector>

#include "CLI11.hpp"

#include "bablr/cli.hpp"

namespace {

struct FlagSet {
  std::vector<std::pair<std::string, CLI::Option*>> opts;
  std::deque<std::string> values;  // stable addresses; CLI11 binds references

  void add(CLI::App* app, const std::string& flag, const std::string& key,
           const std::string& desc) {
    values.emplace_back();
    opts.emplace_back(key, app->add_option(flag, values.back(), desc));
  }

  // file first, then flags, so the command line wins
  void build(bablr::RunConfig& cfg, const std::string& config_path,
             const std::vector<std::string>& priors) const {
    if (!config_path.empty()) cfg.load_file(config_path);
    for (std::size_t i = 0; i < opts.size(); ++i)
      if (opts[i].second->count() > 0) cfg.apply(opts[i].first, values[i]);
    for (const auto& spec : priors) {
      const auto eq = spec.find('=');
      if (eq == std::string::npos)
        throw std::invalid_argument("--prior expects name=family(args), got '" + spec + "'");
      cfg.apply("prior." + spec.substr(0, eq), spec.substr(eq + 1));
    }
  }
};

void add_sampler_flags(CLI::App* app, FlagSet& fs) {
  fs.add(app, "--seed", "seed", "RNG seed");
  fs.add(app, "--chains", "chains", "number of chains");
  fs.add(app, "--warmup", "warmup", "warmup iterations per chain");
  fs.add(app, "--samples", "samples", "sampling iterations per chain");
  fs.add(app, "--target-accept", "target_accept", "dual-averaging acceptance target");
  fs.add(app, "--max-treedepth", "max_treedepth", "maximum tree depth");
  fs.add(app, "--init-radius", "init_radius", "uniform init half-width (unconstrained)");
  fs.add(app, "--mode", "mode", "prior defaults: application | simulation");
  fs.add(app, "--cp-lower-bound", "cp_lower_bound", "change-point lower bound (years) or 'none'");
  fs.add(app, "--centered", "centered", "true for the centered parameterization");
}

void add_truth_flags(CLI::App* app, FlagSet& fs) {
  fs.add(app, "--n-subjects", "sim.n_subjects", "cohort size");
  fs.add(app, "--visit-min", "sim.visit_min", "minimum visits per subject");
  fs.add(app, "--visit-max", "sim.visit_max", "maximum visits per subject");
  fs.add(app, "--time-min", "sim.time_min", "start of the time range");
  fs.add(app, "--time-max", "sim.time_max", "end of the time range");
  fs.add(app, "--spacing", "sim.spacing", "years between visits");
  fs.add(app, "--truth-beta1-0", "truth.beta1_0", "generator intercept at CP");
  fs.add(app, "--truth-beta2-0", "truth.beta2_0", "generator pre-CP slope");
  fs.add(app, "--truth-beta3-0", "truth.beta3_0", "generator slope decrement (<= 0)");
  fs.add(app, "--truth-omega-0", "truth.omega_0", "generator population CP");
  fs.add(app, "--truth-sigma-y", "truth.sigma_y", "generator residual SD");
  fs.add(app, "--truth-sigma-u1", "truth.sigma_u1", "generator SD of u1");
  fs.add(app, "--truth-sigma-u2", "truth.sigma_u2", "generator SD of u2");
  fs.add(app, "--truth-sigma-u3", "truth.sigma_u3", "generator SD of u3");
  fs.add(app, "--truth-sigma-u4", "truth.sigma_u4", "generator SD of u4");
  fs.add(app, "--corr", "truth.correlation", "random-effect correlations r12,r13,r14,r23,r24,r34");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Bayesian bent-line regression for longitudinal outcomes"};
  app.require_subcommand(1);

  struct Sub {
    CLI::App* cmd = nullptr;
    FlagSet flags;
    std::string config_path;
    std::vector<std::string> priors;
    bool no_strict = false;
  };

  Sub fit;
  fit.cmd = app.add_subcommand("fit", "fit the model to a dataset");
  fit.cmd->add_option("--config", fit.config_path, "config file (key = value)");
  fit.flags.add(fit.cmd, "--data", "data", "input CSV (subject_id,time,outcome)");
  fit.flags.add(fit.cmd, "--out", "out_dir", "output directory");
  fit.flags.add(fit.cmd, "--holdout-fraction", "holdout_fraction",
                "hold out the last observation of this fraction of subjects");
  add_sampler_flags(fit.cmd, fit.flags);
  fit.cmd->add_option("--prior", fit.priors, "prior override, e.g. sigma_u2=lognormal(0,0.2)");
  fit.cmd->add_flag("--no-strict", fit.no_strict, "do not fail when split-rhat >= 1.05");

  Sub sim;
  sim.cmd = app.add_subcommand("simulate", "generate a synthetic cohort");
  sim.cmd->add_option("--config", sim.config_path, "config file");
  sim.flags.add(sim.cmd, "--out", "out_dir", "output directory");
  sim.flags.add(sim.cmd, "--seed", "seed", "RNG seed");
  sim.flags.add(sim.cmd, "--mode", "mode", "prior defaults: application | simulation");
  sim.flags.add(sim.cmd, "--cp-lower-bound", "cp_lower_bound", "CP lower bound or 'none'");
  add_truth_flags(sim.cmd, sim.flags);

  Sub study;
  study.cmd = app.add_subcommand("sim-study", "replicated simulate-and-fit recovery study");
  study.cmd->add_option("--config", study.config_path, "config file");
  study.flags.add(study.cmd, "--out", "out_dir", "output directory");
  study.flags.add(study.cmd, "--replicates", "replicates", "number of replicates");
  add_truth_flags(study.cmd, study.flags);
  add_sampler_flags(study.cmd, study.flags);
  study.cmd->add_option("--prior", study.priors, "prior override");

  Sub curves;
  curves.cmd = app.add_subcommand("curves", "posterior trajectory quantile curves");
  curves.cmd->add_option("--config", curves.config_path, "config file");
  curves.flags.add(curves.cmd, "--draws", "draws", "draws CSV from a fit");
  curves.flags.add(curves.cmd, "--out", "out", "output CSV");
  curves.flags.add(curves.cmd, "--ages", "ages", "age grid min:max:step");
  curves.flags.add(curves.cmd, "--quantiles", "quantiles", "comma-separated quantile levels");
  curves.flags.add(curves.cmd, "--subject", "subject", "subject id for individual bands");
  curves.flags.add(curves.cmd, "--pooled", "pooled", "pool draws instead of median trajectories");

  Sub val;
  val.cmd = app.add_subcommand("validate", "held-out predictive-interval coverage");
  val.cmd->add_option("--config", val.config_path, "config file");
  val.flags.add(val.cmd, "--draws", "draws", "draws CSV from a fit");
  val.flags.add(val.cmd, "--holdout", "holdout", "held-out observations CSV");
  val.flags.add(val.cmd, "--out", "out", "output CSV");

  Sub summ;
  summ.cmd = app.add_subcommand("summarize", "parameter summary table from a draws file");
  summ.cmd->add_option("--config", summ.config_path, "config file");
  summ.flags.add(summ.cmd, "--draws", "draws", "draws CSV from a fit");
  summ.flags.add(summ.cmd, "--out", "out", "output CSV");
  summ.flags.add(summ.cmd, "--population-only", "population_only",
                 "restrict to the nine population parameters");

  CLI11_PARSE(app, argc, argv);

  try {
    bablr::RunConfig cfg;
    if (fit.cmd->parsed()) {
      fit.flags.build(cfg, fit.config_path, fit.priors);
      if (fit.no_strict) cfg.strict = false;
      return bablr::cmd_fit(std::move(cfg));
    }
    if (sim.cmd->parsed()) {
      sim.flags.build(cfg, sim.config_path, sim.priors);
      return bablr::cmd_simulate(std::move(cfg));
    }
    if (study.cmd->parsed()) {
      study.flags.build(cfg, study.config_path, study.priors);
      return bablr::cmd_sim_study(std::move(cfg));
    }
    if (curves.cmd->parsed()) {
      curves.flags.build(cfg, curves.config_path, curves.priors);
      return bablr::cmd_curves(std::move(cfg));
    }
    if (val.cmd->parsed()) {
      val.flags.build(cfg, val.config_path, val.priors);
      return bablr::cmd_validate(std::move(cfg));
    }
    if (summ.cmd->parsed()) {
      summ.flags.build(cfg, summ.config_path, summ.priors);
      return bablr::cmd_summarize(std::move(cfg));
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
