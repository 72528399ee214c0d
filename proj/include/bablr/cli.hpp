#pragma once

// Command implementations behind the CLI: fit, simulate, sim-study,
// curves, validate, summarize. Every command writes a manifest with all
// effective configuration values; output files are written atomically.

#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include "json.hpp"

#include "bablr/cli_support.hpp"
#include "bablr/csv.hpp"
#include "bablr/diagnostics.hpp"
#include "bablr/model.hpp"
#include "bablr/nuts.hpp"
#include "bablr/posterior.hpp"
#include "bablr/run_config.hpp"
#include "bablr/simulate.hpp"

namespace bablr {

inline std::string diagnostics_json(const DiagnosticsReport& report) {
  nlohmann::json j;
  nlohmann::json rhat, ess;
  for (std::size_t p = 0; p < report.names.size(); ++p) {
    if (report.rhat[p].defined)
      rhat[report.names[p]] = report.rhat[p].value;
    else
      rhat[report.names[p]] = nullptr;
    if (report.ess[p].defined)
      ess[report.names[p]] = report.ess[p].value;
    else
      ess[report.names[p]] = nullptr;
  }
  j["rhat"] = rhat;
  j["ess_bulk"] = ess;
  j["divergences"] = report.divergences;
  j["treedepth_hits"] = report.treedepth_hits;
  nlohmann::json acc;
  for (std::size_t c = 0; c < report.chain_mean_accept.size(); ++c)
    acc["chain_" + std::to_string(c)] = report.chain_mean_accept[c];
  j["acceptance"] = acc;
  return j.dump(2) + "\n";
}

inline int cmd_fit(RunConfig cfg, std::ostream& log = std::cerr) {
  cfg.command = "fit";
  cfg.finalize();
  cfg.sampler.validate();
  if (cfg.data_path.empty()) throw std::runtime_error("fit requires --data");
  if (cfg.out_dir.empty()) throw std::runtime_error("fit requires --out");
  const std::filesystem::path out(cfg.out_dir);
  std::filesystem::create_directories(out);

  std::vector<std::string> warnings;
  LongitudinalDataset data = read_dataset_csv(cfg.data_path, &warnings);
  for (const auto& w : warnings) log << "warning: " << w << "\n";

  if (cfg.holdout_fraction > 0.0) {
    const LongitudinalDataset heldout =
        split_holdout(data, cfg.holdout_fraction, cfg.sampler.seed);
    write_dataset_csv(out / "holdout.csv", heldout);
    log << "held out " << heldout.n_subjects() << " last observations\n";
  }

  BentLineModel model(std::move(data), cfg.priors, cfg.centered);
  const DrawsStore draws = run_chains(model, cfg.sampler);
  write_draws_csv(out / "draws.csv", draws);

  const auto all_rows = summarize(draws);
  std::vector<ParameterSummary> population(all_rows.begin(), all_rows.begin() + 9);
  write_summary_csv(out / "summary.csv", population);

  const DiagnosticsReport report = diagnose(draws, cfg.sampler.max_treedepth);
  write_atomic(out / "diagnostics.json", diagnostics_json(report));
  write_atomic(out / "manifest.txt", cfg.manifest());

  log << "max split-rhat " << report.max_rhat() << ", divergences " << report.divergences
      << ", treedepth hits " << report.treedepth_hits << "\n";
  if (cfg.strict && !report.all_rhat_below(1.05)) {
    log << "convergence gate failed: split-rhat >= 1.05 (or undefined) for at least one "
           "parameter; rerun with more iterations or --no-strict\n";
    return 3;
  }
  return 0;
}

inline int cmd_simulate(RunConfig cfg, std::ostream& log = std::cerr) {
  cfg.command = "simulate";
  cfg.finalize();
  if (cfg.out_dir.empty()) throw std::runtime_error("simulate requires --out");
  const std::filesystem::path out(cfg.out_dir);
  std::filesystem::create_directories(out);
  auto [data, truth] = simulate_dataset(cfg.truth, cfg.design, cfg.sampler.seed);
  write_dataset_csv(out / "data.csv", data);
  write_truth_csv(out / "truth.csv", truth);
  write_atomic(out / "manifest.txt", cfg.manifest());
  log << "simulated " << data.n_subjects() << " subjects, " << data.total_observations()
      << " observations\n";
  return 0;
}

inline int cmd_sim_study(RunConfig cfg, std::ostream& log = std::cerr) {
  cfg.command = "sim-study";
  cfg.finalize();
  cfg.sampler.validate();
  if (cfg.out_dir.empty()) throw std::runtime_error("sim-study requires --out");
  const std::filesystem::path out(cfg.out_dir);
  std::filesystem::create_directories(out);
  const StudyReport report = run_sim_study(cfg.replicates, cfg.truth, cfg.design, cfg.priors,
                                           cfg.sampler, cfg.sampler.seed, cfg.centered);
  write_study_csv(out / "study.csv", report);
  write_atomic(out / "manifest.txt", cfg.manifest());
  log << report.replicates << " replicates, " << report.failed << " failed\n";
  return 0;
}

inline int cmd_curves(RunConfig cfg, std::ostream& log = std::cerr) {
  cfg.command = "curves";
  cfg.finalize();
  if (cfg.draws_path.empty()) throw std::runtime_error("curves requires --draws");
  if (cfg.out_path.empty()) throw std::runtime_error("curves requires --out");
  const DrawsStore draws = read_draws_csv(cfg.draws_path);
  const std::vector<double> ages = cfg.age_grid();
  const QuantileCurves curves =
      cfg.subject.empty()
          ? population_quantile_curves(draws, ages, cfg.quantiles, cfg.pooled)
          : individual_trajectory(draws, cfg.subject, ages, cfg.quantiles);
  write_curves_csv(cfg.out_path, curves);
  write_atomic(cfg.out_path + ".manifest.txt", cfg.manifest());
  log << "wrote " << curves.quantiles.size() << " quantile curves over " << ages.size()
      << " ages\n";
  return 0;
}

inline int cmd_validate(RunConfig cfg, std::ostream& log = std::cerr) {
  cfg.command = "validate";
  cfg.finalize();
  if (cfg.draws_path.empty()) throw std::runtime_error("validate requires --draws");
  if (cfg.holdout_path.empty()) throw std::runtime_error("validate requires --holdout");
  if (cfg.out_path.empty()) throw std::runtime_error("validate requires --out");
  const DrawsStore draws = read_draws_csv(cfg.draws_path);
  const LongitudinalDataset heldout = read_dataset_csv(cfg.holdout_path);
  const HoldoutReport report = holdout_validation(draws, heldout);
  write_validation_csv(cfg.out_path, report);
  write_atomic(cfg.out_path + ".manifest.txt", cfg.manifest());
  log << "coverage " << report.coverage << " over " << report.points.size() << " points\n";
  return 0;
}

inline int cmd_summarize(RunConfig cfg, std::ostream& log = std::cerr) {
  cfg.command = "summarize";
  cfg.finalize();
  if (cfg.draws_path.empty()) throw std::runtime_error("summarize requires --draws");
  if (cfg.out_path.empty()) throw std::runtime_error("summarize requires --out");
  const DrawsStore draws = read_draws_csv(cfg.draws_path);
  std::vector<ParameterSummary> rows = summarize(draws);
  if (cfg.population_only && rows.size() > 9) rows.resize(9);
  write_summary_csv(cfg.out_path, rows);
  write_atomic(cfg.out_path + ".manifest.txt", cfg.manifest());
  log << "wrote " << rows.size() << " parameter rows\n";
  return 0;
}

}  // namespace bablr
