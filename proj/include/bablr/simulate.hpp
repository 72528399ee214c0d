#pragma once

// Synthetic-cohort generation and the bias/coverage recovery harness.
//
// Subjects receive a visit count from a discrete uniform range, evenly
// spaced visits with a uniform start inside the time range, and random
// effects drawn either independently or from a multivariate normal with a
// supplied correlation matrix. The per-subject slope decrement is
// truncated at zero the same way the model truncates it: u3 is redrawn
// from its conditional distribution given the other effects, restricted
// to beta3_i <= 0 (and u4 analogously when a change-point lower bound is
// configured), so the untruncated marginals of the other effects are
// preserved.

#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "bablr/data.hpp"
#include "bablr/math.hpp"
#include "bablr/model.hpp"
#include "bablr/nuts.hpp"
#include "bablr/parameters.hpp"
#include "bablr/posterior.hpp"
#include "bablr/priors.hpp"
#include "bablr/rng.hpp"

namespace bablr {

using Matrix4 = std::array<std::array<double, 4>, 4>;

// Generator inputs: population values plus an optional random-effect
// correlation matrix (unit diagonal, symmetric positive definite).
struct SimTruth {
  FixedEffects fixed{-0.0059, -0.0052, -0.0085, 10.0};
  ScaleParameters scales{0.30, 0.64, 0.02, 0.15, 10.0};
  std::optional<Matrix4> correlation;
};

struct SimDesign {
  std::size_t n_subjects = 100;
  int visit_min = 3;
  int visit_max = 7;
  double t_min = -12.5;
  double t_max = 32.5;
  double spacing = 2.0;  // years between visits
  std::optional<double> cp_lower_bound;

  void validate() const {
    if (n_subjects < 1) throw std::invalid_argument("n_subjects must be >= 1");
    if (visit_min < 1 || visit_max < visit_min)
      throw std::invalid_argument("invalid visit-count range");
    if (!(spacing > 0.0)) throw std::invalid_argument("spacing must be > 0");
    if (!(t_max > t_min)) throw std::invalid_argument("time range is empty");
    if (static_cast<double>(visit_max - 1) * spacing > t_max - t_min)
      throw std::invalid_argument("visit count infeasible for the time range");
  }
};

// Exactly the values used to generate a dataset, including the realized
// per-subject effects.
struct TruthRecord {
  FixedEffects fixed;
  ScaleParameters scales;
  std::optional<Matrix4> correlation;
  std::vector<std::string> subject_ids;
  std::vector<SubjectEffects> realized;

  double population_value(std::size_t k) const {
    switch (k) {
      case 0: return fixed.beta1_0;
      case 1: return fixed.beta2_0;
      case 2: return fixed.beta3_0;
      case 3: return fixed.omega_0;
      case 4: return scales.sigma_y;
      case 5: return scales.sigma_u1;
      case 6: return scales.sigma_u2;
      case 7: return scales.sigma_u3;
      case 8: return scales.sigma_u4;
    }
    throw std::out_of_range("population parameter index");
  }
};

namespace detail {

inline Matrix4 covariance_from(const Matrix4& corr, const ScaleParameters& s) {
  const double sd[4] = {s.sigma_u1, s.sigma_u2, s.sigma_u3, s.sigma_u4};
  Matrix4 cov{};
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j) cov[i][j] = corr[i][j] * sd[i] * sd[j];
  return cov;
}

inline Matrix4 cholesky4(const Matrix4& a) {
  Matrix4 l{};
  for (int i = 0; i < 4; ++i) {
    for (int j = 0; j <= i; ++j) {
      double acc = a[i][j];
      for (int k = 0; k < j; ++k) acc -= l[i][k] * l[j][k];
      if (i == j) {
        if (acc <= 1e-12) throw std::invalid_argument("correlation matrix is not positive definite");
        l[i][i] = std::sqrt(acc);
      } else {
        l[i][j] = acc / l[j][j];
      }
    }
  }
  return l;
}

inline Matrix4 inverse4(const Matrix4& a) {
  // Gauss-Jordan with partial pivoting
  double m[4][8] = {};
  for (int i = 0; i < 4; ++i) {
    for (int j = 0; j < 4; ++j) m[i][j] = a[i][j];
    m[i][4 + i] = 1.0;
  }
  for (int col = 0; col < 4; ++col) {
    int piv = col;
    for (int r = col + 1; r < 4; ++r)
      if (std::abs(m[r][col]) > std::abs(m[piv][col])) piv = r;
    if (std::abs(m[piv][col]) < 1e-14) throw std::invalid_argument("singular covariance matrix");
    if (piv != col)
      for (int j = 0; j < 8; ++j) std::swap(m[piv][j], m[col][j]);
    const double d = m[col][col];
    for (int j = 0; j < 8; ++j) m[col][j] /= d;
    for (int r = 0; r < 4; ++r) {
      if (r == col) continue;
      const double f = m[r][col];
      for (int j = 0; j < 8; ++j) m[r][j] -= f * m[col][j];
    }
  }
  Matrix4 inv{};
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j) inv[i][j] = m[i][4 + j];
  return inv;
}

// Truncated-normal draw by inverse CDF.
inline double trunc_normal_below(Rng& rng, double mu, double sigma, double ub) {
  const double alpha = (ub - mu) / sigma;
  const double u = rng.uniform_pos();
  return mu + sigma * inverse_normal_cdf(u * normal_cdf(alpha));
}

inline double trunc_normal_above(Rng& rng, double mu, double sigma, double lb) {
  const double beta = (lb - mu) / sigma;
  const double pb = normal_cdf(beta);
  const double u = rng.uniform_pos();
  return mu + sigma * inverse_normal_cdf(pb + u * (1.0 - pb));
}

// Conditional N(mean, sd) of component k given the others, from the
// precision matrix of a zero-mean MVN.
inline std::pair<double, double> conditional_moments(const Matrix4& precision, int k,
                                                     const std::array<double, 4>& x) {
  const double pkk = precision[k][k];
  double acc = 0.0;
  for (int j = 0; j < 4; ++j)
    if (j != k) acc += precision[k][j] * x[j];
  return {-acc / pkk, std::sqrt(1.0 / pkk)};
}

}  // namespace detail

inline std::pair<LongitudinalDataset, TruthRecord> simulate_dataset(const SimTruth& truth,
                                                                    const SimDesign& design,
                                                                    std::uint64_t seed) {
  design.validate();
  for (double s : {truth.scales.sigma_y, truth.scales.sigma_u1, truth.scales.sigma_u2,
                   truth.scales.sigma_u3, truth.scales.sigma_u4})
    if (!(s >= 0.0)) throw std::invalid_argument("truth scales must be >= 0");
  if (!(truth.fixed.beta3_0 <= 0.0))
    throw std::invalid_argument("truth beta3_0 must be <= 0");

  const bool correlated = truth.correlation.has_value();
  Matrix4 chol{}, precision{};
  if (correlated) {
    const Matrix4 cov = detail::covariance_from(*truth.correlation, truth.scales);
    chol = detail::cholesky4(cov);
    precision = detail::inverse4(cov);
  }

  Rng rng(seed);
  LongitudinalDataset data;
  TruthRecord record;
  record.fixed = truth.fixed;
  record.scales = truth.scales;
  record.correlation = truth.correlation;

  const int digits = design.n_subjects >= 1000 ? 5 : 4;
  for (std::size_t i = 0; i < design.n_subjects; ++i) {
    const int n_visits =
        design.visit_min + static_cast<int>(rng.uniform_int(
                               static_cast<std::uint64_t>(design.visit_max - design.visit_min + 1)));
    const double span = static_cast<double>(n_visits - 1) * design.spacing;
    if (span > design.t_max - design.t_min)
      throw std::invalid_argument("visit count infeasible for the time range");
    const double start = rng.uniform(design.t_min, design.t_max - span);

    std::array<double, 4> u{};
    if (correlated) {
      double z[4];
      for (double& v : z) v = rng.normal();
      for (int r = 0; r < 4; ++r) {
        u[r] = 0.0;
        for (int c = 0; c <= r; ++c) u[r] += chol[r][c] * z[c];
      }
    } else {
      u[0] = truth.scales.sigma_u1 * rng.normal();
      u[1] = truth.scales.sigma_u2 * rng.normal();
      u[2] = truth.scales.sigma_u3 * rng.normal();
      u[3] = truth.scales.sigma_u4 * rng.normal();
    }
    // truncate the decrement so beta3_i <= 0
    if (truth.scales.sigma_u3 > 0.0) {
      double mu_c = 0.0, sd_c = truth.scales.sigma_u3;
      if (correlated) {
        auto mc = detail::conditional_moments(precision, 2, u);
        mu_c = mc.first;
        sd_c = mc.second;
      }
      u[2] = detail::trunc_normal_below(rng, mu_c, sd_c, -truth.fixed.beta3_0);
    } else if (truth.fixed.beta3_0 + u[2] > 0.0) {
      u[2] = -truth.fixed.beta3_0;
    }
    // and the change point above its lower bound, when configured
    if (design.cp_lower_bound) {
      const double lb = *design.cp_lower_bound - truth.fixed.omega_0;
      if (truth.scales.sigma_u4 > 0.0) {
        double mu_c = 0.0, sd_c = truth.scales.sigma_u4;
        if (correlated) {
          auto mc = detail::conditional_moments(precision, 3, u);
          mu_c = mc.first;
          sd_c = mc.second;
        }
        u[3] = detail::trunc_normal_above(rng, mu_c, sd_c, lb);
      } else if (u[3] < lb) {
        u[3] = lb;
      }
    }

    const double b1 = truth.fixed.beta1_0 + u[0];
    const double b2 = truth.fixed.beta2_0 + u[1];
    const double b3 = truth.fixed.beta3_0 + u[2];
    const double om = truth.fixed.omega_0 + u[3];

    SubjectRecord subject;
    std::string id = std::to_string(i + 1);
    while (static_cast<int>(id.size()) < digits) id.insert(id.begin(), '0');
    subject.id = "s" + id;
    subject.times.resize(n_visits);
    subject.outcomes.resize(n_visits);
    for (int v = 0; v < n_visits; ++v) {
      const double t = start + static_cast<double>(v) * design.spacing;
      subject.times[v] = t;
      subject.outcomes[v] =
          bent_line_mean(b1, b2, b3, om, t) + truth.scales.sigma_y * rng.normal();
    }
    record.subject_ids.push_back(subject.id);
    record.realized.push_back(SubjectEffects{u[0], u[1], u[2], u[3]});
    data.subjects.push_back(std::move(subject));
  }
  return {std::move(data), std::move(record)};
}

// Per-parameter recovery over replicated simulate-and-fit runs.
struct StudyRow {
  std::string name;
  double truth = 0.0;
  double est_mean = 0.0;  // mean of posterior means over replicates
  double se = 0.0;        // SD of posterior means over replicates
  double bias = 0.0;
  double coverage = 0.0;  // fraction of replicates whose 95% CI covers truth
};

struct StudyReport {
  std::vector<StudyRow> rows;
  int replicates = 0;
  int failed = 0;  // replicates whose fit failed to initialize
};

inline StudyReport run_sim_study(int replicates, const SimTruth& truth, const SimDesign& design,
                                 const PriorConfig& priors, SamplerConfig fit_config,
                                 std::uint64_t seed, bool centered = false) {
  if (replicates < 1) throw std::invalid_argument("replicates must be >= 1");
  StudyReport report;
  report.replicates = replicates;

  std::array<std::vector<double>, 9> posterior_means;
  std::array<int, 9> covered{};
  for (int r = 0; r < replicates; ++r) {
    const std::uint64_t data_seed = Rng::derive(seed, 2 * static_cast<std::uint64_t>(r));
    const std::uint64_t fit_seed = Rng::derive(seed, 2 * static_cast<std::uint64_t>(r) + 1);
    auto [data, record] = simulate_dataset(truth, design, data_seed);
    try {
      BentLineModel model(std::move(data), priors, centered);
      fit_config.seed = fit_seed;
      const DrawsStore draws = run_chains(model, fit_config);
      for (std::size_t k = 0; k < 9; ++k) {
        const ParameterSummary s = summarize_column(draws.names[k], draws.column(k));
        posterior_means[k].push_back(s.mean);
        const double tv = record.population_value(k);
        covered[k] += (tv >= s.q025 && tv <= s.q975);
      }
    } catch (const std::runtime_error&) {
      ++report.failed;
    }
  }

  const int ok = replicates - report.failed;
  for (std::size_t k = 0; k < 9; ++k) {
    StudyRow row;
    row.name = kPopulationParameterNames[k];
    TruthRecord tmp;
    tmp.fixed = truth.fixed;
    tmp.scales = truth.scales;
    row.truth = tmp.population_value(k);
    if (ok > 0) {
      row.est_mean = mean_of(posterior_means[k]);
      row.se = posterior_means[k].size() > 1 ? sd_of(posterior_means[k]) : 0.0;
      row.bias = row.est_mean - row.truth;
      row.coverage = static_cast<double>(covered[k]) / static_cast<double>(ok);
    }
    report.rows.push_back(std::move(row));
  }
  return report;
}

}  // namespace bablr
