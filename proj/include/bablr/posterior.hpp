#pragma once

// Posterior post-processing: parameter summaries, individual and
// population trajectory quantiles, random-effect correlation posteriors,
// and the mixture predictive distribution used for held-out validation.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

#include "bablr/data.hpp"
#include "bablr/math.hpp"
#include "bablr/model.hpp"
#include "bablr/nuts.hpp"

namespace bablr {

struct ParameterSummary {
  std::string name;
  double median = 0.0;
  double q025 = 0.0;
  double q975 = 0.0;
  double mean = 0.0;
  double sd = 0.0;
};

inline ParameterSummary summarize_column(const std::string& name, std::vector<double> values) {
  if (values.empty()) throw std::invalid_argument("summarize needs draws");
  std::sort(values.begin(), values.end());
  ParameterSummary s;
  s.name = name;
  s.median = quantile_of_sorted(values, 0.5);
  s.q025 = quantile_of_sorted(values, 0.025);
  s.q975 = quantile_of_sorted(values, 0.975);
  s.mean = mean_of(values);
  s.sd = values.size() > 1 ? sd_of(values) : 0.0;
  return s;
}

// Median and equal-tailed 95% interval (plus mean/SD) per parameter.
inline std::vector<ParameterSummary> summarize(const DrawsStore& store) {
  if (store.n_chains * store.n_iterations == 0) throw std::invalid_argument("empty draws store");
  std::vector<ParameterSummary> out;
  out.reserve(store.n_params);
  for (std::size_t p = 0; p < store.n_params; ++p)
    out.push_back(summarize_column(store.names[p], store.column(p)));
  return out;
}

// Quantile trajectories over an age grid; curves indexed [quantile][age].
struct QuantileCurves {
  std::vector<double> ages;
  std::vector<double> quantiles;
  std::vector<std::vector<double>> values;
};

namespace detail {

struct SubjectColumns {
  std::string id;
  std::size_t u1 = 0, u2 = 0, u3 = 0, u4 = 0;
};

// Recovers the per-subject column blocks from the draw names.
inline std::vector<SubjectColumns> subject_columns(const DrawsStore& store) {
  std::vector<SubjectColumns> out;
  for (std::size_t p = 0; p < store.names.size(); ++p) {
    const std::string& nm = store.names[p];
    if (nm.rfind("u1[", 0) == 0 && nm.back() == ']') {
      SubjectColumns sc;
      sc.id = nm.substr(3, nm.size() - 4);
      sc.u1 = p;
      out.push_back(sc);
    }
  }
  for (auto& sc : out) {
    sc.u2 = store.index_of("u2[" + sc.id + "]");
    sc.u3 = store.index_of("u3[" + sc.id + "]");
    sc.u4 = store.index_of("u4[" + sc.id + "]");
  }
  return out;
}

struct DrawIndices {
  std::size_t beta1_0, beta2_0, beta3_0, omega_0, sigma_y;
};

inline DrawIndices population_columns(const DrawsStore& store) {
  return {store.index_of("beta1_0"), store.index_of("beta2_0"), store.index_of("beta3_0"),
          store.index_of("omega_0"), store.index_of("sigma_y")};
}

// Subject mean trajectory for one stored draw.
inline double subject_mean_at(const DrawsStore& store, const DrawIndices& pop,
                              const SubjectColumns& sc, std::size_t chain, std::size_t it,
                              double age) {
  const double b1 = store.value(chain, it, pop.beta1_0) + store.value(chain, it, sc.u1);
  const double b2 = store.value(chain, it, pop.beta2_0) + store.value(chain, it, sc.u2);
  const double b3 = store.value(chain, it, pop.beta3_0) + store.value(chain, it, sc.u3);
  const double om = store.value(chain, it, pop.omega_0) + store.value(chain, it, sc.u4);
  return bent_line_mean(b1, b2, b3, om, age);
}

inline void check_quantiles(const std::vector<double>& qs) {
  for (double q : qs)
    if (!(q > 0.0 && q < 1.0)) throw std::invalid_argument("quantile levels must lie in (0,1)");
}

}  // namespace detail

// Quantile bands of one subject's expected trajectory (residual noise is
// not included; the bands describe the mean curve).
inline QuantileCurves individual_trajectory(const DrawsStore& store, const std::string& subject_id,
                                            const std::vector<double>& ages,
                                            const std::vector<double>& quantiles) {
  detail::check_quantiles(quantiles);
  const auto pop = detail::population_columns(store);
  const auto subjects = detail::subject_columns(store);
  const detail::SubjectColumns* sc = nullptr;
  for (const auto& s : subjects)
    if (s.id == subject_id) sc = &s;
  if (!sc) throw std::invalid_argument("subject '" + subject_id + "' not present in the fit");

  QuantileCurves out;
  out.ages = ages;
  out.quantiles = quantiles;
  out.values.assign(quantiles.size(), std::vector<double>(ages.size(), 0.0));
  std::vector<double> draws(store.n_chains * store.n_iterations);
  for (std::size_t a = 0; a < ages.size(); ++a) {
    std::size_t k = 0;
    for (std::size_t c = 0; c < store.n_chains; ++c)
      for (std::size_t it = 0; it < store.n_iterations; ++it)
        draws[k++] = detail::subject_mean_at(store, pop, *sc, c, it, ages[a]);
    std::sort(draws.begin(), draws.end());
    for (std::size_t qi = 0; qi < quantiles.size(); ++qi)
      out.values[qi][a] = quantile_of_sorted(draws, quantiles[qi]);
  }
  return out;
}

// Population quantile curves: by default the requested quantiles are taken
// across subjects' posterior-median trajectories at each grid age; with
// `pooled_draws` every (draw, subject) trajectory value enters the pool.
inline QuantileCurves population_quantile_curves(const DrawsStore& store,
                                                 const std::vector<double>& ages,
                                                 const std::vector<double>& quantiles,
                                                 bool pooled_draws = false) {
  detail::check_quantiles(quantiles);
  const auto pop = detail::population_columns(store);
  const auto subjects = detail::subject_columns(store);
  if (subjects.empty()) throw std::invalid_argument("fit contains no subjects");
  const std::size_t n_draws = store.n_chains * store.n_iterations;

  QuantileCurves out;
  out.ages = ages;
  out.quantiles = quantiles;
  out.values.assign(quantiles.size(), std::vector<double>(ages.size(), 0.0));

  std::vector<double> pool;
  std::vector<double> per_draw(n_draws);
  for (std::size_t a = 0; a < ages.size(); ++a) {
    pool.clear();
    for (const auto& sc : subjects) {
      std::size_t k = 0;
      for (std::size_t c = 0; c < store.n_chains; ++c)
        for (std::size_t it = 0; it < store.n_iterations; ++it)
          per_draw[k++] = detail::subject_mean_at(store, pop, sc, c, it, ages[a]);
      if (pooled_draws) {
        pool.insert(pool.end(), per_draw.begin(), per_draw.end());
      } else {
        pool.push_back(sample_quantile(per_draw, 0.5));
      }
    }
    std::sort(pool.begin(), pool.end());
    for (std::size_t qi = 0; qi < quantiles.size(); ++qi)
      out.values[qi][a] = quantile_of_sorted(pool, quantiles[qi]);
  }
  return out;
}

// Posterior of the six pairwise random-effect correlations, computed per
// draw as empirical correlations across subjects.
struct CorrelationPosterior {
  static constexpr std::array<std::pair<int, int>, 6> pairs{
      {{1, 2}, {1, 3}, {1, 4}, {2, 3}, {2, 4}, {3, 4}}};
  std::array<std::vector<double>, 6> draws;
  std::array<double, 6> mean{};
  std::array<double, 6> sd{};
  std::size_t skipped = 0;  // draws with a zero-variance effect

  static std::string pair_name(std::size_t k) {
    return "rho_u" + std::to_string(pairs[k].first) + "_u" + std::to_string(pairs[k].second);
  }
};

inline CorrelationPosterior random_effect_correlations(const DrawsStore& store) {
  const auto subjects = detail::subject_columns(store);
  if (subjects.size() < 3)
    throw std::invalid_argument("correlation posterior needs at least 3 subjects");
  CorrelationPosterior out;
  const std::size_t ns = subjects.size();
  std::array<std::vector<double>, 4> u;
  for (auto& v : u) v.resize(ns);
  for (std::size_t c = 0; c < store.n_chains; ++c) {
    for (std::size_t it = 0; it < store.n_iterations; ++it) {
      for (std::size_t i = 0; i < ns; ++i) {
        u[0][i] = store.value(c, it, subjects[i].u1);
        u[1][i] = store.value(c, it, subjects[i].u2);
        u[2][i] = store.value(c, it, subjects[i].u3);
        u[3][i] = store.value(c, it, subjects[i].u4);
      }
      std::array<double, 6> r{};
      bool ok = true;
      for (std::size_t k = 0; k < 6 && ok; ++k) {
        r[k] = pearson_correlation(u[CorrelationPosterior::pairs[k].first - 1],
                                   u[CorrelationPosterior::pairs[k].second - 1]);
        ok = std::isfinite(r[k]);
      }
      if (!ok) {
        ++out.skipped;
        continue;
      }
      for (std::size_t k = 0; k < 6; ++k) out.draws[k].push_back(r[k]);
    }
  }
  for (std::size_t k = 0; k < 6; ++k) {
    out.mean[k] = mean_of(out.draws[k]);
    out.sd[k] = out.draws[k].size() > 1 ? sd_of(out.draws[k]) : 0.0;
  }
  return out;
}

// Mixture predictive distribution of a new observation: posterior draws of
// the subject mean paired with the residual-SD draws.
struct PredictiveDistribution {
  std::vector<double> mu_draws;
  std::vector<double> sigma_draws;

  void validate() const {
    if (mu_draws.empty() || mu_draws.size() != sigma_draws.size())
      throw std::invalid_argument("predictive distribution needs paired mu/sigma draws");
    for (double s : sigma_draws)
      if (!(s > 0.0)) throw std::invalid_argument("sigma draws must be positive");
  }
};

// P(Y <= y) = mean over draws of Phi((y - mu)/sigma).
inline double predictive_cdf(const PredictiveDistribution& pd, double y) {
  double acc = 0.0;
  for (std::size_t i = 0; i < pd.mu_draws.size(); ++i)
    acc += normal_cdf((y - pd.mu_draws[i]) / pd.sigma_draws[i]);
  return acc / static_cast<double>(pd.mu_draws.size());
}

// Inverts the predictive CDF by bisection.
inline double predictive_quantile(const PredictiveDistribution& pd, double q) {
  if (!(q > 0.0 && q < 1.0)) throw std::invalid_argument("quantile level must lie in (0,1)");
  double lo = pd.mu_draws[0], hi = pd.mu_draws[0];
  double smax = 0.0;
  for (std::size_t i = 0; i < pd.mu_draws.size(); ++i) {
    lo = std::min(lo, pd.mu_draws[i]);
    hi = std::max(hi, pd.mu_draws[i]);
    smax = std::max(smax, pd.sigma_draws[i]);
  }
  lo -= 10.0 * smax;
  hi += 10.0 * smax;
  while (predictive_cdf(pd, lo) > q) lo -= 10.0 * smax;
  while (predictive_cdf(pd, hi) < q) hi += 10.0 * smax;
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (predictive_cdf(pd, mid) < q)
      lo = mid;
    else
      hi = mid;
    if (hi - lo < 1e-8 * (1.0 + std::abs(lo) + std::abs(hi))) break;
  }
  return 0.5 * (lo + hi);
}

// Predictive distribution of subject `subject_id` at `time`, from its
// posterior draws and the residual-SD draws.
inline PredictiveDistribution subject_predictive(const DrawsStore& store,
                                                 const std::string& subject_id, double time) {
  const auto pop = detail::population_columns(store);
  const auto subjects = detail::subject_columns(store);
  const detail::SubjectColumns* sc = nullptr;
  for (const auto& s : subjects)
    if (s.id == subject_id) sc = &s;
  if (!sc) throw std::invalid_argument("subject '" + subject_id + "' not present in the fit");
  PredictiveDistribution pd;
  pd.mu_draws.reserve(store.n_chains * store.n_iterations);
  pd.sigma_draws.reserve(store.n_chains * store.n_iterations);
  for (std::size_t c = 0; c < store.n_chains; ++c)
    for (std::size_t it = 0; it < store.n_iterations; ++it) {
      pd.mu_draws.push_back(detail::subject_mean_at(store, pop, *sc, c, it, time));
      pd.sigma_draws.push_back(store.value(c, it, pop.sigma_y));
    }
  return pd;
}

struct HoldoutPoint {
  std::string subject_id;
  double time = 0.0;
  double y = 0.0;
  double q025 = 0.0;
  double q50 = 0.0;
  double q975 = 0.0;
  bool inside = false;
};

struct HoldoutReport {
  std::vector<HoldoutPoint> points;
  double coverage = 0.0;  // fraction of y inside the 95% predictive interval
};

// 95% predictive-interval coverage of held-out observations, one
// predictive mixture per (subject, time).
inline HoldoutReport holdout_validation(const DrawsStore& store,
                                        const LongitudinalDataset& heldout) {
  HoldoutReport rep;
  std::size_t inside = 0, total = 0;
  for (const auto& s : heldout.subjects) {
    for (std::size_t j = 0; j < s.times.size(); ++j) {
      const PredictiveDistribution pd = subject_predictive(store, s.id, s.times[j]);
      HoldoutPoint pt;
      pt.subject_id = s.id;
      pt.time = s.times[j];
      pt.y = s.outcomes[j];
      pt.q025 = predictive_quantile(pd, 0.025);
      pt.q50 = predictive_quantile(pd, 0.5);
      pt.q975 = predictive_quantile(pd, 0.975);
      pt.inside = pt.y >= pt.q025 && pt.y <= pt.q975;
      inside += pt.inside;
      ++total;
      rep.points.push_back(std::move(pt));
    }
  }
  if (total == 0) throw std::invalid_argument("no held-out observations");
  rep.coverage = static_cast<double>(inside) / static_cast<double>(total);
  return rep;
}

}  // namespace bablr
