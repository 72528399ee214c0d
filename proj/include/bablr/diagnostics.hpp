#pragma once

// Convergence / efficiency diagnostics: split potential-scale-reduction
// and rank-normalized bulk effective sample size. Both operate on the
// half-chains obtained by splitting every chain in two, so a single chain
// still yields a between/within comparison. Degenerate inputs are
// reported as undefined, never silently as 1.

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "bablr/math.hpp"
#include "bablr/nuts.hpp"

namespace bablr {

namespace detail {

// Splits (chain, iteration) draws into 2C half-chains of equal length; an
// odd middle element per chain is dropped.
inline std::vector<std::vector<double>> split_halves(const std::vector<std::vector<double>>& chains) {
  std::vector<std::vector<double>> halves;
  for (const auto& c : chains) {
    const std::size_t half = c.size() / 2;
    halves.emplace_back(c.begin(), c.begin() + half);
    halves.emplace_back(c.end() - half, c.end());
  }
  return halves;
}

// Autocovariance at `lag` with 1/n normalization.
inline double autocovariance(const std::vector<double>& x, double mean, std::size_t lag) {
  const std::size_t n = x.size();
  double acc = 0.0;
  for (std::size_t i = 0; i + lag < n; ++i) acc += (x[i] - mean) * (x[i + lag] - mean);
  return acc / static_cast<double>(n);
}

}  // namespace detail

struct DiagnosticValue {
  double value = kNaN;
  bool defined = false;
};

// Split potential scale reduction over half-chains:
// sqrt(((n-1)/n * W + B/n) / W).
inline DiagnosticValue split_rhat(const std::vector<std::vector<double>>& chains) {
  for (const auto& c : chains)
    if (c.size() < 2) throw std::invalid_argument("split_rhat needs >= 2 iterations per chain");
  const auto halves = detail::split_halves(chains);
  const std::size_t m = halves.size();
  const std::size_t n = halves.front().size();
  if (n < 2) throw std::invalid_argument("split_rhat needs >= 2 iterations per half-chain");

  std::vector<double> means(m), vars(m);
  for (std::size_t c = 0; c < m; ++c) {
    means[c] = mean_of(halves[c]);
    vars[c] = variance_of(halves[c]);
  }
  const double w = mean_of(vars);
  const double b = static_cast<double>(n) * variance_of(means);
  if (!(w > 0.0) || !std::isfinite(w) || !std::isfinite(b)) return {};
  const double nd = static_cast<double>(n);
  const double var_hat = (nd - 1.0) / nd * w + b / nd;
  return {std::sqrt(var_hat / w), true};
}

inline DiagnosticValue split_rhat(const DrawsStore& store, std::size_t param) {
  std::vector<std::vector<double>> chains;
  for (std::size_t c = 0; c < store.n_chains; ++c) chains.push_back(store.chain_column(c, param));
  return split_rhat(chains);
}

// Rank-normalized bulk ESS over split half-chains, using Geyer's initial
// monotone positive pair sequence to truncate the autocorrelation sum.
// Clamped above at total * log10(total) to bound antithetic blow-ups.
inline DiagnosticValue ess_bulk(const std::vector<std::vector<double>>& chains) {
  for (const auto& c : chains)
    if (c.size() < 4) throw std::invalid_argument("ess_bulk needs >= 4 iterations per chain");
  auto halves = detail::split_halves(chains);
  const std::size_t m = halves.size();
  const std::size_t n = halves.front().size();
  if (n < 8) return {};  // too short for a stable autocorrelation estimate

  // rank-normalize pooled draws
  std::vector<double> pooled;
  pooled.reserve(m * n);
  for (const auto& h : halves) pooled.insert(pooled.end(), h.begin(), h.end());
  const bool degenerate = [&] {
    for (double v : pooled)
      if (v != pooled.front()) return false;
    return true;
  }();
  if (degenerate) return {};
  const std::vector<double> ranks = average_ranks(pooled);
  const double denom = static_cast<double>(pooled.size()) + 0.25;
  std::size_t pos = 0;
  for (auto& h : halves)
    for (auto& v : h) v = inverse_normal_cdf((ranks[pos++] - 0.375) / denom);

  std::vector<double> means(m);
  std::vector<double> acov0(m);
  for (std::size_t c = 0; c < m; ++c) {
    means[c] = mean_of(halves[c]);
    acov0[c] = detail::autocovariance(halves[c], means[c], 0);
  }
  const double nd = static_cast<double>(n);
  double mean_var = 0.0;
  for (double a : acov0) mean_var += a * nd / (nd - 1.0);
  mean_var /= static_cast<double>(m);
  double var_plus = mean_var * (nd - 1.0) / nd;
  if (m > 1) var_plus += variance_of(means);
  if (!(var_plus > 0.0) || !std::isfinite(var_plus)) return {};

  auto rho_at = [&](std::size_t lag) {
    double acc = 0.0;
    for (std::size_t c = 0; c < m; ++c) acc += detail::autocovariance(halves[c], means[c], lag);
    acc /= static_cast<double>(m);
    return 1.0 - (mean_var - acc) / var_plus;
  };

  std::vector<double> rho(n, 0.0);
  rho[0] = 1.0;
  double rho_even = 1.0;
  double rho_odd = rho_at(1);
  rho[1] = rho_odd;
  std::size_t s = 1;
  while (s < n - 4 && rho_even + rho_odd > 0.0) {
    rho_even = rho_at(s + 1);
    rho_odd = rho_at(s + 2);
    if (rho_even + rho_odd >= 0.0) {
      rho[s + 1] = rho_even;
      rho[s + 2] = rho_odd;
    }
    s += 2;
  }
  const std::size_t max_s = s;
  // retain the last even term as a bias correction for antithetic chains
  if (rho_even > 0.0) rho[max_s + 1] = rho_even;
  // enforce monotone non-increasing pair sums
  for (std::size_t k = 1; k + 3 <= max_s; k += 2) {
    if (rho[k + 1] + rho[k + 2] > rho[k - 1] + rho[k]) {
      rho[k + 1] = (rho[k - 1] + rho[k]) / 2.0;
      rho[k + 2] = rho[k + 1];
    }
  }

  const double total = static_cast<double>(m) * nd;
  double tau = -1.0 + rho[max_s + 1];
  for (std::size_t k = 0; k < max_s; ++k) tau += 2.0 * rho[k];
  const double cap = total * std::log10(total);
  if (!(tau > 0.0)) return {cap, true};
  return {std::min(total / tau, cap), true};
}

inline DiagnosticValue ess_bulk(const DrawsStore& store, std::size_t param) {
  std::vector<std::vector<double>> chains;
  for (std::size_t c = 0; c < store.n_chains; ++c) chains.push_back(store.chain_column(c, param));
  return ess_bulk(chains);
}

struct DiagnosticsReport {
  std::vector<std::string> names;
  std::vector<DiagnosticValue> rhat;
  std::vector<DiagnosticValue> ess;
  std::size_t divergences = 0;
  std::size_t treedepth_hits = 0;
  std::vector<double> chain_mean_accept;

  double max_rhat() const {
    double r = 0.0;
    for (const auto& v : rhat)
      if (v.defined && v.value > r) r = v.value;
    return r;
  }

  bool all_rhat_below(double threshold) const {
    for (const auto& v : rhat)
      if (!v.defined || !(v.value < threshold)) return false;
    return true;
  }
};

inline DiagnosticsReport diagnose(const DrawsStore& store, int max_treedepth) {
  DiagnosticsReport rep;
  rep.names = store.names;
  rep.rhat.resize(store.n_params);
  rep.ess.resize(store.n_params);
  for (std::size_t p = 0; p < store.n_params; ++p) {
    rep.rhat[p] = split_rhat(store, p);
    rep.ess[p] = ess_bulk(store, p);
  }
  if (store.has_stats) {
    rep.divergences = store.total_divergences();
    rep.treedepth_hits = store.treedepth_hits(max_treedepth);
    rep.chain_mean_accept = store.chain_mean_accept();
  }
  return rep;
}

}  // namespace bablr
