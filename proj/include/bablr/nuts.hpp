#pragma once

// Multinomial no-u-turn sampler over a diagonal Euclidean metric, with
// dual-averaging step-size adaptation and windowed variance estimation
// for the inverse mass. Chains run concurrently on independent RNG
// streams and merge deterministically by chain index.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <future>
#include <stdexcept>
#include <string>
#include <vector>

#include "bablr/math.hpp"
#include "bablr/rng.hpp"

namespace bablr {

struct SamplerConfig {
  int chains = 4;
  int warmup = 5000;
  int samples = 5000;
  double target_accept = 0.8;
  int max_treedepth = 10;
  std::uint64_t seed = 0;
  double init_radius = 2.0;  // uniform init jitter half-width, unconstrained scale

  void validate() const {
    if (chains < 1) throw std::invalid_argument("chains must be >= 1");
    if (samples < 1) throw std::invalid_argument("samples must be >= 1");
    if (warmup < 150) throw std::invalid_argument("warmup must be >= 150 for adaptation");
    if (!(target_accept > 0.0 && target_accept < 1.0))
      throw std::invalid_argument("target_accept must lie in (0,1)");
    if (max_treedepth < 0) throw std::invalid_argument("max_treedepth must be >= 0");
    if (!(init_radius >= 0.0)) throw std::invalid_argument("init_radius must be >= 0");
  }
};

struct TransitionStats {
  bool divergent = false;
  int treedepth = 0;
  double accept_stat = 0.0;
  double energy = 0.0;
  int n_leapfrog = 0;
};

// Posterior draws on the constrained scale, indexed (chain, iteration,
// parameter), plus per-transition sampler statistics.
struct DrawsStore {
  std::vector<std::string> names;
  std::size_t n_chains = 0;
  std::size_t n_iterations = 0;
  std::size_t n_params = 0;
  std::vector<double> values;          // [chain][iteration][parameter]
  std::vector<std::uint8_t> divergent; // [chain][iteration]
  std::vector<int> treedepth;
  std::vector<double> accept;
  std::vector<double> energy;
  bool has_stats = false;

  double value(std::size_t c, std::size_t it, std::size_t p) const {
    return values[(c * n_iterations + it) * n_params + p];
  }

  std::size_t index_of(const std::string& name) const {
    for (std::size_t p = 0; p < names.size(); ++p)
      if (names[p] == name) return p;
    throw std::invalid_argument("unknown parameter '" + name + "'");
  }

  // All draws of one parameter, pooled across chains in chain order.
  std::vector<double> column(std::size_t p) const {
    std::vector<double> out;
    out.reserve(n_chains * n_iterations);
    for (std::size_t c = 0; c < n_chains; ++c)
      for (std::size_t it = 0; it < n_iterations; ++it) out.push_back(value(c, it, p));
    return out;
  }

  std::vector<double> chain_column(std::size_t c, std::size_t p) const {
    std::vector<double> out(n_iterations);
    for (std::size_t it = 0; it < n_iterations; ++it) out[it] = value(c, it, p);
    return out;
  }

  std::size_t total_divergences() const {
    std::size_t k = 0;
    for (auto d : divergent) k += d;
    return k;
  }

  std::size_t treedepth_hits(int max_depth) const {
    std::size_t k = 0;
    for (int d : treedepth) k += (d >= max_depth);
    return k;
  }

  std::vector<double> chain_mean_accept() const {
    std::vector<double> out(n_chains, 0.0);
    for (std::size_t c = 0; c < n_chains; ++c) {
      double acc = 0.0;
      for (std::size_t it = 0; it < n_iterations; ++it) acc += accept[c * n_iterations + it];
      out[c] = n_iterations ? acc / static_cast<double>(n_iterations) : 0.0;
    }
    return out;
  }
};

// Nesterov-style dual averaging of log step size (gamma, t0, kappa as in
// the standard NUTS schedule).
class DualAveraging {
 public:
  DualAveraging(double initial_step, double target_accept, double gamma = 0.05, double t0 = 10.0,
                double kappa = 0.75)
      : mu_(std::log(10.0 * initial_step)),
        target_(target_accept),
        gamma_(gamma),
        t0_(t0),
        kappa_(kappa),
        log_eps_(std::log(initial_step)) {}

  void observe(double accept_stat) {
    ++count_;
    const double m = static_cast<double>(count_);
    h_bar_ += (target_ - accept_stat - h_bar_) / (m + t0_);
    log_eps_ = mu_ - std::sqrt(m) / gamma_ * h_bar_;
    const double w = std::pow(m, -kappa_);
    log_eps_bar_ = w * log_eps_ + (1.0 - w) * log_eps_bar_;
  }

  double current() const { return std::exp(log_eps_); }
  double adapted() const { return std::exp(log_eps_bar_); }

 private:
  double mu_;
  double target_;
  double gamma_, t0_, kappa_;
  double log_eps_;
  double log_eps_bar_ = 0.0;
  double h_bar_ = 0.0;
  long count_ = 0;
};

// Replays a history of acceptance statistics through dual averaging and
// returns the current step size.
inline double adapt_step_size(const std::vector<double>& accept_history, double target_accept,
                              double initial_step = 1.0) {
  if (accept_history.empty())
    throw std::invalid_argument("adapt_step_size needs at least one acceptance statistic");
  DualAveraging da(initial_step, target_accept);
  for (double a : accept_history) da.observe(a);
  return da.current();
}

// Streaming mean/variance per coordinate.
class WelfordAccumulator {
 public:
  explicit WelfordAccumulator(std::size_t dim) : mean_(dim, 0.0), m2_(dim, 0.0) {}

  void add(const std::vector<double>& x) {
    ++count_;
    const double n = static_cast<double>(count_);
    for (std::size_t k = 0; k < mean_.size(); ++k) {
      const double d = x[k] - mean_[k];
      mean_[k] += d / n;
      m2_[k] += d * (x[k] - mean_[k]);
    }
  }

  std::size_t count() const { return count_; }

  std::vector<double> variance() const {
    std::vector<double> out(mean_.size(), 0.0);
    if (count_ > 1)
      for (std::size_t k = 0; k < out.size(); ++k)
        out[k] = m2_[k] / static_cast<double>(count_ - 1);
    return out;
  }

  // Empirical variance shrunk toward 1 with weight 5/(n+5).
  std::vector<double> regularized_variance() const {
    const double n = static_cast<double>(count_);
    const double w = n / (n + 5.0);
    std::vector<double> out = variance();
    for (double& v : out) v = w * v + (1.0 - w);
    return out;
  }

  void reset() {
    count_ = 0;
    std::fill(mean_.begin(), mean_.end(), 0.0);
    std::fill(m2_.begin(), m2_.end(), 0.0);
  }

 private:
  std::vector<double> mean_, m2_;
  std::size_t count_ = 0;
};

// Diagonal inverse-mass estimate from a window of unconstrained draws.
inline std::vector<double> adapt_mass(const std::vector<std::vector<double>>& window) {
  if (window.size() < 2) throw std::invalid_argument("adapt_mass needs at least 2 draws");
  WelfordAccumulator acc(window.front().size());
  for (const auto& draw : window) acc.add(draw);
  return acc.regularized_variance();
}

// Warmup layout: a step-size-only buffer, expanding variance windows, and
// a final step-size-only buffer. Returns the iteration indices at which a
// window closes (the tail is folded into the last window).
inline std::vector<int> mass_window_ends(int warmup, int init_buffer = 75, int term_buffer = 50,
                                         int base_window = 25) {
  std::vector<int> ends;
  const int boundary = warmup - term_buffer;
  int start = init_buffer;
  int size = base_window;
  if (start >= boundary) return ends;
  while (true) {
    int end = start + size;
    if (end > boundary || end + 2 * size > boundary) end = boundary;
    ends.push_back(end);
    if (end >= boundary) break;
    start = end;
    size *= 2;
  }
  return ends;
}

namespace detail {

struct NutsState {
  std::vector<double> q, p, g;
  double logp = 0.0;
};

template <class Target>
class NutsKernel {
 public:
  NutsKernel(const Target& target, std::size_t dim, double step_size,
             const std::vector<double>& inv_mass, int max_treedepth,
             double max_energy_error = 1000.0)
      : target_(target),
        dim_(dim),
        eps_(step_size),
        inv_mass_(inv_mass),
        max_depth_(max_treedepth),
        max_energy_error_(max_energy_error) {}

  TransitionStats transition(std::vector<double>& q, Rng& rng) {
    TransitionStats stats;
    NutsState z;
    z.q = q;
    z.g.resize(dim_);
    z.logp = target_(z.q, z.g);
    if (!std::isfinite(z.logp))
      throw std::runtime_error("non-finite log density at the start of a transition");
    z.p.resize(dim_);
    for (std::size_t k = 0; k < dim_; ++k) z.p[k] = rng.normal() / std::sqrt(inv_mass_[k]);

    const double h0 = hamiltonian(z);
    stats.energy = h0;
    if (max_depth_ == 0) return stats;  // depth-zero tree: stay put

    NutsState z_minus = z, z_plus = z;
    std::vector<double> q_sample = z.q;
    double h_sample = h0;
    std::vector<double> rho = z.p;
    double log_sum_weight = 0.0;
    double sum_metro = 0.0;
    int n_leapfrog = 0;
    bool divergent = false;
    int depth = 0;

    while (depth < max_depth_) {
      const bool forward = rng.uniform() < 0.5;
      std::vector<double> rho_sub(dim_, 0.0);
      std::vector<double> p_beg, p_end, q_prop;
      double h_prop = 0.0;
      double lsw_sub = kNegInf;
      NutsState& edge = forward ? z_plus : z_minus;
      const bool valid =
          build_tree(depth, edge, forward ? eps_ : -eps_, h0, rho_sub, p_beg, p_end, q_prop,
                     h_prop, lsw_sub, sum_metro, n_leapfrog, divergent, rng);
      if (!valid) break;
      ++depth;
      if (lsw_sub > log_sum_weight || rng.uniform() < std::exp(lsw_sub - log_sum_weight)) {
        q_sample = q_prop;
        h_sample = h_prop;
      }
      log_sum_weight = log_sum_exp(log_sum_weight, lsw_sub);
      for (std::size_t k = 0; k < dim_; ++k) rho[k] += rho_sub[k];
      if (!criterion(rho, z_minus.p, z_plus.p)) break;
    }

    q = q_sample;
    stats.divergent = divergent;
    stats.treedepth = depth;
    stats.accept_stat = n_leapfrog > 0 ? sum_metro / static_cast<double>(n_leapfrog) : 0.0;
    stats.energy = h_sample;
    stats.n_leapfrog = n_leapfrog;
    return stats;
  }

 private:
  double hamiltonian(const NutsState& s) const {
    double kin = 0.0;
    for (std::size_t k = 0; k < dim_; ++k) kin += s.p[k] * s.p[k] * inv_mass_[k];
    return -s.logp + 0.5 * kin;
  }

  void leapfrog(NutsState& s, double eps) const {
    for (std::size_t k = 0; k < dim_; ++k) s.p[k] += 0.5 * eps * s.g[k];
    for (std::size_t k = 0; k < dim_; ++k) s.q[k] += eps * inv_mass_[k] * s.p[k];
    s.logp = target_(s.q, s.g);
    for (std::size_t k = 0; k < dim_; ++k) s.p[k] += 0.5 * eps * s.g[k];
  }

  // Generalized no-u-turn check across a trajectory span.
  bool criterion(const std::vector<double>& rho, const std::vector<double>& p_a,
                 const std::vector<double>& p_b) const {
    double da = 0.0, db = 0.0;
    for (std::size_t k = 0; k < dim_; ++k) {
      da += rho[k] * inv_mass_[k] * p_a[k];
      db += rho[k] * inv_mass_[k] * p_b[k];
    }
    return da > 0.0 && db > 0.0;
  }

  // Grows a subtree of 2^depth leapfrog states from `edge` (modified in
  // place to the new outermost state). Accumulates the subtree momentum
  // sum, boundary momenta, a multinomial proposal, and the acceptance
  // statistics. Returns false on divergence or an internal u-turn.
  bool build_tree(int depth, NutsState& edge, double eps, double h0, std::vector<double>& rho,
                  std::vector<double>& p_beg, std::vector<double>& p_end,
                  std::vector<double>& q_prop, double& h_prop, double& lsw, double& sum_metro,
                  int& n_leapfrog, bool& divergent, Rng& rng) const {
    if (depth == 0) {
      leapfrog(edge, eps);
      ++n_leapfrog;
      double h = std::isfinite(edge.logp) ? hamiltonian(edge) : kPosInf;
      if (std::isnan(h)) h = kPosInf;
      const double dh = h0 - h;
      if (h - h0 > max_energy_error_) divergent = true;
      sum_metro += std::min(1.0, std::exp(dh));
      if (divergent) return false;
      lsw = log_sum_exp(lsw, dh);
      q_prop = edge.q;
      h_prop = h;
      for (std::size_t k = 0; k < dim_; ++k) rho[k] += edge.p[k];
      p_beg = edge.p;
      p_end = edge.p;
      return true;
    }

    // inner half
    std::vector<double> p_end_inner;
    if (!build_tree(depth - 1, edge, eps, h0, rho, p_beg, p_end_inner, q_prop, h_prop, lsw,
                    sum_metro, n_leapfrog, divergent, rng))
      return false;
    // outer half
    std::vector<double> rho_outer(dim_, 0.0);
    std::vector<double> p_beg_outer, q_prop_outer;
    double h_prop_outer = 0.0;
    double lsw_outer = kNegInf;
    if (!build_tree(depth - 1, edge, eps, h0, rho_outer, p_beg_outer, p_end, q_prop_outer,
                    h_prop_outer, lsw_outer, sum_metro, n_leapfrog, divergent, rng))
      return false;

    const double lsw_total = log_sum_exp(lsw, lsw_outer);
    if (lsw_outer > lsw_total || rng.uniform() < std::exp(lsw_outer - lsw_total)) {
      q_prop = q_prop_outer;
      h_prop = h_prop_outer;
    }
    lsw = lsw_total;

    // merged span plus the cross-boundary checks
    std::vector<double> rho_inner = rho;
    for (std::size_t k = 0; k < dim_; ++k) rho[k] += rho_outer[k];
    bool ok = criterion(rho, p_beg, p_end);
    std::vector<double> rho_ext(dim_);
    for (std::size_t k = 0; k < dim_; ++k) rho_ext[k] = rho_inner[k] + p_beg_outer[k];
    ok = ok && criterion(rho_ext, p_beg, p_beg_outer);
    for (std::size_t k = 0; k < dim_; ++k) rho_ext[k] = rho_outer[k] + p_end_inner[k];
    ok = ok && criterion(rho_ext, p_end_inner, p_end);
    return ok;
  }

  const Target& target_;
  std::size_t dim_;
  double eps_;
  const std::vector<double>& inv_mass_;
  int max_depth_;
  double max_energy_error_;
};

}  // namespace detail

// One NUTS transition from `position` against `target` (a callable
// returning the log density and filling the gradient).
template <class Target>
TransitionStats nuts_transition(std::vector<double>& position, const Target& target,
                                double step_size, const std::vector<double>& inv_mass_diag,
                                int max_treedepth, Rng& rng) {
  if (!(step_size > 0.0)) throw std::invalid_argument("step_size must be > 0");
  for (double m : inv_mass_diag)
    if (!(m > 0.0)) throw std::invalid_argument("inv_mass_diag must be strictly positive");
  detail::NutsKernel<Target> kernel(target, position.size(), step_size, inv_mass_diag,
                                    max_treedepth);
  return kernel.transition(position, rng);
}

namespace detail {

// Doubles/halves the step until a single leapfrog step crosses 50%
// acceptance, starting from eps = 1.
template <class Target>
double find_reasonable_step_size(const Target& target, const std::vector<double>& q0,
                                 const std::vector<double>& inv_mass, Rng& rng) {
  const std::size_t dim = q0.size();
  NutsState start;
  start.q = q0;
  start.g.resize(dim);
  start.logp = target(start.q, start.g);
  start.p.resize(dim);
  for (std::size_t k = 0; k < dim; ++k) start.p[k] = rng.normal() / std::sqrt(inv_mass[k]);
  double kin = 0.0;
  for (std::size_t k = 0; k < dim; ++k) kin += start.p[k] * start.p[k] * inv_mass[k];
  const double h0 = -start.logp + 0.5 * kin;

  double eps = 1.0;
  int direction = 0;
  for (int it = 0; it < 100; ++it) {
    NutsState s = start;
    for (std::size_t k = 0; k < dim; ++k) s.p[k] += 0.5 * eps * s.g[k];
    for (std::size_t k = 0; k < dim; ++k) s.q[k] += eps * inv_mass[k] * s.p[k];
    s.logp = target(s.q, s.g);
    for (std::size_t k = 0; k < dim; ++k) s.p[k] += 0.5 * eps * s.g[k];
    double h1;
    if (std::isfinite(s.logp)) {
      kin = 0.0;
      for (std::size_t k = 0; k < dim; ++k) kin += s.p[k] * s.p[k] * inv_mass[k];
      h1 = -s.logp + 0.5 * kin;
    } else {
      h1 = kPosInf;
    }
    const double accept = std::exp(h0 - h1);
    if (direction == 0) direction = accept > 0.5 ? 1 : -1;
    if (direction == 1 && !(accept > 0.5)) break;
    if (direction == -1 && !(accept < 0.5)) break;
    eps = direction == 1 ? 2.0 * eps : 0.5 * eps;
    if (eps > 1e7 || eps < 1e-10)
      throw std::runtime_error("step-size search left (1e-10, 1e7); check the model scaling");
  }
  return eps;
}

struct ChainResult {
  std::vector<double> draws;  // [iteration][parameter], constrained
  std::vector<std::uint8_t> divergent;
  std::vector<int> treedepth;
  std::vector<double> accept;
  std::vector<double> energy;
};

template <class Model>
ChainResult run_single_chain(const Model& model, const SamplerConfig& cfg, int chain_index) {
  Rng rng = Rng::stream(cfg.seed, static_cast<std::uint64_t>(chain_index));
  const std::size_t dim = model.dim();
  auto target = [&model](const std::vector<double>& zz, std::vector<double>& gg) {
    return model.log_density_with_gradient(zz, gg);
  };

  // initialization: retry until the density is finite
  std::vector<double> q(dim), grad(dim);
  bool initialized = false;
  for (int attempt = 0; attempt < 100 && !initialized; ++attempt) {
    for (auto& v : q) v = rng.uniform(-cfg.init_radius, cfg.init_radius);
    initialized = std::isfinite(target(q, grad));
  }
  if (!initialized)
    throw std::runtime_error("chain " + std::to_string(chain_index) +
                             ": no finite initialization within 100 draws");

  std::vector<double> inv_mass(dim, 1.0);
  double eps = find_reasonable_step_size(target, q, inv_mass, rng);
  DualAveraging da(eps, cfg.target_accept);
  const std::vector<int> window_ends = mass_window_ends(cfg.warmup);
  std::size_t next_window = 0;
  const int mass_begin = 75;
  const int mass_end = window_ends.empty() ? 0 : window_ends.back();
  WelfordAccumulator welford(dim);

  for (int m = 0; m < cfg.warmup; ++m) {
    detail::NutsKernel<decltype(target)> kernel(target, dim, eps, inv_mass, cfg.max_treedepth);
    const TransitionStats st = kernel.transition(q, rng);
    da.observe(st.accept_stat);
    eps = da.current();
    if (m >= mass_begin && m < mass_end) welford.add(q);
    if (next_window < window_ends.size() && m + 1 == window_ends[next_window]) {
      if (welford.count() >= 2) inv_mass = welford.regularized_variance();
      welford.reset();
      ++next_window;
      eps = find_reasonable_step_size(target, q, inv_mass, rng);
      da = DualAveraging(eps, cfg.target_accept);
    }
  }
  eps = da.adapted();

  ChainResult out;
  out.draws.resize(static_cast<std::size_t>(cfg.samples) * dim);
  out.divergent.resize(cfg.samples);
  out.treedepth.resize(cfg.samples);
  out.accept.resize(cfg.samples);
  out.energy.resize(cfg.samples);
  std::vector<double> constrained;
  detail::NutsKernel<decltype(target)> kernel(target, dim, eps, inv_mass, cfg.max_treedepth);
  for (int s = 0; s < cfg.samples; ++s) {
    const TransitionStats st = kernel.transition(q, rng);
    model.constrain(q, constrained);
    std::copy(constrained.begin(), constrained.end(),
              out.draws.begin() + static_cast<std::size_t>(s) * dim);
    out.divergent[s] = st.divergent ? 1 : 0;
    out.treedepth[s] = st.treedepth;
    out.accept[s] = st.accept_stat;
    out.energy[s] = st.energy;
  }
  return out;
}

}  // namespace detail

// Runs `cfg.chains` adaptive NUTS chains against the model and merges the
// post-warmup draws. Identical (model, config) inputs give bit-identical
// stores: every chain owns the RNG stream (seed, chain index) and merging
// is by chain index regardless of completion order.
template <class Model>
DrawsStore run_chains(const Model& model, const SamplerConfig& cfg) {
  cfg.validate();
  const std::size_t dim = model.dim();
  std::vector<std::future<detail::ChainResult>> futures;
  futures.reserve(cfg.chains);
  for (int c = 0; c < cfg.chains; ++c)
    futures.push_back(std::async(std::launch::async,
                                 [&model, &cfg, c]() { return detail::run_single_chain(model, cfg, c); }));

  DrawsStore store;
  store.names = model.constrained_names();
  store.n_chains = cfg.chains;
  store.n_iterations = cfg.samples;
  store.n_params = dim;
  store.values.resize(store.n_chains * store.n_iterations * store.n_params);
  store.divergent.resize(store.n_chains * store.n_iterations);
  store.treedepth.resize(store.n_chains * store.n_iterations);
  store.accept.resize(store.n_chains * store.n_iterations);
  store.energy.resize(store.n_chains * store.n_iterations);
  store.has_stats = true;

  for (int c = 0; c < cfg.chains; ++c) {
    detail::ChainResult r = futures[c].get();
    std::copy(r.draws.begin(), r.draws.end(),
              store.values.begin() + static_cast<std::size_t>(c) * store.n_iterations * dim);
    const std::size_t base = static_cast<std::size_t>(c) * store.n_iterations;
    std::copy(r.divergent.begin(), r.divergent.end(), store.divergent.begin() + base);
    std::copy(r.treedepth.begin(), r.treedepth.end(), store.treedepth.begin() + base);
    std::copy(r.accept.begin(), r.accept.end(), store.accept.begin() + base);
    std::copy(r.energy.begin(), r.energy.end(), store.energy.begin() + base);
  }
  for (double v : store.values)
    if (std::isnan(v)) throw std::runtime_error("NaN in stored draws");
  return store;
}

}  // namespace bablr
