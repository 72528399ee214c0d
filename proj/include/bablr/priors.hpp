#pragma once

// Prior system: location priors are normal (the slope decrement's is a
// negative half-normal), scale priors come from a configurable family.

#include <array>
#include <cmath>
#include <optional>
#include <stdexcept>
#include <string>

#include "bablr/math.hpp"

namespace bablr {

enum class ScaleFamily { half_cauchy, half_normal, lognormal, half_student_t };

inline std::string to_string(ScaleFamily f) {
  switch (f) {
    case ScaleFamily::half_cauchy: return "half-cauchy";
    case ScaleFamily::half_normal: return "half-normal";
    case ScaleFamily::lognormal: return "lognormal";
    case ScaleFamily::half_student_t: return "half-t";
  }
  return "?";
}

struct ScalePrior {
  ScaleFamily family = ScaleFamily::half_cauchy;
  double location = 0.0;
  double scale = 1.0;
  double df = 4.0;  // half_student_t only
};

struct NormalPrior {
  double location = 0.0;
  double scale = 1.0;
};

// Log density of a scale prior at x (constrained scale). Outside the
// support the density is zero, signalled as -inf.
inline double scale_prior_lpdf(const ScalePrior& p, double x) {
  const double t = (x - p.location) / p.scale;
  switch (p.family) {
    case ScaleFamily::half_cauchy:
      if (x < p.location) return kNegInf;
      return std::log(2.0 / M_PI) - std::log(p.scale) - std::log1p(t * t);
    case ScaleFamily::half_normal:
      if (x < p.location) return kNegInf;
      return std::log(2.0) + normal_lpdf(x, p.location, p.scale);
    case ScaleFamily::lognormal: {
      if (x <= 0.0) return kNegInf;
      const double lz = (std::log(x) - p.location) / p.scale;
      return -std::log(x) - std::log(p.scale) - 0.5 * kLog2Pi - 0.5 * lz * lz;
    }
    case ScaleFamily::half_student_t: {
      if (x < p.location) return kNegInf;
      const double v = p.df;
      return std::log(2.0) + std::lgamma(0.5 * (v + 1.0)) - std::lgamma(0.5 * v) -
             0.5 * std::log(v * M_PI) - std::log(p.scale) -
             0.5 * (v + 1.0) * std::log1p(t * t / v);
    }
  }
  return kNegInf;
}

// d/dx of the log density above, valid strictly inside the support.
inline double scale_prior_dlpdf_dx(const ScalePrior& p, double x) {
  const double d = x - p.location;
  switch (p.family) {
    case ScaleFamily::half_cauchy:
      return -2.0 * d / (p.scale * p.scale + d * d);
    case ScaleFamily::half_normal:
      return -d / (p.scale * p.scale);
    case ScaleFamily::lognormal:
      return (-1.0 - (std::log(x) - p.location) / (p.scale * p.scale)) / x;
    case ScaleFamily::half_student_t:
      return -(p.df + 1.0) * d / (p.df * p.scale * p.scale + d * d);
  }
  return 0.0;
}

// Hyperparameters for every prior in the model plus the optional change
// point lower bound. Scale-parameter slots are indexed u1..u4, then the
// residual scale separately.
struct PriorConfig {
  NormalPrior beta1_0{0.0, 10.0};
  NormalPrior beta2_0{0.0, 10.0};
  NormalPrior beta3_0{0.0, 5.0};  // half-normal on (-inf, 0]
  NormalPrior omega_0{70.0, 10.0};
  ScalePrior sigma_y{ScaleFamily::half_cauchy, 0.0, 10.0};
  std::array<ScalePrior, 4> sigma_u{
      ScalePrior{ScaleFamily::half_cauchy, 0.0, 10.0},
      ScalePrior{ScaleFamily::lognormal, 0.0, 0.2},
      ScalePrior{ScaleFamily::half_cauchy, 0.0, 5.0},
      ScalePrior{ScaleFamily::half_cauchy, 0.0, 10.0}};
  // Random-effect prior means; nonzero values would be unidentifiable
  // against the fixed effects, so anything but 0 is rejected.
  std::array<double, 4> mu_u{0.0, 0.0, 0.0, 0.0};
  std::optional<double> cp_lower_bound = 40.0;

  static PriorConfig application_defaults() { return PriorConfig{}; }

  static PriorConfig simulation_defaults() {
    PriorConfig c;
    c.omega_0 = NormalPrior{10.0, 10.0};
    c.sigma_u[1] = ScalePrior{ScaleFamily::half_cauchy, 0.0, 1.0};
    c.cp_lower_bound.reset();
    return c;
  }

  void validate() const {
    auto check_scale = [](const ScalePrior& p, const std::string& name) {
      if (!(p.scale > 0.0)) throw std::invalid_argument("prior scale for " + name + " must be > 0");
      if (p.family == ScaleFamily::half_student_t && !(p.df > 0.0))
        throw std::invalid_argument("half-t df for " + name + " must be > 0");
    };
    if (!(beta1_0.scale > 0.0) || !(beta2_0.scale > 0.0) || !(beta3_0.scale > 0.0) ||
        !(omega_0.scale > 0.0))
      throw std::invalid_argument("location prior scales must be > 0");
    check_scale(sigma_y, "sigma_y");
    for (int k = 0; k < 4; ++k) check_scale(sigma_u[k], "sigma_u" + std::to_string(k + 1));
    for (int k = 0; k < 4; ++k)
      if (mu_u[k] != 0.0)
        throw std::invalid_argument("random-effect prior mean mu_u" + std::to_string(k + 1) +
                                    " must be 0");
    if (cp_lower_bound && !std::isfinite(*cp_lower_bound))
      throw std::invalid_argument("cp_lower_bound must be finite");
  }
};

}  // namespace bablr
