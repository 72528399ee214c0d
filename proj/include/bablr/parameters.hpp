#pragma once

// Constrained-scale parameters and the unconstrained coordinate layout.

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace bablr {

struct FixedEffects {
  double beta1_0 = 0.0;  // expected outcome at the change point
  double beta2_0 = 0.0;  // pre-change slope (units/year)
  double beta3_0 = 0.0;  // slope decrement, <= 0
  double omega_0 = 0.0;  // population change point (years)
};

struct ScaleParameters {
  double sigma_y = 1.0;  // residual SD
  double sigma_u1 = 1.0;
  double sigma_u2 = 1.0;
  double sigma_u3 = 1.0;
  double sigma_u4 = 1.0;

  double sigma_u(std::size_t k) const {
    switch (k) {
      case 0: return sigma_u1;
      case 1: return sigma_u2;
      case 2: return sigma_u3;
      case 3: return sigma_u4;
    }
    throw std::out_of_range("sigma_u index");
  }
};

// Per-subject deviations from the population values.
struct SubjectEffects {
  double u1 = 0.0;
  double u2 = 0.0;
  double u3 = 0.0;
  double u4 = 0.0;
};

struct ModelParameters {
  FixedEffects fixed;
  ScaleParameters scales;
  std::vector<SubjectEffects> subjects;

  double beta1(std::size_t i) const { return fixed.beta1_0 + subjects[i].u1; }
  double beta2(std::size_t i) const { return fixed.beta2_0 + subjects[i].u2; }
  double beta3(std::size_t i) const { return fixed.beta3_0 + subjects[i].u3; }
  double omega(std::size_t i) const { return fixed.omega_0 + subjects[i].u4; }
};

// Position of every named parameter inside the unconstrained vector (and,
// with the same ordering, inside a stored constrained draw):
//
//   0 beta1_0 | 1 beta2_0 | 2 beta3_0 | 3 omega_0 | 4 sigma_y |
//   5..8 sigma_u1..sigma_u4 | then per-subject blocks u1, u2, u3, u4,
//   each of length n_subjects.
//
// Unconstrained coordinates: scales are log-transformed; beta3_0 and each
// subject's slope decrement live on -exp(z); the change points live on
// lower_bound + exp(z) when a bound is configured. u1/u2 (and u4 when
// unbounded) are standardized deviates when `centered` is false.
struct ParameterLayout {
  std::size_t n_subjects = 0;
  bool centered = false;
  std::optional<double> cp_lower_bound;

  static constexpr std::size_t kBeta10 = 0;
  static constexpr std::size_t kBeta20 = 1;
  static constexpr std::size_t kBeta30 = 2;
  static constexpr std::size_t kOmega0 = 3;
  static constexpr std::size_t kSigmaY = 4;
  static constexpr std::size_t kSigmaU1 = 5;
  static constexpr std::size_t kFixedCount = 9;

  std::size_t dim() const { return kFixedCount + 4 * n_subjects; }
  std::size_t u1(std::size_t i) const { return kFixedCount + i; }
  std::size_t u2(std::size_t i) const { return kFixedCount + n_subjects + i; }
  std::size_t u3(std::size_t i) const { return kFixedCount + 2 * n_subjects + i; }
  std::size_t u4(std::size_t i) const { return kFixedCount + 3 * n_subjects + i; }

  std::vector<std::string> names(const std::vector<std::string>& subject_ids) const {
    if (subject_ids.size() != n_subjects)
      throw std::invalid_argument("subject id count does not match layout");
    std::vector<std::string> out;
    out.reserve(dim());
    out.insert(out.end(), {"beta1_0", "beta2_0", "beta3_0", "omega_0", "sigma_y", "sigma_u1",
                           "sigma_u2", "sigma_u3", "sigma_u4"});
    for (int k = 1; k <= 4; ++k)
      for (const auto& id : subject_ids) out.push_back("u" + std::to_string(k) + "[" + id + "]");
    return out;
  }
};

inline const char* kPopulationParameterNames[9] = {
    "beta1_0", "beta2_0", "beta3_0", "omega_0", "sigma_y",
    "sigma_u1", "sigma_u2", "sigma_u3", "sigma_u4"};

}  // namespace bablr
