#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <vector>

#include "bablr/math.hpp"
#include "bablr/model.hpp"
#include "bablr/priors.hpp"
#include "bablr/rng.hpp"
#include "test_helpers.hpp"

using namespace bablr;

namespace {

ModelParameters random_valid_params(Rng& rng, std::size_t n, bool bounded) {
  ModelParameters p;
  p.fixed.beta1_0 = rng.normal(0.0, 1.0);
  p.fixed.beta2_0 = rng.normal(0.0, 0.5);
  p.fixed.beta3_0 = -std::exp(rng.normal(-1.0, 0.5));
  p.fixed.omega_0 = bounded ? 40.0 + std::exp(rng.normal(2.0, 0.3)) : rng.normal(10.0, 3.0);
  p.scales.sigma_y = std::exp(rng.normal(-1.0, 0.3));
  p.scales.sigma_u1 = std::exp(rng.normal(-0.5, 0.3));
  p.scales.sigma_u2 = std::exp(rng.normal(-2.0, 0.3));
  p.scales.sigma_u3 = std::exp(rng.normal(-1.5, 0.3));
  p.scales.sigma_u4 = std::exp(rng.normal(1.0, 0.3));
  for (std::size_t i = 0; i < n; ++i) {
    SubjectEffects s;
    s.u1 = rng.normal(0.0, p.scales.sigma_u1);
    s.u2 = rng.normal(0.0, p.scales.sigma_u2);
    const double b3i = -std::exp(rng.normal(-1.0, 0.5));
    s.u3 = b3i - p.fixed.beta3_0;
    if (bounded) {
      const double omi = 40.0 + std::exp(rng.normal(2.0, 0.3));
      s.u4 = omi - p.fixed.omega_0;
    } else {
      s.u4 = rng.normal(0.0, p.scales.sigma_u4);
    }
    p.subjects.push_back(s);
  }
  return p;
}

PriorConfig priors_for(bool bounded) {
  PriorConfig pc = bounded ? PriorConfig::application_defaults() : PriorConfig::simulation_defaults();
  return pc;
}

}  // namespace

TEST_CASE("bent line mean matches direct arithmetic") {
  CHECK(bent_line_mean(2.0, 0.1, -0.2, 60.0, 60.0) == doctest::Approx(2.0));
  // pre-change branch: beta1 + beta2 * (t - omega)
  CHECK(bent_line_mean(0.0, -0.0052, -0.0085, 10.0, 5.0) ==
        doctest::Approx(0.0 + (-0.0052) * (5.0 - 10.0)).epsilon(1e-12));
  CHECK(bent_line_mean(0.0, -0.0052, -0.0085, 10.0, 5.0) == doctest::Approx(0.026).epsilon(1e-12));
  // post-change branch: beta1 + (beta2 + beta3) * (t - omega)
  CHECK(bent_line_mean(0.0015, -0.0045, -0.0028, 74.95, 80.0) ==
        doctest::Approx(0.0015 + (-0.0045 - 0.0028) * (80.0 - 74.95)).epsilon(1e-12));
  CHECK(bent_line_mean(0.0015, -0.0045, -0.0028, 74.95, 80.0) ==
        doctest::Approx(-0.035365).epsilon(1e-9));
}

TEST_CASE("bent line is continuous at the change point") {
  Rng rng(11);
  const double delta = 1e-9;
  // no jump: the straddle gap is entirely slope * distance, at any
  // parameter magnitude up to 1e2
  for (int rep = 0; rep < 200; ++rep) {
    const double b1 = rng.uniform(-100.0, 100.0);
    const double b2 = rng.uniform(-100.0, 100.0);
    const double b3 = -rng.uniform(0.0, 100.0);
    const double om = rng.uniform(-100.0, 100.0);
    const double gap =
        std::abs(bent_line_mean(b1, b2, b3, om, om - delta) - bent_line_mean(b1, b2, b3, om, om + delta));
    CHECK(gap <= delta * (std::abs(b2) + std::abs(b2 + b3)) + 1e-12);
  }
  // and the absolute 1e-7 bound wherever slope * distance permits it
  for (int rep = 0; rep < 200; ++rep) {
    const double b1 = rng.uniform(-100.0, 100.0);
    const double b2 = rng.uniform(-30.0, 30.0);
    const double b3 = -rng.uniform(0.0, 30.0);
    const double om = rng.uniform(-100.0, 100.0);
    const double gap =
        std::abs(bent_line_mean(b1, b2, b3, om, om - delta) - bent_line_mean(b1, b2, b3, om, om + delta));
    CHECK(gap < 1e-7);
  }
}

TEST_CASE("transform at zero coordinates") {
  // scale coordinate z=0 -> sigma=1; decrement z=0 -> beta3_0=-1; all
  // Jacobian contributions vanish
  ParameterLayout layout;
  layout.n_subjects = 0;
  const PriorConfig pc = PriorConfig::simulation_defaults();
  std::vector<double> z(layout.dim(), 0.0);
  const TransformResult tr = to_constrained(z, pc, layout);
  CHECK(tr.finite);
  CHECK(tr.params.scales.sigma_y == doctest::Approx(1.0));
  CHECK(tr.params.fixed.beta3_0 == doctest::Approx(-1.0));
  CHECK(tr.log_jacobian == doctest::Approx(0.0));

  ParameterLayout bounded = layout;
  bounded.cp_lower_bound = 40.0;
  PriorConfig pcb = pc;
  pcb.cp_lower_bound = 40.0;
  const TransformResult tb = to_constrained(z, pcb, bounded);
  CHECK(tb.params.fixed.omega_0 == doctest::Approx(41.0));
  CHECK(tb.log_jacobian == doctest::Approx(0.0));
}

TEST_CASE("constrained/unconstrained round trip is the identity") {
  Rng rng(21);
  for (bool bounded : {false, true}) {
    for (bool centered : {false, true}) {
      ParameterLayout layout;
      layout.n_subjects = 6;
      layout.centered = centered;
      if (bounded) layout.cp_lower_bound = 40.0;
      for (int rep = 0; rep < 25; ++rep) {
        const ModelParameters p = random_valid_params(rng, layout.n_subjects, bounded);
        const std::vector<double> z = to_unconstrained(p, layout);
        const TransformResult tr = to_constrained(z, priors_for(bounded), layout);
        REQUIRE(tr.finite);
        CHECK(tr.params.fixed.beta1_0 == doctest::Approx(p.fixed.beta1_0).epsilon(1e-12));
        CHECK(tr.params.fixed.beta2_0 == doctest::Approx(p.fixed.beta2_0).epsilon(1e-12));
        CHECK(tr.params.fixed.beta3_0 == doctest::Approx(p.fixed.beta3_0).epsilon(1e-12));
        CHECK(tr.params.fixed.omega_0 == doctest::Approx(p.fixed.omega_0).epsilon(1e-12));
        CHECK(tr.params.scales.sigma_y == doctest::Approx(p.scales.sigma_y).epsilon(1e-12));
        CHECK(tr.params.scales.sigma_u4 == doctest::Approx(p.scales.sigma_u4).epsilon(1e-12));
        for (std::size_t i = 0; i < layout.n_subjects; ++i) {
          CHECK(tr.params.subjects[i].u1 ==
                doctest::Approx(p.subjects[i].u1).epsilon(1e-12).scale(1e-12));
          CHECK(tr.params.subjects[i].u2 ==
                doctest::Approx(p.subjects[i].u2).epsilon(1e-12).scale(1e-12));
          CHECK(tr.params.subjects[i].u3 ==
                doctest::Approx(p.subjects[i].u3).epsilon(1e-10).scale(1e-10));
          CHECK(tr.params.subjects[i].u4 ==
                doctest::Approx(p.subjects[i].u4).epsilon(1e-10).scale(1e-10));
        }
      }
    }
  }
}

TEST_CASE("slope decrements stay nonpositive through the transform") {
  Rng rng(31);
  ParameterLayout layout;
  layout.n_subjects = 8;
  const PriorConfig pc = PriorConfig::simulation_defaults();
  for (int rep = 0; rep < 50; ++rep) {
    std::vector<double> z(layout.dim());
    for (auto& v : z) v = rng.normal(0.0, 2.0);
    const TransformResult tr = to_constrained(z, pc, layout);
    REQUIRE(tr.finite);
    for (std::size_t i = 0; i < layout.n_subjects; ++i) {
      const double b3i = tr.params.beta3(i);
      CHECK(b3i <= 0.0);
      // post-change slope never exceeds the pre-change slope
      CHECK(tr.params.beta2(i) + b3i <= tr.params.beta2(i));
    }
  }
}

TEST_CASE("prior terms match closed forms") {
  CHECK(scale_prior_lpdf(ScalePrior{ScaleFamily::half_cauchy, 0.0, 1.0}, 1.0) ==
        doctest::Approx(std::log(1.0 / M_PI)).epsilon(1e-12));
  CHECK(scale_prior_lpdf(ScalePrior{ScaleFamily::half_cauchy, 0.0, 1.0}, 1.0) ==
        doctest::Approx(-1.1447298858494002).epsilon(1e-9));
  CHECK(normal_lpdf(0.0, 0.0, 10.0) == doctest::Approx(-3.2215236261987365).epsilon(1e-9));

  // support violation: positive decrement has no prior mass
  ModelParameters p;
  p.fixed.beta3_0 = 0.1;
  p.fixed.omega_0 = 10.0;
  CHECK(log_prior(p, PriorConfig::simulation_defaults()) == kNegInf);
}

TEST_CASE("log likelihood closed forms") {
  ModelParameters p;
  p.fixed = {2.0, 0.0, -0.1, 10.0};
  p.scales.sigma_y = 0.30;
  p.subjects.resize(1);

  LongitudinalDataset data;
  data.subjects.push_back(SubjectRecord{"a", {10.0}, {2.0}});  // exactly at the mean
  const double at_mode = log_likelihood(p, data);
  CHECK(at_mode == doctest::Approx(-std::log(0.30) - 0.5 * kLog2Pi).epsilon(1e-12));

  data.subjects[0].outcomes[0] = 2.0 + 0.30;  // one sigma away
  CHECK(log_likelihood(p, data) == doctest::Approx(at_mode - 0.5).epsilon(1e-12));

  const LongitudinalDataset empty;
  const ModelParameters none;
  CHECK(log_likelihood(none, empty) == doctest::Approx(0.0));
}

TEST_CASE("posterior value decomposes into likelihood + prior + jacobian") {
  Rng rng(41);
  for (bool bounded : {false, true}) {
    for (bool centered : {false, true}) {
      PriorConfig pc = priors_for(bounded);
      bablr::LongitudinalDataset data = test_helpers::random_dataset(rng, 6, 4);
      if (bounded)
        for (auto& s : data.subjects)
          for (auto& t : s.times) t += 55.0;  // move times near the bounded CP region
      BentLineModel model(data, pc, centered);
      std::vector<double> z(model.dim()), grad;
      for (int rep = 0; rep < 10; ++rep) {
        for (auto& v : z) v = rng.normal(0.0, 0.7);
        const double value = model.log_density_with_gradient(z, grad);
        const TransformResult tr = to_constrained(z, pc, model.layout());
        REQUIRE(tr.finite);
        const double expected =
            log_likelihood(tr.params, data) + log_prior(tr.params, pc) + tr.log_jacobian;
        CHECK(value == doctest::Approx(expected).epsilon(1e-9));
      }
    }
  }
}

TEST_CASE("analytic gradient matches central finite differences") {
  Rng rng(51);
  int points = 0;
  for (bool bounded : {false, true}) {
    for (bool centered : {false, true}) {
      PriorConfig pc = priors_for(bounded);
      for (int ds = 0; ds < 3; ++ds) {
        const auto gc = test_helpers::scaled_gradient_case(rng, bounded, centered);
        BentLineModel model(gc.data, pc, centered);
        auto value_only = [&](const std::vector<double>& zz) {
          std::vector<double> g;
          return model.log_density_with_gradient(zz, g);
        };
        std::vector<double> z(model.dim()), grad;
        for (int rep = 0; rep < 5; ++rep) {
          for (std::size_t k = 0; k < z.size(); ++k) z[k] = gc.z0[k] + rng.normal(0.0, 0.1);
          const double value = model.log_density_with_gradient(z, grad);
          REQUIRE(std::isfinite(value));
          const auto fd = test_helpers::finite_difference_gradient(value_only, z);
          for (std::size_t k = 0; k < z.size(); ++k) {
            const double err = std::abs(grad[k] - fd[k]);
            const double tol = 1e-8 + 1e-6 * std::max(std::abs(grad[k]), std::abs(fd[k]));
            CHECK(err <= tol);
          }
          ++points;
        }
      }
    }
  }
  CHECK(points == 60);
}

TEST_CASE("without observations the gradient is that of prior plus jacobian") {
  Rng rng(61);
  const PriorConfig pc = PriorConfig::simulation_defaults();
  BentLineModel model(LongitudinalDataset{}, pc, false);  // prior-only target
  REQUIRE(model.dim() == 9);
  auto prior_plus_jacobian = [&](const std::vector<double>& zz) {
    const TransformResult tr = to_constrained(zz, pc, model.layout());
    return log_prior(tr.params, pc) + tr.log_jacobian;
  };
  std::vector<double> z(model.dim()), grad;
  for (int rep = 0; rep < 10; ++rep) {
    for (auto& v : z) v = rng.normal(0.0, 0.7);
    const double value = model.log_density_with_gradient(z, grad);
    CHECK(value == doctest::Approx(prior_plus_jacobian(z)).epsilon(1e-10));
    const auto fd = test_helpers::finite_difference_gradient(prior_plus_jacobian, z);
    for (std::size_t k = 0; k < z.size(); ++k)
      CHECK(grad[k] == doctest::Approx(fd[k]).epsilon(1e-5).scale(1e-6));
  }
}

TEST_CASE("ties at the change point use the pre-change branch") {
  PriorConfig pc = PriorConfig::simulation_defaults();
  LongitudinalDataset data;
  // centered mode, one subject, one observation exactly at omega_i
  data.subjects.push_back(SubjectRecord{"a", {10.0}, {1.0}});
  BentLineModel model(data, pc, true);
  std::vector<double> z(model.dim(), 0.0), grad;
  // omega coordinate (unbounded, centered): omega_0 = z[3] = 10, u4 = 0
  z[3] = 10.0;
  const double value = model.log_density_with_gradient(z, grad);
  REQUIRE(std::isfinite(value));
  // at t == omega the mean is beta1 and its omega-derivative is -beta2;
  // here beta2 = 0 and beta1 = 0, so the likelihood contributes nothing
  // to the u4 gradient; the prior on u4 is flat at 0 too
  CHECK(grad[model.layout().u4(0)] == doctest::Approx(0.0).epsilon(1e-12));

  // with a nonzero pre-slope the omega gradient picks up -beta2 * w only
  z[1] = 0.5;  // beta2_0
  const double v2 = model.log_density_with_gradient(z, grad);
  REQUIRE(std::isfinite(v2));
  const double w = 1.0;  // r = y - beta1 = 1, sigma_y = 1 -> dll/dmean = 1
  const double expected = -w * 0.5;  // pre-change slope only, no beta3 term
  CHECK(grad[model.layout().u4(0)] == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("exp overflow rejects instead of crashing") {
  PriorConfig pc = PriorConfig::simulation_defaults();
  LongitudinalDataset data;
  data.subjects.push_back(SubjectRecord{"a", {1.0, 2.0}, {0.3, 0.1}});
  BentLineModel model(data, pc, false);
  std::vector<double> z(model.dim(), 0.0), grad;
  z[4] = 1000.0;  // sigma_y = exp(1000) overflows
  CHECK(model.log_density_with_gradient(z, grad) == kNegInf);
  z[4] = -1000.0;  // sigma_y underflows to 0
  CHECK(model.log_density_with_gradient(z, grad) == kNegInf);
  std::vector<double> z2(model.dim(), 0.0);
  z2[0] = kNaN;
  CHECK(model.log_density_with_gradient(z2, grad) == kNegInf);
}

TEST_CASE("jacobian-corrected scale densities integrate to one") {
  auto normalization = [](const ScalePrior& prior) {
    return test_helpers::simpson(
        [&](double zz) { return std::exp(scale_prior_lpdf(prior, std::exp(zz)) + zz); }, -40.0,
        40.0, 16000);
  };
  CHECK(normalization({ScaleFamily::half_cauchy, 0.0, 1.0}) == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(normalization({ScaleFamily::half_normal, 0.0, 5.0}) == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(normalization({ScaleFamily::lognormal, 0.0, 0.2}) == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(normalization({ScaleFamily::half_student_t, 0.0, 1.0, 4.0}) ==
        doctest::Approx(1.0).epsilon(1e-6));

  // the truncated-normal coordinates carry exact normalizers too
  const double upper = test_helpers::simpson(
      [](double zz) {
        return std::exp(trunc_normal_upper_lpdf(-std::exp(zz), -0.0085, 0.15, 0.0) + zz);
      },
      -40.0, 12.0, 16000);
  CHECK(upper == doctest::Approx(1.0).epsilon(1e-6));
  const double lower = test_helpers::simpson(
      [](double zz) {
        return std::exp(trunc_normal_lower_lpdf(40.0 + std::exp(zz), 70.0, 10.0, 40.0) + zz);
      },
      -40.0, 12.0, 16000);
  CHECK(lower == doctest::Approx(1.0).epsilon(1e-6));
}
