#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <vector>

#include "bablr/math.hpp"
#include "bablr/model.hpp"
#include "bablr/simulate.hpp"

using namespace bablr;

TEST_CASE("default design produces the documented cohort shape") {
  SimTruth truth;
  SimDesign design;
  design.n_subjects = 100;
  auto [data, record] = simulate_dataset(truth, design, 7);
  CHECK(data.n_subjects() == 100);
  CHECK(record.realized.size() == 100);
  for (const auto& s : data.subjects) {
    CHECK(s.times.size() >= 3);
    CHECK(s.times.size() <= 7);
    for (std::size_t j = 0; j < s.times.size(); ++j) {
      CHECK(s.times[j] >= design.t_min);
      CHECK(s.times[j] <= design.t_max + 1e-9);
      if (j > 0) CHECK(s.times[j] - s.times[j - 1] == doctest::Approx(design.spacing));
    }
  }
  data.validate();
}

TEST_CASE("noiseless outcomes sit exactly on the bent lines") {
  SimTruth truth;
  truth.scales.sigma_y = 0.0;
  SimDesign design;
  design.n_subjects = 20;
  auto [data, record] = simulate_dataset(truth, design, 11);
  for (std::size_t i = 0; i < data.subjects.size(); ++i) {
    const auto& u = record.realized[i];
    const double b1 = truth.fixed.beta1_0 + u.u1;
    const double b2 = truth.fixed.beta2_0 + u.u2;
    const double b3 = truth.fixed.beta3_0 + u.u3;
    const double om = truth.fixed.omega_0 + u.u4;
    for (std::size_t j = 0; j < data.subjects[i].times.size(); ++j)
      CHECK(data.subjects[i].outcomes[j] ==
            doctest::Approx(bent_line_mean(b1, b2, b3, om, data.subjects[i].times[j]))
                .epsilon(1e-12));
  }
}

TEST_CASE("same seed reproduces the dataset bit for bit") {
  SimTruth truth;
  SimDesign design;
  design.n_subjects = 30;
  auto [a, ra] = simulate_dataset(truth, design, 42);
  auto [b, rb] = simulate_dataset(truth, design, 42);
  REQUIRE(a.n_subjects() == b.n_subjects());
  for (std::size_t i = 0; i < a.subjects.size(); ++i) {
    CHECK(a.subjects[i].times == b.subjects[i].times);
    CHECK(a.subjects[i].outcomes == b.subjects[i].outcomes);
  }
  auto [c, rc] = simulate_dataset(truth, design, 43);
  bool identical = true;
  for (std::size_t i = 0; i < a.subjects.size() && identical; ++i)
    identical = a.subjects[i].outcomes == c.subjects[i].outcomes;
  CHECK_FALSE(identical);
}

TEST_CASE("realized effect spreads match their generator scales") {
  SimTruth truth;
  truth.fixed.beta3_0 = -5.0;  // truncation essentially inactive
  truth.scales = ScaleParameters{0.3, 0.64, 0.02, 0.15, 10.0};
  SimDesign design;
  design.n_subjects = 10000;
  design.t_min = -40.0;
  design.t_max = 60.0;
  auto [data, record] = simulate_dataset(truth, design, 99);
  std::vector<double> u1, u2, u3, u4;
  for (const auto& u : record.realized) {
    u1.push_back(u.u1);
    u2.push_back(u.u2);
    u3.push_back(u.u3);
    u4.push_back(u.u4);
  }
  CHECK(sd_of(u1) == doctest::Approx(0.64).epsilon(0.03));
  CHECK(sd_of(u2) == doctest::Approx(0.02).epsilon(0.03));
  CHECK(sd_of(u3) == doctest::Approx(0.15).epsilon(0.03));
  CHECK(sd_of(u4) == doctest::Approx(10.0).epsilon(0.03));
}

TEST_CASE("correlated generator reproduces its target correlations") {
  SimTruth truth;
  truth.fixed.beta3_0 = -5.0;  // keep the decrement truncation out of the way
  truth.scales = ScaleParameters{0.3, 0.64, 0.02, 0.15, 10.0};
  Matrix4 corr{};
  for (int i = 0; i < 4; ++i) corr[i][i] = 1.0;
  const double r[6] = {0.807, 0.160, -0.553, 0.077, -0.423, -0.404};
  corr[0][1] = corr[1][0] = r[0];
  corr[0][2] = corr[2][0] = r[1];
  corr[0][3] = corr[3][0] = r[2];
  corr[1][2] = corr[2][1] = r[3];
  corr[1][3] = corr[3][1] = r[4];
  corr[2][3] = corr[3][2] = r[5];
  truth.correlation = corr;
  SimDesign design;
  design.n_subjects = 10000;
  design.t_min = -40.0;
  design.t_max = 60.0;
  auto [data, record] = simulate_dataset(truth, design, 17);
  std::vector<std::vector<double>> u(4);
  for (const auto& e : record.realized) {
    u[0].push_back(e.u1);
    u[1].push_back(e.u2);
    u[2].push_back(e.u3);
    u[3].push_back(e.u4);
  }
  const std::pair<int, int> pairs[6] = {{0, 1}, {0, 2}, {0, 3}, {1, 2}, {1, 3}, {2, 3}};
  for (int k = 0; k < 6; ++k) {
    const double sample = pearson_correlation(u[pairs[k].first], u[pairs[k].second]);
    CHECK(std::abs(sample - r[k]) < 0.03);
  }
}

TEST_CASE("infeasible designs and invalid matrices are rejected") {
  SimTruth truth;
  SimDesign design;
  design.t_min = 0.0;
  design.t_max = 5.0;  // 7 biennial visits cannot fit
  CHECK_THROWS(simulate_dataset(truth, design, 1).first.validate());

  SimTruth bad;
  Matrix4 not_psd{};
  for (int i = 0; i < 4; ++i) not_psd[i][i] = 1.0;
  not_psd[0][1] = not_psd[1][0] = 0.99;
  not_psd[0][2] = not_psd[2][0] = 0.99;
  not_psd[1][2] = not_psd[2][1] = -0.99;
  bad.correlation = not_psd;
  SimDesign ok;
  CHECK_THROWS(simulate_dataset(bad, ok, 1).first.validate());
}

TEST_CASE("subject-level truncations hold in the generator") {
  SimTruth truth;  // beta3_0 = -0.0085, sigma_u3 = 0.15: truncation active
  SimDesign design;
  design.n_subjects = 2000;
  design.cp_lower_bound = 5.0;
  auto [data, record] = simulate_dataset(truth, design, 3);
  for (const auto& u : record.realized) {
    CHECK(truth.fixed.beta3_0 + u.u3 <= 0.0);
    CHECK(truth.fixed.omega_0 + u.u4 >= 5.0);
  }
}

TEST_CASE("one-replicate recovery study has binary coverage") {
  // near-noiseless limit: overdetermined subjects pin the residual SD
  SimTruth truth;
  truth.scales.sigma_y = 0.0001;
  SimDesign design;
  design.n_subjects = 60;
  design.visit_min = 5;
  SamplerConfig fit;
  fit.chains = 2;
  fit.warmup = 1000;
  fit.samples = 400;
  fit.target_accept = 0.95;
  const StudyReport report =
      run_sim_study(1, truth, design, PriorConfig::simulation_defaults(), fit, 21);
  CHECK(report.replicates == 1);
  CHECK(report.failed == 0);
  REQUIRE(report.rows.size() == 9);
  for (const auto& row : report.rows) {
    CHECK((row.coverage == doctest::Approx(0.0) || row.coverage == doctest::Approx(1.0)));
  }
  CHECK(report.rows[4].name == std::string("sigma_y"));
  CHECK(std::abs(report.rows[4].bias) < 0.01);
}
