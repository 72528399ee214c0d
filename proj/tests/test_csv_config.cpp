#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <filesystem>
#include <fstream>
#include <string>

#include "bablr/cli_support.hpp"
#include "bablr/csv.hpp"
#include "bablr/run_config.hpp"

using namespace bablr;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir() {
  const fs::path dir = fs::temp_directory_path() / "bablr_csv_tests";
  fs::create_directories(dir);
  return dir;
}

void write_file(const fs::path& p, const std::string& content) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  out << content;
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

}  // namespace

TEST_CASE("doubles format to their shortest round-trip form") {
  CHECK(format_double(0.1) == "0.1");
  CHECK(format_double(1.0) == "1");
  CHECK(format_double(-0.0085) == "-0.0085");
  for (double v : {0.30000000000001, 1e-300, -3.5e17, 0.1 + 0.2}) {
    CHECK(parse_double(format_double(v), "round trip") == v);
  }
}

TEST_CASE("dataset ingestion: grouping, sorting, and errors") {
  const fs::path dir = temp_dir();
  const fs::path good = dir / "good.csv";
  write_file(good, "subject_id,time,outcome\na,1,0.5\na,2,0.25\n");
  std::vector<std::string> warnings;
  const LongitudinalDataset d = read_dataset_csv(good, &warnings);
  CHECK(d.n_subjects() == 1);
  CHECK(d.subjects[0].times.size() == 2);
  CHECK(!warnings.empty());  // fewer than three visits

  const fs::path unsorted = dir / "unsorted.csv";
  write_file(unsorted, "subject_id,time,outcome\na,3,0.1\na,1,0.2\na,2,0.3\n");
  warnings.clear();
  const LongitudinalDataset u = read_dataset_csv(unsorted, &warnings);
  CHECK(u.subjects[0].times == std::vector<double>{1.0, 2.0, 3.0});
  CHECK(u.subjects[0].outcomes == std::vector<double>{0.2, 0.3, 0.1});
  bool warned = false;
  for (const auto& w : warnings) warned |= w.find("not sorted") != std::string::npos;
  CHECK(warned);

  const fs::path header_only = dir / "empty.csv";
  write_file(header_only, "subject_id,time,outcome\n");
  CHECK_THROWS_WITH_AS((void)read_dataset_csv(header_only), doctest::Contains("empty dataset"),
                       std::runtime_error);

  const fs::path bad_header = dir / "badheader.csv";
  write_file(bad_header, "id,t,y\na,1,2\n");
  CHECK_THROWS(read_dataset_csv(bad_header));

  const fs::path bad_row = dir / "badrow.csv";
  write_file(bad_row, "subject_id,time,outcome\na,1,0.5\na,oops,0.5\n");
  CHECK_THROWS_WITH_AS((void)read_dataset_csv(bad_row), doctest::Contains("line 3"),
                       std::runtime_error);
}

TEST_CASE("dataset round trips through its CSV form") {
  const fs::path dir = temp_dir();
  LongitudinalDataset d;
  d.subjects.push_back(SubjectRecord{"s1", {40.5, 42.5, 44.5}, {0.1, -0.2, 0.33}});
  d.subjects.push_back(SubjectRecord{"s2", {50.0, 52.0, 54.0}, {1.0 / 3.0, -0.125, 7e-12}});
  const fs::path p = dir / "roundtrip.csv";
  write_dataset_csv(p, d);
  const LongitudinalDataset back = read_dataset_csv(p);
  REQUIRE(back.n_subjects() == 2);
  for (std::size_t i = 0; i < 2; ++i) {
    CHECK(back.subjects[i].id == d.subjects[i].id);
    CHECK(back.subjects[i].times == d.subjects[i].times);
    CHECK(back.subjects[i].outcomes == d.subjects[i].outcomes);
  }
}

TEST_CASE("draws files carry and enforce their schema version") {
  const fs::path dir = temp_dir();
  DrawsStore s;
  s.names = {"beta1_0", "sigma_y"};
  s.n_chains = 2;
  s.n_iterations = 3;
  s.n_params = 2;
  for (int i = 0; i < 12; ++i) s.values.push_back(0.125 * i - 0.3);
  const fs::path p = dir / "draws.csv";
  write_draws_csv(p, s);
  const DrawsStore back = read_draws_csv(p);
  CHECK(back.n_chains == 2);
  CHECK(back.n_iterations == 3);
  CHECK(back.names == s.names);
  for (std::size_t i = 0; i < s.values.size(); ++i) CHECK(back.values[i] == s.values[i]);

  const fs::path bad = dir / "bad_draws.csv";
  write_file(bad, "# bablr-draws v999\nchain,iteration,x\n0,0,1\n");
  CHECK_THROWS_WITH_AS((void)read_draws_csv(bad), doctest::Contains("schema"),
                       std::runtime_error);
}

TEST_CASE("config files parse with flag-style precedence") {
  const fs::path dir = temp_dir();
  const fs::path cfg_path = dir / "run.cfg";
  write_file(cfg_path,
             "# comment\n"
             "config_version = 1\n"
             "mode = simulation\n"
             "seed = 99\n"
             "chains = 2\n"
             "prior.sigma_u2 = lognormal(0,0.2)\n"
             "cp_lower_bound = 45\n");
  RunConfig cfg;
  cfg.load_file(cfg_path);
  cfg.apply("chains", "3");  // flag overrides file
  cfg.finalize();
  CHECK(cfg.mode == "simulation");
  CHECK(cfg.sampler.seed == 99);
  CHECK(cfg.sampler.chains == 3);
  CHECK(cfg.priors.sigma_u[1].family == ScaleFamily::lognormal);
  CHECK(cfg.priors.sigma_u[1].scale == doctest::Approx(0.2));
  REQUIRE(cfg.priors.cp_lower_bound.has_value());
  CHECK(*cfg.priors.cp_lower_bound == doctest::Approx(45.0));

  // simulation-mode defaults where not overridden
  CHECK(cfg.priors.omega_0.location == doctest::Approx(10.0));
  CHECK(cfg.priors.sigma_u[0].family == ScaleFamily::half_cauchy);
}

TEST_CASE("prior specs are validated") {
  RunConfig cfg;
  CHECK_THROWS(cfg.apply("prior.sigma_u2", "gamma(1,1)"));
  CHECK_THROWS(cfg.apply("prior.sigma_u2", "lognormal(0)"));
  CHECK_THROWS(cfg.apply("prior.beta1_0", "half-cauchy(0,1)"));
  CHECK_THROWS(cfg.apply("prior.mu_u2", "0.5"));
  CHECK_NOTHROW(cfg.apply("prior.mu_u2", "0"));
  CHECK_NOTHROW(cfg.apply("prior.sigma_u3", "half-t(4,0,1)"));
  cfg.finalize();
  CHECK(cfg.priors.sigma_u[2].family == ScaleFamily::half_student_t);
  CHECK(cfg.priors.sigma_u[2].df == doctest::Approx(4.0));
  CHECK_THROWS(cfg.apply("nonsense_key", "1"));
}

TEST_CASE("manifests are reproducible fixed points") {
  RunConfig cfg;
  cfg.command = "fit";
  cfg.apply("mode", "simulation");
  cfg.apply("seed", "1234");
  cfg.apply("prior.sigma_u2", "half-cauchy(0,1)");
  cfg.finalize();
  const std::string manifest = cfg.manifest();
  CHECK(manifest.find("prior.sigma_u2 = half-cauchy(0,1)") != std::string::npos);
  CHECK(manifest.find("seed = 1234") != std::string::npos);

  // a manifest parses back into an equivalent configuration
  const fs::path dir = temp_dir();
  const fs::path mpath = dir / "manifest.txt";
  write_file(mpath, manifest);
  RunConfig again;
  again.load_file(mpath);
  again.finalize();
  CHECK(again.manifest() == manifest);
}

TEST_CASE("holdout split removes last observations of a seeded fraction") {
  LongitudinalDataset d;
  for (int i = 0; i < 10; ++i) {
    SubjectRecord s;
    s.id = "s" + std::to_string(i);
    for (int j = 0; j < 4; ++j) {
      s.times.push_back(40.0 + 2.0 * j);
      s.outcomes.push_back(0.1 * i + j);
    }
    d.subjects.push_back(s);
  }
  LongitudinalDataset copy = d;
  const LongitudinalDataset held = split_holdout(copy, 0.5, 7);
  CHECK(held.n_subjects() == 5);
  for (const auto& h : held.subjects) {
    CHECK(h.times.size() == 1);
    const auto& orig = d.subjects[d.index_of(h.id)];
    CHECK(h.times[0] == orig.times.back());
    CHECK(h.outcomes[0] == orig.outcomes.back());
    const auto& reduced = copy.subjects[copy.index_of(h.id)];
    CHECK(reduced.times.size() == 3);
  }
  // deterministic under the same seed
  LongitudinalDataset copy2 = d;
  const LongitudinalDataset held2 = split_holdout(copy2, 0.5, 7);
  REQUIRE(held2.n_subjects() == held.n_subjects());
  for (std::size_t i = 0; i < held.subjects.size(); ++i)
    CHECK(held2.subjects[i].id == held.subjects[i].id);
}
