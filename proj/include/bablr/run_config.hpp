#pragma once

// Run configuration: a flat key=value document (version 1), the same keys
// exposed as CLI flags (flags override file values), and a manifest writer
// that records every effective value so a run is reproducible from its
// manifest alone. The manifest itself parses as a config file.

#include <cctype>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "bablr/csv.hpp"
#include "bablr/nuts.hpp"
#include "bablr/priors.hpp"
#include "bablr/simulate.hpp"

namespace bablr {

namespace detail {

inline std::string trim(const std::string& s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

inline std::vector<double> parse_number_list(const std::string& s, const std::string& what) {
  std::vector<double> out;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ',')) out.push_back(parse_double(trim(tok), what));
  if (out.empty()) throw std::invalid_argument(what + ": empty list");
  return out;
}

inline bool parse_bool(const std::string& s, const std::string& key) {
  if (s == "true" || s == "1") return true;
  if (s == "false" || s == "0") return false;
  throw std::invalid_argument(key + ": expected true/false, got '" + s + "'");
}

// "family(a,b[,c])"
struct PriorSpec {
  std::string family;
  std::vector<double> args;
};

inline PriorSpec parse_prior_spec(const std::string& s) {
  const auto open = s.find('(');
  if (open == std::string::npos || s.back() != ')')
    throw std::invalid_argument("prior spec '" + s + "' is not of the form family(a,b)");
  PriorSpec spec;
  spec.family = trim(s.substr(0, open));
  spec.args = parse_number_list(s.substr(open + 1, s.size() - open - 2), "prior spec");
  return spec;
}

inline NormalPrior normal_prior_from(const PriorSpec& spec, const std::string& key,
                                     const char* family) {
  if (spec.family != family)
    throw std::invalid_argument(key + ": prior family must be " + std::string(family));
  if (spec.args.size() != 2)
    throw std::invalid_argument(key + ": expected " + std::string(family) + "(location,scale)");
  return NormalPrior{spec.args[0], spec.args[1]};
}

inline ScalePrior scale_prior_from(const PriorSpec& spec, const std::string& key) {
  ScalePrior p;
  if (spec.family == "half-cauchy") {
    p.family = ScaleFamily::half_cauchy;
  } else if (spec.family == "half-normal") {
    p.family = ScaleFamily::half_normal;
  } else if (spec.family == "lognormal") {
    p.family = ScaleFamily::lognormal;
  } else if (spec.family == "half-t") {
    p.family = ScaleFamily::half_student_t;
  } else {
    throw std::invalid_argument(key + ": unknown scale-prior family '" + spec.family + "'");
  }
  if (p.family == ScaleFamily::half_student_t) {
    if (spec.args.size() != 3) throw std::invalid_argument(key + ": expected half-t(df,location,scale)");
    p.df = spec.args[0];
    p.location = spec.args[1];
    p.scale = spec.args[2];
  } else {
    if (spec.args.size() != 2)
      throw std::invalid_argument(key + ": expected " + spec.family + "(location,scale)");
    p.location = spec.args[0];
    p.scale = spec.args[1];
  }
  return p;
}

inline std::string normal_prior_string(const NormalPrior& p, const char* family) {
  return std::string(family) + "(" + format_double(p.location) + "," + format_double(p.scale) + ")";
}

inline std::string scale_prior_string(const ScalePrior& p) {
  if (p.family == ScaleFamily::half_student_t)
    return "half-t(" + format_double(p.df) + "," + format_double(p.location) + "," +
           format_double(p.scale) + ")";
  return to_string(p.family) + "(" + format_double(p.location) + "," + format_double(p.scale) +
         ")";
}

}  // namespace detail

struct RunConfig {
  std::string command;  // fit | simulate | sim-study | curves | validate | summarize
  std::string mode = "application";
  SamplerConfig sampler;
  bool centered = false;
  bool strict = true;
  double holdout_fraction = 0.0;
  bool pooled = false;
  bool population_only = false;
  std::string subject;

  // paths
  std::string data_path, draws_path, holdout_path, out_dir, out_path;

  // age grid and quantiles
  double age_min = 40.0, age_max = 85.0, age_step = 1.0;
  std::vector<double> quantiles{0.1, 0.5, 0.9};

  // simulation
  SimDesign design;
  SimTruth truth;
  int replicates = 1;

  // Prior-affecting overrides are kept raw and replayed on top of the
  // mode's defaults by finalize(), so key order cannot clobber them.
  std::vector<std::pair<std::string, std::string>> prior_overrides;
  PriorConfig priors = PriorConfig::application_defaults();

  void apply(const std::string& key, const std::string& value) {
    using detail::parse_bool;
    using detail::parse_number_list;
    if (key == "config_version") {
      if (value != "1") throw std::invalid_argument("unsupported config_version '" + value + "'");
    } else if (key == "command") {
      command = value;
    } else if (key == "mode") {
      if (value != "application" && value != "simulation")
        throw std::invalid_argument("mode must be 'application' or 'simulation'");
      mode = value;
    } else if (key == "seed") {
      sampler.seed = std::stoull(value);
    } else if (key == "chains") {
      sampler.chains = std::stoi(value);
    } else if (key == "warmup") {
      sampler.warmup = std::stoi(value);
    } else if (key == "samples") {
      sampler.samples = std::stoi(value);
    } else if (key == "target_accept") {
      sampler.target_accept = parse_double(value, key);
    } else if (key == "max_treedepth") {
      sampler.max_treedepth = std::stoi(value);
    } else if (key == "init_radius") {
      sampler.init_radius = parse_double(value, key);
    } else if (key == "centered") {
      centered = parse_bool(value, key);
    } else if (key == "strict") {
      strict = parse_bool(value, key);
    } else if (key == "holdout_fraction") {
      holdout_fraction = parse_double(value, key);
    } else if (key == "pooled") {
      pooled = parse_bool(value, key);
    } else if (key == "population_only") {
      population_only = parse_bool(value, key);
    } else if (key == "subject") {
      subject = value;
    } else if (key == "cp_lower_bound") {
      if (value != "none") parse_double(value, key);  // validate now, replay later
      prior_overrides.emplace_back(key, value);
    } else if (key == "data") {
      data_path = value;
    } else if (key == "draws") {
      draws_path = value;
    } else if (key == "holdout") {
      holdout_path = value;
    } else if (key == "out_dir") {
      out_dir = value;
    } else if (key == "out") {
      out_path = value;
    } else if (key == "ages") {
      // min:max:step
      std::stringstream ss(value);
      std::string a, b, c;
      if (!std::getline(ss, a, ':') || !std::getline(ss, b, ':') || !std::getline(ss, c))
        throw std::invalid_argument("ages: expected min:max:step");
      age_min = parse_double(detail::trim(a), key);
      age_max = parse_double(detail::trim(b), key);
      age_step = parse_double(detail::trim(c), key);
    } else if (key == "quantiles") {
      quantiles = parse_number_list(value, key);
      for (std::size_t i = 0; i < quantiles.size(); ++i) {
        if (!(quantiles[i] > 0.0 && quantiles[i] < 1.0))
          throw std::invalid_argument("quantiles must lie strictly in (0,1)");
        if (i > 0 && !(quantiles[i] > quantiles[i - 1]))
          throw std::invalid_argument("quantiles must be strictly increasing");
      }
    } else if (key == "replicates") {
      replicates = std::stoi(value);
    } else if (key.rfind("sim.", 0) == 0) {
      const std::string k = key.substr(4);
      if (k == "n_subjects")
        design.n_subjects = static_cast<std::size_t>(std::stoul(value));
      else if (k == "visit_min")
        design.visit_min = std::stoi(value);
      else if (k == "visit_max")
        design.visit_max = std::stoi(value);
      else if (k == "time_min")
        design.t_min = parse_double(value, key);
      else if (k == "time_max")
        design.t_max = parse_double(value, key);
      else if (k == "spacing")
        design.spacing = parse_double(value, key);
      else
        throw std::invalid_argument("unknown key '" + key + "'");
    } else if (key.rfind("truth.", 0) == 0) {
      const std::string k = key.substr(6);
      if (k == "beta1_0")
        truth.fixed.beta1_0 = parse_double(value, key);
      else if (k == "beta2_0")
        truth.fixed.beta2_0 = parse_double(value, key);
      else if (k == "beta3_0")
        truth.fixed.beta3_0 = parse_double(value, key);
      else if (k == "omega_0")
        truth.fixed.omega_0 = parse_double(value, key);
      else if (k == "sigma_y")
        truth.scales.sigma_y = parse_double(value, key);
      else if (k == "sigma_u1")
        truth.scales.sigma_u1 = parse_double(value, key);
      else if (k == "sigma_u2")
        truth.scales.sigma_u2 = parse_double(value, key);
      else if (k == "sigma_u3")
        truth.scales.sigma_u3 = parse_double(value, key);
      else if (k == "sigma_u4")
        truth.scales.sigma_u4 = parse_double(value, key);
      else if (k == "correlation") {
        if (value == "none") {
          truth.correlation.reset();
        } else {
          const auto r = parse_number_list(value, key);
          if (r.size() != 6)
            throw std::invalid_argument("truth.correlation: expected r12,r13,r14,r23,r24,r34");
          Matrix4 m{};
          for (int i = 0; i < 4; ++i) m[i][i] = 1.0;
          m[0][1] = m[1][0] = r[0];
          m[0][2] = m[2][0] = r[1];
          m[0][3] = m[3][0] = r[2];
          m[1][2] = m[2][1] = r[3];
          m[1][3] = m[3][1] = r[4];
          m[2][3] = m[3][2] = r[5];
          truth.correlation = m;
        }
      } else {
        throw std::invalid_argument("unknown key '" + key + "'");
      }
    } else if (key.rfind("prior.", 0) == 0) {
      apply_prior(priors, key, value);  // validate now
      prior_overrides.emplace_back(key, value);
    } else {
      throw std::invalid_argument("unknown key '" + key + "'");
    }
  }

  static void apply_prior(PriorConfig& target, const std::string& key, const std::string& value) {
    const std::string k = key.substr(6);
    if (k.rfind("mu_u", 0) == 0) {
      // random-effect prior means are pinned at zero
      if (parse_double(value, key) != 0.0)
        throw std::invalid_argument(key + ": random-effect prior means must be 0");
      return;
    }
    const auto spec = detail::parse_prior_spec(value);
    if (k == "beta1_0")
      target.beta1_0 = detail::normal_prior_from(spec, key, "normal");
    else if (k == "beta2_0")
      target.beta2_0 = detail::normal_prior_from(spec, key, "normal");
    else if (k == "omega_0")
      target.omega_0 = detail::normal_prior_from(spec, key, "normal");
    else if (k == "beta3_0")
      target.beta3_0 = detail::normal_prior_from(spec, key, "half-normal");
    else if (k == "sigma_y")
      target.sigma_y = detail::scale_prior_from(spec, key);
    else if (k == "sigma_u1")
      target.sigma_u[0] = detail::scale_prior_from(spec, key);
    else if (k == "sigma_u2")
      target.sigma_u[1] = detail::scale_prior_from(spec, key);
    else if (k == "sigma_u3")
      target.sigma_u[2] = detail::scale_prior_from(spec, key);
    else if (k == "sigma_u4")
      target.sigma_u[3] = detail::scale_prior_from(spec, key);
    else
      throw std::invalid_argument("unknown key '" + key + "'");
  }

  // Resolves the effective prior configuration: mode defaults, then the
  // recorded overrides in the order they were given.
  void finalize() {
    priors = mode == "application" ? PriorConfig::application_defaults()
                                   : PriorConfig::simulation_defaults();
    for (const auto& [key, value] : prior_overrides) {
      if (key == "cp_lower_bound") {
        if (value == "none")
          priors.cp_lower_bound.reset();
        else
          priors.cp_lower_bound = parse_double(value, key);
      } else {
        apply_prior(priors, key, value);
      }
    }
    priors.validate();
    design.cp_lower_bound = priors.cp_lower_bound;
  }

  void load_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open config '" + path.string() + "'");
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      const std::string t = detail::trim(line);
      if (t.empty() || t[0] == '#') continue;
      const auto eq = t.find('=');
      if (eq == std::string::npos)
        throw std::runtime_error(path.string() + ":" + std::to_string(line_no) +
                                 ": expected key = value");
      try {
        apply(detail::trim(t.substr(0, eq)), detail::trim(t.substr(eq + 1)));
      } catch (const std::exception& e) {
        throw std::runtime_error(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
      }
    }
  }

  std::vector<double> age_grid() const {
    if (!(age_step > 0.0) || !(age_max >= age_min))
      throw std::invalid_argument("invalid age grid");
    std::vector<double> out;
    for (double a = age_min; a <= age_max + 1e-9; a += age_step) out.push_back(a);
    return out;
  }

  // Every effective value, in a form that parses back as a config file.
  std::string manifest() const {
    std::map<std::string, std::string> kv;
    kv["config_version"] = "1";
    kv["command"] = command;
    kv["mode"] = mode;
    kv["seed"] = std::to_string(sampler.seed);
    kv["chains"] = std::to_string(sampler.chains);
    kv["warmup"] = std::to_string(sampler.warmup);
    kv["samples"] = std::to_string(sampler.samples);
    kv["target_accept"] = format_double(sampler.target_accept);
    kv["max_treedepth"] = std::to_string(sampler.max_treedepth);
    kv["init_radius"] = format_double(sampler.init_radius);
    kv["centered"] = centered ? "true" : "false";
    kv["strict"] = strict ? "true" : "false";
    kv["holdout_fraction"] = format_double(holdout_fraction);
    kv["pooled"] = pooled ? "true" : "false";
    kv["population_only"] = population_only ? "true" : "false";
    if (!subject.empty()) kv["subject"] = subject;
    if (!data_path.empty()) kv["data"] = data_path;
    if (!draws_path.empty()) kv["draws"] = draws_path;
    if (!holdout_path.empty()) kv["holdout"] = holdout_path;
    if (!out_dir.empty()) kv["out_dir"] = out_dir;
    if (!out_path.empty()) kv["out"] = out_path;
    kv["ages"] = format_double(age_min) + ":" + format_double(age_max) + ":" +
                 format_double(age_step);
    {
      std::string qs;
      for (std::size_t i = 0; i < quantiles.size(); ++i)
        qs += (i ? "," : "") + format_double(quantiles[i]);
      kv["quantiles"] = qs;
    }
    kv["replicates"] = std::to_string(replicates);
    kv["sim.n_subjects"] = std::to_string(design.n_subjects);
    kv["sim.visit_min"] = std::to_string(design.visit_min);
    kv["sim.visit_max"] = std::to_string(design.visit_max);
    kv["sim.time_min"] = format_double(design.t_min);
    kv["sim.time_max"] = format_double(design.t_max);
    kv["sim.spacing"] = format_double(design.spacing);
    kv["truth.beta1_0"] = format_double(truth.fixed.beta1_0);
    kv["truth.beta2_0"] = format_double(truth.fixed.beta2_0);
    kv["truth.beta3_0"] = format_double(truth.fixed.beta3_0);
    kv["truth.omega_0"] = format_double(truth.fixed.omega_0);
    kv["truth.sigma_y"] = format_double(truth.scales.sigma_y);
    kv["truth.sigma_u1"] = format_double(truth.scales.sigma_u1);
    kv["truth.sigma_u2"] = format_double(truth.scales.sigma_u2);
    kv["truth.sigma_u3"] = format_double(truth.scales.sigma_u3);
    kv["truth.sigma_u4"] = format_double(truth.scales.sigma_u4);
    if (truth.correlation) {
      const auto& c = *truth.correlation;
      kv["truth.correlation"] = format_double(c[0][1]) + "," + format_double(c[0][2]) + "," +
                                format_double(c[0][3]) + "," + format_double(c[1][2]) + "," +
                                format_double(c[1][3]) + "," + format_double(c[2][3]);
    } else {
      kv["truth.correlation"] = "none";
    }
    kv["cp_lower_bound"] =
        priors.cp_lower_bound ? format_double(*priors.cp_lower_bound) : std::string("none");
    kv["prior.beta1_0"] = detail::normal_prior_string(priors.beta1_0, "normal");
    kv["prior.beta2_0"] = detail::normal_prior_string(priors.beta2_0, "normal");
    kv["prior.beta3_0"] = detail::normal_prior_string(priors.beta3_0, "half-normal");
    kv["prior.omega_0"] = detail::normal_prior_string(priors.omega_0, "normal");
    kv["prior.sigma_y"] = detail::scale_prior_string(priors.sigma_y);
    for (int k = 0; k < 4; ++k)
      kv["prior.sigma_u" + std::to_string(k + 1)] = detail::scale_prior_string(priors.sigma_u[k]);
    for (int k = 0; k < 4; ++k) kv["prior.mu_u" + std::to_string(k + 1)] = "0";

    std::string out = "# bablr run manifest\n";
    for (const auto& [k, v] : kv) out += k + " = " + v + "\n";
    return out;
  }
};

}  // namespace bablr
