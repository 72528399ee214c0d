#pragma once

// CSV and text I/O. Numbers are written in their shortest round-trip
// decimal form and files are written atomically (temp + rename), so a
// rerun with the same seed and config is byte-identical.

#include <algorithm>
#include <charconv>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <system_error>
#include <vector>

#include "bablr/data.hpp"
#include "bablr/diagnostics.hpp"
#include "bablr/nuts.hpp"
#include "bablr/posterior.hpp"
#include "bablr/simulate.hpp"

namespace bablr {

inline constexpr const char* kDrawsSchema = "# bablr-draws v1";

inline std::string format_double(double v) {
  char buf[40];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

inline double parse_double(const std::string& s, const std::string& what) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    while (used < s.size() && (s[used] == ' ' || s[used] == '\t' || s[used] == '\r')) ++used;
    if (used != s.size()) throw std::invalid_argument("trailing characters");
    return v;
  } catch (const std::exception&) {
    throw std::invalid_argument("could not parse number '" + s + "' in " + what);
  }
}

inline void write_atomic(const std::filesystem::path& path, const std::string& content) {
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open '" + tmp.string() + "' for writing");
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) throw std::runtime_error("short write to '" + tmp.string() + "'");
  }
  std::filesystem::rename(tmp, path);
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  for (char ch : line) {
    if (ch == ',') {
      fields.push_back(field);
      field.clear();
    } else if (ch != '\r') {
      field.push_back(ch);
    }
  }
  fields.push_back(field);
  return fields;
}

// Reads `subject_id,time,outcome` rows, grouping by subject (ordered by
// first appearance) and sorting by time within each subject. Malformed
// rows are reported with their line numbers. Warnings (unsorted input,
// subjects with fewer than three visits) are appended to `warnings` when
// provided.
inline LongitudinalDataset read_dataset_csv(const std::filesystem::path& path,
                                            std::vector<std::string>* warnings = nullptr) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open '" + path.string() + "'");
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("'" + path.string() + "': empty file");
  const auto header = split_csv_line(line);
  if (header.size() < 3 || header[0] != "subject_id" || header[1] != "time" ||
      header[2] != "outcome")
    throw std::runtime_error("'" + path.string() +
                             "': expected header subject_id,time,outcome");

  LongitudinalDataset data;
  std::map<std::string, std::size_t> index;
  std::vector<std::string> bad_rows;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    const auto fields = split_csv_line(line);
    if (fields.size() != 3) {
      bad_rows.push_back("line " + std::to_string(line_no) + ": expected 3 fields");
      continue;
    }
    double t, y;
    try {
      t = parse_double(fields[1], "time");
      y = parse_double(fields[2], "outcome");
    } catch (const std::exception&) {
      bad_rows.push_back("line " + std::to_string(line_no) + ": non-numeric field");
      continue;
    }
    auto [it, inserted] = index.emplace(fields[0], data.subjects.size());
    if (inserted) data.subjects.push_back(SubjectRecord{fields[0], {}, {}});
    data.subjects[it->second].times.push_back(t);
    data.subjects[it->second].outcomes.push_back(y);
  }
  if (!bad_rows.empty()) {
    std::string msg = "'" + path.string() + "': " + std::to_string(bad_rows.size()) +
                      " malformed row(s):";
    for (const auto& r : bad_rows) msg += "\n  " + r;
    throw std::runtime_error(msg);
  }
  if (data.subjects.empty()) throw std::runtime_error("'" + path.string() + "': empty dataset");

  for (auto& s : data.subjects) {
    bool sorted = true;
    for (std::size_t j = 1; j < s.times.size(); ++j)
      if (s.times[j] < s.times[j - 1]) sorted = false;
    if (!sorted) {
      std::vector<std::size_t> order(s.times.size());
      for (std::size_t j = 0; j < order.size(); ++j) order[j] = j;
      std::stable_sort(order.begin(), order.end(),
                       [&](std::size_t a, std::size_t b) { return s.times[a] < s.times[b]; });
      std::vector<double> t2(order.size()), y2(order.size());
      for (std::size_t j = 0; j < order.size(); ++j) {
        t2[j] = s.times[order[j]];
        y2[j] = s.outcomes[order[j]];
      }
      s.times = std::move(t2);
      s.outcomes = std::move(y2);
      if (warnings)
        warnings->push_back("subject '" + s.id + "': times were not sorted; sorted on ingest");
    }
  }
  if (warnings) {
    for (const auto& id : data.subjects_with_fewer_than(3))
      warnings->push_back("subject '" + id + "' has fewer than 3 visits");
  }
  data.validate();
  return data;
}

inline void write_dataset_csv(const std::filesystem::path& path, const LongitudinalDataset& data) {
  std::string out = "subject_id,time,outcome\n";
  for (const auto& s : data.subjects)
    for (std::size_t j = 0; j < s.times.size(); ++j)
      out += s.id + "," + format_double(s.times[j]) + "," + format_double(s.outcomes[j]) + "\n";
  write_atomic(path, out);
}

inline void write_draws_csv(const std::filesystem::path& path, const DrawsStore& store) {
  std::string out = kDrawsSchema;
  out += "\nchain,iteration";
  for (const auto& n : store.names) out += "," + n;
  out += "\n";
  for (std::size_t c = 0; c < store.n_chains; ++c)
    for (std::size_t it = 0; it < store.n_iterations; ++it) {
      out += std::to_string(c) + "," + std::to_string(it);
      for (std::size_t p = 0; p < store.n_params; ++p)
        out += "," + format_double(store.value(c, it, p));
      out += "\n";
    }
  write_atomic(path, out);
}

inline DrawsStore read_draws_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open '" + path.string() + "'");
  std::string line;
  if (!std::getline(in, line) || line != kDrawsSchema)
    throw std::runtime_error("'" + path.string() +
                             "': missing or mismatched draws schema header (expected \"" +
                             kDrawsSchema + "\")");
  if (!std::getline(in, line)) throw std::runtime_error("'" + path.string() + "': no header row");
  auto header = split_csv_line(line);
  if (header.size() < 3 || header[0] != "chain" || header[1] != "iteration")
    throw std::runtime_error("'" + path.string() + "': malformed draws header");

  DrawsStore store;
  store.names.assign(header.begin() + 2, header.end());
  store.n_params = store.names.size();
  std::vector<double> values;
  std::vector<std::size_t> chain_of_row;
  std::size_t max_chain = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto fields = split_csv_line(line);
    if (fields.size() != store.n_params + 2)
      throw std::runtime_error("'" + path.string() + "': row width mismatch");
    const std::size_t chain = static_cast<std::size_t>(std::stoul(fields[0]));
    max_chain = std::max(max_chain, chain);
    chain_of_row.push_back(chain);
    for (std::size_t p = 0; p < store.n_params; ++p)
      values.push_back(parse_double(fields[2 + p], "draws"));
  }
  if (chain_of_row.empty()) throw std::runtime_error("'" + path.string() + "': no draws");
  store.n_chains = max_chain + 1;
  if (chain_of_row.size() % store.n_chains != 0)
    throw std::runtime_error("'" + path.string() + "': chains have unequal lengths");
  store.n_iterations = chain_of_row.size() / store.n_chains;
  store.values = std::move(values);
  store.has_stats = false;
  return store;
}

inline void write_summary_csv(const std::filesystem::path& path,
                              const std::vector<ParameterSummary>& rows) {
  std::string out = "parameter,median,q2.5,q97.5,mean,sd\n";
  for (const auto& r : rows)
    out += r.name + "," + format_double(r.median) + "," + format_double(r.q025) + "," +
           format_double(r.q975) + "," + format_double(r.mean) + "," + format_double(r.sd) + "\n";
  write_atomic(path, out);
}

inline void write_curves_csv(const std::filesystem::path& path, const QuantileCurves& curves) {
  std::string out = "age,quantile,value\n";
  for (std::size_t qi = 0; qi < curves.quantiles.size(); ++qi)
    for (std::size_t a = 0; a < curves.ages.size(); ++a)
      out += format_double(curves.ages[a]) + "," + format_double(curves.quantiles[qi]) + "," +
             format_double(curves.values[qi][a]) + "\n";
  write_atomic(path, out);
}

inline void write_study_csv(const std::filesystem::path& path, const StudyReport& report) {
  std::string out = "parameter,truth,est_mean,se,bias,coverage\n";
  for (const auto& r : report.rows)
    out += r.name + "," + format_double(r.truth) + "," + format_double(r.est_mean) + "," +
           format_double(r.se) + "," + format_double(r.bias) + "," + format_double(r.coverage) +
           "\n";
  out += "# replicates=" + std::to_string(report.replicates) +
         " failed=" + std::to_string(report.failed) + "\n";
  write_atomic(path, out);
}

inline void write_truth_csv(const std::filesystem::path& path, const TruthRecord& record) {
  std::string out = "parameter,value\n";
  for (std::size_t k = 0; k < 9; ++k)
    out += std::string(kPopulationParameterNames[k]) + "," +
           format_double(record.population_value(k)) + "\n";
  if (record.correlation) {
    const auto& c = *record.correlation;
    const std::pair<int, int> pairs[6] = {{1, 2}, {1, 3}, {1, 4}, {2, 3}, {2, 4}, {3, 4}};
    for (const auto& [a, b] : pairs)
      out += "rho_u" + std::to_string(a) + "_u" + std::to_string(b) + "," +
             format_double(c[a - 1][b - 1]) + "\n";
  }
  for (std::size_t i = 0; i < record.realized.size(); ++i) {
    const auto& id = record.subject_ids[i];
    const auto& u = record.realized[i];
    out += "u1[" + id + "]," + format_double(u.u1) + "\n";
    out += "u2[" + id + "]," + format_double(u.u2) + "\n";
    out += "u3[" + id + "]," + format_double(u.u3) + "\n";
    out += "u4[" + id + "]," + format_double(u.u4) + "\n";
  }
  write_atomic(path, out);
}

inline void write_validation_csv(const std::filesystem::path& path, const HoldoutReport& report) {
  std::string out = "subject_id,time,y,q025,q50,q975,inside\n";
  for (const auto& p : report.points)
    out += p.subject_id + "," + format_double(p.time) + "," + format_double(p.y) + "," +
           format_double(p.q025) + "," + format_double(p.q50) + "," + format_double(p.q975) +
           "," + (p.inside ? "1" : "0") + "\n";
  out += "# coverage=" + format_double(report.coverage) + " points=" +
         std::to_string(report.points.size()) + "\n";
  write_atomic(path, out);
}

}  // namespace bablr
