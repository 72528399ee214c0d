#pragma once

// Longitudinal data model: repeated (time, outcome) measurements per subject.

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

namespace bablr {

struct SubjectRecord {
  std::string id;
  std::vector<double> times;     // years, nondecreasing
  std::vector<double> outcomes;  // test-score units
};

struct LongitudinalDataset {
  std::vector<SubjectRecord> subjects;

  std::size_t n_subjects() const { return subjects.size(); }

  std::size_t total_observations() const {
    std::size_t n = 0;
    for (const auto& s : subjects) n += s.times.size();
    return n;
  }

  // Enforces the structural invariants; throws on violation.
  void validate() const {
    if (subjects.empty()) throw std::invalid_argument("dataset has no subjects");
    std::unordered_map<std::string, std::size_t> seen;
    for (const auto& s : subjects) {
      if (s.id.empty()) throw std::invalid_argument("subject with empty id");
      if (!seen.emplace(s.id, seen.size()).second)
        throw std::invalid_argument("duplicate subject id '" + s.id + "'");
      if (s.times.empty()) throw std::invalid_argument("subject '" + s.id + "' has no observations");
      if (s.times.size() != s.outcomes.size())
        throw std::invalid_argument("subject '" + s.id + "' has mismatched times/outcomes");
      for (std::size_t j = 0; j < s.times.size(); ++j) {
        if (!std::isfinite(s.times[j]) || !std::isfinite(s.outcomes[j]))
          throw std::invalid_argument("subject '" + s.id + "' has non-finite values");
        if (j > 0 && s.times[j] < s.times[j - 1])
          throw std::invalid_argument("subject '" + s.id + "' has decreasing times");
      }
    }
  }

  // Index of a subject id; throws when absent.
  std::size_t index_of(const std::string& id) const {
    for (std::size_t i = 0; i < subjects.size(); ++i)
      if (subjects[i].id == id) return i;
    throw std::invalid_argument("unknown subject id '" + id + "'");
  }

  // Subjects below the usual minimum of three visits are accepted but
  // worth flagging to the caller.
  std::vector<std::string> subjects_with_fewer_than(std::size_t min_visits) const {
    std::vector<std::string> out;
    for (const auto& s : subjects)
      if (s.times.size() < min_visits) out.push_back(s.id);
    return out;
  }
};

}  // namespace bablr
