#pragma once

// Helpers shared by the fit command and the validation tests.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "bablr/data.hpp"
#include "bablr/rng.hpp"

namespace bablr {

// Removes the last observation of a seeded random fraction of eligible
// subjects (those with at least two observations) from `data`, returning
// the removed points as a dataset of single observations.
inline LongitudinalDataset split_holdout(LongitudinalDataset& data, double fraction,
                                         std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction <= 1.0))
    throw std::invalid_argument("holdout fraction must lie in (0, 1]");
  std::vector<std::size_t> eligible;
  for (std::size_t i = 0; i < data.subjects.size(); ++i)
    if (data.subjects[i].times.size() >= 2) eligible.push_back(i);
  if (eligible.empty()) throw std::invalid_argument("no subjects with >= 2 observations");
  const std::size_t k = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::llround(fraction * static_cast<double>(eligible.size()))));

  // partial Fisher-Yates over the eligible indices
  Rng rng = Rng::stream(seed, 0x484f4c44ULL);  // holdout substream
  for (std::size_t i = 0; i < k && i + 1 < eligible.size(); ++i) {
    const std::size_t j = i + static_cast<std::size_t>(rng.uniform_int(eligible.size() - i));
    std::swap(eligible[i], eligible[j]);
  }
  std::vector<std::size_t> chosen(eligible.begin(), eligible.begin() + std::min(k, eligible.size()));
  std::sort(chosen.begin(), chosen.end());

  LongitudinalDataset heldout;
  for (std::size_t idx : chosen) {
    SubjectRecord& s = data.subjects[idx];
    SubjectRecord h;
    h.id = s.id;
    h.times.push_back(s.times.back());
    h.outcomes.push_back(s.outcomes.back());
    s.times.pop_back();
    s.outcomes.pop_back();
    heldout.subjects.push_back(std::move(h));
  }
  return heldout;
}

}  // namespace bablr
