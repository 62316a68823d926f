#pragma once

#include <algorithm>
#include <map>
#include <span>
#include <vector>

#include "personadb/error.hpp"

namespace personadb {

/// Sample Pearson correlation. Throws EmptySeries for no data and
/// DegenerateSeries when fewer than two points or either series is constant.
double pearson(std::span<const double> x, std::span<const double> y);

/// Ranks starting at 1; tied values share the mean of their ranks.
std::vector<double> average_ranks(std::span<const double> x);

/// Pearson over average ranks.
double spearman(std::span<const double> x, std::span<const double> y);

struct F1Scores {
  double micro = 0.0;
  double macro = 0.0;
};

struct AlignmentMse {
  double alignment = 0.0;  // 1 - mean|pred - gold| / 3 on the 0..3 scale
  double mse = 0.0;
};

AlignmentMse alignment_and_mse(std::span<const int> pred, std::span<const int> gold);

namespace detail {
inline void check_lengths(std::size_t a, std::size_t b) {
  if (a != b) throw Error(ErrorCode::PreconditionViolation, "series lengths differ");
  if (a == 0) throw Error(ErrorCode::EmptySeries, "no samples");
}
}  // namespace detail

template <typename T>
double accuracy(std::span<const T> preds, std::span<const T> gold) {
  detail::check_lengths(preds.size(), gold.size());
  std::size_t hit = 0;
  for (std::size_t i = 0; i < preds.size(); ++i) hit += preds[i] == gold[i] ? 1 : 0;
  return static_cast<double>(hit) / static_cast<double>(preds.size());
}

/// Micro- and macro-F1 for single-label multiclass data. The macro average
/// runs over every class seen in gold or preds.
template <typename T>
F1Scores micro_macro_f1(std::span<const T> preds, std::span<const T> gold) {
  detail::check_lengths(preds.size(), gold.size());
  struct Counts {
    std::size_t tp = 0, fp = 0, fn = 0;
  };
  std::map<T, Counts> classes;
  std::size_t tp_total = 0, fp_total = 0, fn_total = 0;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    if (preds[i] == gold[i]) {
      ++classes[gold[i]].tp;
      ++tp_total;
    } else {
      ++classes[preds[i]].fp;
      ++classes[gold[i]].fn;
      ++fp_total;
      ++fn_total;
    }
  }
  auto f1 = [](std::size_t tp, std::size_t fp, std::size_t fn) {
    const auto denom = 2 * tp + fp + fn;
    return denom == 0 ? 0.0 : 2.0 * static_cast<double>(tp) / static_cast<double>(denom);
  };
  F1Scores out;
  out.micro = f1(tp_total, fp_total, fn_total);
  double sum = 0.0;
  for (const auto& [cls, c] : classes) sum += f1(c.tp, c.fp, c.fn);
  out.macro = sum / static_cast<double>(classes.size());
  return out;
}

}  // namespace personadb
