#pragma once

#include <cmath>
#include <span>
#include <string>

#include "qeprobe/error.hpp"

namespace qeprobe::stats {

/// Neumaier-compensated running sum. Feeding values in a fixed order gives a
/// bit-identical result on every run.
class CompensatedSum {
 public:
  void add(double x) noexcept {
    const double t = sum_ + x;
    if (std::fabs(sum_) >= std::fabs(x))
      comp_ += (sum_ - t) + x;
    else
      comp_ += (x - t) + sum_;
    sum_ = t;
  }
  double value() const noexcept { return sum_ + comp_; }

 private:
  double sum_ = 0.0;
  double comp_ = 0.0;
};

inline double mean(std::span<const double> xs) {
  if (xs.empty()) fail(ErrorCode::contract, "mean of an empty sequence");
  CompensatedSum s;
  for (double x : xs) s.add(x);
  return s.value() / static_cast<double>(xs.size());
}

/// Sample Pearson correlation coefficient.
inline double pearson(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size())
    fail(ErrorCode::contract, "pearson: length mismatch (" + std::to_string(x.size()) + " vs " +
                                  std::to_string(y.size()) + ")");
  if (x.size() < 2) fail(ErrorCode::contract, "pearson needs at least two points");
  const double mx = mean(x);
  const double my = mean(y);
  CompensatedSum sxy, sxx, syy;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = x[i] - mx;
    const double dy = y[i] - my;
    sxy.add(dx * dy);
    sxx.add(dx * dx);
    syy.add(dy * dy);
  }
  if (sxx.value() == 0.0 || syy.value() == 0.0) fail(ErrorCode::undefined_correlation, "pearson: constant input");
  const double r = sxy.value() / std::sqrt(sxx.value() * syy.value());
  return std::fmax(-1.0, std::fmin(1.0, r));
}

/// Kendall tau-b (tie-corrected) over paired observations.
inline double kendall_tau_b(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) fail(ErrorCode::contract, "kendall: length mismatch");
  if (x.size() < 2) fail(ErrorCode::contract, "kendall needs at least two points");
  long long concordant = 0, discordant = 0, tied_x = 0, tied_y = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    for (std::size_t j = i + 1; j < x.size(); ++j) {
      const double dx = x[i] - x[j];
      const double dy = y[i] - y[j];
      if (dx == 0.0 && dy == 0.0) continue;
      if (dx == 0.0) {
        ++tied_x;
      } else if (dy == 0.0) {
        ++tied_y;
      } else if ((dx > 0) == (dy > 0)) {
        ++concordant;
      } else {
        ++discordant;
      }
    }
  }
  const double n1 = static_cast<double>(concordant + discordant + tied_x);
  const double n2 = static_cast<double>(concordant + discordant + tied_y);
  if (n1 == 0.0 || n2 == 0.0) fail(ErrorCode::undefined_correlation, "kendall: one side is constant");
  return static_cast<double>(concordant - discordant) / std::sqrt(n1 * n2);
}

}  // namespace qeprobe::stats
