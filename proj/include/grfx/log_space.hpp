#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <utility>

namespace grfx {

inline constexpr double neg_inf = -std::numeric_limits<double>::infinity();

/// log Σ exp(x_i); returns −∞ for an empty or all −∞ input.
inline double log_sum_exp(std::span<const double> xs) {
  double top = neg_inf;
  for (double x : xs) top = std::max(top, x);
  if (top == neg_inf) return neg_inf;
  if (top == std::numeric_limits<double>::infinity()) return top;
  double s = 0.0;
  for (double x : xs) s += std::exp(x - top);
  return top + std::log(s);
}

/// log(exp(a) + exp(b)).
inline double log_add(double a, double b) {
  if (a < b) std::swap(a, b);
  if (b == neg_inf) return a;
  return a + std::log1p(std::exp(b - a));
}

/// Streaming log-sum-exp accumulator.
class LogSumAccumulator {
 public:
  void add(double x) {
    if (x == neg_inf) return;
    if (x <= top_) {
      sum_ += std::exp(x - top_);
    } else {
      sum_ = sum_ * std::exp(top_ - x) + 1.0;
      top_ = x;
    }
  }
  [[nodiscard]] double value() const { return top_ == neg_inf ? neg_inf : top_ + std::log(sum_); }

 private:
  double top_ = neg_inf;
  double sum_ = 0.0;
};

/// Neumaier-compensated summation.
class CompensatedSum {
 public:
  void add(double x) {
    const double t = sum_ + x;
    if (std::abs(sum_) >= std::abs(x))
      comp_ += (sum_ - t) + x;
    else
      comp_ += (x - t) + sum_;
    sum_ = t;
  }
  [[nodiscard]] double value() const { return sum_ + comp_; }

 private:
  double sum_ = 0.0;
  double comp_ = 0.0;
};

}  // namespace grfx
