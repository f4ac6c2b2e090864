#pragma once

#include <cassert>
#include <utility>
#include <vector>

namespace grfx {

/// Index arithmetic for the per-point jet (f, ∂f, ∂²f).
///
/// A jet at one point is laid out as
///   [0]                 f
///   [1 .. d]            ∂_i f,           i = 0..d-1
///   [1+d .. q-1]        ∂²f entries:     first the d diagonal entries ∂²_ii,
///                                        then the upper triangle ∂²_ij, i<j,
///                                        row by row ((0,1),(0,2),..,(1,2),..)
/// with q = 1 + d + d(d+1)/2. A lattice sample is point-major: point p occupies
/// [p*q, (p+1)*q).
class JetLayout {
 public:
  explicit JetLayout(int dim) : dim_(dim) {
    assert(dim > 0);
    pairs_.reserve(static_cast<std::size_t>(second_count()));
    for (int i = 0; i < dim_; ++i) pairs_.emplace_back(i, i);
    for (int i = 0; i < dim_; ++i)
      for (int j = i + 1; j < dim_; ++j) pairs_.emplace_back(i, j);
  }

  [[nodiscard]] int dim() const noexcept { return dim_; }
  [[nodiscard]] int second_count() const noexcept { return dim_ * (dim_ + 1) / 2; }
  [[nodiscard]] int jet_size() const noexcept { return 1 + dim_ + second_count(); }

  [[nodiscard]] static constexpr int value_offset() noexcept { return 0; }
  [[nodiscard]] static constexpr int gradient_offset() noexcept { return 1; }
  [[nodiscard]] int second_offset() const noexcept { return 1 + dim_; }

  /// Axis pair (i, j), i <= j, of the k-th second-derivative entry.
  [[nodiscard]] std::pair<int, int> second_axes(int k) const { return pairs_.at(static_cast<std::size_t>(k)); }

  /// Differentiation axes of jet coordinate c (empty for f).
  [[nodiscard]] std::vector<int> coordinate_axes(int c) const {
    if (c == 0) return {};
    if (c <= dim_) return {c - 1};
    auto [i, j] = second_axes(c - 1 - dim_);
    return {i, j};
  }

  [[nodiscard]] int global_index(int point, int coordinate) const noexcept {
    return point * jet_size() + coordinate;
  }

 private:
  int dim_;
  std::vector<std::pair<int, int>> pairs_;
};

}  // namespace grfx
