#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include <Eigen/Dense>

#include "grfx/error.hpp"
#include "grfx/model.hpp"

namespace grfx {

/// Grid points t ∈ {i/N}^d whose left-open cell (t − 1/N, t] meets T, with
/// the exact clipped cell volumes.
struct Lattice {
  int subdivisions = 1;
  std::vector<Eigen::VectorXd> points;
  std::vector<double> cell_measures;

  [[nodiscard]] int size() const { return static_cast<int>(points.size()); }
  [[nodiscard]] int dim() const { return points.empty() ? 0 : static_cast<int>(points.front().size()); }
  [[nodiscard]] double total_measure() const {
    double s = 0.0;
    for (double m : cell_measures) s += m;
    return s;
  }

  /// Index of the lattice point closest to t (Euclidean; first on ties).
  [[nodiscard]] int nearest(const Eigen::VectorXd& t) const {
    int best = 0;
    double best_d = (points.at(0) - t).squaredNorm();
    for (int i = 1; i < size(); ++i) {
      const double dd = (points[static_cast<std::size_t>(i)] - t).squaredNorm();
      if (dd < best_d) {
        best_d = dd;
        best = i;
      }
    }
    return best;
  }
};

inline Lattice build_lattice(const Domain& domain, int subdivisions) {
  if (subdivisions < 1) throw Error(ErrorCode::out_of_range, "lattice needs N >= 1");
  const int d = domain.dim();
  const double n = subdivisions;

  // Per axis: admissible integer indices and the clipped 1-D cell length.
  std::vector<std::vector<long>> indices(static_cast<std::size_t>(d));
  std::vector<std::vector<double>> lengths(static_cast<std::size_t>(d));
  for (int a = 0; a < d; ++a) {
    const double lo = domain.lower[a];
    const double hi = domain.upper[a];
    const long first = static_cast<long>(std::floor(lo * n)) - 1;
    const long last = static_cast<long>(std::ceil(hi * n)) + 1;
    for (long i = first; i <= last; ++i) {
      const double right = static_cast<double>(i) / n;
      const double left = static_cast<double>(i - 1) / n;
      // (left, right] ∩ [lo, hi] ≠ ∅
      if (left < hi && right >= lo) {
        indices[static_cast<std::size_t>(a)].push_back(i);
        lengths[static_cast<std::size_t>(a)].push_back(std::max(0.0, std::min(right, hi) - std::max(left, lo)));
      }
    }
  }

  Lattice lat;
  lat.subdivisions = subdivisions;
  std::vector<std::size_t> pos(static_cast<std::size_t>(d), 0);
  while (true) {
    Eigen::VectorXd t(d);
    double m = 1.0;
    for (int a = 0; a < d; ++a) {
      const auto ua = static_cast<std::size_t>(a);
      t[a] = static_cast<double>(indices[ua][pos[ua]]) / n;
      m *= lengths[ua][pos[ua]];
    }
    lat.points.push_back(std::move(t));
    lat.cell_measures.push_back(m);
    // Last axis varies fastest.
    int a = d - 1;
    while (a >= 0 && ++pos[static_cast<std::size_t>(a)] == indices[static_cast<std::size_t>(a)].size())
      pos[static_cast<std::size_t>(a--)] = 0;
    if (a < 0) break;
  }
  return lat;
}

inline Lattice build_lattice(const FieldModel& model, int subdivisions) {
  return build_lattice(model.domain, subdivisions);
}

}  // namespace grfx
