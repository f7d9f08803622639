#ifndef MFEQ_GRID_HPP
#define MFEQ_GRID_HPP

#include <cmath>
#include <cstddef>
#include <vector>

#include "mfeq/errors.hpp"

namespace mfeq {

/// Node times 0 = t_0 < t_1 < ... < t_N = T together with the triangular
/// index set {(i,j): t_i <= t_j}.
class TriangularGrid {
 public:
  TriangularGrid() = default;

  static TriangularGrid uniform(std::size_t N, double T) {
    if (N < 2) throw ModelError("triangular grid needs at least 2 cells");
    if (!(T > 0.0)) throw ModelError("horizon must be positive");
    std::vector<double> nodes(N + 1);
    for (std::size_t i = 0; i <= N; ++i) {
      nodes[i] = T * static_cast<double>(i) / static_cast<double>(N);
    }
    nodes[N] = T;
    return TriangularGrid(std::move(nodes));
  }

  static TriangularGrid from_nodes(std::vector<double> nodes) {
    return TriangularGrid(std::move(nodes));
  }

  const std::vector<double>& nodes() const { return nodes_; }
  std::size_t cells() const { return nodes_.size() - 1; }
  std::size_t size() const { return nodes_.size(); }
  double node(std::size_t i) const { return nodes_[i]; }
  double horizon() const { return nodes_.back(); }

  /// Index of the largest node <= t (clamped).
  std::size_t locate(double t) const {
    if (t <= nodes_.front()) return 0;
    if (t >= nodes_.back()) return nodes_.size() - 1;
    std::size_t lo = 0, hi = nodes_.size() - 1;
    while (hi - lo > 1) {
      const std::size_t mid = (lo + hi) / 2;
      if (nodes_[mid] <= t) {
        lo = mid;
      } else {
        hi = mid;
      }
    }
    return lo;
  }

  /// Nearest node index.
  std::size_t nearest(double t) const {
    const std::size_t i = locate(t);
    if (i + 1 < nodes_.size() &&
        std::abs(nodes_[i + 1] - t) < std::abs(t - nodes_[i])) {
      return i + 1;
    }
    return i;
  }

 private:
  explicit TriangularGrid(std::vector<double> nodes) : nodes_(std::move(nodes)) {
    if (nodes_.size() < 3) throw ModelError("triangular grid needs at least 3 nodes");
    if (nodes_.front() != 0.0) throw ModelError("grid must start at t=0");
    for (std::size_t i = 0; i + 1 < nodes_.size(); ++i) {
      if (!(nodes_[i] < nodes_[i + 1])) {
        throw ModelError("grid nodes must increase strictly");
      }
    }
  }

  std::vector<double> nodes_;
};

}  // namespace mfeq

#endif  // MFEQ_GRID_HPP
