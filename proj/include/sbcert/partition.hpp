#pragma once

// Grid partition of the safe set, index families, and the exterior handling.
// The grid domain equals the safe set's bounding box; the complement is a
// single implicit exterior pseudo-region whose barrier piece is fixed to 1.

#include <stdexcept>
#include <string>
#include <vector>

#include "sbcert/geometry.hpp"

namespace sbcert::partition {

using geometry::Box;

constexpr int kExterior = -1;

struct Partition {
  std::vector<Box> regions;  // row-major, last axis fastest
  Box domain;
  std::vector<int> segments;
  bool has_exterior = true;

  int size() const { return static_cast<int>(regions.size()); }
  int dim() const { return domain.dim(); }

  // half-open cells, last cell per axis closed; kExterior outside the domain
  int locate(const Eigen::VectorXd& x) const {
    const int n = dim();
    int idx = 0;
    for (int a = 0; a < n; ++a) {
      if (x[a] < domain.lo[a] || x[a] > domain.hi[a]) return kExterior;
      int s = segments[a];
      int k = static_cast<int>(((x[a] - domain.lo[a]) / (domain.hi[a] - domain.lo[a])) * s);
      k = std::min(std::max(k, 0), s - 1);
      // snap against exact cell edges
      while (k > 0 && x[a] < edge(a, k)) --k;
      while (k + 1 < s && x[a] >= edge(a, k + 1)) ++k;
      idx = idx * s + k;
    }
    return idx;
  }

  double edge(int axis, int k) const {
    return domain.lo[axis] + k * (domain.hi[axis] - domain.lo[axis]) / segments[axis];
  }
};

struct IndexSets {
  int ell = 0;
  std::vector<int> initial;  // I_X0
  std::vector<int> safe;     // I_Xs (the whole grid)
  bool exterior_unsafe = true;
};

inline Partition grid_partition(const Box& domain, const std::vector<int>& segments) {
  if (static_cast<int>(segments.size()) != domain.dim())
    throw std::invalid_argument("grid_partition: segments size must match dimension");
  for (int s : segments)
    if (s < 1) throw std::invalid_argument("grid_partition: segments must be positive");

  Partition p;
  p.domain = domain;
  p.segments = segments;
  const int n = domain.dim();
  long total = 1;
  for (int s : segments) total *= s;
  p.regions.reserve(total);

  std::vector<int> idx(n, 0);
  for (long cell = 0; cell < total; ++cell) {
    Eigen::VectorXd lo(n), hi(n);
    for (int a = 0; a < n; ++a) {
      lo[a] = p.edge(a, idx[a]);
      hi[a] = p.edge(a, idx[a] + 1);
    }
    p.regions.emplace_back(lo, hi);
    for (int a = n - 1; a >= 0; --a) {
      if (++idx[a] < segments[a]) break;
      idx[a] = 0;
    }
  }
  return p;
}

inline IndexSets classify_indices(const Partition& p, const Box& X0, const Box& Xs) {
  if (!p.domain.contains_box(X0, 1e-12))
    throw std::invalid_argument("classify_indices: X0 must lie within the partition domain");
  if (!Xs.contains_box(X0, 1e-12))
    throw std::invalid_argument("classify_indices: X0 must lie within Xs");
  if (!p.domain.contains_box(Xs, 1e-12))
    throw std::invalid_argument("classify_indices: Xs must lie within the partition domain");

  IndexSets s;
  s.ell = p.size();
  for (int i = 0; i < p.size(); ++i) {
    if (geometry::boxes_intersect(p.regions[i], Xs)) s.safe.push_back(i);
    if (geometry::boxes_intersect(p.regions[i], X0)) s.initial.push_back(i);
  }
  return s;
}

inline geometry::HalfspaceSystem initial_intersection(const Box& r, const Box& X0) {
  auto cap = geometry::intersect_boxes(r, X0);
  if (!cap) throw std::invalid_argument("initial_intersection: empty intersection");
  return geometry::to_halfspaces(*cap);
}

}  // namespace sbcert::partition
