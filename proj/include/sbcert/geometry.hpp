#pragma once

// Axis-aligned boxes, half-space systems, exact convex hull of point sets,
// and an R-tree for box intersection queries. All values are immutable after
// construction and safe to share across threads.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <stdexcept>
#include <vector>

namespace sbcert::geometry {

struct Box {
  Eigen::VectorXd lo, hi;

  Box() = default;
  Box(Eigen::VectorXd l, Eigen::VectorXd h) : lo(std::move(l)), hi(std::move(h)) {
    if (lo.size() != hi.size()) throw std::invalid_argument("Box: dimension mismatch");
    for (Eigen::Index k = 0; k < lo.size(); ++k) {
      if (!std::isfinite(lo[k]) || !std::isfinite(hi[k]) || lo[k] > hi[k])
        throw std::invalid_argument("Box: requires finite lo <= hi");
    }
  }

  int dim() const { return static_cast<int>(lo.size()); }

  bool contains(const Eigen::VectorXd& x, double tol = 0.0) const {
    for (int k = 0; k < dim(); ++k)
      if (x[k] < lo[k] - tol || x[k] > hi[k] + tol) return false;
    return true;
  }

  bool contains_box(const Box& other, double tol = 0.0) const {
    for (int k = 0; k < dim(); ++k)
      if (other.lo[k] < lo[k] - tol || other.hi[k] > hi[k] + tol) return false;
    return true;
  }

  Eigen::VectorXd center() const { return 0.5 * (lo + hi); }
  Eigen::VectorXd widths() const { return hi - lo; }

  // corner selected by bit mask (bit k set -> hi on axis k)
  Eigen::VectorXd corner(long mask) const {
    Eigen::VectorXd v(dim());
    for (int k = 0; k < dim(); ++k) v[k] = (mask >> k) & 1 ? hi[k] : lo[k];
    return v;
  }
  long corner_count() const { return 1L << dim(); }
};

inline Box make_box(std::initializer_list<double> lo, std::initializer_list<double> hi) {
  Eigen::VectorXd l(static_cast<Eigen::Index>(lo.size())), h(static_cast<Eigen::Index>(hi.size()));
  std::copy(lo.begin(), lo.end(), l.data());
  std::copy(hi.begin(), hi.end(), h.data());
  return Box(std::move(l), std::move(h));
}

struct HalfspaceSystem {
  Eigen::MatrixXd H;
  Eigen::VectorXd h;

  int rows() const { return static_cast<int>(H.rows()); }
  bool contains(const Eigen::VectorXd& x, double tol = 0.0) const {
    return ((H * x - h).array() <= tol).all();
  }
};

// rows ordered (+e_1, -e_1, ..., +e_n, -e_n)
inline HalfspaceSystem to_halfspaces(const Box& b) {
  const int n = b.dim();
  HalfspaceSystem s;
  s.H = Eigen::MatrixXd::Zero(2 * n, n);
  s.h.resize(2 * n);
  for (int k = 0; k < n; ++k) {
    s.H(2 * k, k) = 1.0;
    s.h[2 * k] = b.hi[k];
    s.H(2 * k + 1, k) = -1.0;
    s.h[2 * k + 1] = -b.lo[k];
  }
  return s;
}

inline bool boxes_intersect(const Box& a, const Box& b) {
  if (a.dim() != b.dim()) throw std::invalid_argument("boxes_intersect: dimension mismatch");
  for (int k = 0; k < a.dim(); ++k)
    if (a.lo[k] > b.hi[k] || b.lo[k] > a.hi[k]) return false;
  return true;
}

inline std::optional<Box> intersect_boxes(const Box& a, const Box& b) {
  if (a.dim() != b.dim()) throw std::invalid_argument("intersect_boxes: dimension mismatch");
  Eigen::VectorXd lo = a.lo.cwiseMax(b.lo);
  Eigen::VectorXd hi = a.hi.cwiseMin(b.hi);
  for (int k = 0; k < a.dim(); ++k)
    if (lo[k] > hi[k]) return std::nullopt;
  return Box(std::move(lo), std::move(hi));
}

namespace detail {

// Phase-1 tableau simplex for the membership system
//   V lam = p, 1'lam = 1, lam >= 0,
// minimizing the sum of artificial residuals. Returns the optimum and, when
// infeasible, a separating functional y with y'(v,1) <= 0 on V and
// y'(p,1) > 0. Kept local so the hull has no dependency on the LP module.
struct MembershipLP {
  double residual = 0.0;
  Eigen::VectorXd separator;  // size n (x-part of the Farkas certificate)
};

inline MembershipLP hull_membership(const std::vector<Eigen::VectorXd>& V,
                                    const Eigen::VectorXd& p) {
  const int n = static_cast<int>(p.size());
  const int rows = n + 1;
  const int cols = static_cast<int>(V.size());
  // pre-flip rows so all rhs >= 0, then artificial basis
  Eigen::MatrixXd A(rows, cols);
  Eigen::VectorXd b(rows);
  for (int k = 0; k < n; ++k) b[k] = p[k];
  b[n] = 1.0;
  for (int j = 0; j < cols; ++j) {
    for (int k = 0; k < n; ++k) A(k, j) = V[j][k];
    A(n, j) = 1.0;
  }
  std::vector<double> sign(rows, 1.0);
  for (int i = 0; i < rows; ++i) {
    if (b[i] < 0) {
      sign[i] = -1.0;
      b[i] = -b[i];
      A.row(i) = -A.row(i);
    }
  }
  // tableau over [A | I], phase-1 costs on the artificial block
  Eigen::MatrixXd T(rows + 1, cols + rows + 1);
  T.setZero();
  T.block(0, 0, rows, cols) = A;
  T.block(0, cols, rows, rows).setIdentity();
  T.col(cols + rows).head(rows) = b;
  // objective row: minimize sum of artificials -> reduced costs
  for (int j = 0; j < cols; ++j) T(rows, j) = -A.col(j).sum();
  T(rows, cols + rows) = -b.sum();
  std::vector<int> basis(rows);
  for (int i = 0; i < rows; ++i) basis[i] = cols + i;

  const double eps = 1e-11;
  for (long iter = 0; iter < 200L * (cols + rows) + 200; ++iter) {
    int piv_col = -1;  // Bland
    for (int j = 0; j < cols + rows; ++j)
      if (T(rows, j) < -eps) {
        piv_col = j;
        break;
      }
    if (piv_col < 0) break;
    int piv_row = -1;
    double best = 0.0;
    for (int i = 0; i < rows; ++i) {
      if (T(i, piv_col) > eps) {
        double r = T(i, cols + rows) / T(i, piv_col);
        if (piv_row < 0 || r < best - eps ||
            (r < best + eps && basis[i] < basis[piv_row])) {
          piv_row = i;
          best = r;
        }
      }
    }
    if (piv_row < 0) break;  // cannot happen for this system
    double pv = T(piv_row, piv_col);
    T.row(piv_row) /= pv;
    for (int i = 0; i <= rows; ++i) {
      if (i == piv_row) continue;
      double f = T(i, piv_col);
      if (f != 0.0) T.row(i) -= f * T.row(piv_row);
    }
    basis[piv_row] = piv_col;
  }

  MembershipLP out;
  out.residual = -T(rows, cols + rows);
  if (out.residual > 1e-9) {
    // objective row holds reduced costs c_j - y'A_j; artificial column i has
    // c = 1 and A_j = e_i, so y_i = 1 - T(rows, cols+i). Undo the row flips.
    // The Farkas certificate satisfies y'(v,1) <= 0 on V and y'(p,1) > 0, so
    // its first n entries separate p from conv(V).
    Eigen::VectorXd y(rows);
    for (int i = 0; i < rows; ++i) y[i] = (1.0 - T(rows, cols + i)) * sign[i];
    out.separator = y.head(n);
  }
  return out;
}

inline bool lex_less(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  for (int k = 0; k < a.size(); ++k) {
    if (a[k] < b[k]) return true;
    if (a[k] > b[k]) return false;
  }
  return false;
}

// monotone chain, strict turns only: collinear interior points are dropped
inline std::vector<int> hull2d(const std::vector<Eigen::VectorXd>& pts,
                               const std::vector<int>& order) {
  auto cross = [&](int o, int a, int b) {
    return (pts[a][0] - pts[o][0]) * (pts[b][1] - pts[o][1]) -
           (pts[a][1] - pts[o][1]) * (pts[b][0] - pts[o][0]);
  };
  const int n = static_cast<int>(order.size());
  if (n <= 2) return order;
  std::vector<int> hull(2 * n);
  int k = 0;
  for (int idx = 0; idx < n; ++idx) {
    int i = order[idx];
    while (k >= 2 && cross(hull[k - 2], hull[k - 1], i) <= 0) --k;
    hull[k++] = i;
  }
  int lower = k + 1;
  for (int idx = n - 2; idx >= 0; --idx) {
    int i = order[idx];
    while (k >= lower && cross(hull[k - 2], hull[k - 1], i) <= 0) --k;
    hull[k++] = i;
  }
  hull.resize(k - 1);
  return hull;
}

}  // namespace detail

// Indices of the vertices of conv(points). Exact-hull semantics; coincident
// points collapse to the lowest-index representative.
inline std::vector<int> convex_hull_vertices(const std::vector<Eigen::VectorXd>& points) {
  if (points.empty()) throw std::invalid_argument("convex_hull_vertices: empty input");
  const int n = static_cast<int>(points[0].size());
  for (const auto& p : points)
    if (p.size() != n) throw std::invalid_argument("convex_hull_vertices: mixed dimensions");

  // collapse exact duplicates to the lowest original index
  std::vector<int> order(points.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return detail::lex_less(points[a], points[b]);
  });
  std::vector<int> uniq;
  for (int i : order) {
    if (!uniq.empty() && points[uniq.back()] == points[i]) {
      if (i < uniq.back()) uniq.back() = i;
      continue;
    }
    uniq.push_back(i);
  }

  std::vector<int> result;
  if (uniq.size() == 1) {
    result = uniq;
  } else if (n == 1) {
    result = {uniq.front(), uniq.back()};
  } else if (n == 2) {
    result = detail::hull2d(points, uniq);
  } else {
    // Clarkson's output-sensitive scan: maintain confirmed vertices V; for
    // each point either certify membership in conv(V) or walk to a new
    // vertex along the separating direction.
    std::vector<int> V;
    V.push_back(uniq.front());  // lexicographic minimum is a vertex
    std::vector<Eigen::VectorXd> Vpts = {points[uniq.front()]};
    for (int i : uniq) {
      bool done = false;
      while (!done) {
        if (std::find(V.begin(), V.end(), i) != V.end()) break;
        auto mem = detail::hull_membership(Vpts, points[i]);
        if (mem.residual <= 1e-9) break;  // inside current hull
        const Eigen::VectorXd d = mem.separator;
        int arg = -1;
        for (int j : uniq) {
          if (arg < 0) {
            arg = j;
            continue;
          }
          double s = d.dot(points[j]) - d.dot(points[arg]);
          if (s > 1e-12 || (s > -1e-12 && detail::lex_less(points[arg], points[j])))
            arg = j;
        }
        if (std::find(V.begin(), V.end(), arg) != V.end()) break;  // numerical guard
        V.push_back(arg);
        Vpts.push_back(points[arg]);
        if (arg == i) done = true;
      }
    }
    result = V;
  }
  std::sort(result.begin(), result.end());
  return result;
}

// --- R-tree --------------------------------------------------------------

// Static R-tree over an indexed list of boxes, bulk-loaded sort-tile-
// recursive. Read-only after construction.
class RTree {
 public:
  explicit RTree(const std::vector<Box>& boxes, int leaf_capacity = 8)
      : dim_(boxes.empty() ? 0 : boxes[0].dim()) {
    for (const auto& b : boxes)
      if (b.dim() != dim_) throw std::invalid_argument("RTree: mixed dimensions");
    std::vector<int> ids(boxes.size());
    std::iota(ids.begin(), ids.end(), 0);
    if (!boxes.empty()) root_ = build(boxes, ids, 0, leaf_capacity);
  }

  std::vector<int> query(const Box& q) const {
    if (q.dim() != dim_ && !nodes_.empty())
      throw std::invalid_argument("RTree: query dimension mismatch");
    std::vector<int> out;
    if (root_ >= 0) collect(root_, q, out);
    std::sort(out.begin(), out.end());
    return out;
  }

 private:
  struct Node {
    Box mbr;
    std::vector<int> children;  // node ids
    std::vector<std::pair<int, Box>> entries;  // leaf payload
    bool leaf = true;
  };

  int dim_ = 0;
  int root_ = -1;
  std::vector<Node> nodes_;

  static Box merge(const Box& a, const Box& b) {
    return Box(a.lo.cwiseMin(b.lo), a.hi.cwiseMax(b.hi));
  }

  int build(const std::vector<Box>& boxes, std::vector<int> ids, int axis, int cap) {
    if (static_cast<int>(ids.size()) <= cap) {
      Node node;
      node.leaf = true;
      node.mbr = boxes[ids[0]];
      for (int id : ids) {
        node.entries.push_back({id, boxes[id]});
        node.mbr = merge(node.mbr, boxes[id]);
      }
      nodes_.push_back(std::move(node));
      return static_cast<int>(nodes_.size()) - 1;
    }
    std::sort(ids.begin(), ids.end(), [&](int a, int b) {
      double ca = boxes[a].lo[axis] + boxes[a].hi[axis];
      double cb = boxes[b].lo[axis] + boxes[b].hi[axis];
      return ca < cb || (ca == cb && a < b);
    });
    const int parts = std::min<int>(cap, (static_cast<int>(ids.size()) + cap - 1) / cap);
    const size_t chunk = (ids.size() + parts - 1) / parts;
    Node node;
    node.leaf = false;
    for (size_t start = 0; start < ids.size(); start += chunk) {
      size_t end = std::min(ids.size(), start + chunk);
      std::vector<int> sub(ids.begin() + start, ids.begin() + end);
      int child = build(boxes, std::move(sub), (axis + 1) % dim_, cap);
      node.children.push_back(child);
    }
    node.mbr = nodes_[node.children[0]].mbr;
    for (int c : node.children) node.mbr = merge(node.mbr, nodes_[c].mbr);
    nodes_.push_back(std::move(node));
    return static_cast<int>(nodes_.size()) - 1;
  }

  void collect(int id, const Box& q, std::vector<int>& out) const {
    const Node& node = nodes_[id];
    if (!boxes_intersect(node.mbr, q)) return;
    if (node.leaf) {
      for (const auto& [idx, b] : node.entries)
        if (boxes_intersect(b, q)) out.push_back(idx);
    } else {
      for (int c : node.children) collect(c, q, out);
    }
  }
};

}  // namespace sbcert::geometry
