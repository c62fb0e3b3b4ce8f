#pragma once

// Computation graphs for nominal dynamics and their per-region uncertain
// affine relaxations  A_lo x + b_lo <= f(x) <= A_hi x + b_hi  obtained by
// backward linear bound propagation. Also interval image boxes under the
// relaxation plus a noise vector, and a line-oriented network weight loader.

#include <Eigen/Dense>

#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "sbcert/geometry.hpp"

namespace sbcert::relaxation {

using geometry::Box;

struct Interval {
  double lo = 0.0, hi = 0.0;
  Interval() = default;
  Interval(double l, double h) : lo(l), hi(h) {
    if (!(l <= h)) throw std::invalid_argument("Interval: lo > hi");
  }
  double mid() const { return 0.5 * (lo + hi); }
  double width() const { return hi - lo; }
};

enum class ElemKind { Sin, Cos, Cube, Square, Relu, Tanh };

inline const char* elem_name(ElemKind k) {
  switch (k) {
    case ElemKind::Sin: return "sin";
    case ElemKind::Cos: return "cos";
    case ElemKind::Cube: return "cube";
    case ElemKind::Square: return "square";
    case ElemKind::Relu: return "relu";
    case ElemKind::Tanh: return "tanh";
  }
  return "?";
}

struct LinearBounds1D {
  double slope_lo = 0.0, icpt_lo = 0.0;
  double slope_hi = 0.0, icpt_hi = 0.0;
};

namespace detail {

constexpr double kPi = 3.14159265358979323846;

inline double elem_eval(ElemKind k, double t) {
  switch (k) {
    case ElemKind::Sin: return std::sin(t);
    case ElemKind::Cos: return std::cos(t);
    case ElemKind::Cube: return t * t * t;
    case ElemKind::Square: return t * t;
    case ElemKind::Relu: return t > 0 ? t : 0.0;
    case ElemKind::Tanh: return std::tanh(t);
  }
  return 0.0;
}

inline double elem_deriv(ElemKind k, double t) {
  switch (k) {
    case ElemKind::Sin: return std::cos(t);
    case ElemKind::Cos: return -std::sin(t);
    case ElemKind::Cube: return 3 * t * t;
    case ElemKind::Square: return 2 * t;
    case ElemKind::Relu: return t > 0 ? 1.0 : 0.0;
    case ElemKind::Tanh: {
      double th = std::tanh(t);
      return 1.0 - th * th;
    }
  }
  return 0.0;
}

inline double elem_second(ElemKind k, double t) {
  switch (k) {
    case ElemKind::Sin: return -std::sin(t);
    case ElemKind::Cos: return -std::cos(t);
    case ElemKind::Cube: return 6 * t;
    case ElemKind::Square: return 2.0;
    case ElemKind::Relu: return 0.0;
    case ElemKind::Tanh: {
      double th = std::tanh(t);
      return -2 * th * (1 - th * th);
    }
  }
  return 0.0;
}

// inflection points strictly inside (lo, hi)
inline std::vector<double> inflections(ElemKind k, const Interval& iv) {
  std::vector<double> out;
  auto push = [&](double t) {
    if (t > iv.lo + 1e-15 && t < iv.hi - 1e-15) out.push_back(t);
  };
  switch (k) {
    case ElemKind::Square:
      break;
    case ElemKind::Cube:
    case ElemKind::Tanh:
      push(0.0);
      break;
    case ElemKind::Sin: {
      long k0 = static_cast<long>(std::floor(iv.lo / kPi)) - 1;
      long k1 = static_cast<long>(std::ceil(iv.hi / kPi)) + 1;
      for (long q = k0; q <= k1; ++q) push(q * kPi);
      break;
    }
    case ElemKind::Cos: {
      long k0 = static_cast<long>(std::floor((iv.lo - kPi / 2) / kPi)) - 1;
      long k1 = static_cast<long>(std::ceil((iv.hi - kPi / 2) / kPi)) + 1;
      for (long q = k0; q <= k1; ++q) push(kPi / 2 + q * kPi);
      break;
    }
    case ElemKind::Relu:
      break;  // handled separately
  }
  return out;
}

// all t in [lo, hi] with g'(t) = s
inline std::vector<double> slope_matches(ElemKind k, const Interval& iv, double s) {
  std::vector<double> out;
  auto push = [&](double t) {
    if (t >= iv.lo - 1e-12 && t <= iv.hi + 1e-12)
      out.push_back(std::clamp(t, iv.lo, iv.hi));
  };
  switch (k) {
    case ElemKind::Square:
      push(s / 2);
      break;
    case ElemKind::Cube:
      if (s >= 0) {
        double r = std::sqrt(s / 3);
        push(r);
        push(-r);
      }
      break;
    case ElemKind::Sin: {
      if (std::abs(s) <= 1.0) {
        double base = std::acos(std::clamp(s, -1.0, 1.0));
        long k0 = static_cast<long>(std::floor(iv.lo / (2 * kPi))) - 1;
        long k1 = static_cast<long>(std::ceil(iv.hi / (2 * kPi))) + 1;
        for (long q = k0; q <= k1; ++q) {
          push(base + 2 * kPi * q);
          push(-base + 2 * kPi * q);
        }
      }
      break;
    }
    case ElemKind::Cos: {
      if (std::abs(s) <= 1.0) {
        double base = std::asin(std::clamp(-s, -1.0, 1.0));
        long k0 = static_cast<long>(std::floor(iv.lo / (2 * kPi))) - 1;
        long k1 = static_cast<long>(std::ceil(iv.hi / (2 * kPi))) + 1;
        for (long q = k0; q <= k1; ++q) {
          push(base + 2 * kPi * q);
          push(kPi - base + 2 * kPi * q);
        }
      }
      break;
    }
    case ElemKind::Tanh:
      if (s > 0 && s <= 1.0) {
        double r = std::sqrt(1.0 - s);
        push(std::atanh(r));
        push(std::atanh(-r));
      }
      break;
    case ElemKind::Relu:
      break;
  }
  return out;
}

// exact range of g over the interval (used for degenerate intervals and the
// interval pre-pass)
inline Interval elem_range(ElemKind k, const Interval& iv) {
  double lo = std::min(elem_eval(k, iv.lo), elem_eval(k, iv.hi));
  double hi = std::max(elem_eval(k, iv.lo), elem_eval(k, iv.hi));
  for (double t : slope_matches(k, iv, 0.0)) {
    double v = elem_eval(k, t);
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  if (k == ElemKind::Relu && iv.lo < 0 && iv.hi > 0) lo = 0.0;
  return {lo, hi};
}

// largest value of g(t) - (s t + c) over the interval, exact via calculus
inline double max_above(ElemKind k, const Interval& iv, double s, double c) {
  double best = std::max(elem_eval(k, iv.lo) - (s * iv.lo + c),
                         elem_eval(k, iv.hi) - (s * iv.hi + c));
  for (double t : slope_matches(k, iv, s))
    best = std::max(best, elem_eval(k, t) - (s * t + c));
  if (k == ElemKind::Relu && iv.lo < 0 && iv.hi > 0)
    best = std::max(best, 0.0 - c);  // kink
  return best;
}

}  // namespace detail

// Sound linear envelope of an elementwise function on an interval. Pure
// curvature: chord on the convex side, tangent at the midpoint on the other.
// Mixed curvature: chord slope on both sides, shifted outward by the exact
// extremal violation. Relu: triangle upper bound, lower slope 0 if |lo|>=|hi|
// else 1.
inline LinearBounds1D relax_elementwise(ElemKind kind, const Interval& iv) {
  using namespace detail;
  LinearBounds1D out;

  if (kind == ElemKind::Relu) {
    if (iv.lo >= 0) return {1.0, 0.0, 1.0, 0.0};
    if (iv.hi <= 0) return {0.0, 0.0, 0.0, 0.0};
    double su = iv.hi / (iv.hi - iv.lo);
    out.slope_hi = su;
    out.icpt_hi = -iv.lo * su;
    out.slope_lo = (std::abs(iv.lo) >= std::abs(iv.hi)) ? 0.0 : 1.0;
    out.icpt_lo = 0.0;
    return out;
  }

  if (iv.width() <= 1e-12 * std::max(1.0, std::abs(iv.lo))) {
    Interval r = elem_range(kind, iv);
    return {0.0, r.lo, 0.0, r.hi};
  }

  const double chord = (elem_eval(kind, iv.hi) - elem_eval(kind, iv.lo)) / iv.width();
  const bool mixed = !inflections(kind, iv).empty();
  double s_hi, s_lo;
  if (mixed) {
    s_hi = s_lo = chord;
  } else {
    bool convex = elem_second(kind, iv.mid()) >= 0.0;
    s_hi = convex ? chord : elem_deriv(kind, iv.mid());
    s_lo = convex ? elem_deriv(kind, iv.mid()) : chord;
  }
  // anchor at the midpoint, then shift each line outward by the exact
  // extremal violation so the envelope is sound regardless of curvature
  double mval = elem_eval(kind, iv.mid());
  double c_hi = mval - s_hi * iv.mid();
  double c_lo = mval - s_lo * iv.mid();
  out.slope_hi = s_hi;
  out.icpt_hi = c_hi + std::max(0.0, max_above(kind, iv, s_hi, c_hi));
  out.slope_lo = s_lo;
  double below = std::max((s_lo * iv.lo + c_lo) - elem_eval(kind, iv.lo),
                          (s_lo * iv.hi + c_lo) - elem_eval(kind, iv.hi));
  for (double t : slope_matches(kind, iv, s_lo))
    below = std::max(below, (s_lo * t + c_lo) - elem_eval(kind, t));
  out.icpt_lo = c_lo - std::max(0.0, below);
  return out;
}

// --- computation graphs ----------------------------------------------------

struct GraphNode {
  enum class Kind { Input, Affine, Elementwise, Sum } kind = Kind::Input;
  int input = -1;              // affine / elementwise
  std::vector<int> inputs;     // sum
  Eigen::MatrixXd W;
  Eigen::VectorXd w;
  ElemKind elem = ElemKind::Relu;
  int dim = 0;
};

struct ComputationGraph {
  std::vector<GraphNode> nodes;
  int input_dim = 0;

  int add_input(int dim) {
    if (!nodes.empty()) throw std::invalid_argument("graph: input must be the first node");
    GraphNode n;
    n.kind = GraphNode::Kind::Input;
    n.dim = dim;
    input_dim = dim;
    nodes.push_back(std::move(n));
    return 0;
  }

  int add_affine(int input, Eigen::MatrixXd W, Eigen::VectorXd w) {
    check_ref(input);
    if (W.cols() != nodes[input].dim || W.rows() != w.size())
      throw std::invalid_argument("graph: affine shape mismatch");
    GraphNode n;
    n.kind = GraphNode::Kind::Affine;
    n.input = input;
    n.dim = static_cast<int>(W.rows());
    n.W = std::move(W);
    n.w = std::move(w);
    nodes.push_back(std::move(n));
    return static_cast<int>(nodes.size()) - 1;
  }

  int add_elementwise(int input, ElemKind kind) {
    check_ref(input);
    GraphNode n;
    n.kind = GraphNode::Kind::Elementwise;
    n.input = input;
    n.elem = kind;
    n.dim = nodes[input].dim;
    nodes.push_back(std::move(n));
    return static_cast<int>(nodes.size()) - 1;
  }

  int add_sum(std::vector<int> inputs) {
    if (inputs.empty()) throw std::invalid_argument("graph: empty sum");
    for (int i : inputs) check_ref(i);
    int d = nodes[inputs[0]].dim;
    for (int i : inputs)
      if (nodes[i].dim != d) throw std::invalid_argument("graph: sum dimension mismatch");
    GraphNode n;
    n.kind = GraphNode::Kind::Sum;
    n.inputs = std::move(inputs);
    n.dim = d;
    nodes.push_back(std::move(n));
    return static_cast<int>(nodes.size()) - 1;
  }

  int output_node() const { return static_cast<int>(nodes.size()) - 1; }
  int output_dim() const { return nodes.back().dim; }

  void require_dynamics_shape() const {
    if (nodes.empty() || output_dim() != input_dim)
      throw std::invalid_argument("graph: output dimension must equal input dimension");
  }

  Eigen::VectorXd evaluate(const Eigen::VectorXd& x) const {
    std::vector<Eigen::VectorXd> vals(nodes.size());
    for (size_t v = 0; v < nodes.size(); ++v) {
      const auto& n = nodes[v];
      switch (n.kind) {
        case GraphNode::Kind::Input:
          vals[v] = x;
          break;
        case GraphNode::Kind::Affine:
          vals[v] = n.W * vals[n.input] + n.w;
          break;
        case GraphNode::Kind::Elementwise: {
          vals[v] = vals[n.input];
          for (int k = 0; k < n.dim; ++k) vals[v][k] = detail::elem_eval(n.elem, vals[v][k]);
          break;
        }
        case GraphNode::Kind::Sum: {
          vals[v] = vals[n.inputs[0]];
          for (size_t q = 1; q < n.inputs.size(); ++q) vals[v] += vals[n.inputs[q]];
          break;
        }
      }
    }
    return vals.back();
  }

 private:
  void check_ref(int i) const {
    if (i < 0 || i >= static_cast<int>(nodes.size()))
      throw std::invalid_argument("graph: bad node reference");
  }
};

struct UncertainAffineMap {
  Eigen::MatrixXd A_lo, A_hi;
  Eigen::VectorXd b_lo, b_hi;
  Box region;

  int dim() const { return static_cast<int>(b_lo.size()); }

  Eigen::VectorXd apply(double alpha, const Eigen::VectorXd& x) const {
    return alpha * (A_lo * x + b_lo) + (1 - alpha) * (A_hi * x + b_hi);
  }
};

// exact pass-through for interval-parameter affine systems
inline UncertainAffineMap affine_uncertain(Eigen::MatrixXd A_lo, Eigen::MatrixXd A_hi,
                                           Eigen::VectorXd b_lo, Eigen::VectorXd b_hi,
                                           Box region) {
  UncertainAffineMap m;
  m.A_lo = std::move(A_lo);
  m.A_hi = std::move(A_hi);
  m.b_lo = std::move(b_lo);
  m.b_hi = std::move(b_hi);
  m.region = std::move(region);
  return m;
}

namespace detail {

struct NodeRanges {
  std::vector<Eigen::VectorXd> lo, hi;
};

inline NodeRanges interval_pass(const ComputationGraph& g, const Box& r) {
  NodeRanges R;
  R.lo.resize(g.nodes.size());
  R.hi.resize(g.nodes.size());
  for (size_t v = 0; v < g.nodes.size(); ++v) {
    const auto& n = g.nodes[v];
    switch (n.kind) {
      case GraphNode::Kind::Input:
        R.lo[v] = r.lo;
        R.hi[v] = r.hi;
        break;
      case GraphNode::Kind::Affine: {
        const auto& xl = R.lo[n.input];
        const auto& xh = R.hi[n.input];
        R.lo[v] = n.w;
        R.hi[v] = n.w;
        for (int i = 0; i < n.dim; ++i) {
          for (int j = 0; j < n.W.cols(); ++j) {
            double a = n.W(i, j);
            if (a >= 0) {
              R.lo[v][i] += a * xl[j];
              R.hi[v][i] += a * xh[j];
            } else {
              R.lo[v][i] += a * xh[j];
              R.hi[v][i] += a * xl[j];
            }
          }
        }
        break;
      }
      case GraphNode::Kind::Elementwise: {
        R.lo[v].resize(n.dim);
        R.hi[v].resize(n.dim);
        for (int k = 0; k < n.dim; ++k) {
          Interval in{R.lo[n.input][k], R.hi[n.input][k]};
          Interval out = elem_range(n.elem, in);
          R.lo[v][k] = out.lo;
          R.hi[v][k] = out.hi;
        }
        break;
      }
      case GraphNode::Kind::Sum: {
        R.lo[v] = R.lo[n.inputs[0]];
        R.hi[v] = R.hi[n.inputs[0]];
        for (size_t q = 1; q < n.inputs.size(); ++q) {
          R.lo[v] += R.lo[n.inputs[q]];
          R.hi[v] += R.hi[n.inputs[q]];
        }
        break;
      }
    }
    if (!R.lo[v].allFinite() || !R.hi[v].allFinite())
      throw std::runtime_error("relax_region: non-finite range at node " + std::to_string(v));
  }
  return R;
}

}  // namespace detail

// Backward linear bound propagation over the graph, yielding a sound
// uncertain affine relaxation on the region.
inline UncertainAffineMap relax_region(const ComputationGraph& g, const Box& r) {
  g.require_dynamics_shape();
  if (r.dim() != g.input_dim) throw std::invalid_argument("relax_region: region dim mismatch");
  const int n = g.input_dim;
  auto ranges = detail::interval_pass(g, r);

  const size_t V = g.nodes.size();
  std::vector<Eigen::MatrixXd> Clo(V), Chi(V);
  std::vector<char> touched(V, 0);
  Eigen::VectorXd const_lo = Eigen::VectorXd::Zero(n), const_hi = Eigen::VectorXd::Zero(n);

  auto touch = [&](int v) {
    if (!touched[v]) {
      Clo[v] = Eigen::MatrixXd::Zero(n, g.nodes[v].dim);
      Chi[v] = Eigen::MatrixXd::Zero(n, g.nodes[v].dim);
      touched[v] = 1;
    }
  };
  int out = g.output_node();
  touch(out);
  Clo[out].setIdentity();
  Chi[out].setIdentity();

  Eigen::MatrixXd A_lo = Eigen::MatrixXd::Zero(n, n), A_hi = Eigen::MatrixXd::Zero(n, n);

  for (int v = static_cast<int>(V) - 1; v >= 0; --v) {
    if (!touched[v]) continue;
    const auto& node = g.nodes[v];
    switch (node.kind) {
      case GraphNode::Kind::Input:
        A_lo += Clo[v];
        A_hi += Chi[v];
        break;
      case GraphNode::Kind::Affine:
        touch(node.input);
        Clo[node.input] += Clo[v] * node.W;
        Chi[node.input] += Chi[v] * node.W;
        const_lo += Clo[v] * node.w;
        const_hi += Chi[v] * node.w;
        break;
      case GraphNode::Kind::Sum:
        for (int q : node.inputs) {
          touch(q);
          Clo[q] += Clo[v];
          Chi[q] += Chi[v];
        }
        break;
      case GraphNode::Kind::Elementwise: {
        touch(node.input);
        for (int k = 0; k < node.dim; ++k) {
          Interval in{ranges.lo[node.input][k], ranges.hi[node.input][k]};
          LinearBounds1D lb = relax_elementwise(node.elem, in);
          for (int row = 0; row < n; ++row) {
            double cl = Clo[v](row, k);
            if (cl >= 0) {
              Clo[node.input](row, k) += cl * lb.slope_lo;
              const_lo[row] += cl * lb.icpt_lo;
            } else {
              Clo[node.input](row, k) += cl * lb.slope_hi;
              const_lo[row] += cl * lb.icpt_hi;
            }
            double ch = Chi[v](row, k);
            if (ch >= 0) {
              Chi[node.input](row, k) += ch * lb.slope_hi;
              const_hi[row] += ch * lb.icpt_hi;
            } else {
              Chi[node.input](row, k) += ch * lb.slope_lo;
              const_hi[row] += ch * lb.icpt_lo;
            }
          }
        }
        break;
      }
    }
  }

  UncertainAffineMap m;
  m.A_lo = std::move(A_lo);
  m.A_hi = std::move(A_hi);
  m.b_lo = std::move(const_lo);
  m.b_hi = std::move(const_hi);
  m.region = r;
  return m;
}

// Interval over-approximation of { A(alpha) x + b(alpha) + eta : x in r }.
inline Box image_box(const UncertainAffineMap& m, const Box& r, const Eigen::VectorXd& eta) {
  const int n = m.dim();
  Eigen::VectorXd lo(n), hi(n);
  for (int k = 0; k < n; ++k) {
    double acc_lo = std::min(m.b_lo[k], m.b_hi[k]) + eta[k];
    double acc_hi = std::max(m.b_lo[k], m.b_hi[k]) + eta[k];
    for (int j = 0; j < r.dim(); ++j) {
      double a0 = std::min(m.A_lo(k, j), m.A_hi(k, j));
      double a1 = std::max(m.A_lo(k, j), m.A_hi(k, j));
      double p1 = a0 * r.lo[j], p2 = a0 * r.hi[j], p3 = a1 * r.lo[j], p4 = a1 * r.hi[j];
      acc_lo += std::min(std::min(p1, p2), std::min(p3, p4));
      acc_hi += std::max(std::max(p1, p2), std::max(p3, p4));
    }
    lo[k] = acc_lo;
    hi[k] = acc_hi;
  }
  return Box(std::move(lo), std::move(hi));
}

// --- network weight files ----------------------------------------------------
//
// Line-oriented text:
//   layers <L> activation <relu|tanh|identity>
// then per layer
//   <rows> <cols>
//   rows lines of cols whitespace-separated weights (row-major)
//   one line of rows bias values
// The activation is applied between consecutive layers, not after the last.
inline ComputationGraph load_network(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_network: cannot open " + path);
  std::string word;
  int layers = 0;
  std::string act;
  if (!(in >> word) || word != "layers" || !(in >> layers) || !(in >> word) ||
      word != "activation" || !(in >> act))
    throw std::runtime_error("load_network: bad header in " + path);
  if (layers < 1) throw std::runtime_error("load_network: needs at least one layer");
  ElemKind kind = ElemKind::Relu;
  bool identity = false;
  if (act == "relu")
    kind = ElemKind::Relu;
  else if (act == "tanh")
    kind = ElemKind::Tanh;
  else if (act == "identity")
    identity = true;
  else
    throw std::runtime_error("load_network: unknown activation '" + act + "'");

  std::vector<Eigen::MatrixXd> Ws(layers);
  std::vector<Eigen::VectorXd> bs(layers);
  for (int l = 0; l < layers; ++l) {
    int rows = 0, cols = 0;
    if (!(in >> rows >> cols) || rows < 1 || cols < 1)
      throw std::runtime_error("load_network: bad shape line for layer " + std::to_string(l));
    Ws[l].resize(rows, cols);
    for (int i = 0; i < rows; ++i)
      for (int j = 0; j < cols; ++j)
        if (!(in >> Ws[l](i, j)))
          throw std::runtime_error("load_network: truncated weights in layer " +
                                   std::to_string(l));
    bs[l].resize(rows);
    for (int i = 0; i < rows; ++i)
      if (!(in >> bs[l][i]))
        throw std::runtime_error("load_network: truncated bias in layer " + std::to_string(l));
    if (l > 0 && Ws[l].cols() != Ws[l - 1].rows())
      throw std::runtime_error("load_network: shape mismatch between layers " +
                               std::to_string(l - 1) + " and " + std::to_string(l));
  }

  ComputationGraph g;
  int node = g.add_input(static_cast<int>(Ws[0].cols()));
  for (int l = 0; l < layers; ++l) {
    node = g.add_affine(node, Ws[l], bs[l]);
    if (!identity && l + 1 < layers) node = g.add_elementwise(node, kind);
  }
  g.require_dynamics_shape();
  return g;
}

}  // namespace sbcert::relaxation
