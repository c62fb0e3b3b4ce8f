#pragma once

// Noise dataset handling, convex-hull sample pruning, the scenario
// confidence bound and its inverse, and the chance-constraint buffer.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "sbcert/geometry.hpp"

namespace sbcert::scenario {

struct NoiseDataset {
  Eigen::MatrixXd samples;  // one realization per row
  std::string source;
  long guarantee_n = 0;  // N backing the scenario bound (survives pruning)

  long rows() const { return samples.rows(); }
  int dim() const { return static_cast<int>(samples.cols()); }
  Eigen::VectorXd row(long k) const { return samples.row(k).transpose(); }
};

inline NoiseDataset make_dataset(Eigen::MatrixXd samples, std::string source = "") {
  if (samples.rows() < 1) throw std::invalid_argument("NoiseDataset: needs at least one row");
  if (!samples.allFinite()) throw std::invalid_argument("NoiseDataset: non-finite entries");
  NoiseDataset d;
  d.guarantee_n = samples.rows();
  d.samples = std::move(samples);
  d.source = std::move(source);
  return d;
}

// CSV: one realization per row, '#' comment lines allowed.
inline NoiseDataset load_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("noise csv: cannot open " + path);
  std::vector<std::vector<double>> rows;
  std::string line;
  long lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    size_t first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;
    std::vector<double> vals;
    std::string cell;
    std::stringstream ss(line);
    while (std::getline(ss, cell, ',')) {
      try {
        vals.push_back(std::stod(cell));
      } catch (const std::exception&) {
        throw std::runtime_error("noise csv: bad number at " + path + ":" +
                                 std::to_string(lineno));
      }
    }
    if (!rows.empty() && vals.size() != rows.front().size())
      throw std::runtime_error("noise csv: inconsistent column count at " + path + ":" +
                               std::to_string(lineno));
    rows.push_back(std::move(vals));
  }
  if (rows.empty()) throw std::runtime_error("noise csv: no samples in " + path);
  Eigen::MatrixXd m(rows.size(), rows.front().size());
  for (size_t i = 0; i < rows.size(); ++i)
    for (size_t j = 0; j < rows.front().size(); ++j) m(i, j) = rows[i][j];
  return make_dataset(std::move(m), path);
}

inline void save_csv(const NoiseDataset& d, const std::string& path,
                     const std::string& comment = "") {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("noise csv: cannot write " + path);
  if (!comment.empty()) out << "# " << comment << "\n";
  out.precision(17);
  for (long i = 0; i < d.rows(); ++i) {
    for (int j = 0; j < d.dim(); ++j) out << (j ? "," : "") << d.samples(i, j);
    out << "\n";
  }
}

// Keep only the vertices of conv(samples); constraints on them imply the
// constraints on every sample because all sample-indexed constraints are
// affine in eta. The guarantee bookkeeping keeps the original N.
inline NoiseDataset prune_to_hull(const NoiseDataset& d) {
  std::vector<Eigen::VectorXd> pts;
  pts.reserve(d.rows());
  for (long i = 0; i < d.rows(); ++i) pts.push_back(d.row(i));
  auto verts = geometry::convex_hull_vertices(pts);
  Eigen::MatrixXd kept(verts.size(), d.dim());
  for (size_t k = 0; k < verts.size(); ++k) kept.row(k) = d.samples.row(verts[k]);
  NoiseDataset out;
  out.samples = std::move(kept);
  out.source = d.source;
  out.guarantee_n = d.guarantee_n;
  return out;
}

// P{ V(z*) > eps } <= sum_{i=0}^{d-1} C(N,i) eps^i (1-eps)^{N-i}, evaluated
// in log space; the complement sum is used when the tail holds the bulk.
inline double beta_bound(long N, double epsilon, long d) {
  if (N < 1 || d < 1) throw std::invalid_argument("beta_bound: N >= 1 and d >= 1 required");
  if (!(epsilon > 0.0 && epsilon < 1.0))
    throw std::invalid_argument("beta_bound: epsilon must be in (0,1)");
  if (N <= d - 1) return 1.0;

  const double le = std::log(epsilon);
  const double l1e = std::log1p(-epsilon);
  auto logsumexp = [](const std::vector<double>& v) {
    double mx = -std::numeric_limits<double>::infinity();
    for (double t : v) mx = std::max(mx, t);
    if (!std::isfinite(mx)) return mx;
    double s = 0.0;
    for (double t : v) s += std::exp(t - mx);
    return mx + std::log(s);
  };

  if (d - 1 > static_cast<double>(N) * epsilon) {
    // bulk regime: 1 - sum_{i=d}^{N} term_i
    std::vector<double> terms;
    terms.reserve(N - d + 1);
    double lt = std::lgamma(N + 1.0) - std::lgamma(d + 1.0) - std::lgamma(N - d + 1.0) +
                d * le + (N - d) * l1e;
    for (long i = d; i <= N; ++i) {
      terms.push_back(lt);
      lt += std::log(static_cast<double>(N - i) / (i + 1.0)) + le - l1e;
    }
    double comp = std::exp(logsumexp(terms));
    return std::clamp(1.0 - comp, 0.0, 1.0);
  }

  std::vector<double> terms;
  terms.reserve(d);
  double lt = N * l1e;  // i = 0
  for (long i = 0; i < d; ++i) {
    terms.push_back(lt);
    lt += std::log(static_cast<double>(N - i) / (i + 1.0)) + le - l1e;
  }
  return std::clamp(std::exp(logsumexp(terms)), 0.0, 1.0);
}

// minimal N with beta_bound(N, eps, d) <= beta
inline long required_samples(double epsilon, double beta, long d) {
  if (!(beta > 0.0 && beta < 1.0))
    throw std::invalid_argument("required_samples: beta must be in (0,1)");
  long lo = d;  // beta_bound(d-1) = 1
  long hi = std::max<long>(d, 16);
  while (beta_bound(hi, epsilon, d) > beta) {
    if (hi > (1L << 40)) throw std::runtime_error("required_samples: N out of range");
    lo = hi + 1;
    hi *= 2;
  }
  while (lo < hi) {
    long mid = lo + (hi - lo) / 2;
    if (beta_bound(mid, epsilon, d) <= beta)
      hi = mid;
    else
      lo = mid + 1;
  }
  return lo;
}

inline double buffer_delta(double M, double epsilon) {
  if (M < 1.0) throw std::invalid_argument("buffer_delta: M >= 1 required");
  if (!(epsilon > 0.0 && epsilon < 1.0))
    throw std::invalid_argument("buffer_delta: epsilon must be in (0,1)");
  return M * epsilon / (1.0 - epsilon);
}

inline long barrier_dimension(long ell, int n) { return 2 + ell * (n + 1); }

struct ScenarioParams {
  double epsilon = 0.005;
  double M = 1.0;
  double delta = 0.0;
  long d = 0;
  long N = 0;
  double beta = 1.0;

  static ScenarioParams make(double epsilon, double M, long ell, int n, long N) {
    ScenarioParams p;
    p.epsilon = epsilon;
    p.M = M;
    p.delta = buffer_delta(M, epsilon);
    p.d = barrier_dimension(ell, n);
    p.N = N;
    p.beta = beta_bound(N, epsilon, p.d);
    return p;
  }
};

}  // namespace sbcert::scenario
