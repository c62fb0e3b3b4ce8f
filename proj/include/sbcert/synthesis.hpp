#pragma once

// Assembly and solution of the finite robust program for piecewise-affine
// stochastic barrier functions: dualization of robust box constraints,
// transition triple discovery through the R-tree, the four constraint
// blocks plus per-sample one-step constraints, and the end-to-end
// certification pipeline producing a PAC safety certificate.

#include <chrono>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "sbcert/geometry.hpp"
#include "sbcert/lp.hpp"
#include "sbcert/partition.hpp"
#include "sbcert/preimage.hpp"
#include "sbcert/relaxation.hpp"
#include "sbcert/scenario.hpp"
#include "sbcert/util.hpp"

namespace sbcert::synthesis {

using geometry::Box;
using relaxation::UncertainAffineMap;

struct LinExpr {
  lp::LinComb terms;
  double constant = 0.0;
};

// Dualize  sup_{x in P} (sum_k xcoef[k](z) x_k) <= rhs(z)  into
//   H' lam = xcoef(z),  h' lam <= rhs(z),  lam >= 0
// with fresh multipliers. P must be non-empty and bounded; the axis-aligned
// pattern produced by to_halfspaces is annotated for exact elimination.
inline std::vector<int> dualize_robust(lp::Model& model, const geometry::HalfspaceSystem& P,
                                       const std::vector<LinExpr>& xcoef, const LinExpr& rhs) {
  const int p = P.rows();
  const int n = static_cast<int>(P.H.cols());
  if (static_cast<int>(xcoef.size()) != n)
    throw std::invalid_argument("dualize_robust: coefficient count must match dimension");

  // detect the to_halfspaces box pattern (+e_1, -e_1, ..., +e_n, -e_n)
  bool is_box = (p == 2 * n);
  if (is_box) {
    for (int k = 0; k < n && is_box; ++k) {
      for (int j = 0; j < n && is_box; ++j) {
        double want_pos = (j == k) ? 1.0 : 0.0;
        if (P.H(2 * k, j) != want_pos || P.H(2 * k + 1, j) != -want_pos) is_box = false;
      }
      if (is_box && -P.h[2 * k + 1] > P.h[2 * k]) is_box = false;  // empty box
    }
  }
  if (!is_box) {
    // boundedness check: every coordinate direction must be bounded over P
    for (int k = 0; k < n; ++k) {
      for (double sgn : {1.0, -1.0}) {
        lp::Model probe;
        for (int j = 0; j < n; ++j) probe.add_var("", -lp::kInf, lp::kInf);
        for (int r = 0; r < p; ++r) {
          lp::LinComb row;
          for (int j = 0; j < n; ++j)
            if (P.H(r, j) != 0.0) row.push_back({j, P.H(r, j)});
          probe.add_row(std::move(row), lp::Sense::LessEqual, P.h[r]);
        }
        probe.set_objective({{k, -sgn}});
        auto s = lp::solve(probe);
        if (s.status == lp::Status::Unbounded)
          throw std::invalid_argument("dualize_robust: unbounded polyhedron rejected");
        if (s.status == lp::Status::Infeasible)
          throw std::invalid_argument("dualize_robust: empty polyhedron rejected");
      }
    }
  }

  std::vector<int> lams;
  lams.reserve(p);
  for (int r = 0; r < p; ++r) lams.push_back(model.add_var("", 0.0, lp::kInf));

  std::vector<int> eq_rows;
  eq_rows.reserve(n);
  for (int k = 0; k < n; ++k) {
    lp::LinComb row;
    for (int r = 0; r < p; ++r)
      if (P.H(r, k) != 0.0) row.push_back({lams[r], P.H(r, k)});
    for (const auto& [j, a] : xcoef[k].terms) row.push_back({j, -a});
    eq_rows.push_back(model.add_row(std::move(row), lp::Sense::Equal, xcoef[k].constant));
  }
  lp::LinComb ineq;
  for (int r = 0; r < p; ++r)
    if (P.h[r] != 0.0) ineq.push_back({lams[r], P.h[r]});
  for (const auto& [j, a] : rhs.terms) ineq.push_back({j, -a});
  int ineq_row = model.add_row(std::move(ineq), lp::Sense::LessEqual, rhs.constant);

  if (is_box) {
    lp::BoxDualBlock blk;
    blk.lo.resize(n);
    blk.hi.resize(n);
    blk.xconst.resize(n);
    for (int k = 0; k < n; ++k) {
      blk.hi[k] = P.h[2 * k];
      blk.lo[k] = -P.h[2 * k + 1];
      blk.xcoef.push_back(xcoef[k].terms);
      blk.xconst[k] = xcoef[k].constant;
    }
    blk.rhs = rhs.terms;
    blk.rhs_const = rhs.constant;
    blk.lambda_vars = lams;
    blk.eq_rows = eq_rows;
    blk.ineq_row = ineq_row;
    model.box_blocks.push_back(std::move(blk));
  }
  return lams;
}

struct TransitionTriple {
  int i = 0;
  int j = 0;  // partition::kExterior for the complement destination
  long k = 0;
  Box preimage;
};

// Exactly the triples with image_box(R_i, eta_k) intersecting R_j, including
// the exterior destination when the image escapes the domain; each carries
// its bisection preimage box.
inline std::vector<TransitionTriple> find_transition_triples(
    const partition::Partition& parts, const partition::IndexSets& idx,
    const std::vector<UncertainAffineMap>& maps, const scenario::NoiseDataset& samples,
    const geometry::RTree& rtree, int bisection_depth, int workers = 1) {
  std::vector<std::vector<TransitionTriple>> per_source(idx.safe.size());
  util::parallel_for(static_cast<long>(idx.safe.size()), workers, [&](long si) {
    int i = idx.safe[si];
    auto& out = per_source[si];
    for (long k = 0; k < samples.rows(); ++k) {
      Eigen::VectorXd eta = samples.row(k);
      Box img = relaxation::image_box(maps[i], parts.regions[i], eta);
      for (int j : rtree.query(img)) {
        auto q = preimage::poly_preimage(parts.regions[i], parts.regions[j], maps[i], eta,
                                         bisection_depth);
        if (q) out.push_back({i, j, k, *q});
      }
      if (!parts.domain.contains_box(img)) {
        auto q = preimage::poly_preimage_exterior(parts.regions[i], parts.domain, maps[i], eta,
                                                  bisection_depth);
        if (q) out.push_back({i, partition::kExterior, k, *q});
      }
    }
  });
  std::vector<TransitionTriple> triples;
  for (auto& v : per_source)
    triples.insert(triples.end(), v.begin(), v.end());
  return triples;
}

struct BuildStats {
  long rows_nonneg = 0, rows_upper = 0, rows_initial = 0, rows_onestep = 0;
  long n_rows = 0, n_vars = 0, n_primal = 0, n_triples = 0;
};

struct FsbpModel {
  lp::Model model;
  BuildStats stats;
  int var_gamma = 0, var_c = 1;
  int n = 0;
  long ell = 0;
  int u_var(int region, int coord) const { return 2 + region * (n + 1) + coord; }
  int v_var(int region) const { return 2 + region * (n + 1) + n; }
};

// Assemble the finite robust program: objective gamma + c T; non-negativity
// and uniform upper bound per region, initial-set bound over R_i cap X0,
// fixed exterior piece for the unsafe side, and per triple the two one-step
// corner constraints over the preimage box.
inline FsbpModel build_fsbp(const partition::Partition& parts, const partition::IndexSets& idx,
                            const std::vector<UncertainAffineMap>& maps,
                            const std::vector<TransitionTriple>& triples,
                            const scenario::NoiseDataset& samples,
                            const scenario::ScenarioParams& params, int T, const Box& X0) {
  if (params.delta < scenario::buffer_delta(params.M, params.epsilon) - 1e-15)
    throw std::invalid_argument("build_fsbp: delta below M eps/(1-eps)");
  if (T < 1) throw std::invalid_argument("build_fsbp: horizon must be positive");

  FsbpModel fm;
  const int n = parts.dim();
  fm.n = n;
  fm.ell = parts.size();
  auto& m = fm.model;

  m.add_var("gamma", 0.0, lp::kInf);
  m.add_var("c", 0.0, lp::kInf);
  for (int i = 0; i < parts.size(); ++i) {
    for (int k = 0; k < n; ++k)
      m.add_var("u" + std::to_string(i) + "_" + std::to_string(k), -lp::kInf, lp::kInf);
    m.add_var("v" + std::to_string(i), -lp::kInf, lp::kInf);
  }
  fm.stats.n_primal = static_cast<long>(m.vars.size());

  const double M = params.M;
  const double delta = params.delta;

  auto track = [&](long& counter, long before) {
    counter += static_cast<long>(m.rows.size()) - before;
  };

  for (int i = 0; i < parts.size(); ++i) {
    auto hs = geometry::to_halfspaces(parts.regions[i]);
    // 0 <= B_i on R_i:  -u_i'x <= v_i
    std::vector<LinExpr> neg(n), pos(n);
    for (int k = 0; k < n; ++k) {
      neg[k].terms = {{fm.u_var(i, k), -1.0}};
      pos[k].terms = {{fm.u_var(i, k), 1.0}};
    }
    long before = static_cast<long>(m.rows.size());
    dualize_robust(m, hs, neg, {{{fm.v_var(i), 1.0}}, 0.0});
    track(fm.stats.rows_nonneg, before);
    // B_i <= M on R_i:  u_i'x <= M - v_i
    before = static_cast<long>(m.rows.size());
    dualize_robust(m, hs, pos, {{{fm.v_var(i), -1.0}}, M});
    track(fm.stats.rows_upper, before);
  }

  for (int i : idx.initial) {
    auto cap = geometry::intersect_boxes(parts.regions[i], X0);
    if (!cap) throw std::logic_error("build_fsbp: initial region without intersection");
    std::vector<LinExpr> pos(n);
    for (int k = 0; k < n; ++k) pos[k].terms = {{fm.u_var(i, k), 1.0}};
    long before = static_cast<long>(m.rows.size());
    dualize_robust(m, geometry::to_halfspaces(*cap), pos,
                   {{{0, 1.0}, {fm.v_var(i), -1.0}}, 0.0});
    track(fm.stats.rows_initial, before);
  }

  for (const auto& tr : triples) {
    const auto& map = maps[tr.i];
    auto hs = geometry::to_halfspaces(tr.preimage);
    Eigen::VectorXd eta = samples.row(tr.k);
    long before = static_cast<long>(m.rows.size());
    if (tr.j == partition::kExterior) {
      // 1 + delta <= B_i(x) + c on the escaping preimage:
      //   -u_i'x <= v_i + c - 1 - delta
      std::vector<LinExpr> neg(n);
      for (int k = 0; k < n; ++k) neg[k].terms = {{fm.u_var(tr.i, k), -1.0}};
      dualize_robust(m, hs, neg,
                     {{{fm.v_var(tr.i), 1.0}, {1, 1.0}}, -1.0 - delta});
    } else {
      for (int corner = 0; corner < 2; ++corner) {
        const Eigen::MatrixXd& A = corner ? map.A_hi : map.A_lo;
        const Eigen::VectorXd& b = corner ? map.b_hi : map.b_lo;
        // u_j'(A x + b + eta) + v_j + delta <= u_i'x + v_i + c
        std::vector<LinExpr> coef(n);
        for (int k = 0; k < n; ++k) {
          for (int col = 0; col < n; ++col) {
            double a = A(col, k);
            if (a != 0.0) coef[k].terms.push_back({fm.u_var(tr.j, col), a});
          }
          coef[k].terms.push_back({fm.u_var(tr.i, k), -1.0});
        }
        LinExpr rhs;
        rhs.terms.push_back({fm.v_var(tr.i), 1.0});
        rhs.terms.push_back({1, 1.0});  // c
        rhs.terms.push_back({fm.v_var(tr.j), -1.0});
        for (int col = 0; col < n; ++col) {
          double q = b[col] + eta[col];
          if (q != 0.0) rhs.terms.push_back({fm.u_var(tr.j, col), -q});
        }
        rhs.constant = -delta;
        dualize_robust(m, hs, coef, rhs);
      }
    }
    track(fm.stats.rows_onestep, before);
  }

  m.set_objective({{0, 1.0}, {1, static_cast<double>(T)}});
  fm.stats.n_rows = static_cast<long>(m.rows.size());
  fm.stats.n_vars = static_cast<long>(m.vars.size());
  fm.stats.n_triples = static_cast<long>(triples.size());
  return fm;
}

struct BarrierPWA {
  std::vector<Eigen::VectorXd> u;
  std::vector<double> v;
  double M = 1.0;
  partition::Partition parts;

  double piece(int i, const Eigen::VectorXd& x) const { return u[i].dot(x) + v[i]; }

  // owner-region evaluation; the exterior piece is the constant 1
  double value(const Eigen::VectorXd& x) const {
    int i = parts.locate(x);
    if (i == partition::kExterior) return 1.0;
    return piece(i, x);
  }

  // strictest evaluation: max over closed containing regions (and exterior)
  double value_max(const Eigen::VectorXd& x) const {
    double best = -std::numeric_limits<double>::infinity();
    bool inside = false;
    for (int i = 0; i < parts.size(); ++i) {
      if (parts.regions[i].contains(x)) {
        best = std::max(best, piece(i, x));
        inside = true;
      }
    }
    if (!inside) return 1.0;
    return best;
  }
};

inline BarrierPWA extract_barrier(const lp::Solution& sol, const FsbpModel& fm,
                                  const partition::Partition& parts, double M) {
  if (sol.status != lp::Status::Optimal)
    throw std::runtime_error("extract_barrier: solver status is not optimal");
  BarrierPWA b;
  b.M = M;
  b.parts = parts;
  const int n = fm.n;
  for (int i = 0; i < parts.size(); ++i) {
    Eigen::VectorXd ui(n);
    for (int k = 0; k < n; ++k) ui[k] = sol.x[fm.u_var(i, k)];
    b.u.push_back(ui);
    b.v.push_back(sol.x[fm.v_var(i)]);
  }
  // vertex re-check of the region-wise robust constraints
  for (int i = 0; i < parts.size(); ++i) {
    const Box& r = parts.regions[i];
    for (long mask = 0; mask < r.corner_count(); ++mask) {
      double val = b.piece(i, r.corner(mask));
      if (val < -1e-6 || val > M + 1e-6)
        throw std::runtime_error("extract_barrier: vertex re-check failed on region " +
                                 std::to_string(i));
    }
  }
  return b;
}

// One-step vertex re-check of an extracted barrier against the triples.
inline void recheck_onestep(const BarrierPWA& b, const std::vector<UncertainAffineMap>& maps,
                            const std::vector<TransitionTriple>& triples,
                            const scenario::NoiseDataset& samples, double delta, double gamma,
                            double c, const partition::IndexSets& idx, const Box& X0,
                            double tol = 1e-6) {
  for (int i : idx.initial) {
    auto cap = geometry::intersect_boxes(b.parts.regions[i], X0);
    for (long mask = 0; mask < cap->corner_count(); ++mask)
      if (b.piece(i, cap->corner(mask)) > gamma + tol)
        throw std::runtime_error("recheck: initial bound violated on region " +
                                 std::to_string(i));
  }
  for (const auto& tr : triples) {
    Eigen::VectorXd eta = samples.row(tr.k);
    const auto& map = maps[tr.i];
    for (long mask = 0; mask < tr.preimage.corner_count(); ++mask) {
      Eigen::VectorXd x = tr.preimage.corner(mask);
      for (int corner = 0; corner < 2; ++corner) {
        const Eigen::MatrixXd& A = corner ? map.A_hi : map.A_lo;
        const Eigen::VectorXd& bb = corner ? map.b_hi : map.b_lo;
        double dest = (tr.j == partition::kExterior)
                          ? 1.0
                          : b.u[tr.j].dot(A * x + bb + eta) + b.v[tr.j];
        if (dest + delta > b.piece(tr.i, x) + c + tol)
          throw std::runtime_error("recheck: one-step constraint violated");
      }
    }
  }
}

struct Certificate {
  double gamma = 0.0, c = 0.0;
  int T = 0;
  double zeta_raw = 0.0, zeta_clamped = 0.0;
  double beta = 1.0, epsilon = 0.0, delta = 0.0, M = 1.0;
  long N = 0, ell = 0, d = 0;
  int dim = 0;
  long hull_size = 0;
  BuildStats stats;
  lp::Status lp_status = lp::Status::NumericalFailure;
  long lp_iterations = 0;
  std::string lp_path;
  double t_relax = 0.0, t_triples = 0.0, t_build = 0.0, t_solve = 0.0, t_total = 0.0;
  std::string fingerprint;

  bool vacuous() const { return !(zeta_raw > 0.0); }
};

struct CertifyInputs {
  std::function<UncertainAffineMap(const Box&)> relax;
  Box safe_set;
  Box initial_set;
  std::vector<int> grid;
  int T = 10;
  double epsilon = 0.005;
  double M = 1.0;
  std::optional<double> beta_target;
  std::optional<long> sample_count;
  int bisection_depth = 10;
  int workers = 1;
  bool prune = true;
  std::string fingerprint_payload;
};

struct CertifyResult {
  Certificate cert;
  BarrierPWA barrier;
  partition::Partition parts;
  std::vector<UncertainAffineMap> maps;
  std::vector<TransitionTriple> triples;
  scenario::NoiseDataset used;  // pruned dataset backing the constraints
};

inline CertifyResult certify(const CertifyInputs& in, const scenario::NoiseDataset& D) {
  auto clock = []() { return std::chrono::steady_clock::now(); };
  auto secs = [](auto a, auto b) { return std::chrono::duration<double>(b - a).count(); };
  auto t0 = clock();

  auto parts = partition::grid_partition(in.safe_set, in.grid);
  auto idx = partition::classify_indices(parts, in.initial_set, in.safe_set);
  const int n = parts.dim();
  const long d = scenario::barrier_dimension(parts.size(), n);

  long n_used = D.rows();
  if (in.beta_target) {
    long need = scenario::required_samples(in.epsilon, *in.beta_target, d);
    if (D.rows() < need)
      throw std::runtime_error("certify: beta target needs " + std::to_string(need) +
                               " samples, dataset has " + std::to_string(D.rows()));
    n_used = need;
  } else if (in.sample_count) {
    if (*in.sample_count < 1 || *in.sample_count > D.rows())
      throw std::runtime_error("certify: sample count out of range");
    n_used = *in.sample_count;
  }
  scenario::NoiseDataset Dused;
  Dused.samples = D.samples.topRows(n_used);
  Dused.source = D.source;
  Dused.guarantee_n = n_used;

  auto params = scenario::ScenarioParams::make(in.epsilon, in.M, parts.size(), n, n_used);

  auto t_prune0 = clock();
  scenario::NoiseDataset pruned = in.prune ? scenario::prune_to_hull(Dused) : Dused;
  auto t_relax0 = clock();

  std::vector<UncertainAffineMap> maps(parts.size());
  util::parallel_for(parts.size(), in.workers, [&](long i) { maps[i] = in.relax(parts.regions[i]); });
  auto t_relax1 = clock();

  geometry::RTree rtree(parts.regions);
  auto triples = find_transition_triples(parts, idx, maps, pruned, rtree, in.bisection_depth,
                                         in.workers);
  auto t_triples1 = clock();

  auto fm = build_fsbp(parts, idx, maps, triples, pruned, params, in.T, in.initial_set);
  auto t_build1 = clock();

  auto sol = lp::solve(fm.model);
  auto t_solve1 = clock();
  if (sol.status != lp::Status::Optimal)
    throw std::runtime_error(std::string("certify: solver returned ") +
                             lp::status_name(sol.status));

  Certificate cert;
  cert.gamma = sol.x[0];
  cert.c = sol.x[1];
  cert.T = in.T;
  cert.zeta_raw = 1.0 - (cert.gamma + cert.c * in.T);
  cert.zeta_clamped = std::max(0.0, cert.zeta_raw);
  cert.epsilon = params.epsilon;
  cert.delta = params.delta;
  cert.M = params.M;
  cert.N = params.N;
  cert.beta = params.beta;
  cert.ell = parts.size();
  cert.d = d;
  cert.dim = n;
  cert.hull_size = pruned.rows();
  cert.stats = fm.stats;
  cert.lp_status = sol.status;
  cert.lp_iterations = sol.iterations;
  cert.lp_path = sol.path;

  auto barrier = extract_barrier(sol, fm, parts, params.M);
  recheck_onestep(barrier, maps, triples, pruned, params.delta, cert.gamma, cert.c, idx,
                  in.initial_set);

  util::Fnv1a h;
  h.feed(in.fingerprint_payload);
  for (int g : in.grid) h.feed(static_cast<long>(g));
  h.feed(in.epsilon);
  h.feed(in.M);
  h.feed(static_cast<long>(in.T));
  h.feed(static_cast<long>(in.bisection_depth));
  h.feed(static_cast<long>(n_used));
  h.feed(Dused.samples.data(), sizeof(double) * Dused.samples.size());
  cert.fingerprint = h.hex();

  auto t_end = clock();
  cert.t_relax = secs(t_relax0, t_relax1);
  cert.t_triples = secs(t_relax1, t_triples1);
  cert.t_build = secs(t_triples1, t_build1);
  cert.t_solve = secs(t_build1, t_solve1);
  cert.t_total = secs(t0, t_end);
  (void)t_prune0;

  CertifyResult out;
  out.cert = std::move(cert);
  out.barrier = std::move(barrier);
  out.parts = std::move(parts);
  out.maps = std::move(maps);
  out.triples = std::move(triples);
  out.used = std::move(pruned);
  return out;
}

}  // namespace sbcert::synthesis
