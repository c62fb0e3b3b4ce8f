#pragma once

// Linear programming data model and a built-in revised simplex solver with
// bounded variables. Models may carry "box dual block" annotations marking
// groups of dual multipliers that encode a robust constraint over a box;
// the solver can eliminate those blocks exactly (vertex reformulation) and,
// when the reduced problem has far more rows than variables, solve its dual
// instead. Solutions are mapped back so callers always see the full model.

#include <Eigen/Dense>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace sbcert::lp {

constexpr double kInf = std::numeric_limits<double>::infinity();

enum class Sense { LessEqual, Equal };

enum class Status { Optimal, Infeasible, Unbounded, IterationLimit, NumericalFailure };

inline const char* status_name(Status s) {
  switch (s) {
    case Status::Optimal: return "optimal";
    case Status::Infeasible: return "infeasible";
    case Status::Unbounded: return "unbounded";
    case Status::IterationLimit: return "iteration-limit";
    case Status::NumericalFailure: return "numerical-failure";
  }
  return "?";
}

using Term = std::pair<int, double>;
using LinComb = std::vector<Term>;

struct Variable {
  std::string name;
  double lb = 0.0;
  double ub = kInf;
};

struct Constraint {
  LinComb coeffs;
  Sense sense = Sense::LessEqual;
  double rhs = 0.0;
};

// Annotation for a dualized robust constraint
//   (Mz + m0)^T x <= r^T z + r0   for all x in [lo, hi],
// where the model already contains 2n lambda variables, n equality rows and
// one inequality row realizing the dual form. Eliminating the block is an
// exact reformulation: the 2^n box-vertex rows over z.
struct BoxDualBlock {
  Eigen::VectorXd lo, hi;
  std::vector<LinComb> xcoef;  // n entries, z-coefficients of (Mz+m0)_k
  Eigen::VectorXd xconst;      // m0
  LinComb rhs;                 // r
  double rhs_const = 0.0;      // r0
  std::vector<int> lambda_vars;  // 2n: (+e_k, -e_k) pairs per axis
  std::vector<int> eq_rows;      // n
  int ineq_row = -1;
};

struct Model {
  std::vector<Variable> vars;
  std::vector<Constraint> rows;
  LinComb objective;  // minimize
  std::vector<BoxDualBlock> box_blocks;

  int add_var(std::string name, double lb, double ub) {
    if (std::isnan(lb) || std::isnan(ub) || lb > ub)
      throw std::invalid_argument("lp: bad bounds for variable " + name);
    vars.push_back({std::move(name), lb, ub});
    return static_cast<int>(vars.size()) - 1;
  }

  int add_row(LinComb coeffs, Sense sense, double rhs) {
    for (const auto& [j, a] : coeffs) {
      if (j < 0 || j >= static_cast<int>(vars.size()))
        throw std::invalid_argument("lp: row references unknown variable");
      if (!std::isfinite(a)) throw std::invalid_argument("lp: non-finite coefficient");
    }
    rows.push_back({std::move(coeffs), sense, rhs});
    return static_cast<int>(rows.size()) - 1;
  }

  void set_objective(LinComb coeffs) { objective = std::move(coeffs); }
};

struct Solution {
  Status status = Status::NumericalFailure;
  double objective = 0.0;
  std::vector<double> x;          // all model variables
  std::vector<double> row_duals;  // per row; empty if the path does not expose them
  long iterations = 0;
  double wall_seconds = 0.0;
  std::string path;  // "primal", "eliminated+primal", "eliminated+dual"
};

struct SolveOptions {
  long max_iterations = 0;  // 0: automatic
  double feas_tol = 1e-7;
  double opt_tol = 1e-7;
  int refactor_interval = 150;
  bool force_direct = false;  // ignore box_blocks (solve the monolith)
};

namespace detail {

// ---------------------------------------------------------------------------
// Core: bounded-variable revised simplex on  min c'x, Ax {<=,=} b, l<=x<=u.
// Slack column n+i is appended per row. Dense LU basis with product-form
// updates; Dantzig pricing with a Bland fallback after stalling.
// ---------------------------------------------------------------------------

class Simplex {
 public:
  Simplex(const Model& m, const SolveOptions& opt) : opt_(opt) {
    n_ = static_cast<int>(m.vars.size());
    mrows_ = static_cast<int>(m.rows.size());
    total_ = n_ + mrows_;
    cols_.resize(n_);
    lb_.assign(total_, 0.0);
    ub_.assign(total_, kInf);
    cost_.assign(total_, 0.0);
    for (int j = 0; j < n_; ++j) {
      lb_[j] = m.vars[j].lb;
      ub_[j] = m.vars[j].ub;
    }
    b_.resize(mrows_);
    for (int i = 0; i < mrows_; ++i) {
      const auto& r = m.rows[i];
      b_[i] = r.rhs;
      for (const auto& [j, a] : r.coeffs)
        if (a != 0.0) cols_[j].push_back({i, a});
      int s = n_ + i;
      lb_[s] = 0.0;
      ub_[s] = (r.sense == Sense::Equal) ? 0.0 : kInf;
    }
    for (const auto& [j, a] : m.objective) cost_[j] += a;
    // merge duplicate entries within a column
    for (auto& col : cols_) {
      std::sort(col.begin(), col.end());
      std::vector<Term> merged;
      for (const auto& t : col) {
        if (!merged.empty() && merged.back().first == t.first)
          merged.back().second += t.second;
        else
          merged.push_back(t);
      }
      col = std::move(merged);
    }
    equilibrate();
    max_iter_ = opt.max_iterations > 0 ? opt.max_iterations
                                       : std::max<long>(400000, 60L * mrows_);
  }

  Status run() {
    init_basis();
    // alternate feasibility repair and optimization; drift snaps during
    // long degenerate phases are healed by a warm phase-1 restart
    for (int attempt = 0; attempt < 5; ++attempt) {
      Status ph1 = phase(true);
      if (ph1 != Status::Optimal) return ph1;
      refactorize();
      compute_xb();
      if (infeasibility() > feas_tol_scaled()) {
        Status again = phase(true);
        if (again != Status::Optimal) return again;
        refactorize();
        compute_xb();
        if (infeasibility() > feas_tol_scaled()) return Status::Infeasible;
      }
      Status ph2 = phase(false);
      if (ph2 != Status::Optimal) return ph2;
      refactorize();
      compute_xb();
      if (infeasibility() <= 10 * feas_tol_scaled()) return Status::Optimal;
    }
    return Status::NumericalFailure;
  }

  // scale-invariant: c'_j x'_j = c_j x_j
  double objective_value() const {
    double v = 0.0;
    for (int j = 0; j < n_; ++j) v += cost_[j] * value(j);
    return v;
  }

  std::vector<double> primal_values() const {
    std::vector<double> x(n_);
    for (int j = 0; j < n_; ++j) x[j] = value(j) * col_scale_[j];
    return x;
  }

  // y = B^{-T} c_B, the classic row duals (in original row units).
  std::vector<double> row_duals() const {
    Eigen::VectorXd cb(mrows_);
    for (int p = 0; p < mrows_; ++p) cb[p] = cost_basic(basis_[p]);
    Eigen::VectorXd y = btran(cb);
    std::vector<double> out(mrows_);
    for (int i = 0; i < mrows_; ++i) out[i] = y[i] * row_scale_[i];
    return out;
  }

  long iterations() const { return iters_; }

 private:
  enum class VStat : std::uint8_t { Basic, AtLower, AtUpper, Free };

  const SolveOptions& opt_;
  int n_ = 0, mrows_ = 0, total_ = 0;
  std::vector<std::vector<Term>> cols_;
  std::vector<double> lb_, ub_, cost_, b_;
  std::vector<double> row_scale_, col_scale_;
  Eigen::VectorXd xb_;
  std::vector<int> basis_;
  std::vector<int> pos_in_basis_;  // -1 if nonbasic
  std::vector<VStat> stat_;
  Eigen::PartialPivLU<Eigen::MatrixXd> lu_;
  std::vector<std::pair<int, Eigen::VectorXd>> etas_;
  long iters_ = 0;
  long max_iter_ = 0;
  bool bland_ = false;
  int scan_start_ = 0;
  std::vector<double> cost_orig_;
  struct RatioCand {
    int pos;
    double ratio, stretched, pivot;
    int to_upper;
  };
  std::vector<RatioCand> cands_;

  double cost_basic(int j) const { return cost_[j]; }

  // Geometric-mean row/column scaling with power-of-two factors. Slack
  // columns keep unit entries (their implicit column scale is 1/r_i), so
  // only structural data, bounds, costs and rhs are rewritten.
  void equilibrate() {
    row_scale_.assign(mrows_, 1.0);
    col_scale_.assign(n_, 1.0);
    auto pow2_near = [](double g) {
      if (!(g > 0.0) || !std::isfinite(g)) return 1.0;
      return std::exp2(std::round(-std::log2(g)));
    };
    for (int pass = 0; pass < 3; ++pass) {
      for (int j = 0; j < n_; ++j) {
        if (cols_[j].empty()) continue;
        double acc = 0.0;
        for (const auto& [i, a] : cols_[j])
          acc += std::log2(std::abs(a) * row_scale_[i] * col_scale_[j]);
        col_scale_[j] *= pow2_near(std::exp2(acc / cols_[j].size()));
      }
      std::vector<double> acc(mrows_, 0.0);
      std::vector<int> cnt(mrows_, 0);
      for (int j = 0; j < n_; ++j)
        for (const auto& [i, a] : cols_[j]) {
          acc[i] += std::log2(std::abs(a) * row_scale_[i] * col_scale_[j]);
          ++cnt[i];
        }
      for (int i = 0; i < mrows_; ++i)
        if (cnt[i]) row_scale_[i] *= pow2_near(std::exp2(acc[i] / cnt[i]));
    }
    for (int j = 0; j < n_; ++j) {
      for (auto& [i, a] : cols_[j]) a *= row_scale_[i] * col_scale_[j];
      if (col_scale_[j] != 1.0) {
        if (std::isfinite(lb_[j])) lb_[j] /= col_scale_[j];
        if (std::isfinite(ub_[j])) ub_[j] /= col_scale_[j];
        cost_[j] *= col_scale_[j];
      }
    }
    for (int i = 0; i < mrows_; ++i) b_[i] *= row_scale_[i];
  }

  double feas_tol_scaled() const {
    double s = 1.0;
    for (double v : b_) s = std::max(s, std::abs(v));
    return opt_.feas_tol * s;
  }

  double value(int j) const {
    if (stat_[j] == VStat::Basic) return xb_[pos_in_basis_[j]];
    if (stat_[j] == VStat::AtLower) return lb_[j];
    if (stat_[j] == VStat::AtUpper) return ub_[j];
    return 0.0;
  }

  void init_basis() {
    basis_.resize(mrows_);
    pos_in_basis_.assign(total_, -1);
    stat_.assign(total_, VStat::AtLower);
    for (int j = 0; j < n_; ++j) {
      if (std::isfinite(lb_[j]))
        stat_[j] = VStat::AtLower;
      else if (std::isfinite(ub_[j]))
        stat_[j] = VStat::AtUpper;
      else
        stat_[j] = VStat::Free;
    }
    for (int i = 0; i < mrows_; ++i) {
      int s = n_ + i;
      basis_[i] = s;
      stat_[s] = VStat::Basic;
      pos_in_basis_[s] = i;
    }
    refactorize();
    compute_xb();
  }

  void refactorize() {
    Eigen::MatrixXd B = Eigen::MatrixXd::Zero(mrows_, mrows_);
    for (int p = 0; p < mrows_; ++p) {
      int j = basis_[p];
      if (j >= n_) {
        B(j - n_, p) = 1.0;
      } else {
        for (const auto& [i, a] : cols_[j]) B(i, p) = a;
      }
    }
    lu_.compute(B);
    etas_.clear();
  }

  void compute_xb() {
    Eigen::VectorXd rhs(mrows_);
    for (int i = 0; i < mrows_; ++i) rhs[i] = b_[i];
    for (int j = 0; j < total_; ++j) {
      if (stat_[j] == VStat::Basic) continue;
      double v = value(j);
      if (v == 0.0) continue;
      if (j >= n_) {
        rhs[j - n_] -= v;
      } else {
        for (const auto& [i, a] : cols_[j]) rhs[i] -= a * v;
      }
    }
    xb_ = ftran(rhs);
  }

  Eigen::VectorXd column(int j) const {
    Eigen::VectorXd a = Eigen::VectorXd::Zero(mrows_);
    if (j >= n_) {
      a[j - n_] = 1.0;
    } else {
      for (const auto& [i, v] : cols_[j]) a[i] = v;
    }
    return a;
  }

  Eigen::VectorXd ftran(Eigen::VectorXd v) const {
    Eigen::VectorXd x = lu_.solve(v);
    for (const auto& [r, w] : etas_) {
      double xr = x[r] / w[r];
      x -= xr * w;
      x[r] = xr;
    }
    return x;
  }

  Eigen::VectorXd btran(Eigen::VectorXd v) const {
    for (auto it = etas_.rbegin(); it != etas_.rend(); ++it) {
      const auto& [r, w] = *it;
      v[r] = (v[r] - (w.dot(v) - w[r] * v[r])) / w[r];
    }
    // solve B^T y = v with B = P^{-1} L U
    const auto& LU = lu_.matrixLU();
    Eigen::VectorXd y = v;
    LU.template triangularView<Eigen::Upper>().transpose().solveInPlace(y);
    LU.template triangularView<Eigen::UnitLower>().transpose().solveInPlace(y);
    return lu_.permutationP().transpose() * y;
  }

  double col_dot(const Eigen::VectorXd& y, int j) const {
    if (j >= n_) return y[j - n_];
    double s = 0.0;
    for (const auto& [i, a] : cols_[j]) s += y[i] * a;
    return s;
  }

  double infeasibility() const {
    double f = 0.0;
    for (int p = 0; p < mrows_; ++p) {
      int j = basis_[p];
      if (xb_[p] < lb_[j]) f += lb_[j] - xb_[p];
      if (xb_[p] > ub_[j]) f += xb_[p] - ub_[j];
    }
    return f;
  }

  // phase-1 gradient on basics: -1 below lower, +1 above upper.
  Eigen::VectorXd phase1_sigma() const {
    Eigen::VectorXd s = Eigen::VectorXd::Zero(mrows_);
    double tol = feas_tol_scaled();
    for (int p = 0; p < mrows_; ++p) {
      int j = basis_[p];
      if (xb_[p] < lb_[j] - tol)
        s[p] = -1.0;
      else if (xb_[p] > ub_[j] + tol)
        s[p] = 1.0;
    }
    return s;
  }

  // entering candidate within a window scan; Bland mode takes the least
  // eligible index over a full scan
  struct Pricing {
    int enter = -1;
    int dir = 0;
    double reduced = 0.0;
  };

  Pricing price(const Eigen::VectorXd& y, bool phase1) {
    Pricing out;
    const double thresh = phase1 ? 1e-9 : opt_.opt_tol;
    auto examine = [&](int j, double& best) {
      if (stat_[j] == VStat::Basic) return false;
      if (ub_[j] - lb_[j] <= 0.0) return false;  // fixed
      double d = (phase1 ? 0.0 : cost_[j]) - col_dot(y, j);
      int cand_dir = 0;
      double score = 0.0;
      if ((stat_[j] == VStat::AtLower || stat_[j] == VStat::Free) && d < -thresh) {
        cand_dir = +1;
        score = d;
      } else if ((stat_[j] == VStat::AtUpper || stat_[j] == VStat::Free) && -d < -thresh) {
        cand_dir = -1;
        score = -d;
      }
      if (cand_dir == 0) return false;
      if (score < best) {
        best = score;
        out.enter = j;
        out.dir = cand_dir;
        out.reduced = d;
      }
      return true;
    };

    if (bland_) {
      double best = 0.0;
      for (int j = 0; j < total_; ++j)
        if (examine(j, best)) return out;  // least index
      return out;
    }
    const int window = std::max(1024, total_ / 64);
    double best = 0.0;
    int scanned = 0, j = scan_start_ % total_;
    bool found = false;
    while (scanned < total_) {
      int stop = std::min(scanned + window, static_cast<int>(total_));
      for (; scanned < stop; ++scanned, j = (j + 1) % total_)
        found |= examine(j, best);
      if (found) break;
    }
    return out;
  }

  // deterministic positive cost noise in [scale, 2 scale) per column
  void perturb_costs() {
    cost_orig_ = cost_;
    double cmax = 1.0;
    for (double c : cost_) cmax = std::max(cmax, std::abs(c));
    const double scale = 1e-9 * cmax;
    for (int j = 0; j < total_; ++j) {
      std::uint64_t h = (static_cast<std::uint64_t>(j) + 1) * 0x9e3779b97f4a7c15ULL;
      h ^= h >> 31;
      h *= 0xbf58476d1ce4e5b9ULL;
      h ^= h >> 29;
      double u = static_cast<double>(h >> 11) * 0x1.0p-53;
      cost_[j] += scale * (1.0 + u);
    }
  }

  void restore_costs() {
    cost_ = cost_orig_;
    cost_orig_.clear();
  }

  Status phase(bool phase1) {
    double tol = feas_tol_scaled();
    double last_metric = kInf;
    long no_progress = 0;
    const long stall_limit = 500 + 2L * mrows_;
    bland_ = false;
    bool perturbed = false;
    double obj_cache = phase1 ? 0.0 : objective_value();

    while (true) {
      if (iters_ >= max_iter_) {
        if (perturbed) restore_costs();
        return Status::IterationLimit;
      }
      if (static_cast<int>(etas_.size()) >= opt_.refactor_interval) {
        refactorize();
        compute_xb();
        if (!phase1) obj_cache = objective_value();
      }

      Eigen::VectorXd y;
      if (phase1) {
        Eigen::VectorXd sigma = phase1_sigma();
        if (sigma.isZero(0.0)) return Status::Optimal;  // feasible
        y = btran(sigma);
      } else {
        Eigen::VectorXd cb(mrows_);
        for (int p = 0; p < mrows_; ++p) cb[p] = cost_basic(basis_[p]);
        y = btran(cb);
      }

      Pricing pr = price(y, phase1);
      int enter = pr.enter, dir = pr.dir;
      if (enter < 0) {
        if (perturbed) {
          // optimal for the perturbed costs: restore and clean up
          restore_costs();
          perturbed = false;
          bland_ = false;
          obj_cache = objective_value();
          continue;
        }
        return Status::Optimal;
      }

      Eigen::VectorXd w = ftran(column(enter));

      // two-pass Harris ratio test: pass 1 finds the tightest ratio with a
      // small bound stretch, pass 2 picks the largest pivot within it so
      // near-zero pivots never enter the basis
      const double piv_small = 1e-11;
      const double stretch = tol;
      cands_.clear();
      for (int p = 0; p < mrows_; ++p) {
        double t = dir * w[p];  // rate of decrease of xb_[p]
        if (std::abs(t) <= piv_small) continue;
        int j = basis_[p];
        double target = kInf;
        int to_upper = 0;
        if (t > 0) {  // xb decreasing
          if (xb_[p] > ub_[j] + stretch) {
            target = ub_[j];  // recovery toward the violated bound
            to_upper = 1;
          } else if (std::isfinite(lb_[j]) && (!phase1 || xb_[p] >= lb_[j] - stretch)) {
            target = lb_[j];
          }
          // in phase 1 a basic already below lower keeps worsening; its rate
          // is part of the sigma slope and it never blocks
          if (target < kInf) {
            double r = (xb_[p] - target) / t;
            cands_.push_back({p, std::max(0.0, r), std::max(0.0, r + stretch / t), w[p],
                              to_upper});
          }
        } else {
          double ti = -t;
          if (xb_[p] < lb_[j] - stretch) {
            target = lb_[j];
          } else if (std::isfinite(ub_[j]) && (!phase1 || xb_[p] <= ub_[j] + stretch)) {
            target = ub_[j];
            to_upper = 1;
          }
          if (target < kInf) {
            double r = (target - xb_[p]) / ti;
            cands_.push_back({p, std::max(0.0, r), std::max(0.0, r + stretch / ti), w[p],
                              to_upper});
          }
        }
      }
      double own = ub_[enter] - lb_[enter];
      double theta = own;
      for (const auto& c : cands_) theta = std::min(theta, c.stretched);

      int leave_pos = -1;
      double leave_piv = 0.0;
      int leave_to_upper = 0;
      double step = own;
      if (!cands_.empty() && theta < kInf) {
        for (const auto& c : cands_) {
          if (c.ratio > theta + 1e-15) continue;
          bool take = leave_pos < 0 || std::abs(c.pivot) > std::abs(leave_piv) + 1e-15 ||
                      (std::abs(std::abs(c.pivot) - std::abs(leave_piv)) <= 1e-15 &&
                       basis_[c.pos] < basis_[leave_pos]);
          if (take) {
            leave_pos = c.pos;
            leave_piv = c.pivot;
            leave_to_upper = c.to_upper;
            step = c.ratio;
          }
        }
        if (leave_pos >= 0 && step > own) {
          leave_pos = -1;  // the entering variable's own range binds first
          step = own;
        }
      }

      if (!std::isfinite(step)) {
        // re-verify against a fresh factorization before giving up; stale
        // eta updates can fake an unblocked direction
        if (!etas_.empty()) {
          refactorize();
          compute_xb();
          continue;
        }
        if (phase1) return Status::NumericalFailure;
        return Status::Unbounded;
      }

      ++iters_;
      scan_start_ = enter + 1;
      if (leave_pos < 0) {
        // bound flip of the entering variable
        xb_ -= (dir * step) * w;
        stat_[enter] = (dir > 0) ? VStat::AtUpper : VStat::AtLower;
      } else {
        double enter_val = value(enter) + dir * step;
        xb_ -= (dir * step) * w;
        int leaving = basis_[leave_pos];
        stat_[leaving] = leave_to_upper ? VStat::AtUpper : VStat::AtLower;
        if (!std::isfinite(leave_to_upper ? ub_[leaving] : lb_[leaving]))
          stat_[leaving] = VStat::Free;  // free variable leaving (rare)
        pos_in_basis_[leaving] = -1;
        basis_[leave_pos] = enter;
        stat_[enter] = VStat::Basic;
        pos_in_basis_[enter] = leave_pos;
        xb_[leave_pos] = enter_val;
        etas_.push_back({leave_pos, w});
      }

      if (!phase1) obj_cache += pr.reduced * (dir * step);
      double metric = phase1 ? infeasibility() : obj_cache;
      if (metric < last_metric - 1e-12) {
        last_metric = metric;
        no_progress = 0;
        bland_ = false;
      } else if (++no_progress > stall_limit) {
        if (!phase1 && !perturbed && cost_orig_.empty()) {
          perturb_costs();
          perturbed = true;
          no_progress = 0;
          obj_cache = objective_value();
          last_metric = kInf;
        } else {
          bland_ = true;
        }
      }
    }
  }
};

struct DirectResult {
  Status status;
  double objective = 0.0;
  std::vector<double> x;
  std::vector<double> duals;
  long iterations = 0;
};

inline DirectResult solve_direct(const Model& m, const SolveOptions& opt) {
  Simplex s(m, opt);
  DirectResult r;
  r.status = s.run();
  r.iterations = s.iterations();
  if (r.status == Status::Optimal) {
    r.objective = s.objective_value();
    r.x = s.primal_values();
    r.duals = s.row_duals();
  }
  return r;
}

// Reduced (block-eliminated) model plus bookkeeping to undo the mapping.
struct Reduction {
  Model reduced;
  std::vector<int> var_map;  // original var id -> reduced id (-1 if eliminated)
};

inline Reduction eliminate_blocks(const Model& m) {
  std::vector<char> var_drop(m.vars.size(), 0), row_drop(m.rows.size(), 0);
  for (const auto& blk : m.box_blocks) {
    for (int v : blk.lambda_vars) var_drop[v] = 1;
    for (int r : blk.eq_rows) row_drop[r] = 1;
    row_drop[blk.ineq_row] = 1;
  }
  Reduction red;
  red.var_map.assign(m.vars.size(), -1);
  for (size_t j = 0; j < m.vars.size(); ++j) {
    if (!var_drop[j]) red.var_map[j] = red.reduced.add_var(m.vars[j].name, m.vars[j].lb, m.vars[j].ub);
  }
  for (size_t i = 0; i < m.rows.size(); ++i) {
    if (row_drop[i]) continue;
    LinComb c;
    for (const auto& [j, a] : m.rows[i].coeffs) {
      if (red.var_map[j] < 0)
        throw std::logic_error("lp: eliminated variable used outside its block");
      c.push_back({red.var_map[j], a});
    }
    red.reduced.add_row(std::move(c), m.rows[i].sense, m.rows[i].rhs);
  }
  // vertex rows: for every corner s of the box,
  //   sum_k s_k (M z + m0)_k - r^T z <= r0
  for (const auto& blk : m.box_blocks) {
    int n = static_cast<int>(blk.lo.size());
    if (n > 20) throw std::logic_error("lp: box block dimension too large to expand");
    for (long mask = 0; mask < (1L << n); ++mask) {
      std::vector<double> dense(red.reduced.vars.size(), 0.0);
      double rhs = blk.rhs_const;
      for (int k = 0; k < n; ++k) {
        double s = (mask >> k) & 1 ? blk.hi[k] : blk.lo[k];
        rhs -= s * blk.xconst[k];
        for (const auto& [j, a] : blk.xcoef[k]) dense[red.var_map[j]] += s * a;
      }
      for (const auto& [j, a] : blk.rhs) dense[red.var_map[j]] -= a;
      LinComb c;
      for (size_t j = 0; j < dense.size(); ++j)
        if (dense[j] != 0.0) c.push_back({static_cast<int>(j), dense[j]});
      red.reduced.add_row(std::move(c), Sense::LessEqual, rhs);
    }
  }
  for (const auto& [j, a] : m.objective) {
    if (red.var_map[j] < 0) throw std::logic_error("lp: objective uses eliminated variable");
    red.reduced.objective.push_back({red.var_map[j], a});
  }
  return red;
}

// Solve min c'z, Rz {<=,=} r, z in {free, >=0} via its dual
//   min r'y  s.t.  R^T y  = -c  (free z_j)
//                  R^T y >= -c  (z_j >= 0)
//   y_i >= 0 for <= rows, free for = rows,
// returning primal values from the dual row multipliers. Requires every
// variable bound pattern to be (0,inf) or (-inf,inf).
inline bool dual_shape_ok(const Model& m) {
  for (const auto& v : m.vars) {
    bool nonneg = v.lb == 0.0 && v.ub == kInf;
    bool free = v.lb == -kInf && v.ub == kInf;
    if (!nonneg && !free) return false;
  }
  return true;
}

inline DirectResult solve_via_dual(const Model& m, const SolveOptions& opt) {
  const int nz = static_cast<int>(m.vars.size());
  const int nr = static_cast<int>(m.rows.size());
  Model dual;
  dual.vars.reserve(nr);
  for (int i = 0; i < nr; ++i) {
    bool eq = m.rows[i].sense == Sense::Equal;
    dual.add_var("", eq ? -kInf : 0.0, kInf);
  }
  std::vector<double> cz(nz, 0.0);
  for (const auto& [j, a] : m.objective) cz[j] += a;
  // transpose columns
  std::vector<LinComb> rt(nz);
  for (int i = 0; i < nr; ++i)
    for (const auto& [j, a] : m.rows[i].coeffs) rt[j].push_back({i, a});
  std::vector<char> flipped(nz, 0);
  for (int j = 0; j < nz; ++j) {
    bool free = m.vars[j].lb == -kInf;
    if (free) {
      dual.add_row(rt[j], Sense::Equal, -cz[j]);
    } else {
      // R^T y >= -c  ->  -R^T y <= c
      LinComb neg = rt[j];
      for (auto& t : neg) t.second = -t.second;
      dual.add_row(std::move(neg), Sense::LessEqual, cz[j]);
      flipped[j] = 1;
    }
  }
  for (int i = 0; i < nr; ++i)
    if (m.rows[i].rhs != 0.0) dual.objective.push_back({i, m.rows[i].rhs});

  DirectResult dres = solve_direct(dual, opt);
  DirectResult out;
  out.iterations = dres.iterations;
  if (dres.status == Status::Unbounded) {
    out.status = Status::Infeasible;
    return out;
  }
  if (dres.status == Status::Infeasible) {
    // dual infeasibility cannot distinguish unbounded from infeasible primal
    out.status = Status::NumericalFailure;
    return out;
  }
  if (dres.status != Status::Optimal) {
    out.status = dres.status;  // caller may fall back
    return out;
  }
  out.status = Status::Optimal;
  out.objective = -dres.objective;
  out.x.resize(nz);
  for (int j = 0; j < nz; ++j) out.x[j] = flipped[j] ? -dres.duals[j] : dres.duals[j];
  // row duals of the original are the dual's variable values (sign per sense)
  out.duals.resize(nr);
  for (int i = 0; i < nr; ++i) out.duals[i] = dres.x[i];
  return out;
}

inline double eval(const LinComb& c, const std::vector<double>& x, double c0 = 0.0) {
  double s = c0;
  for (const auto& [j, a] : c) s += a * x[j];
  return s;
}

// Constraint generation for models with far more rows than variables: solve
// on a working subset, pull in the rows the candidate violates, repeat until
// the candidate is feasible for the full system (hence optimal for it).
inline DirectResult solve_sifted(const Model& full, const SolveOptions& opt) {
  const size_t m = full.rows.size();
  const size_t nv = full.vars.size();
  std::vector<char> in_work(m, 0);
  std::vector<size_t> work;
  auto add_row = [&](size_t i) {
    if (!in_work[i]) {
      in_work[i] = 1;
      work.push_back(i);
    }
  };
  // deterministic seed: a prefix (region-level rows come first in the FSBP
  // build order) plus an even stride over the rest
  size_t seed_count = std::min(m, std::max<size_t>(4 * nv, 4096));
  for (size_t i = 0; i < seed_count; ++i) add_row(i);
  size_t stride = std::max<size_t>(1, m / std::max<size_t>(1, seed_count));
  for (size_t i = seed_count; i < m; i += stride) add_row(i);

  double scale = 1.0;
  for (const auto& r : full.rows) scale = std::max(scale, std::abs(r.rhs));
  const double tol = opt.feas_tol * scale;
  const bool dual_ok = dual_shape_ok(full);

  DirectResult r;
  for (int round = 0; round < 60; ++round) {
    Model sub;
    sub.vars = full.vars;
    sub.objective = full.objective;
    sub.rows.reserve(work.size());
    for (size_t i : work) sub.rows.push_back(full.rows[i]);

    bool use_dual = dual_ok && sub.rows.size() > std::max<size_t>(3 * nv, 2000);
    r = use_dual ? solve_via_dual(sub, opt) : solve_direct(sub, opt);
    if (r.status == Status::Unbounded && work.size() < m) {
      // widen the working set and retry
      size_t before = work.size();
      size_t st = std::max<size_t>(1, m / std::max<size_t>(1, work.size()));
      for (size_t i = 0; i < m && work.size() < before + 4 * nv; i += st) add_row(i);
      if (work.size() == before) break;
      continue;
    }
    if (r.status != Status::Optimal) return r;

    // violation scan over all rows; batch the worst offenders in
    std::vector<std::pair<double, size_t>> viol;
    for (size_t i = 0; i < m; ++i) {
      if (in_work[i]) continue;
      const auto& row = full.rows[i];
      double v = eval(row.coeffs, r.x) - row.rhs;
      if (row.sense == Sense::Equal) v = std::abs(v);
      if (v > tol) viol.push_back({v, i});
    }
    if (viol.empty()) {
      r.duals.clear();  // duals refer to the working subset only
      return r;
    }
    size_t batch = std::max<size_t>(2 * nv, 2048);
    if (viol.size() > batch) {
      std::nth_element(viol.begin(), viol.begin() + batch, viol.end(),
                       [](const auto& a, const auto& b) {
                         return a.first > b.first || (a.first == b.first && a.second < b.second);
                       });
      viol.resize(batch);
    }
    std::sort(viol.begin(), viol.end(),
              [](const auto& a, const auto& b) { return a.second < b.second; });
    for (const auto& [v, i] : viol) add_row(i);
  }
  r.status = Status::IterationLimit;
  return r;
}

}  // namespace detail

// Feasibility check of a full assignment against a model (bounds and rows).
inline double max_violation(const Model& m, const std::vector<double>& x) {
  double v = 0.0;
  for (size_t j = 0; j < m.vars.size(); ++j) {
    v = std::max(v, m.vars[j].lb - x[j]);
    v = std::max(v, x[j] - m.vars[j].ub);
  }
  for (const auto& r : m.rows) {
    double a = detail::eval(r.coeffs, x);
    if (r.sense == Sense::Equal)
      v = std::max(v, std::abs(a - r.rhs));
    else
      v = std::max(v, a - r.rhs);
  }
  return v;
}

inline Solution solve(const Model& m, const SolveOptions& opt = {}) {
  auto t0 = std::chrono::steady_clock::now();
  Solution sol;
  auto finish = [&](Solution s) {
    s.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return s;
  };

  if (m.box_blocks.empty() || opt.force_direct) {
    auto r = detail::solve_direct(m, opt);
    sol.status = r.status;
    sol.objective = r.objective;
    sol.x = std::move(r.x);
    sol.row_duals = std::move(r.duals);
    sol.iterations = r.iterations;
    sol.path = "primal";
    return finish(sol);
  }

  detail::Reduction red = detail::eliminate_blocks(m);
  const size_t rn = red.reduced.vars.size();
  const size_t rm = red.reduced.rows.size();
  bool use_dual = rm > std::max<size_t>(3 * rn, 2000) && detail::dual_shape_ok(red.reduced);

  detail::DirectResult r;
  if (rm > std::max<size_t>(12 * rn, 40000)) {
    r = detail::solve_sifted(red.reduced, opt);
    sol.path = "eliminated+sifted";
  } else if (use_dual) {
    r = detail::solve_via_dual(red.reduced, opt);
    sol.path = "eliminated+dual";
    if (r.status != Status::Optimal && r.status != Status::Infeasible && rm <= 20000) {
      // a dual-side failure on a moderate model: retry directly
      r = detail::solve_direct(red.reduced, opt);
      sol.path = "eliminated+primal";
    }
  } else {
    r = detail::solve_direct(red.reduced, opt);
    sol.path = "eliminated+primal";
  }
  sol.status = r.status;
  sol.iterations = r.iterations;
  if (r.status != Status::Optimal) return finish(sol);

  sol.objective = r.objective;
  // lift back: z values, then lambda per block from the x-coefficient values
  sol.x.assign(m.vars.size(), 0.0);
  for (size_t j = 0; j < m.vars.size(); ++j)
    if (red.var_map[j] >= 0) sol.x[j] = r.x[red.var_map[j]];
  for (const auto& blk : m.box_blocks) {
    int n = static_cast<int>(blk.lo.size());
    for (int k = 0; k < n; ++k) {
      double q = detail::eval(blk.xcoef[k], sol.x, blk.xconst[k]);
      sol.x[blk.lambda_vars[2 * k]] = std::max(q, 0.0);
      sol.x[blk.lambda_vars[2 * k + 1]] = std::max(-q, 0.0);
    }
  }
  double viol = max_violation(m, sol.x);
  double scale = 1.0;
  for (const auto& row : m.rows) scale = std::max(scale, std::abs(row.rhs));
  if (viol > 100 * opt.feas_tol * scale) {
    sol.status = Status::NumericalFailure;
    return finish(sol);
  }
  return finish(sol);
}

// CPLEX LP text format export for external cross-checking.
inline void write_lp_format(const Model& m, std::ostream& os) {
  auto vname = [&](int j) {
    return m.vars[j].name.empty() ? "x" + std::to_string(j) : m.vars[j].name;
  };
  os << "Minimize\n obj:";
  for (const auto& [j, a] : m.objective)
    os << (a < 0 ? " - " : " + ") << std::abs(a) << " " << vname(j);
  os << "\nSubject To\n";
  for (size_t i = 0; i < m.rows.size(); ++i) {
    os << " c" << i << ":";
    for (const auto& [j, a] : m.rows[i].coeffs)
      os << (a < 0 ? " - " : " + ") << std::abs(a) << " " << vname(j);
    os << (m.rows[i].sense == Sense::Equal ? " = " : " <= ") << m.rows[i].rhs << "\n";
  }
  os << "Bounds\n";
  for (size_t j = 0; j < m.vars.size(); ++j) {
    const auto& v = m.vars[j];
    if (v.lb == -kInf && v.ub == kInf)
      os << " " << vname(j) << " free\n";
    else if (v.ub == kInf)
      os << " " << vname(j) << " >= " << v.lb << "\n";
    else
      os << " " << v.lb << " <= " << vname(j) << " <= " << v.ub << "\n";
  }
  os << "End\n";
}

}  // namespace sbcert::lp
