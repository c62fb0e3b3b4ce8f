#pragma once

// Independent Monte Carlo estimation of probabilistic safety and empirical
// one-step checks for extracted barriers. Used by acceptance tests and the
// validate subcommand, never by certification itself.

#include <functional>

#include "sbcert/geometry.hpp"
#include "sbcert/synthesis.hpp"
#include "sbcert/util.hpp"

namespace sbcert::validation {

using geometry::Box;

using StepFn = std::function<Eigen::VectorXd(const Eigen::VectorXd&)>;
using NoiseFn = std::function<Eigen::VectorXd(const util::CounterRng&, std::uint64_t)>;

struct SimOptions {
  int T = 10;
  long trials = 10000;
  std::uint64_t seed = 0;
  int start_grid_per_axis = 5;
  int workers = 1;
};

struct SimResult {
  double empirical = 0.0;  // worst over the start grid
  double wilson_lo = 0.0, wilson_hi = 1.0;
  long trials_per_start = 0;
  long starts = 0;
  std::vector<double> per_start;
};

namespace detail {

inline std::vector<Eigen::VectorXd> start_grid(const Box& X0, int per_axis) {
  const int n = X0.dim();
  std::vector<Eigen::VectorXd> pts;
  std::vector<int> idx(n, 0);
  for (;;) {
    Eigen::VectorXd x(n);
    for (int a = 0; a < n; ++a) {
      double t = per_axis == 1 ? 0.5 : static_cast<double>(idx[a]) / (per_axis - 1);
      x[a] = X0.lo[a] + t * (X0.hi[a] - X0.lo[a]);
    }
    pts.push_back(std::move(x));
    int a = n - 1;
    while (a >= 0 && ++idx[a] == per_axis) idx[a--] = 0;
    if (a < 0) break;
  }
  return pts;
}

inline std::pair<double, double> wilson99(long successes, long trials) {
  if (trials == 0) return {0.0, 1.0};
  const double z = 2.5758293035489004;  // 99% two-sided
  double p = static_cast<double>(successes) / trials;
  double z2 = z * z;
  double denom = 1.0 + z2 / trials;
  double center = (p + z2 / (2.0 * trials)) / denom;
  double half = z * std::sqrt(p * (1 - p) / trials + z2 / (4.0 * trials * trials)) / denom;
  return {std::max(0.0, center - half), std::min(1.0, center + half)};
}

}  // namespace detail

// Fraction of trajectories with x(k) in Xs for all k = 1..T (the start state
// itself is not checked), worst case over a per-axis grid of start points.
inline SimResult simulate_safety(const StepFn& step, const NoiseFn& noise, const Box& X0,
                                 const Box& Xs, const SimOptions& opt) {
  if (opt.trials < 1) throw std::invalid_argument("simulate_safety: trials >= 1 required");
  auto starts = detail::start_grid(X0, opt.start_grid_per_axis);
  std::vector<long> safe_counts(starts.size(), 0);

  util::parallel_for(static_cast<long>(starts.size()), opt.workers, [&](long s) {
    util::CounterRng rng{opt.seed, static_cast<std::uint64_t>(s)};
    long safe = 0;
    for (long m = 0; m < opt.trials; ++m) {
      Eigen::VectorXd x = starts[s];
      bool ok = true;
      for (int k = 1; k <= opt.T; ++k) {
        std::uint64_t counter =
            (static_cast<std::uint64_t>(m) << 8) ^ static_cast<std::uint64_t>(k);
        x = step(x) + noise(rng, counter);
        if (!Xs.contains(x)) {
          ok = false;
          break;
        }
      }
      if (ok) ++safe;
    }
    safe_counts[s] = safe;
  });

  SimResult r;
  r.starts = static_cast<long>(starts.size());
  r.trials_per_start = opt.trials;
  long worst = opt.trials;
  for (long s = 0; s < r.starts; ++s) {
    r.per_start.push_back(static_cast<double>(safe_counts[s]) / opt.trials);
    worst = std::min(worst, safe_counts[s]);
  }
  r.empirical = static_cast<double>(worst) / opt.trials;
  auto [lo, hi] = detail::wilson99(worst, opt.trials);
  r.wilson_lo = lo;
  r.wilson_hi = hi;
  return r;
}

// Fraction of held-out noise rows for which some sampled (x, alpha) pair
// violates  B(A(alpha)x + b(alpha) + eta) + delta <= B(x) + c.
inline double check_onestep_empirical(const synthesis::BarrierPWA& B,
                                      const std::vector<relaxation::UncertainAffineMap>& maps,
                                      const scenario::NoiseDataset& heldout, double delta,
                                      double c, long pairs_per_region = 64,
                                      std::uint64_t seed = 0, double tol = 1e-9,
                                      int workers = 1) {
  const auto& parts = B.parts;
  std::vector<char> violated(heldout.rows(), 0);
  util::parallel_for(heldout.rows(), workers, [&](long w) {
    util::CounterRng rng{seed, static_cast<std::uint64_t>(w)};
    Eigen::VectorXd eta = heldout.row(w);
    std::uint64_t ctr = 0;
    for (int i = 0; i < parts.size() && !violated[w]; ++i) {
      const Box& r = parts.regions[i];
      for (long s = 0; s < pairs_per_region; ++s) {
        Eigen::VectorXd x(r.dim());
        for (int a = 0; a < r.dim(); ++a)
          x[a] = r.lo[a] + rng.uniform(ctr++) * (r.hi[a] - r.lo[a]);
        double alpha = rng.uniform(ctr++);
        Eigen::VectorXd y = maps[i].apply(alpha, x) + eta;
        double lhs = B.value_max(y) + delta;
        double rhs = B.piece(i, x) + c;
        if (lhs > rhs + tol) {
          violated[w] = 1;
          break;
        }
      }
    }
  });
  long count = 0;
  for (char v : violated) count += v;
  return static_cast<double>(count) / static_cast<double>(heldout.rows());
}

}  // namespace sbcert::validation
