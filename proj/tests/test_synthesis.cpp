#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "sbcert/synthesis.hpp"
#include "sbcert/validation.hpp"

using namespace sbcert;
using geometry::Box;
using geometry::make_box;
using relaxation::UncertainAffineMap;
using synthesis::LinExpr;

namespace {

UncertainAffineMap const_map(const Box& region, Eigen::MatrixXd A_lo, Eigen::MatrixXd A_hi,
                             Eigen::VectorXd b_lo, Eigen::VectorXd b_hi) {
  UncertainAffineMap m;
  m.A_lo = std::move(A_lo);
  m.A_hi = std::move(A_hi);
  m.b_lo = std::move(b_lo);
  m.b_hi = std::move(b_hi);
  m.region = region;
  return m;
}

// feasibility of "u'x + v <= g for all x in box" via the dual block with all
// variables pinned, solved as a plain LP feasibility problem
bool dual_block_feasible(const Box& box, const Eigen::VectorXd& uval, double vval, double gval) {
  lp::Model m;
  const int n = box.dim();
  std::vector<int> u(n);
  for (int k = 0; k < n; ++k) u[k] = m.add_var("", uval[k], uval[k]);
  int v = m.add_var("", vval, vval);
  int g = m.add_var("", gval, gval);
  std::vector<LinExpr> coef(n);
  for (int k = 0; k < n; ++k) coef[k].terms = {{u[k], 1.0}};
  LinExpr rhs;
  rhs.terms = {{g, 1.0}, {v, -1.0}};
  synthesis::dualize_robust(m, geometry::to_halfspaces(box), coef, rhs);
  lp::SolveOptions opt;
  opt.force_direct = true;  // keep the lambdas as real variables
  return lp::solve(m, opt).status == lp::Status::Optimal;
}

bool vertex_oracle(const Box& box, const Eigen::VectorXd& uval, double vval, double gval,
                   double tol = 0.0) {
  for (long mask = 0; mask < box.corner_count(); ++mask)
    if (uval.dot(box.corner(mask)) + vval > gval + tol) return false;
  return true;
}

}  // namespace

TEST_CASE("dualize_robust on the unit interval matches the vertex characterization") {
  // feasible iff v <= g and u + v <= g
  auto box = make_box({0.0}, {1.0});
  struct Case {
    double u, v, g;
    bool want;
  } cases[] = {
      {1.0, 0.0, 1.0, true},   {1.0, 0.0, 0.5, false}, {-2.0, 0.3, 0.4, true},
      {0.0, 1.0, 1.0, true},   {0.5, 0.6, 1.0, false}, {0.5, 0.5, 1.0, true},
  };
  for (const auto& c : cases) {
    Eigen::VectorXd u(1);
    u << c.u;
    CHECK(dual_block_feasible(box, u, c.v, c.g) == c.want);
    CHECK(vertex_oracle(box, u, c.v, c.g) == c.want);
  }
}

TEST_CASE("dualize_robust feasibility equals vertex enumeration on random boxes") {
  std::mt19937 rng(2025);
  std::uniform_real_distribution<double> c(-1.5, 1.5);
  int disagreements = 0;
  for (int t = 0; t < 150; ++t) {
    int n = 1 + t % 3;
    Eigen::VectorXd lo(n), hi(n), u(n);
    for (int k = 0; k < n; ++k) {
      lo[k] = c(rng);
      hi[k] = lo[k] + std::abs(c(rng));
      u[k] = c(rng);
    }
    Box box(lo, hi);
    double v = c(rng), g = c(rng);
    bool dual = dual_block_feasible(box, u, v, g);
    bool vert = vertex_oracle(box, u, v, g);
    // guard against ties at the feasibility boundary
    double slack = std::abs(g - [&] {
      double worst = -1e300;
      for (long mask = 0; mask < box.corner_count(); ++mask)
        worst = std::max(worst, u.dot(box.corner(mask)) + v);
      return worst;
    }());
    if (slack < 1e-8) continue;
    if (dual != vert) ++disagreements;
  }
  CHECK(disagreements == 0);
}

TEST_CASE("dualize_robust: degenerate point box collapses to a point constraint") {
  auto box = make_box({0.7, -0.3}, {0.7, -0.3});
  Eigen::VectorXd u(2);
  u << 2.0, 1.0;
  double up = u.dot(box.corner(0));
  CHECK(dual_block_feasible(box, u, 0.0, up + 1e-9));
  CHECK_FALSE(dual_block_feasible(box, u, 0.0, up - 1e-6));
}

TEST_CASE("dualize_robust rejects unbounded polyhedra") {
  lp::Model m;
  int u = m.add_var("", 1.0, 1.0);
  geometry::HalfspaceSystem P;
  P.H.resize(1, 1);
  P.H << 1.0;  // x <= 1, unbounded below
  P.h.resize(1);
  P.h << 1.0;
  std::vector<LinExpr> coef(1);
  coef[0].terms = {{u, 1.0}};
  CHECK_THROWS_WITH(synthesis::dualize_robust(m, P, coef, LinExpr{}),
                    Catch::Matchers::ContainsSubstring("unbounded"));
}

TEST_CASE("find_transition_triples: identity dynamics with tiny noise is local") {
  auto parts = partition::grid_partition(make_box({0.0, 0.0}, {1.0, 1.0}), {3, 3});
  auto idx = partition::classify_indices(parts, parts.domain, parts.domain);
  std::vector<UncertainAffineMap> maps;
  for (const auto& r : parts.regions)
    maps.push_back(const_map(r, Eigen::Matrix2d::Identity(), Eigen::Matrix2d::Identity(),
                             Eigen::Vector2d::Zero(), Eigen::Vector2d::Zero()));
  Eigen::MatrixXd s(2, 2);
  s << 0.004, 0.004, -0.004, -0.004;
  auto D = scenario::make_dataset(s);
  geometry::RTree tree(parts.regions);
  auto triples = synthesis::find_transition_triples(parts, idx, maps, D, tree, 8);
  REQUIRE(!triples.empty());
  for (const auto& tr : triples) {
    if (tr.j == partition::kExterior) continue;  // edge cells may escape
    int di = std::abs(tr.i / 3 - tr.j / 3);
    int dj = std::abs(tr.i % 3 - tr.j % 3);
    CHECK(std::max(di, dj) <= 1);
  }
}

TEST_CASE("find_transition_triples equals brute-force enumeration") {
  std::mt19937 rng(91);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int inst = 0; inst < 10; ++inst) {
    int n = 1 + inst % 2;
    Eigen::VectorXd lo = Eigen::VectorXd::Constant(n, -1.0);
    Eigen::VectorXd hi = Eigen::VectorXd::Constant(n, 1.0);
    Box dom(lo, hi);
    std::vector<int> grid(n, 3 + inst % 3);
    auto parts = partition::grid_partition(dom, grid);
    auto idx = partition::classify_indices(parts, dom, dom);
    std::vector<UncertainAffineMap> maps;
    for (const auto& r : parts.regions) {
      Eigen::MatrixXd A = 0.6 * Eigen::MatrixXd::Identity(n, n);
      Eigen::MatrixXd Ahi = A;
      Ahi.diagonal().array() += 0.2;
      Eigen::VectorXd bl = Eigen::VectorXd::NullaryExpr(n, [&]() { return 0.2 * u(rng); });
      maps.push_back(const_map(r, A, Ahi, bl, bl.array() + 0.1));
    }
    Eigen::MatrixXd s(4, n);
    for (int i = 0; i < 4; ++i)
      for (int k = 0; k < n; ++k) s(i, k) = 0.5 * u(rng);
    auto D = scenario::make_dataset(s);
    geometry::RTree tree(parts.regions);
    auto got = synthesis::find_transition_triples(parts, idx, maps, D, tree, 6);

    std::set<std::tuple<int, int, long>> got_keys, want;
    for (const auto& t : got) got_keys.insert({t.i, t.j, t.k});
    for (int i = 0; i < parts.size(); ++i)
      for (long k = 0; k < D.rows(); ++k) {
        Box img = relaxation::image_box(maps[i], parts.regions[i], D.row(k));
        for (int j = 0; j < parts.size(); ++j)
          if (geometry::boxes_intersect(img, parts.regions[j])) want.insert({i, j, k});
        if (!dom.contains_box(img)) want.insert({i, partition::kExterior, k});
      }
    CHECK(got_keys == want);
  }
}

TEST_CASE("find_transition_triples: image fully outside yields only exterior") {
  auto parts = partition::grid_partition(make_box({0.0}, {1.0}), {2});
  auto idx = partition::classify_indices(parts, parts.domain, parts.domain);
  std::vector<UncertainAffineMap> maps;
  for (const auto& r : parts.regions)
    maps.push_back(const_map(r, Eigen::MatrixXd::Identity(1, 1), Eigen::MatrixXd::Identity(1, 1),
                             Eigen::VectorXd::Constant(1, 10.0),
                             Eigen::VectorXd::Constant(1, 10.0)));
  Eigen::MatrixXd s(1, 1);
  s << 0.0;
  auto D = scenario::make_dataset(s);
  geometry::RTree tree(parts.regions);
  auto triples = synthesis::find_transition_triples(parts, idx, maps, D, tree, 6);
  REQUIRE(triples.size() == 2);
  for (const auto& t : triples) CHECK(t.j == partition::kExterior);
}

TEST_CASE("build_fsbp: primal variable count and constant-barrier feasibility") {
  auto parts = partition::grid_partition(make_box({0.0}, {1.0}), {1});
  auto idx = partition::classify_indices(parts, parts.domain, parts.domain);
  std::vector<UncertainAffineMap> maps = {const_map(
      parts.regions[0], Eigen::MatrixXd::Identity(1, 1), Eigen::MatrixXd::Identity(1, 1),
      Eigen::VectorXd::Zero(1), Eigen::VectorXd::Zero(1))};
  Eigen::MatrixXd s(1, 1);
  s << 0.0;
  auto D = scenario::make_dataset(s);
  geometry::RTree tree(parts.regions);
  auto triples = synthesis::find_transition_triples(parts, idx, maps, D, tree, 4);
  REQUIRE(triples.size() == 1);

  auto params = scenario::ScenarioParams::make(0.01, 1.0, parts.size(), 1, 1);
  auto fm = synthesis::build_fsbp(parts, idx, maps, triples, D, params, 10, parts.domain);
  CHECK(fm.stats.n_primal == 2 + 1 * (1 + 1));

  auto sol = lp::solve(fm.model);
  REQUIRE(sol.status == lp::Status::Optimal);
  CHECK(sol.objective <= 1.0 + params.delta * 10 + 1e-7);

  // eliminated and direct paths agree
  lp::SolveOptions direct;
  direct.force_direct = true;
  auto sol2 = lp::solve(fm.model, direct);
  REQUIRE(sol2.status == lp::Status::Optimal);
  CHECK(sol.objective == Catch::Approx(sol2.objective).margin(1e-7));
  CHECK(sol.x[0] == Catch::Approx(sol2.x[0]).margin(1e-6));
  CHECK(sol.x[1] == Catch::Approx(sol2.x[1]).margin(1e-6));
}

TEST_CASE("LP equivalence under hull pruning on randomized small instances") {
  std::mt19937 rng(314);
  std::normal_distribution<double> g(0.0, 1.0);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  for (int inst = 0; inst < 6; ++inst) {
    auto parts = partition::grid_partition(make_box({-1.0}, {1.0}), {4 + inst % 3});
    auto idx = partition::classify_indices(parts, make_box({-0.4}, {0.4}), parts.domain);
    std::vector<UncertainAffineMap> maps;
    for (const auto& r : parts.regions) {
      double a = 0.5 + 0.3 * u01(rng);
      maps.push_back(const_map(r, Eigen::MatrixXd::Constant(1, 1, a),
                               Eigen::MatrixXd::Constant(1, 1, a + 0.05),
                               Eigen::VectorXd::Constant(1, -0.02),
                               Eigen::VectorXd::Constant(1, 0.02)));
    }
    long N = 400;
    Eigen::MatrixXd s(N, 1);
    for (long i = 0; i < N; ++i) s(i, 0) = 0.05 * g(rng);
    auto D = scenario::make_dataset(s);
    auto Dbar = scenario::prune_to_hull(D);

    // pair set from the full dataset; every pair gets a constraint per sample
    // with the conservative whole-region preimage
    std::set<std::pair<int, int>> pairs;
    for (int i = 0; i < parts.size(); ++i)
      for (long k = 0; k < D.rows(); ++k) {
        Box img = relaxation::image_box(maps[i], parts.regions[i], D.row(k));
        for (int j = 0; j < parts.size(); ++j)
          if (geometry::boxes_intersect(img, parts.regions[j])) pairs.insert({i, j});
        if (!parts.domain.contains_box(img)) pairs.insert({i, partition::kExterior});
      }
    auto triples_for = [&](const scenario::NoiseDataset& ds) {
      std::vector<synthesis::TransitionTriple> ts;
      for (auto [i, j] : pairs)
        for (long k = 0; k < ds.rows(); ++k)
          ts.push_back({i, j, k, parts.regions[i]});
      return ts;
    };

    auto params_full = scenario::ScenarioParams::make(0.01, 1.0, parts.size(), 1, N);
    auto fm_full = synthesis::build_fsbp(parts, idx, maps, triples_for(D), D, params_full, 10,
                                         make_box({-0.4}, {0.4}));
    auto fm_hull = synthesis::build_fsbp(parts, idx, maps, triples_for(Dbar), Dbar, params_full,
                                         10, make_box({-0.4}, {0.4}));
    auto s1 = lp::solve(fm_full.model);
    auto s2 = lp::solve(fm_hull.model);
    REQUIRE(s1.status == lp::Status::Optimal);
    REQUIRE(s2.status == lp::Status::Optimal);
    CHECK(s1.objective == Catch::Approx(s2.objective).margin(1e-6));
  }
}

TEST_CASE("certify end-to-end: contracting noise stays safe with zeta >= 0.9") {
  // identity dynamics, sigma 1e-3, Xs=[-1,1], X0=[-0.1,0.1], 9 cells, T=10
  util::CounterRng noise_rng{424242, 0};
  long N = 60000;
  Eigen::MatrixXd s(N, 1);
  for (long i = 0; i < N; ++i) s(i, 0) = 1e-3 * noise_rng.normal(i);
  auto D = scenario::make_dataset(s, "synthetic");

  synthesis::CertifyInputs in;
  in.relax = [](const Box& r) {
    return const_map(r, Eigen::MatrixXd::Identity(1, 1), Eigen::MatrixXd::Identity(1, 1),
                     Eigen::VectorXd::Zero(1), Eigen::VectorXd::Zero(1));
  };
  in.safe_set = make_box({-1.0}, {1.0});
  in.initial_set = make_box({-0.1}, {0.1});
  in.grid = {9};
  in.T = 10;
  in.epsilon = 0.001;
  in.M = 1.0;
  in.bisection_depth = 10;
  auto res = synthesis::certify(in, D);
  const auto& cert = res.cert;

  CHECK(cert.ell == 9);
  CHECK(cert.d == 20);
  CHECK(cert.N == N);
  CHECK(cert.zeta_raw >= 0.9);
  CHECK(cert.beta == Catch::Approx(scenario::beta_bound(N, 0.001, 20)));
  CHECK(cert.delta >= scenario::buffer_delta(1.0, 0.001) - 1e-15);
  CHECK(cert.zeta_raw == Catch::Approx(1.0 - (cert.gamma + cert.c * 10)));

  // empirical safety dominates the certificate
  validation::SimOptions so;
  so.T = 10;
  so.trials = 20000;
  so.seed = 7;
  auto sim = validation::simulate_safety(
      [](const Eigen::VectorXd& x) { return x; },
      [](const util::CounterRng& r, std::uint64_t c) {
        return Eigen::VectorXd::Constant(1, 1e-3 * r.normal(c));
      },
      in.initial_set, in.safe_set, so);
  CHECK(sim.empirical >= cert.zeta_clamped);

  // one-step constraints hold on the training hull samples
  double viol = validation::check_onestep_empirical(res.barrier, res.maps, res.used, cert.delta,
                                                    cert.c, 256, 5);
  CHECK(viol == 0.0);
}

TEST_CASE("certify is deterministic and pruning-idempotent") {
  util::CounterRng nr{7, 0};
  Eigen::MatrixXd s(500, 1);
  for (long i = 0; i < 500; ++i) s(i, 0) = 0.01 * nr.normal(i);
  auto D = scenario::make_dataset(s);

  synthesis::CertifyInputs in;
  in.relax = [](const Box& r) {
    return const_map(r, Eigen::MatrixXd::Constant(1, 1, 0.9),
                     Eigen::MatrixXd::Constant(1, 1, 0.95), Eigen::VectorXd::Constant(1, -0.01),
                     Eigen::VectorXd::Constant(1, 0.01));
  };
  in.safe_set = make_box({-1.0}, {1.0});
  in.initial_set = make_box({-0.2}, {0.2});
  in.grid = {5};
  in.T = 10;
  in.epsilon = 0.01;

  auto r1 = synthesis::certify(in, D);
  auto r2 = synthesis::certify(in, D);
  CHECK(r1.cert.gamma == r2.cert.gamma);
  CHECK(r1.cert.c == r2.cert.c);
  CHECK(r1.cert.fingerprint == r2.cert.fingerprint);

  auto r3 = synthesis::certify(in, scenario::prune_to_hull(D));
  CHECK(r3.cert.gamma == Catch::Approx(r1.cert.gamma).margin(1e-9));
  CHECK(r3.cert.c == Catch::Approx(r1.cert.c).margin(1e-9));
}

TEST_CASE("extract_barrier rejects non-optimal solutions and re-checks vertices") {
  lp::Solution bogus;
  bogus.status = lp::Status::Infeasible;
  synthesis::FsbpModel fm;
  auto parts = partition::grid_partition(make_box({0.0}, {1.0}), {1});
  CHECK_THROWS(synthesis::extract_barrier(bogus, fm, parts, 1.0));
}
