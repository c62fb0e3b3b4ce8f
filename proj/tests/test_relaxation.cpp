#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <fstream>
#include <random>

#include "sbcert/relaxation.hpp"

using namespace sbcert;
using relaxation::ComputationGraph;
using relaxation::ElemKind;
using relaxation::Interval;
using geometry::Box;
using geometry::make_box;

namespace {

double elem(ElemKind k, double t) { return relaxation::detail::elem_eval(k, t); }

// dense-sampling soundness of a 1D envelope
double worst_violation(ElemKind k, Interval iv, const relaxation::LinearBounds1D& lb,
                       int samples = 10000) {
  double worst = 0.0;
  for (int i = 0; i <= samples; ++i) {
    double t = iv.lo + (iv.hi - iv.lo) * i / samples;
    double v = elem(k, t);
    worst = std::max(worst, (lb.slope_lo * t + lb.icpt_lo) - v);
    worst = std::max(worst, v - (lb.slope_hi * t + lb.icpt_hi));
  }
  return worst;
}

}  // namespace

TEST_CASE("relax_elementwise: cube on [0,1] gives chord and midpoint tangent") {
  auto lb = relaxation::relax_elementwise(ElemKind::Cube, {0.0, 1.0});
  CHECK(lb.slope_hi == Catch::Approx(1.0).margin(1e-12));
  CHECK(lb.icpt_hi == Catch::Approx(0.0).margin(1e-12));
  CHECK(lb.slope_lo == Catch::Approx(0.75).margin(1e-12));
  CHECK(lb.icpt_lo == Catch::Approx(-0.25).margin(1e-12));
  CHECK(worst_violation(ElemKind::Cube, {0.0, 1.0}, lb) <= 1e-12);
}

TEST_CASE("relax_elementwise: relu on [-1,1]") {
  auto lb = relaxation::relax_elementwise(ElemKind::Relu, {-1.0, 1.0});
  CHECK(lb.slope_hi == Catch::Approx(0.5));
  CHECK(lb.icpt_hi == Catch::Approx(0.5));
  CHECK(lb.slope_lo == 0.0);  // |lo| >= |hi|
  CHECK(lb.icpt_lo == 0.0);
  CHECK(worst_violation(ElemKind::Relu, {-1.0, 1.0}, lb) <= 1e-12);

  auto lb2 = relaxation::relax_elementwise(ElemKind::Relu, {-0.5, 1.0});
  CHECK(lb2.slope_lo == 1.0);
}

TEST_CASE("relax_elementwise: point interval is the constant") {
  for (double a : {-2.0, 0.3, 1.7}) {
    auto lb = relaxation::relax_elementwise(ElemKind::Sin, {a, a});
    CHECK(lb.slope_lo == 0.0);
    CHECK(lb.slope_hi == 0.0);
    CHECK(lb.icpt_lo == Catch::Approx(std::sin(a)));
    CHECK(lb.icpt_hi == Catch::Approx(std::sin(a)));
  }
}

TEST_CASE("relax_elementwise: soundness across kinds and random intervals") {
  std::mt19937 rng(77);
  std::uniform_real_distribution<double> u(-4.0, 4.0);
  for (ElemKind k : {ElemKind::Sin, ElemKind::Cos, ElemKind::Cube, ElemKind::Square,
                     ElemKind::Relu, ElemKind::Tanh}) {
    for (int t = 0; t < 40; ++t) {
      double a = u(rng), b = u(rng);
      Interval iv{std::min(a, b), std::max(a, b)};
      auto lb = relaxation::relax_elementwise(k, iv);
      INFO(relaxation::elem_name(k) << " on [" << iv.lo << "," << iv.hi << "]");
      CHECK(worst_violation(k, iv, lb) <= 1e-9);
    }
  }
}

TEST_CASE("relax_region: identity graph is exact") {
  ComputationGraph g;
  g.add_input(2);
  auto m = relaxation::relax_region(g, make_box({-1.0, 0.0}, {1.0, 2.0}));
  CHECK(m.A_lo.isApprox(Eigen::Matrix2d::Identity()));
  CHECK(m.A_hi.isApprox(Eigen::Matrix2d::Identity()));
  CHECK(m.b_lo.norm() == 0.0);
  CHECK(m.b_hi.norm() == 0.0);
}

TEST_CASE("relax_region: f(x) = x^3 + x on [0,1]") {
  ComputationGraph g;
  int x = g.add_input(1);
  int c = g.add_elementwise(x, ElemKind::Cube);
  g.add_sum({c, x});
  auto m = relaxation::relax_region(g, make_box({0.0}, {1.0}));
  CHECK(m.A_lo(0, 0) == Catch::Approx(1.75).margin(1e-12));
  CHECK(m.b_lo[0] == Catch::Approx(-0.25).margin(1e-12));
  CHECK(m.A_hi(0, 0) == Catch::Approx(2.0).margin(1e-12));
  CHECK(m.b_hi[0] == Catch::Approx(0.0).margin(1e-12));

  // dense-sample soundness
  for (int i = 0; i <= 10000; ++i) {
    double t = i / 10000.0;
    double f = t * t * t + t;
    CHECK(m.A_lo(0, 0) * t + m.b_lo[0] <= f + 1e-12);
    CHECK(f <= m.A_hi(0, 0) * t + m.b_hi[0] + 1e-12);
  }
}

TEST_CASE("relax_region: affine graph passes through exactly") {
  // drone-style longitudinal dynamics with fixed mass
  double tau = 1.0, mass = 1.0;
  Eigen::Matrix2d A;
  A << 1, tau, 0, 1 - 0.1 * tau / mass;
  ComputationGraph g;
  int x = g.add_input(2);
  g.add_affine(x, A, Eigen::Vector2d::Zero());
  auto m = relaxation::relax_region(g, make_box({-5.0, -5.0}, {5.0, 5.0}));
  CHECK(m.A_lo.isApprox(A, 1e-14));
  CHECK(m.A_hi.isApprox(A, 1e-14));
  CHECK(m.b_lo.norm() == 0.0);
  CHECK(m.b_hi.norm() == 0.0);
}

TEST_CASE("relax_region: soundness on sampled nonlinear graphs") {
  std::mt19937 rng(11);
  std::uniform_real_distribution<double> u(-1.5, 1.5);
  // f(x,y) = (x + 0.1 cos y, y + x^2) as a graph
  ComputationGraph g;
  int in = g.add_input(2);
  Eigen::MatrixXd sel_y(1, 2);
  sel_y << 0, 1;
  int ny = g.add_affine(in, sel_y, Eigen::VectorXd::Zero(1));
  int cy = g.add_elementwise(ny, ElemKind::Cos);
  Eigen::MatrixXd lift1(2, 1);
  lift1 << 0.1, 0;
  int b1 = g.add_affine(cy, lift1, Eigen::VectorXd::Zero(2));
  Eigen::MatrixXd sel_x(1, 2);
  sel_x << 1, 0;
  int nx = g.add_affine(in, sel_x, Eigen::VectorXd::Zero(1));
  int sx = g.add_elementwise(nx, ElemKind::Square);
  Eigen::MatrixXd lift2(2, 1);
  lift2 << 0, 1;
  int b2 = g.add_affine(sx, lift2, Eigen::VectorXd::Zero(2));
  g.add_sum({in, b1, b2});

  for (int t = 0; t < 20; ++t) {
    double ax = u(rng), bx = u(rng), ay = u(rng), by = u(rng);
    Box r = make_box({std::min(ax, bx), std::min(ay, by)}, {std::max(ax, bx), std::max(ay, by)});
    auto m = relaxation::relax_region(g, r);
    for (int s = 0; s < 500; ++s) {
      Eigen::VectorXd x(2);
      x[0] = r.lo[0] + (r.hi[0] - r.lo[0]) * (s % 23) / 22.0;
      x[1] = r.lo[1] + (r.hi[1] - r.lo[1]) * (s % 29) / 28.0;
      Eigen::VectorXd f = g.evaluate(x);
      Eigen::VectorXd flo = m.A_lo * x + m.b_lo;
      Eigen::VectorXd fhi = m.A_hi * x + m.b_hi;
      for (int k = 0; k < 2; ++k) {
        CHECK(flo[k] <= f[k] + 1e-9);
        CHECK(f[k] <= fhi[k] + 1e-9);
      }
    }
  }
}

TEST_CASE("relax_region: monotone refinement on halved regions") {
  ComputationGraph g;
  int in = g.add_input(1);
  int c = g.add_elementwise(in, ElemKind::Sin);
  Eigen::MatrixXd w(1, 1);
  w << 0.5;
  int sc = g.add_affine(c, w, Eigen::VectorXd::Zero(1));
  g.add_sum({in, sc});

  std::mt19937 rng(3);
  std::uniform_real_distribution<double> u(-5.0, 5.0);
  auto max_gap_over = [](const relaxation::UncertainAffineMap& m, const Box& b) {
    double worst = 0.0;
    for (long mask = 0; mask < b.corner_count(); ++mask) {
      Eigen::VectorXd x = b.corner(mask);
      worst = std::max(worst, ((m.A_hi - m.A_lo) * x + (m.b_hi - m.b_lo)).maxCoeff());
    }
    return worst;
  };
  for (int t = 0; t < 30; ++t) {
    double a = u(rng), b = u(rng);
    Box parent = make_box({std::min(a, b)}, {std::max(a, b)});
    double mid = parent.center()[0];
    Box left = make_box({parent.lo[0]}, {mid});
    Box right = make_box({mid}, {parent.hi[0]});
    auto mp = relaxation::relax_region(g, parent);
    for (const Box& child : {left, right}) {
      auto mc = relaxation::relax_region(g, child);
      CHECK(max_gap_over(mc, child) <= max_gap_over(mp, child) + 1e-10);
    }
  }
}

TEST_CASE("image_box examples") {
  // identity map translated by eta
  relaxation::UncertainAffineMap id;
  id.A_lo = id.A_hi = Eigen::Matrix2d::Identity();
  id.b_lo = id.b_hi = Eigen::Vector2d::Zero();
  id.region = make_box({0.0, 0.0}, {1.0, 1.0});
  Eigen::Vector2d eta(1.0, 1.0);
  auto img = relaxation::image_box(id, id.region, eta);
  CHECK(img.lo[0] == Catch::Approx(1.0));
  CHECK(img.hi[0] == Catch::Approx(2.0));
  CHECK(img.lo[1] == Catch::Approx(1.0));
  CHECK(img.hi[1] == Catch::Approx(2.0));

  // 1D uncertain map A in [-1, 1], b = 0 on r = [2,3]
  relaxation::UncertainAffineMap m1;
  m1.A_lo = Eigen::MatrixXd::Constant(1, 1, -1.0);
  m1.A_hi = Eigen::MatrixXd::Constant(1, 1, 1.0);
  m1.b_lo = m1.b_hi = Eigen::VectorXd::Zero(1);
  m1.region = make_box({2.0}, {3.0});
  auto img1 = relaxation::image_box(m1, m1.region, Eigen::VectorXd::Zero(1));
  CHECK(img1.lo[0] == Catch::Approx(-3.0));
  CHECK(img1.hi[0] == Catch::Approx(3.0));
}

TEST_CASE("image_box: Monte Carlo containment") {
  std::mt19937 rng(21);
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  std::uniform_real_distribution<double> a01(0.0, 1.0);
  for (int t = 0; t < 5; ++t) {
    relaxation::UncertainAffineMap m;
    m.A_lo = Eigen::MatrixXd::NullaryExpr(2, 2, [&]() { return u(rng); });
    m.A_hi = Eigen::MatrixXd::NullaryExpr(2, 2, [&]() { return u(rng); });
    m.b_lo = Eigen::VectorXd::NullaryExpr(2, [&]() { return u(rng); });
    m.b_hi = Eigen::VectorXd::NullaryExpr(2, [&]() { return u(rng); });
    double l0 = u(rng), l1 = u(rng);
    m.region = make_box({l0, l1}, {l0 + a01(rng), l1 + a01(rng)});
    Eigen::Vector2d eta(u(rng), u(rng));
    auto img = relaxation::image_box(m, m.region, eta);
    for (int s = 0; s < 10000; ++s) {
      Eigen::Vector2d x(m.region.lo[0] + a01(rng) * (m.region.hi[0] - m.region.lo[0]),
                        m.region.lo[1] + a01(rng) * (m.region.hi[1] - m.region.lo[1]));
      Eigen::VectorXd y = m.apply(a01(rng), x) + eta;
      REQUIRE(img.contains(y, 1e-9));
    }
  }
}

TEST_CASE("load_network round trips and matches a direct forward pass") {
  std::string path = "test_net_tmp.txt";
  {
    std::ofstream f(path);
    f << "layers 3 activation relu\n";
    std::mt19937 rng(5);
    std::normal_distribution<double> gsn(0.0, 0.7);
    auto emit = [&](int r, int c) {
      f << r << " " << c << "\n";
      for (int i = 0; i < r; ++i) {
        for (int j = 0; j < c; ++j) f << gsn(rng) << " ";
        f << "\n";
      }
      for (int i = 0; i < r; ++i) f << gsn(rng) << " ";
      f << "\n";
    };
    emit(64, 2);
    emit(64, 64);
    emit(2, 64);
  }
  auto g = relaxation::load_network(path);
  // reread the exact same weights for the oracle
  std::ifstream f(path);
  std::string skip;
  int L;
  f >> skip >> L >> skip >> skip;
  std::vector<Eigen::MatrixXd> Ws;
  std::vector<Eigen::VectorXd> bs;
  for (int l = 0; l < L; ++l) {
    int r, c;
    f >> r >> c;
    Eigen::MatrixXd W(r, c);
    for (int i = 0; i < r; ++i)
      for (int j = 0; j < c; ++j) f >> W(i, j);
    Eigen::VectorXd b(r);
    for (int i = 0; i < r; ++i) f >> b[i];
    Ws.push_back(W);
    bs.push_back(b);
  }
  std::mt19937 rng(17);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int t = 0; t < 100; ++t) {
    Eigen::VectorXd x(2);
    x << u(rng), u(rng);
    Eigen::VectorXd ref = x;
    for (int l = 0; l < L; ++l) {
      ref = Ws[l] * ref + bs[l];
      if (l + 1 < L) ref = ref.cwiseMax(0.0);
    }
    CHECK((g.evaluate(x) - ref).lpNorm<Eigen::Infinity>() == 0.0);
  }
  std::remove(path.c_str());
}

TEST_CASE("load_network: trivial and error cases") {
  {
    std::ofstream f("net_id.txt");
    f << "layers 1 activation identity\n2 2\n1 0\n0 1\n0.5 -0.5\n";
  }
  auto g = relaxation::load_network("net_id.txt");
  Eigen::Vector2d x(2.0, 3.0);
  Eigen::VectorXd y = g.evaluate(x);
  CHECK(y[0] == Catch::Approx(2.5));
  CHECK(y[1] == Catch::Approx(2.5));
  std::remove("net_id.txt");

  {
    std::ofstream f("net_zero.txt");
    f << "layers 2 activation relu\n2 2\n0 0\n0 0\n0 0\n2 2\n0 0\n0 0\n0.25 -1\n";
  }
  auto gz = relaxation::load_network("net_zero.txt");
  Eigen::VectorXd yz = gz.evaluate(Eigen::Vector2d(9.0, -3.0));
  CHECK(yz[0] == Catch::Approx(0.25));
  CHECK(yz[1] == Catch::Approx(-1.0));
  std::remove("net_zero.txt");

  {
    std::ofstream f("net_bad.txt");
    f << "layers 2 activation relu\n2 2\n1 0\n0 1\n0 0\n2 3\n1 0 0\n0 1 0\n0 0\n";
  }
  CHECK_THROWS_WITH(relaxation::load_network("net_bad.txt"),
                    Catch::Matchers::ContainsSubstring("shape mismatch"));
  std::remove("net_bad.txt");

  {
    std::ofstream f("net_act.txt");
    f << "layers 1 activation swish\n2 2\n1 0\n0 1\n0 0\n";
  }
  CHECK_THROWS_WITH(relaxation::load_network("net_act.txt"),
                    Catch::Matchers::ContainsSubstring("unknown activation"));
  std::remove("net_act.txt");
}

TEST_CASE("relax_region reports the node with a non-finite range") {
  ComputationGraph g;
  int in = g.add_input(1);
  Eigen::MatrixXd big(1, 1);
  big << 1e200;
  int sc = g.add_affine(in, big, Eigen::VectorXd::Zero(1));
  int cu = g.add_elementwise(sc, ElemKind::Cube);  // overflows to inf
  Eigen::MatrixXd shrink(1, 1);
  shrink << 1e-200;
  g.add_affine(cu, shrink, Eigen::VectorXd::Zero(1));
  CHECK_THROWS_WITH(relaxation::relax_region(g, make_box({-1.0}, {1.0})),
                    Catch::Matchers::ContainsSubstring("node"));
}
