#pragma once

// Built-in benchmark systems: nominal dynamics, per-region uncertain affine
// relaxations, noise samplers, and default certification settings. Values a
// benchmark does not fix (domains, initial sets, grids) are plain config
// defaults and can be overridden per run.

#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>

#include "sbcert/relaxation.hpp"
#include "sbcert/scenario.hpp"
#include "sbcert/util.hpp"

namespace sbcert::benchmarks {

using geometry::Box;
using geometry::make_box;
using relaxation::UncertainAffineMap;

struct Benchmark {
  std::string name;
  int dim = 1;
  Box safe_set;
  Box initial_set;
  std::vector<int> grid;
  int T = 10;
  double epsilon = 0.005;

  // per-region relaxation of the dynamics
  std::function<UncertainAffineMap(const Box&)> relax;
  // nominal map for a fixed uncertainty selector alpha in [0,1]
  std::function<Eigen::VectorXd(const Eigen::VectorXd&, double)> nominal;
  // one noise realization per counter value
  std::function<Eigen::VectorXd(const util::CounterRng&, std::uint64_t)> noise;
  // uncertainty selectors worth validating against (worst over them)
  std::vector<double> validation_alphas{0.0, 0.5, 1.0};
};

using Params = std::map<std::string, double>;

namespace detail {

inline double get(const Params& p, const std::string& key, double fallback) {
  auto it = p.find(key);
  return it == p.end() ? fallback : it->second;
}

inline Eigen::VectorXd gaussian_vec(const util::CounterRng& rng, std::uint64_t ctr, int n,
                                    double sigma) {
  Eigen::VectorXd v(n);
  for (int k = 0; k < n; ++k) v[k] = sigma * rng.normal(ctr * 8 + k);
  return v;
}

}  // namespace detail

// Noise model alone (dimension and sampler); the pendulum network is not
// needed to draw its noise.
struct NoiseModel {
  int dim = 1;
  std::function<Eigen::VectorXd(const util::CounterRng&, std::uint64_t)> sample;
};

inline NoiseModel noise_model(const std::string& name, const Params& p = {}) {
  double sigma = detail::get(p, "sigma", name == "dubins" ? 0.1 : 0.01);
  if (name == "linear1d")
    return {1, [sigma](const util::CounterRng& r, std::uint64_t c) {
              return detail::gaussian_vec(r, c, 1, sigma);
            }};
  if (name == "drone" || name == "vehicle" || name == "pendulum-nndm")
    return {2, [sigma](const util::CounterRng& r, std::uint64_t c) {
              return detail::gaussian_vec(r, c, 2, sigma);
            }};
  if (name == "dubins") {
    double mean = detail::get(p, "heading_mean", 60.0 * 3.14159265358979323846 / 180.0);
    return {3, [mean, sigma](const util::CounterRng& r, std::uint64_t c) {
              Eigen::VectorXd v = Eigen::VectorXd::Zero(3);
              v[2] = mean + sigma * r.normal(c);
              return v;
            }};
  }
  throw std::invalid_argument("unknown benchmark '" + name + "'");
}

// 1D uncertain linear system x+ = x + b(alpha) + eta, b(alpha) = -0.05+0.1a;
// noise N(0, 0.01^2). Safe set |x| <= 2.5, initial |x| <= 0.5, 27 cells.
inline Benchmark linear1d(const Params& p = {}) {
  Benchmark b;
  b.name = "linear1d";
  b.dim = 1;
  b.safe_set = make_box({-2.5}, {2.5});
  b.initial_set = make_box({-0.5}, {0.5});
  b.grid = {27};
  b.T = 10;
  b.epsilon = detail::get(p, "epsilon", 0.005);
  b.relax = [](const Box& r) {
    return relaxation::affine_uncertain(
        Eigen::MatrixXd::Identity(1, 1), Eigen::MatrixXd::Identity(1, 1),
        Eigen::VectorXd::Constant(1, -0.05), Eigen::VectorXd::Constant(1, 0.05), r);
  };
  b.nominal = [](const Eigen::VectorXd& x, double a) {
    return (x.array() + (-0.05 + 0.1 * a)).matrix().eval();
  };
  b.noise = noise_model("linear1d", p).sample;
  return b;
}

// Longitudinal drone dynamics (position, velocity) with uncertain mass
// m in [0.75, 1.25] and tau = 1; noise N(0, 0.01^2 I).
inline Benchmark drone(const Params& p = {}) {
  Benchmark b;
  b.name = "drone";
  b.dim = 2;
  double tau = detail::get(p, "tau", 1.0);
  double m_lo = detail::get(p, "mass_min", 0.75);
  double m_hi = detail::get(p, "mass_max", 1.25);
  double pos = detail::get(p, "pos_halfwidth", 250.0);
  double vel = detail::get(p, "vel_halfwidth", 0.8);
  double pos0 = detail::get(p, "init_pos_halfwidth", 3.0);
  double vel0 = detail::get(p, "init_vel_halfwidth", 0.1);
  b.safe_set = make_box({-pos, -vel}, {pos, vel});
  b.initial_set = make_box({-pos0, -vel0}, {pos0, vel0});
  b.grid = {37, 1};
  b.T = 10;
  b.epsilon = detail::get(p, "epsilon", 1e-4);

  auto amat = [tau](double m) {
    Eigen::Matrix2d A;
    A << 1, tau, 0, 1 - 0.1 * tau / m;
    return A;
  };
  Eigen::Matrix2d A_lo = amat(m_lo), A_hi = amat(m_hi);
  b.relax = [A_lo, A_hi](const Box& r) {
    return relaxation::affine_uncertain(A_lo, A_hi, Eigen::Vector2d::Zero(),
                                        Eigen::Vector2d::Zero(), r);
  };
  b.nominal = [amat, m_lo, m_hi](const Eigen::VectorXd& x, double a) {
    return (amat(m_lo + a * (m_hi - m_lo)) * x).eval();
  };
  b.noise = noise_model("drone", p).sample;
  return b;
}

// Vehicle on a straight road: x1 longitudinal, x2 lateral, tau = 1. A gust
// zone x1 in [80, 120] applies an uncertain lateral acceleration
// a_lat in [0.0913, 0.364]; elsewhere a_lat = 0. Past the hold line the
// longitudinal motion contracts to a fixed point so the road segment under
// study is forward-invariant. The paper's zone condition for the nonzero
// interval is restated for 80 <= x1 <= 120 (its printed condition repeats
// the complement) and the safe set constrains the lateral coordinate; both
// ambiguities are resolved here and flagged in the shipped config.
inline Benchmark vehicle(const Params& p = {}) {
  Benchmark b;
  b.name = "vehicle";
  b.dim = 2;
  double road_len = detail::get(p, "road_length", 400.0);
  double hold_from = detail::get(p, "hold_from", 200.0);
  double lat = detail::get(p, "lat_halfwidth", 2.5);
  double zone_lo = detail::get(p, "wind_zone_min", 80.0);
  double zone_hi = detail::get(p, "wind_zone_max", 120.0);
  double a_lo = detail::get(p, "a_lat_min", 0.0913);
  double a_hi = detail::get(p, "a_lat_max", 0.364);
  double speed = detail::get(p, "speed", 50.0 / 3.6);
  double contraction = detail::get(p, "lat_contraction", 0.95);
  double hold_rate = detail::get(p, "hold_rate", 0.95);
  b.safe_set = make_box({0.0, -lat}, {road_len, lat});
  b.initial_set = make_box({detail::get(p, "init_x1_min", 0.0),
                            detail::get(p, "init_x2_min", -0.5)},
                           {detail::get(p, "init_x1_max", 20.0),
                            detail::get(p, "init_x2_max", 0.5)});
  b.grid = {10, 15};
  b.T = 10;
  b.epsilon = detail::get(p, "epsilon", 0.005);
  double hold_shift = hold_from * (1.0 - hold_rate);  // fixed point at the hold line

  auto lat_interval = [=](double x1_lo, double x1_hi) -> std::pair<double, double> {
    bool outside = x1_hi <= zone_lo || x1_lo >= zone_hi;
    bool inside = x1_lo >= zone_lo && x1_hi <= zone_hi;
    if (outside) return {0.0, 0.0};
    if (inside) return {a_lo, a_hi};
    return {0.0, a_hi};  // straddling regions take the interval hull
  };

  b.relax = [=](const Box& r) {
    auto [al, ah] = lat_interval(r.lo[0], r.hi[0]);
    double v_lo, v_hi, a11_lo, a11_hi;
    if (r.hi[0] <= hold_from) {
      v_lo = v_hi = speed;
      a11_lo = a11_hi = 1.0;
    } else if (r.lo[0] >= hold_from) {
      v_lo = v_hi = hold_shift;
      a11_lo = a11_hi = hold_rate;
    } else {
      v_lo = std::min(speed, hold_shift);
      v_hi = std::max(speed, hold_shift);
      a11_lo = std::min(1.0, hold_rate);
      a11_hi = std::max(1.0, hold_rate);
    }
    Eigen::Matrix2d Alo, Ahi;
    Alo << a11_lo, 0, 0, contraction;
    Ahi << a11_hi, 0, 0, contraction;
    return relaxation::affine_uncertain(Alo, Ahi, Eigen::Vector2d(v_lo, 0.5 * al),
                                        Eigen::Vector2d(v_hi, 0.5 * ah), r);
  };
  b.nominal = [=](const Eigen::VectorXd& x, double a) {
    Eigen::VectorXd y(2);
    bool in_zone = x[0] >= zone_lo && x[0] <= zone_hi;
    double alat = in_zone ? a_lo + a * (a_hi - a_lo) : 0.0;
    if (x[0] < hold_from)
      y[0] = x[0] + speed;
    else
      y[0] = hold_rate * x[0] + hold_shift;
    y[1] = contraction * x[1] + 0.5 * alat;
    return y;
  };
  b.noise = noise_model("vehicle", p).sample;
  return b;
}

// Neural-network dynamics model loaded from a weight file.
inline Benchmark pendulum_nndm(const std::string& network_path, const Params& p = {}) {
  Benchmark b;
  b.name = "pendulum-nndm";
  b.dim = 2;
  double ang = detail::get(p, "angle_halfwidth", 1.0);
  double vel = detail::get(p, "rate_halfwidth", 1.0);
  b.safe_set = make_box({-ang, -vel}, {ang, vel});
  b.initial_set = make_box({-detail::get(p, "init_halfwidth", 0.2),
                            -detail::get(p, "init_halfwidth", 0.2)},
                           {detail::get(p, "init_halfwidth", 0.2),
                            detail::get(p, "init_halfwidth", 0.2)});
  b.grid = {24, 20};
  b.T = 10;
  b.epsilon = detail::get(p, "epsilon", 0.005);
  auto graph = std::make_shared<relaxation::ComputationGraph>(relaxation::load_network(network_path));
  b.relax = [graph](const Box& r) { return relaxation::relax_region(*graph, r); };
  b.nominal = [graph](const Eigen::VectorXd& x, double) { return graph->evaluate(x); };
  b.noise = noise_model("pendulum-nndm", p).sample;
  b.validation_alphas = {0.0};
  return b;
}

// Unicycle with fixed speed v = 1 and step tau = 0.1; heading noise only,
// N(60 pi/180, 0.1^2) on the third coordinate.
inline Benchmark dubins(const Params& p = {}) {
  Benchmark b;
  b.name = "dubins";
  b.dim = 3;
  double xy = detail::get(p, "xy_halfwidth", 1.5);
  double phi_lo = detail::get(p, "phi_min", -0.5);
  double phi_hi = detail::get(p, "phi_max", 13.0);
  b.safe_set = make_box({-xy, -xy, phi_lo}, {xy, xy, phi_hi});
  b.initial_set = make_box({-0.1, -0.1, 0.0}, {0.1, 0.1, 0.3});
  b.grid = {10, 10, 10};
  b.T = 10;
  b.epsilon = detail::get(p, "epsilon", 0.01);
  double tau = detail::get(p, "tau", 0.1);
  double speed = detail::get(p, "speed", 1.0);

  auto graph = std::make_shared<relaxation::ComputationGraph>();
  {
    int in = graph->add_input(3);
    Eigen::MatrixXd sel_phi(1, 3);
    sel_phi << 0, 0, 1;
    int phi = graph->add_affine(in, sel_phi, Eigen::VectorXd::Zero(1));
    int c = graph->add_elementwise(phi, relaxation::ElemKind::Cos);
    int s = graph->add_elementwise(phi, relaxation::ElemKind::Sin);
    Eigen::MatrixXd lift_x(3, 1), lift_y(3, 1);
    lift_x << speed * tau, 0, 0;
    lift_y << 0, speed * tau, 0;
    int bx = graph->add_affine(c, lift_x, Eigen::VectorXd::Zero(3));
    int by = graph->add_affine(s, lift_y, Eigen::VectorXd::Zero(3));
    graph->add_sum({in, bx, by});
  }
  b.relax = [graph](const Box& r) { return relaxation::relax_region(*graph, r); };
  b.nominal = [graph](const Eigen::VectorXd& x, double) { return graph->evaluate(x); };
  b.noise = noise_model("dubins", p).sample;
  b.validation_alphas = {0.0};
  return b;
}

inline Benchmark make(const std::string& name, const Params& p = {},
                      const std::string& network_path = "") {
  if (name == "linear1d") return linear1d(p);
  if (name == "drone") return drone(p);
  if (name == "vehicle") return vehicle(p);
  if (name == "dubins") return dubins(p);
  if (name == "pendulum-nndm") {
    if (network_path.empty())
      throw std::invalid_argument("pendulum-nndm requires a network weight file");
    return pendulum_nndm(network_path, p);
  }
  throw std::invalid_argument("unknown benchmark '" + name + "'");
}

inline bool known(const std::string& name) {
  return name == "linear1d" || name == "drone" || name == "vehicle" || name == "dubins" ||
         name == "pendulum-nndm";
}

}  // namespace sbcert::benchmarks
