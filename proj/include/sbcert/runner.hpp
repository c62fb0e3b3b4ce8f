#pragma once

// Entry points behind the CLI subcommands: certification runs producing a
// JSON report, Monte Carlo validation of a report, and sample generation.

#include <json.hpp>

#include <fstream>
#include <iostream>

#include "sbcert/config.hpp"
#include "sbcert/synthesis.hpp"
#include "sbcert/validation.hpp"

namespace sbcert::runner {

using nlohmann::json;

struct CertifyOverrides {
  std::optional<double> beta;
  std::optional<long> samples_count;
  int workers = 1;
};

inline json certificate_to_json(const synthesis::Certificate& c) {
  json j;
  j["zeta"] = c.zeta_raw;
  j["zeta_clamped"] = c.zeta_clamped;
  j["vacuous"] = c.vacuous();
  j["gamma"] = c.gamma;
  j["c"] = c.c;
  j["T"] = c.T;
  j["beta"] = c.beta;
  j["epsilon"] = c.epsilon;
  j["delta"] = c.delta;
  j["M"] = c.M;
  j["N"] = c.N;
  j["ell"] = c.ell;
  j["d"] = c.d;
  j["dim"] = c.dim;
  j["hull_size"] = c.hull_size;
  j["solver"] = {{"status", lp::status_name(c.lp_status)},
                 {"iterations", c.lp_iterations},
                 {"path", c.lp_path}};
  j["counts"] = {{"triples", c.stats.n_triples},
                 {"rows", c.stats.n_rows},
                 {"vars", c.stats.n_vars},
                 {"primal_vars", c.stats.n_primal},
                 {"rows_nonneg", c.stats.rows_nonneg},
                 {"rows_upper", c.stats.rows_upper},
                 {"rows_initial", c.stats.rows_initial},
                 {"rows_onestep", c.stats.rows_onestep}};
  j["timing"] = {{"relaxation", c.t_relax},
                 {"triples", c.t_triples},
                 {"build", c.t_build},
                 {"solve", c.t_solve},
                 {"total", c.t_total}};
  j["fingerprint"] = c.fingerprint;
  return j;
}

inline synthesis::CertifyResult certify_from_config(const config::RunConfig& cfg,
                                                    const scenario::NoiseDataset& D,
                                                    const CertifyOverrides& ov = {}) {
  auto bench = cfg.make_benchmark();
  synthesis::CertifyInputs in;
  in.relax = bench.relax;
  in.safe_set = cfg.safe_set;
  in.initial_set = cfg.initial_set;
  in.grid = cfg.grid;
  in.T = cfg.T;
  in.epsilon = cfg.epsilon;
  in.M = cfg.M;
  in.bisection_depth = cfg.bisection_depth;
  in.workers = ov.workers;
  in.beta_target = ov.beta ? ov.beta : cfg.beta;
  in.sample_count = ov.samples_count ? ov.samples_count : cfg.samples_count;
  in.fingerprint_payload = config::serialize_tree(cfg.raw);
  return synthesis::certify(in, D);
}

// exit codes: 0 nontrivial certificate, 2 vacuous, 1 error
inline int run_certify(const std::string& config_path, const std::string& samples_path,
                       const std::string& out_path, const CertifyOverrides& ov = {},
                       std::ostream& log = std::cerr) {
  try {
    auto cfg = config::load_run_config(config_path);
    auto D = scenario::load_csv(samples_path);
    if (D.dim() != cfg.safe_set.dim())
      throw std::runtime_error("samples have " + std::to_string(D.dim()) +
                               " columns, system is " + std::to_string(cfg.safe_set.dim()) +
                               "-dimensional");
    auto res = certify_from_config(cfg, D, ov);

    json report;
    report["system"] = cfg.system;
    report["config"] = config::serialize_tree(cfg.raw);
    report["samples_file"] = samples_path;
    report["settings"] = {{"epsilon", res.cert.epsilon},
                          {"M", res.cert.M},
                          {"bisection_depth", cfg.bisection_depth},
                          {"T", cfg.T},
                          {"grid", cfg.grid},
                          {"workers", ov.workers}};
    report["certificate"] = certificate_to_json(res.cert);
    if (!out_path.empty()) {
      std::ofstream out(out_path);
      if (!out) throw std::runtime_error("cannot write report to " + out_path);
      out << report.dump(2) << "\n";
    } else {
      std::cout << report.dump(2) << "\n";
    }
    log << "zeta = " << res.cert.zeta_raw << " (gamma = " << res.cert.gamma
        << ", c = " << res.cert.c << ", N = " << res.cert.N << ", beta = " << res.cert.beta
        << ")\n";
    return res.cert.vacuous() ? 2 : 0;
  } catch (const std::exception& e) {
    log << "error: " << e.what() << "\n";
    return 1;
  }
}

inline int run_validate(const std::string& config_path, const std::string& certificate_path,
                        long trials, long seed, const std::string& out_path = "",
                        int workers = 1, std::ostream& log = std::cerr) {
  try {
    auto cfg = config::load_run_config(config_path);
    std::ifstream cin_(certificate_path);
    if (!cin_) throw std::runtime_error("cannot open certificate " + certificate_path);
    json report = json::parse(cin_);
    double zeta_clamped = report.at("certificate").at("zeta_clamped").get<double>();

    auto bench = cfg.make_benchmark();
    validation::SimOptions so;
    so.T = cfg.T;
    so.trials = trials;
    so.seed = static_cast<std::uint64_t>(seed);
    so.workers = workers;

    double worst = 1.0;
    json per_alpha = json::array();
    for (double a : bench.validation_alphas) {
      auto sim = validation::simulate_safety(
          [&](const Eigen::VectorXd& x) { return bench.nominal(x, a); }, bench.noise,
          cfg.initial_set, cfg.safe_set, so);
      per_alpha.push_back({{"alpha", a},
                           {"empirical", sim.empirical},
                           {"wilson99", {sim.wilson_lo, sim.wilson_hi}}});
      worst = std::min(worst, sim.empirical);
    }

    json out;
    out["system"] = cfg.system;
    out["trials"] = trials;
    out["seed"] = seed;
    out["certified_zeta_clamped"] = zeta_clamped;
    out["empirical_worst"] = worst;
    out["per_alpha"] = per_alpha;
    out["sound"] = worst >= zeta_clamped;
    if (!out_path.empty()) {
      std::ofstream o(out_path);
      o << out.dump(2) << "\n";
    } else {
      std::cout << out.dump(2) << "\n";
    }
    log << "empirical = " << worst << " vs certified " << zeta_clamped
        << (worst >= zeta_clamped ? " (sound)" : " (VIOLATION)") << "\n";
    return worst >= zeta_clamped ? 0 : 1;
  } catch (const std::exception& e) {
    log << "error: " << e.what() << "\n";
    return 1;
  }
}

inline int run_gen_samples(const std::string& benchmark, long n, long seed,
                           const std::string& out_path, std::ostream& log = std::cerr) {
  try {
    if (n < 1) throw std::runtime_error("sample count must be positive");
    auto model = benchmarks::noise_model(benchmark);
    util::CounterRng rng{static_cast<std::uint64_t>(seed), 0x6e6f697365ULL};
    Eigen::MatrixXd s(n, model.dim);
    for (long i = 0; i < n; ++i) s.row(i) = model.sample(rng, static_cast<std::uint64_t>(i));
    auto D = scenario::make_dataset(std::move(s), benchmark);
    scenario::save_csv(D, out_path,
                       benchmark + " noise samples, n=" + std::to_string(n) +
                           ", seed=" + std::to_string(seed));
    log << "wrote " << n << " samples to " << out_path << "\n";
    return 0;
  } catch (const std::exception& e) {
    log << "error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace sbcert::runner
