// Command-line front end: certify a system from a config and a noise sample
// file, validate a certificate by Monte Carlo simulation, or generate noise
// samples for a built-in benchmark.

#include <CLI11.hpp>

#include "sbcert/runner.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Piecewise-affine stochastic barrier certificates from noise samples"};
  app.require_subcommand(1);

  std::string config_path, samples_path, out_path, certificate_path, benchmark;
  long n = 0, seed = 0, trials = 100000;
  double beta = 0.0;
  long samples_count = 0;
  int workers = 1;

  auto* cert = app.add_subcommand("certify", "synthesize a barrier and emit a certificate");
  cert->add_option("--config", config_path, "run configuration file")->required();
  cert->add_option("--samples", samples_path, "noise sample CSV")->required();
  auto* beta_opt = cert->add_option("--beta", beta, "confidence complement target");
  auto* count_opt =
      cert->add_option("--samples-count", samples_count, "use exactly this many rows");
  beta_opt->excludes(count_opt);
  cert->add_option("--out", out_path, "report path (stdout when omitted)");
  cert->add_option("--workers", workers, "worker threads")->check(CLI::PositiveNumber);

  auto* val = app.add_subcommand("validate", "Monte Carlo check of a certificate");
  val->add_option("--config", config_path, "run configuration file")->required();
  val->add_option("--certificate", certificate_path, "certificate report JSON")->required();
  val->add_option("--trials", trials, "trajectories per start point")
      ->check(CLI::PositiveNumber);
  val->add_option("--seed", seed, "simulation seed");
  val->add_option("--out", out_path, "report path (stdout when omitted)");
  val->add_option("--workers", workers, "worker threads")->check(CLI::PositiveNumber);

  auto* gen = app.add_subcommand("gen-samples", "draw noise samples for a benchmark");
  gen->add_option("--benchmark", benchmark, "builtin benchmark name")->required();
  gen->add_option("--n", n, "number of samples")->required();
  gen->add_option("--seed", seed, "sampler seed");
  gen->add_option("--out", out_path, "output CSV path")->required();

  CLI11_PARSE(app, argc, argv);

  if (cert->parsed()) {
    sbcert::runner::CertifyOverrides ov;
    if (*beta_opt) ov.beta = beta;
    if (*count_opt) ov.samples_count = samples_count;
    ov.workers = workers;
    return sbcert::runner::run_certify(config_path, samples_path, out_path, ov);
  }
  if (val->parsed())
    return sbcert::runner::run_validate(config_path, certificate_path, trials, seed, out_path,
                                        workers);
  if (gen->parsed()) return sbcert::runner::run_gen_samples(benchmark, n, seed, out_path);
  return 1;
}
