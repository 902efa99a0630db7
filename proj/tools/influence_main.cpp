#include <cstdio>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "influence/cli.hpp"

namespace {

using influence::ClusteredDataset;
using influence::Error;
using namespace influence::cli;

void print_summary(const IngestSummary& s) {
  std::cout << "data: n=" << s.n << " clusters, M=" << s.total << " observations, m in ["
            << s.min_m << ", " << s.max_m << "], q1=" << s.q1 << "\n";
}

void print_verdict(const char* tag, const influence::AppropriatenessVerdict& v) {
  std::printf("%s: appropriate=%s  c_hat=%.6g  min_eig=%.6g  max_offdiag_corr=%.6g\n", tag,
              v.is_appropriate ? "yes" : "no", v.c_hat, v.min_eigenvalue, v.max_offdiag_abs_corr);
}

int run_analyze(const AnalysisConfig& cfg, const std::string& data_path) {
  ClusteredDataset data = ingest(data_path);
  print_summary(summarize(data));
  AnalyzeResult res = analyze(cfg, data);
  print_verdict("raw verdict", res.raw_verdict);
  if (res.rescaled_verdict) print_verdict("rescaled verdict", *res.rescaled_verdict);
  std::cout << "scheme used: " << res.scheme_used << "\n";
  std::cout << "fi_max = " << res.report.fi_max << "\n";
  if (res.report.eigenvalues.size() > 0)
    std::cout << "leading eigenvalue = " << res.report.eigenvalues[0] << "\n";
  for (const auto& f : res.files_written) std::cout << "wrote " << f << "\n";
  return 0;
}

int run_verify(const AnalysisConfig& cfg, const std::string& data_path) {
  ClusteredDataset data = ingest(data_path);
  VerifyResult res = verify(cfg, data);
  std::printf("%-40s %12s %12s  %s\n", "check", "observed", "tolerance", "status");
  for (const auto& row : res.rows) {
    std::printf("%-40s %12.4g %12.4g  %s%s%s\n", row.check.c_str(), row.observed, row.tolerance,
                row.pass ? "pass" : "FAIL", row.note.empty() ? "" : "  ", row.note.c_str());
  }
  if (!res.all_pass) {
    std::cerr << "verification failed\n";
    return 3;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"local influence analysis on perturbation manifolds"};
  app.require_subcommand(1);

  std::string data_path, config_path, out_dir;
  std::optional<std::string> scheme, objective;
  std::optional<double> alpha;
  std::optional<std::uint64_t> seed;
  bool no_rescale = false;

  auto* analyze_cmd = app.add_subcommand("analyze", "run the influence pipeline");
  analyze_cmd->add_option("--data", data_path, "input CSV")->required();
  analyze_cmd->add_option("--config", config_path, "flat key=value config file");
  analyze_cmd->add_option("--scheme", scheme, "perturbation scheme");
  analyze_cmd->add_option("--objective", objective, "objective function");
  analyze_cmd->add_option("--alpha", alpha, "connection parameter");
  analyze_cmd->add_flag("--no-rescale", no_rescale, "keep the raw scheme even if inappropriate");
  analyze_cmd->add_option("--seed", seed, "random seed");
  analyze_cmd->add_option("--out", out_dir, "output directory");

  auto* verify_cmd = app.add_subcommand("verify", "closed-form vs oracle cross checks");
  verify_cmd->add_option("--data", data_path, "input CSV")->required();
  verify_cmd->add_option("--config", config_path, "flat key=value config file");
  verify_cmd->add_option("--scheme", scheme, "perturbation scheme");
  verify_cmd->add_option("--seed", seed, "random seed");
  std::string corrupt;
  verify_cmd->add_option("--self-test-corrupt", corrupt,
                         "negative-control hook; corrupts the named tensor");

  auto* sim_cmd = app.add_subcommand("simulate", "generate synthetic clustered data");
  SimulateConfig sim;
  std::string sim_out = "simulated.csv";
  sim_cmd->add_option("--clusters", sim.clusters, "number of clusters");
  sim_cmd->add_option("--min-m", sim.min_m, "smallest cluster size");
  sim_cmd->add_option("--max-m", sim.max_m, "largest cluster size");
  sim_cmd->add_option("--outlier-cluster", sim.outlier_cluster, "1-based inflated cluster, 0=none");
  sim_cmd->add_option("--inflate", sim.inflate, "residual scale factor for the outlier cluster");
  sim_cmd->add_option("--seed", sim.seed, "random seed");
  sim_cmd->add_option("--out", sim_out, "output CSV path");

  CLI11_PARSE(app, argc, argv);

  try {
    if (sim_cmd->parsed()) {
      if (seed) sim.seed = *seed;
      ClusteredDataset data = simulate(sim);
      write_dataset_csv(data, sim_out);
      print_summary(summarize(data));
      std::cout << "wrote " << sim_out << "\n";
      return 0;
    }

    AnalysisConfig cfg;
    if (!config_path.empty()) cfg = load_config(config_path);
    if (scheme) cfg.scheme = *scheme;
    if (objective) cfg.objective = *objective;
    if (alpha) cfg.alpha = *alpha;
    if (no_rescale) cfg.auto_rescale = false;
    if (seed) cfg.seed = *seed;
    if (!out_dir.empty()) cfg.out_dir = out_dir;
    if (!corrupt.empty()) cfg.corrupt = corrupt;

    if (analyze_cmd->parsed()) return run_analyze(cfg, data_path);
    if (verify_cmd->parsed()) return run_verify(cfg, data_path);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return e.exit_code();
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
  return 0;
}
