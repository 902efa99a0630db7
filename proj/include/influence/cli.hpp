#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "influence/models.hpp"
#include "influence/oracle.hpp"

namespace influence::cli {

struct AnalysisConfig {
  ModelKind model = ModelKind::linear_regression;
  Family family = Family::gaussian;
  CovarianceStructure covariance{CovarianceStructure::Tag::scaled_identity};
  VectorXd xi_init;
  std::string scheme = "case_weight";
  std::string objective = "ld_full";
  double alpha = 0.0;
  bool auto_rescale = true;
  std::uint64_t seed = 20240201;
  int mc_draws = 200000;
  std::string out_dir = ".";
  VectorXd explanatory_scale;  // empty selects all-ones
  int loglinear_m = 2;
  std::string corrupt;  // verify self-test hook, e.g. "gamma"
};

/// Flat key = value file; '#' starts a comment. Unknown keys are rejected.
AnalysisConfig load_config(const std::string& path);
/// Apply one key/value pair (command-line flags win over the file).
void set_config_key(AnalysisConfig& cfg, const std::string& key, const std::string& value);

/// Read the input CSV (header row; columns cluster_id, y, optional obs_index,
/// x1..xq, d), grouping rows by cluster_id in file order.
ClusteredDataset ingest(const std::string& path);

struct IngestSummary {
  int n = 0;
  int total = 0;
  int min_m = 0;
  int max_m = 0;
  int q1 = 0;
};
IngestSummary summarize(const ClusteredDataset& data);

struct AnalyzeResult {
  InfluenceReport report;
  AppropriatenessVerdict raw_verdict;
  std::optional<AppropriatenessVerdict> rescaled_verdict;
  bool used_rescaled = false;
  std::string scheme_used;
  std::vector<std::string> files_written;
};

/// The four-step pipeline: fit, build the scheme, check appropriateness
/// (rescaling when allowed and needed), compute the influence report, and
/// write report.csv / geometry.csv / eigen.csv / index_plot.svg.
AnalyzeResult analyze(const AnalysisConfig& cfg, const ClusteredDataset& data);

struct VerifyRow {
  std::string check;
  double observed = 0.0;
  double tolerance = 0.0;
  bool pass = false;
  std::string note;
};
struct VerifyResult {
  std::vector<VerifyRow> rows;
  bool all_pass = true;
};

/// Closed-form-vs-oracle cross checks for the configured scheme.
VerifyResult verify(const AnalysisConfig& cfg, const ClusteredDataset& data);

struct SimulateConfig {
  int clusters = 30;
  int min_m = 3;
  int max_m = 12;
  int outlier_cluster = 0;  // 1-based index of the inflated cluster; 0 disables
  double inflate = 5.0;
  std::uint64_t seed = 20240201;
};

/// Synthetic clustered data with a variance function in the visit time d and
/// linear autocorrelation, optionally with one cluster's residual scale
/// inflated.
ClusteredDataset simulate(const SimulateConfig& cfg);

void write_dataset_csv(const ClusteredDataset& data, const std::string& path);

}  // namespace influence::cli
