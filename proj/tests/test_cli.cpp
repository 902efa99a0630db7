#include <doctest.h>

#include <cstdio>
#include <fstream>
#include <sstream>

#include "fixtures.hpp"
#include "influence/cli.hpp"

using namespace influence;
using namespace influence::cli;
using doctest::Approx;

namespace {

std::string write_temp(const std::string& name, const std::string& content) {
  const std::string path = "/tmp/influence_test_" + name;
  std::ofstream out(path);
  out << content;
  return path;
}

std::string slurp(const std::string& path) {
  std::ifstream in(path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("ingest") {
  SUBCASE("rows group by cluster_id in file order") {
    const std::string path = write_temp(
        "g1.csv", "cluster_id,y\nA,1.0\nA,2.0\nB,3.0\n");
    ClusteredDataset data = ingest(path);
    IngestSummary s = summarize(data);
    CHECK(s.n == 2);
    CHECK(s.total == 3);
    CHECK(data.clusters[0].id == "A");
    CHECK(data.clusters[0].m() == 2);
    CHECK(data.clusters[1].m() == 1);
    CHECK(data.clusters[0].y[1] == Approx(2.0));
  }
  SUBCASE("fixture regression file echoes its schema") {
    ClusteredDataset made = fixtures::regression_fixture();
    const std::string path = "/tmp/influence_test_fixture.csv";
    write_dataset_csv(made, path);
    ClusteredDataset back = ingest(path);
    IngestSummary s = summarize(back);
    CHECK(s.total == 10);
    CHECK(s.q1 == 3);
    CHECK((back.stacked_y() - made.stacked_y()).cwiseAbs().maxCoeff() < 1e-10);
  }
  SUBCASE("blank response cell names the row") {
    const std::string path = write_temp("g2.csv", "cluster_id,y\nA,1.0\nA,\nB,3.0\n");
    try {
      ingest(path);
      FAIL("expected NonNumericCell");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::non_numeric_cell);
      CHECK(std::string(e.what()).find("row 3") != std::string::npos);
      CHECK(e.exit_code() == 2);
    }
  }
  SUBCASE("missing mandatory columns") {
    const std::string path = write_temp("g3.csv", "id,y\nA,1.0\n");
    try {
      ingest(path);
      FAIL("expected MissingColumn");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::missing_column);
    }
  }
}

TEST_CASE("config parsing and overrides") {
  const std::string path = write_temp("c1.cfg",
                                      "# comment\n"
                                      "model = linear_mixed\n"
                                      "covariance = compound_symmetry\n"
                                      "scheme = lmm_cov\n"
                                      "objective = ld_full\n"
                                      "alpha = 0.5\n"
                                      "auto_rescale = false\n"
                                      "seed = 99\n");
  AnalysisConfig cfg = load_config(path);
  CHECK(cfg.model == ModelKind::linear_mixed);
  CHECK(cfg.scheme == "lmm_cov");
  CHECK(cfg.alpha == Approx(0.5));
  CHECK_FALSE(cfg.auto_rescale);
  CHECK(cfg.seed == 99);
  // flags win over the file
  set_config_key(cfg, "scheme", "lmm_mean_shift");
  CHECK(cfg.scheme == "lmm_mean_shift");
  CHECK_THROWS_AS(set_config_key(cfg, "nonsense", "1"), Error);
  CHECK_THROWS_AS(load_config("/tmp/does_not_exist.cfg"), Error);
}

TEST_CASE("analyze pipeline") {
  ClusteredDataset data = fixtures::lmm_fixture();
  AnalysisConfig cfg;
  cfg.model = ModelKind::linear_mixed;
  cfg.covariance = CovarianceStructure(CovarianceStructure::Tag::compound_symmetry);
  cfg.scheme = "lmm_cov";
  cfg.objective = "ld_full";
  cfg.out_dir = "/tmp";

  SUBCASE("auto rescale records both verdicts and uses the appropriate scheme") {
    AnalyzeResult res = analyze(cfg, data);
    CHECK_FALSE(res.raw_verdict.is_appropriate);
    REQUIRE(res.rescaled_verdict.has_value());
    CHECK(res.rescaled_verdict->is_appropriate);
    CHECK(res.used_rescaled);
    CHECK(res.scheme_used == "lmm_cov_appropriate");
    // report.csv has one data row per perturbation coordinate
    std::ifstream in("/tmp/report.csv");
    std::string line;
    int rows = 0, comments = 0;
    bool header_seen = false;
    while (std::getline(in, line)) {
      if (line.rfind("#", 0) == 0) {
        ++comments;
      } else if (!header_seen) {
        header_seen = true;
        CHECK(line == "cluster_id,FI,SI,SSI,C,B,flag_top");
      } else {
        ++rows;
      }
    }
    CHECK(rows == 3);
    CHECK(comments >= 2);
  }

  SUBCASE("reruns are byte-identical") {
    analyze(cfg, data);
    const std::string a_rep = slurp("/tmp/report.csv");
    const std::string a_geo = slurp("/tmp/geometry.csv");
    const std::string a_eig = slurp("/tmp/eigen.csv");
    const std::string a_svg = slurp("/tmp/index_plot.svg");
    analyze(cfg, data);
    CHECK(slurp("/tmp/report.csv") == a_rep);
    CHECK(slurp("/tmp/geometry.csv") == a_geo);
    CHECK(slurp("/tmp/eigen.csv") == a_eig);
    CHECK(slurp("/tmp/index_plot.svg") == a_svg);
    CHECK(a_svg.find("<svg") == 0);
  }

  SUBCASE("incompatible scheme/model pairs are rejected before fitting") {
    AnalysisConfig bad = cfg;
    bad.scheme = "reg_variance";
    CHECK_THROWS_AS(analyze(bad, data), Error);
    bad = cfg;
    bad.objective = "neg_rss";
    CHECK_THROWS_AS(analyze(bad, data), Error);
  }

  SUBCASE("per-observation schemes carry (cluster, observation) labels") {
    AnalysisConfig ms = cfg;
    ms.scheme = "lmm_mean_shift";
    AnalyzeResult res = analyze(ms, data);
    CHECK(res.report.labels.size() == 19);
    std::ifstream in("/tmp/report.csv");
    std::string line;
    std::getline(in, line);
    std::getline(in, line);
    std::getline(in, line);
    CHECK(line == "cluster_id,obs_index,FI,SI,SSI,C,B,flag_top");
  }

  SUBCASE("singular metric halts with remediation advice and code 3") {
    ClusteredDataset rdata = fixtures::regression_fixture();
    AnalysisConfig full;
    full.model = ModelKind::linear_regression;
    full.scheme = "explanatory_full";
    full.objective = "ld_full";
    full.out_dir = "/tmp";
    try {
      analyze(full, rdata);
      FAIL("expected SingularMetric");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::singular_metric);
      CHECK(e.exit_code() == 3);
      CHECK(std::string(e.what()).find("explanatory_diag") != std::string::npos);
    }
  }
}

TEST_CASE("verify pipeline") {
  ClusteredDataset data = fixtures::regression_fixture();
  AnalysisConfig cfg;
  cfg.model = ModelKind::linear_regression;
  cfg.scheme = "reg_variance";
  cfg.objective = "neg_rss";
  cfg.mc_draws = 30000;
  cfg.seed = 6;

  SUBCASE("all cross-checks pass on the error-variance scheme") {
    VerifyResult res = verify(cfg, data);
    CHECK(res.rows.size() >= 4);
    for (const auto& row : res.rows) CHECK(row.pass);
    CHECK(res.all_pass);
  }

  SUBCASE("corrupted connection is caught and named") {
    AnalysisConfig bad = cfg;
    bad.corrupt = "gamma";
    VerifyResult res = verify(bad, data);
    CHECK_FALSE(res.all_pass);
    bool found = false;
    for (const auto& row : res.rows)
      if (!row.pass && row.check.find("GammaAlpha") != std::string::npos) found = true;
    CHECK(found);
  }
}

TEST_CASE("simulate") {
  SimulateConfig cfg;
  cfg.clusters = 6;
  cfg.min_m = 2;
  cfg.max_m = 5;
  cfg.outlier_cluster = 3;
  cfg.inflate = 5.0;
  cfg.seed = 31;

  ClusteredDataset a = simulate(cfg);
  ClusteredDataset b = simulate(cfg);
  CHECK(a.n() == 6);
  CHECK((a.stacked_y() - b.stacked_y()).cwiseAbs().maxCoeff() == 0.0);  // deterministic
  CHECK(a.q1() == 3);
  CHECK(a.has_d());
  for (const auto& c : a.clusters) {
    CHECK(c.m() >= 2);
    CHECK(c.m() <= 5);
  }

  // the inflated cluster stands out in raw residual scale
  ModelFit fit = fit_model(a, ModelKind::linear_regression);
  double m3 = 0.0, rest = 0.0;
  for (std::size_t i = 0; i < a.clusters.size(); ++i) {
    const double rms = fit.residuals[i].norm() / std::sqrt(a.clusters[i].m());
    if (i == 2)
      m3 = rms;
    else
      rest = std::max(rest, rms);
  }
  CHECK(m3 > rest);

  SimulateConfig other = cfg;
  other.seed = 32;
  ClusteredDataset c = simulate(other);
  CHECK((a.stacked_y() - c.stacked_y()).cwiseAbs().maxCoeff() > 0.0);

  SimulateConfig bad = cfg;
  bad.outlier_cluster = 99;
  CHECK_THROWS_AS(simulate(bad), Error);
}
