#include "influence/cli.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include "influence/geometry.hpp"
#include "influence/linalg.hpp"

namespace influence::cli {
namespace {

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == sep) {
      out.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  out.push_back(cur);
  return out;
}

VectorXd parse_vector(const std::string& s) {
  const auto parts = split(s, ',');
  VectorXd v(static_cast<int>(parts.size()));
  for (std::size_t i = 0; i < parts.size(); ++i) {
    try {
      v[static_cast<int>(i)] = std::stod(trim(parts[i]));
    } catch (const std::exception&) {
      fail(ErrorKind::incompatible_config, "cannot parse number '" + parts[i] + "'");
    }
  }
  return v;
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.12g", v);
  return buf;
}

ModelKind parse_model(const std::string& s) {
  if (s == "iid_parametric") return ModelKind::iid_parametric;
  if (s == "location_scale") return ModelKind::location_scale;
  if (s == "linear_regression") return ModelKind::linear_regression;
  if (s == "linear_mixed") return ModelKind::linear_mixed;
  fail(ErrorKind::incompatible_config, "unknown model kind '" + s + "'");
}

Family parse_family(const std::string& s) {
  if (s == "gaussian") return Family::gaussian;
  if (s == "logistic") return Family::logistic;
  if (s == "exponential") return Family::exponential;
  fail(ErrorKind::incompatible_config, "unknown family '" + s + "'");
}

const std::map<std::string, std::vector<ModelKind>>& scheme_kind_table() {
  static const std::map<std::string, std::vector<ModelKind>> table = {
      {"case_weight",
       {ModelKind::iid_parametric, ModelKind::location_scale, ModelKind::linear_regression}},
      {"ls_variance", {ModelKind::location_scale}},
      {"ls_response", {ModelKind::location_scale}},
      {"reg_variance", {ModelKind::linear_regression}},
      {"explanatory_full", {ModelKind::linear_regression}},
      {"explanatory_diag", {ModelKind::linear_regression}},
      {"loglinear", {ModelKind::iid_parametric}},
      {"lmm_cov", {ModelKind::linear_mixed}},
      {"lmm_cluster_shift", {ModelKind::linear_mixed}},
      {"lmm_mean_shift", {ModelKind::linear_mixed}},
  };
  return table;
}

const std::map<std::string, std::vector<std::string>>& scheme_objective_table() {
  static const std::map<std::string, std::vector<std::string>> table = {
      {"case_weight", {"ld_full", "ld_beta", "ld_xi", "loglik_ratio"}},
      {"ls_variance", {"ld_full", "ld_beta", "ld_xi", "loglik_ratio"}},
      {"ls_response", {"ld_full", "ld_beta", "ld_xi", "loglik_ratio"}},
      {"reg_variance", {"neg_rss", "ld_full", "ld_beta", "ld_xi", "loglik_ratio"}},
      {"explanatory_full", {"ld_full", "loglik_ratio"}},
      {"explanatory_diag", {"ld_full", "ld_beta", "ld_xi", "loglik_ratio"}},
      {"loglinear", {"loglik_ratio"}},
      {"lmm_cov", {"ld_full", "ld_beta", "ld_xi", "loglik_ratio"}},
      {"lmm_cluster_shift", {"ld_full", "ld_beta", "ld_xi", "loglik_ratio"}},
      {"lmm_mean_shift", {"ld_full", "ld_beta", "ld_xi", "loglik_ratio"}},
  };
  return table;
}

void validate_config(const AnalysisConfig& cfg) {
  const auto& kinds = scheme_kind_table();
  auto it = kinds.find(cfg.scheme);
  if (it == kinds.end()) fail(ErrorKind::incompatible_config, "unknown scheme '" + cfg.scheme + "'");
  if (std::find(it->second.begin(), it->second.end(), cfg.model) == it->second.end())
    fail(ErrorKind::incompatible_config, "scheme '" + cfg.scheme + "' is not defined for model kind '" +
                                             std::string(model_kind_name(cfg.model)) + "'");
  const auto& objs = scheme_objective_table().at(cfg.scheme);
  if (std::find(objs.begin(), objs.end(), cfg.objective) == objs.end())
    fail(ErrorKind::incompatible_config,
         "objective '" + cfg.objective + "' is not available for scheme '" + cfg.scheme + "'");
  if (cfg.model == ModelKind::iid_parametric && cfg.scheme == "case_weight" &&
      cfg.objective.rfind("ld", 0) == 0)
    fail(ErrorKind::incompatible_config,
         "likelihood displacement under case weighting needs a regression-type fit");
}

}  // namespace

void set_config_key(AnalysisConfig& cfg, const std::string& key, const std::string& value) {
  if (key == "model") cfg.model = parse_model(value);
  else if (key == "family") cfg.family = parse_family(value);
  else if (key == "covariance") cfg.covariance = CovarianceStructure::from_name(value);
  else if (key == "xi_init") cfg.xi_init = parse_vector(value);
  else if (key == "scheme") cfg.scheme = value;
  else if (key == "objective") cfg.objective = value;
  else if (key == "alpha") cfg.alpha = std::stod(value);
  else if (key == "auto_rescale") cfg.auto_rescale = (value == "true" || value == "1");
  else if (key == "seed") cfg.seed = std::stoull(value);
  else if (key == "mc_draws") cfg.mc_draws = std::stoi(value);
  else if (key == "out") cfg.out_dir = value;
  else if (key == "explanatory_scale") cfg.explanatory_scale = parse_vector(value);
  else if (key == "loglinear_m") cfg.loglinear_m = std::stoi(value);
  else if (key == "corrupt") cfg.corrupt = value;
  else fail(ErrorKind::incompatible_config, "unknown config key '" + key + "'");
}

AnalysisConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::incompatible_config, "cannot open config file '" + path + "'");
  AnalysisConfig cfg;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      fail(ErrorKind::incompatible_config,
           "config line " + std::to_string(lineno) + " is not 'key = value'");
    set_config_key(cfg, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  return cfg;
}

// ---------------------------------------------------------------------------
// Ingestion
// ---------------------------------------------------------------------------

ClusteredDataset ingest(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::missing_column, "cannot open data file '" + path + "'");
  std::string line;
  if (!std::getline(in, line)) fail(ErrorKind::missing_column, "empty data file");
  auto header = split(trim(line), ',');
  for (auto& h : header) h = trim(h);

  auto col = [&](const std::string& name) {
    const auto it = std::find(header.begin(), header.end(), name);
    return it == header.end() ? -1 : static_cast<int>(it - header.begin());
  };
  const int c_cluster = col("cluster_id");
  const int c_y = col("y");
  if (c_cluster < 0) fail(ErrorKind::missing_column, "mandatory column 'cluster_id' is missing");
  if (c_y < 0) fail(ErrorKind::missing_column, "mandatory column 'y' is missing");
  const int c_d = col("d");
  std::vector<int> c_x;
  for (int k = 1;; ++k) {
    const int c = col("x" + std::to_string(k));
    if (c < 0) break;
    c_x.push_back(c);
  }

  struct Row {
    std::string cluster;
    double y;
    std::vector<double> x;
    double d;
  };
  std::vector<Row> rows;
  std::vector<std::string> order;  // cluster ids by first appearance
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    auto cells = split(line, ',');
    if (cells.size() < header.size())
      fail(ErrorKind::non_numeric_cell, "row " + std::to_string(lineno) + " has too few fields");
    auto numeric = [&](int c, const char* what) {
      const std::string cell = trim(cells[static_cast<std::size_t>(c)]);
      try {
        std::size_t used = 0;
        const double v = std::stod(cell, &used);
        if (used != cell.size()) throw std::invalid_argument(cell);
        return v;
      } catch (const std::exception&) {
        fail(ErrorKind::non_numeric_cell, "row " + std::to_string(lineno) + ", column '" +
                                              std::string(what) + "': cannot parse '" + cell + "'");
      }
    };
    Row r;
    r.cluster = trim(cells[static_cast<std::size_t>(c_cluster)]);
    if (r.cluster.empty())
      fail(ErrorKind::empty_cluster, "row " + std::to_string(lineno) + " has an empty cluster_id");
    r.y = numeric(c_y, "y");
    for (std::size_t k = 0; k < c_x.size(); ++k)
      r.x.push_back(numeric(c_x[k], ("x" + std::to_string(k + 1)).c_str()));
    r.d = c_d >= 0 ? numeric(c_d, "d") : 0.0;
    if (std::find(order.begin(), order.end(), r.cluster) == order.end()) order.push_back(r.cluster);
    rows.push_back(std::move(r));
  }
  if (rows.empty()) fail(ErrorKind::empty_cluster, "data file has no rows");

  ClusteredDataset data;
  for (const auto& id : order) {
    Cluster c;
    c.id = id;
    std::vector<const Row*> mine;
    for (const auto& r : rows)
      if (r.cluster == id) mine.push_back(&r);
    const int m = static_cast<int>(mine.size());
    c.y = VectorXd(m);
    c.x = MatrixXd(m, static_cast<int>(c_x.size()));
    if (c_d >= 0) c.d = VectorXd(m);
    for (int j = 0; j < m; ++j) {
      c.y[j] = mine[static_cast<std::size_t>(j)]->y;
      for (std::size_t k = 0; k < c_x.size(); ++k)
        c.x(j, static_cast<int>(k)) = mine[static_cast<std::size_t>(j)]->x[k];
      if (c_d >= 0) c.d[j] = mine[static_cast<std::size_t>(j)]->d;
    }
    data.clusters.push_back(std::move(c));
  }
  data.validate();
  return data;
}

IngestSummary summarize(const ClusteredDataset& data) {
  IngestSummary s;
  s.n = data.n();
  s.total = data.total_obs();
  s.q1 = data.q1();
  s.min_m = data.clusters.empty() ? 0 : data.clusters.front().m();
  s.max_m = s.min_m;
  for (const auto& c : data.clusters) {
    s.min_m = std::min(s.min_m, c.m());
    s.max_m = std::max(s.max_m, c.m());
  }
  return s;
}

// ---------------------------------------------------------------------------
// Serialization
// ---------------------------------------------------------------------------

namespace {

void write_report_csv(const std::string& path, const AnalyzeResult& res, const AnalysisConfig& cfg) {
  const InfluenceReport& rep = res.report;
  const int p = static_cast<int>(rep.basis_fi.size());
  bool per_obs = false;
  for (const auto& l : rep.labels) per_obs = per_obs || l.obs >= 0;

  // heuristic cutoff: |SI| above mean + 2 sd of the |SI| column
  double mean = 0.0, sd = 0.0;
  for (int i = 0; i < p; ++i) mean += std::abs(rep.basis_si[i]);
  mean /= p;
  for (int i = 0; i < p; ++i) {
    const double dev = std::abs(rep.basis_si[i]) - mean;
    sd += dev * dev;
  }
  sd = p > 1 ? std::sqrt(sd / (p - 1)) : 0.0;
  const double cutoff = mean + 2.0 * sd;

  std::ofstream out(path);
  out << "# scheme=" << res.scheme_used << ", objective=" << cfg.objective << ", alpha="
      << fmt(cfg.alpha) << ", appropriate=" << (rep.verdict.is_appropriate ? 1 : 0)
      << ", fi_max=" << fmt(rep.fi_max) << "\n";
  out << "# flag_top is heuristic: 1 when |SI| > mean(|SI|) + 2*sd(|SI|)\n";
  out << (per_obs ? "cluster_id,obs_index," : "cluster_id,") << "FI,SI,SSI,C,B,flag_top\n";
  for (int i = 0; i < p; ++i) {
    const auto& l = rep.labels[static_cast<std::size_t>(i)];
    out << l.cluster;
    if (per_obs) out << "," << (l.obs >= 0 ? std::to_string(l.obs + 1) : "");
    out << "," << fmt(rep.basis_fi[i]) << "," << fmt(rep.basis_si[i]) << ","
        << (rep.ssi_defined ? fmt(rep.basis_ssi[i]) : "NA") << "," << fmt(rep.basis_c[i]) << ","
        << (rep.b_defined ? fmt(rep.basis_b[i]) : "NA") << ","
        << (std::abs(rep.basis_si[i]) > cutoff ? 1 : 0) << "\n";
  }
}

void write_verdict_line(std::ofstream& out, const char* tag, const AppropriatenessVerdict& v) {
  out << "# " << tag << ": appropriate=" << (v.is_appropriate ? 1 : 0) << ", c_hat=" << fmt(v.c_hat)
      << ", min_eigenvalue=" << fmt(v.min_eigenvalue)
      << ", max_offdiag_abs_corr=" << fmt(v.max_offdiag_abs_corr) << "\n";
}

void write_geometry_csv(const std::string& path, const GeometryAtPoint& geom,
                        const AnalyzeResult& res) {
  std::ofstream out(path);
  out << "# metric tensor at omega0, scheme=" << res.scheme_used << ", p=" << geom.G.rows() << "\n";
  write_verdict_line(out, "raw_verdict", res.raw_verdict);
  if (res.rescaled_verdict) write_verdict_line(out, "rescaled_verdict", *res.rescaled_verdict);
  out << "i,j,G_ij\n";
  for (int i = 0; i < geom.G.rows(); ++i)
    for (int j = i; j < geom.G.cols(); ++j)
      if (i == j || geom.G(i, j) != 0.0)
        out << (i + 1) << "," << (j + 1) << "," << fmt(geom.G(i, j)) << "\n";
}

void write_eigen_csv(const std::string& path, const InfluenceReport& rep) {
  std::ofstream out(path);
  const int p = static_cast<int>(rep.eigenvalues.size());
  out << "k,lambda,lambda_hat";
  for (int j = 0; j < p; ++j) out << ",u_" << (j + 1);
  out << "\n";
  for (int k = 0; k < p; ++k) {
    out << (k + 1) << "," << fmt(rep.eigenvalues[k]) << ","
        << (rep.normalized_defined ? fmt(rep.normalized_eigenvalues[k]) : "NA");
    for (int j = 0; j < p; ++j) out << "," << fmt(rep.eigenvectors(j, k));
    out << "\n";
  }
}

void write_index_plot_svg(const std::string& path, const InfluenceReport& rep) {
  const int p = static_cast<int>(rep.basis_fi.size());
  const int width = 640, panel_h = 220, margin = 40;
  const int height = 2 * panel_h + 3 * margin;
  std::ofstream out(path);
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
      << "\">\n";
  auto panel = [&](int top, const VectorXd& v, const char* title) {
    double lo = v.minCoeff(), hi = v.maxCoeff();
    if (lo > 0.0) lo = 0.0;
    if (hi < 0.0) hi = 0.0;
    if (hi - lo < 1e-300) hi = lo + 1.0;
    const double plot_w = width - 2.0 * margin;
    const double plot_h = panel_h - margin;
    auto xpos = [&](int i) { return margin + plot_w * (i + 0.5) / p; };
    auto ypos = [&](double val) { return top + plot_h * (1.0 - (val - lo) / (hi - lo)); };
    out << "<text x=\"" << margin << "\" y=\"" << (top - 8) << "\" font-size=\"13\">" << title
        << "</text>\n";
    out << "<line x1=\"" << margin << "\" y1=\"" << fmt(ypos(0.0)) << "\" x2=\"" << (width - margin)
        << "\" y2=\"" << fmt(ypos(0.0)) << "\" stroke=\"#999\"/>\n";
    for (int i = 0; i < p; ++i) {
      out << "<line x1=\"" << fmt(xpos(i)) << "\" y1=\"" << fmt(ypos(0.0)) << "\" x2=\""
          << fmt(xpos(i)) << "\" y2=\"" << fmt(ypos(v[i])) << "\" stroke=\"#1f77b4\"/>\n";
      out << "<circle cx=\"" << fmt(xpos(i)) << "\" cy=\"" << fmt(ypos(v[i]))
          << "\" r=\"2.5\" fill=\"#1f77b4\"/>\n";
    }
  };
  panel(2 * margin, rep.basis_fi, "first-order influence FI by index");
  panel(panel_h + 3 * margin, rep.basis_si, "second-order influence SI by index");
  out << "</svg>\n";
}

struct BuiltScheme {
  PerturbedModel raw;
  std::optional<PerturbedModel> prebuilt_appropriate;
  std::optional<ObjectiveProbe> raw_lr_probe;
  std::optional<ObjectiveProbe> std_lr_probe;
};

BuiltScheme build_scheme(const AnalysisConfig& cfg, const ModelFit& fit) {
  BuiltScheme b;
  if (cfg.scheme == "case_weight") {
    b.raw = case_weight_scheme(fit);
  } else if (cfg.scheme == "ls_variance") {
    b.raw = location_scale_schemes(fit, LocationScaleScheme::variance);
  } else if (cfg.scheme == "ls_response") {
    b.raw = location_scale_schemes(fit, LocationScaleScheme::response);
  } else if (cfg.scheme == "reg_variance") {
    b.raw = regression_variance_scheme(fit);
  } else if (cfg.scheme == "explanatory_full" || cfg.scheme == "explanatory_diag") {
    VectorXd s = cfg.explanatory_scale.size() == fit.q1() ? cfg.explanatory_scale
                                                          : VectorXd::Ones(fit.q1());
    b.raw = explanatory_scheme(fit,
                               cfg.scheme == "explanatory_full" ? ExplanatoryScheme::full_matrix
                                                                : ExplanatoryScheme::diagonal,
                               s);
  } else if (cfg.scheme == "loglinear") {
    LogLinearSchemes ll = loglinear_scheme(fit, gaussian_hermite_basis(fit, cfg.loglinear_m));
    b.raw = ll.raw;
    b.prebuilt_appropriate = ll.standardized;
    b.raw_lr_probe = ll.raw_lr_probe;
    b.std_lr_probe = ll.standardized_lr_probe;
  } else if (cfg.scheme == "lmm_cov") {
    LmmSchemes s = lmm_covariance_scheme(fit);
    b.raw = s.raw;
    b.prebuilt_appropriate = s.appropriate;
  } else if (cfg.scheme == "lmm_cluster_shift") {
    LmmSchemes s = lmm_cluster_shift_scheme(fit);
    b.raw = s.raw;
    b.prebuilt_appropriate = s.appropriate;
  } else if (cfg.scheme == "lmm_mean_shift") {
    LmmSchemes s = lmm_mean_shift_scheme(fit);
    b.raw = s.raw;
    b.prebuilt_appropriate = s.appropriate;
  } else {
    fail(ErrorKind::incompatible_config, "unknown scheme '" + cfg.scheme + "'");
  }
  return b;
}

ObjectiveProbe build_probe(const AnalysisConfig& cfg, const ModelFit& fit,
                           const BuiltScheme& built, const PerturbedModel& used,
                           bool used_rescaled) {
  if (cfg.objective == "neg_rss") return rss_probe(fit);
  if (cfg.objective == "ld_full") return ld_probe(fit, used, ParameterInterest::full_theta);
  if (cfg.objective == "ld_beta") return ld_probe(fit, used, ParameterInterest::beta_only);
  if (cfg.objective == "ld_xi") return ld_probe(fit, used, ParameterInterest::dispersion_only);
  if (cfg.objective == "loglik_ratio") {
    if (built.raw_lr_probe) return used_rescaled ? *built.std_lr_probe : *built.raw_lr_probe;
    oracle::OracleConfig ocfg(cfg.seed);
    return oracle::fd_probe(loglik_ratio_function(fit, used), used.omega0, ocfg);
  }
  fail(ErrorKind::incompatible_config, "unknown objective '" + cfg.objective + "'");
}

ModelFit fit_for_config(const AnalysisConfig& cfg, const ClusteredDataset& data) {
  FitOptions opts;
  opts.xi_init = cfg.xi_init;
  return fit_model(data, cfg.model, cfg.covariance, cfg.family, opts);
}

}  // namespace

AnalyzeResult analyze(const AnalysisConfig& cfg, const ClusteredDataset& data) {
  validate_config(cfg);
  const ModelFit fit = fit_for_config(cfg, data);
  BuiltScheme built = build_scheme(cfg, fit);

  AnalyzeResult res;
  GeometryAtPoint geom = geometry_at(built.raw, built.raw.omega0, cfg.alpha);
  res.raw_verdict = appropriateness_report(geom);
  res.scheme_used = built.raw.name;

  const PerturbedModel* used = &built.raw;
  if (!res.raw_verdict.is_appropriate && cfg.auto_rescale) {
    if (!geom.Ginv) {
      // Step-3 halt: the metric is singular, rescaling is impossible.
      write_geometry_csv(cfg.out_dir + "/geometry.csv", geom, res);
      std::string hint = cfg.scheme == "explanatory_full"
                             ? "; the perturbation has redundant coordinates, use explanatory_diag "
                               "(one coordinate per observation) instead"
                             : "";
      fail(ErrorKind::singular_metric,
           "metric at omega0 is singular (min eigenvalue " + fmt(geom.min_eigenvalue) + ")" + hint);
    }
    if (!built.prebuilt_appropriate)
      built.prebuilt_appropriate = rescale_perturbation(built.raw, geom, 1.0);
    used = &*built.prebuilt_appropriate;
    geom = geometry_at(*used, used->omega0, cfg.alpha);
    res.rescaled_verdict = appropriateness_report(geom);
    res.used_rescaled = true;
    res.scheme_used = used->name;
  }
  if (!geom.Ginv) {
    write_geometry_csv(cfg.out_dir + "/geometry.csv", geom, res);
    std::string hint = cfg.scheme == "explanatory_full"
                           ? "; the perturbation has redundant coordinates, use explanatory_diag "
                             "(one coordinate per observation) instead"
                           : "";
    fail(ErrorKind::singular_metric,
         "metric at omega0 is singular (min eigenvalue " + fmt(geom.min_eigenvalue) + ")" + hint);
  }

  const ObjectiveProbe probe = build_probe(cfg, fit, built, *used, res.used_rescaled);
  res.report = influence_report(*used, probe, geom);

  const std::string base = cfg.out_dir + "/";
  write_report_csv(base + "report.csv", res, cfg);
  write_geometry_csv(base + "geometry.csv", geom, res);
  write_eigen_csv(base + "eigen.csv", res.report);
  write_index_plot_svg(base + "index_plot.svg", res.report);
  res.files_written = {base + "report.csv", base + "geometry.csv", base + "eigen.csv",
                       base + "index_plot.svg"};
  return res;
}

VerifyResult verify(const AnalysisConfig& cfg, const ClusteredDataset& data) {
  validate_config(cfg);
  const ModelFit fit = fit_for_config(cfg, data);
  BuiltScheme built = build_scheme(cfg, fit);
  PerturbedModel& scheme = built.raw;

  VerifyResult out;
  auto add = [&](const std::string& check, double observed, double tol, bool pass,
                 std::string note = "") {
    out.rows.push_back(VerifyRow{check, observed, tol, pass, std::move(note)});
    out.all_pass = out.all_pass && pass;
  };

  GeometryAtPoint geom = geometry_at(scheme, scheme.omega0, cfg.alpha);
  if (cfg.corrupt == "gamma") {
    // negative-control hook: damage the connection before the identity check
    const Tensor3 bump = Tensor3::diagonal(VectorXd::Constant(scheme.p, 0.1));
    geom.GammaAlpha = Tensor3::combine(1.0, geom.GammaAlpha, 1.0, bump);
  }

  {
    const Tensor3 expected = Tensor3::combine(1.0, geom.Gamma0, -0.5 * cfg.alpha, geom.T);
    const double dev = expected.max_abs_diff(geom.GammaAlpha);
    add("GammaAlpha = Gamma0 - alpha/2 T", dev, 1e-12, dev <= 1e-12,
        dev <= 1e-12 ? "" : "tensor GammaAlpha is inconsistent");
  }

  if (scheme.sampler && scheme.geometry) {
    oracle::OracleConfig ocfg(cfg.seed);
    ocfg.mc_draws = cfg.mc_draws;
    const McMetric mc = oracle::mc_metric(scheme, scheme.omega0, ocfg);
    double worst = 0.0;
    for (int i = 0; i < scheme.p; ++i)
      for (int j = 0; j < scheme.p; ++j) {
        const double se = std::max(mc.stderr_(i, j), 1e-14);
        worst = std::max(worst, std::abs(mc.G(i, j) - geom.G(i, j)) / (3.0 * se));
      }
    add("metric vs Monte Carlo (3 sigma)", worst, 1.0, worst <= 1.0);
  }

  if (scheme.geometry && geom.Ginv) {
    // geodesic cross-check: flat schemes must keep straight lines at residual ~0
    const bool flat = geom.GammaAlpha.is_zero_kind() || geom.GammaAlpha.max_abs() == 0.0;
    VectorXd h = VectorXd::Constant(scheme.p, 0.1);
    try {
      PathSample path = geodesic_trace(scheme, cfg.alpha, h, 0.2, 200);
      const double res = oracle::geodesic_residual(scheme, path, cfg.alpha);
      const double tol = flat ? 1e-8 : 1e-4;
      add("geodesic residual", res, tol, res <= tol);
    } catch (const Error& e) {
      add("geodesic residual", 0.0, 0.0, false, e.what());
    }
  }

  if (scheme.delta && scheme.loglik_theta) {
    const MatrixXd fd = fd_delta_matrix(fit, scheme);
    const double scale = std::max(1.0, scheme.delta->cwiseAbs().maxCoeff());
    const double dev = (fd - *scheme.delta).cwiseAbs().maxCoeff() / scale;
    add("Delta vs finite differences", dev, 1e-5, dev <= 1e-5);
  }

  if (cfg.scheme == "reg_variance") {
    oracle::OracleConfig ocfg(cfg.seed);
    const ObjectiveProbe closed = rss_probe(fit);
    const ObjectiveProbe fd = oracle::fd_probe(neg_rss_function(fit), scheme.omega0, ocfg);
    const double scale = std::max(1.0, closed.hess.cwiseAbs().maxCoeff());
    const double dev = std::max((fd.grad - closed.grad).cwiseAbs().maxCoeff(),
                                (fd.hess - closed.hess).cwiseAbs().maxCoeff()) /
                       scale;
    add("-RSS probe vs finite differences", dev, 1e-5, dev <= 1e-5);
  }
  return out;
}

ClusteredDataset simulate(const SimulateConfig& cfg) {
  if (cfg.clusters < 1 || cfg.min_m < 1 || cfg.max_m < cfg.min_m)
    fail(ErrorKind::incompatible_config, "invalid simulate sizes");
  if (cfg.outlier_cluster < 0 || cfg.outlier_cluster > cfg.clusters)
    fail(ErrorKind::incompatible_config, "outlier cluster index out of range");

  const VectorXd beta = (VectorXd(3) << 1.0, 0.5, -0.3).finished();
  // variance function and linear autocorrelation in the visit time d
  const double xi0 = -0.5, xi1 = 0.8, rho0 = 0.3, rho1 = -0.05;

  ClusteredDataset data;
  for (int i = 0; i < cfg.clusters; ++i) {
    DrawRng rng(cfg.seed, static_cast<std::uint64_t>(i) + 1);
    Cluster c;
    {
      char buf[16];
      std::snprintf(buf, sizeof(buf), "c%03d", i + 1);
      c.id = buf;
    }
    const int m = static_cast<int>(rng.next_int(cfg.min_m, cfg.max_m));
    std::vector<double> dd(static_cast<std::size_t>(m));
    for (auto& v : dd) v = rng.next_unit();
    std::sort(dd.begin(), dd.end());
    c.d = VectorXd(m);
    c.x = MatrixXd(m, 3);
    for (int j = 0; j < m; ++j) {
      c.d[j] = dd[static_cast<std::size_t>(j)];
      c.x(j, 0) = 1.0;
      c.x(j, 1) = c.d[j];
      c.x(j, 2) = rng.next_normal();
    }
    MatrixXd sigma(m, m);
    for (int j = 0; j < m; ++j) {
      const double vj = std::exp(xi0 + xi1 * c.d[j]);
      sigma(j, j) = vj;
      for (int k = j + 1; k < m; ++k) {
        const double vk = std::exp(xi0 + xi1 * c.d[k]);
        const double rho = rho0 + rho1 * std::abs(c.d[j] - c.d[k]);
        sigma(j, k) = sigma(k, j) = std::sqrt(vj * vk) * rho;
      }
    }
    Eigen::LLT<MatrixXd> chol(sigma);
    VectorXd z(m);
    for (int j = 0; j < m; ++j) z[j] = rng.next_normal();
    VectorXd eps = chol.matrixL() * z;
    if (cfg.outlier_cluster == i + 1) eps *= cfg.inflate;
    c.y = c.x * beta + eps;
    data.clusters.push_back(std::move(c));
  }
  return data;
}

void write_dataset_csv(const ClusteredDataset& data, const std::string& path) {
  std::ofstream out(path);
  if (!out) fail(ErrorKind::incompatible_config, "cannot open output file '" + path + "'");
  const int q1 = data.q1();
  out << "cluster_id,obs_index,y";
  for (int k = 1; k <= q1; ++k) out << ",x" << k;
  if (data.has_d()) out << ",d";
  out << "\n";
  for (const auto& c : data.clusters)
    for (int j = 0; j < c.m(); ++j) {
      out << c.id << "," << (j + 1) << "," << fmt(c.y[j]);
      for (int k = 0; k < q1; ++k) out << "," << fmt(c.x(j, k));
      if (data.has_d()) out << "," << fmt(c.d[j]);
      out << "\n";
    }
}

}  // namespace influence::cli
