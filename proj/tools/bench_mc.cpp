// Timing comparison of the serial reference loop against the OpenMP kernel
// for the Monte Carlo metric estimator, plus an agreement check.

#include <chrono>
#include <cstdio>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "influence/mc.hpp"
#include "influence/models.hpp"

using namespace influence;

namespace {

PerturbedModel make_model(int n) {
  ClusteredDataset data;
  for (int i = 0; i < n; ++i) {
    Cluster c;
    c.id = "c" + std::to_string(i + 1);
    c.y = VectorXd::Constant(1, 0.3 * i - 1.0);
    c.x = MatrixXd::Ones(1, 1);
    data.clusters.push_back(std::move(c));
  }
  ModelFit fit = fit_model(data, ModelKind::linear_regression);
  return regression_variance_scheme(fit);
}

double time_run(const PerturbedModel& model, const McOptions& opt, MatrixXd* g) {
  const auto t0 = std::chrono::steady_clock::now();
  McMetric m = mc_metric_estimate(model, model.omega0, opt);
  const auto t1 = std::chrono::steady_clock::now();
  *g = m.G;
  return std::chrono::duration<double>(t1 - t0).count();
}

}  // namespace

int main() {
  const int n = 24;
  PerturbedModel model = make_model(n);

  McOptions opt;
  opt.seed = 777;
  opt.draws = 200000;

  MatrixXd g_serial, g_parallel;
  opt.parallel = false;
  const double t_serial = time_run(model, opt, &g_serial);
  opt.parallel = true;
  const double t_parallel = time_run(model, opt, &g_parallel);

  int threads = 1;
#ifdef _OPENMP
  threads = omp_get_max_threads();
#endif

  const double dev = (g_serial - g_parallel).cwiseAbs().maxCoeff();
  std::printf("mc_metric, p=%d, draws=%d\n", n, opt.draws);
  std::printf("  serial reference : %8.3f s\n", t_serial);
  std::printf("  openmp (%2d thr)  : %8.3f s   speedup %.2fx\n", threads, t_parallel,
              t_serial / t_parallel);
  std::printf("  max |serial - parallel| = %.3g\n", dev);
  return dev <= 1e-12 ? 0 : 1;
}
