#include <cmath>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <sstream>

#include <gtest/gtest.h>

#include "qcvar/experiments.hpp"

using namespace qcvar;

namespace {

ExperimentConfig small_config() {
  ExperimentConfig c;
  c.model_d = 3;
  c.budgets_mc = {100, 400, 1600};
  c.budgets_qae = {10, 20, 40};
  c.replications = 2;
  c.sgd_T = 5;
  c.sgd_eval_samples = 2000;
  c.bias_atoms = 20000;
  c.bias_deltas = {1e-3, 1e-2, 1e-1};
  c.seed = 3;
  c.threads = 1;
  return c;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

std::vector<std::string> lines(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  for (std::string l; std::getline(in, l);) out.push_back(l);
  return out;
}

std::filesystem::path scratch(const std::string& name) {
  const auto p = std::filesystem::temp_directory_path() / ("qcvar_test_" + name);
  std::filesystem::remove_all(p);
  return p;
}

}  // namespace

TEST(FitLogLogSlope, Examples) {
  const auto half = fit_loglog_slope({{1, 1}, {4, 0.5}, {16, 0.25}, {64, 0.125}});
  EXPECT_NEAR(half.slope, -0.5, 1e-12);
  EXPECT_NEAR(half.intercept, 0.0, 1e-12);
  const auto inv = fit_loglog_slope({{10, 0.3}, {100, 0.03}, {1000, 0.003}});
  EXPECT_NEAR(inv.slope, -1.0, 1e-12);
  EXPECT_NEAR(inv.intercept, std::log(3.0), 1e-12);
  EXPECT_NEAR(fit_loglog_slope({{1, 2}, {2, 2}, {3, 2}}).slope, 0.0, 1e-15);
  EXPECT_THROW(fit_loglog_slope({{1, 1}, {2, 1}}), InvalidParameter);
  EXPECT_THROW(fit_loglog_slope({{1, 1}, {2, 0}, {3, 1}}), InvalidParameter);
  EXPECT_THROW(fit_loglog_slope({{2, 1}, {2, 3}, {2, 2}}), InvalidParameter);
}

TEST(Config, ParsesKeysCommentsAndLists) {
  std::istringstream in(R"(# comment line
model.d = 4
model.vols = 0.1, 0.2,0.3 ,0.4   # trailing comment
alpha=0.9
sweep.truth = mc
qae.backend = mlae
qae.emulation = per_circuit
plots = false
seed = 12
out_dir = results/run1
)");
  const ExperimentConfig c = parse_config(in);
  EXPECT_EQ(c.model_d, 4u);
  EXPECT_EQ(c.model_vols, (std::vector<double>{0.1, 0.2, 0.3, 0.4}));
  EXPECT_EQ(c.alpha, 0.9);
  EXPECT_EQ(c.truth, TruthKind::mc);
  EXPECT_EQ(c.qae_backend, QaeBackend::mlae);
  EXPECT_EQ(c.qae_emulation, IdealEmulation::per_circuit);
  EXPECT_FALSE(c.plots);
  EXPECT_EQ(c.seed, 12u);
  EXPECT_EQ(c.out_dir, "results/run1");
  EXPECT_EQ(c.model().dim(), 4u);
}

TEST(Config, RejectsBadInput) {
  auto parse = [](const std::string& text) {
    std::istringstream in(text);
    return parse_config(in);
  };
  EXPECT_THROW(parse("no_such_key = 1\n"), InvalidParameter);
  EXPECT_THROW(parse("model.d = three\n"), InvalidParameter);
  EXPECT_THROW(parse("model.d 3\n"), InvalidParameter);
  EXPECT_THROW(parse("sweep.budgets_mc = 100,,200\n"), InvalidParameter);
  EXPECT_THROW(parse("qae.backend = magic\n"), InvalidParameter);
  EXPECT_THROW(parse("plots = maybe\n"), InvalidParameter);
  EXPECT_THROW(parse("model.d = 3\nmodel.vols = 0.1,0.2\n").model(), InvalidParameter);
  EXPECT_THROW(load_config("/nonexistent/qcvar.cfg"), IoError);
}

TEST(Format, ShortestStableText) {
  EXPECT_EQ(fmt(0.1), "0.1");
  EXPECT_EQ(fmt(1e-3), "0.001");
  EXPECT_EQ(fmt(24750.0), "24750");
  EXPECT_EQ(fmt(std::uint64_t{31}), "31");
}

TEST(GradSweep, RowsFitsAndDeterminism) {
  const ExperimentConfig c = small_config();
  const GradSweepResult a = run_gradient_error_sweep(c);
  ASSERT_EQ(a.rows.size(), 3u + 3u + 3u + 2u);
  std::size_t mc = 0, qae = 0, overlay = 0, averages = 0;
  for (const auto& r : a.rows) {
    EXPECT_GT(r.l2_error, 0.0);
    EXPECT_EQ(r.replications, 2u);
    if (!r.budget) ++averages;
    else if (r.method == kMethodMc) ++mc;
    else if (r.method == kMethodQae) ++qae;
    else if (r.method == kMethodOverlay) ++overlay;
  }
  EXPECT_EQ(mc, 3u);
  EXPECT_EQ(qae, 3u);
  EXPECT_EQ(overlay, 3u);
  EXPECT_EQ(averages, 2u);
  EXPECT_TRUE(a.truth.isApprox(gaussian_tail(c.model(), Vector::Constant(3, 1.0 / 3), c.alpha).gradient, 0.0));

  ExperimentConfig threaded = c;
  threaded.threads = 3;
  const GradSweepResult b = run_gradient_error_sweep(threaded);
  for (std::size_t i = 0; i < a.rows.size(); ++i) EXPECT_EQ(a.rows[i].l2_error, b.rows[i].l2_error);
  EXPECT_EQ(a.mc_fit.slope, b.mc_fit.slope);
}

TEST(GradSweep, CsvIsByteIdenticalAcrossRuns) {
  const ExperimentConfig c = small_config();
  const auto d1 = scratch("sweep1"), d2 = scratch("sweep2");
  emit_outputs(run_gradient_error_sweep(c), d1.string(), true);
  emit_outputs(run_gradient_error_sweep(c), d2.string(), false);
  for (const char* f : {"grad_error.csv", "grad_error_fit.csv"}) EXPECT_EQ(slurp(d1 / f), slurp(d2 / f)) << f;
  EXPECT_TRUE(std::filesystem::exists(d1 / "grad_error.svg"));
  EXPECT_FALSE(std::filesystem::exists(d2 / "grad_error.svg"));
  const auto rows = lines(slurp(d1 / "grad_error.csv"));
  ASSERT_EQ(rows.size(), 1u + 11u);
  EXPECT_EQ(rows[0], "method,budget,l2_error,replications");
  std::filesystem::remove_all(d1);
  std::filesystem::remove_all(d2);
}

TEST(Optimization, TrajectoryCsvLayout) {
  const ExperimentConfig c = small_config();
  const OptimizationResult r = run_optimization_comparison(c);
  ASSERT_EQ(r.mc.size(), 5u);
  ASSERT_EQ(r.qae.size(), 5u);
  double sum = 0;
  for (const auto& rec : r.qae) sum += rec.cvar;
  EXPECT_NEAR(r.qae_average, sum / 5, 1e-15);

  const auto dir = scratch("opt");
  emit_outputs(r, dir.string(), false);
  const auto rows = lines(slurp(dir / "trajectory.csv"));
  ASSERT_EQ(rows.size(), 1u + 2u * (5u + 1u));
  EXPECT_EQ(rows[0], "iter,method,cvar,cum_queries");
  for (std::size_t t = 1; t <= 5; ++t) {
    EXPECT_EQ(rows[t].substr(0, rows[t].find(',')), std::to_string(t));
    EXPECT_EQ(rows[t].substr(rows[t].rfind(',') + 1), std::to_string(200 * t));
  }
  EXPECT_EQ(rows[6].rfind("Average,MC,", 0), 0u);
  EXPECT_EQ(rows[6].back(), ',');
  EXPECT_EQ(rows[12].rfind("Average,QAE-style,", 0), 0u);
  EXPECT_EQ(lines(slurp(dir / "trajectory_detail.csv"))[0],
            "iter,method,cvar_eval,cvar_in_loop,cum_queries,oracle_queries,w1,w2,w3");
  std::filesystem::remove_all(dir);
}

TEST(BiasSweep, MatchesDirectTailAverages) {
  const ExperimentConfig c = small_config();
  const BiasResult r = run_bias_sweep(c);
  ASSERT_EQ(r.rows.size(), 4u);
  EXPECT_EQ(r.rows[0].delta, 0.0);
  EXPECT_LE(r.rows[0].bias, 1e-10);

  // E[-r | L >= VaR + delta] by direct summation over the same scenarios
  const ScenarioSet s = scenarios_from_samples(c.bias_model(), c.bias_atoms, derive_seed(c.seed, 0xB1A5));
  const Vector w = Vector::Constant(2, 0.5);
  const std::vector<double> L = portfolio_losses(*s.returns, w);
  const Vector g = subgradient_exact(make_loss_distribution(s, w), c.alpha);
  for (std::size_t k = 1; k < r.rows.size(); ++k) {
    Vector acc = Vector::Zero(2);
    double mass = 0;
    for (std::size_t i = 0; i < s.size(); ++i)
      if (L[i] >= r.var + r.rows[k].delta) {
        acc -= s.probs[i] * s.returns->row(static_cast<Eigen::Index>(i)).transpose();
        mass += s.probs[i];
      }
    EXPECT_NEAR(r.rows[k].bias, (acc / mass - g).norm(), 1e-12);
    EXPECT_GT(r.rows[k].bias, r.rows[k - 1].bias);
  }
}

TEST(ResourceTable, RowsAndCsv) {
  const ExperimentConfig c = small_config();
  const auto rows = run_resource_table(c);
  ASSERT_EQ(rows.size(), 9u);
  const auto dir = scratch("res");
  emit_outputs(rows, dir.string());
  const auto text = lines(slurp(dir / "resources.csv"));
  ASSERT_EQ(text.size(), 10u);
  EXPECT_EQ(text[5], "10,1024,0.01,30,1.1,10,14,31,30690");
  std::filesystem::remove_all(dir);
}

TEST(Output, UnwritableDirectoryIsReported) {
  const auto file = scratch("blocker");
  { std::ofstream(file) << "x"; }
  EXPECT_THROW(emit_outputs(run_resource_table(small_config()), (file / "sub").string()), IoError);
  std::filesystem::remove_all(file);
}
