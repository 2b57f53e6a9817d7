#pragma once

// Experiment drivers: gradient-error sweep, optimization comparison, bias
// sweep and resource table, plus CSV/SVG emission.

#include <charconv>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "qcvar/config.hpp"
#include "qcvar/cvar_oracle.hpp"
#include "qcvar/errors.hpp"
#include "qcvar/gaussian_reference.hpp"
#include "qcvar/mc_estimator.hpp"
#include "qcvar/optimizer.hpp"
#include "qcvar/parallel.hpp"
#include "qcvar/random.hpp"
#include "qcvar/resources.hpp"
#include "qcvar/risk_core.hpp"
#include "qcvar/scenario_model.hpp"
#include "qcvar/svg.hpp"

namespace qcvar {

struct SlopeFit {
  double slope = 0.0;
  double intercept = 0.0;
};

/// Least squares of log(error) on log(budget).
inline SlopeFit fit_loglog_slope(const std::vector<std::pair<double, double>>& points) {
  detail::require(points.size() >= 3, "fit_loglog_slope: need at least 3 points");
  double sx = 0, sy = 0;
  for (auto [x, y] : points) {
    detail::require(x > 0.0 && y > 0.0 && std::isfinite(x) && std::isfinite(y),
                    "fit_loglog_slope: budgets and errors must be positive");
    sx += std::log(x);
    sy += std::log(y);
  }
  const auto n = static_cast<double>(points.size());
  const double mx = sx / n, my = sy / n;
  double sxx = 0, sxy = 0;
  for (auto [x, y] : points) {
    const double dx = std::log(x) - mx;
    sxx += dx * dx;
    sxy += dx * (std::log(y) - my);
  }
  detail::require(sxx > 0.0, "fit_loglog_slope: budgets must not all be equal");
  SlopeFit f;
  f.slope = sxy / sxx;
  f.intercept = my - f.slope * mx;
  return f;
}

inline OracleConfig oracle_config(const ExperimentConfig& c) {
  OracleConfig oc;
  oc.alpha = c.alpha;
  oc.qae.backend = c.qae_backend;
  oc.qae.emulation = c.qae_emulation;
  oc.fixed_budget_delta_rel = c.oracle_delta_rel;
  return oc;
}

// ---- gradient error vs budget ----------------------------------------------

inline const std::string kMethodMc = "MC";
inline const std::string kMethodQae = "QAE-style";
inline const std::string kMethodOverlay = "MC(N=M^2)";

struct ErrorRow {
  std::string method;
  std::optional<std::uint64_t> budget;  // empty on average rows
  double l2_error = 0.0;
  std::size_t replications = 0;
};

struct GradSweepResult {
  std::vector<ErrorRow> rows;
  SlopeFit mc_fit;
  SlopeFit qae_fit;
  SlopeFit overlay_fit;
  double mc_average = 0.0;
  double qae_average = 0.0;
  Vector truth;
};

inline Vector sweep_truth(const ExperimentConfig& c, const ReturnModel& model, const Vector& w) {
  if (c.truth == TruthKind::analytic) return gaussian_tail(model, w, c.alpha).gradient;
  return estimate_gradient_mc(model, w, c.alpha, c.truth_samples, derive_seed(c.seed, 999)).g_hat;
}

inline GradSweepResult run_gradient_error_sweep(const ExperimentConfig& c) {
  detail::require(!c.budgets_mc.empty() && !c.budgets_qae.empty(), "grad sweep: budget grids must be nonempty");
  detail::require(c.replications >= 1, "grad sweep: replications must be >= 1");
  const ReturnModel model = c.model();
  const std::size_t d = model.dim();
  const Vector w = Vector::Constant(static_cast<Eigen::Index>(d), 1.0 / static_cast<double>(d));
  GradSweepResult out;
  out.truth = sweep_truth(c, model, w);

  const std::size_t n_mc = c.budgets_mc.size(), n_q = c.budgets_qae.size();
  const std::size_t per_rep = n_mc + 2 * n_q;
  const std::size_t R = c.replications;
  std::vector<double> err(per_rep * R, 0.0);
  OracleConfig oc = oracle_config(c);

  parallel_for(per_rep * R, c.threads, [&](std::size_t task) {
    const std::size_t r = task / per_rep, k = task % per_rep;
    const std::uint64_t seed_r = c.seed + r;
    Vector g;
    if (k < n_mc) {
      g = estimate_gradient_mc(model, w, c.alpha, c.budgets_mc[k], derive_seed(seed_r, 100 + k)).g_hat;
    } else if (k < n_mc + n_q) {
      const std::size_t i = k - n_mc;
      OracleConfig local = oc;
      local.qae.budget = c.budgets_qae[i];
      g = cvar_gradient_oracle(model, w, local, derive_seed(seed_r, 200 + i)).g_hat;
    } else {
      const std::size_t i = k - n_mc - n_q;
      const std::uint64_t m = c.budgets_qae[i];
      g = estimate_gradient_mc(model, w, c.alpha, m * m, derive_seed(seed_r, 300 + i)).g_hat;
    }
    err[task] = (g - out.truth).norm();
  });

  auto mean_error = [&](std::size_t k) {
    double s = 0.0;
    for (std::size_t r = 0; r < R; ++r) s += err[r * per_rep + k];
    return s / static_cast<double>(R);
  };
  std::vector<std::pair<double, double>> mc_pts, q_pts, o_pts;
  for (std::size_t i = 0; i < n_mc; ++i) {
    const double e = mean_error(i);
    out.rows.push_back({kMethodMc, c.budgets_mc[i], e, R});
    mc_pts.emplace_back(static_cast<double>(c.budgets_mc[i]), e);
    out.mc_average += e / static_cast<double>(n_mc);
  }
  for (std::size_t i = 0; i < n_q; ++i) {
    const double e = mean_error(n_mc + i);
    out.rows.push_back({kMethodQae, c.budgets_qae[i], e, R});
    q_pts.emplace_back(static_cast<double>(c.budgets_qae[i]), e);
    out.qae_average += e / static_cast<double>(n_q);
  }
  for (std::size_t i = 0; i < n_q; ++i) {
    const double e = mean_error(n_mc + n_q + i);
    out.rows.push_back({kMethodOverlay, c.budgets_qae[i], e, R});
    o_pts.emplace_back(static_cast<double>(c.budgets_qae[i]), e);
  }
  out.rows.push_back({"Average (MC)", std::nullopt, out.mc_average, R});
  out.rows.push_back({"Average (QAE-style)", std::nullopt, out.qae_average, R});
  if (mc_pts.size() >= 3) out.mc_fit = fit_loglog_slope(mc_pts);
  if (q_pts.size() >= 3) {
    out.qae_fit = fit_loglog_slope(q_pts);
    out.overlay_fit = fit_loglog_slope(o_pts);
  }
  return out;
}

// ---- optimization comparison -----------------------------------------------

struct OptimizationResult {
  std::vector<TrajectoryRecord> mc;
  std::vector<TrajectoryRecord> qae;
  double mc_average = 0.0;
  double qae_average = 0.0;
  double step_c = 0.0;
  double grad_scale = 0.0;
};

inline double trajectory_average(const std::vector<TrajectoryRecord>& t) {
  double s = 0.0;
  for (const auto& r : t) s += r.cvar;
  return t.empty() ? 0.0 : s / static_cast<double>(t.size());
}

inline OptimizationResult run_optimization_comparison(const ExperimentConfig& c) {
  const ReturnModel model = c.model();
  const ScenarioSet eval = make_evaluation_set(model, c.sgd_eval_samples, c.sgd_eval_seed);
  OptimizationResult out;
  out.step_c = c.sgd_step_c;
  out.grad_scale = gradient_scale(eval);
  const OracleConfig oc = oracle_config(c);

  auto sgd = [&](GradientMethod m) {
    SgdConfig s;
    s.iterations = c.sgd_T;
    s.step_c = c.sgd_step_c;
    s.per_iter_budget = c.sgd_per_iter_budget;
    s.estimator = m;
    s.seed = derive_seed(c.seed, m == GradientMethod::mc ? 1 : 2);
    s.grad_scale = out.grad_scale;
    return s;
  };
  parallel_for(2, c.threads, [&](std::size_t k) {
    if (k == 0) out.mc = run_projected_sgd(model, sgd(GradientMethod::mc), oc, eval);
    else out.qae = run_projected_sgd(model, sgd(GradientMethod::qae), oc, eval);
  });
  out.mc_average = trajectory_average(out.mc);
  out.qae_average = trajectory_average(out.qae);
  return out;
}

// ---- bias vs threshold error -----------------------------------------------

struct BiasRow {
  double delta = 0.0;
  double bias = 0.0;
  double bound = 0.0;
};

struct BiasResult {
  std::vector<BiasRow> rows;  // first row is delta = 0
  SlopeFit fit;               // over delta > 0
  RegularityBounds regularity;
  double var = 0.0;
};

/// Exact amplitudes with the threshold shifted to VaR + delta. The bound is
/// 2 G M delta / P(L >= VaR + delta), with G and M measured on the instance.
inline BiasResult run_bias_sweep(const ExperimentConfig& c) {
  for (double delta : c.bias_deltas) detail::require(delta > 0.0, "bias sweep: deltas must be positive");
  const ReturnModel model = c.bias_model();
  const ScenarioSet scen = scenarios_from_samples(model, c.bias_atoms, derive_seed(c.seed, 0xB1A5));
  const std::size_t d = scen.dim();
  const Vector w = Vector::Constant(static_cast<Eigen::Index>(d), 1.0 / static_cast<double>(d));
  const EmpiricalLossDistribution dist = make_loss_distribution(scen, w);
  const Vector g = subgradient_exact(dist, c.alpha);

  BiasResult out;
  out.var = var_exact(dist, c.alpha);
  out.regularity = measure_regularity(dist);
  OracleConfig oc;
  oc.alpha = c.alpha;
  oc.qae.backend = QaeBackend::exact;
  oc.qae.budget = 1;
  oc.p_floor = 1e-9;  // large deltas push the tail well below (1 - alpha) / 4

  std::vector<double> deltas{0.0};
  deltas.insert(deltas.end(), c.bias_deltas.begin(), c.bias_deltas.end());
  std::vector<std::pair<double, double>> pts;
  for (double delta : deltas) {
    oc.threshold = out.var + delta;
    const GradientEstimate est = cvar_gradient_oracle(scen, w, oc, c.seed);
    BiasRow row;
    row.delta = delta;
    row.bias = (est.g_hat - g).norm();
    row.bound = 2.0 * out.regularity.grad_bound * out.regularity.density_bound * delta / est.p_hat;
    out.rows.push_back(row);
    if (delta > 0.0 && row.bias > 0.0) pts.emplace_back(delta, row.bias);
  }
  if (pts.size() >= 3) out.fit = fit_loglog_slope(pts);
  return out;
}

// ---- resources ---------------------------------------------------------------

struct ResourceRow {
  ResourceParams params;
  std::uint64_t n_data = 0;
  std::uint64_t n_logical = 0;
  double n_physical = 0.0;
};

inline std::vector<ResourceRow> run_resource_table(const ExperimentConfig& c) {
  std::vector<ResourceRow> rows;
  for (std::uint64_t bins : c.res_bins)
    for (double eps : c.res_eps) {
      ResourceRow r;
      r.params.d = c.res_d;
      r.params.bins = bins;
      r.params.eps = eps;
      r.params.code_distance = c.res_code_distance;
      r.params.layout_alpha = c.res_layout_alpha;
      r.params.ancilla_budget = c.res_ancilla_budget;
      r.n_data = data_qubits(r.params);
      r.n_logical = logical_qubit_estimate(r.params);
      r.n_physical = physical_qubit_estimate(r.n_logical, r.params);
      rows.push_back(r);
    }
  return rows;
}

// ---- output ------------------------------------------------------------------

inline std::string fmt(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::general, 10);
  return std::string(buf, res.ptr);
}

inline std::string fmt(std::uint64_t v) { return std::to_string(v); }

class CsvFile {
 public:
  CsvFile(const std::filesystem::path& path, const std::string& header) : path_(path), out_(path, std::ios::binary) {
    if (!out_) throw IoError("cannot open " + path.string() + " for writing");
    out_ << header << '\n';
  }

  template <class... Cells>
  void row(const Cells&... cells) {
    std::size_t i = 0;
    ((out_ << (i++ ? "," : "") << cells), ...);
    out_ << '\n';
  }

  void close() {
    out_.close();
    if (!out_) throw IoError("failed writing " + path_.string());
  }

 private:
  std::filesystem::path path_;
  std::ofstream out_;
};

inline std::filesystem::path prepare_dir(const std::string& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create output directory " + dir + ": " + ec.message());
  return dir;
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
  out.close();
  if (!out) throw IoError("failed writing " + path.string());
}

inline void emit_outputs(const GradSweepResult& r, const std::string& dir, bool plots) {
  const auto base = prepare_dir(dir);
  CsvFile csv(base / "grad_error.csv", "method,budget,l2_error,replications");
  for (const auto& row : r.rows)
    csv.row(row.method, row.budget ? fmt(*row.budget) : std::string(), fmt(row.l2_error), row.replications);
  csv.close();

  CsvFile fit(base / "grad_error_fit.csv", "method,slope,intercept");
  fit.row(kMethodMc, fmt(r.mc_fit.slope), fmt(r.mc_fit.intercept));
  fit.row(kMethodQae, fmt(r.qae_fit.slope), fmt(r.qae_fit.intercept));
  fit.row(kMethodOverlay, fmt(r.overlay_fit.slope), fmt(r.overlay_fit.intercept));
  fit.close();

  if (!plots) return;
  PlotSpec spec{"Gradient error vs budget", "budget (samples N or queries M)", "l2 error", true, true, {}};
  for (const std::string* m : {&kMethodMc, &kMethodQae, &kMethodOverlay}) {
    PlotSeries s{*m, {}, m == &kMethodOverlay};
    for (const auto& row : r.rows)
      if (row.method == *m) s.points.emplace_back(static_cast<double>(*row.budget), row.l2_error);
    spec.series.push_back(std::move(s));
  }
  write_text(base / "grad_error.svg", render_svg(spec));
}

inline void emit_outputs(const OptimizationResult& r, const std::string& dir, bool plots) {
  const auto base = prepare_dir(dir);
  const std::pair<const std::string*, const std::vector<TrajectoryRecord>*> runs[] = {{&kMethodMc, &r.mc},
                                                                                       {&kMethodQae, &r.qae}};
  CsvFile csv(base / "trajectory.csv", "iter,method,cvar,cum_queries");
  for (const auto& [name, traj] : runs) {
    for (const auto& rec : *traj) csv.row(rec.iter, *name, fmt(rec.cvar), rec.cum_queries);
    csv.row("Average", *name, fmt(trajectory_average(*traj)), "");
  }
  csv.close();

  const std::size_t d = r.mc.empty() ? 0 : static_cast<std::size_t>(r.mc.front().w.size());
  std::string header = "iter,method,cvar_eval,cvar_in_loop,cum_queries,oracle_queries";
  for (std::size_t j = 0; j < d; ++j) header += ",w" + std::to_string(j + 1);
  CsvFile detail(base / "trajectory_detail.csv", header);
  for (const auto& [name, traj] : runs)
    for (const auto& rec : *traj) {
      std::string weights;
      for (Eigen::Index j = 0; j < rec.w.size(); ++j) weights += (j ? "," : "") + fmt(rec.w[j]);
      detail.row(rec.iter, *name, fmt(rec.cvar), fmt(rec.cvar_in_loop), rec.cum_queries, rec.oracle_queries, weights);
    }
  detail.close();

  CsvFile params(base / "optimization_params.csv", "key,value");
  params.row("step_c", fmt(r.step_c));
  params.row("grad_scale", fmt(r.grad_scale));
  params.row("average_cvar_mc", fmt(r.mc_average));
  params.row("average_cvar_qae", fmt(r.qae_average));
  params.close();

  if (!plots) return;
  PlotSpec by_iter{"CVaR vs iteration", "iteration", "CVaR (evaluation sample)", false, false, {}};
  PlotSpec by_queries{"CVaR vs cumulative queries", "cumulative queries", "CVaR (evaluation sample)", false, false, {}};
  for (const auto& [name, traj] : runs) {
    PlotSeries a{*name, {}, name == &kMethodQae}, b = a;
    for (const auto& rec : *traj) {
      a.points.emplace_back(static_cast<double>(rec.iter), rec.cvar);
      b.points.emplace_back(static_cast<double>(rec.cum_queries), rec.cvar);
    }
    by_iter.series.push_back(std::move(a));
    by_queries.series.push_back(std::move(b));
  }
  write_text(base / "trajectory_iter.svg", render_svg(by_iter));
  write_text(base / "trajectory_queries.svg", render_svg(by_queries));
}

inline void emit_outputs(const BiasResult& r, const std::string& dir, bool plots) {
  const auto base = prepare_dir(dir);
  CsvFile csv(base / "bias.csv", "delta,bias,bound");
  for (const auto& row : r.rows) csv.row(fmt(row.delta), fmt(row.bias), fmt(row.bound));
  csv.close();

  CsvFile fit(base / "bias_fit.csv", "slope,intercept,grad_bound,density_bound,var");
  fit.row(fmt(r.fit.slope), fmt(r.fit.intercept), fmt(r.regularity.grad_bound), fmt(r.regularity.density_bound),
          fmt(r.var));
  fit.close();

  if (!plots) return;
  PlotSpec spec{"Gradient bias vs threshold error", "delta", "l2 bias", true, true, {}};
  PlotSeries bias{"bias", {}, false}, bound{"bound", {}, true};
  for (const auto& row : r.rows) {
    bias.points.emplace_back(row.delta, row.bias);
    bound.points.emplace_back(row.delta, row.bound);
  }
  spec.series = {bias, bound};
  write_text(base / "bias.svg", render_svg(spec));
}

inline void emit_outputs(const std::vector<ResourceRow>& rows, const std::string& dir) {
  const auto base = prepare_dir(dir);
  CsvFile csv(base / "resources.csv",
              "d,bins,eps,code_distance,layout_alpha,ancilla_budget,n_data,n_logical,n_physical");
  for (const auto& r : rows)
    csv.row(r.params.d, r.params.bins, fmt(r.params.eps), r.params.code_distance, fmt(r.params.layout_alpha),
            r.params.ancilla_budget, r.n_data, r.n_logical, fmt(r.n_physical));
  csv.close();
}

}  // namespace qcvar
