// qcvar: experiment driver.
//
//   qcvar grad-sweep  [--config f] [--seed s] [--out dir] [--replications n]
//   qcvar optimize    [--config f] [--seed s] [--out dir]
//   qcvar bias-sweep  [--config f] [--seed s] [--out dir]
//   qcvar resources   [--config f] [--out dir]

#include <cstdint>
#include <cstdio>
#include <exception>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "qcvar/qcvar.hpp"

namespace {

struct CommonFlags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<std::size_t> replications;
  std::optional<std::size_t> threads;
  bool no_plots = false;
};

void add_common(CLI::App* sub, CommonFlags& f) {
  sub->add_option("--config", f.config, "key=value config file")->check(CLI::ExistingFile);
  sub->add_option("--seed", f.seed, "base seed");
  sub->add_option("--out", f.out, "output directory");
  sub->add_option("--threads", f.threads, "worker threads (0 = all cores)");
  sub->add_flag("--no-plots", f.no_plots, "skip SVG output");
}

qcvar::ExperimentConfig resolve(const CommonFlags& f) {
  qcvar::ExperimentConfig c = f.config.empty() ? qcvar::ExperimentConfig{} : qcvar::load_config(f.config);
  if (f.seed) c.seed = *f.seed;
  if (f.out) c.out_dir = *f.out;
  if (f.replications) c.replications = *f.replications;
  if (f.threads) c.threads = *f.threads;
  if (f.no_plots) c.plots = false;
  return c;
}

void print_fit(const char* name, const qcvar::SlopeFit& fit) {
  std::printf("  %-10s slope %+.4f\n", name, fit.slope);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"CVaR gradient estimation experiments"};
  app.require_subcommand(1);
  CommonFlags flags;

  auto* grad = app.add_subcommand("grad-sweep", "gradient l2 error vs budget for MC and QAE-style estimators");
  add_common(grad, flags);
  grad->add_option("--replications", flags.replications, "replications per budget")->check(CLI::PositiveNumber);
  auto* opt = app.add_subcommand("optimize", "projected SGD with MC and QAE-style gradients");
  add_common(opt, flags);
  auto* bias = app.add_subcommand("bias-sweep", "gradient bias vs threshold error with exact amplitudes");
  add_common(bias, flags);
  auto* res = app.add_subcommand("resources", "logical and physical qubit estimates");
  add_common(res, flags);

  CLI11_PARSE(app, argc, argv);

  try {
    const qcvar::ExperimentConfig cfg = resolve(flags);
    if (grad->parsed()) {
      const auto r = qcvar::run_gradient_error_sweep(cfg);
      qcvar::emit_outputs(r, cfg.out_dir, cfg.plots);
      std::printf("grad-sweep: %zu replications\n", cfg.replications);
      std::printf("  average l2 error  MC %.5f  QAE-style %.5f\n", r.mc_average, r.qae_average);
      print_fit("MC", r.mc_fit);
      print_fit("QAE-style", r.qae_fit);
      print_fit("MC(N=M^2)", r.overlay_fit);
    } else if (opt->parsed()) {
      const auto r = qcvar::run_optimization_comparison(cfg);
      qcvar::emit_outputs(r, cfg.out_dir, cfg.plots);
      std::printf("optimize: T=%zu, %llu queries/iteration, step_c %.4g, G %.4g\n", cfg.sgd_T,
                  static_cast<unsigned long long>(cfg.sgd_per_iter_budget), r.step_c, r.grad_scale);
      std::printf("  average CVaR  MC %.5f  QAE-style %.5f\n", r.mc_average, r.qae_average);
    } else if (bias->parsed()) {
      const auto r = qcvar::run_bias_sweep(cfg);
      qcvar::emit_outputs(r, cfg.out_dir, cfg.plots);
      std::printf("bias-sweep: VaR %.6f, G %.4g, density bound %.4g\n", r.var, r.regularity.grad_bound,
                  r.regularity.density_bound);
      for (const auto& row : r.rows) std::printf("  delta %-10.4g bias %-12.4g bound %.4g\n", row.delta, row.bias, row.bound);
      print_fit("bias", r.fit);
    } else if (res->parsed()) {
      const auto rows = qcvar::run_resource_table(cfg);
      qcvar::emit_outputs(rows, cfg.out_dir);
      std::printf("%6s %6s %8s %6s %9s %10s\n", "d", "bins", "eps", "n_data", "n_logical", "n_physical");
      for (const auto& r : rows)
        std::printf("%6llu %6llu %8.0e %6llu %9llu %10.0f\n", static_cast<unsigned long long>(r.params.d),
                    static_cast<unsigned long long>(r.params.bins), r.params.eps,
                    static_cast<unsigned long long>(r.n_data), static_cast<unsigned long long>(r.n_logical),
                    r.n_physical);
      std::printf("code distance %llu, layout alpha %.3g, ancilla budget %llu\n",
                  static_cast<unsigned long long>(cfg.res_code_distance), cfg.res_layout_alpha,
                  static_cast<unsigned long long>(cfg.res_ancilla_budget));
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
