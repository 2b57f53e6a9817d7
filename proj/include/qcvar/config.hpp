#pragma once

// Flat key=value experiment configuration. '#' starts a comment; lists are
// comma separated. Unknown keys are rejected.

#include <charconv>
#include <cstdint>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "qcvar/errors.hpp"
#include "qcvar/qae_engine.hpp"
#include "qcvar/scenario_model.hpp"

namespace qcvar {

enum class TruthKind { analytic, mc };

struct ExperimentConfig {
  // model
  std::size_t model_d = 10;
  double model_rho = 0.3;
  std::vector<double> model_vols;  // empty: evenly spaced in [0.1, 0.3]
  std::vector<double> model_mean;  // empty: zero; single value broadcasts
  double alpha = 0.95;

  // gradient-error sweep
  std::vector<std::uint64_t> budgets_mc = {100, 215, 464, 1000, 2154, 4641, 10000};
  std::vector<std::uint64_t> budgets_qae = {10, 21, 46, 100, 215, 464, 1000};
  std::size_t replications = 20;
  TruthKind truth = TruthKind::analytic;
  std::size_t truth_samples = 500'000;

  // QAE-style oracle
  QaeBackend qae_backend = QaeBackend::ideal;
  IdealEmulation qae_emulation = IdealEmulation::shared;
  double oracle_delta_rel = 1e-6;

  // optimization
  std::size_t sgd_T = 40;
  std::uint64_t sgd_per_iter_budget = 200;
  double sgd_step_c = 0.1;
  std::size_t sgd_eval_samples = 10'000;
  std::uint64_t sgd_eval_seed = 20'251'016;

  // bias sweep
  std::size_t bias_atoms = 100'000;
  std::vector<double> bias_vols = {0.1, 0.2};
  double bias_rho = 0.3;
  std::vector<double> bias_deltas = {1e-3, 1.778279410038923e-3, 3.1622776601683794e-3, 5.623413251903491e-3, 1e-2,
                                     1.778279410038923e-2, 3.1622776601683794e-2, 5.623413251903491e-2, 1e-1};

  // resources
  std::uint64_t res_d = 10;
  std::vector<std::uint64_t> res_bins = {256, 1024, 4096};
  std::vector<double> res_eps = {1e-1, 1e-2, 1e-3};
  std::uint64_t res_code_distance = 30;
  double res_layout_alpha = 1.1;
  std::uint64_t res_ancilla_budget = 10;

  std::uint64_t seed = 0;
  std::string out_dir = "out";
  bool plots = true;
  std::size_t threads = 0;

  ReturnModel model() const {
    Vector vols = model_vols.empty() ? linspace(0.1, 0.3, model_d) : to_vector(model_vols);
    Vector mean = Vector::Zero(static_cast<Eigen::Index>(model_d));
    if (model_mean.size() == 1) mean.setConstant(model_mean.front());
    else if (!model_mean.empty()) mean = to_vector(model_mean);
    detail::require(static_cast<std::size_t>(vols.size()) == model_d, "config: model.vols must have model.d entries");
    detail::require(static_cast<std::size_t>(mean.size()) == model_d, "config: model.mean must have model.d entries");
    return make_return_model(mean, vols, model_rho);
  }

  ReturnModel bias_model() const {
    return make_return_model(Vector::Zero(static_cast<Eigen::Index>(bias_vols.size())), to_vector(bias_vols), bias_rho);
  }

  static Vector to_vector(const std::vector<double>& v) {
    Vector out(static_cast<Eigen::Index>(v.size()));
    for (std::size_t i = 0; i < v.size(); ++i) out[static_cast<Eigen::Index>(i)] = v[i];
    return out;
  }
};

namespace detail {

inline std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <class T>
T parse_number(std::string_view text, const std::string& key) {
  text = trim(text);
  T value{};
  const auto* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (ec != std::errc{} || ptr != end)
    throw InvalidParameter("config: cannot parse '" + std::string(text) + "' for key " + key);
  return value;
}

template <class T>
std::vector<T> parse_list(std::string_view text, const std::string& key) {
  std::vector<T> out;
  while (true) {
    const auto comma = text.find(',');
    out.push_back(parse_number<T>(text.substr(0, comma), key));
    if (comma == std::string_view::npos) break;
    text.remove_prefix(comma + 1);
  }
  return out;
}

inline bool parse_bool(std::string_view text, const std::string& key) {
  text = trim(text);
  if (text == "true" || text == "1") return true;
  if (text == "false" || text == "0") return false;
  throw InvalidParameter("config: expected true/false for key " + key);
}

}  // namespace detail

/// Applies one key=value assignment.
inline void apply_config_entry(ExperimentConfig& c, const std::string& key, std::string_view value) {
  using detail::parse_list;
  using detail::parse_number;
  const std::string_view v = detail::trim(value);
  if (key == "model.d") c.model_d = parse_number<std::size_t>(v, key);
  else if (key == "model.rho") c.model_rho = parse_number<double>(v, key);
  else if (key == "model.vols") c.model_vols = parse_list<double>(v, key);
  else if (key == "model.mean") c.model_mean = parse_list<double>(v, key);
  else if (key == "alpha") c.alpha = parse_number<double>(v, key);
  else if (key == "sweep.budgets_mc") c.budgets_mc = parse_list<std::uint64_t>(v, key);
  else if (key == "sweep.budgets_qae") c.budgets_qae = parse_list<std::uint64_t>(v, key);
  else if (key == "sweep.replications") c.replications = parse_number<std::size_t>(v, key);
  else if (key == "sweep.truth_samples") c.truth_samples = parse_number<std::size_t>(v, key);
  else if (key == "sweep.truth") {
    if (v == "analytic") c.truth = TruthKind::analytic;
    else if (v == "mc") c.truth = TruthKind::mc;
    else throw InvalidParameter("config: sweep.truth must be analytic or mc");
  } else if (key == "qae.backend") {
    if (v == "ideal") c.qae_backend = QaeBackend::ideal;
    else if (v == "mlae") c.qae_backend = QaeBackend::mlae;
    else if (v == "exact") c.qae_backend = QaeBackend::exact;
    else throw InvalidParameter("config: qae.backend must be ideal, mlae or exact");
  } else if (key == "qae.emulation") {
    if (v == "shared") c.qae_emulation = IdealEmulation::shared;
    else if (v == "per_circuit") c.qae_emulation = IdealEmulation::per_circuit;
    else throw InvalidParameter("config: qae.emulation must be shared or per_circuit");
  } else if (key == "oracle.delta_rel") c.oracle_delta_rel = parse_number<double>(v, key);
  else if (key == "sgd.T") c.sgd_T = parse_number<std::size_t>(v, key);
  else if (key == "sgd.per_iter_budget") c.sgd_per_iter_budget = parse_number<std::uint64_t>(v, key);
  else if (key == "sgd.step_c") c.sgd_step_c = parse_number<double>(v, key);
  else if (key == "sgd.eval_samples") c.sgd_eval_samples = parse_number<std::size_t>(v, key);
  else if (key == "sgd.eval_seed") c.sgd_eval_seed = parse_number<std::uint64_t>(v, key);
  else if (key == "bias.atoms") c.bias_atoms = parse_number<std::size_t>(v, key);
  else if (key == "bias.vols") c.bias_vols = parse_list<double>(v, key);
  else if (key == "bias.rho") c.bias_rho = parse_number<double>(v, key);
  else if (key == "bias.deltas") c.bias_deltas = parse_list<double>(v, key);
  else if (key == "resources.d") c.res_d = parse_number<std::uint64_t>(v, key);
  else if (key == "resources.bins") c.res_bins = parse_list<std::uint64_t>(v, key);
  else if (key == "resources.eps") c.res_eps = parse_list<double>(v, key);
  else if (key == "resources.code_distance") c.res_code_distance = parse_number<std::uint64_t>(v, key);
  else if (key == "resources.layout_alpha") c.res_layout_alpha = parse_number<double>(v, key);
  else if (key == "resources.ancilla_budget") c.res_ancilla_budget = parse_number<std::uint64_t>(v, key);
  else if (key == "seed") c.seed = parse_number<std::uint64_t>(v, key);
  else if (key == "out_dir") c.out_dir = std::string(v);
  else if (key == "plots") c.plots = detail::parse_bool(v, key);
  else if (key == "threads") c.threads = parse_number<std::size_t>(v, key);
  else throw InvalidParameter("config: unknown key '" + key + "'");
}

inline ExperimentConfig parse_config(std::istream& in, ExperimentConfig c = {}) {
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::string_view s(line);
    if (const auto hash = s.find('#'); hash != std::string_view::npos) s = s.substr(0, hash);
    s = detail::trim(s);
    if (s.empty()) continue;
    const auto eq = s.find('=');
    if (eq == std::string_view::npos)
      throw InvalidParameter("config line " + std::to_string(lineno) + ": expected key = value");
    apply_config_entry(c, std::string(detail::trim(s.substr(0, eq))), s.substr(eq + 1));
  }
  return c;
}

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file " + path);
  return parse_config(in);
}

}  // namespace qcvar
