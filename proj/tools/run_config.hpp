#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "grfx/grfx.hpp"

namespace grfx::cli {

using json = nlohmann::ordered_json;

[[noreturn]] inline void config_error(const std::string& what) { throw Error(ErrorCode::config_invalid, what); }

inline const std::vector<std::string>& command_names() {
  static const std::vector<std::string> names{"estimate", "crude",    "asymptotic", "conditional",
                                              "diagnostic", "validate", "sweep"};
  return names;
}

struct ModelSpec {
  int dim = 1;
  std::vector<double> lower, upper;
  double sigma = 1.0;
  std::string kernel = "squared_exponential";
  double length_scale = 1.0;
  double alpha = 1.0;
  std::optional<Eigen::MatrixXd> transform;
  std::string mean_kind = "zero";
  double peak = 0.0;
  std::vector<double> t_star;
  Eigen::MatrixXd curvature;
};

enum class TargetKind { b, log_b, log10_v };

struct TargetSpec {
  TargetKind kind = TargetKind::log_b;
  double value = 0.0;
};

struct DiscretizationSpec {
  std::optional<int> N;
  double epsilon = 0.5;
  double epsilon0 = 0.1;
  double kappa0 = 1.0;
};

struct TuningOverrides {
  std::optional<double> rho1, rho2, lambda, lambda1, eta;
  [[nodiscard]] bool complete() const { return rho1 && rho2 && lambda && lambda1 && eta; }
  [[nodiscard]] bool empty() const { return !rho1 && !rho2 && !lambda && !lambda1 && !eta; }
};

struct FunctionalSpec {
  std::string kind = "overshoot";
  int axis = 0;
  std::vector<double> point;
};

struct SweepSpec {
  TargetKind kind = TargetKind::log10_v;
  std::vector<double> values;
  std::optional<std::int64_t> crude_replicates;
};

enum class Standardize { automatic, on, off };

struct RunConfig {
  std::string command;
  ModelSpec model;
  std::optional<TargetSpec> target;
  DiscretizationSpec discretization;
  std::int64_t replicates = 10000;
  std::uint64_t seed = 1;
  int workers = 1;
  int max_dimension = 8000;
  TuningOverrides tuning;
  Standardize standardize = Standardize::automatic;
  FunctionalSpec functional;
  std::optional<SweepSpec> sweep;
};

namespace detail {

inline void only_keys(const json& j, const std::string& where, std::initializer_list<const char*> keys) {
  if (!j.is_object()) config_error(where + " must be an object");
  std::set<std::string> allowed(keys.begin(), keys.end());
  for (auto it = j.begin(); it != j.end(); ++it)
    if (!allowed.count(it.key())) config_error("unknown key '" + it.key() + "' in " + where);
}

inline double number(const json& j, const std::string& what) {
  if (!j.is_number()) config_error(what + " must be a number");
  const double v = j.get<double>();
  if (!std::isfinite(v)) config_error(what + " must be finite");
  return v;
}

inline std::int64_t integer(const json& j, const std::string& what) {
  if (!j.is_number_integer()) config_error(what + " must be an integer");
  return j.get<std::int64_t>();
}

inline std::vector<double> numbers(const json& j, const std::string& what) {
  if (!j.is_array() || j.empty()) config_error(what + " must be a nonempty array of numbers");
  std::vector<double> v;
  for (std::size_t i = 0; i < j.size(); ++i) v.push_back(number(j[i], what + "[" + std::to_string(i) + "]"));
  return v;
}

inline Eigen::MatrixXd matrix(const json& j, int d, const std::string& what) {
  if (!j.is_array() || static_cast<int>(j.size()) != d) config_error(what + " must be a " + std::to_string(d) + "x" + std::to_string(d) + " array");
  Eigen::MatrixXd m(d, d);
  for (int r = 0; r < d; ++r) {
    const auto row = numbers(j[static_cast<std::size_t>(r)], what);
    if (static_cast<int>(row.size()) != d) config_error(what + " rows must have " + std::to_string(d) + " entries");
    for (int c = 0; c < d; ++c) m(r, c) = row[static_cast<std::size_t>(c)];
  }
  return m;
}

inline json matrix_json(const Eigen::MatrixXd& m) {
  json rows = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    json row = json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(row);
  }
  return rows;
}

inline const char* target_key(TargetKind k) {
  switch (k) {
    case TargetKind::b: return "b";
    case TargetKind::log_b: return "log_b";
    case TargetKind::log10_v: return "target_log10_v";
  }
  return "";
}

template <class F>
std::optional<TargetKind> pick_target(const json& j, const std::string& where, F&& on_value) {
  std::optional<TargetKind> found;
  for (TargetKind k : {TargetKind::b, TargetKind::log_b, TargetKind::log10_v}) {
    if (!j.contains(target_key(k))) continue;
    if (found) config_error(where + " must give exactly one of b, log_b, target_log10_v");
    found = k;
    on_value(k, j.at(target_key(k)));
  }
  return found;
}

inline ModelSpec parse_model(const json& j) {
  only_keys(j, "model", {"dim", "domain", "sigma", "covariance", "mean"});
  ModelSpec m;
  if (!j.contains("domain")) config_error("model.domain is required");
  const json& dom = j.at("domain");
  only_keys(dom, "model.domain", {"lower", "upper"});
  if (!dom.contains("lower") || !dom.contains("upper")) config_error("model.domain needs lower and upper");
  m.lower = numbers(dom.at("lower"), "model.domain.lower");
  m.upper = numbers(dom.at("upper"), "model.domain.upper");
  m.dim = j.contains("dim") ? static_cast<int>(integer(j.at("dim"), "model.dim")) : static_cast<int>(m.lower.size());
  if (m.dim < 1 || m.dim > 3) config_error("model.dim must be 1, 2 or 3");
  if (static_cast<int>(m.lower.size()) != m.dim || static_cast<int>(m.upper.size()) != m.dim)
    config_error("model.domain corners must have dim entries");
  for (int i = 0; i < m.dim; ++i)
    if (!(m.lower[static_cast<std::size_t>(i)] < m.upper[static_cast<std::size_t>(i)]))
      config_error("model.domain needs lower < upper on every axis");
  if (j.contains("sigma")) m.sigma = number(j.at("sigma"), "model.sigma");
  if (!(m.sigma > 0.0)) config_error("model.sigma must be positive");

  if (j.contains("covariance")) {
    const json& c = j.at("covariance");
    only_keys(c, "model.covariance", {"kind", "length_scale", "alpha", "transform"});
    if (c.contains("kind")) {
      if (!c.at("kind").is_string()) config_error("model.covariance.kind must be a string");
      m.kernel = c.at("kind").get<std::string>();
    }
    if (m.kernel != "squared_exponential" && m.kernel != "rational_quadratic")
      config_error("model.covariance.kind must be squared_exponential or rational_quadratic");
    if (c.contains("length_scale")) m.length_scale = number(c.at("length_scale"), "model.covariance.length_scale");
    if (c.contains("alpha")) m.alpha = number(c.at("alpha"), "model.covariance.alpha");
    if (!(m.length_scale > 0.0) || !(m.alpha > 0.0)) config_error("model.covariance parameters must be positive");
    if (c.contains("transform")) m.transform = matrix(c.at("transform"), m.dim, "model.covariance.transform");
  }

  if (j.contains("mean")) {
    const json& mu = j.at("mean");
    only_keys(mu, "model.mean", {"kind", "peak", "t_star", "curvature"});
    if (mu.contains("kind")) {
      if (!mu.at("kind").is_string()) config_error("model.mean.kind must be a string");
      m.mean_kind = mu.at("kind").get<std::string>();
    }
    if (m.mean_kind == "concave_quadratic") {
      if (!mu.contains("t_star") || !mu.contains("curvature"))
        config_error("model.mean of kind concave_quadratic needs t_star and curvature");
      m.peak = mu.contains("peak") ? number(mu.at("peak"), "model.mean.peak") : 0.0;
      m.t_star = numbers(mu.at("t_star"), "model.mean.t_star");
      if (static_cast<int>(m.t_star.size()) != m.dim) config_error("model.mean.t_star must have dim entries");
      m.curvature = matrix(mu.at("curvature"), m.dim, "model.mean.curvature");
    } else if (m.mean_kind != "zero") {
      config_error("model.mean.kind must be zero or concave_quadratic");
    } else if (mu.size() > 1) {
      config_error("model.mean of kind zero takes no parameters");
    }
  }
  return m;
}

inline TargetSpec parse_target(const json& j) {
  only_keys(j, "target", {"b", "log_b", "target_log10_v"});
  TargetSpec t;
  const auto k = pick_target(j, "target", [&](TargetKind kind, const json& v) {
    t.kind = kind;
    t.value = number(v, std::string("target.") + target_key(kind));
  });
  if (!k) config_error("target must give exactly one of b, log_b, target_log10_v");
  if (t.kind == TargetKind::b && !(t.value > 0.0)) config_error("target.b must be positive");
  if (t.kind == TargetKind::log10_v && !(t.value < 0.0)) config_error("target.target_log10_v must be negative");
  return t;
}

inline Standardize parse_standardize(const json& j) {
  if (j.is_boolean()) return j.get<bool>() ? Standardize::on : Standardize::off;
  if (j.is_string() && j.get<std::string>() == "auto") return Standardize::automatic;
  config_error("standardize must be true, false or \"auto\"");
}

}  // namespace detail

inline RunConfig parse_config(const json& j) {
  using namespace detail;
  only_keys(j, "config", {"command", "model", "target", "discretization", "replicates", "seed", "tuning",
                          "standardize", "functional", "sweep", "max_dimension", "workers"});
  RunConfig c;
  if (j.contains("command")) {
    if (!j.at("command").is_string()) config_error("command must be a string");
    c.command = j.at("command").get<std::string>();
  }
  if (!j.contains("model")) config_error("model is required");
  c.model = parse_model(j.at("model"));
  if (j.contains("target")) c.target = parse_target(j.at("target"));

  if (j.contains("discretization")) {
    const json& d = j.at("discretization");
    only_keys(d, "discretization", {"N", "auto"});
    if (d.contains("N") == d.contains("auto")) config_error("discretization must give exactly one of N and auto");
    if (d.contains("N")) {
      const auto n = integer(d.at("N"), "discretization.N");
      if (n < 1 || n > 100000) config_error("discretization.N must be a positive integer");
      c.discretization.N = static_cast<int>(n);
    } else {
      const json& a = d.at("auto");
      only_keys(a, "discretization.auto", {"epsilon", "epsilon0", "kappa0"});
      if (a.contains("epsilon")) c.discretization.epsilon = number(a.at("epsilon"), "discretization.auto.epsilon");
      if (a.contains("epsilon0")) c.discretization.epsilon0 = number(a.at("epsilon0"), "discretization.auto.epsilon0");
      if (a.contains("kappa0")) c.discretization.kappa0 = number(a.at("kappa0"), "discretization.auto.kappa0");
      if (!(c.discretization.epsilon > 0.0 && c.discretization.epsilon < 1.0))
        config_error("discretization.auto.epsilon must lie in (0, 1)");
      if (!(c.discretization.epsilon0 > 0.0) || !(c.discretization.kappa0 > 0.0))
        config_error("discretization.auto epsilon0 and kappa0 must be positive");
    }
  } else {
    c.discretization.N = 4;
  }

  if (j.contains("replicates")) c.replicates = integer(j.at("replicates"), "replicates");
  if (c.replicates < 2) config_error("replicates must be at least 2");
  if (j.contains("seed")) {
    if (!j.at("seed").is_number_unsigned() && !(j.at("seed").is_number_integer() && j.at("seed").get<std::int64_t>() >= 0))
      config_error("seed must be an unsigned 64-bit integer");
    c.seed = j.at("seed").get<std::uint64_t>();
  }
  if (j.contains("workers")) {
    const auto w = integer(j.at("workers"), "workers");
    if (w < 1 || w > 1024) config_error("workers must be in [1, 1024]");
    c.workers = static_cast<int>(w);
  }
  if (j.contains("max_dimension")) {
    const auto m = integer(j.at("max_dimension"), "max_dimension");
    if (m < 1 || m > 200000) config_error("max_dimension must be in [1, 200000]");
    c.max_dimension = static_cast<int>(m);
  }
  if (j.contains("tuning")) {
    const json& t = j.at("tuning");
    only_keys(t, "tuning", {"rho1", "rho2", "lambda", "lambda1", "eta"});
    auto grab = [&](const char* k, std::optional<double>& slot) {
      if (t.contains(k)) slot = number(t.at(k), std::string("tuning.") + k);
    };
    grab("rho1", c.tuning.rho1);
    grab("rho2", c.tuning.rho2);
    grab("lambda", c.tuning.lambda);
    grab("lambda1", c.tuning.lambda1);
    grab("eta", c.tuning.eta);
  }
  if (j.contains("standardize")) c.standardize = parse_standardize(j.at("standardize"));
  if (j.contains("functional")) {
    const json& f = j.at("functional");
    only_keys(f, "functional", {"kind", "axis", "point"});
    if (f.contains("kind")) {
      if (!f.at("kind").is_string()) config_error("functional.kind must be a string");
      c.functional.kind = f.at("kind").get<std::string>();
    }
    if (c.functional.kind == "value_at") {
      if (!f.contains("point")) config_error("functional value_at needs point");
      c.functional.point = numbers(f.at("point"), "functional.point");
      if (static_cast<int>(c.functional.point.size()) != c.model.dim) config_error("functional.point must have dim entries");
    } else if (c.functional.kind == "argmax_location") {
      if (f.contains("axis")) c.functional.axis = static_cast<int>(integer(f.at("axis"), "functional.axis"));
      if (c.functional.axis < 0 || c.functional.axis >= c.model.dim) config_error("functional.axis out of range");
    } else if (c.functional.kind != "overshoot") {
      config_error("functional.kind must be overshoot, value_at or argmax_location");
    }
  }
  if (j.contains("sweep")) {
    const json& s = j.at("sweep");
    only_keys(s, "sweep", {"b", "log_b", "target_log10_v", "crude_replicates"});
    SweepSpec sw;
    const auto k = pick_target(s, "sweep", [&](TargetKind kind, const json& v) {
      sw.kind = kind;
      sw.values = numbers(v, std::string("sweep.") + target_key(kind));
    });
    if (!k) config_error("sweep must give exactly one of b, log_b, target_log10_v");
    for (double v : sw.values) {
      if (sw.kind == TargetKind::b && !(v > 0.0)) config_error("sweep.b entries must be positive");
      if (sw.kind == TargetKind::log10_v && !(v < 0.0)) config_error("sweep.target_log10_v entries must be negative");
    }
    if (s.contains("crude_replicates")) {
      sw.crude_replicates = integer(s.at("crude_replicates"), "sweep.crude_replicates");
      if (*sw.crude_replicates < 2) config_error("sweep.crude_replicates must be at least 2");
    }
    c.sweep = sw;
  }
  return c;
}

inline RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) config_error("cannot open config file " + path);
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    config_error(std::string("malformed JSON: ") + e.what());
  }
  return parse_config(j);
}

/// Realizes the model block; failures are configuration errors.
inline FieldModel build_model(const ModelSpec& s) {
  try {
    const int d = s.dim;
    Domain dom{Eigen::Map<const Eigen::VectorXd>(s.lower.data(), d), Eigen::Map<const Eigen::VectorXd>(s.upper.data(), d)};
    const auto profile =
        s.kernel == "rational_quadratic" ? RadialProfile::rational_quadratic : RadialProfile::squared_exponential;
    KernelPtr k = std::make_shared<RadialCovariance>(d, profile, s.length_scale, s.alpha);
    if (s.transform) k = std::make_shared<LinearlyTransformedCovariance>(k, *s.transform);
    MeanFunction mean = s.mean_kind == "concave_quadratic"
                            ? MeanFunction::concave_quadratic(s.peak, Eigen::Map<const Eigen::VectorXd>(s.t_star.data(), d),
                                                              s.curvature)
                            : MeanFunction::zero(d);
    return make_model(std::move(dom), s.sigma, std::move(k), std::move(mean));
  } catch (const Error& e) {
    config_error(std::string("model: ") + e.what());
  }
}

inline json model_json(const ModelSpec& s) {
  json cov{{"kind", s.kernel}, {"length_scale", s.length_scale}};
  if (s.kernel == "rational_quadratic") cov["alpha"] = s.alpha;
  if (s.transform) cov["transform"] = detail::matrix_json(*s.transform);
  json mean{{"kind", s.mean_kind}};
  if (s.mean_kind == "concave_quadratic") {
    mean["peak"] = s.peak;
    mean["t_star"] = s.t_star;
    mean["curvature"] = detail::matrix_json(s.curvature);
  }
  return json{{"dim", s.dim},
              {"domain", {{"lower", s.lower}, {"upper", s.upper}}},
              {"sigma", s.sigma},
              {"covariance", cov},
              {"mean", mean}};
}

inline json tuning_overrides_json(const TuningOverrides& t) {
  json j = json::object();
  if (t.rho1) j["rho1"] = *t.rho1;
  if (t.rho2) j["rho2"] = *t.rho2;
  if (t.lambda) j["lambda"] = *t.lambda;
  if (t.lambda1) j["lambda1"] = *t.lambda1;
  if (t.eta) j["eta"] = *t.eta;
  return j;
}

inline json functional_json(const FunctionalSpec& f) {
  json j{{"kind", f.kind}};
  if (f.kind == "value_at") j["point"] = f.point;
  if (f.kind == "argmax_location") j["axis"] = f.axis;
  return j;
}

/// Config document for `c`, in the same format parse_config reads.
inline json config_json(const RunConfig& c) {
  json j{{"command", c.command}, {"model", model_json(c.model)}};
  if (c.target) j["target"] = json{{detail::target_key(c.target->kind), c.target->value}};
  if (c.discretization.N) {
    j["discretization"] = json{{"N", *c.discretization.N}};
  } else {
    j["discretization"] = json{{"auto",
                                {{"epsilon", c.discretization.epsilon},
                                 {"epsilon0", c.discretization.epsilon0},
                                 {"kappa0", c.discretization.kappa0}}}};
  }
  j["replicates"] = c.replicates;
  j["seed"] = c.seed;
  j["max_dimension"] = c.max_dimension;
  if (!c.tuning.empty()) j["tuning"] = tuning_overrides_json(c.tuning);
  j["standardize"] = c.standardize == Standardize::automatic ? json("auto") : json(c.standardize == Standardize::on);
  if (c.command == "conditional") j["functional"] = functional_json(c.functional);
  if (c.sweep) {
    json s{{detail::target_key(c.sweep->kind), c.sweep->values}};
    if (c.sweep->crude_replicates) s["crude_replicates"] = *c.sweep->crude_replicates;
    j["sweep"] = s;
  }
  return j;
}

}  // namespace grfx::cli
