#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <limits>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "run_config.hpp"

namespace {

using namespace grfx;
using grfx::cli::json;
using grfx::cli::RunConfig;
using grfx::cli::Standardize;
using grfx::cli::TargetKind;

constexpr const char* kSchemaVersion = "1.0.0";

int exit_code_for(const Error& e) { return e.is_config_error() ? 2 : 3; }

json finite_or_null(double x) { return std::isfinite(x) ? json(x) : json(nullptr); }

json tuning_json(const Tuning& t) {
  return json{{"rho1", t.rho1},          {"rho2", t.rho2}, {"lambda", t.lambda}, {"lambda1", t.lambda1},
              {"eta", t.eta},            {"from_schedule", t.from_schedule},     {"clamped", t.clamped}};
}

json estimate_json(const ISEstimate& e) {
  return json{{"v_hat", e.v_hat},
              {"log_v_hat", finite_or_null(e.log_v_hat)},
              {"log10_v_hat", finite_or_null(e.log_v_hat / std::numbers::ln10)},
              {"std_err", e.std_err},
              {"rel_err", finite_or_null(e.rel_err)},
              {"n", e.n},
              {"hit_rate", e.hit_rate}};
}

json branch_json(const Diagnostics& d) {
  return json{{"h0", d.branch_counts[0]}, {"h1", d.branch_counts[1]}, {"exp_tilt", d.branch_counts[2]}};
}

json checks_json(const ConditionReport& r) {
  json a = json::array();
  for (const auto& c : r.checks)
    a.push_back(json{{"name", c.name}, {"status", std::string(to_string(c.status))}, {"residual", finite_or_null(c.residual)},
                     {"detail", c.detail}});
  return a;
}

/// Everything derived from the config before any sampling.
struct Prepared {
  FieldModel original;
  FieldModel model;  // possibly standardized
  bool standardized = false;
  ConditionReport conditions;
  SpectralMoments moments;
};

Prepared prepare(const RunConfig& cfg) {
  Prepared p{cli::build_model(cfg.model), {}, false, {}, {}};
  p.conditions = check_conditions(p.original);
  const bool hessian_ok = p.conditions.at("C4_hessian").status != CheckStatus::fail;
  const bool apply = cfg.standardize == Standardize::on || (cfg.standardize == Standardize::automatic && !hessian_ok);
  if (apply) {
    p.model = standardize_hessian(p.original).model;
    p.standardized = true;
  } else {
    p.model = p.original;
  }
  p.moments = spectral_moments(p.model);
  return p;
}

struct ResolvedTarget {
  Threshold b;
  TargetKind source = TargetKind::log_b;
  double requested = 0.0;
};

ResolvedTarget resolve_target(const Prepared& p, TargetKind kind, double value) {
  ResolvedTarget t{Threshold::from_log(0.0), kind, value};
  switch (kind) {
    case TargetKind::b: t.b = Threshold::from_value(value); break;
    case TargetKind::log_b: t.b = Threshold::from_log(value); break;
    case TargetKind::log10_v: t.b = threshold_for_log_probability(p.model, p.moments, value * std::numbers::ln10); break;
  }
  return t;
}

int resolve_N(const RunConfig& cfg, Threshold b) {
  if (cfg.discretization.N) return *cfg.discretization.N;
  const auto n = choose_N(b, cfg.discretization.epsilon, cfg.discretization.epsilon0, cfg.discretization.kappa0);
  if (n > 100000) throw Error(ErrorCode::out_of_range, "automatic N = " + std::to_string(n) + " exceeds 100000");
  return static_cast<int>(n);
}

std::optional<Tuning> resolve_tuning(const RunConfig& cfg, const FieldModel& model, Threshold b) {
  const auto& o = cfg.tuning;
  if (o.empty()) return std::nullopt;
  Tuning t;
  if (!o.complete()) t = default_tuning(Threshold::from_log(b.log_b - model.log_jacobian));
  if (o.rho1) t.rho1 = *o.rho1;
  if (o.rho2) t.rho2 = *o.rho2;
  if (o.lambda) t.lambda = *o.lambda;
  if (o.lambda1) t.lambda1 = *o.lambda1;
  if (o.eta) t.eta = *o.eta;
  t.from_schedule = false;
  t.clamped = false;
  try {
    t.validate();
  } catch (const Error& e) {
    cli::config_error(std::string("tuning: ") + e.what());
  }
  return t;
}

EstimatorOptions options_for(const RunConfig& cfg, const Prepared& p, Threshold b, int N, int workers) {
  EstimatorOptions opt;
  opt.subdivisions = N;
  opt.tuning = resolve_tuning(cfg, p.model, b);
  opt.max_dimension = cfg.max_dimension;
  opt.workers = workers;
  return opt;
}

json threshold_json(const ResolvedTarget& t, const Prepared& p) {
  json j{{"log_b", t.b.log_b}, {"b", finite_or_null(t.b.value())}};
  j["standardized_log_b"] = t.b.log_b - p.model.log_jacobian;
  try {
    j["u"] = solve_u(Threshold::from_log(t.b.log_b - p.model.log_jacobian), p.model.sigma, p.model.dim());
  } catch (const Error&) {
    j["u"] = nullptr;
  }
  j["source"] = cli::detail::target_key(t.source);
  if (t.source == TargetKind::log10_v) j["requested_log10_v"] = t.requested;
  j["approximate"] = t.source == TargetKind::log10_v;
  return j;
}

json model_summary(const Prepared& p) {
  return json{{"dim", p.model.dim()},
              {"sigma", p.model.sigma},
              {"domain_measure", p.original.domain.measure()},
              {"standardized", p.standardized},
              {"log_jacobian", p.model.log_jacobian},
              {"conditions_ok", p.conditions.ok()}};
}

json diagnostics_json(const Diagnostics& d) {
  return json{{"u", d.u},
              {"points", d.points},
              {"N", d.subdivisions},
              {"tuning", tuning_json(d.tuning)},
              {"jitter_used", d.jitter_used},
              {"branch_counts", branch_json(d)}};
}

/// Affine map between original and standardized coordinates per axis.
double to_standardized(const Prepared& p, int axis, double x) {
  const auto& a = p.original.domain;
  const auto& s = p.model.domain;
  return s.lower(axis) + (x - a.lower(axis)) * (s.upper(axis) - s.lower(axis)) / (a.upper(axis) - a.lower(axis));
}

double to_original(const Prepared& p, int axis, double x) {
  const auto& a = p.original.domain;
  const auto& s = p.model.domain;
  return a.lower(axis) + (x - s.lower(axis)) * (a.upper(axis) - a.lower(axis)) / (s.upper(axis) - s.lower(axis));
}

struct Command {
  const RunConfig& cfg;
  RunConfig effective;
  json doc;
  std::uint64_t seed;
  int workers;
  std::string csv_path;
};

void require_target(const RunConfig& cfg) {
  if (!cfg.target) cli::config_error("command '" + cfg.command + "' needs a target block");
}

/// Shared threshold/N resolution; fixes both in the effective config.
struct SingleRun {
  Prepared p;
  ResolvedTarget target;
  int N = 0;
  EstimatorOptions options;
};

SingleRun single_run(Command& c) {
  require_target(c.cfg);
  SingleRun r{prepare(c.cfg), {}, 0, {}};
  r.target = resolve_target(r.p, c.cfg.target->kind, c.cfg.target->value);
  r.N = resolve_N(c.cfg, r.target.b);
  r.options = options_for(c.cfg, r.p, r.target.b, r.N, c.workers);
  c.effective.target = cli::TargetSpec{TargetKind::log_b, r.target.b.log_b};
  c.effective.discretization.N = r.N;
  if (r.options.tuning) {
    const Tuning& t = *r.options.tuning;
    c.effective.tuning = cli::TuningOverrides{t.rho1, t.rho2, t.lambda, t.lambda1, t.eta};
  }
  c.effective.standardize = r.p.standardized ? Standardize::on : Standardize::off;
  c.doc["model_summary"] = model_summary(r.p);
  c.doc["threshold"] = threshold_json(r.target, r.p);
  std::clog << "grfx: " << c.cfg.command << " log_b=" << r.target.b.log_b << " N=" << r.N << " n=" << c.cfg.replicates
            << " workers=" << c.workers << '\n';
  return r;
}

void run_estimate(Command& c) {
  auto r = single_run(c);
  const auto e = estimate_is(r.p.model, r.target.b, c.cfg.replicates, c.seed, r.options);
  c.doc["result"] = json{{"estimate", estimate_json(e)}};
  c.doc["diagnostics"] = diagnostics_json(e.diagnostics);
}

void run_crude(Command& c) {
  auto r = single_run(c);
  const auto e = crude_mc(r.p.model, r.target.b, c.cfg.replicates, c.seed, r.options);
  const Lattice lattice = build_lattice(r.p.model, r.N);
  c.doc["result"] = json{{"estimate", estimate_json(e)}};
  c.doc["diagnostics"] = json{{"points", lattice.size()}, {"N", r.N}, {"jitter_used", e.diagnostics.jitter_used}};
}

void run_asymptotic(Command& c) {
  require_target(c.cfg);
  Prepared p = prepare(c.cfg);
  const auto t = resolve_target(p, c.cfg.target->kind, c.cfg.target->value);
  c.effective.target = cli::TargetSpec{TargetKind::log_b, t.b.log_b};
  c.effective.standardize = p.standardized ? Standardize::on : Standardize::off;
  const double lv = asymptotic_vb(p.model, p.moments, t.b);
  c.doc["model_summary"] = model_summary(p);
  c.doc["threshold"] = threshold_json(t, p);
  c.doc["result"] = json{{"v", std::exp(lv)}, {"log_v", finite_or_null(lv)}, {"log10_v", finite_or_null(lv / std::numbers::ln10)}};
}

void run_conditional(Command& c) {
  auto r = single_run(c);
  const auto& f = c.cfg.functional;
  Functional fn;
  json fdesc = cli::functional_json(f);
  if (f.kind == "overshoot") {
    fn = functionals::overshoot();
  } else if (f.kind == "argmax_location") {
    fn = functionals::argmax_location(f.axis);
  } else {
    const Lattice lattice = build_lattice(r.p.model, r.N);
    Eigen::VectorXd t(r.p.model.dim());
    for (int i = 0; i < t.size(); ++i) t(i) = to_standardized(r.p, i, f.point[static_cast<std::size_t>(i)]);
    const int idx = lattice.nearest(t);
    Eigen::VectorXd at = lattice.points[static_cast<std::size_t>(idx)];
    for (int i = 0; i < at.size(); ++i) at(i) = to_original(r.p, i, at(i));
    fdesc["lattice_index"] = idx;
    fdesc["lattice_point"] = std::vector<double>(at.data(), at.data() + at.size());
    fn = functionals::value_at(idx);
  }
  const RareEventProblem problem(r.p.model, r.target.b, r.options);
  const auto reps = problem.run(c.cfg.replicates, c.seed, {fn});
  ConditionalEstimate ce = conditional_from_replicates(problem, reps, 0);
  if (f.kind == "argmax_location") {
    const double scale = (r.p.original.domain.upper(f.axis) - r.p.original.domain.lower(f.axis)) /
                         (r.p.model.domain.upper(f.axis) - r.p.model.domain.lower(f.axis));
    ce.value = to_original(r.p, f.axis, ce.value);
    ce.std_err *= scale;
  }
  c.doc["result"] = json{{"functional", fdesc},
                         {"value", ce.value},
                         {"std_err", ce.std_err},
                         {"hits", ce.hits},
                         {"n", ce.n},
                         {"probability", estimate_json(ce.probability)}};
  c.doc["diagnostics"] = diagnostics_json(ce.probability.diagnostics);
}

void run_diagnostic(Command& c) {
  auto r = single_run(c);
  const auto s = sup_diagnostic(r.p.model, r.target.b, c.cfg.replicates, c.seed, r.options);
  c.doc["result"] = json{{"sup", estimate_json(s.sup)}, {"integral", estimate_json(s.integral)}, {"ratio", finite_or_null(s.ratio)}};
  c.doc["diagnostics"] = diagnostics_json(s.integral.diagnostics);
}

void run_validate(Command& c) {
  Prepared p = prepare(c.cfg);
  json res{{"ok", p.conditions.ok()}, {"checks", checks_json(p.conditions)}};
  json st{{"applied", p.standardized}, {"log_jacobian", p.model.log_jacobian}};
  if (p.standardized) {
    const auto after = check_conditions(p.model);
    st["ok"] = after.ok();
    st["checks"] = checks_json(after);
  }
  res["standardization"] = st;
  json mom{{"mu20", std::vector<double>(p.moments.mu20.data(), p.moments.mu20.data() + p.moments.mu20.size())},
           {"mu22", cli::detail::matrix_json(p.moments.mu22)}};
  res["spectral_moments"] = mom;
  c.doc["model_summary"] = model_summary(p);
  c.doc["result"] = res;
}

std::string csv_cell(double x) {
  if (!std::isfinite(x)) return "";
  std::ostringstream os;
  os << std::setprecision(17) << x;
  return os.str();
}

void run_sweep(Command& c) {
  if (!c.cfg.sweep) cli::config_error("command 'sweep' needs a sweep block");
  const auto& sw = *c.cfg.sweep;
  Prepared p = prepare(c.cfg);
  c.effective.standardize = p.standardized ? Standardize::on : Standardize::off;
  c.doc["model_summary"] = model_summary(p);
  json rows = json::array();
  std::vector<double> log_bs;
  std::ofstream csv(c.csv_path);
  if (!csv) cli::config_error("cannot write CSV file " + c.csv_path);
  csv << "index,log_b,requested_log10_v,u,N,points,v_hat,log10_v_hat,std_err,rel_err,hit_rate,log10_v_asymptotic,"
         "crude_v_hat,crude_std_err\n";
  for (std::size_t i = 0; i < sw.values.size(); ++i) {
    const auto t = resolve_target(p, sw.kind, sw.values[i]);
    log_bs.push_back(t.b.log_b);
    const int N = resolve_N(c.cfg, t.b);
    const auto opt = options_for(c.cfg, p, t.b, N, c.workers);
    std::clog << "grfx: sweep row " << i << " log_b=" << t.b.log_b << " N=" << N << '\n';
    const auto e = estimate_is(p.model, t.b, c.cfg.replicates, c.seed, opt);
    const double la = asymptotic_vb(p.model, p.moments, t.b);
    json row{{"index", i},
             {"threshold", threshold_json(t, p)},
             {"N", N},
             {"estimate", estimate_json(e)},
             {"log_v_asymptotic", finite_or_null(la)},
             {"log10_v_asymptotic", finite_or_null(la / std::numbers::ln10)},
             {"diagnostics", diagnostics_json(e.diagnostics)}};
    double cv = std::numeric_limits<double>::quiet_NaN(), cs = cv;
    if (sw.crude_replicates) {
      const auto ce = crude_mc(p.model, t.b, *sw.crude_replicates, c.seed, opt);
      row["crude"] = estimate_json(ce);
      cv = ce.v_hat;
      cs = ce.std_err;
    }
    rows.push_back(row);
    csv << i << ',' << csv_cell(t.b.log_b) << ',' << (sw.kind == TargetKind::log10_v ? csv_cell(sw.values[i]) : "") << ','
        << csv_cell(e.diagnostics.u) << ',' << N << ',' << e.diagnostics.points << ',' << csv_cell(e.v_hat) << ','
        << csv_cell(e.log_v_hat / std::numbers::ln10) << ',' << csv_cell(e.std_err) << ',' << csv_cell(e.rel_err) << ','
        << csv_cell(e.hit_rate) << ',' << csv_cell(la / std::numbers::ln10) << ',' << csv_cell(cv) << ',' << csv_cell(cs)
        << '\n';
  }
  c.effective.sweep->kind = TargetKind::log_b;
  c.effective.sweep->values = log_bs;
  c.doc["result"] = json{{"rows", rows}, {"csv", c.csv_path}};
}

void emit_error(std::string_view code, const std::string& message) {
  std::cerr << json{{"error", code}, {"message", message}}.dump() << std::endl;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Rare-event probabilities for integrals of exponentiated Gaussian random fields"};
  std::string command, config_path, out_path, csv_path;
  std::optional<std::uint64_t> seed;
  std::optional<int> workers;
  app.add_option("command", command, "estimate | crude | asymptotic | conditional | diagnostic | validate | sweep")
      ->required()
      ->check(CLI::IsMember(grfx::cli::command_names()));
  app.add_option("--config", config_path, "JSON run configuration")->required();
  app.add_option("--seed", seed, "override the config seed");
  app.add_option("--workers", workers, "worker threads (results do not depend on it)")->check(CLI::Range(1, 1024));
  app.add_option("--out", out_path, "write the JSON result here instead of stdout");
  app.add_option("--csv", csv_path, "CSV path for sweep (default: --out with .csv, else sweep.csv)");
  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    emit_error("config_invalid", e.what());
    return 2;
  }

  const auto start = std::chrono::steady_clock::now();
  try {
    RunConfig cfg = grfx::cli::load_config(config_path);
    if (!cfg.command.empty() && cfg.command != command)
      grfx::cli::config_error("config is for command '" + cfg.command + "', not '" + command + "'");
    cfg.command = command;
    if (seed) cfg.seed = *seed;
    if (workers) cfg.workers = *workers;
    if (csv_path.empty())
      csv_path = out_path.empty() ? "sweep.csv" : std::filesystem::path(out_path).replace_extension(".csv").string();

    Command c{cfg, cfg, json::object(), cfg.seed, cfg.workers, csv_path};
    c.doc["schema_version"] = kSchemaVersion;
    c.doc["command"] = command;
    c.doc["seed"] = cfg.seed;
    if (command == "estimate") run_estimate(c);
    else if (command == "crude") run_crude(c);
    else if (command == "asymptotic") run_asymptotic(c);
    else if (command == "conditional") run_conditional(c);
    else if (command == "diagnostic") run_diagnostic(c);
    else if (command == "validate") run_validate(c);
    else run_sweep(c);

    json doc{{"schema_version", c.doc["schema_version"]}, {"command", command}, {"seed", cfg.seed}};
    doc["effective_config"] = grfx::cli::config_json(c.effective);
    for (const char* k : {"model_summary", "threshold", "result", "diagnostics"})
      if (c.doc.contains(k)) doc[k] = c.doc[k];
    const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    doc["run"] = json{{"workers", cfg.workers}, {"wall_time_seconds", wall}};

    const std::string text = doc.dump(2) + "\n";
    if (out_path.empty()) {
      std::cout << text;
    } else {
      std::ofstream out(out_path);
      if (!out) grfx::cli::config_error("cannot write output file " + out_path);
      out << text;
    }
    return 0;
  } catch (const grfx::Error& e) {
    emit_error(grfx::to_string(e.code()), e.what());
    return exit_code_for(e);
  } catch (const std::exception& e) {
    emit_error("internal", e.what());
    return 3;
  }
}
