// Command-line front end: simulate, impute, benchmark, evaluate, theory.

#include "twimpute/twimpute.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

using json = nlohmann::json;
using namespace twimpute;

namespace {

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

// "0.4" -> floor(0.4 n); "400" -> 400.
Index resolve_index(const std::string& s, Index n) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    throw ConfigError("cannot parse index '" + s + "'");
  }
  if (used != s.size()) throw ConfigError("cannot parse index '" + s + "'");
  if (v > 0.0 && v < 1.0) return static_cast<Index>(v * static_cast<double>(n));
  if (v != std::floor(v) || v < 0.0) throw ConfigError("index '" + s + "' is neither a fraction nor an integer");
  return static_cast<Index>(v);
}

MissingPattern parse_pattern(const std::string& tag, Index count, Index offset) {
  if (tag == "1" || tag == "I" || tag == "i") return MissingPattern::pattern_i(count);
  if (tag == "2" || tag == "II" || tag == "ii") return MissingPattern::pattern_ii(20, 6, offset);
  throw ConfigError("unknown pattern '" + tag + "' (expected 1 or 2)");
}

std::string pattern_label(const std::string& tag) { return (tag == "2" || tag == "II" || tag == "ii") ? "II" : "I"; }

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

json load_json_arg(const std::string& arg) {
  const std::string text = (!arg.empty() && arg.front() == '{') ? arg : slurp(arg);
  try {
    return json::parse(text);
  } catch (const json::exception& e) {
    throw ParseError(std::string("invalid JSON: ") + e.what());
  }
}

Matrix matrix_from_json(const json& j, Index rows, Index cols, const std::string& what) {
  if (j.is_number()) return Matrix::Constant(rows, cols, j.get<double>());
  if (!j.is_array() || static_cast<Index>(j.size()) != rows) throw ConfigError(what + " must be a number or " + std::to_string(rows) + " rows");
  Matrix m(rows, cols);
  for (Index r = 0; r < rows; ++r) {
    const json& row = j[static_cast<std::size_t>(r)];
    if (row.is_number()) {
      m.row(r).setConstant(row.get<double>());
      continue;
    }
    if (!row.is_array() || static_cast<Index>(row.size()) != cols) throw ConfigError(what + " row has wrong length");
    for (Index c = 0; c < cols; ++c) m(r, c) = row[static_cast<std::size_t>(c)].get<double>();
  }
  return m;
}

// Constraint description -> set; `cumsum` is reported back to the caller.
ConstraintSet constraints_from_json(const json& j, const TimeSeriesPanel& panel, bool& cumsum) {
  cumsum = false;
  const std::string kind = j.value("kind", "observed");
  const Index n = panel.n();
  const Index d = panel.d();
  if (kind == "observed") return ConstraintSet::observed(panel);
  if (kind == "box") {
    if (!j.contains("lower") || !j.contains("upper")) throw ConfigError("box constraint needs lower and upper");
    return ConstraintSet::box(panel, matrix_from_json(j["lower"], n, d, "lower"), matrix_from_json(j["upper"], n, d, "upper"));
  }
  if (kind == "simplex") return ConstraintSet::simplex(panel, j.value("box", true));
  if (kind == "linear") {
    if (!j.contains("K") || !j.contains("b")) throw ConfigError("linear constraint needs K and b");
    const auto& Kj = j["K"];
    const auto m = static_cast<Index>(Kj.size());
    Matrix K = matrix_from_json(Kj, m, n * d, "K");
    Vector b(m);
    if (!j["b"].is_array() || static_cast<Index>(j["b"].size()) != m) throw ConfigError("b must have one entry per row of K");
    for (Index r = 0; r < m; ++r) b(r) = j["b"][static_cast<std::size_t>(r)].get<double>();
    if (j.value("observed", true)) return ConstraintSet::linear_with_observed(panel, K, b);
    return ConstraintSet::linear(std::move(K), std::move(b), n, d);
  }
  if (kind == "cumsum") {
    cumsum = true;
    return build_cumsum_constraints(panel);
  }
  throw ConfigError("unknown constraint kind '" + kind + "'");
}

json trace_json(const ImputationResult& r) {
  json segs = json::array();
  for (std::size_t s = 0; s < r.segment_count(); ++s) segs.push_back(r.segment(s));
  return segs;
}

struct SimulateArgs {
  std::string model = "ar";
  Index n = 1000;
  std::string pattern = "1";
  Index count = 300;
  Index offset = 7;
  Index protect_tail = 0;
  std::uint64_t seed = 1;
  std::string out = "sim";
};

int cmd_simulate(const SimulateArgs& a) {
  DgpSpec spec;
  spec.model = parse_model(a.model);
  spec.n = a.n;
  spec.seed = derive_seed(a.seed, 0);
  const TimeSeriesPanel full = generate(spec);
  TimeSeriesPanel masked = full;
  if (a.pattern != "none") {
    masked = apply_pattern(full, parse_pattern(a.pattern, a.count, a.offset).protect(a.protect_tail), derive_seed(a.seed, 1));
  }
  write_csv(full, a.out + ".full.csv");
  write_csv(masked, a.out + ".masked.csv");
  return 0;
}

struct ImputeArgs {
  std::string in;
  std::string method = "twi";
  Index p = 6;
  std::string n1 = "0.4";
  double lambda = 0.0;
  double k = 2.0;
  std::string cutoffs = "0.25,0.5,0.75";
  std::string constraints;
  std::string init = "linear";
  std::string out = "imputed.csv";
  std::string report;
  bool header = false;
  std::string ot = "exact";
  double epsilon = 1e-2;
  int max_iters = 100;
  double tol = 1e-6;
  std::string subproblem = "direct";
};

int cmd_impute(const ImputeArgs& a) {
  const TimeSeriesPanel panel = read_csv(a.in, default_missing_tokens(), a.header);
  json report;
  report["method"] = a.method;
  Matrix imputed;

  const ImputeMethod m = parse_method(a.method == "twi" || a.method == "ktwi" ? a.method + "_" + a.init : a.method);
  if (m.kind == ImputeMethod::Kind::Truth) throw ConfigError("method 'truth' needs the full data; use evaluate");
  if (m.kind == ImputeMethod::Kind::Baseline) {
    imputed = impute_baseline(panel, m.baseline);
  } else {
    bool cumsum = false;
    const json cj = a.constraints.empty() ? json{{"kind", "observed"}} : load_json_arg(a.constraints);
    const ConstraintSet C = constraints_from_json(cj, panel, cumsum);
    // Under cumulative-sum constraints TWI runs on the first differences.
    const TimeSeriesPanel work = cumsum ? difference_panel(panel) : panel;
    const Index n = work.n();
    TwiConfig cfg;
    cfg.p = a.p;
    cfg.n1 = resolve_index(a.n1, n);
    cfg.lambda = a.lambda;
    cfg.cost_order = a.k;
    cfg.max_outer_iters = a.max_iters;
    cfg.tol_rel = a.tol;
    if (a.ot == "sinkhorn") {
      cfg.ot_method = OtMethod::sinkhorn;
    } else if (a.ot != "exact") {
      throw ConfigError("unknown OT method '" + a.ot + "'");
    }
    cfg.sinkhorn_epsilon = a.epsilon;
    if (a.subproblem == "proximal") {
      cfg.subproblem_method = SubproblemMethod::proximal;
    } else if (a.subproblem != "direct") {
      throw ConfigError("unknown subproblem method '" + a.subproblem + "'");
    }
    InitStrategy init{m.init, {}};
    if (cumsum) {
      const Matrix lv = impute_baseline(panel, BaselineMethod{m.init == InitStrategy::Kind::LOCF   ? BaselineKind::LOCF
                                                              : m.init == InitStrategy::Kind::Mean ? BaselineKind::Mean
                                                                                                   : BaselineKind::Linear,
                                                              {}});
      init = InitStrategy::from(Matrix(lv.bottomRows(n) - lv.topRows(n)));
    }
    ImputationResult res;
    if (m.kind == ImputeMethod::Kind::Twi) {
      res = twi(work, C, cfg, init);
    } else {
      std::vector<Index> cuts;
      for (const auto& c : split_list(a.cutoffs)) cuts.push_back(resolve_index(c, n));
      res = k_twi(work, C, cfg, cuts, init);
      report["cutoffs"] = cuts;
    }
    if (cumsum) {
      imputed = Matrix(panel.n(), 1);
      imputed.col(0) = integrate_differences(res.imputed.col(0), panel);
      for (Index t = 0; t < panel.n(); ++t)
        if (!panel.missing(t, 0)) imputed(t, 0) = panel.values()(t, 0);
    } else {
      imputed = res.imputed;
    }
    report["n1"] = cfg.n1;
    report["p"] = cfg.p;
    report["lambda"] = cfg.lambda;
    report["cost_order"] = cfg.cost_order;
    report["constraints"] = cj;
    report["iterations"] = res.iterations;
    report["converged"] = res.converged;
    report["objective_trace"] = res.objective_trace;
    report["segments"] = trace_json(res);
    report["warnings"] = res.warnings;
  }
  report["missing_cells"] = panel.missing_count();
  write_csv(imputed, a.out);
  write_text(a.report.empty() ? a.out + ".json" : a.report, report.dump(2) + "\n");
  return 0;
}

struct BenchmarkArgs {
  std::string models = "ar";
  std::string patterns = "1";
  std::string methods = "linear,twi_lin";
  int reps = 10;
  std::uint64_t seed = 1;
  Index n = 1000;
  Index count = 300;
  Index p = 6;
  double lambda = 0.0;
  std::string out = "benchmark";
};

int cmd_benchmark(const BenchmarkArgs& a) {
  std::vector<TableRow> rows;
  for (const auto& model : split_list(a.models)) {
    for (const auto& pat : split_list(a.patterns)) {
      BenchmarkConfig cfg;
      cfg.dgp.model = parse_model(model);
      cfg.dgp.n = a.n;
      cfg.pattern = parse_pattern(pat, a.count, 7);
      cfg.pattern_name = pattern_label(pat);
      cfg.methods = split_list(a.methods);
      cfg.reps = a.reps;
      cfg.seed = a.seed;
      cfg.twi.p = a.p;
      cfg.twi.lambda = a.lambda;
      const auto res = benchmark(cfg);
      const auto r = res.rows();
      rows.insert(rows.end(), r.begin(), r.end());
    }
  }
  std::string csv = "model,pattern,method,metric,value,stderr,n_ok,failures\n";
  json arr = json::array();
  for (const auto& r : rows) {
    csv += r.model + "," + r.pattern + "," + r.method + "," + r.metric + "," + twimpute::detail::format_double(r.value) +
           "," + twimpute::detail::format_double(r.stderr_) + "," + std::to_string(r.n_ok) + "," +
           std::to_string(r.failures) + "\n";
    json o{{"model", r.model},   {"pattern", r.pattern}, {"method", r.method},     {"metric", r.metric},
           {"n_ok", r.n_ok},     {"failures", r.failures}};
    o["value"] = std::isfinite(r.value) ? json(r.value) : json(nullptr);
    o["stderr"] = std::isfinite(r.stderr_) ? json(r.stderr_) : json(nullptr);
    arr.push_back(o);
  }
  write_text(a.out + ".csv", csv);
  write_text(a.out + ".json", arr.dump(2) + "\n");
  return 0;
}

struct EvaluateArgs {
  std::string imputed;
  std::string truth;
  Index embed_p = 3;
  std::string model;
  bool header = false;
};

int cmd_evaluate(const EvaluateArgs& a) {
  const TimeSeriesPanel w = read_csv(a.imputed, default_missing_tokens(), a.header);
  const TimeSeriesPanel x = read_csv(a.truth, default_missing_tokens(), a.header);
  if (w.has_missing() || x.has_missing()) throw ConfigError("evaluate expects complete panels");
  json out;
  std::optional<Model> model;
  if (!a.model.empty()) model = parse_model(a.model);
  const Matrix wv = model ? scoring_view(w.values(), *model) : w.values();
  const Matrix xv = model ? scoring_view(x.values(), *model) : x.values();
  out["wasserstein_loss"] = marginal_wasserstein(wv, xv, a.embed_p, 2.0);
  json ac = json::array();
  for (Index c = 0; c < wv.cols(); ++c) {
    const Vector g = autocovariance(wv.col(c), 2);
    ac.push_back(std::vector<double>(g.data(), g.data() + g.size()));
  }
  out["autocovariance"] = ac;
  if (model && !true_parameters(DgpSpec{*model}).empty()) out["parameters"] = fit_downstream(w.values(), *model);
  std::cout << out.dump(2) << "\n";
  return 0;
}

struct TheoryArgs {
  double p = 0.3;
  double q = 0.2;
  long k1 = 3;
  long k2 = 5;
  bool no_stability = false;
};

int cmd_theory(const TheoryArgs& a) {
  MarkovScenario s{a.p, a.q, a.k1, a.k2};
  const auto r = solve_identification(s, !a.no_stability);
  json out;
  out["scenario"] = {{"p", a.p}, {"q", a.q}, {"k1", a.k1}, {"k2", a.k2}};
  out["true_marginal"] = s.true_marginal();
  switch (r.status) {
    case IdentificationResult::Status::Unique:
      out["status"] = "unique";
      out["a"] = r.a;
      out["b"] = r.b;
      out["implied_marginal_k1"] = implied_marginal(s, r.a, r.b, s.k1);
      out["implied_marginal_k2"] = implied_marginal(s, r.a, r.b, s.k2);
      break;
    case IdentificationResult::Status::NonIdentified: out["status"] = "non-identified"; break;
    case IdentificationResult::Status::Family:
      out["status"] = "family";
      out["a2"] = {{"slope", r.slope}, {"offset", r.a_offset}};
      out["b2"] = {{"slope", r.slope}, {"offset", r.b_offset}};
      break;
  }
  out["description"] = r.describe();
  std::cout << out.dump(2) << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Temporal Wasserstein imputation"};
  app.require_subcommand(1);

  SimulateArgs sim;
  auto* s = app.add_subcommand("simulate", "generate a series and its masked copy");
  s->add_option("--model", sim.model, "ar|arma|tar|i1|cyc|nlvar|al");
  s->add_option("--n", sim.n);
  s->add_option("--pattern", sim.pattern, "1, 2 or none");
  s->add_option("--count", sim.count, "pattern I missing count");
  s->add_option("--offset", sim.offset, "pattern II offset inside each block");
  s->add_option("--protect-tail", sim.protect_tail, "never mask the last m rows");
  s->add_option("--seed", sim.seed);
  s->add_option("--out", sim.out, "output prefix");

  ImputeArgs imp;
  auto* i = app.add_subcommand("impute", "fill missing values in a CSV panel");
  i->add_option("--in", imp.in)->required();
  i->add_option("--method", imp.method, "linear|locf|mean|scalarf|twi|ktwi");
  i->add_option("--p", imp.p);
  i->add_option("--n1", imp.n1, "cut-off (fraction of n or index)");
  i->add_option("--lambda", imp.lambda);
  i->add_option("--k", imp.k, "cost order");
  i->add_option("--cutoffs", imp.cutoffs, "comma-separated k-TWI cut-offs");
  i->add_option("--constraints", imp.constraints, "JSON file or inline JSON");
  i->add_option("--init", imp.init, "linear|locf|mean");
  i->add_option("--out", imp.out);
  i->add_option("--report", imp.report, "JSON report path (default <out>.json)");
  i->add_flag("--header", imp.header, "skip a header row");
  i->add_option("--ot", imp.ot, "exact|sinkhorn");
  i->add_option("--epsilon", imp.epsilon, "sinkhorn regularization");
  i->add_option("--max-iters", imp.max_iters);
  i->add_option("--tol", imp.tol);
  i->add_option("--subproblem", imp.subproblem, "direct|proximal");

  BenchmarkArgs bench;
  auto* b = app.add_subcommand("benchmark", "Monte Carlo comparison of imputation methods");
  b->add_option("--models", bench.models);
  b->add_option("--patterns", bench.patterns);
  b->add_option("--methods", bench.methods);
  b->add_option("--reps", bench.reps);
  b->add_option("--seed", bench.seed);
  b->add_option("--n", bench.n);
  b->add_option("--count", bench.count, "pattern I missing count");
  b->add_option("--p", bench.p);
  b->add_option("--lambda", bench.lambda);
  b->add_option("--out", bench.out, "output prefix");

  EvaluateArgs ev;
  auto* e = app.add_subcommand("evaluate", "score an imputation against the full data");
  e->add_option("--imputed", ev.imputed)->required();
  e->add_option("--truth", ev.truth)->required();
  e->add_option("--embed-p", ev.embed_p);
  e->add_option("--model", ev.model, "fit the model's parameters too");
  e->add_flag("--header", ev.header);

  TheoryArgs th;
  auto* t = app.add_subcommand("theory", "analytic checks");
  auto* markov = t->add_subcommand("markov", "two-state Markov chain identification");
  t->require_subcommand(1);
  markov->add_option("--p", th.p);
  markov->add_option("--q", th.q);
  markov->add_option("--k1", th.k1);
  markov->add_option("--k2", th.k2);
  markov->add_flag("--no-stability", th.no_stability);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& err) {
    return app.exit(err);
  } catch (const CLI::ParseError& err) {
    app.exit(err);
    return 2;
  }

  try {
    if (*s) return cmd_simulate(sim);
    if (*i) return cmd_impute(imp);
    if (*b) return cmd_benchmark(bench);
    if (*e) return cmd_evaluate(ev);
    if (*markov) return cmd_theory(th);
  } catch (const NumericalError& err) {
    std::cerr << "numerical failure: " << err.what() << "\n";
    return 3;
  } catch (const twimpute::Error& err) {
    std::cerr << "error: " << err.what() << "\n";
    return 2;
  } catch (const json::exception& err) {
    std::cerr << "error: " << err.what() << "\n";
    return 2;
  }
  return 0;
}
