#pragma once

#include "twimpute/baselines.hpp"
#include "twimpute/constraints.hpp"
#include "twimpute/core_types.hpp"
#include "twimpute/dgp.hpp"
#include "twimpute/embed.hpp"
#include "twimpute/ot.hpp"
#include "twimpute/solver.hpp"

#include <Eigen/Cholesky>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <functional>
#include <map>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

namespace twimpute {

// W_k between the uniform empirical measures of the embed_p-lag embeddings
// of two panels (t = embed_p-1..n-1), as the k-th root of the exact OT cost.
inline double marginal_wasserstein(const Matrix& imputed, const Matrix& truth, Index embed_p = 3, double k = 2.0) {
  if (imputed.rows() != truth.rows() || imputed.cols() != truth.cols()) {
    throw ConfigError("imputed and reference panels have different shapes");
  }
  if (embed_p < 1 || imputed.rows() < embed_p) throw ConfigError("series shorter than the embedding order");
  std::vector<Index> idx;
  for (Index t = embed_p - 1; t < imputed.rows(); ++t) idx.push_back(t);
  const Matrix cost = pairwise_embedding_cost(imputed, idx, truth, idx, embed_p, k);
  const double c = std::max(solve_exact(cost).cost, 0.0);
  return k == 2.0 ? std::sqrt(c) : std::pow(c, 1.0 / k);
}

// gamma(h) = (n-h)^-1 sum_{t=h}^{n-1} (z_t - zbar)(z_{t-h} - zbar), h = 0..max_lag.
inline Vector autocovariance(const Vector& z, Index max_lag) {
  const Index n = z.size();
  if (max_lag < 0 || n <= max_lag) throw ConfigError("series length must exceed max_lag");
  const double mean = z.mean();
  const Vector c = z.array() - mean;
  Vector g(max_lag + 1);
  for (Index h = 0; h <= max_lag; ++h) {
    g(h) = c.tail(n - h).dot(c.head(n - h)) / static_cast<double>(n - h);
  }
  return g;
}

// rho(h) = gamma(h) / gamma(0).
inline Vector acf(const Vector& z, Index max_lag) {
  const Vector g = autocovariance(z, max_lag);
  if (!(g(0) > 0.0)) throw NumericalError("constant series has no autocorrelation");
  return g / g(0);
}

// Partial autocorrelations at lags 1..max_lag (Durbin-Levinson).
inline Vector pacf(const Vector& z, Index max_lag) {
  if (max_lag < 1) throw ConfigError("max_lag must be >= 1");
  const Vector rho = acf(z, max_lag);
  Vector out(max_lag);
  Vector phi = Vector::Zero(max_lag + 1);
  Vector prev = phi;
  double v = 1.0;
  for (Index k = 1; k <= max_lag; ++k) {
    double num = rho(k);
    for (Index j = 1; j < k; ++j) num -= prev(j) * rho(k - j);
    const double a = num / v;
    phi(k) = a;
    for (Index j = 1; j < k; ++j) phi(j) = prev(j) - a * prev(k - j);
    v *= (1.0 - a * a);
    if (!(v > 0.0)) throw NumericalError("Durbin-Levinson recursion broke down");
    out(k - 1) = a;
    prev = phi;
  }
  return out;
}

namespace detail {

inline Vector ols(const Matrix& X, const Vector& y) {
  const Matrix A = X.transpose() * X;
  Eigen::LLT<Matrix> llt(A);
  if (llt.info() != Eigen::Success || !(llt.rcond() > 1e-12)) throw NumericalError("singular regression design");
  return llt.solve(X.transpose() * y);
}

// Long-AR residuals then OLS of x_t on x_{t-1} and e_{t-1}.
inline std::pair<double, double> hannan_rissanen_11(const Vector& x) {
  const Index n = x.size();
  const auto m = static_cast<Index>(std::ceil(2.0 * std::log(static_cast<double>(n))));
  if (n < 3 * m + 10) throw ConfigError("series too short for Hannan-Rissanen");
  Matrix X(n - m, m);
  Vector y(n - m);
  for (Index t = m; t < n; ++t) {
    y(t - m) = x(t);
    for (Index l = 1; l <= m; ++l) X(t - m, l - 1) = x(t - l);
  }
  const Vector a = ols(X, y);
  Vector e = Vector::Zero(n);
  for (Index t = m; t < n; ++t) e(t) = y(t - m) - X.row(t - m).dot(a);
  const Index start = m + 1;
  Matrix Z(n - start, 2);
  Vector yy(n - start);
  for (Index t = start; t < n; ++t) {
    yy(t - start) = x(t);
    Z(t - start, 0) = x(t - 1);
    Z(t - start, 1) = e(t - 1);
  }
  const Vector b = ols(Z, yy);
  return {b(0), b(1)};
}

inline double type7_quantile(std::vector<double> sorted, double q) {
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (pos - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

}  // namespace detail

using ParameterMap = std::map<std::string, double>;

inline ParameterMap true_parameters(const DgpSpec& s) {
  switch (s.model) {
    case Model::AR: return {{"phi", s.ar_phi}};
    case Model::ARMA: return {{"phi1", s.arma_phi1}, {"phi2", s.arma_phi2}};
    case Model::TAR: return {{"phi1", s.tar_phi1}, {"phi2", s.tar_phi2}, {"tau", s.tar_tau}};
    case Model::I1: return {{"phi", s.i1_phi}};
    case Model::CYC: return {};
    case Model::NLVAR:
      return {{"phi11", s.nlvar_phi11}, {"phi12", s.nlvar_phi12}, {"phi21", s.nlvar_phi21}, {"phi22", s.nlvar_phi22}};
    case Model::AL:
      return {{"c1", 0.1}, {"a11", 0.7}, {"a12", -0.5}, {"c2", 0.1}, {"a21", 0.0}, {"a22", -0.7}};
  }
  return {};
}

// Parameter estimates of the generating model from a (complete) panel.
inline ParameterMap fit_downstream(const Matrix& w, Model model) {
  const Index n = w.rows();
  if (w.cols() != model_dim(model)) throw ConfigError("panel width does not match the model");
  if (!w.allFinite()) throw ConfigError("panel has non-finite entries");
  switch (model) {
    case Model::AR: {
      const Vector x = w.col(0);
      const double num = x.tail(n - 1).dot(x.head(n - 1));
      const double den = x.head(n - 1).squaredNorm();
      if (!(den > 0.0)) throw NumericalError("singular regression design");
      return {{"phi", num / den}};
    }
    case Model::ARMA: {
      const auto [phi1, phi2] = detail::hannan_rissanen_11(w.col(0));
      return {{"phi1", phi1}, {"phi2", phi2}};
    }
    case Model::TAR: {
      const Vector x = w.col(0);
      std::vector<double> sorted(x.data(), x.data() + n);
      std::sort(sorted.begin(), sorted.end());
      double best_sse = INFINITY;
      ParameterMap best;
      for (int k = 0; k < 200; ++k) {
        const double q = 0.1 + 0.8 * static_cast<double>(k) / 199.0;
        const double tau = detail::type7_quantile(sorted, q);
        double sxx[2] = {0, 0}, sxy[2] = {0, 0}, syy[2] = {0, 0};
        for (Index t = 1; t < n; ++t) {
          const int r = x(t - 1) <= tau ? 0 : 1;
          sxx[r] += x(t - 1) * x(t - 1);
          sxy[r] += x(t - 1) * x(t);
          syy[r] += x(t) * x(t);
        }
        if (!(sxx[0] > 0.0) || !(sxx[1] > 0.0)) continue;
        const double sse = syy[0] - sxy[0] * sxy[0] / sxx[0] + syy[1] - sxy[1] * sxy[1] / sxx[1];
        if (sse < best_sse) {
          best_sse = sse;
          best = {{"phi1", sxy[0] / sxx[0]}, {"phi2", sxy[1] / sxx[1]}, {"tau", tau}};
        }
      }
      if (best.empty()) throw NumericalError("no threshold leaves both regimes populated");
      return best;
    }
    case Model::I1: {
      const Vector dx = w.col(0).tail(n - 1) - w.col(0).head(n - 1);
      return {{"phi", detail::hannan_rissanen_11(dx).first}};
    }
    case Model::CYC: return {};
    case Model::NLVAR: {
      Matrix X1(n - 1, 2), X2(n - 1, 2);
      Vector y1(n - 1), y2(n - 1);
      for (Index t = 1; t < n; ++t) {
        X1(t - 1, 0) = w(t - 1, 0);
        X1(t - 1, 1) = centered_sigmoid(3.0 * w(t - 1, 1));
        X2(t - 1, 0) = w(t - 1, 0);
        X2(t - 1, 1) = w(t - 1, 1);
        y1(t - 1) = w(t, 0);
        y2(t - 1) = w(t, 1);
      }
      const Vector b1 = detail::ols(X1, y1);
      const Vector b2 = detail::ols(X2, y2);
      return {{"phi11", b1(0)}, {"phi12", b1(1)}, {"phi21", b2(0)}, {"phi22", b2(1)}};
    }
    case Model::AL: {
      Matrix y(n, 2);
      for (Index t = 0; t < n; ++t) {
        const double x3 = std::max(w(t, 2), 1e-12);
        y(t, 0) = std::log(std::max(w(t, 0), 1e-12) / x3);
        y(t, 1) = std::log(std::max(w(t, 1), 1e-12) / x3);
      }
      Matrix X(n - 1, 3);
      for (Index t = 1; t < n; ++t) {
        X(t - 1, 0) = 1.0;
        X(t - 1, 1) = y(t - 1, 0);
        X(t - 1, 2) = y(t - 1, 1);
      }
      const Vector b1 = detail::ols(X, y.col(0).tail(n - 1));
      const Vector b2 = detail::ols(X, y.col(1).tail(n - 1));
      return {{"c1", b1(0)}, {"a11", b1(1)}, {"a12", b1(2)}, {"c2", b2(0)}, {"a21", b2(1)}, {"a22", b2(2)}};
    }
  }
  return {};
}

// ---------------------------------------------------------------------------
// Monte Carlo benchmark

struct ImputeMethod {
  enum class Kind { Baseline, Twi, KTwi, Truth };
  std::string name;
  Kind kind = Kind::Baseline;
  BaselineMethod baseline{};
  InitStrategy::Kind init = InitStrategy::Kind::LinearInterpolation;
};

// linear, locf, mean, scalarf, twi_lin, ktwi_lin, twi_locf, ktwi_mean, ...
// "truth" returns the full data (a sanity method).
inline ImputeMethod parse_method(const std::string& name) {
  ImputeMethod m;
  m.name = name;
  if (name == "linear") return m;
  if (name == "locf") {
    m.baseline = BaselineMethod::locf();
    return m;
  }
  if (name == "mean") {
    m.baseline = BaselineMethod::mean();
    return m;
  }
  if (name == "scalarf") {
    m.baseline = BaselineMethod::scalar_filter();
    return m;
  }
  if (name == "truth") {
    m.kind = ImputeMethod::Kind::Truth;
    return m;
  }
  auto init_of = [&](const std::string& tag) {
    if (tag == "lin" || tag == "linear") return InitStrategy::Kind::LinearInterpolation;
    if (tag == "locf") return InitStrategy::Kind::LOCF;
    if (tag == "mean") return InitStrategy::Kind::Mean;
    throw ConfigError("unknown initialization '" + tag + "' in method '" + name + "'");
  };
  for (const auto& [prefix, kind] : {std::pair<std::string, ImputeMethod::Kind>{"twi", ImputeMethod::Kind::Twi},
                                     std::pair<std::string, ImputeMethod::Kind>{"ktwi", ImputeMethod::Kind::KTwi}}) {
    if (name == prefix) {
      m.kind = kind;
      return m;
    }
    if (name.rfind(prefix + "_", 0) == 0) {
      m.kind = kind;
      m.init = init_of(name.substr(prefix.size() + 1));
      return m;
    }
  }
  throw ConfigError("unknown method '" + name + "'");
}

struct BenchmarkConfig {
  DgpSpec dgp;
  MissingPattern pattern;
  std::string pattern_name = "I";
  std::vector<std::string> methods{"linear", "twi_lin"};
  int reps = 10;
  std::uint64_t seed = 1;
  // Fractions of n for the TWI cut-off and the k-TWI cut-offs.
  double n1_fraction = 0.4;
  std::vector<double> cutoff_fractions{0.25, 0.5, 0.75};
  TwiConfig twi{};  // n1 is overwritten from n1_fraction
  Index acf_max_lag = 2;
  unsigned threads = 0;  // 0: TWIMPUTE_THREADS or hardware concurrency
};

// Compositional panels get the simplex-with-box set, everything else the
// observed-cell equality.
inline ConstraintSet default_constraints(const TimeSeriesPanel& panel, Model model) {
  if (model == Model::AL) return ConstraintSet::simplex(panel, true);
  return ConstraintSet::observed(panel);
}

// Imputes one masked panel. For the I(1) model TWI runs on the first
// differences under cumulative-sum constraints and the levels are rebuilt.
inline Matrix run_method(const ImputeMethod& m, const TimeSeriesPanel& masked, const Matrix& full, Model model,
                         const BenchmarkConfig& cfg) {
  const Index n = masked.n();
  switch (m.kind) {
    case ImputeMethod::Kind::Truth: return full;
    case ImputeMethod::Kind::Baseline: return impute_baseline(masked, m.baseline);
    case ImputeMethod::Kind::Twi:
    case ImputeMethod::Kind::KTwi: break;
  }
  const InitStrategy init{m.init, {}};
  auto run = [&](const TimeSeriesPanel& panel, const ConstraintSet& C, const InitStrategy& in) {
    const Index nn = panel.n();
    TwiConfig tc = cfg.twi;
    tc.n1 = static_cast<Index>(cfg.n1_fraction * static_cast<double>(nn));
    if (m.kind == ImputeMethod::Kind::Twi) return twi(panel, C, tc, in).imputed;
    std::vector<Index> cuts;
    for (double f : cfg.cutoff_fractions) cuts.push_back(static_cast<Index>(f * static_cast<double>(nn)));
    return k_twi(panel, C, tc, cuts, in).imputed;
  };
  if (model == Model::I1) {
    const Matrix levels0 = impute_baseline(masked, BaselineMethod{m.init == InitStrategy::Kind::LOCF ? BaselineKind::LOCF
                                                                  : m.init == InitStrategy::Kind::Mean
                                                                      ? BaselineKind::Mean
                                                                      : BaselineKind::Linear,
                                                                  {}});
    const TimeSeriesPanel dpanel = difference_panel(masked);
    const ConstraintSet C = build_cumsum_constraints(masked);
    const Vector d0 = levels0.col(0).tail(n - 1) - levels0.col(0).head(n - 1);
    const Matrix dw = run(dpanel, C, InitStrategy::from(Matrix(d0)));
    Matrix out(n, 1);
    out.col(0) = integrate_differences(dw.col(0), masked);
    for (Index t = 0; t < n; ++t)
      if (!masked.missing(t, 0)) out(t, 0) = masked.values()(t, 0);
    return out;
  }
  return run(masked, default_constraints(masked, model), init);
}

// Series on which the loss and ACF are scored (first differences for I(1)).
inline Matrix scoring_view(const Matrix& w, Model model) {
  if (model != Model::I1) return w;
  return w.bottomRows(w.rows() - 1) - w.topRows(w.rows() - 1);
}

struct EvalReport {
  double wasserstein_loss = 0.0;
  std::vector<double> acf_rmse;  // lag-major, then column
  ParameterMap parameter_errors;
  int n_reps = 0;
};

struct TableRow {
  std::string model;
  std::string pattern;
  std::string method;
  std::string metric;
  double value = 0.0;
  double stderr_ = 0.0;
  int n_ok = 0;
  int failures = 0;
};

struct MethodSummary {
  std::string method;
  EvalReport report;
  int failures = 0;
  std::vector<TableRow> rows;
  // Per-replicate raw values (NaN when the replicate failed).
  std::vector<double> losses;
  std::map<std::string, std::vector<double>> estimates;
};

struct BenchmarkResult {
  std::vector<MethodSummary> methods;
  std::vector<TableRow> rows() const {
    std::vector<TableRow> out;
    for (const auto& m : methods) out.insert(out.end(), m.rows.begin(), m.rows.end());
    return out;
  }
  const MethodSummary& method(const std::string& name) const {
    for (const auto& m : methods)
      if (m.method == name) return m;
    throw ConfigError("method '" + name + "' not in benchmark result");
  }
};

inline unsigned worker_count(unsigned requested) {
  unsigned t = requested;
  if (t == 0) {
    if (const char* env = std::getenv("TWIMPUTE_THREADS")) t = static_cast<unsigned>(std::max(1L, std::atol(env)));
  }
  if (t == 0) t = std::max(1u, std::thread::hardware_concurrency());
  return t;
}

// Runs `task(i)` for i in [0, count) on a small worker pool.
inline void parallel_for(std::size_t count, unsigned threads, const std::function<void(std::size_t)>& task) {
  threads = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(std::max<std::size_t>(count, 1))));
  if (threads == 1) {
    for (std::size_t i = 0; i < count; ++i) task(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  for (unsigned w = 0; w < threads; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < count; i = next++) task(i);
    });
  }
  for (auto& th : pool) th.join();
}

struct ReplicateData {
  Matrix full;
  TimeSeriesPanel masked;
};

inline ReplicateData make_replicate(const BenchmarkConfig& cfg, int rep) {
  DgpSpec spec = cfg.dgp;
  spec.seed = derive_seed(cfg.seed, 2 * static_cast<std::uint64_t>(rep));
  const TimeSeriesPanel full = generate(spec);
  const TimeSeriesPanel masked =
      apply_pattern(full, cfg.pattern, derive_seed(cfg.seed, 2 * static_cast<std::uint64_t>(rep) + 1));
  return {full.values(), masked};
}

inline BenchmarkResult benchmark(const BenchmarkConfig& cfg) {
  if (cfg.reps < 1) throw ConfigError("reps must be >= 1");
  std::vector<ImputeMethod> methods;
  for (const auto& name : cfg.methods) methods.push_back(parse_method(name));
  const Model model = cfg.dgp.model;
  const auto truth_params = true_parameters(cfg.dgp);
  const auto reps = static_cast<std::size_t>(cfg.reps);
  const std::size_t nm = methods.size();

  struct Cell {
    bool ok = false;
    double loss = 0.0;
    Matrix gamma;  // (max_lag+1) x d
    ParameterMap est;
  };
  std::vector<std::vector<Cell>> cells(nm, std::vector<Cell>(reps));
  std::vector<Matrix> ref_gamma(reps);

  auto gammas = [&](const Matrix& w) {
    const Matrix v = scoring_view(w, model);
    Matrix g(cfg.acf_max_lag + 1, v.cols());
    for (Index c = 0; c < v.cols(); ++c) g.col(c) = autocovariance(v.col(c), cfg.acf_max_lag);
    return g;
  };

  parallel_for(reps, worker_count(cfg.threads), [&](std::size_t r) {
    const ReplicateData data = make_replicate(cfg, static_cast<int>(r));
    ref_gamma[r] = gammas(data.full);
    const Matrix truth_view = scoring_view(data.full, model);
    for (std::size_t m = 0; m < nm; ++m) {
      Cell& cell = cells[m][r];
      try {
        const Matrix w = run_method(methods[m], data.masked, data.full, model, cfg);
        cell.loss = marginal_wasserstein(scoring_view(w, model), truth_view, 3, 2.0);
        cell.gamma = gammas(w);
        if (!truth_params.empty()) cell.est = fit_downstream(w, model);
        cell.ok = true;
      } catch (const Error&) {
        cell.ok = false;
      }
    }
  });

  // gamma_x(h): average of the full-data autocovariances over replicates.
  Matrix gamma_x = Matrix::Zero(cfg.acf_max_lag + 1, model_dim(model));
  for (const auto& g : ref_gamma) gamma_x += g;
  gamma_x /= static_cast<double>(reps);

  const std::string model_tag = to_string(model);
  BenchmarkResult result;
  for (std::size_t m = 0; m < nm; ++m) {
    MethodSummary s;
    s.method = methods[m].name;
    auto add_row = [&](const std::string& metric, double value, double se, int ok) {
      s.rows.push_back({model_tag, cfg.pattern_name, s.method, metric, value, se, ok, s.failures});
    };
    std::vector<const Cell*> good;
    for (std::size_t r = 0; r < reps; ++r) {
      const Cell& c = cells[m][r];
      s.losses.push_back(c.ok ? c.loss : NAN);
      for (const auto& [k, tv] : truth_params) s.estimates[k].push_back(c.ok ? c.est.at(k) : NAN);
      if (c.ok) {
        good.push_back(&c);
      } else {
        ++s.failures;
      }
    }
    const int ok = static_cast<int>(good.size());
    s.report.n_reps = ok;
    const double nan = std::numeric_limits<double>::quiet_NaN();

    // Mean and standard error of a per-replicate sample.
    auto mean_se = [](const std::vector<double>& v) {
      double mu = 0.0;
      for (double x : v) mu += x;
      mu /= static_cast<double>(v.size());
      double ss = 0.0;
      for (double x : v) ss += (x - mu) * (x - mu);
      const double se = v.size() > 1 ? std::sqrt(ss / static_cast<double>(v.size() - 1) / static_cast<double>(v.size())) : 0.0;
      return std::pair<double, double>{mu, se};
    };
    // RMSE from squared errors, with a delta-method standard error.
    auto rmse_se = [&](const std::vector<double>& sq) {
      const auto [mse, se_mse] = mean_se(sq);
      const double rmse = std::sqrt(mse);
      return std::pair<double, double>{rmse, rmse > 0.0 ? se_mse / (2.0 * rmse) : 0.0};
    };

    if (ok == 0) {
      s.report.wasserstein_loss = nan;
      add_row("wasserstein_loss", nan, nan, 0);
      result.methods.push_back(std::move(s));
      continue;
    }
    {
      std::vector<double> v;
      for (const Cell* c : good) v.push_back(c->loss);
      const auto [mu, se] = mean_se(v);
      s.report.wasserstein_loss = mu;
      add_row("wasserstein_loss", mu, se, ok);
    }
    const Index d = gamma_x.cols();
    for (Index h = 0; h <= cfg.acf_max_lag; ++h)
      for (Index c = 0; c < d; ++c) {
        std::vector<double> sq;
        for (const Cell* cell : good) sq.push_back(std::pow(cell->gamma(h, c) - gamma_x(h, c), 2));
        const auto [rm, se] = rmse_se(sq);
        s.report.acf_rmse.push_back(rm);
        add_row("acf_rmse_h" + std::to_string(h) + (d > 1 ? "_c" + std::to_string(c + 1) : ""), rm, se, ok);
      }
    for (const auto& [k, tv] : truth_params) {
      std::vector<double> sq;
      for (const Cell* cell : good) sq.push_back(std::pow(cell->est.at(k) - tv, 2));
      const auto [rm, se] = rmse_se(sq);
      s.report.parameter_errors[k] = rm;
      add_row("param_rmse_" + k, rm, se, ok);
    }
    result.methods.push_back(std::move(s));
  }
  return result;
}

}  // namespace twimpute
