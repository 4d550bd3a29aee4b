#pragma once

#include "twimpute/core_types.hpp"

#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <string>
#include <vector>

namespace twimpute {

enum class Model { AR, ARMA, TAR, I1, CYC, NLVAR, AL };

inline std::string to_string(Model m) {
  switch (m) {
    case Model::AR: return "ar";
    case Model::ARMA: return "arma";
    case Model::TAR: return "tar";
    case Model::I1: return "i1";
    case Model::CYC: return "cyc";
    case Model::NLVAR: return "nlvar";
    case Model::AL: return "al";
  }
  return "unknown";
}

inline Model parse_model(const std::string& tag) {
  for (Model m : {Model::AR, Model::ARMA, Model::TAR, Model::I1, Model::CYC, Model::NLVAR, Model::AL})
    if (to_string(m) == tag) return m;
  throw ConfigError("unknown model tag '" + tag + "' (expected ar, arma, tar, i1, cyc, nlvar or al)");
}

inline Index model_dim(Model m) {
  switch (m) {
    case Model::NLVAR: return 2;
    case Model::AL: return 3;
    default: return 1;
  }
}

inline bool is_stationary(Model m) { return m != Model::I1 && m != Model::CYC; }

struct DgpSpec {
  Model model = Model::AR;
  Index n = 1000;
  std::uint64_t seed = 0;
  Index burn_in = -1;  // -1: 200 for stationary models, 0 otherwise

  double ar_phi = 0.8;
  double arma_phi1 = 0.8;
  double arma_phi2 = -0.6;
  double tar_phi1 = -2.0;
  double tar_phi2 = 0.7;
  double tar_tau = 1.0;
  double tar_sigma2 = 0.5;
  double i1_phi = -0.7;
  double i1_sigma = 0.5;
  double nlvar_phi11 = 0.3;
  double nlvar_phi12 = 8.0;
  double nlvar_phi21 = 0.0;
  double nlvar_phi22 = 0.4;
  // Multiplies every innovation; 0 gives the noiseless skeleton.
  double noise_scale = 1.0;

  Index effective_burn_in() const { return burn_in >= 0 ? burn_in : (is_stationary(model) ? 200 : 0); }
};

// SplitMix64 finalizer, used to derive independent replicate seeds.
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  return splitmix64(splitmix64(seed) ^ splitmix64(stream + 0x632be59bd9b4e019ULL));
}

inline double centered_sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)) - 0.5; }

inline TimeSeriesPanel generate(const DgpSpec& spec) {
  if (spec.n < 10) throw ConfigError("series length must be >= 10");
  const Index burn = spec.effective_burn_in();
  const Index total = spec.n + burn;
  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  auto eps = [&] { return spec.noise_scale * normal(rng); };

  const Index d = model_dim(spec.model);
  Matrix x = Matrix::Zero(total, d);
  switch (spec.model) {
    case Model::AR: {
      double prev = 0.0;
      for (Index t = 0; t < total; ++t) x(t, 0) = prev = spec.ar_phi * prev + eps();
      break;
    }
    case Model::ARMA: {
      double prev = 0.0;
      double e_prev = 0.0;
      for (Index t = 0; t < total; ++t) {
        const double e = eps();
        x(t, 0) = prev = spec.arma_phi1 * prev + e + spec.arma_phi2 * e_prev;
        e_prev = e;
      }
      break;
    }
    case Model::TAR: {
      double prev = 0.0;
      for (Index t = 0; t < total; ++t) {
        const double e = eps();
        prev = prev <= spec.tar_tau ? spec.tar_phi1 * prev + e : spec.tar_phi2 * prev + spec.tar_sigma2 * e;
        x(t, 0) = prev;
      }
      break;
    }
    case Model::I1: {
      double level = 0.0;
      double z = 0.0;
      for (Index t = 0; t < total; ++t) {
        const double e1 = eps();
        const double e2 = eps();
        z = spec.i1_phi * z + spec.i1_sigma * e1;
        level = level + z + e2;
        x(t, 0) = level;
      }
      break;
    }
    case Model::CYC: {
      const double pi = std::acos(-1.0);
      for (Index t = 0; t < total; ++t) {
        const auto tt = static_cast<double>(t - burn);
        x(t, 0) = 10.0 * std::cos(tt * 0.23 * pi) + 6.0 * std::cos(tt * 0.17 * pi) + 0.5 * eps();
      }
      break;
    }
    case Model::NLVAR: {
      double a = 0.0;
      double b = 0.0;
      for (Index t = 0; t < total; ++t) {
        const double e1 = eps();
        const double e2 = eps();
        const double an = spec.nlvar_phi11 * a + spec.nlvar_phi12 * centered_sigmoid(3.0 * b) + 0.25 * e1;
        const double bn = spec.nlvar_phi21 * a + spec.nlvar_phi22 * b + 3.0 * e2;
        x(t, 0) = a = an;
        x(t, 1) = b = bn;
      }
      break;
    }
    case Model::AL: {
      double y1 = 0.0;
      double y2 = 0.0;
      for (Index t = 0; t < total; ++t) {
        const double e1 = eps();
        const double e2 = eps();
        const double n1 = 0.1 + 0.7 * y1 - 0.5 * y2 + 0.2 * e1;
        const double n2 = 0.1 - 0.7 * y2 + 0.2 * e2;
        y1 = n1;
        y2 = n2;
        const double denom = 1.0 + std::exp(y1) + std::exp(y2);
        x(t, 0) = std::exp(y1) / denom;
        x(t, 1) = std::exp(y2) / denom;
        x(t, 2) = 1.0 / denom;
      }
      break;
    }
  }
  return TimeSeriesPanel(Matrix(x.bottomRows(spec.n)));
}

struct MissingPattern {
  enum class Kind { PatternI, PatternII, Custom };
  Kind kind = Kind::PatternI;
  Index count = 300;
  Index block = 20;
  Index run = 6;
  Index offset = 7;
  Mask custom;
  Index protect_tail = 0;
  // Mask each column independently instead of whole time rows.
  bool per_column = false;

  static MissingPattern pattern_i(Index count = 300) {
    MissingPattern p;
    p.count = count;
    return p;
  }
  static MissingPattern pattern_ii(Index block = 20, Index run = 6, Index offset = 7) {
    MissingPattern p;
    p.kind = Kind::PatternII;
    p.block = block;
    p.run = run;
    p.offset = offset;
    return p;
  }
  static MissingPattern custom_mask(Mask m) {
    MissingPattern p;
    p.kind = Kind::Custom;
    p.custom = std::move(m);
    return p;
  }
  MissingPattern protect(Index m) const {
    MissingPattern p = *this;
    p.protect_tail = m;
    return p;
  }
};

// Masks cells of a fully observed panel. Random choices depend only on `seed`.
inline TimeSeriesPanel apply_pattern(const TimeSeriesPanel& panel, const MissingPattern& pattern, std::uint64_t seed) {
  const Index n = panel.n();
  const Index d = panel.d();
  if (pattern.protect_tail < 0 || pattern.protect_tail > n) throw ConfigError("protected tail exceeds series length");
  const Index eligible = n - pattern.protect_tail;
  Mask mask = Mask::Constant(n, d, false);
  switch (pattern.kind) {
    case MissingPattern::Kind::PatternI: {
      if (pattern.count < 0 || pattern.count > eligible) {
        throw ConfigError("cannot remove " + std::to_string(pattern.count) + " of " + std::to_string(eligible) +
                          " eligible observations");
      }
      std::mt19937_64 rng(seed);
      std::vector<Index> idx(static_cast<std::size_t>(eligible));
      const Index passes = pattern.per_column ? d : 1;
      for (Index c = 0; c < passes; ++c) {
        std::iota(idx.begin(), idx.end(), Index{0});
        for (Index k = 0; k < pattern.count; ++k) {
          std::uniform_int_distribution<Index> pick(k, eligible - 1);
          std::swap(idx[static_cast<std::size_t>(k)], idx[static_cast<std::size_t>(pick(rng))]);
          const Index t = idx[static_cast<std::size_t>(k)];
          if (pattern.per_column) {
            mask(t, c) = true;
          } else {
            mask.row(t).setConstant(true);
          }
        }
      }
      break;
    }
    case MissingPattern::Kind::PatternII: {
      if (pattern.block < 1 || pattern.run < 0 || pattern.offset < 0 || pattern.offset + pattern.run > pattern.block) {
        throw ConfigError("pattern II run does not fit inside its block");
      }
      for (Index b = 0; b < n; b += pattern.block)
        for (Index t = b + pattern.offset; t < b + pattern.offset + pattern.run && t < eligible; ++t)
          mask.row(t).setConstant(true);
      break;
    }
    case MissingPattern::Kind::Custom: {
      if (pattern.custom.rows() != n || pattern.custom.cols() != d) throw ConfigError("custom mask has wrong shape");
      mask = pattern.custom;
      for (Index t = eligible; t < n; ++t) mask.row(t).setConstant(false);
      break;
    }
  }
  return TimeSeriesPanel(panel.values(), (mask || panel.mask()).eval());
}

}  // namespace twimpute
