#pragma once

// Test-side oracles. These are written as plain loops over std::vector and
// deliberately share no code with the library's Eigen kernels.

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "optideq/deq.hpp"
#include "optideq/encoding.hpp"
#include "optideq/rng.hpp"

namespace oracle {

using Vec = std::vector<double>;
using Mat = std::vector<Vec>;  // row-major, m[i][j]

inline Mat to_mat(const optideq::Matrix& m) {
  Mat out(m.rows(), Vec(m.cols()));
  for (int i = 0; i < m.rows(); ++i)
    for (int j = 0; j < m.cols(); ++j) out[i][j] = m(i, j);
  return out;
}

inline Vec to_vec(const optideq::Vector& v) { return Vec(v.data(), v.data() + v.size()); }

inline Vec matvec(const Mat& m, const Vec& x) {
  Vec y(m.size(), 0.0);
  for (std::size_t i = 0; i < m.size(); ++i)
    for (std::size_t j = 0; j < x.size(); ++j) y[i] += m[i][j] * x[j];
  return y;
}

// One Picard step with the ideal cell: alpha s + beta W tanh(s) + b + x_proj.
inline Vec simple_step(const Vec& s, const Mat& w, const Vec& b, const Vec& x_proj, double alpha, double beta) {
  Vec t(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) t[i] = std::tanh(s[i]);
  const Vec wt = matvec(w, t);
  Vec out(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) out[i] = alpha * s[i] + beta * wt[i] + b[i] + x_proj[i];
  return out;
}

// Frozen channel draws re-derived from the documented procedure, using the
// raw engine rather than optideq::Rng.
struct Draws {
  Vec r;
  Mat c;
};

inline Draws draws(std::uint64_t seed, int d) {
  std::mt19937_64 eng(seed);
  auto unit = [&eng] { return static_cast<double>(eng() >> 11) / 9007199254740992.0; };
  Draws out;
  out.r.resize(d);
  for (int i = 0; i < d; ++i) out.r[i] = 2.0 * unit() - 1.0;
  out.c.assign(d, Vec(d, 0.0));
  for (int i = 0; i < d; ++i) {
    double sum = 0.0;
    for (int j = 0; j < d; ++j) {
      const double v = unit();
      if (i != j) {
        out.c[i][j] = v;
        sum += v;
      }
    }
    if (sum > 0.0)
      for (int j = 0; j < d; ++j) out.c[i][j] /= sum;
  }
  return out;
}

// Symmetric quantiser: scan every level and keep the nearest.
inline double nearest_level(double w, double scale, int bits) {
  const int top = (1 << (bits - 1)) - 1;
  double best = 0.0, best_dist = INFINITY;
  for (int k = -top; k <= top; ++k) {
    const double level = static_cast<double>(k) * scale / top;
    const double dist = std::abs(level - w);
    // halfway cases go away from zero, like std::round
    const bool tie = std::abs(dist - best_dist) <= 1e-15 * scale && std::abs(level) > std::abs(best);
    if (dist < best_dist - 1e-15 * scale || tie) {
      best_dist = dist;
      best = level;
    }
  }
  return best;
}

struct CellParams {
  double e[7] = {0, 0, 0, 0, 0, 0, 0};
  double target_rms = 1.0;
  int bits = 0;
  std::uint64_t seed = 0;
  double k[4] = {1, 1, 1, 1};
};

// The eight documented AOC steps, written out one at a time.
inline Vec aoc_cell(const Mat& w_raw, const Vec& s, const CellParams& p) {
  const int d = static_cast<int>(s.size());
  const Draws dr = draws(p.seed, d);
  Vec u(d);
  double mean_u = 0.0;
  for (int i = 0; i < d; ++i) {
    const double t = std::tanh(s[i]);
    const double u1 = p.k[0] * (t + p.e[0] * (t - t * t * t));
    u[i] = u1 * (1.0 - p.e[1] * std::abs(u1));
    mean_u += u[i] / d;
  }
  double scale = 0.0;
  for (const auto& row : w_raw)
    for (double x : row) scale = std::max(scale, std::abs(x));
  Mat w = w_raw;
  for (auto& row : w) {
    for (double& x : row) {
      const double q = (p.bits > 0 && scale > 0.0) ? nearest_level(x, scale, p.bits) : x;
      x = p.k[1] * q * (1.0 - p.e[2] * q * q);
    }
  }
  const Vec v0 = matvec(w, u);
  Vec v1(d);
  for (int i = 0; i < d; ++i) v1[i] = p.k[2] * (1.0 + p.e[3] * dr.r[i]) * v0[i];
  Vec v3(d);
  double sq = 0.0;
  for (int i = 0; i < d; ++i) {
    double mixed = v1[i];
    for (int j = 0; j < d; ++j) mixed += p.e[4] * dr.c[i][j] * v1[j];
    v3[i] = p.k[3] * mixed + p.e[5] * mean_u;
    sq += v3[i] * v3[i];
  }
  if (p.e[6] == 1.0) {
    const double rms = std::sqrt(sq / d);
    for (double& x : v3) x *= p.target_rms / std::max(rms, 1e-12);
  }
  return v3;
}

// Root of f on [lo, hi] by bisection (f(lo), f(hi) of opposite sign).
template <class F>
double bisect(F f, double lo, double hi) {
  double flo = f(lo);
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    const double fm = f(mid);
    if ((fm < 0) == (flo < 0)) {
      lo = mid;
      flo = fm;
    } else {
      hi = mid;
    }
  }
  return 0.5 * (lo + hi);
}

}  // namespace oracle

namespace testutil {

inline optideq::Matrix random_matrix(optideq::Rng& rng, int rows, int cols, double bound = 1.0) {
  optideq::Matrix m(rows, cols);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) m(i, j) = rng.uniform(-bound, bound);
  return m;
}

inline optideq::Vector random_vector(optideq::Rng& rng, int n, double bound = 1.0) {
  return random_matrix(rng, n, 1, bound);
}

// A model with every tensor randomised (including biases), optical W scaled
// to beta * ||W||_2 = contraction.
inline optideq::EnsembleModel random_model(const optideq::ModelConfig& cfg, std::uint64_t seed,
                                           double contraction = 0.4) {
  optideq::Rng rng(seed);
  auto m = optideq::EnsembleModel::zeros(cfg);
  for (auto& b : m.blocks) {
    b.w_ip = random_matrix(rng, cfg.d_hidden, cfg.d_in, 0.8);
    b.b_ip = random_vector(rng, cfg.d_hidden, 0.3);
    b.w = random_matrix(rng, cfg.d_hidden, cfg.d_hidden);
    const double n = optideq::spectral_norm(b.w);
    if (n > 0) b.w *= contraction / (cfg.beta * n);
    b.b = random_vector(rng, cfg.d_hidden, 0.3);
  }
  m.w_op = random_matrix(rng, 2, cfg.n_blocks * cfg.d_hidden);
  m.b_op = random_vector(rng, 2, 0.2);
  for (auto& g : m.calib) g = rng.uniform(0.9, 1.1);
  return m;
}

inline std::vector<double> random_input(optideq::Rng& rng, int d) {
  std::vector<double> x(d);
  for (auto& v : x) v = rng.uniform(-1.0, 1.0);
  return x;
}

// Rows shaped like the HMDA preset: lognormal-ish continuous values with some
// ties, categorical values drawn from vocabularies larger than the caps.
inline std::vector<optideq::RawRow> hmda_rows(std::size_t n, std::uint64_t seed) {
  const auto schema = optideq::FeatureSchema::hmda_preset();
  optideq::Rng rng(seed);
  std::vector<optideq::RawRow> rows(n);
  for (std::size_t i = 0; i < n; ++i) {
    auto& r = rows[i];
    r.id = static_cast<std::int64_t>(i);
    r.label = static_cast<int>(rng.below(2));
    for (const auto& f : schema.features) {
      if (f.kind == optideq::FeatureKind::continuous) {
        const double u = rng.uniform();
        r.fields.push_back(std::to_string(std::round(std::exp(3.0 * u) * 100.0) / 100.0));
      } else if (f.kind == optideq::FeatureKind::categorical) {
        r.fields.push_back("v" + std::to_string(rng.below(static_cast<std::uint64_t>(f.cap + 3))));
      } else {
        r.fields.push_back(rng.bernoulli(0.3) ? "1" : "0");
      }
    }
  }
  return rows;
}

// Relative error with an absolute floor for near-zero entries.
inline double rel_err(double a, double b, double floor = 1e-6) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

}  // namespace testutil
