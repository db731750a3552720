#pragma once

#include <cstdint>
#include <span>
#include <string>

#include "optideq/deq.hpp"
#include "optideq/linalg.hpp"

namespace optideq {

// input -> hidden -> hidden -> 2, ReLU after each hidden layer.
struct MlpParams {
  Matrix w1, w2, w3;
  Vector b1, b2, b3;
  // Default learning rate for this width (5e-4 for 48, 1e-3 for 128).
  double default_lr = 5e-4;

  static MlpParams zeros(int d_in, int hidden);
  // Uniform(+-1/sqrt(fan_in)) weights, zero biases.
  static MlpParams initialized(int d_in, int hidden, std::uint64_t seed);
  static MlpParams small(int d_in, std::uint64_t seed) { return initialized(d_in, 48, seed); }
  static MlpParams large(int d_in, std::uint64_t seed) { return initialized(d_in, 128, seed); }

  int d_in() const { return static_cast<int>(w1.cols()); }
  int hidden() const { return static_cast<int>(w1.rows()); }
  long parameter_count() const;
};

// Two-logit affine classifier; l2 is the penalty weight on `w`.
struct LogRegParams {
  Matrix w;  // 2 x d_in
  Vector b;  // 2
  double l2 = 1e-4;

  static LogRegParams zeros(int d_in);
  int d_in() const { return static_cast<int>(w.cols()); }
  long parameter_count() const { return w.size() + b.size(); }
};

Logits mlp_forward(const MlpParams& p, std::span<const double> x);
Logits logreg_forward(const LogRegParams& p, std::span<const double> x);

struct MlpGrads {
  Matrix w1, w2, w3;
  Vector b1, b2, b3;
  static MlpGrads zeros_like(const MlpParams& p);
};

// Accumulates the gradient of a per-sample loss with logit gradient dlogits.
void mlp_backward(const MlpParams& p, std::span<const double> x, const Logits& dlogits, MlpGrads& g);

}  // namespace optideq
