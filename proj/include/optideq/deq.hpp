#pragma once

// Deep-equilibrium ensemble: each block iterates
//   s_{t+1} = alpha * s_t + beta * cell(W, s_t) + b + x_proj,   x_proj = W_ip x + b_ip
// from s_0 = b + x_proj to a fixed point; the block fixed points are
// concatenated and mapped to two logits by a shared affine head.

#include <cstdint>
#include <span>
#include <vector>

#include "optideq/linalg.hpp"
#include "optideq/nonidealities.hpp"

namespace optideq {

struct ModelConfig {
  int d_in = 1;
  int d_hidden = 16;
  int n_blocks = 4;
  double alpha = 0.5;
  double beta = 0.5;
  double tol = 1e-3;
  int max_iters = 100;
  CellSpec cell;

  void validate() const;
};

struct DeqBlockParams {
  Matrix w_ip;  // d_hidden x d_in
  Vector b_ip;  // d_hidden
  Matrix w;     // d_hidden x d_hidden, optical
  Vector b;     // d_hidden
};

struct EnsembleModel {
  ModelConfig config;
  std::vector<DeqBlockParams> blocks;
  Matrix w_op;                // 2 x (n_blocks * d_hidden)
  Vector b_op;                // 2
  std::vector<double> calib;  // 4 gains for AOC cells, empty otherwise

  // All-zero parameters (calibration gains at 1).
  static EnsembleModel zeros(const ModelConfig& config);
  // Uniform(+-1/sqrt(fan_in)) weights, zero biases, optical W rescaled so that
  // beta * ||W||_2 <= 0.4.
  static EnsembleModel initialized(const ModelConfig& config, std::uint64_t seed);

  void validate() const;
};

struct FixedPointResult {
  Vector s_star;
  int iterations = 0;
  double residual = 0.0;
  bool converged = false;
};

struct Logits {
  double v[2] = {0.0, 0.0};
  double operator[](int i) const { return v[i]; }
  double& operator[](int i) { return v[i]; }
};

// argmax with ties going to class 0.
inline int predicted_class(const Logits& z) { return z[1] > z[0] ? 1 : 0; }

struct ForwardResult {
  Logits logits;
  std::vector<FixedPointResult> blocks;
  bool all_converged() const;
};

// One application of the iteration map.
Vector deq_step(const Vector& s, const DeqBlockParams& params, const Vector& x_proj, double alpha,
                double beta, const CellSpec& cell);
Vector deq_step(const Vector& s, const PreparedCell& cell, const Vector& bias_plus_proj, double alpha,
                double beta);

// Picard iteration until ||s_{t+1} - s_t|| / max(||s_t||, 1e-12) <= tol.
FixedPointResult solve_fixed_point(const DeqBlockParams& params, const Vector& x_proj,
                                   const ModelConfig& config);
FixedPointResult solve_fixed_point(const PreparedCell& cell, const Vector& bias_plus_proj,
                                   const ModelConfig& config);

// The model with each block's cell prepared (weights quantised once).
class PreparedEnsemble {
 public:
  PreparedEnsemble(const EnsembleModel& model, const OpticalVariation* variation = nullptr);

  ForwardResult forward(std::span<const double> x) const;
  const EnsembleModel& model() const { return *model_; }
  const PreparedCell& cell(int block) const { return cells_[block]; }
  Vector projection(int block, std::span<const double> x) const;

 private:
  const EnsembleModel* model_;
  std::vector<PreparedCell> cells_;
};

ForwardResult forward(const EnsembleModel& model, std::span<const double> x);

struct ParameterCount {
  long total = 0;
  long optical = 0;
};

ParameterCount parameter_count(const EnsembleModel& model);
ParameterCount parameter_count(const ModelConfig& config);

}  // namespace optideq
