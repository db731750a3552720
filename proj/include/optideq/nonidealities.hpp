#pragma once

// Optical matrix-vector stage with optional hardware impairments.
//
// The ideal optical product is W * tanh(s). An AOC cell composes, in order:
//
//   1. tanh_approx     u1 = k1 * (t + e1 * (t - t^3)),        t = tanh(s)
//   2. microled        u  = u1 * (1 - e2 * |u1|)
//   3. slm_distortion  W_eff = k3 * q * (1 - e3 * q^2),        q = quantize(W)
//   4. matrix product  v0 = W_eff * u
//   5. tia_gain        v1 = k5 * g .* v0,                      g_i = 1 + e4 * r_i
//   6. crosstalk       v2 = k6 * (I + e5 * C) * v1
//   7. darkness        v3 = v2 + e6 * mean(u) * 1
//   8. power_norm      out = v3 * target_rms / max(rms(v3), 1e-12)   (e7 == 1 only)
//
// k1, k3, k5, k6 are the four trainable calibration gains (1 at init). The
// frozen per-channel draws r (uniform on [-1, 1]) and C (zero diagonal, rows
// summing to 1) come from std::mt19937_64 seeded with CellSpec::rng_seed:
// d draws for r_i = 2u - 1, then d*d draws in row-major order for the raw
// off-diagonal crosstalk weights (diagonal draws are consumed and discarded),
// with u = (engine() >> 11) * 2^-53.

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>

#include "optideq/linalg.hpp"

namespace optideq {

enum class CellKind { simple, aoc };

enum class Stage : int {
  tanh_approx = 0,
  microled,
  slm_distortion,
  tia_gain,
  crosstalk,
  darkness,
  power_norm,
};

inline constexpr int kStageCount = 7;
inline constexpr int kCalibrationGains = 4;
inline constexpr double kEpsFloor = 1e-12;

std::string_view stage_name(Stage stage);
Stage stage_from_name(std::string_view name);
std::string_view cell_kind_name(CellKind kind);
CellKind cell_kind_from_name(std::string_view name);

struct StageConfig {
  double magnitude = 0.0;
  // Only power_norm uses a shape parameter: the target RMS of the output.
  double shape = 1.0;
};

struct CellSpec {
  CellKind kind = CellKind::simple;
  std::array<StageConfig, kStageCount> stages{};
  // 0 disables weight quantisation.
  int quant_bits = 0;
  std::uint64_t rng_seed = 0;

  static CellSpec simple();
  // Default AOC cell: e1..e6 = 0.02, power_norm off, 9-bit weights.
  static CellSpec aoc(std::uint64_t rng_seed = 0);

  StageConfig& stage(Stage s) { return stages[static_cast<int>(s)]; }
  const StageConfig& stage(Stage s) const { return stages[static_cast<int>(s)]; }
  double eps(Stage s) const { return stage(s).magnitude; }

  void validate() const;
};

// Symmetric uniform quantisation to `bits` bits followed by dequantisation.
Matrix quantize_weights(const Matrix& w, int bits);

// Per-channel draws frozen for a given seed and width.
struct OpticalVariation {
  Vector tia_unit;  // r_i in [-1, 1]
  Matrix crosstalk; // C

  static OpticalVariation draw(std::uint64_t seed, int dim);
};

// Intermediate values of one cell evaluation, kept for the backward pass.
struct CellTrace {
  Vector s, t, t1, u1, u, v0, v1, c2, v3, out;
  double rms = 0.0;
};

// Gradients w.r.t. the raw optical weights and the calibration gains.
struct CellGrads {
  Matrix w;
  std::array<double, kCalibrationGains> calib{};
};

// A cell bound to one weight matrix for the duration of a forward pass:
// quantisation and the SLM transfer curve are applied once here.
class PreparedCell {
 public:
  PreparedCell(const CellSpec& spec, const Matrix& w, std::span<const double> calib = {});
  PreparedCell(const CellSpec& spec, const OpticalVariation& variation, const Matrix& w,
               std::span<const double> calib = {});

  int dim() const { return static_cast<int>(w_eff_.rows()); }
  const Matrix& effective_weights() const { return w_eff_; }

  Vector apply(const Vector& s) const;
  void trace(const Vector& s, CellTrace& tr) const;

  // d out / d s at the traced state.
  Matrix jacobian(const CellTrace& tr) const;

  // Accumulates adj^T * d out / d(W, gains) into grads; returns adj^T * d out / d s.
  Vector backward(const CellTrace& tr, const Vector& adj, CellGrads& grads) const;

  bool ideal() const { return ideal_; }

  // Upper bound on the Lipschitz constant of apply() without power_norm:
  // ||W||_2 for the ideal cell, |k1| (1 + |e1|) ||linear||_2 for AOC
  // (emitter slope bound valid while |u1| <= 1 / e2).
  double lipschitz_bound() const;

 private:
  void init(const Matrix& w, std::span<const double> calib);
  Vector emitter_derivative(const CellTrace& tr) const;
  Matrix power_norm_jacobian(const CellTrace& tr) const;

  CellSpec spec_;
  OpticalVariation variation_;
  bool ideal_ = true;
  std::array<double, kCalibrationGains> gain_{1.0, 1.0, 1.0, 1.0};
  Matrix q_;         // quantised W
  Matrix w_dist_;    // q .* (1 - e3 q^2), before the k3 gain
  Matrix w_eff_;
  Vector tia_;       // g
  Matrix mix_;       // I + e5 C
  Matrix linear_;    // maps u to v3
};

// One-shot impaired product using unit calibration gains.
Vector cell_apply(const Matrix& w, const Vector& s, const CellSpec& spec);

}  // namespace optideq
