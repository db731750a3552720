#include "optideq/nonidealities.hpp"

#include <algorithm>
#include <cmath>

#include "optideq/errors.hpp"
#include "optideq/rng.hpp"

namespace optideq {

namespace {

constexpr std::array<std::string_view, kStageCount> kStageNames = {
    "tanh_approx", "microled", "slm_distortion", "tia_gain", "crosstalk", "darkness", "power_norm"};

void require_finite(const Vector& v, std::string_view stage) {
  if (!v.allFinite()) {
    throw NumericError(std::string(stage), "vector of size " + std::to_string(v.size()));
  }
}

void require_finite(const Matrix& m, std::string_view stage) {
  if (!m.allFinite()) {
    throw NumericError(std::string(stage), "matrix " + std::to_string(m.rows()) + "x" +
                                               std::to_string(m.cols()));
  }
}

}  // namespace

std::string_view stage_name(Stage stage) { return kStageNames[static_cast<int>(stage)]; }

Stage stage_from_name(std::string_view name) {
  for (int i = 0; i < kStageCount; ++i) {
    if (kStageNames[i] == name) return static_cast<Stage>(i);
  }
  throw ConfigError("unknown impairment stage '" + std::string(name) + "'");
}

std::string_view cell_kind_name(CellKind kind) { return kind == CellKind::simple ? "simple" : "aoc"; }

CellKind cell_kind_from_name(std::string_view name) {
  if (name == "simple" || name == "SimpleCell") return CellKind::simple;
  if (name == "aoc" || name == "AOCCell") return CellKind::aoc;
  throw ConfigError("unknown cell kind '" + std::string(name) + "' (expected simple or aoc)");
}

CellSpec CellSpec::simple() { return CellSpec{}; }

CellSpec CellSpec::aoc(std::uint64_t rng_seed) {
  CellSpec spec;
  spec.kind = CellKind::aoc;
  for (int i = 0; i < 6; ++i) spec.stages[i].magnitude = 0.02;
  spec.stage(Stage::power_norm) = {0.0, 1.0};
  spec.quant_bits = 9;
  spec.rng_seed = rng_seed;
  return spec;
}

void CellSpec::validate() const {
  for (int i = 0; i < kStageCount; ++i) {
    const double m = stages[i].magnitude;
    if (!std::isfinite(m) || m < 0.0) {
      throw ConfigError("stage " + std::string(kStageNames[i]) + " magnitude must be finite and >= 0");
    }
  }
  const double pn = stage(Stage::power_norm).magnitude;
  if (pn != 0.0 && pn != 1.0) throw ConfigError("power_norm magnitude is a switch: 0 or 1");
  if (!(stage(Stage::power_norm).shape > 0.0)) throw ConfigError("power_norm target_rms must be > 0");
  if (quant_bits != 0 && (quant_bits < 2 || quant_bits > 16)) {
    throw ConfigError("quant_bits must be 0 (off) or in [2, 16]");
  }
  if (kind == CellKind::simple) {
    for (int i = 0; i < kStageCount; ++i) {
      if (stages[i].magnitude != 0.0) throw ConfigError("SimpleCell requires all stage magnitudes = 0");
    }
    if (quant_bits != 0) throw ConfigError("SimpleCell requires quantisation disabled");
  }
}

Matrix quantize_weights(const Matrix& w, int bits) {
  if (bits < 2 || bits > 16) throw ConfigError("quantisation bits must be in [2, 16]");
  const double scale = w.cwiseAbs().maxCoeff();
  if (scale == 0.0) return Matrix::Zero(w.rows(), w.cols());
  const double levels = std::ldexp(1.0, bits - 1) - 1.0;
  return w.unaryExpr([&](double x) {
    const double level = std::clamp(std::round(x / scale * levels), -levels, levels);
    return level * scale / levels;
  });
}

OpticalVariation OpticalVariation::draw(std::uint64_t seed, int dim) {
  Rng rng(seed);
  OpticalVariation v;
  v.tia_unit.resize(dim);
  for (int i = 0; i < dim; ++i) v.tia_unit[i] = 2.0 * rng.uniform() - 1.0;
  v.crosstalk = Matrix::Zero(dim, dim);
  for (int i = 0; i < dim; ++i) {
    for (int j = 0; j < dim; ++j) {
      const double raw = rng.uniform();
      if (i != j) v.crosstalk(i, j) = raw;
    }
    const double row_sum = v.crosstalk.row(i).sum();
    if (row_sum > 0.0) v.crosstalk.row(i) /= row_sum;
  }
  return v;
}

PreparedCell::PreparedCell(const CellSpec& spec, const Matrix& w, std::span<const double> calib)
    : spec_(spec) {
  if (spec_.kind == CellKind::aoc) {
    variation_ = OpticalVariation::draw(spec_.rng_seed, static_cast<int>(w.rows()));
  }
  init(w, calib);
}

PreparedCell::PreparedCell(const CellSpec& spec, const OpticalVariation& variation, const Matrix& w,
                           std::span<const double> calib)
    : spec_(spec), variation_(variation) {
  init(w, calib);
}

void PreparedCell::init(const Matrix& w, std::span<const double> calib) {
  if (w.rows() != w.cols()) throw ConfigError("optical weight matrix must be square");
  ideal_ = spec_.kind == CellKind::simple;
  if (ideal_) {
    w_eff_ = w;
    return;
  }
  if (!calib.empty()) {
    if (calib.size() != kCalibrationGains) throw ConfigError("AOC cell expects 4 calibration gains");
    std::copy(calib.begin(), calib.end(), gain_.begin());
  }
  const int d = static_cast<int>(w.rows());
  if (variation_.tia_unit.size() != d) throw ConfigError("optical variation width mismatch");

  q_ = spec_.quant_bits > 0 ? quantize_weights(w, spec_.quant_bits) : w;
  const double e3 = spec_.eps(Stage::slm_distortion);
  w_dist_ = q_.array() * (1.0 - e3 * q_.array().square());
  w_eff_ = gain_[1] * w_dist_;
  require_finite(w_eff_, "slm_distortion");

  tia_ = Vector::Ones(d) + spec_.eps(Stage::tia_gain) * variation_.tia_unit;
  mix_ = Matrix::Identity(d, d) + spec_.eps(Stage::crosstalk) * variation_.crosstalk;
  linear_ = gain_[3] * mix_ * (gain_[2] * tia_).asDiagonal() * w_eff_;
  linear_.array() += spec_.eps(Stage::darkness) / d;
}

double PreparedCell::lipschitz_bound() const {
  if (ideal_) return spectral_norm(w_eff_);
  return std::abs(gain_[0]) * (1.0 + std::abs(spec_.eps(Stage::tanh_approx))) * spectral_norm(linear_);
}

Vector PreparedCell::apply(const Vector& s) const {
  if (ideal_) {
    Vector out = w_eff_ * s.array().tanh().matrix();
    if (!out.allFinite()) {
      require_finite(Vector(s.array().tanh()), "tanh");
      require_finite(out, "matrix_product");
    }
    return out;
  }
  const double e1 = spec_.eps(Stage::tanh_approx);
  const double e2 = spec_.eps(Stage::microled);
  const Eigen::ArrayXd t = s.array().tanh();
  const Eigen::ArrayXd u1 = gain_[0] * (t + e1 * (t - t.cube()));
  const Vector u = (u1 * (1.0 - e2 * u1.abs())).matrix();
  Vector out = linear_ * u;
  if (spec_.eps(Stage::power_norm) == 1.0) {
    const double rms = std::sqrt(out.squaredNorm() / out.size());
    out *= spec_.stage(Stage::power_norm).shape / std::max(rms, kEpsFloor);
  }
  if (!out.allFinite()) {
    // Replay stage by stage to name the offending stage.
    CellTrace tr;
    trace(s, tr);
  }
  return out;
}

void PreparedCell::trace(const Vector& s, CellTrace& tr) const {
  tr.s = s;
  tr.t = s.array().tanh();
  if (ideal_) {
    require_finite(tr.t, "tanh");
    tr.u = tr.t;
    tr.out = w_eff_ * tr.t;
    require_finite(tr.out, "matrix_product");
    return;
  }
  const double e1 = spec_.eps(Stage::tanh_approx);
  const double e2 = spec_.eps(Stage::microled);
  const int d = dim();

  tr.t1 = (tr.t.array() + e1 * (tr.t.array() - tr.t.array().cube())).matrix();
  tr.u1 = gain_[0] * tr.t1;
  require_finite(tr.u1, "tanh_approx");
  tr.u = (tr.u1.array() * (1.0 - e2 * tr.u1.array().abs())).matrix();
  require_finite(tr.u, "microled");

  tr.v0 = w_eff_ * tr.u;
  require_finite(tr.v0, "matrix_product");
  tr.v1 = gain_[2] * tia_.cwiseProduct(tr.v0);
  require_finite(tr.v1, "tia_gain");
  tr.c2 = mix_ * tr.v1;
  const Vector v2 = gain_[3] * tr.c2;
  require_finite(v2, "crosstalk");
  tr.v3 = v2.array() + spec_.eps(Stage::darkness) * tr.u.mean();
  require_finite(tr.v3, "darkness");

  tr.rms = std::sqrt(tr.v3.squaredNorm() / d);
  tr.out = tr.v3;
  if (spec_.eps(Stage::power_norm) == 1.0) {
    tr.out *= spec_.stage(Stage::power_norm).shape / std::max(tr.rms, kEpsFloor);
  }
  require_finite(tr.out, "power_norm");
}

Vector PreparedCell::emitter_derivative(const CellTrace& tr) const {
  const Eigen::ArrayXd t = tr.t.array();
  const Eigen::ArrayXd dt = 1.0 - t.square();
  if (ideal_) return dt.matrix();
  const double e1 = spec_.eps(Stage::tanh_approx);
  const double e2 = spec_.eps(Stage::microled);
  const Eigen::ArrayXd du1 = gain_[0] * (1.0 + e1 * (1.0 - 3.0 * t.square()));
  const Eigen::ArrayXd du = 1.0 - 2.0 * e2 * tr.u1.array().abs();
  return (dt * du1 * du).matrix();
}

Matrix PreparedCell::power_norm_jacobian(const CellTrace& tr) const {
  const int d = dim();
  const double target = spec_.stage(Stage::power_norm).shape;
  if (tr.rms <= kEpsFloor) return (target / kEpsFloor) * Matrix::Identity(d, d);
  Matrix p = -tr.v3 * tr.v3.transpose() / (d * tr.rms * tr.rms);
  p.diagonal().array() += 1.0;
  return (target / tr.rms) * p;
}

Matrix PreparedCell::jacobian(const CellTrace& tr) const {
  const Vector du = emitter_derivative(tr);
  Matrix j = (ideal_ ? w_eff_ : linear_) * du.asDiagonal();
  if (!ideal_ && spec_.eps(Stage::power_norm) == 1.0) j = power_norm_jacobian(tr) * j;
  return j;
}

Vector PreparedCell::backward(const CellTrace& tr, const Vector& adj, CellGrads& grads) const {
  const int d = dim();
  if (grads.w.rows() != d || grads.w.cols() != d) grads.w = Matrix::Zero(d, d);
  if (ideal_) {
    grads.w.noalias() += adj * tr.t.transpose();
    return (w_eff_.transpose() * adj).cwiseProduct(emitter_derivative(tr));
  }
  const double e1 = spec_.eps(Stage::tanh_approx);
  const double e2 = spec_.eps(Stage::microled);
  const double e3 = spec_.eps(Stage::slm_distortion);

  Vector g3 = adj;
  if (spec_.eps(Stage::power_norm) == 1.0) g3 = power_norm_jacobian(tr).transpose() * adj;

  grads.calib[3] += g3.dot(tr.c2);
  const Vector g1 = mix_.transpose() * (gain_[3] * g3);
  grads.calib[2] += g1.dot(tia_.cwiseProduct(tr.v0));
  const Vector g0 = gain_[2] * tia_.cwiseProduct(g1);

  const Matrix g_weff = g0 * tr.u.transpose();
  grads.calib[1] += (g_weff.array() * w_dist_.array()).sum();
  // Straight-through: quantisation is the identity in the backward pass.
  grads.w.array() += gain_[1] * g_weff.array() * (1.0 - 3.0 * e3 * q_.array().square());

  Vector gu = w_eff_.transpose() * g0;
  gu.array() += spec_.eps(Stage::darkness) * g3.sum() / d;
  const Vector gu1 = gu.cwiseProduct((1.0 - 2.0 * e2 * tr.u1.array().abs()).matrix());
  grads.calib[0] += gu1.dot(tr.t1);
  const Eigen::ArrayXd t = tr.t.array();
  return (gain_[0] * gu1.array() * (1.0 + e1 * (1.0 - 3.0 * t.square())) * (1.0 - t.square())).matrix();
}

Vector cell_apply(const Matrix& w, const Vector& s, const CellSpec& spec) {
  spec.validate();
  if (w.cols() != s.size()) throw ConfigError("cell_apply: state length does not match W");
  PreparedCell cell(spec, w);
  CellTrace tr;
  cell.trace(s, tr);
  return tr.out;
}

}  // namespace optideq
