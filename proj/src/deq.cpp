#include "optideq/deq.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "optideq/errors.hpp"
#include "optideq/rng.hpp"

namespace optideq {

double spectral_norm(const Matrix& w) {
  if (w.size() == 0) return 0.0;
  Eigen::SelfAdjointEigenSolver<Matrix> eig(w.transpose() * w, Eigen::EigenvaluesOnly);
  return std::sqrt(std::max(0.0, eig.eigenvalues().maxCoeff()));
}

void ModelConfig::validate() const {
  if (d_in < 1) throw ConfigError("d_in must be >= 1");
  if (d_hidden < 1) throw ConfigError("d_hidden must be >= 1");
  if (n_blocks < 1) throw ConfigError("n_blocks must be >= 1");
  if (!(tol > 0.0 && tol < 1.0)) throw ConfigError("tol must lie in (0, 1)");
  if (max_iters < 1) throw ConfigError("max_iters must be >= 1");
  if (!std::isfinite(alpha) || !std::isfinite(beta)) throw ConfigError("alpha and beta must be finite");
  cell.validate();
}

EnsembleModel EnsembleModel::zeros(const ModelConfig& config) {
  config.validate();
  EnsembleModel m;
  m.config = config;
  const int h = config.d_hidden;
  m.blocks.resize(config.n_blocks);
  for (auto& b : m.blocks) {
    b.w_ip = Matrix::Zero(h, config.d_in);
    b.b_ip = Vector::Zero(h);
    b.w = Matrix::Zero(h, h);
    b.b = Vector::Zero(h);
  }
  m.w_op = Matrix::Zero(2, config.n_blocks * h);
  m.b_op = Vector::Zero(2);
  if (config.cell.kind == CellKind::aoc) m.calib.assign(kCalibrationGains, 1.0);
  return m;
}

EnsembleModel EnsembleModel::initialized(const ModelConfig& config, std::uint64_t seed) {
  EnsembleModel m = zeros(config);
  Rng rng(derive_seed(seed, "deq.init"));
  auto fill = [&rng](Matrix& a, double bound) {
    for (Eigen::Index i = 0; i < a.rows(); ++i)
      for (Eigen::Index j = 0; j < a.cols(); ++j) a(i, j) = rng.uniform(-bound, bound);
  };
  const double h = config.d_hidden;
  for (auto& b : m.blocks) {
    fill(b.w_ip, 1.0 / std::sqrt(static_cast<double>(config.d_in)));
    fill(b.w, 1.0 / std::sqrt(h));
    const double gain = std::abs(config.beta) * spectral_norm(b.w);
    if (gain > 0.4) b.w *= 0.4 / gain;
  }
  fill(m.w_op, 1.0 / std::sqrt(static_cast<double>(m.w_op.cols())));
  return m;
}

void EnsembleModel::validate() const {
  config.validate();
  const int h = config.d_hidden;
  if (static_cast<int>(blocks.size()) != config.n_blocks) throw ConfigError("block count != n_blocks");
  for (std::size_t k = 0; k < blocks.size(); ++k) {
    const auto& b = blocks[k];
    const std::string tag = "block " + std::to_string(k) + ": ";
    if (b.w_ip.rows() != h || b.w_ip.cols() != config.d_in) throw ConfigError(tag + "W_ip shape");
    if (b.b_ip.size() != h) throw ConfigError(tag + "b_ip shape");
    if (b.w.rows() != h || b.w.cols() != h) throw ConfigError(tag + "W shape");
    if (b.b.size() != h) throw ConfigError(tag + "b shape");
    if (!b.w_ip.allFinite() || !b.b_ip.allFinite() || !b.w.allFinite() || !b.b.allFinite()) {
      throw ConfigError(tag + "non-finite parameter");
    }
  }
  if (w_op.rows() != 2 || w_op.cols() != config.n_blocks * h) throw ConfigError("W_op shape");
  if (b_op.size() != 2) throw ConfigError("b_op shape");
  const bool aoc = config.cell.kind == CellKind::aoc;
  if (aoc != (calib.size() == kCalibrationGains) || (!aoc && !calib.empty())) {
    throw ConfigError("calibration gains must be present exactly for AOC cells");
  }
}

bool ForwardResult::all_converged() const {
  return std::all_of(blocks.begin(), blocks.end(), [](const auto& r) { return r.converged; });
}

Vector deq_step(const Vector& s, const PreparedCell& cell, const Vector& bias_plus_proj, double alpha,
                double beta) {
  Vector next = alpha * s + beta * cell.apply(s) + bias_plus_proj;
  if (!next.allFinite()) throw NumericError("deq_step", "state update");
  return next;
}

Vector deq_step(const Vector& s, const DeqBlockParams& params, const Vector& x_proj, double alpha,
                double beta, const CellSpec& cell) {
  const auto d = params.w.rows();
  if (params.w.cols() != d || s.size() != d || x_proj.size() != d || params.b.size() != d) {
    throw ConfigError("deq_step: inconsistent shapes");
  }
  cell.validate();
  PreparedCell prepared(cell, params.w);
  return deq_step(s, prepared, params.b + x_proj, alpha, beta);
}

FixedPointResult solve_fixed_point(const PreparedCell& cell, const Vector& bias_plus_proj,
                                   const ModelConfig& config) {
  FixedPointResult r;
  Vector s = bias_plus_proj;
  for (int it = 0; it < config.max_iters; ++it) {
    Vector next = deq_step(s, cell, bias_plus_proj, config.alpha, config.beta);
    r.residual = (next - s).norm() / std::max(s.norm(), kEpsFloor);
    r.iterations = it + 1;
    s = std::move(next);
    if (r.residual <= config.tol) {
      r.converged = true;
      break;
    }
  }
  r.s_star = std::move(s);
  return r;
}

FixedPointResult solve_fixed_point(const DeqBlockParams& params, const Vector& x_proj,
                                   const ModelConfig& config) {
  config.validate();
  const int h = config.d_hidden;
  if (params.w.rows() != h || params.w.cols() != h || params.b.size() != h || x_proj.size() != h) {
    throw ConfigError("solve_fixed_point: inconsistent shapes");
  }
  PreparedCell cell(config.cell, params.w);
  return solve_fixed_point(cell, params.b + x_proj, config);
}

PreparedEnsemble::PreparedEnsemble(const EnsembleModel& model, const OpticalVariation* variation)
    : model_(&model) {
  model.validate();
  cells_.reserve(model.blocks.size());
  if (model.config.cell.kind == CellKind::aoc) {
    // One physical core is time-multiplexed across blocks, so all blocks share
    // the same frozen channel variation.
    const OpticalVariation shared =
        variation ? *variation : OpticalVariation::draw(model.config.cell.rng_seed, model.config.d_hidden);
    for (const auto& b : model.blocks) cells_.emplace_back(model.config.cell, shared, b.w, model.calib);
  } else {
    for (const auto& b : model.blocks) cells_.emplace_back(model.config.cell, b.w);
  }
}

Vector PreparedEnsemble::projection(int block, std::span<const double> x) const {
  const auto& b = model_->blocks[block];
  const Eigen::Map<const Vector> xv(x.data(), static_cast<Eigen::Index>(x.size()));
  return b.w_ip * xv + b.b_ip;
}

ForwardResult PreparedEnsemble::forward(std::span<const double> x) const {
  const auto& m = *model_;
  if (static_cast<int>(x.size()) != m.config.d_in) {
    throw ConfigError("forward: input length " + std::to_string(x.size()) + " != d_in " +
                      std::to_string(m.config.d_in));
  }
  const int h = m.config.d_hidden;
  ForwardResult out;
  out.blocks.reserve(m.blocks.size());
  Vector head = m.b_op;
  for (int k = 0; k < m.config.n_blocks; ++k) {
    const Vector c = m.blocks[k].b + projection(k, x);
    out.blocks.push_back(solve_fixed_point(cells_[k], c, m.config));
    head.noalias() += m.w_op.middleCols(k * h, h) * out.blocks.back().s_star;
  }
  out.logits[0] = head[0];
  out.logits[1] = head[1];
  return out;
}

ForwardResult forward(const EnsembleModel& model, std::span<const double> x) {
  return PreparedEnsemble(model).forward(x);
}

ParameterCount parameter_count(const ModelConfig& c) {
  const long n = c.n_blocks, h = c.d_hidden, d = c.d_in;
  ParameterCount p;
  p.total = n * (h * d + h + h * h + h) + 2 * (n * h) + 2 +
            (c.cell.kind == CellKind::aoc ? kCalibrationGains : 0);
  p.optical = n * h * h;
  return p;
}

ParameterCount parameter_count(const EnsembleModel& model) { return parameter_count(model.config); }

}  // namespace optideq
