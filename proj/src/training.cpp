#include "optideq/training.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <type_traits>

#include "optideq/errors.hpp"
#include "optideq/evalkit.hpp"
#include "optideq/rng.hpp"

namespace optideq {

namespace {

std::span<double> view(Matrix& m) { return {m.data(), static_cast<std::size_t>(m.size())}; }
std::span<double> view(Vector& v) { return {v.data(), static_cast<std::size_t>(v.size())}; }

void add_into(GradBuffers& dst, const ParamViews& src) {
  for (std::size_t k = 0; k < src.size(); ++k)
    for (std::size_t i = 0; i < src[k].size(); ++i) dst[k][i] += src[k][i];
}

void scale(GradBuffers& g, double factor) {
  for (auto& t : g)
    for (double& v : t) v *= factor;
}

}  // namespace

CrossEntropy cross_entropy(const Logits& z, int label) {
  if (label != 0 && label != 1) throw DataError("cross_entropy: label must be 0 or 1");
  const double m = std::max(z[0], z[1]);
  const double e0 = std::exp(z[0] - m);
  const double e1 = std::exp(z[1] - m);
  const double lse = m + std::log(e0 + e1);
  CrossEntropy out;
  out.loss = lse - z[label];
  const double p1 = e1 / (e0 + e1);
  out.grad[0] = (1.0 - p1) - (label == 0 ? 1.0 : 0.0);
  out.grad[1] = p1 - (label == 1 ? 1.0 : 0.0);
  return out;
}

GradBuffers zero_grads(const ParamViews& params) {
  GradBuffers g;
  g.reserve(params.size());
  for (const auto& p : params) g.emplace_back(p.size(), 0.0);
  return g;
}

void adam_update(const ParamViews& params, const GradBuffers& grads, AdamState& st, double lr) {
  if (grads.size() != params.size()) throw ConfigError("adam_update: gradient/parameter count mismatch");
  if (st.m.empty()) {
    for (const auto& p : params) {
      st.m.emplace_back(p.size(), 0.0);
      st.v.emplace_back(p.size(), 0.0);
    }
  }
  ++st.step;
  // Bias correction folded into the step size, with eps added to the
  // uncorrected sqrt(v): lr_t = lr * sqrt(1 - beta2^t) / (1 - beta1^t).
  const double lr_t = lr * std::sqrt(1.0 - std::pow(st.beta2, static_cast<double>(st.step))) /
                      (1.0 - std::pow(st.beta1, static_cast<double>(st.step)));
  for (std::size_t k = 0; k < params.size(); ++k) {
    if (grads[k].size() != params[k].size() || st.m[k].size() != params[k].size()) {
      throw ConfigError("adam_update: tensor " + std::to_string(k) + " shape mismatch");
    }
    for (std::size_t i = 0; i < params[k].size(); ++i) {
      const double g = grads[k][i];
      st.m[k][i] = st.beta1 * st.m[k][i] + (1.0 - st.beta1) * g;
      st.v[k][i] = st.beta2 * st.v[k][i] + (1.0 - st.beta2) * g * g;
      params[k][i] -= lr_t * st.m[k][i] / (std::sqrt(st.v[k][i]) + st.eps);
    }
  }
}

// ---- DEQ --------------------------------------------------------------------

DeqGrads DeqGrads::zeros_like(const EnsembleModel& model) {
  DeqGrads g;
  g.blocks.reserve(model.blocks.size());
  for (const auto& b : model.blocks) {
    g.blocks.push_back({Matrix::Zero(b.w_ip.rows(), b.w_ip.cols()), Vector::Zero(b.b_ip.size()),
                        Matrix::Zero(b.w.rows(), b.w.cols()), Vector::Zero(b.b.size())});
  }
  g.w_op = Matrix::Zero(model.w_op.rows(), model.w_op.cols());
  g.b_op = Vector::Zero(model.b_op.size());
  g.calib.assign(model.calib.size(), 0.0);
  return g;
}

namespace {

template <class Blocks, class Head, class Bias, class Calib>
ParamViews deq_views(Blocks& blocks, Head& w_op, Bias& b_op, Calib& calib) {
  ParamViews v;
  for (auto& b : blocks) {
    v.push_back(view(b.w_ip));
    v.push_back(view(b.b_ip));
    v.push_back(view(b.w));
    v.push_back(view(b.b));
  }
  v.push_back(view(w_op));
  v.push_back(view(b_op));
  if (!calib.empty()) v.emplace_back(calib.data(), calib.size());
  return v;
}

}  // namespace

ParamViews parameter_views(EnsembleModel& m) { return deq_views(m.blocks, m.w_op, m.b_op, m.calib); }
ParamViews parameter_views(DeqGrads& g) { return deq_views(g.blocks, g.w_op, g.b_op, g.calib); }

void implicit_backward(const PreparedEnsemble& prepared, std::span<const double> x, const ForwardResult& fwd,
                       const Logits& dlogits, DeqGrads& grads, bool through_impairments) {
  const EnsembleModel& m = prepared.model();
  const int h = m.config.d_hidden;
  const double alpha = m.config.alpha;
  const double beta = m.config.beta;
  if (static_cast<int>(fwd.blocks.size()) != m.config.n_blocks) {
    throw ConfigError("implicit_backward: forward result has the wrong block count");
  }
  Vector dz(2);
  dz << dlogits[0], dlogits[1];
  const Eigen::Map<const Vector> xv(x.data(), static_cast<Eigen::Index>(x.size()));

  const Matrix identity = Matrix::Identity(h, h);
  for (int k = 0; k < m.config.n_blocks; ++k) {
    const FixedPointResult& fp = fwd.blocks[k];
    if (!fp.converged) {
      throw TrainingError("implicit_backward: block " + std::to_string(k) + " did not converge");
    }
    grads.w_op.middleCols(k * h, h).noalias() += dz * fp.s_star.transpose();
    const Vector g_s = m.w_op.middleCols(k * h, h).transpose() * dz;

    const PreparedCell ideal(CellSpec::simple(), m.blocks[k].w);
    const PreparedCell& cell = through_impairments ? prepared.cell(k) : ideal;
    CellTrace tr;
    cell.trace(fp.s_star, tr);

    // (I - J)^T w = dL/ds*, with J = alpha I + beta d cell / d s.
    const Matrix a = (identity - alpha * identity - beta * cell.jacobian(tr)).transpose();
    Eigen::PartialPivLU<Matrix> lu(a);
    const double rcond = lu.rcond();
    if (!(rcond >= kMinReciprocalCondition)) {
      std::ostringstream msg;
      msg << "implicit_backward: (I - J) is singular in block " << k << " (rcond " << rcond << ")";
      throw TrainingError(msg.str());
    }
    const Vector w = lu.solve(g_s);

    auto& gb = grads.blocks[k];
    gb.b += w;
    gb.b_ip += w;
    gb.w_ip.noalias() += w * xv.transpose();
    CellGrads cg;
    cg.w = Matrix::Zero(h, h);
    cell.backward(tr, beta * w, cg);
    gb.w += cg.w;
    if (through_impairments && !grads.calib.empty()) {
      for (int i = 0; i < kCalibrationGains; ++i) grads.calib[i] += cg.calib[i];
    }
  }
  grads.b_op += dz;
}

DeqGrads implicit_backward(const EnsembleModel& model, std::span<const double> x, const ForwardResult& fwd,
                           const Logits& dlogits) {
  DeqGrads g = DeqGrads::zeros_like(model);
  PreparedEnsemble prepared(model);
  implicit_backward(prepared, x, fwd, dlogits, g);
  return g;
}

// ---- baselines --------------------------------------------------------------

ParamViews parameter_views(MlpParams& p) {
  return {view(p.w1), view(p.b1), view(p.w2), view(p.b2), view(p.w3), view(p.b3)};
}

ParamViews parameter_views(LogRegParams& p) { return {view(p.w), view(p.b)}; }

// ---- loop ---------------------------------------------------------------------

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be > 0");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (max_epochs < 1) throw ConfigError("max_epochs must be >= 1");
  if (patience < 1 || patience > max_epochs) throw ConfigError("patience must be in [1, max_epochs]");
  if (!(max_gain >= 0.0)) throw ConfigError("max_gain must be >= 0");
  if (monitor != "val_bacc" && monitor != "val_loss") {
    throw ConfigError("monitor must be val_bacc or val_loss");
  }
}

std::string TrainHistory::to_table() const {
  std::ostringstream out;
  out.precision(17);
  out << "epoch,train_loss,val_metric,skipped_batches\n";
  for (const auto& e : epochs) {
    out << e.epoch << ',' << e.train_loss << ',' << e.val_metric << ',' << e.skipped_batches << '\n';
  }
  return out.str();
}

bool EarlyStopper::update(int epoch, double metric) {
  if (!seen_ || metric > best_) {
    seen_ = true;
    best_ = metric;
    best_epoch_ = epoch;
    since_best_ = 0;
    return true;
  }
  ++since_best_;
  return false;
}

BatchOutcome batch_gradient(const EnsembleModel& model, const LabeledDataset& data,
                            std::span<const std::size_t> batch, GradBuffers& grads, const TrainConfig& cfg) {
  PreparedEnsemble prepared(model);
  DeqGrads g = DeqGrads::zeros_like(model);
  BatchOutcome out;
  for (std::size_t idx : batch) {
    const auto x = data.row(idx);
    const ForwardResult fwd = prepared.forward(x);
    if (!fwd.all_converged()) {
      out.skipped = true;
      return out;
    }
    const CrossEntropy ce = cross_entropy(fwd.logits, data.y[idx]);
    out.loss_sum += ce.loss;
    ++out.count;
    implicit_backward(prepared, x, fwd, ce.grad, g, cfg.through_impairments);
  }
  add_into(grads, parameter_views(g));
  return out;
}

BatchOutcome batch_gradient(const MlpParams& model, const LabeledDataset& data,
                            std::span<const std::size_t> batch, GradBuffers& grads, const TrainConfig&) {
  MlpGrads g = MlpGrads::zeros_like(model);
  BatchOutcome out;
  for (std::size_t idx : batch) {
    const auto x = data.row(idx);
    const CrossEntropy ce = cross_entropy(mlp_forward(model, x), data.y[idx]);
    out.loss_sum += ce.loss;
    ++out.count;
    mlp_backward(model, x, ce.grad, g);
  }
  add_into(grads, {view(g.w1), view(g.b1), view(g.w2), view(g.b2), view(g.w3), view(g.b3)});
  return out;
}

BatchOutcome batch_gradient(const LogRegParams& model, const LabeledDataset& data,
                            std::span<const std::size_t> batch, GradBuffers& grads, const TrainConfig&) {
  Matrix gw = Matrix::Zero(2, model.d_in());
  Vector gb = Vector::Zero(2);
  BatchOutcome out;
  for (std::size_t idx : batch) {
    const auto x = data.row(idx);
    const CrossEntropy ce = cross_entropy(logreg_forward(model, x), data.y[idx]);
    out.loss_sum += ce.loss;
    ++out.count;
    const Eigen::Map<const Vector> xv(x.data(), static_cast<Eigen::Index>(x.size()));
    gw.row(0) += ce.grad[0] * xv.transpose();
    gw.row(1) += ce.grad[1] * xv.transpose();
    gb[0] += ce.grad[0];
    gb[1] += ce.grad[1];
  }
  // L2 penalty 0.5 * l2 * ||w||^2 per sample, so it survives the batch mean.
  const double n = static_cast<double>(out.count);
  gw += n * model.l2 * model.w;
  out.loss_sum += n * 0.5 * model.l2 * model.w.squaredNorm();
  add_into(grads, {view(gw), view(gb)});
  return out;
}

std::vector<Logits> predict_logits(const EnsembleModel& model, const LabeledDataset& data) {
  PreparedEnsemble prepared(model);
  std::vector<Logits> out(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) out[i] = prepared.forward(data.row(i)).logits;
  return out;
}

std::vector<Logits> predict_logits(const MlpParams& model, const LabeledDataset& data) {
  std::vector<Logits> out(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) out[i] = mlp_forward(model, data.row(i));
  return out;
}

std::vector<Logits> predict_logits(const LogRegParams& model, const LabeledDataset& data) {
  std::vector<Logits> out(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) out[i] = logreg_forward(model, data.row(i));
  return out;
}

std::vector<int> predict_classes(const std::vector<Logits>& logits) {
  std::vector<int> out(logits.size());
  std::transform(logits.begin(), logits.end(), out.begin(), predicted_class);
  return out;
}

double mean_loss(const std::vector<Logits>& logits, const std::vector<int>& labels) {
  if (logits.empty()) return 0.0;
  double total = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) total += cross_entropy(logits[i], labels[i]).loss;
  return total / static_cast<double>(logits.size());
}

void limit_gain(EnsembleModel& model, double max_gain) {
  const auto& cfg = model.config;
  const double beta = std::abs(cfg.beta);
  if (cfg.cell.kind == CellKind::simple) {
    for (auto& b : model.blocks) {
      const double gain = beta * spectral_norm(b.w);
      if (gain > max_gain) b.w *= max_gain / gain;
    }
    return;
  }
  // The bound is roughly a product of |k1 k3 k5 k6| and ||W||, so the excess
  // is shared evenly between the five factors; shrinking W alone lets the
  // gains drift upward while W collapses. Quantisation, the SLM curve and the
  // darkness term make the bound only nearly homogeneous, so repeat until it
  // holds.
  const OpticalVariation variation = OpticalVariation::draw(cfg.cell.rng_seed, cfg.d_hidden);
  const double share = 1.0 / (1.0 + kCalibrationGains);
  for (int pass = 0; pass < 32; ++pass) {
    double worst = 0.0;
    for (const auto& b : model.blocks) {
      worst = std::max(worst, beta * PreparedCell(cfg.cell, variation, b.w, model.calib).lipschitz_bound());
    }
    if (worst <= max_gain) return;
    const double f = std::pow(max_gain / worst, share);
    for (double& k : model.calib) k *= f;
    for (auto& b : model.blocks) {
      const double gain = beta * PreparedCell(cfg.cell, variation, b.w, model.calib).lipschitz_bound();
      if (gain > max_gain) b.w *= std::max(f, max_gain / gain);
    }
  }
}

template <class Model>
TrainResult<Model> train(Model model, const LabeledDataset& train_set, const LabeledDataset& val_set,
                         const TrainConfig& config) {
  config.validate();
  if (train_set.size() == 0 || val_set.size() == 0) throw TrainingError("train: empty dataset");

  Rng rng(derive_seed(config.seed, "train.shuffle"));
  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  AdamState adam;
  EarlyStopper stopper(config.patience);
  TrainResult<Model> best{model, {}};
  TrainHistory& history = best.history;
  history.stop_reason = "max_epochs";

  const std::size_t batch = static_cast<std::size_t>(config.batch_size);
  for (int epoch = 1; epoch <= config.max_epochs; ++epoch) {
    rng.shuffle(std::span<std::size_t>(order));
    double loss_sum = 0.0;
    std::size_t counted = 0;
    int batches = 0, skipped = 0;
    for (std::size_t start = 0; start < order.size(); start += batch) {
      const std::size_t len = std::min(batch, order.size() - start);
      const std::span<const std::size_t> idx(order.data() + start, len);
      ParamViews params = parameter_views(model);
      GradBuffers grads = zero_grads(params);
      const BatchOutcome r = batch_gradient(model, train_set, idx, grads, config);
      ++batches;
      if (r.skipped) {
        ++skipped;
        continue;
      }
      scale(grads, 1.0 / static_cast<double>(r.count));
      adam_update(params, grads, adam, config.learning_rate);
      if constexpr (std::is_same_v<Model, EnsembleModel>) {
        if (config.max_gain > 0.0) limit_gain(model, config.max_gain);
      }
      loss_sum += r.loss_sum;
      counted += r.count;
    }
    if (skipped * 10 > batches) {
      throw TrainingError("epoch " + std::to_string(epoch) + ": " + std::to_string(skipped) + " of " +
                          std::to_string(batches) + " batches skipped for non-convergence");
    }

    const std::vector<Logits> val_logits = predict_logits(model, val_set);
    const double metric = config.monitor == "val_bacc"
                              ? balanced_accuracy(predict_classes(val_logits), val_set.y)
                              : -mean_loss(val_logits, val_set.y);
    history.epochs.push_back(
        {epoch, counted ? loss_sum / static_cast<double>(counted) : 0.0, metric, skipped});
    if (stopper.update(epoch, metric)) best.model = model;
    if (stopper.should_stop()) {
      history.stop_reason = "patience";
      break;
    }
  }
  history.best_epoch = stopper.best_epoch();
  return best;
}

template TrainResult<EnsembleModel> train(EnsembleModel, const LabeledDataset&, const LabeledDataset&,
                                          const TrainConfig&);
template TrainResult<MlpParams> train(MlpParams, const LabeledDataset&, const LabeledDataset&,
                                      const TrainConfig&);
template TrainResult<LogRegParams> train(LogRegParams, const LabeledDataset&, const LabeledDataset&,
                                         const TrainConfig&);

}  // namespace optideq
