#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "optideq/baselines.hpp"
#include "optideq/dataset.hpp"
#include "optideq/deq.hpp"

namespace optideq {

struct CrossEntropy {
  double loss = 0.0;
  Logits grad;  // softmax(logits) - one_hot(label)
};

CrossEntropy cross_entropy(const Logits& logits, int label);

// Views over every trainable tensor of a model, and matching gradient buffers.
using ParamViews = std::vector<std::span<double>>;
using GradBuffers = std::vector<std::vector<double>>;

GradBuffers zero_grads(const ParamViews& params);

struct AdamState {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  long step = 0;
  std::vector<std::vector<double>> m, v;
};

// Bias-corrected Adam step in the step-size form
//   theta -= lr * sqrt(1 - b2^t) / (1 - b1^t) * m / (sqrt(v) + eps);
// moments are allocated on first use.
void adam_update(const ParamViews& params, const GradBuffers& grads, AdamState& state, double lr);

// ---- DEQ ensemble ---------------------------------------------------------

struct DeqGrads {
  std::vector<DeqBlockParams> blocks;
  Matrix w_op;
  Vector b_op;
  std::vector<double> calib;

  static DeqGrads zeros_like(const EnsembleModel& model);
};

// Order: per block (w_ip, b_ip, w, b), then w_op, b_op, calib when present.
ParamViews parameter_views(EnsembleModel& model);
ParamViews parameter_views(DeqGrads& grads);

// Implicit-function-theorem gradients through every block's fixed point,
// accumulated into `grads`. With `through_impairments` false the Jacobian and
// parameter sensitivities use the ideal W * tanh(s) map.
void implicit_backward(const PreparedEnsemble& model, std::span<const double> x, const ForwardResult& fwd,
                       const Logits& dlogits, DeqGrads& grads, bool through_impairments = true);

DeqGrads implicit_backward(const EnsembleModel& model, std::span<const double> x, const ForwardResult& fwd,
                           const Logits& dlogits);

// Smallest reciprocal condition number accepted for (I - J).
inline constexpr double kMinReciprocalCondition = 1e-12;

// ---- baselines ------------------------------------------------------------

ParamViews parameter_views(MlpParams& p);
ParamViews parameter_views(LogRegParams& p);

// ---- training loop --------------------------------------------------------

struct TrainConfig {
  double learning_rate = 3e-4;
  int batch_size = 256;
  int patience = 10;
  int max_epochs = 80;
  std::uint64_t seed = 0;
  std::string monitor = "val_bacc";  // val_bacc | val_loss
  bool through_impairments = true;
  // When > 0, every optical W is rescaled after each step so that |beta|
  // times the cell's Lipschitz bound stays <= max_gain (contraction guard;
  // 0 disables).
  double max_gain = 0.0;

  void validate() const;
};

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;
  double val_metric = 0.0;
  int skipped_batches = 0;
};

struct TrainHistory {
  std::vector<EpochRecord> epochs;
  int best_epoch = 0;
  std::string stop_reason;

  // epoch,train_loss,val_metric,skipped_batches
  std::string to_table() const;
};

// Tracks the best monitored value (higher is better) and the patience budget.
class EarlyStopper {
 public:
  explicit EarlyStopper(int patience) : patience_(patience) {}

  // Returns true when `metric` strictly improves on the best so far.
  bool update(int epoch, double metric);
  bool should_stop() const { return since_best_ >= patience_; }
  int best_epoch() const { return best_epoch_; }
  double best() const { return best_; }

 private:
  int patience_;
  int best_epoch_ = 0;
  int since_best_ = 0;
  double best_ = 0.0;
  bool seen_ = false;
};

struct BatchOutcome {
  double loss_sum = 0.0;
  std::size_t count = 0;
  bool skipped = false;
};

BatchOutcome batch_gradient(const EnsembleModel& model, const LabeledDataset& data,
                            std::span<const std::size_t> batch, GradBuffers& grads, const TrainConfig& cfg);
BatchOutcome batch_gradient(const MlpParams& model, const LabeledDataset& data,
                            std::span<const std::size_t> batch, GradBuffers& grads, const TrainConfig& cfg);
BatchOutcome batch_gradient(const LogRegParams& model, const LabeledDataset& data,
                            std::span<const std::size_t> batch, GradBuffers& grads, const TrainConfig& cfg);

std::vector<Logits> predict_logits(const EnsembleModel& model, const LabeledDataset& data);
std::vector<Logits> predict_logits(const MlpParams& model, const LabeledDataset& data);
std::vector<Logits> predict_logits(const LogRegParams& model, const LabeledDataset& data);

std::vector<int> predict_classes(const std::vector<Logits>& logits);

// Mean cross-entropy of the model on `data`.
double mean_loss(const std::vector<Logits>& logits, const std::vector<int>& labels);

// Rescales each block's W so that |beta| * PreparedCell::lipschitz_bound() <= max_gain.
void limit_gain(EnsembleModel& model, double max_gain);

template <class Model>
struct TrainResult {
  Model model;
  TrainHistory history;
};

template <class Model>
TrainResult<Model> train(Model model, const LabeledDataset& train_set, const LabeledDataset& val_set,
                         const TrainConfig& config);

extern template TrainResult<EnsembleModel> train(EnsembleModel, const LabeledDataset&, const LabeledDataset&,
                                                 const TrainConfig&);
extern template TrainResult<MlpParams> train(MlpParams, const LabeledDataset&, const LabeledDataset&,
                                             const TrainConfig&);
extern template TrainResult<LogRegParams> train(LogRegParams, const LabeledDataset&, const LabeledDataset&,
                                                const TrainConfig&);

}  // namespace optideq
