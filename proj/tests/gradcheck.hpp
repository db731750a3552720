#pragma once

// Central finite differences over every entry of a model's parameter views.

#include <algorithm>
#include <cmath>
#include <functional>

#include "optideq/training.hpp"
#include "support.hpp"

namespace testutil {

struct GradCheck {
  double worst = 0.0;  // largest relative error seen
  std::size_t entries = 0;
};

// Relative error |a - f| / max(|a|, |f|, floor). The floor keeps entries whose
// true gradient is ~0 from dividing noise by noise.
inline constexpr double kGradFloor = 1e-4;

template <class Model>
GradCheck check_gradients(Model model, const optideq::GradBuffers& analytic,
                          const std::function<double(const Model&)>& loss, double step = 1e-5) {
  GradCheck out;
  optideq::ParamViews views = optideq::parameter_views(model);
  for (std::size_t k = 0; k < views.size(); ++k) {
    for (std::size_t i = 0; i < views[k].size(); ++i) {
      const double saved = views[k][i];
      views[k][i] = saved + step;
      const double up = loss(model);
      views[k][i] = saved - step;
      const double down = loss(model);
      views[k][i] = saved;
      const double fd = (up - down) / (2 * step);
      out.worst = std::max(out.worst, rel_err(analytic[k][i], fd, kGradFloor));
      ++out.entries;
    }
  }
  return out;
}

// Random DEQ instance with a tight solver, its analytic gradient for one
// labelled input, and the matching loss closure.
struct DeqCase {
  optideq::EnsembleModel model;
  std::vector<double> x;
  int label = 0;
};

inline DeqCase deq_case(std::uint64_t seed, bool aoc) {
  optideq::ModelConfig c;
  c.d_in = 4;
  c.d_hidden = 3;
  c.n_blocks = 2;
  c.tol = 1e-13;
  c.max_iters = 5000;
  if (aoc) {
    c.cell = optideq::CellSpec::aoc(seed);
    c.cell.quant_bits = 0;  // smooth stages only; quantisation is straight-through
    if (seed % 3 == 0) c.cell.stage(optideq::Stage::power_norm) = {1.0, 0.1};
    for (int s = 0; s < 6; ++s) c.cell.stages[s].magnitude = 0.05;
  }
  DeqCase out{random_model(c, seed * 7919 + 1), {}, static_cast<int>(seed % 2)};
  optideq::Rng rng(seed + 123);
  out.x = random_input(rng, c.d_in);
  return out;
}

inline double deq_loss(const optideq::EnsembleModel& m, const std::vector<double>& x, int label) {
  return optideq::cross_entropy(optideq::forward(m, x).logits, label).loss;
}

inline GradCheck check_deq_case(const DeqCase& dc) {
  optideq::EnsembleModel m = dc.model;
  const auto fwd = optideq::forward(m, dc.x);
  const auto ce = optideq::cross_entropy(fwd.logits, dc.label);
  optideq::DeqGrads g = optideq::implicit_backward(m, dc.x, fwd, ce.grad);
  const optideq::ParamViews gv = optideq::parameter_views(g);
  optideq::GradBuffers analytic;
  for (const auto& v : gv) analytic.emplace_back(v.begin(), v.end());
  return check_gradients<optideq::EnsembleModel>(
      m, analytic, [&](const optideq::EnsembleModel& mm) { return deq_loss(mm, dc.x, dc.label); });
}

// Small labelled dataset of random rows.
inline optideq::LabeledDataset random_dataset(std::uint64_t seed, std::size_t n, int d) {
  optideq::Rng rng(seed);
  optideq::LabeledDataset ds;
  ds.x.resize(static_cast<Eigen::Index>(n), d);
  for (std::size_t i = 0; i < n; ++i) {
    for (int j = 0; j < d; ++j) ds.x(static_cast<Eigen::Index>(i), j) = rng.uniform(-1.0, 1.0);
    ds.y.push_back(static_cast<int>(i % 2));
    ds.row_ids.push_back(static_cast<std::int64_t>(i));
  }
  return ds;
}

// Smallest |pre-activation| over both hidden layers and all rows.
inline double min_preactivation(const optideq::MlpParams& p, const optideq::LabeledDataset& data) {
  double out = INFINITY;
  for (std::size_t r = 0; r < data.size(); ++r) {
    const auto x = data.row(r);
    const Eigen::Map<const optideq::Vector> xv(x.data(), static_cast<Eigen::Index>(x.size()));
    const optideq::Vector a1 = p.w1 * xv + p.b1;
    const optideq::Vector a2 = p.w2 * a1.cwiseMax(0.0) + p.b2;
    out = std::min({out, a1.cwiseAbs().minCoeff(), a2.cwiseAbs().minCoeff()});
  }
  return out;
}

template <class Model>
GradCheck check_batch_gradient(const Model& model, const optideq::LabeledDataset& data) {
  std::vector<std::size_t> all(data.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  Model copy = model;
  optideq::GradBuffers analytic = optideq::zero_grads(optideq::parameter_views(copy));
  const optideq::TrainConfig cfg;
  const auto r = optideq::batch_gradient(model, data, all, analytic, cfg);
  for (auto& t : analytic)
    for (double& v : t) v /= static_cast<double>(r.count);
  return check_gradients<Model>(copy, analytic, [&](const Model& mm) {
    Model shape = mm;
    optideq::GradBuffers scratch = optideq::zero_grads(optideq::parameter_views(shape));
    const auto o = optideq::batch_gradient(mm, data, all, scratch, cfg);
    return o.loss_sum / static_cast<double>(o.count);
  });
}

}  // namespace testutil
