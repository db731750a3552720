#include "optideq/baselines.hpp"

#include <cmath>

#include "optideq/errors.hpp"
#include "optideq/rng.hpp"

namespace optideq {

namespace {

Eigen::Map<const Vector> as_vector(std::span<const double> x) {
  return {x.data(), static_cast<Eigen::Index>(x.size())};
}

void fill_uniform(Rng& rng, Matrix& a) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(a.cols()));
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    for (Eigen::Index j = 0; j < a.cols(); ++j) a(i, j) = rng.uniform(-bound, bound);
}

Logits to_logits(const Vector& z) {
  Logits out;
  out[0] = z[0];
  out[1] = z[1];
  return out;
}

}  // namespace

MlpParams MlpParams::zeros(int d_in, int hidden) {
  if (d_in < 1 || hidden < 1) throw ConfigError("MLP dimensions must be >= 1");
  MlpParams p;
  p.w1 = Matrix::Zero(hidden, d_in);
  p.b1 = Vector::Zero(hidden);
  p.w2 = Matrix::Zero(hidden, hidden);
  p.b2 = Vector::Zero(hidden);
  p.w3 = Matrix::Zero(2, hidden);
  p.b3 = Vector::Zero(2);
  p.default_lr = hidden >= 128 ? 1e-3 : 5e-4;
  return p;
}

MlpParams MlpParams::initialized(int d_in, int hidden, std::uint64_t seed) {
  MlpParams p = zeros(d_in, hidden);
  Rng rng(derive_seed(seed, "mlp.init"));
  fill_uniform(rng, p.w1);
  fill_uniform(rng, p.w2);
  fill_uniform(rng, p.w3);
  return p;
}

long MlpParams::parameter_count() const {
  return w1.size() + b1.size() + w2.size() + b2.size() + w3.size() + b3.size();
}

LogRegParams LogRegParams::zeros(int d_in) {
  if (d_in < 1) throw ConfigError("logistic regression d_in must be >= 1");
  return {Matrix::Zero(2, d_in), Vector::Zero(2)};
}

Logits mlp_forward(const MlpParams& p, std::span<const double> x) {
  if (static_cast<int>(x.size()) != p.d_in()) throw ConfigError("mlp_forward: input length mismatch");
  const Vector h1 = (p.w1 * as_vector(x) + p.b1).cwiseMax(0.0);
  const Vector h2 = (p.w2 * h1 + p.b2).cwiseMax(0.0);
  return to_logits(p.w3 * h2 + p.b3);
}

Logits logreg_forward(const LogRegParams& p, std::span<const double> x) {
  if (static_cast<int>(x.size()) != p.d_in()) throw ConfigError("logreg_forward: input length mismatch");
  return to_logits(p.w * as_vector(x) + p.b);
}

MlpGrads MlpGrads::zeros_like(const MlpParams& p) {
  return {Matrix::Zero(p.w1.rows(), p.w1.cols()), Matrix::Zero(p.w2.rows(), p.w2.cols()),
          Matrix::Zero(p.w3.rows(), p.w3.cols()), Vector::Zero(p.b1.size()),
          Vector::Zero(p.b2.size()),               Vector::Zero(p.b3.size())};
}

void mlp_backward(const MlpParams& p, std::span<const double> x, const Logits& dlogits, MlpGrads& g) {
  const auto xv = as_vector(x);
  const Vector a1 = p.w1 * xv + p.b1;
  const Vector h1 = a1.cwiseMax(0.0);
  const Vector a2 = p.w2 * h1 + p.b2;
  const Vector h2 = a2.cwiseMax(0.0);

  Vector dz(2);
  dz << dlogits[0], dlogits[1];
  g.w3.noalias() += dz * h2.transpose();
  g.b3 += dz;
  const Vector d2 = (p.w3.transpose() * dz).cwiseProduct((a2.array() > 0.0).cast<double>().matrix());
  g.w2.noalias() += d2 * h1.transpose();
  g.b2 += d2;
  const Vector d1 = (p.w2.transpose() * d2).cwiseProduct((a1.array() > 0.0).cast<double>().matrix());
  g.w1.noalias() += d1 * xv.transpose();
  g.b1 += d1;
}

}  // namespace optideq
