#include <doctest.h>

#include "optideq/baselines.hpp"
#include "support.hpp"

using namespace optideq;

namespace {

oracle::Vec relu(oracle::Vec v) {
  for (double& x : v) x = x > 0 ? x : 0.0;
  return v;
}

oracle::Vec add(oracle::Vec a, const Vector& b) {
  for (std::size_t i = 0; i < a.size(); ++i) a[i] += b[static_cast<Eigen::Index>(i)];
  return a;
}

}  // namespace

TEST_SUITE("baselines") {

TEST_CASE("parameter counts") {
  CHECK(MlpParams::small(60, 1).parameter_count() == 5378);
  CHECK(MlpParams::large(60, 1).parameter_count() == 24578);
  CHECK(LogRegParams::zeros(60).parameter_count() == 122);
  CHECK(MlpParams::small(60, 1).default_lr == 5e-4);
  CHECK(MlpParams::large(60, 1).default_lr == 1e-3);
}

TEST_CASE("zero parameters give zero logits") {
  const std::vector<double> x{1.0, -2.0, 0.5};
  const auto a = mlp_forward(MlpParams::zeros(3, 4), x);
  CHECK(a[0] == 0.0);
  CHECK(a[1] == 0.0);
  const auto b = logreg_forward(LogRegParams::zeros(3), x);
  CHECK(b[0] == 0.0);
  CHECK(b[1] == 0.0);
}

TEST_CASE("dead ReLU path leaves only the head bias") {
  auto p = MlpParams::initialized(3, 4, 2);
  p.b1.setConstant(-100.0);
  p.b3 << 0.25, -0.5;
  const std::vector<double> x{0.1, 0.2, 0.3};
  const auto z = mlp_forward(p, x);
  CHECK(z[0] == 0.25);
  CHECK(z[1] == -0.5);
}

TEST_CASE("MLP forward matches a straight-line oracle") {
  Rng rng(3);
  auto p = MlpParams::initialized(5, 6, 3);
  p.b1 = testutil::random_vector(rng, 6, 0.2);
  p.b2 = testutil::random_vector(rng, 6, 0.2);
  p.b3 = testutil::random_vector(rng, 2, 0.2);
  const auto x = testutil::random_input(rng, 5);
  const auto h1 = relu(add(oracle::matvec(oracle::to_mat(p.w1), x), p.b1));
  const auto h2 = relu(add(oracle::matvec(oracle::to_mat(p.w2), h1), p.b2));
  const auto z = add(oracle::matvec(oracle::to_mat(p.w3), h2), p.b3);
  const auto got = mlp_forward(p, x);
  CHECK(std::abs(got[0] - z[0]) <= 1e-12);
  CHECK(std::abs(got[1] - z[1]) <= 1e-12);
}

TEST_CASE("logistic forward: oracle and scale invariance of argmax") {
  Rng rng(4);
  LogRegParams p = LogRegParams::zeros(6);
  p.w = testutil::random_matrix(rng, 2, 6);
  const auto x = testutil::random_input(rng, 6);
  const auto z = oracle::matvec(oracle::to_mat(p.w), x);
  const auto got = logreg_forward(p, x);
  CHECK(std::abs(got[0] - z[0]) <= 1e-12);
  CHECK(std::abs(got[1] - z[1]) <= 1e-12);

  LogRegParams twice = p;
  twice.w *= 2.0;
  const auto g2 = logreg_forward(twice, x);
  CHECK((g2[1] - g2[0]) == doctest::Approx(2.0 * (got[1] - got[0])).epsilon(1e-14));
  CHECK(predicted_class(g2) == predicted_class(got));
}

TEST_CASE("zero weights: only head gradients are non-zero") {
  const MlpParams p = MlpParams::zeros(3, 4);
  MlpGrads g = MlpGrads::zeros_like(p);
  Logits dz;
  dz[0] = 0.5;
  dz[1] = -0.5;
  const std::vector<double> x{1.0, 2.0, 3.0};
  mlp_backward(p, x, dz, g);
  CHECK(g.w1.isZero(0.0));
  CHECK(g.w2.isZero(0.0));
  CHECK(g.w3.isZero(0.0));
  CHECK(g.b3[0] == 0.5);
  CHECK(g.b3[1] == -0.5);
}

}
