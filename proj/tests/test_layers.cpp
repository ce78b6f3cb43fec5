#include <catch2/catch_amalgamated.hpp>

#include "intrinsic/layers.hpp"
#include "intrinsic/rng.hpp"
#include "intrinsic/verify.hpp"

using namespace intrinsic;

namespace {
Tensor<double> randn(TensorShape s, Rng& rng, bool rg = false) {
  Tensor<double> t(s, rg);
  for (double& v : t.values()) v = rng.normal();
  return t;
}
}  // namespace

TEST_CASE("conv3x3 with an identity kernel passes the input through") {
  Rng rng(1);
  auto x = randn({1, 1, 5, 5}, rng);
  Tensor<double> w(TensorShape{1, 1, 3, 3});
  w.values()[4] = 1.0;  // center tap
  Tensor<double> b(TensorShape{1, 1, 1, 1});
  auto y = conv3x3(x, w, b, 1);
  REQUIRE(y.shape() == x.shape());
  for (std::size_t i = 0; i < x.values().size(); ++i)
    REQUIRE(y.values()[i] == Catch::Approx(x.values()[i]));
}

TEST_CASE("conv3x3 shape arithmetic") {
  Rng rng(2);
  auto x = randn({1, 1, 4, 4}, rng);
  auto w = randn({1, 1, 3, 3}, rng);
  Tensor<double> b(TensorShape{1, 1, 1, 1});
  REQUIRE(conv3x3(x, w, b, 2).shape() == TensorShape{1, 1, 2, 2});
  REQUIRE(conv3x3(randn({2, 1, 5, 7}, rng), w, b, 2).shape() == TensorShape{2, 1, 3, 4});
  REQUIRE_THROWS_AS(conv3x3(randn({1, 2, 4, 4}, rng), w, b, 1), DimensionError);
  REQUIRE_THROWS_AS(conv3x3(x, randn({1, 1, 4, 4}, rng), b, 1), DimensionError);
  REQUIRE_THROWS_AS(conv3x3(x, w, b, 3), UsageError);
}

TEST_CASE("conv3x3 bias fills the output") {
  Tensor<double> x(TensorShape{1, 1, 3, 3});
  Tensor<double> w(TensorShape{2, 1, 3, 3});
  auto b = Tensor<double>::from_values(TensorShape{1, 2, 1, 1}, {1.5, -2.0});
  auto y = conv3x3(x, w, b, 1);
  for (int i = 0; i < 9; ++i) {
    REQUIRE(y.values()[static_cast<std::size_t>(i)] == 1.5);
    REQUIRE(y.values()[static_cast<std::size_t>(9 + i)] == -2.0);
  }
}

TEST_CASE("deconv4x4_s2 doubles the spatial extent") {
  Rng rng(3);
  auto x = randn({1, 1, 2, 2}, rng);
  auto w = randn({1, 1, 4, 4}, rng);
  Tensor<double> b(TensorShape{1, 1, 1, 1});
  REQUIRE(deconv4x4_s2(x, w, b).shape() == TensorShape{1, 1, 4, 4});
  REQUIRE(deconv4x4_s2(randn({2, 3, 5, 6}, rng), randn({3, 2, 4, 4}, rng),
                       Tensor<double>(TensorShape{1, 2, 1, 1}))
              .shape() == TensorShape{2, 2, 10, 12});
  REQUIRE_THROWS_AS(deconv4x4_s2(randn({1, 2, 2, 2}, rng), w, b), DimensionError);
}

TEST_CASE("deconv backward w.r.t. input equals the mirrored strided convolution") {
  // The adjoint of the transposed convolution is the stride-2 cross-correlation
  // with channel roles swapped.
  Rng rng(4);
  auto x = randn({1, 2, 3, 3}, rng, true);
  auto w = randn({2, 3, 4, 4}, rng);
  Tensor<double> b(TensorShape{1, 3, 1, 1});
  auto y = deconv4x4_s2(x, w, b);

  std::vector<double> proj(static_cast<std::size_t>(y.numel()));
  Rng prng(5);
  for (double& v : proj) v = prng.normal();
  weighted_sum(y, proj).backward();
  const std::vector<double> analytic = x.grad();

  // conv2d of the projection with weights transposed to (in=3 -> out=2)
  auto g = Tensor<double>::from_values(y.shape(), proj);
  Tensor<double> wt(TensorShape{2, 3, 4, 4});
  for (int ic = 0; ic < 2; ++ic)
    for (int oc = 0; oc < 3; ++oc)
      for (int k = 0; k < 16; ++k)
        wt.values()[(static_cast<std::size_t>(ic) * 3 + oc) * 16 + k] =
            w.values()[(static_cast<std::size_t>(ic) * 3 + oc) * 16 + k];
  auto mirrored = conv2d(g, wt, Tensor<double>(TensorShape{1, 2, 1, 1}), 2, 1);
  REQUIRE(mirrored.shape() == x.shape());
  for (std::size_t i = 0; i < analytic.size(); ++i)
    REQUIRE(mirrored.values()[i] == Catch::Approx(analytic[i]).margin(1e-10));
}

TEST_CASE("batchnorm train mode normalizes per channel") {
  Rng rng(6);
  auto x = randn({4, 3, 5, 5}, rng);
  for (double& v : x.values()) v = 2.0 * v + 1.0;
  auto gamma = Tensor<double>::full(TensorShape{1, 3, 1, 1}, 1.0);
  Tensor<double> beta(TensorShape{1, 3, 1, 1});
  BnState<double> state(3);
  auto y = batchnorm(x, gamma, beta, state, BnMode::Train);

  const std::size_t plane = 25;
  for (int c = 0; c < 3; ++c) {
    double mean = 0, var = 0;
    for (int n = 0; n < 4; ++n)
      for (std::size_t i = 0; i < plane; ++i)
        mean += y.values()[(static_cast<std::size_t>(n) * 3 + c) * plane + i];
    mean /= 100.0;
    for (int n = 0; n < 4; ++n)
      for (std::size_t i = 0; i < plane; ++i) {
        const double d = y.values()[(static_cast<std::size_t>(n) * 3 + c) * plane + i] - mean;
        var += d * d;
      }
    var /= 100.0;
    REQUIRE(mean == Catch::Approx(0.0).margin(1e-5));
    REQUIRE(var == Catch::Approx(1.0).margin(1e-4));
  }
}

TEST_CASE("batchnorm eval with unit running stats is the identity") {
  Rng rng(7);
  auto x = randn({2, 2, 3, 3}, rng);
  auto gamma = Tensor<double>::full(TensorShape{1, 2, 1, 1}, 1.0);
  Tensor<double> beta(TensorShape{1, 2, 1, 1});
  BnState<double> state(2);  // running mean 0, var 1
  auto y = batchnorm(x, gamma, beta, state, BnMode::Eval);
  for (std::size_t i = 0; i < x.values().size(); ++i)
    REQUIRE(y.values()[i] == Catch::Approx(x.values()[i]).margin(1e-5));
}

TEST_CASE("batchnorm updates running statistics in train mode only") {
  Rng rng(8);
  auto x = randn({2, 1, 4, 4}, rng);
  for (double& v : x.values()) v += 3.0;
  auto gamma = Tensor<double>::full(TensorShape{1, 1, 1, 1}, 1.0);
  Tensor<double> beta(TensorShape{1, 1, 1, 1});
  BnState<double> state(1);
  batchnorm(x, gamma, beta, state, BnMode::Train);
  REQUIRE(state.running_mean[0] == Catch::Approx(0.1 * 3.0).margin(0.1));
  const auto saved = state.running_mean;
  batchnorm(x, gamma, beta, state, BnMode::Eval);
  REQUIRE(state.running_mean == saved);
}

TEST_CASE("batchnorm rejects degenerate statistics") {
  Tensor<double> x(TensorShape{1, 2, 1, 1});
  auto gamma = Tensor<double>::full(TensorShape{1, 2, 1, 1}, 1.0);
  Tensor<double> beta(TensorShape{1, 2, 1, 1});
  BnState<double> state(2);
  REQUIRE_THROWS_AS(batchnorm(x, gamma, beta, state, BnMode::Train), DomainError);
  REQUIRE_THROWS_AS(batchnorm(Tensor<double>(TensorShape{2, 3, 2, 2}), gamma, beta, state,
                              BnMode::Train),
                    DimensionError);
}

TEST_CASE("layer gradients pass spot finite-difference checks") {
  // The full multi-seed sweep lives in the verification suite; this is a
  // fast regression guard.
  VerifyOptions opt;
  opt.trials = 2;
  for (const CheckResult& r : run_gradient_checks(opt)) {
    INFO(r.name << " " << r.detail);
    REQUIRE(r.pass);
  }
}
