#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "intrinsic/optim.hpp"

using namespace intrinsic;

TEST_CASE("sgd_step with zero gradient and no decay leaves parameters unchanged") {
  Parameter<double> p("p", TensorShape{1, 1, 1, 4});
  p.value.values() = {1, 2, 3, 4};
  p.value.grad();  // allocate zeros
  sgd_step<double>({&p}, 0.1, 0.9, 0.0);
  REQUIRE(p.value.values() == std::vector<double>{1, 2, 3, 4});
}

TEST_CASE("plain sgd subtracts lr * grad") {
  Parameter<double> p("p", TensorShape{1, 1, 1, 2});
  p.value.values() = {1.0, -1.0};
  p.value.grad() = {0.5, 0.25};
  sgd_step<double>({&p}, 0.1, 0.0, 0.0);
  REQUIRE(p.value.values()[0] == Catch::Approx(1.0 - 0.05));
  REQUIRE(p.value.values()[1] == Catch::Approx(-1.0 - 0.025));
  REQUIRE_FALSE(p.value.has_grad());  // cleared after the step
}

TEST_CASE("two momentum steps on a fixed gradient accumulate 2.9x") {
  // buf1 = g, buf2 = 0.9 g + g = 1.9 g; total update = -lr * (1 + 1.9) * g
  Parameter<double> p("p", TensorShape{1, 1, 1, 1});
  p.value.values() = {0.0};
  const double g = 0.4, lr = 0.01;
  p.value.grad() = {g};
  sgd_step<double>({&p}, lr, 0.9, 0.0);
  p.value.grad() = {g};
  sgd_step<double>({&p}, lr, 0.9, 0.0);
  REQUIRE(p.value.values()[0] == Catch::Approx(-lr * g * 2.9));
}

TEST_CASE("weight decay folds into the update") {
  Parameter<double> p("p", TensorShape{1, 1, 1, 1});
  p.value.values() = {2.0};
  p.value.grad() = {0.0};
  sgd_step<double>({&p}, 0.1, 0.0, 0.5);
  REQUIRE(p.value.values()[0] == Catch::Approx(2.0 - 0.1 * (0.5 * 2.0)));
}

TEST_CASE("sgd_step with lr 0 is a no-op on parameters") {
  Parameter<double> p("p", TensorShape{1, 1, 1, 2});
  p.value.values() = {3, 4};
  p.value.grad() = {1, 1};
  sgd_step<double>({&p}, 0.0, 0.9, 0.1);
  REQUIRE(p.value.values() == std::vector<double>{3, 4});
}

TEST_CASE("sgd_step demands populated gradients") {
  Parameter<double> p("weights", TensorShape{1, 1, 1, 1});
  REQUIRE_THROWS_AS(sgd_step<double>({&p}, 0.1, 0.9, 0.0), UsageError);
  REQUIRE_THROWS_WITH(sgd_step<double>({&p}, 0.1, 0.9, 0.0),
                      Catch::Matchers::ContainsSubstring("weights"));
}

TEST_CASE("polynomial decay endpoints and midpoint") {
  const LrSchedule s{1e-5, 1e-7, 1000, 1.0};
  REQUIRE(poly_lr(s, 0) == Catch::Approx(1e-5));
  REQUIRE(poly_lr(s, 1000) == Catch::Approx(1e-7));
  REQUIRE(poly_lr(s, 500) == Catch::Approx(5.05e-6));
  REQUIRE(poly_lr(s, 5000) == Catch::Approx(1e-7));  // clamps past the end

  const LrSchedule q{1e-3, 1e-5, 100, 2.0};
  double prev = poly_lr(q, 0);
  for (int i = 1; i <= 100; ++i) {
    const double cur = poly_lr(q, i);
    REQUIRE(cur <= prev + 1e-15);
    prev = cur;
  }
}

TEST_CASE("schedule validation") {
  REQUIRE_THROWS_AS(poly_lr(LrSchedule{1e-7, 1e-5, 10, 1.0}, 0), DomainError);
  REQUIRE_THROWS_AS(poly_lr(LrSchedule{1e-5, 0.0, 10, 1.0}, 0), DomainError);
  REQUIRE_THROWS_AS(poly_lr(LrSchedule{1e-5, 1e-7, 0, 1.0}, 0), DomainError);
}

TEST_CASE("He initialization has the right spread") {
  Tensor<double> w(TensorShape{1, 1, 1, 100000});
  Rng rng(77);
  init_he(w, 50, rng);
  double mean = 0;
  for (double v : w.values()) mean += v;
  mean /= 1e5;
  double var = 0;
  for (double v : w.values()) var += (v - mean) * (v - mean);
  var /= 1e5;
  const double expect = std::sqrt(2.0 / 50.0);
  REQUIRE(std::sqrt(var) == Catch::Approx(expect).epsilon(0.03));
  REQUIRE(std::abs(mean) < 0.02);
}

TEST_CASE("unit normal initialization is centered") {
  Tensor<double> w(TensorShape{1, 1, 1, 100000});
  Rng rng(78);
  init_normal(w, 0.0, 1.0, rng);
  double mean = 0;
  for (double v : w.values()) mean += v;
  mean /= 1e5;
  REQUIRE(std::abs(mean) < 0.02);
}

TEST_CASE("seeded draws are identical across runs") {
  Tensor<double> w1(TensorShape{1, 1, 1, 64}), w2(TensorShape{1, 1, 1, 64});
  Rng r1(5), r2(5);
  init_he(w1, 9, r1);
  init_he(w2, 9, r2);
  REQUIRE(w1.values() == w2.values());
}

TEST_CASE("named sub-streams are independent of each other") {
  REQUIRE(derive_seed(7, "data") != derive_seed(7, "init"));
  REQUIRE(derive_seed(7, "data", 1) != derive_seed(7, "data", 2));
  REQUIRE(derive_seed(7, "data", 1) == derive_seed(7, "data", 1));
}

TEST_CASE("rng state serialization round-trips") {
  Rng a(123);
  a.normal();
  a.uniform();
  const std::string state = a.serialize();
  Rng b = Rng::deserialize(state);
  for (int i = 0; i < 16; ++i) REQUIRE(a.next_u64() == b.next_u64());
}
