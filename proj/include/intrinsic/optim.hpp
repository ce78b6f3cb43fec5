#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "intrinsic/errors.hpp"
#include "intrinsic/rng.hpp"
#include "intrinsic/tensor.hpp"

namespace intrinsic {

/// Trainable tensor plus its SGD momentum buffer.
template <typename T>
struct Parameter {
  std::string name;
  Tensor<T> value;
  std::vector<T> momentum;

  Parameter() = default;
  Parameter(std::string n, TensorShape s)
      : name(std::move(n)), value(s, /*requires_grad=*/true),
        momentum(static_cast<std::size_t>(s.numel()), T(0)) {}
};

/// One SGD update with classical momentum and L2 weight decay:
///   buf <- momentum * buf + (grad + weight_decay * param)
///   param <- param - lr * buf
/// Gradients are cleared afterwards.
template <typename T>
void sgd_step(const std::vector<Parameter<T>*>& params, T lr, T momentum, T weight_decay) {
  for (Parameter<T>* p : params) {
    if (!p->value.has_grad())
      throw UsageError("sgd_step: missing gradient for parameter '" + p->name + "'");
    auto& v = p->value.values();
    auto& g = p->value.grad();
    auto& buf = p->momentum;
    for (std::size_t i = 0; i < v.size(); ++i) {
      buf[i] = momentum * buf[i] + (g[i] + weight_decay * v[i]);
      v[i] -= lr * buf[i];
    }
  }
  for (Parameter<T>* p : params) p->value.zero_grad();
}

/// Polynomial learning-rate decay from lr0 to lr_end over total_steps.
struct LrSchedule {
  double lr0 = 1e-5;
  double lr_end = 1e-7;
  std::int64_t total_steps = 1;
  double power = 1.0;

  void validate() const {
    if (!(lr_end > 0.0) || lr0 < lr_end)
      throw DomainError("LrSchedule: need lr0 >= lr_end > 0");
    if (total_steps < 1) throw DomainError("LrSchedule: total_steps must be >= 1");
    if (power <= 0.0) throw DomainError("LrSchedule: power must be > 0");
  }
};

inline double poly_lr(const LrSchedule& s, std::int64_t step) {
  s.validate();
  if (step >= s.total_steps) return s.lr_end;
  const double t = static_cast<double>(step) / static_cast<double>(s.total_steps);
  return (s.lr0 - s.lr_end) * std::pow(1.0 - t, s.power) + s.lr_end;
}

/// He (msra) initialization: zero-mean normal with std sqrt(2 / fan_in).
template <typename T>
void init_he(Tensor<T>& weights, int fan_in, Rng& rng) {
  if (fan_in < 1) throw DomainError("init_he: fan_in must be >= 1");
  const double stddev = std::sqrt(2.0 / static_cast<double>(fan_in));
  for (T& v : weights.values()) v = static_cast<T>(rng.normal(0.0, stddev));
}

template <typename T>
void init_normal(Tensor<T>& weights, double mean, double stddev, Rng& rng) {
  for (T& v : weights.values()) v = static_cast<T>(rng.normal(mean, stddev));
}

}  // namespace intrinsic
