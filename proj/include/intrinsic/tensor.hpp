#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "intrinsic/errors.hpp"

namespace intrinsic {

/// N x C x H x W. Convolution weights reuse the slots as (out_c, in_c, kh, kw),
/// transposed-convolution weights as (in_c, out_c, kh, kw).
struct TensorShape {
  int n = 1, c = 1, h = 1, w = 1;

  std::int64_t numel() const {
    return static_cast<std::int64_t>(n) * c * h * w;
  }
  bool operator==(const TensorShape&) const = default;
  std::string str() const {
    return "(" + std::to_string(n) + "," + std::to_string(c) + "," + std::to_string(h) + "," +
           std::to_string(w) + ")";
  }
};

/// Differentiable array with a gradient slot. Copies share the underlying
/// node; graphs are built define-by-run and freed when the tensors holding
/// them go out of scope.
template <typename T>
class Tensor {
 public:
  struct Node {
    TensorShape shape;
    std::vector<T> values;
    std::vector<T> grad;  // empty until first touched
    bool requires_grad = false;
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void()> backward_fn;

    std::vector<T>& ensure_grad() {
      if (grad.empty()) grad.assign(values.size(), T(0));
      return grad;
    }
  };

  Tensor() = default;
  explicit Tensor(TensorShape s, bool requires_grad = false)
      : node_(std::make_shared<Node>()) {
    node_->shape = s;
    node_->values.assign(static_cast<std::size_t>(s.numel()), T(0));
    node_->requires_grad = requires_grad;
  }

  static Tensor zeros(TensorShape s) { return Tensor(s); }
  static Tensor full(TensorShape s, T value) {
    Tensor t(s);
    std::fill(t.values().begin(), t.values().end(), value);
    return t;
  }
  static Tensor from_values(TensorShape s, std::vector<T> values, bool requires_grad = false) {
    if (static_cast<std::int64_t>(values.size()) != s.numel())
      throw DimensionError("Tensor: value count does not match shape " + s.str());
    Tensor t(s, requires_grad);
    t.node_->values = std::move(values);
    return t;
  }

  bool defined() const { return node_ != nullptr; }
  const TensorShape& shape() const { return node_->shape; }
  std::int64_t numel() const { return node_->shape.numel(); }
  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool rg) { node_->requires_grad = rg; }

  std::vector<T>& values() { return node_->values; }
  const std::vector<T>& values() const { return node_->values; }
  std::vector<T>& grad() { return node_->ensure_grad(); }
  bool has_grad() const { return !node_->grad.empty(); }
  void zero_grad() { node_->grad.clear(); }

  T item() const {
    if (numel() != 1) throw UsageError("Tensor::item: tensor is not scalar");
    return node_->values[0];
  }

  T& at(int n, int c, int y, int x) {
    const TensorShape& s = node_->shape;
    return node_->values[((static_cast<std::size_t>(n) * s.c + c) * s.h + y) * s.w + x];
  }
  T at(int n, int c, int y, int x) const {
    const TensorShape& s = node_->shape;
    return node_->values[((static_cast<std::size_t>(n) * s.c + c) * s.h + y) * s.w + x];
  }

  std::shared_ptr<Node> node() const { return node_; }

  /// Reverse pass from a scalar root: topological order, then each node's
  /// backward in reverse. Gradients accumulate into requires_grad leaves.
  void backward() {
    if (numel() != 1) throw UsageError("Tensor::backward: root must be scalar");
    if (!node_->requires_grad)
      throw UsageError("Tensor::backward: root does not require grad");

    std::vector<Node*> order;
    std::unordered_set<Node*> visited;
    std::vector<std::pair<Node*, std::size_t>> stack;
    stack.emplace_back(node_.get(), 0);
    visited.insert(node_.get());
    while (!stack.empty()) {
      auto& [node, next] = stack.back();
      if (next < node->parents.size()) {
        Node* parent = node->parents[next++].get();
        if (parent->requires_grad && !visited.count(parent)) {
          visited.insert(parent);
          stack.emplace_back(parent, 0);
        }
      } else {
        order.push_back(node);
        stack.pop_back();
      }
    }

    node_->ensure_grad()[0] += T(1);
    for (auto it = order.rbegin(); it != order.rend(); ++it)
      if ((*it)->backward_fn) (*it)->backward_fn();
  }

 private:
  std::shared_ptr<Node> node_;
};

namespace detail {

template <typename T>
Tensor<T> make_result(TensorShape shape, std::vector<T> values,
                      std::vector<Tensor<T>> parents,
                      std::function<void(typename Tensor<T>::Node&)> backward) {
  Tensor<T> out = Tensor<T>::from_values(shape, std::move(values));
  bool needs = false;
  for (const auto& p : parents) needs = needs || p.requires_grad();
  if (needs) {
    out.set_requires_grad(true);
    auto node = out.node();
    for (const auto& p : parents) node->parents.push_back(p.node());
    typename Tensor<T>::Node* raw = node.get();
    node->backward_fn = [raw, fn = std::move(backward)]() { fn(*raw); };
  }
  return out;
}

// Channel-limited broadcasting: every dim must match or be 1 on one side.
inline TensorShape broadcast_shape(const TensorShape& a, const TensorShape& b,
                                   const char* op) {
  auto pick = [&](int x, int y) {
    if (x == y || y == 1) return x;
    if (x == 1) return y;
    throw DimensionError(std::string(op) + ": incompatible shapes " + a.str() + " vs " +
                         b.str());
  };
  return TensorShape{pick(a.n, b.n), pick(a.c, b.c), pick(a.h, b.h), pick(a.w, b.w)};
}

struct BcastIndexer {
  std::int64_t sn, sc, sh, sw;  // strides, 0 on broadcast dims
  explicit BcastIndexer(const TensorShape& in, const TensorShape& out) {
    const std::int64_t cw = in.w, ch = static_cast<std::int64_t>(in.h) * in.w,
                       cc = static_cast<std::int64_t>(in.c) * in.h * in.w;
    sw = in.w == out.w ? 1 : 0;
    sh = in.h == out.h ? cw : 0;
    sc = in.c == out.c ? ch : 0;
    sn = in.n == out.n ? cc : 0;
  }
  std::int64_t operator()(int n, int c, int y, int x) const {
    return n * sn + c * sc + y * sh + x * sw;
  }
};

}  // namespace detail

/// Element-wise product with channel/spatial broadcasting on either operand.
template <typename T>
Tensor<T> mul_elem(const Tensor<T>& a, const Tensor<T>& b) {
  const TensorShape out_shape = detail::broadcast_shape(a.shape(), b.shape(), "mul_elem");
  std::vector<T> values(static_cast<std::size_t>(out_shape.numel()));
  const detail::BcastIndexer ia(a.shape(), out_shape), ib(b.shape(), out_shape);
  const auto& av = a.values();
  const auto& bv = b.values();
  std::size_t i = 0;
  for (int n = 0; n < out_shape.n; ++n)
    for (int c = 0; c < out_shape.c; ++c)
      for (int y = 0; y < out_shape.h; ++y)
        for (int x = 0; x < out_shape.w; ++x, ++i)
          values[i] = av[ia(n, c, y, x)] * bv[ib(n, c, y, x)];

  return detail::make_result<T>(
      out_shape, std::move(values), {a, b},
      [a, b, out_shape, ia, ib](typename Tensor<T>::Node& self) {
        const auto& go = self.grad;
        auto acc = [&](const Tensor<T>& dst, const detail::BcastIndexer& id,
                       const Tensor<T>& other, const detail::BcastIndexer& io) {
          if (!dst.requires_grad()) return;
          auto& g = dst.node()->ensure_grad();
          const auto& ov = other.values();
          std::size_t j = 0;
          for (int n = 0; n < out_shape.n; ++n)
            for (int c = 0; c < out_shape.c; ++c)
              for (int y = 0; y < out_shape.h; ++y)
                for (int x = 0; x < out_shape.w; ++x, ++j)
                  g[id(n, c, y, x)] += go[j] * ov[io(n, c, y, x)];
        };
        acc(a, ia, b, ib);
        acc(b, ib, a, ia);
      });
}

/// Element-wise sum with the same broadcasting rules as mul_elem.
template <typename T>
Tensor<T> add_elem(const Tensor<T>& a, const Tensor<T>& b) {
  const TensorShape out_shape = detail::broadcast_shape(a.shape(), b.shape(), "add_elem");
  std::vector<T> values(static_cast<std::size_t>(out_shape.numel()));
  const detail::BcastIndexer ia(a.shape(), out_shape), ib(b.shape(), out_shape);
  const auto& av = a.values();
  const auto& bv = b.values();
  std::size_t i = 0;
  for (int n = 0; n < out_shape.n; ++n)
    for (int c = 0; c < out_shape.c; ++c)
      for (int y = 0; y < out_shape.h; ++y)
        for (int x = 0; x < out_shape.w; ++x, ++i)
          values[i] = av[ia(n, c, y, x)] + bv[ib(n, c, y, x)];

  return detail::make_result<T>(
      out_shape, std::move(values), {a, b},
      [a, b, out_shape, ia, ib](typename Tensor<T>::Node& self) {
        const auto& go = self.grad;
        auto acc = [&](const Tensor<T>& dst, const detail::BcastIndexer& id) {
          if (!dst.requires_grad()) return;
          auto& g = dst.node()->ensure_grad();
          std::size_t j = 0;
          for (int n = 0; n < out_shape.n; ++n)
            for (int c = 0; c < out_shape.c; ++c)
              for (int y = 0; y < out_shape.h; ++y)
                for (int x = 0; x < out_shape.w; ++x, ++j) g[id(n, c, y, x)] += go[j];
        };
        acc(a, ia);
        acc(b, ib);
      });
}

template <typename T>
Tensor<T> scale(const Tensor<T>& x, T factor) {
  std::vector<T> values = x.values();
  for (T& v : values) v *= factor;
  return detail::make_result<T>(x.shape(), std::move(values), {x},
                                [x, factor](typename Tensor<T>::Node& self) {
                                  auto& g = x.node()->ensure_grad();
                                  for (std::size_t i = 0; i < g.size(); ++i)
                                    g[i] += factor * self.grad[i];
                                });
}

template <typename T>
Tensor<T> relu(const Tensor<T>& x) {
  std::vector<T> values = x.values();
  for (T& v : values) v = v > T(0) ? v : T(0);
  return detail::make_result<T>(x.shape(), std::move(values), {x},
                                [x](typename Tensor<T>::Node& self) {
                                  auto& g = x.node()->ensure_grad();
                                  const auto& xv = x.values();
                                  for (std::size_t i = 0; i < g.size(); ++i)
                                    if (xv[i] > T(0)) g[i] += self.grad[i];
                                });
}

/// Channel concatenation; backward splits the gradient by channel range.
template <typename T>
Tensor<T> concat_c(const std::vector<Tensor<T>>& inputs) {
  if (inputs.empty()) throw UsageError("concat_c: empty input list");
  const TensorShape& s0 = inputs.front().shape();
  int channels = 0;
  for (const auto& t : inputs) {
    const TensorShape& s = t.shape();
    if (s.n != s0.n || s.h != s0.h || s.w != s0.w)
      throw DimensionError("concat_c: spatial/batch mismatch " + s.str() + " vs " + s0.str());
    channels += s.c;
  }
  TensorShape out_shape{s0.n, channels, s0.h, s0.w};
  std::vector<T> values(static_cast<std::size_t>(out_shape.numel()));
  const std::size_t plane = static_cast<std::size_t>(s0.h) * s0.w;
  for (int n = 0; n < s0.n; ++n) {
    std::size_t c_off = 0;
    for (const auto& t : inputs) {
      const int tc = t.shape().c;
      const auto& tv = t.values();
      std::copy(tv.begin() + n * tc * plane, tv.begin() + (n + 1) * tc * plane,
                values.begin() + (n * channels + c_off) * plane);
      c_off += tc;
    }
  }
  return detail::make_result<T>(
      out_shape, std::move(values), inputs, [inputs, out_shape, plane](typename Tensor<T>::Node& self) {
        for (int n = 0; n < out_shape.n; ++n) {
          std::size_t c_off = 0;
          for (const auto& t : inputs) {
            const int tc = t.shape().c;
            if (t.requires_grad()) {
              auto& g = t.node()->ensure_grad();
              const std::size_t src = (n * out_shape.c + c_off) * plane;
              const std::size_t dst = static_cast<std::size_t>(n) * tc * plane;
              for (std::size_t i = 0; i < tc * plane; ++i) g[dst + i] += self.grad[src + i];
            }
            c_off += tc;
          }
        }
      });
}

/// Fixed linear functional sum_i w_i * x_i, as a scalar tensor. Used to
/// reduce arbitrary outputs to a checkable scalar.
template <typename T>
Tensor<T> weighted_sum(const Tensor<T>& x, std::vector<T> weights) {
  if (weights.size() != x.values().size())
    throw DimensionError("weighted_sum: weight count does not match tensor size");
  const auto& xv = x.values();
  double acc = 0.0;
  for (std::size_t i = 0; i < xv.size(); ++i)
    acc += static_cast<double>(weights[i]) * xv[i];
  return detail::make_result<T>(
      TensorShape{1, 1, 1, 1}, {static_cast<T>(acc)}, {x},
      [x, weights = std::move(weights)](typename Tensor<T>::Node& self) {
        auto& g = x.node()->ensure_grad();
        const T go = self.grad[0];
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += go * weights[i];
      });
}

/// Channel slice [c0, c1); backward scatters into the source range.
template <typename T>
Tensor<T> slice_c(const Tensor<T>& x, int c0, int c1) {
  const TensorShape s = x.shape();
  if (c0 < 0 || c1 > s.c || c0 >= c1)
    throw DimensionError("slice_c: bad channel range [" + std::to_string(c0) + "," +
                         std::to_string(c1) + ") for " + s.str());
  TensorShape out_shape{s.n, c1 - c0, s.h, s.w};
  const std::size_t plane = static_cast<std::size_t>(s.h) * s.w;
  std::vector<T> values(static_cast<std::size_t>(out_shape.numel()));
  const auto& xv = x.values();
  for (int n = 0; n < s.n; ++n)
    std::copy(xv.begin() + (static_cast<std::size_t>(n) * s.c + c0) * plane,
              xv.begin() + (static_cast<std::size_t>(n) * s.c + c1) * plane,
              values.begin() + static_cast<std::size_t>(n) * (c1 - c0) * plane);
  return detail::make_result<T>(
      out_shape, std::move(values), {x},
      [x, s, c0, c1, plane](typename Tensor<T>::Node& self) {
        auto& g = x.node()->ensure_grad();
        const int oc = c1 - c0;
        for (int n = 0; n < s.n; ++n) {
          const std::size_t src = static_cast<std::size_t>(n) * oc * plane;
          const std::size_t dst = (static_cast<std::size_t>(n) * s.c + c0) * plane;
          for (std::size_t i = 0; i < static_cast<std::size_t>(oc) * plane; ++i)
            g[dst + i] += self.grad[src + i];
        }
      });
}

/// Mean squared error over all elements: (1/n) sum (target - pred)^2.
/// Non-finite results are rejected here, where NaN propagation surfaces.
template <typename T>
Tensor<T> mse_loss(const Tensor<T>& pred, const Tensor<T>& target) {
  if (!(pred.shape() == target.shape()))
    throw DimensionError("mse_loss: shapes differ, " + pred.shape().str() + " vs " +
                         target.shape().str());
  const auto& pv = pred.values();
  const auto& tv = target.values();
  double acc = 0.0;
  for (std::size_t i = 0; i < pv.size(); ++i) {
    const double d = static_cast<double>(tv[i]) - static_cast<double>(pv[i]);
    acc += d * d;
  }
  const T loss = static_cast<T>(acc / static_cast<double>(pv.size()));
  if (!std::isfinite(static_cast<double>(loss)))
    throw NumericError("mse_loss: non-finite loss value");

  return detail::make_result<T>(
      TensorShape{1, 1, 1, 1}, {loss}, {pred, target},
      [pred, target](typename Tensor<T>::Node& self) {
        const T go = self.grad[0];
        const auto& pv = pred.values();
        const auto& tv = target.values();
        const T inv_n = T(1) / static_cast<T>(pv.size());
        if (pred.requires_grad()) {
          auto& g = pred.node()->ensure_grad();
          for (std::size_t i = 0; i < g.size(); ++i)
            g[i] += go * T(2) * (pv[i] - tv[i]) * inv_n;
        }
        if (target.requires_grad()) {
          auto& g = target.node()->ensure_grad();
          for (std::size_t i = 0; i < g.size(); ++i)
            g[i] += go * T(2) * (tv[i] - pv[i]) * inv_n;
        }
      });
}

}  // namespace intrinsic
