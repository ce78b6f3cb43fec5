#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "intrinsic/errors.hpp"
#include "intrinsic/tensor.hpp"

namespace intrinsic {

namespace detail {

// Valid output range [lo, hi] along one spatial axis for a kernel tap:
// in = out*stride - pad + k must fall inside [0, in_size).
inline void conv_ox_range(int out_size, int in_size, int stride, int pad, int k, int& lo,
                          int& hi) {
  lo = std::max(0, (pad - k + stride - 1) / stride);
  while (lo * stride - pad + k < 0) ++lo;  // guard integer-division edge cases
  hi = std::min(out_size - 1, (in_size - 1 + pad - k) / stride);
}

}  // namespace detail

/// Cross-correlation with zero padding. Weights are (out_c, in_c, kh, kw),
/// bias is (1, out_c, 1, 1). Output spatial size is (in + 2*pad - k)/stride + 1.
template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b, int stride,
                 int pad) {
  const TensorShape xs = x.shape(), ws = w.shape();
  const int N = xs.n, IC = xs.c, IH = xs.h, IW = xs.w;
  const int OC = ws.n, KH = ws.h, KW = ws.w;
  if (ws.c != IC)
    throw DimensionError("conv2d: input channels " + std::to_string(IC) +
                         " do not match weight channels " + std::to_string(ws.c));
  if (b.shape().c != OC || b.numel() != OC)
    throw DimensionError("conv2d: bias must have one value per output channel");
  const int OH = (IH + 2 * pad - KH) / stride + 1;
  const int OW = (IW + 2 * pad - KW) / stride + 1;
  if (OH < 1 || OW < 1) throw DimensionError("conv2d: kernel larger than padded input");

  TensorShape out_shape{N, OC, OH, OW};
  std::vector<T> out(static_cast<std::size_t>(out_shape.numel()));
  const auto& xv = x.values();
  const auto& wv = w.values();
  const auto& bv = b.values();

  for (int n = 0; n < N; ++n)
    for (int oc = 0; oc < OC; ++oc) {
      T* on = &out[(static_cast<std::size_t>(n) * OC + oc) * OH * OW];
      std::fill(on, on + static_cast<std::size_t>(OH) * OW, bv[oc]);
      for (int ic = 0; ic < IC; ++ic) {
        const T* xn = &xv[(static_cast<std::size_t>(n) * IC + ic) * IH * IW];
        const T* wk = &wv[(static_cast<std::size_t>(oc) * IC + ic) * KH * KW];
        for (int ky = 0; ky < KH; ++ky)
          for (int kx = 0; kx < KW; ++kx) {
            const T wval = wk[ky * KW + kx];
            int lo, hi;
            detail::conv_ox_range(OW, IW, stride, pad, kx, lo, hi);
            for (int oy = 0; oy < OH; ++oy) {
              const int iy = oy * stride - pad + ky;
              if (iy < 0 || iy >= IH) continue;
              const T* __restrict xrow = xn + static_cast<std::size_t>(iy) * IW - pad + kx;
              T* __restrict orow = on + static_cast<std::size_t>(oy) * OW;
              if (stride == 1) {
                for (int ox = lo; ox <= hi; ++ox) orow[ox] += wval * xrow[ox];
              } else {
                for (int ox = lo; ox <= hi; ++ox) orow[ox] += wval * xrow[ox * stride];
              }
            }
          }
      }
    }

  return detail::make_result<T>(
      out_shape, std::move(out), {x, w, b},
      [x, w, b, stride, pad, out_shape](typename Tensor<T>::Node& self) {
        const TensorShape xs = x.shape(), ws = w.shape();
        const int N = xs.n, IC = xs.c, IH = xs.h, IW = xs.w;
        const int OC = ws.n, KH = ws.h, KW = ws.w;
        const int OH = out_shape.h, OW = out_shape.w;
        const auto& go = self.grad;
        const auto& xv = x.values();
        const auto& wv = w.values();

        if (x.requires_grad()) {
          auto& gx = x.node()->ensure_grad();
          for (int n = 0; n < N; ++n)
            for (int ic = 0; ic < IC; ++ic) {
              T* gxn = &gx[(static_cast<std::size_t>(n) * IC + ic) * IH * IW];
              for (int oc = 0; oc < OC; ++oc) {
                const T* gon = &go[(static_cast<std::size_t>(n) * OC + oc) * OH * OW];
                const T* wk = &wv[(static_cast<std::size_t>(oc) * IC + ic) * KH * KW];
                for (int ky = 0; ky < KH; ++ky)
                  for (int kx = 0; kx < KW; ++kx) {
                    const T wval = wk[ky * KW + kx];
                    int lo, hi;
                    detail::conv_ox_range(OW, IW, stride, pad, kx, lo, hi);
                    for (int oy = 0; oy < OH; ++oy) {
                      const int iy = oy * stride - pad + ky;
                      if (iy < 0 || iy >= IH) continue;
                      T* __restrict gxrow = gxn + static_cast<std::size_t>(iy) * IW - pad + kx;
                      const T* __restrict gorow = gon + static_cast<std::size_t>(oy) * OW;
                      if (stride == 1) {
                        for (int ox = lo; ox <= hi; ++ox) gxrow[ox] += wval * gorow[ox];
                      } else {
                        for (int ox = lo; ox <= hi; ++ox) gxrow[ox * stride] += wval * gorow[ox];
                      }
                    }
                  }
              }
            }
        }

        if (w.requires_grad()) {
          auto& gw = w.node()->ensure_grad();
          for (int oc = 0; oc < OC; ++oc)
            for (int ic = 0; ic < IC; ++ic)
              for (int ky = 0; ky < KH; ++ky)
                for (int kx = 0; kx < KW; ++kx) {
                  int lo, hi;
                  detail::conv_ox_range(OW, IW, stride, pad, kx, lo, hi);
                  T acc = T(0);
                  for (int n = 0; n < N; ++n) {
                    const T* gon = &go[(static_cast<std::size_t>(n) * OC + oc) * OH * OW];
                    const T* xn = &xv[(static_cast<std::size_t>(n) * IC + ic) * IH * IW];
                    for (int oy = 0; oy < OH; ++oy) {
                      const int iy = oy * stride - pad + ky;
                      if (iy < 0 || iy >= IH) continue;
                      const T* __restrict xrow = xn + static_cast<std::size_t>(iy) * IW - pad + kx;
                      const T* __restrict gorow = gon + static_cast<std::size_t>(oy) * OW;
                      if (stride == 1) {
                        for (int ox = lo; ox <= hi; ++ox) acc += gorow[ox] * xrow[ox];
                      } else {
                        for (int ox = lo; ox <= hi; ++ox) acc += gorow[ox] * xrow[ox * stride];
                      }
                    }
                  }
                  gw[((static_cast<std::size_t>(oc) * IC + ic) * KH + ky) * KW + kx] += acc;
                }
        }

        if (b.requires_grad()) {
          auto& gb = b.node()->ensure_grad();
          for (int n = 0; n < N; ++n)
            for (int oc = 0; oc < OC; ++oc) {
              const T* gon = &go[(static_cast<std::size_t>(n) * OC + oc) * OH * OW];
              T acc = T(0);
              for (std::size_t i = 0; i < static_cast<std::size_t>(OH) * OW; ++i)
                acc += gon[i];
              gb[oc] += acc;
            }
        }
      });
}

/// 3x3 convolution, zero padding 1, stride 1 or 2.
template <typename T>
Tensor<T> conv3x3(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b, int stride = 1) {
  if (w.shape().h != 3 || w.shape().w != 3)
    throw DimensionError("conv3x3: weights must be 3x3, got " + w.shape().str());
  if (stride != 1 && stride != 2) throw UsageError("conv3x3: stride must be 1 or 2");
  return conv2d(x, w, b, stride, 1);
}

/// Transposed convolution, kernel 4, stride 2, padding 1: doubles the spatial
/// extent. Weights are (in_c, out_c, 4, 4).
template <typename T>
Tensor<T> deconv4x4_s2(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b) {
  const TensorShape xs = x.shape(), ws = w.shape();
  const int N = xs.n, IC = xs.c, IH = xs.h, IW = xs.w;
  const int OC = ws.c, K = 4;
  if (ws.n != IC)
    throw DimensionError("deconv4x4_s2: input channels " + std::to_string(IC) +
                         " do not match weight channels " + std::to_string(ws.n));
  if (ws.h != K || ws.w != K)
    throw DimensionError("deconv4x4_s2: weights must be 4x4, got " + ws.str());
  if (b.shape().c != OC || b.numel() != OC)
    throw DimensionError("deconv4x4_s2: bias must have one value per output channel");
  const int OH = 2 * IH, OW = 2 * IW;

  TensorShape out_shape{N, OC, OH, OW};
  std::vector<T> out(static_cast<std::size_t>(out_shape.numel()));
  const auto& xv = x.values();
  const auto& wv = w.values();
  const auto& bv = b.values();

  for (int n = 0; n < N; ++n)
    for (int oc = 0; oc < OC; ++oc) {
      T* on = &out[(static_cast<std::size_t>(n) * OC + oc) * OH * OW];
      std::fill(on, on + static_cast<std::size_t>(OH) * OW, bv[oc]);
      for (int ic = 0; ic < IC; ++ic) {
        const T* xn = &xv[(static_cast<std::size_t>(n) * IC + ic) * IH * IW];
        const T* wk = &wv[(static_cast<std::size_t>(ic) * OC + oc) * K * K];
        for (int iy = 0; iy < IH; ++iy)
          for (int ix = 0; ix < IW; ++ix) {
            const T v = xn[static_cast<std::size_t>(iy) * IW + ix];
            for (int ky = 0; ky < K; ++ky) {
              const int oy = iy * 2 - 1 + ky;
              if (oy < 0 || oy >= OH) continue;
              for (int kx = 0; kx < K; ++kx) {
                const int ox = ix * 2 - 1 + kx;
                if (ox < 0 || ox >= OW) continue;
                on[static_cast<std::size_t>(oy) * OW + ox] += v * wk[ky * K + kx];
              }
            }
          }
      }
    }

  return detail::make_result<T>(
      out_shape, std::move(out), {x, w, b},
      [x, w, b, out_shape](typename Tensor<T>::Node& self) {
        const TensorShape xs = x.shape(), ws = w.shape();
        const int N = xs.n, IC = xs.c, IH = xs.h, IW = xs.w;
        const int OC = ws.c, K = 4;
        const int OH = out_shape.h, OW = out_shape.w;
        const auto& go = self.grad;
        const auto& xv = x.values();
        const auto& wv = w.values();

        if (x.requires_grad()) {
          // The adjoint of the scatter is the stride-2 cross-correlation of
          // the output gradient with the same kernel.
          auto& gx = x.node()->ensure_grad();
          for (int n = 0; n < N; ++n)
            for (int ic = 0; ic < IC; ++ic) {
              T* gxn = &gx[(static_cast<std::size_t>(n) * IC + ic) * IH * IW];
              for (int oc = 0; oc < OC; ++oc) {
                const T* gon = &go[(static_cast<std::size_t>(n) * OC + oc) * OH * OW];
                const T* wk = &wv[(static_cast<std::size_t>(ic) * OC + oc) * K * K];
                for (int iy = 0; iy < IH; ++iy)
                  for (int ix = 0; ix < IW; ++ix) {
                    T acc = T(0);
                    for (int ky = 0; ky < K; ++ky) {
                      const int oy = iy * 2 - 1 + ky;
                      if (oy < 0 || oy >= OH) continue;
                      for (int kx = 0; kx < K; ++kx) {
                        const int ox = ix * 2 - 1 + kx;
                        if (ox < 0 || ox >= OW) continue;
                        acc += gon[static_cast<std::size_t>(oy) * OW + ox] * wk[ky * K + kx];
                      }
                    }
                    gxn[static_cast<std::size_t>(iy) * IW + ix] += acc;
                  }
              }
            }
        }

        if (w.requires_grad()) {
          auto& gw = w.node()->ensure_grad();
          for (int ic = 0; ic < IC; ++ic)
            for (int oc = 0; oc < OC; ++oc)
              for (int ky = 0; ky < K; ++ky)
                for (int kx = 0; kx < K; ++kx) {
                  T acc = T(0);
                  for (int n = 0; n < N; ++n) {
                    const T* xn = &xv[(static_cast<std::size_t>(n) * IC + ic) * IH * IW];
                    const T* gon = &go[(static_cast<std::size_t>(n) * OC + oc) * OH * OW];
                    for (int iy = 0; iy < IH; ++iy) {
                      const int oy = iy * 2 - 1 + ky;
                      if (oy < 0 || oy >= OH) continue;
                      for (int ix = 0; ix < IW; ++ix) {
                        const int ox = ix * 2 - 1 + kx;
                        if (ox < 0 || ox >= OW) continue;
                        acc += xn[static_cast<std::size_t>(iy) * IW + ix] *
                               gon[static_cast<std::size_t>(oy) * OW + ox];
                      }
                    }
                  }
                  gw[((static_cast<std::size_t>(ic) * OC + oc) * K + ky) * K + kx] += acc;
                }
        }

        if (b.requires_grad()) {
          auto& gb = b.node()->ensure_grad();
          for (int n = 0; n < N; ++n)
            for (int oc = 0; oc < OC; ++oc) {
              const T* gon = &go[(static_cast<std::size_t>(n) * OC + oc) * OH * OW];
              T acc = T(0);
              for (std::size_t i = 0; i < static_cast<std::size_t>(OH) * OW; ++i)
                acc += gon[i];
              gb[oc] += acc;
            }
        }
      });
}

/// Running statistics for batch normalization.
template <typename T>
struct BnState {
  std::vector<T> running_mean;
  std::vector<T> running_var;

  explicit BnState(int channels = 0)
      : running_mean(channels, T(0)), running_var(channels, T(1)) {}
};

enum class BnMode { Train, Eval };

/// Batch normalization over (N, H, W) per channel. Train mode normalizes by
/// biased batch statistics and updates the running ones (factor 0.1);
/// eval mode normalizes by the running statistics.
template <typename T>
Tensor<T> batchnorm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                    BnState<T>& state, BnMode mode, T eps = T(1e-5), T update = T(0.1)) {
  const TensorShape xs = x.shape();
  const int N = xs.n, C = xs.c, H = xs.h, W = xs.w;
  if (gamma.numel() != C || beta.numel() != C)
    throw DimensionError("batchnorm: affine parameters must have C elements");
  if (static_cast<int>(state.running_mean.size()) != C)
    throw DimensionError("batchnorm: state channel count mismatch");
  const std::int64_t m = static_cast<std::int64_t>(N) * H * W;
  if (mode == BnMode::Train && m < 2)
    throw DomainError("batchnorm: train mode needs more than one value per channel");

  const auto& xv = x.values();
  const auto& gv = gamma.values();
  const auto& bv = beta.values();
  const std::size_t plane = static_cast<std::size_t>(H) * W;

  std::vector<T> mean(C), invstd(C);
  if (mode == BnMode::Train) {
    for (int c = 0; c < C; ++c) {
      double s = 0.0;
      for (int n = 0; n < N; ++n) {
        const T* p = &xv[(static_cast<std::size_t>(n) * C + c) * plane];
        for (std::size_t i = 0; i < plane; ++i) s += p[i];
      }
      const double mu = s / static_cast<double>(m);
      double var = 0.0;
      for (int n = 0; n < N; ++n) {
        const T* p = &xv[(static_cast<std::size_t>(n) * C + c) * plane];
        for (std::size_t i = 0; i < plane; ++i) {
          const double d = p[i] - mu;
          var += d * d;
        }
      }
      var /= static_cast<double>(m);  // biased
      mean[c] = static_cast<T>(mu);
      invstd[c] = static_cast<T>(1.0 / std::sqrt(var + static_cast<double>(eps)));
      state.running_mean[c] = (T(1) - update) * state.running_mean[c] + update * mean[c];
      state.running_var[c] =
          (T(1) - update) * state.running_var[c] + update * static_cast<T>(var);
    }
  } else {
    for (int c = 0; c < C; ++c) {
      mean[c] = state.running_mean[c];
      invstd[c] = T(1) / std::sqrt(state.running_var[c] + eps);
    }
  }

  std::vector<T> xhat(xv.size());
  std::vector<T> out(xv.size());
  for (int n = 0; n < N; ++n)
    for (int c = 0; c < C; ++c) {
      const T* p = &xv[(static_cast<std::size_t>(n) * C + c) * plane];
      T* ph = &xhat[(static_cast<std::size_t>(n) * C + c) * plane];
      T* po = &out[(static_cast<std::size_t>(n) * C + c) * plane];
      for (std::size_t i = 0; i < plane; ++i) {
        ph[i] = (p[i] - mean[c]) * invstd[c];
        po[i] = gv[c] * ph[i] + bv[c];
      }
    }

  const bool train = mode == BnMode::Train;
  return detail::make_result<T>(
      xs, std::move(out), {x, gamma, beta},
      [x, gamma, beta, xs, plane, train, xhat = std::move(xhat),
       invstd = std::move(invstd)](typename Tensor<T>::Node& self) {
        const int N = xs.n, C = xs.c;
        const auto& go = self.grad;
        const auto& gv = gamma.values();
        const T m = static_cast<T>(static_cast<std::int64_t>(N) * plane);

        std::vector<T> sum_go(C, T(0)), sum_go_xhat(C, T(0));
        for (int n = 0; n < N; ++n)
          for (int c = 0; c < C; ++c) {
            const T* g = &go[(static_cast<std::size_t>(n) * C + c) * plane];
            const T* h = &xhat[(static_cast<std::size_t>(n) * C + c) * plane];
            T a = T(0), bsum = T(0);
            for (std::size_t i = 0; i < plane; ++i) {
              a += g[i];
              bsum += g[i] * h[i];
            }
            sum_go[c] += a;
            sum_go_xhat[c] += bsum;
          }

        if (gamma.requires_grad()) {
          auto& gg = gamma.node()->ensure_grad();
          for (int c = 0; c < C; ++c) gg[c] += sum_go_xhat[c];
        }
        if (beta.requires_grad()) {
          auto& gb = beta.node()->ensure_grad();
          for (int c = 0; c < C; ++c) gb[c] += sum_go[c];
        }
        if (x.requires_grad()) {
          auto& gx = x.node()->ensure_grad();
          for (int n = 0; n < N; ++n)
            for (int c = 0; c < C; ++c) {
              const T* g = &go[(static_cast<std::size_t>(n) * C + c) * plane];
              const T* h = &xhat[(static_cast<std::size_t>(n) * C + c) * plane];
              T* dst = &gx[(static_cast<std::size_t>(n) * C + c) * plane];
              const T k = gv[c] * invstd[c];
              if (train) {
                const T mg = sum_go[c] / m;
                const T mgh = sum_go_xhat[c] / m;
                for (std::size_t i = 0; i < plane; ++i)
                  dst[i] += k * (g[i] - mg - h[i] * mgh);
              } else {
                for (std::size_t i = 0; i < plane; ++i) dst[i] += k * g[i];
              }
            }
        }
      });
}

}  // namespace intrinsic
