#pragma once

#include <cmath>
#include <cstdint>
#include <utility>
#include <vector>

#include "intrinsic/errors.hpp"
#include "intrinsic/image.hpp"

namespace intrinsic {

/// Threshold-based gradient separation parameters. The threshold acts on
/// log-domain gradient magnitudes; larger gradients are attributed to
/// reflectance changes.
struct RetinexParams {
  float threshold = 0.075f;
  bool use_chromaticity = false;
  float log_clamp = 1e-4f;      // floor before entering the log domain
  float derive_epsilon = 1e-4f; // clamp for the final shading division
  double solver_tol = 1e-6;
  int solver_max_iters = 10000;

  void validate() const {
    if (threshold < 0.0f) throw DomainError("RetinexParams: threshold must be >= 0");
    if (!(solver_tol > 0.0)) throw DomainError("RetinexParams: solver_tol must be > 0");
    if (solver_max_iters < 1) throw DomainError("RetinexParams: solver_max_iters must be >= 1");
  }
};

namespace detail {

inline Image log_clamped(const Image& im, float floor) {
  Image out(im.height, im.width, im.channels);
  for (std::size_t i = 0; i < im.data.size(); ++i)
    out.data[i] = std::log(std::max(im.data[i], floor));
  return out;
}

inline void recompute_magnitude(GradientField& g) {
  for (std::size_t i = 0; i < g.gx.data.size(); ++i)
    g.magnitude.data[i] =
        std::sqrt(g.gx.data[i] * g.gx.data[i] + g.gy.data[i] * g.gy.data[i]);
}

}  // namespace detail

/// Splits the log-domain gradient of an image into reflectance and shading
/// parts. An element whose classification statistic exceeds the threshold
/// goes to reflectance; the two fields sum to the log-image gradient exactly.
/// All channels of an element move together.
inline std::pair<GradientField, GradientField> classify_gradients(const Image& image,
                                                                  const RetinexParams& params) {
  params.validate();
  const Image log_im = detail::log_clamped(image, params.log_clamp);
  const GradientField g = gradient(log_im);

  // Per-direction statistic: max|.| over channels, or the channel-norm of the
  // log-chromaticity gradient when chromaticity mode is on.
  Image stat_x(image.height, image.width, 1);
  Image stat_y(image.height, image.width, 1);
  if (params.use_chromaticity && image.channels > 1) {
    Image chroma(image.height, image.width, image.channels);
    for (int y = 0; y < image.height; ++y)
      for (int x = 0; x < image.width; ++x) {
        float mean = 0.0f;
        for (int c = 0; c < image.channels; ++c) mean += log_im.at(y, x, c);
        mean /= image.channels;
        for (int c = 0; c < image.channels; ++c)
          chroma.at(y, x, c) = log_im.at(y, x, c) - mean;
      }
    const GradientField gc = gradient(chroma);
    for (int y = 0; y < image.height; ++y)
      for (int x = 0; x < image.width; ++x) {
        float sx = 0.0f, sy = 0.0f;
        for (int c = 0; c < image.channels; ++c) {
          sx += gc.gx.at(y, x, c) * gc.gx.at(y, x, c);
          sy += gc.gy.at(y, x, c) * gc.gy.at(y, x, c);
        }
        stat_x.at(y, x, 0) = std::sqrt(sx);
        stat_y.at(y, x, 0) = std::sqrt(sy);
      }
  } else {
    for (int y = 0; y < image.height; ++y)
      for (int x = 0; x < image.width; ++x) {
        float sx = 0.0f, sy = 0.0f;
        for (int c = 0; c < image.channels; ++c) {
          sx = std::max(sx, std::abs(g.gx.at(y, x, c)));
          sy = std::max(sy, std::abs(g.gy.at(y, x, c)));
        }
        stat_x.at(y, x, 0) = sx;
        stat_y.at(y, x, 0) = sy;
      }
  }

  GradientField refl, shad;
  refl.gx = Image(image.height, image.width, image.channels);
  refl.gy = Image(image.height, image.width, image.channels);
  refl.magnitude = refl.gx;
  shad = refl;
  for (int y = 0; y < image.height; ++y)
    for (int x = 0; x < image.width; ++x) {
      const bool rx = stat_x.at(y, x, 0) > params.threshold;
      const bool ry = stat_y.at(y, x, 0) > params.threshold;
      for (int c = 0; c < image.channels; ++c) {
        (rx ? refl : shad).gx.at(y, x, c) = g.gx.at(y, x, c);
        (ry ? refl : shad).gy.at(y, x, c) = g.gy.at(y, x, c);
      }
    }
  detail::recompute_magnitude(refl);
  detail::recompute_magnitude(shad);
  return {std::move(refl), std::move(shad)};
}

struct PoissonResult {
  Image field;        // zero-mean least-squares potential
  int iterations = 0;
  double residual = 0.0;  // final relative residual
  bool converged = false;
};

namespace detail {

// Forward-difference derivative operators and their adjoints; gx/gy last
// column/row are structurally excluded.
inline void grad_x(const std::vector<double>& f, std::vector<double>& out, int h, int w) {
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      out[y * w + x] = (x + 1 < w) ? f[y * w + x + 1] - f[y * w + x] : 0.0;
}
inline void grad_y(const std::vector<double>& f, std::vector<double>& out, int h, int w) {
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      out[y * w + x] = (y + 1 < h) ? f[(y + 1) * w + x] - f[y * w + x] : 0.0;
}
inline void grad_x_adjoint(const std::vector<double>& u, std::vector<double>& out, int h,
                           int w) {
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double v = 0.0;
      if (x >= 1) v += u[y * w + x - 1];
      if (x <= w - 2) v -= u[y * w + x];
      out[y * w + x] = v;
    }
}
inline void grad_y_adjoint(const std::vector<double>& u, std::vector<double>& out, int h,
                           int w) {
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double v = 0.0;
      if (y >= 1) v += u[(y - 1) * w + x];
      if (y <= h - 2) v -= u[y * w + x];
      out[y * w + x] = v;
    }
}

inline double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

}  // namespace detail

/// Least-squares gradient reintegration: finds the zero-mean f minimizing
/// ||d_x f - gx||^2 + ||d_y f - gy||^2 under the same forward-difference
/// stencil as `gradient`, via conjugate gradients on the normal equations
/// (5-point Laplacian, Neumann boundaries).
inline PoissonResult poisson_reintegrate(const Image& gx, const Image& gy, double tol = 1e-6,
                                         int max_iters = 10000) {
  if (!gx.same_shape(gy) || gx.channels != 1)
    throw DimensionError("poisson_reintegrate: gx/gy must be matching single-channel images");
  const int h = gx.height, w = gx.width;
  const std::size_t n = static_cast<std::size_t>(h) * w;

  std::vector<double> b(n, 0.0), tmp(n), tmp2(n);
  {
    std::vector<double> u(n);
    for (std::size_t i = 0; i < n; ++i) u[i] = gx.data[i];
    detail::grad_x_adjoint(u, b, h, w);
    for (std::size_t i = 0; i < n; ++i) u[i] = gy.data[i];
    detail::grad_y_adjoint(u, tmp, h, w);
    for (std::size_t i = 0; i < n; ++i) b[i] += tmp[i];
  }

  auto apply_laplacian = [&](const std::vector<double>& f, std::vector<double>& out) {
    detail::grad_x(f, tmp, h, w);
    detail::grad_x_adjoint(tmp, out, h, w);
    detail::grad_y(f, tmp, h, w);
    detail::grad_y_adjoint(tmp, tmp2, h, w);
    for (std::size_t i = 0; i < n; ++i) out[i] += tmp2[i];
  };

  PoissonResult res;
  res.field = Image(h, w, 1);
  const double bnorm = std::sqrt(detail::dot(b, b));
  if (bnorm == 0.0) {
    res.converged = true;
    return res;  // zero gradients, zero-mean gauge => all zeros
  }

  std::vector<double> f(n, 0.0), r = b, p = b, ap(n);
  double rr = detail::dot(r, r);
  for (int it = 0; it < max_iters; ++it) {
    apply_laplacian(p, ap);
    const double pap = detail::dot(p, ap);
    if (pap <= 0.0) break;  // numerical breakdown in the constant-null space
    const double alpha = rr / pap;
    for (std::size_t i = 0; i < n; ++i) f[i] += alpha * p[i];
    for (std::size_t i = 0; i < n; ++i) r[i] -= alpha * ap[i];
    const double rr_new = detail::dot(r, r);
    res.iterations = it + 1;
    res.residual = std::sqrt(rr_new) / bnorm;
    if (res.residual <= tol) {
      res.converged = true;
      break;
    }
    const double beta = rr_new / rr;
    rr = rr_new;
    for (std::size_t i = 0; i < n; ++i) p[i] = r[i] + beta * p[i];
  }

  double mean = 0.0;
  for (double v : f) mean += v;
  mean /= static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) res.field.data[i] = static_cast<float>(f[i] - mean);
  return res;
}

struct RetinexResult {
  IntrinsicSet set;
  bool solver_converged = true;
  int solver_iterations = 0;
};

/// Classical Retinex decomposition: classify log gradients, reintegrate the
/// reflectance part per channel, exponentiate, normalize to max 1, and derive
/// shading from the input.
inline RetinexResult retinex_decompose(const Image& image, const RetinexParams& params) {
  params.validate();
  auto [refl_grads, shad_grads] = classify_gradients(image, params);

  RetinexResult out;
  const Image log_im = detail::log_clamped(image, params.log_clamp);
  Image log_r(image.height, image.width, image.channels);
  for (int c = 0; c < image.channels; ++c) {
    Image cx(image.height, image.width, 1), cy(image.height, image.width, 1);
    for (int y = 0; y < image.height; ++y)
      for (int x = 0; x < image.width; ++x) {
        cx.at(y, x, 0) = refl_grads.gx.at(y, x, c);
        cy.at(y, x, 0) = refl_grads.gy.at(y, x, c);
      }
    PoissonResult p = poisson_reintegrate(cx, cy, params.solver_tol, params.solver_max_iters);
    out.solver_converged = out.solver_converged && p.converged;
    out.solver_iterations = std::max(out.solver_iterations, p.iterations);
    // The solve fixes each channel only up to a constant. Anchoring to the
    // image's per-channel mean log level keeps the overall decomposition
    // free in exactly one global scale instead of one per channel, so no
    // spurious color cast enters the reflectance.
    double level = 0.0;
    for (int y = 0; y < image.height; ++y)
      for (int x = 0; x < image.width; ++x) level += log_im.at(y, x, c);
    level /= static_cast<double>(image.height) * image.width;
    for (int y = 0; y < image.height; ++y)
      for (int x = 0; x < image.width; ++x)
        log_r.at(y, x, c) = p.field.at(y, x, 0) + static_cast<float>(level);
  }

  Image reflectance(image.height, image.width, image.channels);
  for (std::size_t i = 0; i < reflectance.data.size(); ++i)
    reflectance.data[i] = std::exp(log_r.data[i]);
  const float peak = reflectance.max_value();
  if (peak > 0.0f)
    for (float& v : reflectance.data) v /= peak;

  out.set.reflectance = std::move(reflectance);
  out.set.shading = derive_shading(image, out.set.reflectance, params.derive_epsilon);
  return out;
}

}  // namespace intrinsic
