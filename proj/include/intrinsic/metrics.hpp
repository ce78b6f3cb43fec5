#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "intrinsic/errors.hpp"
#include "intrinsic/image.hpp"

namespace intrinsic {

/// Sliding-window layout for LMSE: k x k regions at stride k/2.
struct WindowSpec {
  int k = 20;

  int step() const { return k / 2; }
  void validate() const {
    if (k < 2 || k % 2 != 0) throw DomainError("WindowSpec: k must be even and >= 2");
  }
};

/// Window anchor positions along one extent: multiples of k/2, plus a final
/// anchor flush to the far edge so every pixel is covered.
inline std::vector<int> window_anchors(int extent, int k) {
  if (extent < k) throw DomainError("window_anchors: extent smaller than window");
  std::vector<int> anchors;
  const int step = k / 2;
  for (int a = 0; a + k <= extent; a += step) anchors.push_back(a);
  if (anchors.back() != extent - k) anchors.push_back(extent - k);
  return anchors;
}

/// Brightness-adjusted MSE: (1/n) sum (a*pred - gt)^2 with the scalar a
/// chosen to minimize the error, computed jointly over all pixels and
/// channels. An all-zero prediction uses a = 0.
inline double scaled_mse(const Image& pred, const Image& gt) {
  if (!pred.same_shape(gt))
    throw DimensionError("scaled_mse: shapes differ, " + shape_str(pred) + " vs " +
                         shape_str(gt));
  double dot = 0.0, pp = 0.0;
  for (std::size_t i = 0; i < pred.data.size(); ++i) {
    dot += static_cast<double>(pred.data[i]) * gt.data[i];
    pp += static_cast<double>(pred.data[i]) * pred.data[i];
  }
  const double alpha = pp > 0.0 ? dot / pp : 0.0;
  double err = 0.0;
  for (std::size_t i = 0; i < pred.data.size(); ++i) {
    const double d = alpha * pred.data[i] - gt.data[i];
    err += d * d;
  }
  return err / static_cast<double>(pred.data.size());
}

namespace detail {

struct WindowView {
  int y0, x0, k;
};

inline double window_scaled_mse_over_energy(const Image& pred, const Image& gt,
                                            const WindowView& w, int c0, int c1) {
  double dot = 0.0, pp = 0.0, gg = 0.0;
  for (int y = w.y0; y < w.y0 + w.k; ++y)
    for (int x = w.x0; x < w.x0 + w.k; ++x)
      for (int c = c0; c < c1; ++c) {
        const double p = pred.at(y, x, c), g = gt.at(y, x, c);
        dot += p * g;
        pp += p * p;
        gg += g * g;
      }
  const std::size_t n = static_cast<std::size_t>(w.k) * w.k * (c1 - c0);
  const double denom = gg / static_cast<double>(n);  // mean(gt^2) over the window
  if (denom <= 0.0) return 0.0;                      // zero-gt windows contribute 0
  const double alpha = pp > 0.0 ? dot / pp : 0.0;
  double err = 0.0;
  for (int y = w.y0; y < w.y0 + w.k; ++y)
    for (int x = w.x0; x < w.x0 + w.k; ++x)
      for (int c = c0; c < c1; ++c) {
        const double d = alpha * pred.at(y, x, c) - gt.at(y, x, c);
        err += d * d;
      }
  return (err / static_cast<double>(n)) / denom;
}

}  // namespace detail

/// Local MSE over k x k windows at stride k/2 (edge windows anchored flush to
/// the border), each normalized by the window's mean squared ground truth so
/// an all-zero prediction scores exactly 1. Channels are pooled jointly by
/// default; `per_channel` averages independent per-channel scores instead.
inline double lmse(const Image& pred, const Image& gt, const WindowSpec& spec,
                   bool per_channel = false) {
  spec.validate();
  if (!pred.same_shape(gt))
    throw DimensionError("lmse: shapes differ, " + shape_str(pred) + " vs " + shape_str(gt));
  if (pred.height < spec.k || pred.width < spec.k)
    throw DomainError("lmse: image " + shape_str(pred) + " smaller than window k=" +
                      std::to_string(spec.k));
  const std::vector<int> rows = window_anchors(pred.height, spec.k);
  const std::vector<int> cols = window_anchors(pred.width, spec.k);
  double total = 0.0;
  std::size_t count = 0;
  for (int y0 : rows)
    for (int x0 : cols) {
      const detail::WindowView w{y0, x0, spec.k};
      if (per_channel) {
        double s = 0.0;
        for (int c = 0; c < pred.channels; ++c)
          s += detail::window_scaled_mse_over_energy(pred, gt, w, c, c + 1);
        total += s / pred.channels;
      } else {
        total += detail::window_scaled_mse_over_energy(pred, gt, w, 0, pred.channels);
      }
      ++count;
    }
  return total / static_cast<double>(count);
}

inline std::size_t lmse_window_count(int height, int width, int k) {
  return window_anchors(height, k).size() * window_anchors(width, k).size();
}

// ---------------------------------------------------------------------------
// SSIM / DSSIM. 11x11 Gaussian window (sigma 1.5), symmetric border
// reflection, K1 = 0.01, K2 = 0.03. The dynamic range L is taken from the
// combined range of both inputs (floor 1e-6) so the score is symmetric.
// ---------------------------------------------------------------------------

namespace detail {

inline const std::vector<double>& ssim_gaussian_kernel() {
  static const std::vector<double> kernel = [] {
    std::vector<double> k(11);
    double sum = 0.0;
    for (int i = 0; i < 11; ++i) {
      const double d = i - 5;
      k[i] = std::exp(-d * d / (2.0 * 1.5 * 1.5));
      sum += k[i];
    }
    for (double& v : k) v /= sum;
    return k;
  }();
  return kernel;
}

inline int reflect_index(int i, int n) {
  while (i < 0 || i >= n) {
    if (i < 0) i = -i - 1;
    if (i >= n) i = 2 * n - 1 - i;
  }
  return i;
}

// Separable Gaussian blur of one channel, symmetric reflection at borders.
inline std::vector<double> ssim_blur(const std::vector<double>& src, int h, int w) {
  const auto& k = ssim_gaussian_kernel();
  std::vector<double> tmp(src.size()), out(src.size());
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double s = 0.0;
      for (int t = 0; t < 11; ++t) s += k[t] * src[y * w + reflect_index(x + t - 5, w)];
      tmp[y * w + x] = s;
    }
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double s = 0.0;
      for (int t = 0; t < 11; ++t) s += k[t] * tmp[reflect_index(y + t - 5, h) * w + x];
      out[y * w + x] = s;
    }
  return out;
}

}  // namespace detail

/// Mean local structural similarity, in [-1, 1]; channel scores averaged.
inline double ssim(const Image& pred, const Image& gt) {
  if (!pred.same_shape(gt))
    throw DimensionError("ssim: shapes differ, " + shape_str(pred) + " vs " + shape_str(gt));
  const double range = std::max<double>(
      1e-6, std::max(pred.max_value(), gt.max_value()) -
                std::min(pred.min_value(), gt.min_value()));
  const double c1 = (0.01 * range) * (0.01 * range);
  const double c2 = (0.03 * range) * (0.03 * range);
  const int h = pred.height, w = pred.width;
  const std::size_t n = static_cast<std::size_t>(h) * w;

  double channel_sum = 0.0;
  std::vector<double> x(n), y(n), xx(n), yy(n), xy(n);
  for (int c = 0; c < pred.channels; ++c) {
    for (int i = 0; i < h; ++i)
      for (int j = 0; j < w; ++j) {
        const double a = pred.at(i, j, c), b = gt.at(i, j, c);
        const std::size_t idx = static_cast<std::size_t>(i) * w + j;
        x[idx] = a;
        y[idx] = b;
        xx[idx] = a * a;
        yy[idx] = b * b;
        xy[idx] = a * b;
      }
    const auto mx = detail::ssim_blur(x, h, w);
    const auto my = detail::ssim_blur(y, h, w);
    const auto mxx = detail::ssim_blur(xx, h, w);
    const auto myy = detail::ssim_blur(yy, h, w);
    const auto mxy = detail::ssim_blur(xy, h, w);
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double vx = mxx[i] - mx[i] * mx[i];
      const double vy = myy[i] - my[i] * my[i];
      const double cov = mxy[i] - mx[i] * my[i];
      acc += ((2.0 * mx[i] * my[i] + c1) * (2.0 * cov + c2)) /
             ((mx[i] * mx[i] + my[i] * my[i] + c1) * (vx + vy + c2));
    }
    channel_sum += acc / static_cast<double>(n);
  }
  return channel_sum / pred.channels;
}

/// Structural dissimilarity: (1 - ssim) / 2, in [0, 1].
inline double dssim(const Image& pred, const Image& gt) { return (1.0 - ssim(pred, gt)) / 2.0; }

// ---------------------------------------------------------------------------
// Set-level aggregation.
// ---------------------------------------------------------------------------

struct MetricRow {
  std::string name;
  double mse_r = 0, mse_s = 0, lmse_r = 0, lmse_s = 0, dssim_r = 0, dssim_s = 0;
};

struct MetricReport {
  double mse_albedo = 0, mse_shading = 0;
  double lmse_albedo = 0, lmse_shading = 0, lmse_mean = 0;
  double dssim_albedo = 0, dssim_shading = 0;
  std::size_t image_count = 0;
  std::vector<MetricRow> rows;
};

namespace detail {
inline MetricRow score_pair(const IntrinsicSet& pred, const IntrinsicSet& gt,
                            const WindowSpec& w, bool lmse_per_channel) {
  MetricRow row;
  const Image& pr = pred.reflectance;
  const Image& gr = gt.reflectance;
  const int sc = std::max(pred.shading.channels, gt.shading.channels);
  const Image ps = broadcast_channels(pred.shading, sc);
  const Image gs = broadcast_channels(gt.shading, sc);
  row.mse_r = scaled_mse(pr, gr);
  row.mse_s = scaled_mse(ps, gs);
  row.lmse_r = lmse(pr, gr, w, lmse_per_channel);
  row.lmse_s = lmse(ps, gs, w, lmse_per_channel);
  row.dssim_r = dssim(pr, gr);
  row.dssim_s = dssim(ps, gs);
  return row;
}
}  // namespace detail

/// Per-image metrics averaged arithmetically over the set.
inline MetricReport evaluate_set(const std::vector<IntrinsicSet>& predictions,
                                 const std::vector<IntrinsicSet>& ground_truths,
                                 const WindowSpec& w = {}, bool lmse_per_channel = false,
                                 const std::vector<std::string>& names = {}) {
  if (predictions.size() != ground_truths.size())
    throw UsageError("evaluate_set: list length mismatch, " +
                     std::to_string(predictions.size()) + " vs " +
                     std::to_string(ground_truths.size()));
  MetricReport rep;
  rep.image_count = predictions.size();
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    MetricRow row = detail::score_pair(predictions[i], ground_truths[i], w, lmse_per_channel);
    row.name = i < names.size() ? names[i] : "image_" + std::to_string(i);
    rep.mse_albedo += row.mse_r;
    rep.mse_shading += row.mse_s;
    rep.lmse_albedo += row.lmse_r;
    rep.lmse_shading += row.lmse_s;
    rep.dssim_albedo += row.dssim_r;
    rep.dssim_shading += row.dssim_s;
    rep.rows.push_back(std::move(row));
  }
  if (rep.image_count > 0) {
    const double n = static_cast<double>(rep.image_count);
    rep.mse_albedo /= n;
    rep.mse_shading /= n;
    rep.lmse_albedo /= n;
    rep.lmse_shading /= n;
    rep.dssim_albedo /= n;
    rep.dssim_shading /= n;
  }
  rep.lmse_mean = (rep.lmse_albedo + rep.lmse_shading) / 2.0;
  return rep;
}

inline void write_metric_csv(const std::filesystem::path& path, const MetricReport& rep) {
  std::ofstream f(path);
  if (!f) throw IoError("write_metric_csv: cannot open " + path.string());
  f << "image,mse_r,mse_s,lmse_r,lmse_s,dssim_r,dssim_s\n";
  char line[512];
  auto emit = [&](const std::string& name, double a, double b, double c, double d, double e,
                  double g) {
    std::snprintf(line, sizeof(line), "%s,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g\n", name.c_str(), a, b,
                  c, d, e, g);
    f << line;
  };
  for (const MetricRow& r : rep.rows)
    emit(r.name, r.mse_r, r.mse_s, r.lmse_r, r.lmse_s, r.dssim_r, r.dssim_s);
  emit("MEAN", rep.mse_albedo, rep.mse_shading, rep.lmse_albedo, rep.lmse_shading,
       rep.dssim_albedo, rep.dssim_shading);
}

}  // namespace intrinsic
