#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "intrinsic/errors.hpp"

namespace intrinsic {

/// Linear-light raster, interleaved row-major storage: index varies fastest
/// over channel, then column, then row. Image data is conventionally finite
/// and non-negative (linear HDR, no gamma); gradient fields reuse the same
/// container with signed values.
struct Image {
  int height = 0;
  int width = 0;
  int channels = 0;
  std::vector<float> data;

  Image() = default;
  Image(int h, int w, int c, float fill = 0.0f)
      : height(h), width(w), channels(c),
        data(static_cast<std::size_t>(h) * w * c, fill) {}

  float& at(int y, int x, int c) {
    return data[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }
  float at(int y, int x, int c) const {
    return data[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }

  std::size_t size() const { return data.size(); }
  bool empty() const { return data.empty(); }

  bool same_extent(const Image& o) const { return height == o.height && width == o.width; }
  bool same_shape(const Image& o) const {
    return same_extent(o) && channels == o.channels;
  }

  bool all_finite() const {
    for (float v : data)
      if (!std::isfinite(v)) return false;
    return true;
  }
  bool all_nonnegative() const {
    for (float v : data)
      if (v < 0.0f) return false;
    return true;
  }

  float max_value() const {
    float m = data.empty() ? 0.0f : data[0];
    for (float v : data) m = std::max(m, v);
    return m;
  }
  float min_value() const {
    float m = data.empty() ? 0.0f : data[0];
    for (float v : data) m = std::min(m, v);
    return m;
  }
};

inline std::string shape_str(const Image& im) {
  return std::to_string(im.height) + "x" + std::to_string(im.width) + "x" +
         std::to_string(im.channels);
}

namespace detail {
inline void require_broadcastable(const Image& a, const Image& b, const char* op) {
  if (!a.same_extent(b) || (b.channels != a.channels && b.channels != 1))
    throw DimensionError(std::string(op) + ": incompatible shapes " + shape_str(a) +
                         " vs " + shape_str(b));
}
}  // namespace detail

/// Broadcasts a 1-channel image to n channels (no-op when already n).
inline Image broadcast_channels(const Image& im, int channels) {
  if (im.channels == channels) return im;
  if (im.channels != 1)
    throw DimensionError("broadcast_channels: can only broadcast from 1 channel");
  Image out(im.height, im.width, channels);
  for (int y = 0; y < im.height; ++y)
    for (int x = 0; x < im.width; ++x)
      for (int c = 0; c < channels; ++c) out.at(y, x, c) = im.at(y, x, 0);
  return out;
}

/// Light-source color: either one RGB triple for the whole image or a
/// per-pixel 3-channel map.
using Illuminant = std::variant<std::array<float, 3>, Image>;

/// One image's intrinsic components. Shading with a single channel is
/// broadcast across color channels during composition.
struct IntrinsicSet {
  Image reflectance;            // 3-channel, values in [0,1]
  Image shading;                // 1- or 3-channel, >= 0
  std::optional<Image> specular;
  std::optional<Illuminant> illuminant;
};

/// Per-channel forward-difference gradients. The last column of gx and last
/// row of gy are zero so the field stays the same shape as its source.
struct GradientField {
  Image gx;         // signed
  Image gy;         // signed
  Image magnitude;  // sqrt(gx^2 + gy^2), per channel
};

/// Diffuse composition: output = reflectance * shading, element-wise.
inline Image compose_diffuse(const Image& reflectance, const Image& shading) {
  detail::require_broadcastable(reflectance, shading, "compose_diffuse");
  Image out(reflectance.height, reflectance.width, reflectance.channels);
  const bool bcast = shading.channels == 1;
  for (int y = 0; y < out.height; ++y)
    for (int x = 0; x < out.width; ++x)
      for (int c = 0; c < out.channels; ++c)
        out.at(y, x, c) = reflectance.at(y, x, c) * shading.at(y, x, bcast ? 0 : c);
  return out;
}

namespace detail {
inline void apply_illuminant(Image& im, const Illuminant& illuminant) {
  if (const auto* global = std::get_if<std::array<float, 3>>(&illuminant)) {
    for (float e : *global)
      if (!(e > 0.0f)) throw DomainError("illuminant: global channels must be positive");
    if (im.channels != 3)
      throw DimensionError("illuminant: global triple needs a 3-channel image");
    for (int y = 0; y < im.height; ++y)
      for (int x = 0; x < im.width; ++x)
        for (int c = 0; c < 3; ++c) im.at(y, x, c) *= (*global)[c];
  } else {
    const Image& e = std::get<Image>(illuminant);
    require_broadcastable(im, e, "illuminant");
    const bool bcast = e.channels == 1;
    for (int y = 0; y < im.height; ++y)
      for (int x = 0; x < im.width; ++x)
        for (int c = 0; c < im.channels; ++c) im.at(y, x, c) *= e.at(y, x, bcast ? 0 : c);
  }
}
}  // namespace detail

/// Composition under a non-canonical light source: reflectance * shading * E.
inline Image compose_with_light(const Image& reflectance, const Image& shading,
                                const Illuminant& illuminant) {
  Image out = compose_diffuse(reflectance, shading);
  detail::apply_illuminant(out, illuminant);
  return out;
}

/// Dichromatic composition with an additive specular term. Without an
/// illuminant: R*S + H. With one: R*S*E + H*E.
inline Image compose_specular(const Image& reflectance, const Image& shading,
                              const Image& specular,
                              const std::optional<Illuminant>& illuminant = std::nullopt) {
  detail::require_broadcastable(reflectance, specular, "compose_specular");
  Image body = illuminant ? compose_with_light(reflectance, shading, *illuminant)
                          : compose_diffuse(reflectance, shading);
  Image surface = broadcast_channels(specular, body.channels);
  if (illuminant) detail::apply_illuminant(surface, *illuminant);
  for (std::size_t i = 0; i < body.data.size(); ++i) body.data[i] += surface.data[i];
  return body;
}

/// Inverse of the diffuse composition with a documented clamp:
/// S = I / max(R, epsilon).
inline Image derive_shading(const Image& image, const Image& reflectance, float epsilon = 1e-4f) {
  if (!image.same_shape(reflectance))
    throw DimensionError("derive_shading: shapes differ, " + shape_str(image) + " vs " +
                         shape_str(reflectance));
  if (!(epsilon > 0.0f)) throw DomainError("derive_shading: epsilon must be > 0");
  Image out(image.height, image.width, image.channels);
  for (std::size_t i = 0; i < out.data.size(); ++i)
    out.data[i] = image.data[i] / std::max(reflectance.data[i], epsilon);
  return out;
}

/// Forward differences per channel, zero at the last column/row; magnitude is
/// the per-element square root of the sum of squares.
inline GradientField gradient(const Image& image) {
  if (image.height < 2 || image.width < 2)
    throw DimensionError("gradient: image must be at least 2x2, got " + shape_str(image));
  GradientField g;
  g.gx = Image(image.height, image.width, image.channels);
  g.gy = Image(image.height, image.width, image.channels);
  g.magnitude = Image(image.height, image.width, image.channels);
  for (int y = 0; y < image.height; ++y)
    for (int x = 0; x < image.width; ++x)
      for (int c = 0; c < image.channels; ++c) {
        const float v = image.at(y, x, c);
        const float dx = (x + 1 < image.width) ? image.at(y, x + 1, c) - v : 0.0f;
        const float dy = (y + 1 < image.height) ? image.at(y + 1, x, c) - v : 0.0f;
        g.gx.at(y, x, c) = dx;
        g.gy.at(y, x, c) = dy;
        g.magnitude.at(y, x, c) = std::sqrt(dx * dx + dy * dy);
      }
  return g;
}

/// Stacks images channel-wise in argument order.
inline Image concat_channels(const std::vector<Image>& images) {
  if (images.empty()) throw UsageError("concat_channels: empty input list");
  int channels = 0;
  for (const Image& im : images) {
    if (!im.same_extent(images.front()))
      throw DimensionError("concat_channels: extent mismatch, " + shape_str(im) + " vs " +
                           shape_str(images.front()));
    channels += im.channels;
  }
  Image out(images.front().height, images.front().width, channels);
  for (int y = 0; y < out.height; ++y)
    for (int x = 0; x < out.width; ++x) {
      int c0 = 0;
      for (const Image& im : images) {
        for (int c = 0; c < im.channels; ++c) out.at(y, x, c0 + c) = im.at(y, x, c);
        c0 += im.channels;
      }
    }
  return out;
}

/// Preview encoding: clamp to [0,1], then gamma-compress. Ground truth stays
/// linear; this is only for 8-bit previews.
inline Image to_display(const Image& image, float gamma = 2.2f) {
  if (!(gamma > 0.0f)) throw DomainError("to_display: gamma must be > 0");
  Image out(image.height, image.width, image.channels);
  const float inv_gamma = 1.0f / gamma;
  for (std::size_t i = 0; i < out.data.size(); ++i) {
    float v = std::min(std::max(image.data[i], 0.0f), 1.0f);
    out.data[i] = (gamma == 1.0f) ? v : std::pow(v, inv_gamma);
  }
  return out;
}

}  // namespace intrinsic
