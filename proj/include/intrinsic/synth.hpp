#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "intrinsic/errors.hpp"
#include "intrinsic/image.hpp"
#include "intrinsic/image_io.hpp"
#include "intrinsic/rng.hpp"

namespace intrinsic {

/// Which composition equation a sample is built with.
enum class Formation { Diffuse, GlobalLight, Specular, Full };

inline std::string to_string(Formation f) {
  switch (f) {
    case Formation::Diffuse: return "diffuse";
    case Formation::GlobalLight: return "global_light";
    case Formation::Specular: return "specular";
    case Formation::Full: return "full";
  }
  return "diffuse";
}

inline Formation formation_from_string(const std::string& s) {
  if (s == "diffuse") return Formation::Diffuse;
  if (s == "global_light") return Formation::GlobalLight;
  if (s == "specular") return Formation::Specular;
  if (s == "full") return Formation::Full;
  throw UsageError("unknown formation mode '" + s + "'");
}

/// One primitive: a disk rendered as a sphere cap (analytic normals) or a
/// flat regular polygon. Later shapes paint over earlier ones.
struct ShapeSpec {
  enum class Kind { Disk, Polygon } kind = Kind::Disk;
  float cx = 0, cy = 0;   // center, pixels
  float size = 0;         // disk radius / polygon circumradius, pixels
  int polygon_sides = 4;
  float rotation = 0;     // radians, polygons only
  float cap = 0.75f;      // rim slope of the sphere cap: sin of the rim angle, in (0,1]
  std::array<float, 3> albedo{0.5f, 0.5f, 0.5f};
};

struct SceneSpec {
  std::uint64_t seed = 0;
  int canvas_height = 32, canvas_width = 32;
  std::vector<ShapeSpec> shapes;
  std::array<float, 3> background_albedo{0.5f, 0.5f, 0.5f};
  std::array<float, 3> light_direction{0, 0, 1};  // unit, z >= 0 (toward viewer)
  std::array<float, 3> light_color{1, 1, 1};
  float ambient = 0.1f;
  struct SpecularLobe {
    float strength = 0.5f;
    float exponent = 16.0f;
  };
  std::optional<SpecularLobe> specular;
  /// Smooth heightfield bumps. When present, normals come from this global
  /// field instead of the per-shape geometry, so shading is continuous
  /// everywhere (albedo edges and shading structure decouple).
  struct SmoothBump {
    float cx = 0, cy = 0, sigma = 1, amplitude = 0;
  };
  std::vector<SmoothBump> bumps;
};

struct GeneratorParams {
  int min_shapes = 2, max_shapes = 5;
  float min_size_frac = 0.12f, max_size_frac = 0.35f;  // of min(canvas h, w)
  float albedo_floor = 0.05f;
  float cap_min = 0.45f, cap_max = 0.9f;  // sphere-cap rim slope range
  float light_z_min = 0.0f, light_z_max = 1.0f;  // restricts the hemisphere band
  float ambient_min = 0.05f, ambient_max = 0.3f;
  bool decouple_shading = false;  // smooth global heightfield instead of per-shape normals
  float light_color_min = 0.5f, light_color_max = 1.0f;
  float specular_strength_min = 0.2f, specular_strength_max = 0.8f;
  float specular_exponent_min = 8.0f, specular_exponent_max = 64.0f;
};

/// Deterministic scene synthesis: same seed, same spec. Light directions are
/// uniform over the upper hemisphere; albedos uniform in [floor, 1] per
/// channel.
inline SceneSpec generate_scene(std::uint64_t seed, int canvas_height, int canvas_width,
                                const GeneratorParams& p = {}) {
  if (p.min_shapes < 0 || p.max_shapes < p.min_shapes)
    throw UsageError("generate_scene: bad shape-count range");
  Rng rng(derive_seed(seed, "scene"));
  SceneSpec spec;
  spec.seed = seed;
  spec.canvas_height = canvas_height;
  spec.canvas_width = canvas_width;

  auto rand_albedo = [&] {
    std::array<float, 3> a;
    for (float& v : a) v = static_cast<float>(rng.uniform(p.albedo_floor, 1.0));
    return a;
  };
  spec.background_albedo = rand_albedo();

  const int n_shapes = rng.uniform_int(p.min_shapes, p.max_shapes);
  const float base = static_cast<float>(std::min(canvas_height, canvas_width));
  for (int i = 0; i < n_shapes; ++i) {
    ShapeSpec s;
    s.kind = rng.bernoulli(0.6) ? ShapeSpec::Kind::Disk : ShapeSpec::Kind::Polygon;
    s.cx = static_cast<float>(rng.uniform(0.0, canvas_width));
    s.cy = static_cast<float>(rng.uniform(0.0, canvas_height));
    s.size = base * static_cast<float>(rng.uniform(p.min_size_frac, p.max_size_frac));
    s.polygon_sides = rng.uniform_int(3, 6);
    s.rotation = static_cast<float>(rng.uniform(0.0, 6.283185307179586));
    s.cap = static_cast<float>(rng.uniform(p.cap_min, p.cap_max));
    s.albedo = rand_albedo();
    spec.shapes.push_back(s);
  }

  // Uniform area measure on the z >= 0 hemisphere (optionally band-limited).
  const double z = rng.uniform(p.light_z_min, p.light_z_max);
  const double phi = rng.uniform(0.0, 6.283185307179586);
  const double r = std::sqrt(std::max(0.0, 1.0 - z * z));
  spec.light_direction = {static_cast<float>(r * std::cos(phi)),
                          static_cast<float>(r * std::sin(phi)), static_cast<float>(z)};
  for (float& v : spec.light_color)
    v = static_cast<float>(rng.uniform(p.light_color_min, p.light_color_max));
  spec.ambient = static_cast<float>(rng.uniform(p.ambient_min, p.ambient_max));
  spec.specular = SceneSpec::SpecularLobe{
      static_cast<float>(rng.uniform(p.specular_strength_min, p.specular_strength_max)),
      static_cast<float>(rng.uniform(p.specular_exponent_min, p.specular_exponent_max))};
  if (p.decouple_shading) {
    const int n_bumps = rng.uniform_int(2, 4);
    for (int i = 0; i < n_bumps; ++i) {
      SceneSpec::SmoothBump bump;
      bump.cx = static_cast<float>(rng.uniform(0.0, canvas_width));
      bump.cy = static_cast<float>(rng.uniform(0.0, canvas_height));
      bump.sigma = base * static_cast<float>(rng.uniform(0.25, 0.6));
      bump.amplitude = base * static_cast<float>(rng.uniform(0.2, 0.6)) *
                       (rng.bernoulli(0.5) ? 1.0f : -1.0f);
      spec.bumps.push_back(bump);
    }
  }
  return spec;
}

/// One training tuple. The stored image equals the composition of the stored
/// components by construction.
struct Sample {
  Image image;
  IntrinsicSet set;
  Image edge_mask;  // 1 where the albedo region changes toward the right/down neighbor
  SceneSpec spec;
  Formation formation = Formation::Diffuse;
  float max_interior_shading_gradient = 0.0f;
};

namespace detail {

inline bool point_in_polygon(const ShapeSpec& s, float px, float py) {
  // Convex regular polygon: inside iff on the inner side of every edge.
  const float step = 6.2831853071795864769f / static_cast<float>(s.polygon_sides);
  float prev_x = s.cx + s.size * std::cos(s.rotation);
  float prev_y = s.cy + s.size * std::sin(s.rotation);
  for (int i = 1; i <= s.polygon_sides; ++i) {
    const float a = s.rotation + step * static_cast<float>(i);
    const float vx = s.cx + s.size * std::cos(a);
    const float vy = s.cy + s.size * std::sin(a);
    const float cross = (vx - prev_x) * (py - prev_y) - (vy - prev_y) * (px - prev_x);
    if (cross < 0.0f) return false;
    prev_x = vx;
    prev_y = vy;
  }
  return true;
}

}  // namespace detail

/// Rasterizes a scene and composes the image with the requested formation
/// equation. Shading is the Lambertian term ambient + max(0, n.s) from
/// analytic sphere-cap normals (flat shapes use the canvas normal), stored
/// 3-channel; the specular term is a Blinn lobe for a viewer on the canvas
/// normal.
inline Sample render(const SceneSpec& spec, Formation formation) {
  const int h = spec.canvas_height, w = spec.canvas_width;
  Sample sample;
  sample.spec = spec;
  sample.formation = formation;

  std::vector<int> region(static_cast<std::size_t>(h) * w, -1);
  Image reflectance(h, w, 3);
  Image shading(h, w, 3);
  Image specular(h, w, 3);
  const auto& s = spec.light_direction;

  // Blinn half-vector for viewer v = (0,0,1).
  float hx = s[0], hy = s[1], hz = s[2] + 1.0f;
  const float hn = std::sqrt(hx * hx + hy * hy + hz * hz);
  hx /= hn;
  hy /= hn;
  hz /= hn;

  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const float px = static_cast<float>(x) + 0.5f;
      const float py = static_cast<float>(y) + 0.5f;
      int top = -1;
      for (int i = static_cast<int>(spec.shapes.size()) - 1; i >= 0; --i) {
        const ShapeSpec& sh = spec.shapes[i];
        const bool inside =
            sh.kind == ShapeSpec::Kind::Disk
                ? (px - sh.cx) * (px - sh.cx) + (py - sh.cy) * (py - sh.cy) <= sh.size * sh.size
                : detail::point_in_polygon(sh, px, py);
        if (inside) {
          top = i;
          break;
        }
      }
      region[static_cast<std::size_t>(y) * w + x] = top;

      const std::array<float, 3>& albedo =
          top < 0 ? spec.background_albedo : spec.shapes[top].albedo;
      float nx = 0.0f, ny = 0.0f, nz = 1.0f;
      if (!spec.bumps.empty()) {
        float hx = 0.0f, hy = 0.0f;  // heightfield slope
        for (const auto& bump : spec.bumps) {
          const float dx = px - bump.cx, dy = py - bump.cy;
          const float g = bump.amplitude *
                          std::exp(-(dx * dx + dy * dy) / (2.0f * bump.sigma * bump.sigma)) /
                          (bump.sigma * bump.sigma);
          hx += -dx * g;
          hy += -dy * g;
        }
        const float inv = 1.0f / std::sqrt(hx * hx + hy * hy + 1.0f);
        nx = -hx * inv;
        ny = -hy * inv;
        nz = inv;
      } else if (top >= 0 && spec.shapes[top].kind == ShapeSpec::Kind::Disk) {
        const ShapeSpec& sh = spec.shapes[top];
        nx = sh.cap * (px - sh.cx) / sh.size;
        ny = sh.cap * (py - sh.cy) / sh.size;
        nz = std::sqrt(std::max(0.0f, 1.0f - nx * nx - ny * ny));
      }
      const float lambert = std::max(0.0f, nx * s[0] + ny * s[1] + nz * s[2]);
      const float shade = spec.ambient + lambert;
      float spec_term = 0.0f;
      if (spec.specular) {
        const float ndoth = std::max(0.0f, nx * hx + ny * hy + nz * hz);
        spec_term = spec.specular->strength * std::pow(ndoth, spec.specular->exponent);
      }
      for (int c = 0; c < 3; ++c) {
        reflectance.at(y, x, c) = albedo[c];
        shading.at(y, x, c) = shade;
        specular.at(y, x, c) = spec_term;
      }
    }

  sample.set.reflectance = std::move(reflectance);
  sample.set.shading = std::move(shading);
  switch (formation) {
    case Formation::Diffuse:
      sample.image = compose_diffuse(sample.set.reflectance, sample.set.shading);
      break;
    case Formation::GlobalLight:
      sample.set.illuminant = Illuminant{spec.light_color};
      sample.image =
          compose_with_light(sample.set.reflectance, sample.set.shading, *sample.set.illuminant);
      break;
    case Formation::Specular:
      sample.set.specular = specular;
      sample.image = compose_specular(sample.set.reflectance, sample.set.shading, specular);
      break;
    case Formation::Full:
      sample.set.specular = specular;
      sample.set.illuminant = Illuminant{spec.light_color};
      sample.image = compose_specular(sample.set.reflectance, sample.set.shading, specular,
                                      sample.set.illuminant);
      break;
  }

  // Albedo boundary mask (forward neighbors, matching the gradient stencil)
  // and the smoothness bound of the shading away from those boundaries.
  sample.edge_mask = Image(h, w, 1);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const int id = region[static_cast<std::size_t>(y) * w + x];
      const bool ex = x + 1 < w && region[static_cast<std::size_t>(y) * w + x + 1] != id;
      const bool ey = y + 1 < h && region[(static_cast<std::size_t>(y) + 1) * w + x] != id;
      sample.edge_mask.at(y, x, 0) = (ex || ey) ? 1.0f : 0.0f;
    }
  const GradientField gs = gradient(sample.set.shading);
  float bound = 0.0f;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      bool near_edge = false;
      for (int dy = -1; dy <= 1 && !near_edge; ++dy)
        for (int dx = -1; dx <= 1 && !near_edge; ++dx) {
          const int yy = y + dy, xx = x + dx;
          if (yy >= 0 && yy < h && xx >= 0 && xx < w &&
              sample.edge_mask.at(yy, xx, 0) > 0.5f)
            near_edge = true;
        }
      if (!near_edge) bound = std::max(bound, gs.magnitude.at(y, x, 0));
    }
  sample.max_interior_shading_gradient = bound;
  return sample;
}

// ---------------------------------------------------------------------------
// Dataset persistence: PFM files plus a JSON manifest written last.
// ---------------------------------------------------------------------------

struct ManifestEntry {
  int id = 0;
  std::uint64_t seed = 0;
  std::string image, reflectance, shading, edge_mask;
  std::string specular;    // empty when absent
  std::string illuminant;  // empty when absent; 1x1 PFM holds a global triple
  float max_interior_shading_gradient = 0.0f;
};

struct Manifest {
  int version = 1;
  int count = 0;
  Formation formation = Formation::Diffuse;
  int canvas_height = 32, canvas_width = 32;
  std::uint64_t seed = 0;
  std::vector<ManifestEntry> samples;
};

inline std::uint64_t sample_seed(std::uint64_t dataset_seed, int index) {
  return derive_seed(dataset_seed, "sample", static_cast<std::uint64_t>(index));
}

namespace detail {
inline std::string sample_stem(int index) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "sample_%05d", index);
  return buf;
}
}  // namespace detail

inline nlohmann::json manifest_to_json(const Manifest& m) {
  nlohmann::json j;
  j["version"] = m.version;
  j["count"] = m.count;
  j["formation"] = to_string(m.formation);
  j["canvas"] = {m.canvas_height, m.canvas_width};
  j["seed"] = m.seed;
  j["samples"] = nlohmann::json::array();
  for (const auto& e : m.samples) {
    nlohmann::json je;
    je["id"] = e.id;
    je["seed"] = e.seed;
    je["image"] = e.image;
    je["reflectance"] = e.reflectance;
    je["shading"] = e.shading;
    je["edge_mask"] = e.edge_mask;
    je["specular"] = e.specular.empty() ? nlohmann::json() : nlohmann::json(e.specular);
    je["illuminant"] = e.illuminant.empty() ? nlohmann::json() : nlohmann::json(e.illuminant);
    je["max_interior_shading_gradient"] = e.max_interior_shading_gradient;
    j["samples"].push_back(je);
  }
  return j;
}

inline Manifest manifest_from_json(const nlohmann::json& j) {
  Manifest m;
  m.version = j.at("version").get<int>();
  m.count = j.at("count").get<int>();
  m.formation = formation_from_string(j.at("formation").get<std::string>());
  m.canvas_height = j.at("canvas")[0].get<int>();
  m.canvas_width = j.at("canvas")[1].get<int>();
  m.seed = j.at("seed").get<std::uint64_t>();
  for (const auto& je : j.at("samples")) {
    ManifestEntry e;
    e.id = je.at("id").get<int>();
    e.seed = je.at("seed").get<std::uint64_t>();
    e.image = je.at("image").get<std::string>();
    e.reflectance = je.at("reflectance").get<std::string>();
    e.shading = je.at("shading").get<std::string>();
    e.edge_mask = je.at("edge_mask").get<std::string>();
    if (!je.at("specular").is_null()) e.specular = je.at("specular").get<std::string>();
    if (!je.at("illuminant").is_null()) e.illuminant = je.at("illuminant").get<std::string>();
    e.max_interior_shading_gradient = je.at("max_interior_shading_gradient").get<float>();
    m.samples.push_back(std::move(e));
  }
  return m;
}

/// Generates n samples into out_dir. Per-sample seeds are derived from the
/// dataset seed and the index, so any subset regenerates independently. The
/// manifest is written last as the commit point.
inline Manifest dataset_gen(int n, std::uint64_t seed, const std::filesystem::path& out_dir,
                            Formation formation, int canvas_height, int canvas_width,
                            const GeneratorParams& params = {}) {
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  Manifest m;
  m.count = n;
  m.formation = formation;
  m.canvas_height = canvas_height;
  m.canvas_width = canvas_width;
  m.seed = seed;
  for (int i = 0; i < n; ++i) {
    const std::uint64_t si = sample_seed(seed, i);
    Sample s = render(generate_scene(si, canvas_height, canvas_width, params), formation);
    const std::string stem = detail::sample_stem(i);
    ManifestEntry e;
    e.id = i;
    e.seed = si;
    e.image = stem + "_image.pfm";
    e.reflectance = stem + "_reflectance.pfm";
    e.shading = stem + "_shading.pfm";
    e.edge_mask = stem + "_edge_mask.pfm";
    write_pfm(out_dir / e.image, s.image);
    write_pfm(out_dir / e.reflectance, s.set.reflectance);
    write_pfm(out_dir / e.shading, s.set.shading);
    write_pfm(out_dir / e.edge_mask, s.edge_mask);
    if (s.set.specular) {
      e.specular = stem + "_specular.pfm";
      write_pfm(out_dir / e.specular, *s.set.specular);
    }
    if (s.set.illuminant) {
      e.illuminant = stem + "_illuminant.pfm";
      const auto& global = std::get<std::array<float, 3>>(*s.set.illuminant);
      Image ei(1, 1, 3);
      for (int c = 0; c < 3; ++c) ei.at(0, 0, c) = global[c];
      write_pfm(out_dir / e.illuminant, ei);
    }
    e.max_interior_shading_gradient = s.max_interior_shading_gradient;
    m.samples.push_back(std::move(e));
  }
  std::ofstream f(out_dir / "manifest.json");
  if (!f) throw IoError("dataset_gen: cannot write manifest in " + out_dir.string());
  f << manifest_to_json(m).dump(2) << "\n";
  return m;
}

inline Manifest load_manifest(const std::filesystem::path& path) {
  const std::filesystem::path file =
      std::filesystem::is_directory(path) ? path / "manifest.json" : path;
  std::ifstream f(file);
  if (!f) throw IoError("load_manifest: cannot open " + file.string());
  nlohmann::json j;
  try {
    f >> j;
    return manifest_from_json(j);
  } catch (const nlohmann::json::exception& e) {
    throw IoError("load_manifest: bad manifest " + file.string() + ": " + e.what());
  }
}

/// Loads one manifest entry back into a Sample (scene spec not recovered).
inline Sample load_sample(const Manifest& m, const std::filesystem::path& dir, int index) {
  const ManifestEntry& e = m.samples.at(static_cast<std::size_t>(index));
  Sample s;
  s.formation = m.formation;
  s.image = read_pfm(dir / e.image);
  s.set.reflectance = read_pfm(dir / e.reflectance);
  s.set.shading = read_pfm(dir / e.shading);
  s.edge_mask = read_pfm(dir / e.edge_mask);
  if (!e.specular.empty()) s.set.specular = read_pfm(dir / e.specular);
  if (!e.illuminant.empty()) {
    const Image ei = read_pfm(dir / e.illuminant);
    if (ei.height == 1 && ei.width == 1 && ei.channels == 3)
      s.set.illuminant = Illuminant{std::array<float, 3>{ei.at(0, 0, 0), ei.at(0, 0, 1),
                                                         ei.at(0, 0, 2)}};
    else
      s.set.illuminant = Illuminant{ei};
  }
  s.max_interior_shading_gradient = e.max_interior_shading_gradient;
  return s;
}

inline std::vector<Sample> load_dataset(const std::filesystem::path& dir) {
  const Manifest m = load_manifest(dir);
  const std::filesystem::path base =
      std::filesystem::is_directory(dir) ? dir : dir.parent_path();
  std::vector<Sample> out;
  out.reserve(m.samples.size());
  for (int i = 0; i < static_cast<int>(m.samples.size()); ++i)
    out.push_back(load_sample(m, base, i));
  return out;
}

// ---------------------------------------------------------------------------
// Loader for externally supplied benchmark triplets, one object per name:
//   <name>-image.(pfm|png), <name>-reflectance.(pfm|png),
//   <name>-shading.(pfm|png), optional <name>-mask.png.
// PNG inputs map to [0,1]; pass a gamma to linearize display-encoded files.
// Mask pixels at zero (or zero alpha in the image file) are excluded from
// metrics by zeroing both ground truth and, later, predictions.
// ---------------------------------------------------------------------------

struct BenchmarkSample {
  std::string name;
  Image image;
  IntrinsicSet gt;
  std::optional<Image> mask;  // 1 = evaluate, 0 = ignore
};

inline std::vector<BenchmarkSample> load_benchmark(const std::filesystem::path& dir,
                                                   float png_linearize_gamma = 2.2f) {
  if (!std::filesystem::is_directory(dir))
    throw IoError("load_benchmark: not a directory: " + dir.string());
  std::vector<std::string> names;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    const std::string fn = entry.path().filename().string();
    const auto pos = fn.rfind("-image.");
    if (pos != std::string::npos) names.push_back(fn.substr(0, pos));
  }
  std::sort(names.begin(), names.end());

  auto find_part = [&](const std::string& name, const std::string& part,
                       bool required) -> std::filesystem::path {
    for (const char* ext : {".pfm", ".png"}) {
      const std::filesystem::path p = dir / (name + "-" + part + ext);
      if (std::filesystem::exists(p)) return p;
    }
    if (required)
      throw IoError("load_benchmark: missing " + (dir / (name + "-" + part + ".pfm")).string() +
                    " (or .png)");
    return {};
  };

  std::vector<BenchmarkSample> out;
  for (const std::string& name : names) {
    BenchmarkSample b;
    b.name = name;
    const auto image_path = find_part(name, "image", true);
    if (image_path.extension() == ".png") {
      PngReadResult r = read_png(image_path, png_linearize_gamma);
      b.image = std::move(r.image);
      if (r.alpha) b.mask = std::move(r.alpha);
    } else {
      b.image = read_pfm(image_path);
    }
    b.gt.reflectance = read_image(find_part(name, "reflectance", true), png_linearize_gamma);
    b.gt.shading = read_image(find_part(name, "shading", true), png_linearize_gamma);
    const auto mask_path = find_part(name, "mask", false);
    if (!mask_path.empty()) b.mask = read_image(mask_path);
    if (!b.gt.reflectance.same_extent(b.image) || !b.gt.shading.same_extent(b.image))
      throw IoError("load_benchmark: component extents differ for '" + name + "'");
    if (b.mask) {
      for (int y = 0; y < b.image.height; ++y)
        for (int x = 0; x < b.image.width; ++x)
          if (b.mask->at(y, x, 0) < 0.5f) {
            for (int c = 0; c < b.image.channels; ++c) b.image.at(y, x, c) = 0.0f;
            for (int c = 0; c < b.gt.reflectance.channels; ++c)
              b.gt.reflectance.at(y, x, c) = 0.0f;
            for (int c = 0; c < b.gt.shading.channels; ++c) b.gt.shading.at(y, x, c) = 0.0f;
          }
    }
    out.push_back(std::move(b));
  }
  return out;
}

}  // namespace intrinsic
