#pragma once

#include <unistd.h>

#include <atomic>
#include <filesystem>
#include <random>
#include <string>

#include "intrinsic/image.hpp"
#include "intrinsic/rng.hpp"

namespace testutil {

inline intrinsic::Image random_image(int h, int w, int c, std::uint64_t seed, float lo = 0.0f,
                                     float hi = 1.0f) {
  intrinsic::Rng rng(seed);
  intrinsic::Image im(h, w, c);
  for (float& v : im.data) v = static_cast<float>(rng.uniform(lo, hi));
  return im;
}

inline double max_abs_diff(const intrinsic::Image& a, const intrinsic::Image& b) {
  double m = 0;
  for (std::size_t i = 0; i < a.data.size(); ++i)
    m = std::max(m, std::abs(static_cast<double>(a.data[i]) - b.data[i]));
  return m;
}

inline bool bitwise_equal(const intrinsic::Image& a, const intrinsic::Image& b) {
  if (!a.same_shape(b)) return false;
  for (std::size_t i = 0; i < a.data.size(); ++i)
    if (a.data[i] != b.data[i]) return false;
  return true;
}

/// Unique scratch directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("intrinsic_test_" + tag + "_" + std::to_string(::getpid()) + "_" +
             std::to_string(counter++));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

}  // namespace testutil
