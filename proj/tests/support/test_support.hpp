#pragma once

// Shared helpers for the unit and acceptance suites: deterministic random
// generators, scratch directories and synthetic images.

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <numbers>
#include <random>
#include <string>

#include <unistd.h>

#include "amdprep/geometry.hpp"
#include "amdprep/raster.hpp"

namespace amdprep::testing {

/// Bit-level uniform draws so values are identical across standard libraries.
class Rng {
public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  int integer(int lo, int hi) {  // inclusive
    return lo + static_cast<int>(engine_() % static_cast<std::uint64_t>(hi - lo + 1));
  }
  bool coin(double p = 0.5) { return uniform() < p; }
  double gaussian() {
    // Box-Muller
    const double u1 = std::max(uniform(), 1e-300);
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }
  std::mt19937_64& engine() { return engine_; }

private:
  std::mt19937_64 engine_;
};

class ScratchDir {
public:
  explicit ScratchDir(const std::string& tag) {
    static int counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("amdprep-" + tag + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~ScratchDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  ScratchDir(const ScratchDir&) = delete;
  ScratchDir& operator=(const ScratchDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& p) const { return path_ / p; }

private:
  std::filesystem::path path_;
};

inline SimilarityTransform random_transform(Rng& rng, double max_translation = 500.0) {
  const double scale = rng.uniform(0.5, 2.0);
  double rotation = rng.uniform(-std::numbers::pi, std::numbers::pi);
  if (rotation == -std::numbers::pi) rotation = std::numbers::pi;
  // Uniform in the disc of radius max_translation.
  const double r = max_translation * std::sqrt(rng.uniform());
  const double a = rng.uniform(0.0, 2.0 * std::numbers::pi);
  return SimilarityTransform(scale, rotation, r * std::cos(a), r * std::sin(a));
}

/// Smooth RGB test pattern: low-frequency gradients and sinusoids.
inline ImageBuffer smooth_image(int width, int height, int channels = 3) {
  ImageBuffer img(width, height, channels);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      const double u = static_cast<double>(x) / width;
      const double v = static_cast<double>(y) / height;
      const double base[3] = {40.0 + 170.0 * u, 40.0 + 170.0 * v,
                              128.0 + 60.0 * std::sin(2.0 * std::numbers::pi * (u + 0.5 * v))};
      for (int c = 0; c < channels; ++c) img.at(x, y, c) = to_u8(base[c]);
    }
  }
  return img;
}

inline ImageBuffer random_image(Rng& rng, int width, int height, int channels) {
  ImageBuffer img(width, height, channels);
  for (auto& v : img.data()) v = static_cast<std::uint8_t>(rng.integer(0, 255));
  return img;
}

inline BinaryMask random_mask(Rng& rng, int width, int height, double p = 0.5) {
  BinaryMask m(width, height);
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x) m.set(x, y, rng.coin(p));
  return m;
}

inline BinaryMask disc_mask(int width, int height, double cx, double cy, double r) {
  BinaryMask m(width, height);
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x) m.set(x, y, (x - cx) * (x - cx) + (y - cy) * (y - cy) <= r * r);
  return m;
}

inline ProbabilityMap random_map(Rng& rng, int width, int height) {
  std::vector<double> v(static_cast<std::size_t>(width) * static_cast<std::size_t>(height));
  for (auto& x : v) x = rng.uniform();
  return ProbabilityMap(width, height, std::move(v));
}

inline ProbabilityMap constant_map(int width, int height, double value) {
  return ProbabilityMap(width, height,
                        std::vector<double>(static_cast<std::size_t>(width) * static_cast<std::size_t>(height), value));
}

}  // namespace amdprep::testing
