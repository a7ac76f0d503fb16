#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "amdprep/geometry.hpp"

namespace amdprep {

/// Owned 8-bit raster, 1 (grayscale) or 3 (RGB) channels, row-major and
/// channel-interleaved.
class ImageBuffer {
public:
  /// Zero-filled image.
  ImageBuffer(int width, int height, int channels);
  ImageBuffer(int width, int height, int channels, std::vector<std::uint8_t> data);

  int width() const noexcept { return width_; }
  int height() const noexcept { return height_; }
  int channels() const noexcept { return channels_; }

  std::span<const std::uint8_t> data() const noexcept { return data_; }
  std::span<std::uint8_t> data() noexcept { return data_; }

  std::uint8_t at(int x, int y, int c = 0) const noexcept { return data_[index(x, y, c)]; }
  std::uint8_t& at(int x, int y, int c = 0) noexcept { return data_[index(x, y, c)]; }

  friend bool operator==(const ImageBuffer&, const ImageBuffer&) = default;

private:
  std::size_t index(int x, int y, int c) const noexcept {
    return (static_cast<std::size_t>(y) * static_cast<std::size_t>(width_) +
            static_cast<std::size_t>(x)) * static_cast<std::size_t>(channels_) +
           static_cast<std::size_t>(c);
  }

  int width_;
  int height_;
  int channels_;
  std::vector<std::uint8_t> data_;
};

/// Per-pixel lesion probability in [0, 1].
class ProbabilityMap {
public:
  ProbabilityMap(int width, int height, std::vector<double> values);

  /// Grayscale 8-bit image read as value / 255.
  static ProbabilityMap from_gray(const ImageBuffer& img);

  int width() const noexcept { return width_; }
  int height() const noexcept { return height_; }
  std::span<const double> values() const noexcept { return values_; }
  double at(int x, int y) const noexcept {
    return values_[static_cast<std::size_t>(y) * static_cast<std::size_t>(width_) +
                   static_cast<std::size_t>(x)];
  }

private:
  int width_;
  int height_;
  std::vector<double> values_;
};

/// true = lesion.
class BinaryMask {
public:
  BinaryMask(int width, int height);
  BinaryMask(int width, int height, std::vector<std::uint8_t> bits);

  /// Grayscale image whose pixels are exactly 0 or 255; anything else throws
  /// Error(InvalidImage) with the invariant "mask values must be 0 or 255".
  static BinaryMask from_gray(const ImageBuffer& img);
  /// {0, 255} grayscale rendering.
  ImageBuffer to_gray() const;

  int width() const noexcept { return width_; }
  int height() const noexcept { return height_; }
  std::span<const std::uint8_t> bits() const noexcept { return bits_; }

  bool at(int x, int y) const noexcept { return bits_[index(x, y)] != 0; }
  void set(int x, int y, bool value) noexcept { bits_[index(x, y)] = value ? 1 : 0; }

  std::size_t count() const noexcept;
  bool empty() const noexcept { return count() == 0; }

  friend bool operator==(const BinaryMask&, const BinaryMask&) = default;

private:
  std::size_t index(int x, int y) const noexcept {
    return static_cast<std::size_t>(y) * static_cast<std::size_t>(width_) +
           static_cast<std::size_t>(x);
  }

  int width_;
  int height_;
  std::vector<std::uint8_t> bits_;
};

struct Rgb {
  std::uint8_t r = 0;
  std::uint8_t g = 0;
  std::uint8_t b = 0;
};

inline constexpr Rgb kDefaultTint{255, 0, 0};
inline constexpr double kDefaultOverlayAlpha = 0.4;

/// Round-half-up to [0, 255].
std::uint8_t to_u8(double v) noexcept;

/// Inverse-mapped warp: output (x, y) is the bilinear sample of `src` at
/// invert(t)(x, y). Neighbours outside `src` contribute black.
ImageBuffer warp(const ImageBuffer& src, const SimilarityTransform& t, int out_width, int out_height);

/// Per-channel CDF remap v' = round((cdf(v) - cdf_min) / (N - cdf_min) * 255).
/// Constant channels pass through unchanged.
ImageBuffer equalize_histogram(const ImageBuffer& img);

/// The similarity that center_crop_scale applies: uniform scale so that the
/// image covers the requested frame, then a centred crop.
SimilarityTransform normalization_transform(int width, int height, int out_width, int out_height);

ImageBuffer center_crop_scale(const ImageBuffer& img, int out_width, int out_height);

/// bit = value >= threshold. Threshold outside [0, 1] -> Error(InvalidThreshold).
BinaryMask binarize(const ProbabilityMap& map, double threshold);

/// Blends masked pixels toward `tint`: round((1 - alpha) * pixel + alpha * tint).
ImageBuffer overlay(const ImageBuffer& rgb, const BinaryMask& mask, Rgb tint = kDefaultTint,
                    double alpha = kDefaultOverlayAlpha);

/// Replicates a grayscale image into 3 channels; RGB input is returned as is.
ImageBuffer to_rgb(const ImageBuffer& img);

}  // namespace amdprep
