#include "amdprep/raster.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <string>

#include "amdprep/error.hpp"

namespace amdprep {

namespace {

void check_dims(int width, int height) {
  if (width < 1 || height < 1) {
    throw Error(Errc::InvalidImage, "image dimensions must be at least 1x1, got " +
                                        std::to_string(width) + "x" + std::to_string(height));
  }
}

std::size_t pixel_count(int width, int height) {
  return static_cast<std::size_t>(width) * static_cast<std::size_t>(height);
}

}  // namespace

ImageBuffer::ImageBuffer(int width, int height, int channels)
    : ImageBuffer(width, height, channels,
                  std::vector<std::uint8_t>(pixel_count(std::max(width, 0), std::max(height, 0)) *
                                            static_cast<std::size_t>(std::max(channels, 0)))) {}

ImageBuffer::ImageBuffer(int width, int height, int channels, std::vector<std::uint8_t> data)
    : width_(width), height_(height), channels_(channels), data_(std::move(data)) {
  check_dims(width, height);
  if (channels != 1 && channels != 3) {
    throw Error(Errc::InvalidImage,
                "images must have 1 or 3 channels, got " + std::to_string(channels));
  }
  if (data_.size() != pixel_count(width, height) * static_cast<std::size_t>(channels)) {
    throw Error(Errc::InvalidImage, "image data length does not match width*height*channels");
  }
}

ProbabilityMap::ProbabilityMap(int width, int height, std::vector<double> values)
    : width_(width), height_(height), values_(std::move(values)) {
  check_dims(width, height);
  if (values_.size() != pixel_count(width, height)) {
    throw Error(Errc::InvalidImage, "probability map length does not match width*height");
  }
  for (double v : values_) {
    if (!(v >= 0.0 && v <= 1.0)) {
      throw Error(Errc::InvalidImage, "probability values must lie in [0, 1]");
    }
  }
}

ProbabilityMap ProbabilityMap::from_gray(const ImageBuffer& img) {
  if (img.channels() != 1) {
    throw Error(Errc::InvalidImage, "probability maps must be single-channel grayscale");
  }
  std::vector<double> values(img.data().size());
  std::transform(img.data().begin(), img.data().end(), values.begin(),
                 [](std::uint8_t v) { return static_cast<double>(v) / 255.0; });
  return ProbabilityMap(img.width(), img.height(), std::move(values));
}

BinaryMask::BinaryMask(int width, int height)
    : BinaryMask(width, height,
                 std::vector<std::uint8_t>(pixel_count(std::max(width, 0), std::max(height, 0)))) {}

BinaryMask::BinaryMask(int width, int height, std::vector<std::uint8_t> bits)
    : width_(width), height_(height), bits_(std::move(bits)) {
  check_dims(width, height);
  if (bits_.size() != pixel_count(width, height)) {
    throw Error(Errc::InvalidImage, "mask length does not match width*height");
  }
  for (auto& b : bits_) b = b != 0 ? 1 : 0;
}

BinaryMask BinaryMask::from_gray(const ImageBuffer& img) {
  if (img.channels() != 1) {
    throw Error(Errc::InvalidImage, "mask must be grayscale", "mask must be grayscale");
  }
  std::vector<std::uint8_t> bits(img.data().size());
  for (std::size_t i = 0; i < bits.size(); ++i) {
    const auto v = img.data()[i];
    if (v != 0 && v != 255) {
      throw Error(Errc::InvalidImage, "mask values must be 0 or 255", "mask values must be 0 or 255");
    }
    bits[i] = v == 255 ? 1 : 0;
  }
  return BinaryMask(img.width(), img.height(), std::move(bits));
}

ImageBuffer BinaryMask::to_gray() const {
  std::vector<std::uint8_t> data(bits_.size());
  std::transform(bits_.begin(), bits_.end(), data.begin(),
                 [](std::uint8_t b) { return static_cast<std::uint8_t>(b ? 255 : 0); });
  return ImageBuffer(width_, height_, 1, std::move(data));
}

std::size_t BinaryMask::count() const noexcept {
  return static_cast<std::size_t>(std::count(bits_.begin(), bits_.end(), std::uint8_t{1}));
}

std::uint8_t to_u8(double v) noexcept {
  const double r = std::floor(v + 0.5);
  if (!(r > 0.0)) return 0;
  if (r >= 255.0) return 255;
  return static_cast<std::uint8_t>(r);
}

ImageBuffer warp(const ImageBuffer& src, const SimilarityTransform& t, int out_width, int out_height) {
  check_dims(out_width, out_height);
  const SimilarityTransform inv = invert(t);
  const double a = inv.scale() * std::cos(inv.rotation());
  const double b = inv.scale() * std::sin(inv.rotation());
  const int channels = src.channels();
  const int w = src.width();
  const int h = src.height();

  ImageBuffer out(out_width, out_height, channels);
  for (int y = 0; y < out_height; ++y) {
    for (int x = 0; x < out_width; ++x) {
      const double sx = inv.tx() + a * x - b * y;
      const double sy = inv.ty() + b * x + a * y;
      const double fx0 = std::floor(sx);
      const double fy0 = std::floor(sy);
      if (fx0 < -1.0 || fy0 < -1.0 || fx0 >= w || fy0 >= h) continue;  // black
      const int x0 = static_cast<int>(fx0);
      const int y0 = static_cast<int>(fy0);
      const double fx = sx - fx0;
      const double fy = sy - fy0;
      const std::array<double, 4> weights{(1 - fx) * (1 - fy), fx * (1 - fy), (1 - fx) * fy, fx * fy};
      const std::array<int, 4> xs{x0, x0 + 1, x0, x0 + 1};
      const std::array<int, 4> ys{y0, y0, y0 + 1, y0 + 1};
      for (int c = 0; c < channels; ++c) {
        double acc = 0.0;
        for (int k = 0; k < 4; ++k) {
          if (weights[k] == 0.0) continue;
          if (xs[k] < 0 || ys[k] < 0 || xs[k] >= w || ys[k] >= h) continue;
          acc += weights[k] * src.at(xs[k], ys[k], c);
        }
        out.at(x, y, c) = to_u8(acc);
      }
    }
  }
  return out;
}

ImageBuffer equalize_histogram(const ImageBuffer& img) {
  ImageBuffer out = img;
  const int channels = img.channels();
  const std::size_t n = pixel_count(img.width(), img.height());
  const auto src = img.data();
  auto dst = out.data();

  for (int c = 0; c < channels; ++c) {
    std::array<std::size_t, 256> cdf{};
    for (std::size_t i = static_cast<std::size_t>(c); i < src.size(); i += static_cast<std::size_t>(channels)) {
      ++cdf[src[i]];
    }
    std::size_t cdf_min = 0;
    for (std::size_t v = 0, running = 0; v < 256; ++v) {
      running += cdf[v];
      if (cdf_min == 0 && running > 0) cdf_min = running;
      cdf[v] = running;
    }
    if (cdf_min == n) continue;  // single-valued channel

    std::array<std::uint8_t, 256> lut{};
    const double denom = static_cast<double>(n - cdf_min);
    for (std::size_t v = 0; v < 256; ++v) {
      const double num = cdf[v] >= cdf_min ? static_cast<double>(cdf[v] - cdf_min) : 0.0;
      lut[v] = to_u8(num / denom * 255.0);
    }
    for (std::size_t i = static_cast<std::size_t>(c); i < src.size(); i += static_cast<std::size_t>(channels)) {
      dst[i] = lut[src[i]];
    }
  }
  return out;
}

SimilarityTransform normalization_transform(int width, int height, int out_width, int out_height) {
  check_dims(width, height);
  check_dims(out_width, out_height);
  const double f = std::max(static_cast<double>(out_width) / width,
                            static_cast<double>(out_height) / height);
  const long scaled_w = std::lround(width * f);
  const long scaled_h = std::lround(height * f);
  const double off_x = static_cast<double>((scaled_w - out_width) / 2);
  const double off_y = static_cast<double>((scaled_h - out_height) / 2);
  // Pixel centres: x' = f * (x + 1/2) - 1/2 - offset.
  return SimilarityTransform(f, 0.0, 0.5 * f - 0.5 - off_x, 0.5 * f - 0.5 - off_y);
}

ImageBuffer center_crop_scale(const ImageBuffer& img, int out_width, int out_height) {
  return warp(img, normalization_transform(img.width(), img.height(), out_width, out_height),
              out_width, out_height);
}

BinaryMask binarize(const ProbabilityMap& map, double threshold) {
  if (!(threshold >= 0.0 && threshold <= 1.0)) {
    throw Error(Errc::InvalidThreshold,
                "threshold must lie in [0, 1], got " + std::to_string(threshold));
  }
  std::vector<std::uint8_t> bits(map.values().size());
  std::transform(map.values().begin(), map.values().end(), bits.begin(),
                 [threshold](double v) { return static_cast<std::uint8_t>(v >= threshold); });
  return BinaryMask(map.width(), map.height(), std::move(bits));
}

ImageBuffer overlay(const ImageBuffer& rgb, const BinaryMask& mask, Rgb tint, double alpha) {
  if (rgb.channels() != 3) {
    throw Error(Errc::InvalidImage, "overlay needs a 3-channel RGB image");
  }
  if (mask.width() != rgb.width() || mask.height() != rgb.height()) {
    throw Error(Errc::DimensionMismatch, "mask and image dimensions differ");
  }
  if (!(alpha >= 0.0 && alpha <= 1.0)) {
    throw Error(Errc::InvalidArgument, "overlay alpha must lie in [0, 1]");
  }
  ImageBuffer out = rgb;
  const std::array<double, 3> tint_v{static_cast<double>(tint.r), static_cast<double>(tint.g),
                                     static_cast<double>(tint.b)};
  for (int y = 0; y < rgb.height(); ++y) {
    for (int x = 0; x < rgb.width(); ++x) {
      if (!mask.at(x, y)) continue;
      for (int c = 0; c < 3; ++c) {
        out.at(x, y, c) = to_u8((1.0 - alpha) * rgb.at(x, y, c) + alpha * tint_v[c]);
      }
    }
  }
  return out;
}

ImageBuffer to_rgb(const ImageBuffer& img) {
  if (img.channels() == 3) return img;
  ImageBuffer out(img.width(), img.height(), 3);
  const auto src = img.data();
  auto dst = out.data();
  for (std::size_t i = 0; i < src.size(); ++i) {
    dst[3 * i] = dst[3 * i + 1] = dst[3 * i + 2] = src[i];
  }
  return out;
}

}  // namespace amdprep
