#include <algorithm>
#include <cmath>
#include <numbers>

#include "amdprep/error.hpp"
#include "amdprep/png_io.hpp"
#include "amdprep/raster.hpp"
#include "doctest.h"
#include "support/test_support.hpp"

using namespace amdprep;
using amdprep::testing::Rng;

namespace {

ImageBuffer gray(int w, int h, std::vector<std::uint8_t> v) { return ImageBuffer(w, h, 1, std::move(v)); }

std::vector<std::uint8_t> pixels(const ImageBuffer& img) { return {img.data().begin(), img.data().end()}; }

Errc error_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an amdprep::Error");
  return Errc::InvalidArgument;
}

// Textbook bilinear sample, black outside.
double ref_sample(const ImageBuffer& img, double x, double y, int c) {
  const double fx = std::floor(x), fy = std::floor(y);
  const int x0 = static_cast<int>(fx), y0 = static_cast<int>(fy);
  const double ax = x - fx, ay = y - fy;
  auto px = [&](int xx, int yy) -> double {
    if (xx < 0 || yy < 0 || xx >= img.width() || yy >= img.height()) return 0.0;
    return img.at(xx, yy, c);
  };
  return (1 - ax) * (1 - ay) * px(x0, y0) + ax * (1 - ay) * px(x0 + 1, y0) + (1 - ax) * ay * px(x0, y0 + 1) +
         ax * ay * px(x0 + 1, y0 + 1);
}

// Straight per-pixel CDF remap.
ImageBuffer ref_equalize(const ImageBuffer& img) {
  ImageBuffer out = img;
  const long n = static_cast<long>(img.width()) * img.height();
  for (int c = 0; c < img.channels(); ++c) {
    long hist[256] = {};
    for (int y = 0; y < img.height(); ++y)
      for (int x = 0; x < img.width(); ++x) hist[img.at(x, y, c)]++;
    long cdf[256];
    long acc = 0;
    int vmin = -1;
    for (int v = 0; v < 256; ++v) {
      acc += hist[v];
      cdf[v] = acc;
      if (vmin < 0 && hist[v]) vmin = v;
    }
    const long cmin = cdf[vmin];
    if (cmin == n) continue;
    for (int y = 0; y < img.height(); ++y)
      for (int x = 0; x < img.width(); ++x) {
        const double v = static_cast<double>(cdf[img.at(x, y, c)] - cmin) / static_cast<double>(n - cmin) * 255.0;
        out.at(x, y, c) = static_cast<std::uint8_t>(std::floor(v + 0.5));
      }
  }
  return out;
}

// True when only the smallest level of the channel lands on 0 after one pass.
bool zero_level_unmerged(const ImageBuffer& img) {
  const ImageBuffer once = ref_equalize(img);
  for (int c = 0; c < img.channels(); ++c) {
    int vmin = 256;
    for (int y = 0; y < img.height(); ++y)
      for (int x = 0; x < img.width(); ++x) vmin = std::min<int>(vmin, img.at(x, y, c));
    for (int y = 0; y < img.height(); ++y)
      for (int x = 0; x < img.width(); ++x)
        if (img.at(x, y, c) != vmin && once.at(x, y, c) == 0) return false;
  }
  return true;
}

}  // namespace

TEST_SUITE("raster") {
  TEST_CASE("ImageBuffer invariants") {
    CHECK(error_of([] { ImageBuffer(0, 4, 1); }) == Errc::InvalidImage);
    CHECK(error_of([] { ImageBuffer(4, 4, 2); }) == Errc::InvalidImage);
    CHECK(error_of([] { ImageBuffer(2, 2, 1, std::vector<std::uint8_t>(3)); }) == Errc::InvalidImage);
    CHECK(error_of([] { ProbabilityMap(1, 2, {0.5, 1.5}); }) == Errc::InvalidImage);
    const ProbabilityMap m = ProbabilityMap::from_gray(gray(2, 1, {0, 255}));
    CHECK(m.at(0, 0) == 0.0);
    CHECK(m.at(1, 0) == 1.0);
  }

  TEST_CASE("BinaryMask gray conversion") {
    const auto m = BinaryMask::from_gray(gray(3, 1, {0, 255, 0}));
    CHECK(m.count() == 1);
    CHECK(m.at(1, 0));
    CHECK(pixels(m.to_gray()) == std::vector<std::uint8_t>{0, 255, 0});
    try {
      BinaryMask::from_gray(gray(2, 1, {0, 128}));
      FAIL("accepted a non-binary mask");
    } catch (const Error& e) {
      CHECK(e.code() == Errc::InvalidImage);
      CHECK(e.invariant() == "mask values must be 0 or 255");
    }
    CHECK(error_of([] { BinaryMask::from_gray(ImageBuffer(2, 2, 3)); }) == Errc::InvalidImage);
  }

  TEST_CASE("to_u8 rounds half up and clamps") {
    CHECK(to_u8(0.49) == 0);
    CHECK(to_u8(0.5) == 1);
    CHECK(to_u8(177.5) == 178);
    CHECK(to_u8(-3.0) == 0);
    CHECK(to_u8(300.0) == 255);
  }

  TEST_CASE("warp: identity is bit-exact") {
    Rng rng(1);
    for (int ch : {1, 3}) {
      const auto img = testing::random_image(rng, 37, 23, ch);
      CHECK(warp(img, SimilarityTransform::identity(), 37, 23) == img);
    }
  }

  TEST_CASE("warp: translation by (+1, 0) shifts columns") {
    Rng rng(2);
    const auto img = testing::random_image(rng, 4, 4, 1);
    const auto out = warp(img, SimilarityTransform(1, 0, 1, 0), 4, 4);
    for (int y = 0; y < 4; ++y) {
      CHECK(out.at(0, y) == 0);
      for (int x = 1; x < 4; ++x) CHECK(out.at(x, y) == img.at(x - 1, y));
    }
  }

  TEST_CASE("warp: channel count and size follow the request") {
    const auto out = warp(ImageBuffer(5, 5, 3), SimilarityTransform(2, 0.3, 1, 1), 9, 4);
    CHECK(out.width() == 9);
    CHECK(out.height() == 4);
    CHECK(out.channels() == 3);
  }

  TEST_CASE("warp matches a reference bilinear sampler") {
    Rng rng(3);
    for (int i = 0; i < 20; ++i) {
      const auto img = testing::random_image(rng, 31, 17, 3);
      const SimilarityTransform t(rng.uniform(0.5, 2.0), rng.uniform(-3, 3), rng.uniform(-10, 10),
                                  rng.uniform(-10, 10));
      const auto out = warp(img, t, 29, 19);
      const auto inv = invert(t);
      int worst = 0;
      for (int y = 0; y < 19; ++y)
        for (int x = 0; x < 29; ++x) {
          const Point2 s = apply_point(inv, {double(x), double(y)});
          for (int c = 0; c < 3; ++c) {
            const double ref = ref_sample(img, s.x, s.y, c);
            worst = std::max(worst, std::abs(int(out.at(x, y, c)) - int(std::floor(ref + 0.5))));
          }
        }
      // Off-by-one only where the reference lands a hair from a .5 boundary.
      CHECK(worst <= 1);
    }
  }

  TEST_CASE("warp round trip keeps the interior within 2 levels") {
    Rng rng(4);
    const auto img = testing::smooth_image(512, 512);
    for (int i = 0; i < 5; ++i) {
      // Forward into a 1024 canvas centred on the image so nothing is cropped.
      const double s = rng.uniform(0.75, 1.4);
      const double r = rng.uniform(-std::numbers::pi, std::numbers::pi);
      const SimilarityTransform spin(s, r, 0, 0);
      const Point2 c = apply_point(spin, {255.5, 255.5});
      const SimilarityTransform t(s, r, 511.5 - c.x + rng.uniform(-5, 5), 511.5 - c.y + rng.uniform(-5, 5));
      const auto back = warp(warp(img, t, 1024, 1024), invert(t), 512, 512);
      int worst = 0;
      for (int y = 3; y < 509; ++y)
        for (int x = 3; x < 509; ++x)
          for (int ch = 0; ch < 3; ++ch) worst = std::max(worst, std::abs(int(back.at(x, y, ch)) - int(img.at(x, y, ch))));
      CHECK(worst <= 2);
    }
  }

  TEST_CASE("equalize_histogram examples") {
    CHECK(pixels(equalize_histogram(gray(4, 1, {0, 85, 170, 255}))) == std::vector<std::uint8_t>{0, 85, 170, 255});
    const auto flat = gray(3, 2, std::vector<std::uint8_t>(6, 128));
    CHECK(equalize_histogram(flat) == flat);
    CHECK(pixels(equalize_histogram(gray(4, 1, {10, 10, 10, 200}))) == std::vector<std::uint8_t>{0, 0, 0, 255});
  }

  TEST_CASE("equalize_histogram works per channel") {
    ImageBuffer img(2, 1, 3);
    img.at(0, 0, 0) = 10;
    img.at(1, 0, 0) = 20;
    img.at(0, 0, 1) = 7;
    img.at(1, 0, 1) = 7;
    img.at(0, 0, 2) = 90;
    img.at(1, 0, 2) = 30;
    const auto out = equalize_histogram(img);
    CHECK(out.at(0, 0, 0) == 0);
    CHECK(out.at(1, 0, 0) == 255);
    CHECK(out.at(0, 0, 1) == 7);
    CHECK(out.at(1, 0, 1) == 7);
    CHECK(out.at(0, 0, 2) == 255);
    CHECK(out.at(1, 0, 2) == 0);
  }

  TEST_CASE("property: equalize matches the reference remap and keeps rank order") {
    Rng rng(5);
    for (int i = 0; i < 200; ++i) {
      const int w = rng.integer(1, 40), h = rng.integer(1, 40);
      const int ch = rng.coin() ? 3 : 1;
      ImageBuffer img(w, h, ch);
      const int levels = rng.integer(1, 12);
      std::vector<std::uint8_t> palette;
      for (int k = 0; k < levels; ++k) palette.push_back(static_cast<std::uint8_t>(rng.integer(0, 255)));
      for (auto& v : img.data()) v = palette[static_cast<std::size_t>(rng.integer(0, levels - 1))];
      const auto out = equalize_histogram(img);
      REQUIRE(out == ref_equalize(img));
      for (int c = 0; c < ch; ++c)
        for (int k = 0; k < 50; ++k) {
          const int x1 = rng.integer(0, w - 1), y1 = rng.integer(0, h - 1);
          const int x2 = rng.integer(0, w - 1), y2 = rng.integer(0, h - 1);
          if (img.at(x1, y1, c) <= img.at(x2, y2, c)) CHECK(out.at(x1, y1, c) <= out.at(x2, y2, c));
        }
    }
  }

  TEST_CASE("property: equalize is idempotent when no level merges into 0") {
    Rng rng(6);
    int checked = 0;
    for (int i = 0; i < 500; ++i) {
      auto img = testing::random_image(rng, rng.integer(2, 30), rng.integer(2, 30), rng.coin() ? 3 : 1);
      if (!zero_level_unmerged(img)) continue;
      ++checked;
      const auto once = equalize_histogram(img);
      CHECK(equalize_histogram(once) == once);
    }
    CHECK(checked > 100);
  }

  TEST_CASE("equalize is not idempotent when dark outliers merge into 0") {
    // One 0, one 1, 211 x 128, 300 x 255. Pass 1: cdf_min 1, 1 -> round(255/512) = 0,
    // 128 -> round(212*255/512) = 106. Pass 2: cdf_min 2, 106 -> round(211*255/511) = 105.
    std::vector<std::uint8_t> v{0, 1};
    v.insert(v.end(), 211, 128);
    v.insert(v.end(), 300, 255);
    const auto once = equalize_histogram(gray(513, 1, v));
    CHECK(once.at(1, 0) == 0);
    CHECK(once.at(2, 0) == 106);
    const auto twice = equalize_histogram(once);
    CHECK(twice.at(2, 0) == 105);
  }

  TEST_CASE("center_crop_scale examples") {
    Rng rng(7);
    const auto square = testing::random_image(rng, 512, 512, 3);
    CHECK(center_crop_scale(square, 512, 512) == square);

    const auto wide = testing::random_image(rng, 1024, 512, 3);
    const auto cropped = center_crop_scale(wide, 512, 512);
    bool same = true;
    for (int y = 0; y < 512 && same; ++y)
      for (int x = 0; x < 512 && same; ++x)
        for (int c = 0; c < 3; ++c) same = same && cropped.at(x, y, c) == wide.at(x + 256, y, c);
    CHECK(same);
  }

  TEST_CASE("center_crop_scale 800x600 to 512 samples the [85, 597) window") {
    Rng rng(8);
    const auto img = testing::random_image(rng, 800, 600, 1);
    const auto out = center_crop_scale(img, 512, 512);
    REQUIRE(out.width() == 512);
    REQUIRE(out.height() == 512);
    const double f = 512.0 / 600.0;
    int worst = 0;
    for (int y = 0; y < 512; y += 7)
      for (int x = 0; x < 512; x += 5) {
        // Output pixel centre x + 85 in the 683-wide scaled frame.
        const double sx = (x + 85 + 0.5) / f - 0.5, sy = (y + 0.5) / f - 0.5;
        worst = std::max(worst, std::abs(int(out.at(x, y)) - int(std::floor(ref_sample(img, sx, sy, 0) + 0.5))));
      }
    CHECK(worst <= 1);
    const auto t = normalization_transform(800, 600, 512, 512);
    CHECK(t.scale() == doctest::Approx(f));
    CHECK(t.rotation() == 0.0);
  }

  TEST_CASE("property: center_crop_scale output has the requested size") {
    Rng rng(9);
    for (int i = 0; i < 60; ++i) {
      const auto img = testing::random_image(rng, rng.integer(1, 90), rng.integer(1, 90), 1);
      const int ow = rng.integer(1, 70), oh = rng.integer(1, 70);
      const auto out = center_crop_scale(img, ow, oh);
      CHECK(out.width() == ow);
      CHECK(out.height() == oh);
    }
  }

  TEST_CASE("binarize examples") {
    CHECK(binarize(testing::constant_map(3, 3, 0.0), 0.01).empty());
    CHECK(binarize(testing::constant_map(1, 1, 0.5), 0.5).at(0, 0));
    const auto m = binarize(ProbabilityMap(4, 1, {0.0, 0.04, 0.05, 0.9}), 0.05);
    CHECK(std::vector<std::uint8_t>(m.bits().begin(), m.bits().end()) == std::vector<std::uint8_t>{0, 0, 1, 1});
    CHECK(binarize(testing::constant_map(2, 2, 0.0), 0.0).count() == 4);
    CHECK(error_of([] { binarize(testing::constant_map(1, 1, 0.0), 1.01); }) == Errc::InvalidThreshold);
    CHECK(error_of([] { binarize(testing::constant_map(1, 1, 0.0), -0.1); }) == Errc::InvalidThreshold);
    CHECK(error_of([] { binarize(testing::constant_map(1, 1, 0.0), NAN); }) == Errc::InvalidThreshold);
  }

  TEST_CASE("property: binarize is monotone in the threshold") {
    Rng rng(10);
    for (int i = 0; i < 100; ++i) {
      const auto map = testing::random_map(rng, 16, 16);
      double a = rng.uniform(), b = rng.uniform();
      if (a > b) std::swap(a, b);
      const auto lo = binarize(map, a), hi = binarize(map, b);
      for (int y = 0; y < 16; ++y)
        for (int x = 0; x < 16; ++x)
          if (hi.at(x, y)) CHECK(lo.at(x, y));
    }
  }

  TEST_CASE("overlay examples") {
    Rng rng(11);
    const auto rgb = testing::random_image(rng, 6, 4, 3);
    CHECK(overlay(rgb, BinaryMask(6, 4)) == rgb);

    BinaryMask all(6, 4);
    for (int y = 0; y < 4; ++y)
      for (int x = 0; x < 6; ++x) all.set(x, y, true);
    CHECK(overlay(rgb, all, kDefaultTint, 0.0) == rgb);
    const auto solid = overlay(rgb, all, {10, 20, 30}, 1.0);
    for (int y = 0; y < 4; ++y)
      for (int x = 0; x < 6; ++x) {
        CHECK(solid.at(x, y, 0) == 10);
        CHECK(solid.at(x, y, 1) == 20);
        CHECK(solid.at(x, y, 2) == 30);
      }

    ImageBuffer grey(2, 1, 3, {100, 100, 100, 100, 100, 100});
    BinaryMask one(2, 1);
    one.set(0, 0, true);
    const auto out = overlay(grey, one, {255, 0, 0}, 0.5);
    CHECK(out.at(0, 0, 0) == 178);
    CHECK(out.at(0, 0, 1) == 50);
    CHECK(out.at(0, 0, 2) == 50);
    CHECK(out.at(1, 0, 0) == 100);

    CHECK(error_of([&] { overlay(rgb, BinaryMask(5, 4)); }) == Errc::DimensionMismatch);
  }

  TEST_CASE("to_rgb replicates gray") {
    const auto out = to_rgb(gray(2, 1, {3, 9}));
    CHECK(out.channels() == 3);
    CHECK(out.at(1, 0, 0) == 9);
    CHECK(out.at(1, 0, 2) == 9);
  }
}

TEST_SUITE("png") {
  TEST_CASE("round trip gray and rgb, deterministic bytes") {
    Rng rng(12);
    for (int ch : {1, 3}) {
      const auto img = testing::random_image(rng, 33, 19, ch);
      const auto bytes = encode_png(img);
      CHECK(decode_png(bytes) == img);
      CHECK(encode_png(img) == bytes);
    }
  }

  TEST_CASE("file helpers") {
    testing::ScratchDir dir("png");
    const auto img = testing::smooth_image(16, 8);
    write_png(dir / "a.png", img);
    CHECK(read_png(dir / "a.png") == img);
    CHECK(error_of([&] { read_png(dir / "missing.png"); }) == Errc::IoError);
    CHECK(error_of([] { decode_png(std::vector<std::uint8_t>{1, 2, 3}); }) == Errc::InvalidImage);
  }
}

TEST_SUITE("png fixtures") {
  TEST_CASE("alpha and 16-bit images are rejected, plain gray loads") {
    const std::filesystem::path dir = std::filesystem::path(AMDPREP_TEST_DATA_DIR) / "png";
    CHECK(error_of([&] { read_png(dir / "rgba.png"); }) == Errc::InvalidImage);
    CHECK(error_of([&] { read_png(dir / "gray_alpha.png"); }) == Errc::InvalidImage);
    CHECK(error_of([&] { read_png(dir / "gray16.png"); }) == Errc::InvalidImage);
    const auto g = read_png(dir / "gray8.png");
    CHECK(g.channels() == 1);
    CHECK(g.at(1, 1) == 200);
  }
}
