#pragma once

// Frozen corpora shared by the evaluation, CLI and acceptance suites.

#include <cmath>
#include <utility>
#include <vector>

#include "amdprep/evaluation.hpp"
#include "support/test_support.hpp"

namespace amdprep::testing {

/// Three 24x24 images (the last lesion-free) scored by two models. Map
/// values are multiples of 1/255 so they survive a PNG round trip.
inline std::pair<std::vector<ModelPredictions>, std::vector<BinaryMask>> golden_corpus() {
  Rng rng(2022);
  std::vector<BinaryMask> truths{disc_mask(24, 24, 8, 9, 5), disc_mask(24, 24, 15, 12, 7), BinaryMask(24, 24)};
  std::vector<ModelPredictions> preds{{"UNet", {}}, {"MobileNetV3", {}}};
  for (auto& model : preds) {
    for (const auto& t : truths) {
      std::vector<double> v;
      for (int y = 0; y < 24; ++y)
        for (int x = 0; x < 24; ++x) {
          const double base = t.at(x, y) ? rng.uniform(0.03, 0.9) : rng.uniform(0.0, 0.12);
          v.push_back(std::round(base * 255.0) / 255.0);
        }
      model.maps.emplace_back(24, 24, std::move(v));
    }
  }
  return {preds, truths};
}

inline ImageBuffer map_to_gray(const ProbabilityMap& map) {
  ImageBuffer img(map.width(), map.height(), 1);
  for (int y = 0; y < map.height(); ++y)
    for (int x = 0; x < map.width(); ++x) img.at(x, y) = to_u8(map.at(x, y) * 255.0);
  return img;
}

}  // namespace amdprep::testing
