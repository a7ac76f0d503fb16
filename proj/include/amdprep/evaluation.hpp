#pragma once

// Pixelwise confusion-matrix scoring of binarised segmentation output, swept
// over binarisation thresholds, and the report tables built from it.

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "amdprep/raster.hpp"

namespace amdprep {

inline constexpr std::array<double, 4> kDefaultThresholds{0.01, 0.05, 0.1, 0.5};

struct ConfusionCounts {
  std::uint64_t tp = 0;
  std::uint64_t fp = 0;
  std::uint64_t tn = 0;
  std::uint64_t fn = 0;

  std::uint64_t total() const noexcept { return tp + fp + tn + fn; }

  ConfusionCounts& operator+=(const ConfusionCounts& o) noexcept {
    tp += o.tp;
    fp += o.fp;
    tn += o.tn;
    fn += o.fn;
    return *this;
  }

  friend bool operator==(const ConfusionCounts&, const ConfusionCounts&) = default;
};

/// Ratios derived from a confusion matrix. Sensitivity and specificity are
/// empty when their denominator is zero. Dice is 1 when both masks are empty,
/// and `dice_both_empty` records that the convention was used.
struct Metrics {
  std::optional<double> sensitivity;
  std::optional<double> specificity;
  double accuracy = 0.0;
  double dice = 0.0;
  bool dice_both_empty = false;
};

/// Lesion is the positive class. Error(DimensionMismatch) if sizes differ.
ConfusionCounts confusion(const BinaryMask& pred, const BinaryMask& truth);

/// Error(InvalidArgument) when counts.total() == 0.
Metrics metrics_from_counts(const ConfusionCounts& counts);

/// One count per image: positive when score >= gate.
ConfusionCounts classification_counts(std::span<const double> scores, std::span<const bool> truth,
                                      double gate = 0.5);

enum class Aggregation {
  Micro,  // pool pixel counts over the corpus, then take ratios
  Macro,  // take ratios per image, then average the defined ones
};

struct MetricsRow {
  std::string model;
  double threshold = 0.0;
  ConfusionCounts counts;  // summed over the corpus in both modes
  Metrics metrics;
  std::size_t images = 0;
  std::size_t empty_images = 0;  // images where prediction and truth are both empty
};

struct ModelPredictions {
  std::string model;
  std::vector<ProbabilityMap> maps;  // maps[i] is scored against truths[i]
};

/// One row per (model, threshold), in input order. Errors: EmptyCorpus,
/// DimensionMismatch, InvalidThreshold, InvalidArgument (map/truth count).
std::vector<MetricsRow> sweep(std::span<const ModelPredictions> predictions, std::span<const BinaryMask> truths,
                              std::span<const double> thresholds = kDefaultThresholds,
                              Aggregation aggregation = Aggregation::Micro);

enum class ReportFormat { Csv, Markdown };

/// Rows grouped by model (first-appearance order), thresholds ascending.
/// CSV carries fractions with 6 decimals; Markdown percentages with 2.
/// Undefined ratios print as an em dash.
std::string render_report(std::span<const MetricsRow> rows, ReportFormat format);

}  // namespace amdprep
