#pragma once

// Classification-gated segmentation flow: a classifier score decides whether
// a lesion is present (score >= gate); only then is the segmentation map
// binarised and overlaid on the RGB image. Model inference happens elsewhere;
// scores and probability maps arrive as inputs.

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "amdprep/raster.hpp"

namespace amdprep {

struct PipelineOptions {
  double gate = 0.5;
  double seg_threshold = 0.05;
  Rgb tint = kDefaultTint;
  double alpha = kDefaultOverlayAlpha;
};

/// mask and overlay are present iff decision is true.
struct EvaluationResult {
  double score = 0.0;
  bool decision = false;
  std::optional<BinaryMask> mask;
  std::optional<ImageBuffer> overlay;
};

/// Errors: InvalidArgument (score or gate outside [0, 1]),
/// MissingSegmentationMap, DimensionMismatch, InvalidThreshold.
EvaluationResult run_case(const ImageBuffer& rgb, double score, const std::optional<ProbabilityMap>& seg_map,
                          const PipelineOptions& options = {});

struct CaseSpec {
  std::string id;
  std::filesystem::path rgb;
  double score = 0.0;
  std::optional<std::filesystem::path> seg_map;
  std::string problem;  // non-empty when the manifest entry was malformed
};

struct CaseOutcome {
  std::string id;
  std::optional<EvaluationResult> result;  // empty when the case failed
  std::string error;
};

struct BatchReport {
  std::vector<CaseOutcome> cases;  // manifest order
  std::size_t positives = 0;
  std::size_t negatives = 0;
  std::size_t failures = 0;
};

/// Manifest: JSON array of {"id", "rgb", "score", "seg_map"?}. Relative paths
/// resolve against `base_dir`. Malformed entries become cases that fail in
/// run_batch rather than aborting the manifest; a non-array document throws
/// Error(ValidationFailed).
std::vector<CaseSpec> parse_case_manifest(std::string_view text, const std::filesystem::path& base_dir);

/// Runs every case and writes <out_dir>/<id>/result.json (+ mask.png and
/// overlay.png for positives) plus <out_dir>/summary.json. Each case
/// directory appears atomically. Individual failures are collected, not
/// thrown.
BatchReport run_batch(std::span<const CaseSpec> cases, const std::filesystem::path& out_dir,
                      const PipelineOptions& options = {}, unsigned threads = 1);

BatchReport run_batch(const std::filesystem::path& manifest_path, const std::filesystem::path& out_dir,
                      const PipelineOptions& options = {}, unsigned threads = 1);

}  // namespace amdprep
