#pragma once

// Similarity alignment between a contrast (angiography) image and its RGB
// fundus counterpart. Coordinates: origin at the centre of the top-left
// pixel, x to the right, y downwards.

#include <span>
#include <vector>

namespace amdprep {

struct Point2 {
  double x = 0.0;
  double y = 0.0;

  friend bool operator==(const Point2&, const Point2&) = default;
};

/// One reference-point correspondence: `source` in contrast-image space,
/// `target` in RGB-image space.
struct PointPair {
  Point2 source;
  Point2 target;

  friend bool operator==(const PointPair&, const PointPair&) = default;
};

/// p -> translation + scale * R(rotation) * p.
///
/// Four degrees of freedom: uniform scale, rotation and 2D translation. No
/// shear, reflection or perspective. Rotation is kept in (-pi, pi].
class SimilarityTransform {
public:
  SimilarityTransform() = default;
  /// Throws Error(NonFinite) for non-finite parameters and
  /// Error(InvalidArgument) for scale <= 0.
  SimilarityTransform(double scale, double rotation_rad, double tx, double ty);

  static SimilarityTransform identity() { return {}; }

  double scale() const noexcept { return scale_; }
  double rotation() const noexcept { return rotation_; }
  double tx() const noexcept { return tx_; }
  double ty() const noexcept { return ty_; }

  friend bool operator==(const SimilarityTransform&, const SimilarityTransform&) = default;

private:
  double scale_ = 1.0;
  double rotation_ = 0.0;
  double tx_ = 0.0;
  double ty_ = 0.0;
};

/// Wraps an angle into (-pi, pi].
double normalize_angle(double radians) noexcept;

Point2 apply_point(const SimilarityTransform& t, Point2 p) noexcept;

SimilarityTransform invert(const SimilarityTransform& t);

/// outer o inner: apply `inner` first.
SimilarityTransform compose(const SimilarityTransform& outer, const SimilarityTransform& inner);

/// Closed-form least-squares similarity fit (2D Procrustes without reflection).
///
/// Minimises sum |T(source_i) - target_i|^2. Writing centred points as complex
/// numbers a_i, b_i, the optimum is z = sum(conj(a_i) b_i) / sum|a_i|^2 with
/// scale = |z| and rotation = arg z; translation follows from the centroids.
///
/// Errors: TooFewPairs (< 2), DegenerateConfiguration (source or target spread
/// below 1e-9 px), NonFinite.
SimilarityTransform estimate_similarity(std::span<const PointPair> pairs);

/// Per-pair Euclidean error |T(source_i) - target_i| in target pixels.
std::vector<double> residuals(const SimilarityTransform& t, std::span<const PointPair> pairs);

struct ResidualSummary {
  double max_px = 0.0;
  double mean_px = 0.0;
};

ResidualSummary summarize_residuals(std::span<const double> values) noexcept;

/// Sum of squared residuals, the quantity estimate_similarity minimises.
double squared_error(const SimilarityTransform& t, std::span<const PointPair> pairs) noexcept;

inline constexpr double kDegenerateSpreadPx = 1e-9;

}  // namespace amdprep
