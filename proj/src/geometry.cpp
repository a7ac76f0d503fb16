#include "amdprep/geometry.hpp"

#include <cmath>
#include <numbers>

#include "amdprep/error.hpp"

namespace amdprep {

namespace {

bool finite(Point2 p) { return std::isfinite(p.x) && std::isfinite(p.y); }

struct Moments {
  Point2 source_mean;
  Point2 target_mean;
  double source_sq = 0.0;  // sum |a_i|^2
  double target_sq = 0.0;
  double dot = 0.0;        // sum a_i . b_i
  double cross = 0.0;      // sum a_i x b_i
};

Moments centred_moments(std::span<const PointPair> pairs) {
  Moments m;
  const double n = static_cast<double>(pairs.size());
  for (const auto& pr : pairs) {
    m.source_mean.x += pr.source.x;
    m.source_mean.y += pr.source.y;
    m.target_mean.x += pr.target.x;
    m.target_mean.y += pr.target.y;
  }
  m.source_mean.x /= n;
  m.source_mean.y /= n;
  m.target_mean.x /= n;
  m.target_mean.y /= n;

  for (const auto& pr : pairs) {
    const double ax = pr.source.x - m.source_mean.x;
    const double ay = pr.source.y - m.source_mean.y;
    const double bx = pr.target.x - m.target_mean.x;
    const double by = pr.target.y - m.target_mean.y;
    m.source_sq += ax * ax + ay * ay;
    m.target_sq += bx * bx + by * by;
    m.dot += ax * bx + ay * by;
    m.cross += ax * by - ay * bx;
  }
  return m;
}

}  // namespace

SimilarityTransform::SimilarityTransform(double scale, double rotation_rad, double tx, double ty) {
  if (!std::isfinite(scale) || !std::isfinite(rotation_rad) || !std::isfinite(tx) ||
      !std::isfinite(ty)) {
    throw Error(Errc::NonFinite, "similarity transform parameters must be finite");
  }
  if (scale <= 0.0) {
    throw Error(Errc::InvalidArgument, "similarity transform scale must be positive");
  }
  scale_ = scale;
  rotation_ = normalize_angle(rotation_rad);
  tx_ = tx;
  ty_ = ty;
}

double normalize_angle(double radians) noexcept {
  constexpr double two_pi = 2.0 * std::numbers::pi;
  double r = std::remainder(radians, two_pi);  // [-pi, pi]
  if (r <= -std::numbers::pi) r += two_pi;
  return r;
}

Point2 apply_point(const SimilarityTransform& t, Point2 p) noexcept {
  const double c = t.scale() * std::cos(t.rotation());
  const double s = t.scale() * std::sin(t.rotation());
  return {t.tx() + c * p.x - s * p.y, t.ty() + s * p.x + c * p.y};
}

SimilarityTransform invert(const SimilarityTransform& t) {
  const double inv_scale = 1.0 / t.scale();
  const double c = std::cos(-t.rotation());
  const double s = std::sin(-t.rotation());
  // -(1/s) R(-theta) t
  const double tx = -inv_scale * (c * t.tx() - s * t.ty());
  const double ty = -inv_scale * (s * t.tx() + c * t.ty());
  return SimilarityTransform(inv_scale, -t.rotation(), tx, ty);
}

SimilarityTransform compose(const SimilarityTransform& outer, const SimilarityTransform& inner) {
  const Point2 t = apply_point(outer, {inner.tx(), inner.ty()});
  return SimilarityTransform(outer.scale() * inner.scale(), outer.rotation() + inner.rotation(), t.x,
                             t.y);
}

SimilarityTransform estimate_similarity(std::span<const PointPair> pairs) {
  if (pairs.size() < 2) {
    throw Error(Errc::TooFewPairs, "at least 2 point pairs are required, got " +
                                       std::to_string(pairs.size()));
  }
  for (const auto& pr : pairs) {
    if (!finite(pr.source) || !finite(pr.target)) {
      throw Error(Errc::NonFinite, "point pair coordinates must be finite");
    }
  }

  const Moments m = centred_moments(pairs);
  const double n = static_cast<double>(pairs.size());
  if (std::sqrt(m.source_sq / n) < kDegenerateSpreadPx) {
    throw Error(Errc::DegenerateConfiguration, "source points are coincident");
  }
  if (std::sqrt(m.target_sq / n) < kDegenerateSpreadPx) {
    throw Error(Errc::DegenerateConfiguration, "target points are coincident");
  }

  const double magnitude = std::hypot(m.dot, m.cross);
  if (!(magnitude > 0.0)) {
    throw Error(Errc::DegenerateConfiguration,
                "point sets are uncorrelated; no positive scale fits them");
  }
  const double scale = magnitude / m.source_sq;
  const double rotation = std::atan2(m.cross, m.dot);

  const double c = scale * std::cos(rotation);
  const double s = scale * std::sin(rotation);
  const double tx = m.target_mean.x - (c * m.source_mean.x - s * m.source_mean.y);
  const double ty = m.target_mean.y - (s * m.source_mean.x + c * m.source_mean.y);
  return SimilarityTransform(scale, rotation, tx, ty);
}

std::vector<double> residuals(const SimilarityTransform& t, std::span<const PointPair> pairs) {
  std::vector<double> out;
  out.reserve(pairs.size());
  for (const auto& pr : pairs) {
    const Point2 q = apply_point(t, pr.source);
    out.push_back(std::hypot(q.x - pr.target.x, q.y - pr.target.y));
  }
  return out;
}

ResidualSummary summarize_residuals(std::span<const double> values) noexcept {
  ResidualSummary s;
  if (values.empty()) return s;
  double sum = 0.0;
  for (double v : values) {
    s.max_px = std::max(s.max_px, v);
    sum += v;
  }
  s.mean_px = sum / static_cast<double>(values.size());
  return s;
}

double squared_error(const SimilarityTransform& t, std::span<const PointPair> pairs) noexcept {
  double sum = 0.0;
  for (const auto& pr : pairs) {
    const Point2 q = apply_point(t, pr.source);
    const double dx = q.x - pr.target.x;
    const double dy = q.y - pr.target.y;
    sum += dx * dx + dy * dy;
  }
  return sum;
}

}  // namespace amdprep
