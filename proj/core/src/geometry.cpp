#include "wimp/geometry.hpp"

#include <algorithm>
#include <limits>
#include <string>

#include "wimp/error.hpp"

namespace wimp {

Polyline2::Polyline2(std::vector<Point2> points) : points_(std::move(points)) {
  if (points_.size() < 2) {
    throw Error(ErrorCode::kInvalidPolyline,
                "polyline needs at least 2 points, got " + std::to_string(points_.size()));
  }
  arclength_.reserve(points_.size());
  arclength_.push_back(0.0);
  for (std::size_t i = 1; i < points_.size(); ++i) {
    const double seg = distance(points_[i - 1], points_[i]);
    if (!(seg > 0.0)) {
      throw Error(ErrorCode::kInvalidPolyline,
                  "consecutive polyline points coincide at index " + std::to_string(i));
    }
    arclength_.push_back(arclength_.back() + seg);
  }
}

Polyline2 Polyline2::dedup(std::span<const Point2> points) {
  std::vector<Point2> out;
  out.reserve(points.size());
  for (const auto& p : points) {
    if (out.empty() || distance(out.back(), p) > kDedupTolerance) out.push_back(p);
  }
  return Polyline2(std::move(out));
}

Point2 AffineFrame::apply(Point2 p) const {
  const double c = std::cos(rotation_angle);
  const double s = std::sin(rotation_angle);
  if (!inverse) {
    const Point2 d = p - translation;
    return {c * d.x + s * d.y, -s * d.x + c * d.y};
  }
  return {c * p.x - s * p.y + translation.x, s * p.x + c * p.y + translation.y};
}

std::vector<Point2> AffineFrame::apply(std::span<const Point2> pts) const {
  std::vector<Point2> out;
  out.reserve(pts.size());
  for (const auto& p : pts) out.push_back(apply(p));
  return out;
}

Polyline2 AffineFrame::apply(const Polyline2& line) const {
  // A rigid motion cannot merge distinct points, but rounding can in theory.
  return Polyline2::dedup(apply(std::span<const Point2>(line.points())));
}

AffineFrame build_normalization_frame(std::span<const Point2> observed, std::size_t heading_index) {
  if (heading_index >= observed.size()) {
    throw Error(ErrorCode::kDegenerateHeading,
                "heading index " + std::to_string(heading_index) + " outside observed window of " +
                    std::to_string(observed.size()));
  }
  const Point2 d = observed[heading_index] - observed[0];
  if (d.x == 0.0 && d.y == 0.0) {
    throw Error(ErrorCode::kDegenerateHeading, "first and heading points coincide");
  }
  return {std::atan2(d.y, d.x), observed[0], false};
}

AffineFrame normalization_frame_or_identity(std::span<const Point2> observed,
                                            std::size_t heading_index) {
  try {
    return build_normalization_frame(observed, heading_index);
  } catch (const Error& e) {
    if (e.code() != ErrorCode::kDegenerateHeading || observed.empty()) throw;
    return {0.0, observed[0], false};
  }
}

CurvilinearCoord project_to_curvilinear(const Polyline2& ref, Point2 p) {
  const auto& pts = ref.points();
  const auto& arc = ref.cumulative_arclength();
  double best_d2 = std::numeric_limits<double>::infinity();
  CurvilinearCoord best{};
  for (std::size_t i = 0; i + 1 < pts.size(); ++i) {
    const Point2 a = pts[i];
    const Point2 seg = pts[i + 1] - a;
    const double len2 = dot(seg, seg);
    double t = dot(p - a, seg) / len2;
    t = std::clamp(t, 0.0, 1.0);
    const Point2 proj = a + seg * t;
    const Point2 off = p - proj;
    const double d2 = dot(off, off);
    // Strict comparison keeps the lower-arclength segment on ties.
    if (d2 < best_d2) {
      best_d2 = d2;
      const double len = std::sqrt(len2);
      const double side = cross(seg, p - a);
      best.tangential = arc[i] + t * len;
      best.normal = (side < 0.0 ? -1.0 : 1.0) * std::sqrt(d2);
    }
  }
  return best;
}

double distance_to_segment(Point2 p, Point2 a, Point2 b) {
  const Point2 seg = b - a;
  const double len2 = dot(seg, seg);
  if (len2 == 0.0) return distance(p, a);
  const double t = std::clamp(dot(p - a, seg) / len2, 0.0, 1.0);
  return distance(p, a + seg * t);
}

bool point_in_polygon(std::span<const Point2> ring, Point2 p) {
  if (ring.size() < 3) {
    throw Error(ErrorCode::kInvalidPolygon,
                "polygon needs at least 3 vertices, got " + std::to_string(ring.size()));
  }
  const std::size_t n = ring.size();
  for (std::size_t i = 0, j = n - 1; i < n; j = i++) {
    if (distance_to_segment(p, ring[j], ring[i]) <= 1e-12) return true;
  }
  bool inside = false;
  for (std::size_t i = 0, j = n - 1; i < n; j = i++) {
    const Point2 a = ring[i];
    const Point2 b = ring[j];
    if ((a.y > p.y) != (b.y > p.y)) {
      const double x_cross = (b.x - a.x) * (p.y - a.y) / (b.y - a.y) + a.x;
      if (p.x < x_cross) inside = !inside;
    }
  }
  return inside;
}

double trajectory_length(std::span<const Point2> pts) {
  double total = 0.0;
  for (std::size_t i = 1; i < pts.size(); ++i) total += distance(pts[i - 1], pts[i]);
  return total;
}

}  // namespace wimp
