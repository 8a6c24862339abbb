#pragma once

#include <cmath>
#include <span>
#include <vector>

namespace wimp {

struct Point2 {
  double x = 0.0;
  double y = 0.0;

  friend Point2 operator+(Point2 a, Point2 b) { return {a.x + b.x, a.y + b.y}; }
  friend Point2 operator-(Point2 a, Point2 b) { return {a.x - b.x, a.y - b.y}; }
  friend Point2 operator*(Point2 a, double s) { return {a.x * s, a.y * s}; }
  friend Point2 operator*(double s, Point2 a) { return {a.x * s, a.y * s}; }
  friend bool operator==(Point2 a, Point2 b) = default;

  double norm() const { return std::hypot(x, y); }
};

inline double dot(Point2 a, Point2 b) { return a.x * b.x + a.y * b.y; }
inline double cross(Point2 a, Point2 b) { return a.x * b.y - a.y * b.x; }
inline double distance(Point2 a, Point2 b) { return (a - b).norm(); }

using Trajectory = std::vector<Point2>;
using Ring = std::vector<Point2>;

// Ordered point sequence with at least two points, no repeated consecutive
// points, and a precomputed cumulative arclength (first entry 0).
class Polyline2 {
 public:
  Polyline2() = default;
  explicit Polyline2(std::vector<Point2> points);

  // Drops points within kDedupTolerance of the previous kept point before
  // validating. Lane seams that differ by rounding collapse to one point.
  static constexpr double kDedupTolerance = 1e-6;
  static Polyline2 dedup(std::span<const Point2> points);

  const std::vector<Point2>& points() const noexcept { return points_; }
  const std::vector<double>& cumulative_arclength() const noexcept { return arclength_; }
  std::size_t size() const noexcept { return points_.size(); }
  bool empty() const noexcept { return points_.empty(); }
  double length() const noexcept { return arclength_.empty() ? 0.0 : arclength_.back(); }
  const Point2& operator[](std::size_t i) const { return points_[i]; }

  friend bool operator==(const Polyline2& a, const Polyline2& b) { return a.points_ == b.points_; }

 private:
  std::vector<Point2> points_;
  std::vector<double> arclength_;
};

// Rigid transform. The forward direction maps world coordinates into the local
// frame: p' = R(-angle) * (p - origin). The inverse maps local back to world.
struct AffineFrame {
  double rotation_angle = 0.0;
  Point2 translation{};
  bool inverse = false;

  static AffineFrame identity() { return {}; }
  AffineFrame inverted() const { return {rotation_angle, translation, !inverse}; }

  Point2 apply(Point2 p) const;
  std::vector<Point2> apply(std::span<const Point2> pts) const;
  Polyline2 apply(const Polyline2& line) const;
};

// Frame that puts points[0] at the origin and points[heading_index] on +x.
// Throws DegenerateHeading when those two points coincide.
AffineFrame build_normalization_frame(std::span<const Point2> observed, std::size_t heading_index);

// Same as above but falls back to a translation-only frame for a stationary
// actor.
AffineFrame normalization_frame_or_identity(std::span<const Point2> observed,
                                            std::size_t heading_index);

struct CurvilinearCoord {
  double tangential = 0.0;
  double normal = 0.0;  // left of travel is positive
};

CurvilinearCoord project_to_curvilinear(const Polyline2& ref, Point2 p);

// Even-odd test; points on the boundary count as inside.
bool point_in_polygon(std::span<const Point2> ring, Point2 p);

double trajectory_length(std::span<const Point2> pts);

double distance_to_segment(Point2 p, Point2 a, Point2 b);

}  // namespace wimp
