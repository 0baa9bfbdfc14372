#pragma once

#include <cmath>

namespace vsn {

struct Point {
  double x = 0.0;
  double y = 0.0;

  friend bool operator==(const Point&, const Point&) = default;
};

inline double distance(Point a, Point b) { return std::hypot(a.x - b.x, a.y - b.y); }

inline Point lerp(Point a, Point b, double t) { return {a.x + (b.x - a.x) * t, a.y + (b.y - a.y) * t}; }

struct Projection {
  double distance = 0.0; // perpendicular (clamped) distance from the query point
  double along = 0.0;    // distance from the segment start to the foot point
};

// Projects `p` onto segment [a, b], clamping to the endpoints.
inline Projection project_onto(Point p, Point a, Point b) {
  const double dx = b.x - a.x;
  const double dy = b.y - a.y;
  const double len2 = dx * dx + dy * dy;
  if (len2 == 0.0) return {distance(p, a), 0.0};
  double t = ((p.x - a.x) * dx + (p.y - a.y) * dy) / len2;
  t = t < 0.0 ? 0.0 : (t > 1.0 ? 1.0 : t);
  const Point foot = lerp(a, b, t);
  return {distance(p, foot), t * std::sqrt(len2)};
}

// Local equirectangular projection anchored at a geographic origin. Planar
// coordinates are meters east (x) and north (y) of the origin.
class GeoProjection {
public:
  GeoProjection(double origin_lat_deg, double origin_lon_deg)
      : lat0_(origin_lat_deg), lon0_(origin_lon_deg),
        cos_lat0_(std::cos(origin_lat_deg * kDegToRad)) {}

  Point to_plane(double lat_deg, double lon_deg) const {
    return {kEarthRadiusM * (lon_deg - lon0_) * kDegToRad * cos_lat0_,
            kEarthRadiusM * (lat_deg - lat0_) * kDegToRad};
  }

  static constexpr double kEarthRadiusM = 6371008.8;

private:
  static constexpr double kDegToRad = 3.14159265358979323846 / 180.0;
  double lat0_;
  double lon0_;
  double cos_lat0_;
};

} // namespace vsn
