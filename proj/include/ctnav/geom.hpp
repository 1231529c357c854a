#pragma once

#include <algorithm>
#include <cmath>

namespace ctnav {

inline constexpr double kPi = 3.141592653589793238462643383279502884;

struct Point2 {
    double x = 0.0;
    double y = 0.0;
};

inline Point2 operator+(Point2 a, Point2 b) { return {a.x + b.x, a.y + b.y}; }
inline Point2 operator-(Point2 a, Point2 b) { return {a.x - b.x, a.y - b.y}; }
inline Point2 operator*(double s, Point2 a) { return {s * a.x, s * a.y}; }

inline double dot(Point2 a, Point2 b) { return a.x * b.x + a.y * b.y; }
inline double norm(Point2 a) { return std::sqrt(a.x * a.x + a.y * a.y); }
inline double dist(Point2 a, Point2 b) { return norm(a - b); }

struct Pose2 {
    double x = 0.0;
    double y = 0.0;
    double psi = 0.0;  // yaw, normalized to (-pi, pi]

    Point2 position() const { return {x, y}; }
};

// wrap into (-pi, pi]
inline double wrap_angle(double a) {
    a = std::fmod(a, 2.0 * kPi);
    if (a <= -kPi) a += 2.0 * kPi;
    if (a > kPi) a -= 2.0 * kPi;
    return a;
}

// axis-aligned rectangle, min corner <= max corner componentwise
struct Rect {
    double x0 = 0.0;
    double y0 = 0.0;
    double x1 = 0.0;
    double y1 = 0.0;

    double width() const { return x1 - x0; }
    double height() const { return y1 - y0; }

    bool contains(Point2 p) const {
        return p.x >= x0 && p.x <= x1 && p.y >= y0 && p.y <= y1;
    }

    bool intersects(const Rect& o) const {
        return x0 <= o.x1 && o.x0 <= x1 && y0 <= o.y1 && o.y0 <= y1;
    }
};

// distance from p to the closest point of r (0 when inside)
inline double rect_distance(const Rect& r, Point2 p) {
    const double dx = std::max({r.x0 - p.x, 0.0, p.x - r.x1});
    const double dy = std::max({r.y0 - p.y, 0.0, p.y - r.y1});
    return std::sqrt(dx * dx + dy * dy);
}

// disc of given radius at p touches or overlaps r
inline bool disc_hits_rect(const Rect& r, Point2 p, double radius) {
    if (r.contains(p)) return true;
    return rect_distance(r, p) < radius;
}

}  // namespace ctnav
