#pragma once

#include <Eigen/Core>

namespace skillpatch::geometry {

using Vec2 = Eigen::Vector2d;

/// Oriented rectangle in the plane.
struct OrientedRect {
    Vec2 center{0.0, 0.0};
    Vec2 half{0.0, 0.0};
    double yaw{0.0};
};

struct Circle {
    Vec2 center{0.0, 0.0};
    double radius{0.0};
};

/// Planar footprint of an object: either a rectangle or a disc.
struct Footprint {
    enum class Kind { Rect, Disc } kind{Kind::Rect};
    OrientedRect rect{};
    Circle disc{};

    static Footprint make_rect(const Vec2& c, const Vec2& half, double yaw);
    static Footprint make_disc(const Vec2& c, double r);

    Footprint inflated(double margin) const;
    bool contains(const Vec2& p) const;
};

/// Signed distance from a point to a rectangle (negative inside).
double signed_distance(const OrientedRect& r, const Vec2& p);

bool intersects(const OrientedRect& a, const OrientedRect& b);
bool intersects(const Footprint& a, const Footprint& b);

/// Separation distance between two footprints (0 when touching or overlapping).
/// Exact for disc/disc and disc/rect, exact for rect/rect.
double separation(const Footprint& a, const Footprint& b);

/// Closed-segment versus rectangle intersection.
bool segment_intersects(const Vec2& p0, const Vec2& p1, const OrientedRect& r);

}  // namespace skillpatch::geometry
