#include "skillpatch/geometry.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>

namespace skillpatch::geometry {

namespace {

Vec2 to_local(const OrientedRect& r, const Vec2& p)
{
    const double c = std::cos(r.yaw);
    const double s = std::sin(r.yaw);
    const Vec2 d = p - r.center;
    return {c * d.x() + s * d.y(), -s * d.x() + c * d.y()};
}

std::array<Vec2, 4> corners(const OrientedRect& r)
{
    const double c = std::cos(r.yaw);
    const double s = std::sin(r.yaw);
    const Vec2 ax{c * r.half.x(), s * r.half.x()};
    const Vec2 ay{-s * r.half.y(), c * r.half.y()};
    return {r.center + ax + ay, r.center - ax + ay, r.center - ax - ay, r.center + ax - ay};
}

double point_rect_distance(const OrientedRect& r, const Vec2& p)
{
    return std::max(0.0, signed_distance(r, p));
}

}  // namespace

Footprint Footprint::make_rect(const Vec2& c, const Vec2& half, double yaw)
{
    Footprint f;
    f.kind = Kind::Rect;
    f.rect = {c, half, yaw};
    return f;
}

Footprint Footprint::make_disc(const Vec2& c, double r)
{
    Footprint f;
    f.kind = Kind::Disc;
    f.disc = {c, r};
    return f;
}

Footprint Footprint::inflated(double margin) const
{
    Footprint f = *this;
    if (kind == Kind::Rect) {
        f.rect.half += Vec2::Constant(margin);
    } else {
        f.disc.radius += margin;
    }
    return f;
}

bool Footprint::contains(const Vec2& p) const
{
    if (kind == Kind::Disc) return (p - disc.center).squaredNorm() <= disc.radius * disc.radius;
    return signed_distance(rect, p) <= 0.0;
}

double signed_distance(const OrientedRect& r, const Vec2& p)
{
    const Vec2 q = to_local(r, p).cwiseAbs() - r.half;
    const double outside = q.cwiseMax(0.0).norm();
    const double inside = std::min(std::max(q.x(), q.y()), 0.0);
    return outside + inside;
}

bool intersects(const OrientedRect& a, const OrientedRect& b)
{
    // Separating axis test over the four edge normals.
    const auto ca = corners(a);
    const auto cb = corners(b);
    const std::array<double, 2> yaws{a.yaw, b.yaw};
    for (double yaw : yaws) {
        const std::array<Vec2, 2> axes{Vec2{std::cos(yaw), std::sin(yaw)}, Vec2{-std::sin(yaw), std::cos(yaw)}};
        for (const Vec2& axis : axes) {
            double amin = std::numeric_limits<double>::infinity(), amax = -amin;
            double bmin = amin, bmax = -amin;
            for (const Vec2& p : ca) {
                amin = std::min(amin, p.dot(axis));
                amax = std::max(amax, p.dot(axis));
            }
            for (const Vec2& p : cb) {
                bmin = std::min(bmin, p.dot(axis));
                bmax = std::max(bmax, p.dot(axis));
            }
            if (amax < bmin || bmax < amin) return false;
        }
    }
    return true;
}

bool intersects(const Footprint& a, const Footprint& b)
{
    using K = Footprint::Kind;
    if (a.kind == K::Disc && b.kind == K::Disc) {
        const double r = a.disc.radius + b.disc.radius;
        return (a.disc.center - b.disc.center).squaredNorm() <= r * r;
    }
    if (a.kind == K::Disc) return signed_distance(b.rect, a.disc.center) <= a.disc.radius;
    if (b.kind == K::Disc) return signed_distance(a.rect, b.disc.center) <= b.disc.radius;
    return intersects(a.rect, b.rect);
}

double separation(const Footprint& a, const Footprint& b)
{
    using K = Footprint::Kind;
    if (intersects(a, b)) return 0.0;
    if (a.kind == K::Disc && b.kind == K::Disc) {
        return (a.disc.center - b.disc.center).norm() - a.disc.radius - b.disc.radius;
    }
    if (a.kind == K::Disc) return point_rect_distance(b.rect, a.disc.center) - a.disc.radius;
    if (b.kind == K::Disc) return point_rect_distance(a.rect, b.disc.center) - b.disc.radius;
    // Disjoint convex polygons: the closest pair involves a vertex of one of them.
    double best = std::numeric_limits<double>::infinity();
    for (const Vec2& p : corners(a.rect)) best = std::min(best, point_rect_distance(b.rect, p));
    for (const Vec2& p : corners(b.rect)) best = std::min(best, point_rect_distance(a.rect, p));
    return best;
}

bool segment_intersects(const Vec2& p0, const Vec2& p1, const OrientedRect& r)
{
    const Vec2 a = to_local(r, p0);
    const Vec2 b = to_local(r, p1);
    const Vec2 d = b - a;
    double t0 = 0.0, t1 = 1.0;
    for (int axis = 0; axis < 2; ++axis) {
        if (std::abs(d[axis]) < 1e-15) {
            if (std::abs(a[axis]) > r.half[axis]) return false;
            continue;
        }
        double ta = (-r.half[axis] - a[axis]) / d[axis];
        double tb = (r.half[axis] - a[axis]) / d[axis];
        if (ta > tb) std::swap(ta, tb);
        t0 = std::max(t0, ta);
        t1 = std::min(t1, tb);
        if (t0 > t1) return false;
    }
    return true;
}

}  // namespace skillpatch::geometry
