#pragma once

#include <array>
#include <cmath>
#include <numbers>

namespace skillpatch {

/// Wraps an angle into (-pi, pi].
inline double wrap_angle(double a)
{
    constexpr double two_pi = 2.0 * std::numbers::pi;
    double r = std::fmod(a, two_pi);
    if (r <= -std::numbers::pi) r += two_pi;
    if (r > std::numbers::pi) r -= two_pi;
    return r;
}

/// End-effector or piece pose: translation plus yaw about +z.
struct Pose4 {
    double x{0.0};
    double y{0.0};
    double z{0.0};
    double yaw{0.0};

    std::array<double, 4> as_array() const { return {x, y, z, yaw}; }
    static Pose4 from_array(const std::array<double, 4>& a) { return {a[0], a[1], a[2], wrap_angle(a[3])}; }

    bool operator==(const Pose4&) const = default;
};

/// Applies a delta in the world frame (translation added, yaw added and wrapped).
inline Pose4 apply_delta(const Pose4& p, const Pose4& d)
{
    return {p.x + d.x, p.y + d.y, p.z + d.z, wrap_angle(p.yaw + d.yaw)};
}

/// Rigid composition: `local` expressed in the frame of `frame`.
inline Pose4 compose(const Pose4& frame, const Pose4& local)
{
    const double c = std::cos(frame.yaw);
    const double s = std::sin(frame.yaw);
    return {frame.x + c * local.x - s * local.y,
            frame.y + s * local.x + c * local.y,
            frame.z + local.z,
            wrap_angle(frame.yaw + local.yaw)};
}

/// Inverse of compose: returns `local` such that compose(frame, local) == world.
inline Pose4 relative(const Pose4& frame, const Pose4& world)
{
    const double c = std::cos(frame.yaw);
    const double s = std::sin(frame.yaw);
    const double dx = world.x - frame.x;
    const double dy = world.y - frame.y;
    return {c * dx + s * dy, -s * dx + c * dy, world.z - frame.z, wrap_angle(world.yaw - frame.yaw)};
}

/// Pose difference b - a with the yaw component wrapped.
inline Pose4 delta_between(const Pose4& a, const Pose4& b)
{
    return {b.x - a.x, b.y - a.y, b.z - a.z, wrap_angle(b.yaw - a.yaw)};
}

inline double translation_norm(const Pose4& p) { return std::sqrt(p.x * p.x + p.y * p.y + p.z * p.z); }

inline double lateral_distance(const Pose4& a, const Pose4& b) { return std::hypot(a.x - b.x, a.y - b.y); }

/// Weighted pose metric: Euclidean translation plus 0.1 * |dyaw|.
inline double pose_distance(const Pose4& a, const Pose4& b)
{
    const Pose4 d = delta_between(a, b);
    return translation_norm(d) + 0.1 * std::abs(d.yaw);
}

/// Linear interpolation along the shortest yaw arc.
inline Pose4 interpolate(const Pose4& a, const Pose4& b, double t)
{
    const Pose4 d = delta_between(a, b);
    return {a.x + t * d.x, a.y + t * d.y, a.z + t * d.z, wrap_angle(a.yaw + t * d.yaw)};
}

}  // namespace skillpatch
