#include "skillpatch/world.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "skillpatch/common.hpp"

namespace skillpatch::world {

namespace {

constexpr double kNumericalSlack = 1e-9;

Vec2 xy(const Pose4& p) { return {p.x, p.y}; }

Shape default_hole_shape(int cell)
{
    static constexpr std::array<Shape, 3> cycle{Shape::Rect, Shape::Circle, Shape::Square};
    return cycle[static_cast<std::size_t>(cell % 3)];
}

/// Lowest z the piece bottom may reach at this pose.
double piece_floor(const WorldState& w, const Pose4& piece)
{
    return aligned_with_goal(w, piece) ? w.board.surface_z - w.board.lip_depth : w.board.surface_z;
}

bool overlaps_z(double lo_a, double hi_a, double lo_b, double hi_b) { return lo_a < hi_b && lo_b < hi_a; }

bool hits_obstacle(const WorldState& w, const Pose4& ee)
{
    const WorldParams& p = w.params;
    const geometry::Footprint gripper = gripper_footprint(p, ee);
    const double finger_z = ee.z - p.grasp_height;
    for (const BoxSpec& box : w.obstacles) {
        const geometry::Footprint fb = geometry::Footprint::make_rect(
            {box.center.x(), box.center.y()}, {box.half_extents.x(), box.half_extents.y()}, box.yaw);
        const double lo = box.center.z() - box.half_extents.z();
        const double hi = box.center.z() + box.half_extents.z();
        if (overlaps_z(finger_z, 1e9, lo, hi) && geometry::intersects(gripper, fb)) return true;
        if (w.grasped) {
            const Pose4 piece = compose(ee, w.grasp_offset);
            if (overlaps_z(piece.z, piece.z + p.piece_height, lo, hi) &&
                geometry::intersects(piece_footprint(w.piece_shape, piece), fb)) {
                return true;
            }
        }
    }
    return false;
}

bool can_grasp(const WorldState& w)
{
    const WorldParams& p = w.params;
    const double tol = p.grasp_radius + kNumericalSlack;
    return std::abs(w.ee.x - w.piece_pose.x) <= tol && std::abs(w.ee.y - w.piece_pose.y) <= tol &&
           std::abs(w.ee.z - (w.piece_pose.z + p.grasp_height)) <= tol;
}

/// Lets a released piece fall onto whatever supports it.
void settle_piece(WorldState& w)
{
    const double floor = piece_floor(w, w.piece_pose);
    if (w.piece_pose.z > floor) w.piece_pose.z = floor;
}

StepResult step_door(const WorldState& w, const Action& a)
{
    WorldState n = w;
    n.contact = false;
    DoorSpec door = w.door.value();
    const Pose4 target = apply_delta(n.ee, a.d);
    const double theta = std::atan2(target.y - door.hinge.y(), target.x - door.hinge.x());
    door.angle = theta;
    n.ee = {door.hinge.x() + door.radius * std::cos(theta), door.hinge.y() + door.radius * std::sin(theta), door.z,
            wrap_angle(theta)};
    n.door = door;
    return {n, observe(n)};
}

}  // namespace

const char* to_string(Shape s)
{
    switch (s) {
        case Shape::Rect: return "rect";
        case Shape::Circle: return "circle";
        case Shape::Square: return "square";
    }
    return "?";
}

Shape shape_from_string(const std::string& s)
{
    if (s == "rect") return Shape::Rect;
    if (s == "circle") return Shape::Circle;
    if (s == "square") return Shape::Square;
    throw Error(ErrorCode::InvalidConfig, "unknown shape '" + s + "'");
}

const char* to_string(Grip g)
{
    switch (g) {
        case Grip::Hold: return "hold";
        case Grip::Open: return "open";
        case Grip::Close: return "close";
    }
    return "?";
}

Grip grip_from_string(const std::string& s)
{
    if (s == "hold") return Grip::Hold;
    if (s == "open") return Grip::Open;
    if (s == "close") return Grip::Close;
    throw Error(ErrorCode::MalformedMessage, "unknown grip '" + s + "'");
}

const char* to_string(Outcome::Kind k)
{
    switch (k) {
        case Outcome::Kind::Success: return "Success";
        case Outcome::Kind::PartialSuccess: return "PartialSuccess";
        case Outcome::Kind::Failure: return "Failure";
    }
    return "?";
}

const char* to_string(Outcome::Reason r)
{
    switch (r) {
        case Outcome::Reason::None: return "";
        case Outcome::Reason::HitObstacle: return "HitObstacle";
        case Outcome::Reason::NotInHole: return "NotInHole";
    }
    return "?";
}

Action clamp_action(const Action& a, const StepLimits& limits)
{
    Action c = a;
    c.d.x = std::clamp(a.d.x, -limits.max_translation, limits.max_translation);
    c.d.y = std::clamp(a.d.y, -limits.max_translation, limits.max_translation);
    c.d.z = std::clamp(a.d.z, -limits.max_translation, limits.max_translation);
    c.d.yaw = std::clamp(a.d.yaw, -limits.max_yaw, limits.max_yaw);
    return c;
}

Vec2 hole_grid_center(int cell)
{
    const int col = cell % 4;
    const int row = cell / 4;
    return {(col - 1.5) * kHolePitch, 0.0625 + row * kHolePitch};
}

Vec2 start_cell_center(int cell)
{
    const int col = cell % 4;
    const int row = cell / 4;
    return {(col - 1.5) * kHolePitch, -0.17 - row * kHolePitch};
}

Pose4 home_pose() { return {0.0, -0.30, kClearanceZ, 0.0}; }

Workspace workspace() { return {}; }

geometry::Footprint piece_footprint(Shape shape, const Pose4& pose)
{
    switch (shape) {
        case Shape::Rect: return geometry::Footprint::make_rect(xy(pose), {0.025, 0.015}, pose.yaw);
        case Shape::Square: return geometry::Footprint::make_rect(xy(pose), {0.0175, 0.0175}, pose.yaw);
        case Shape::Circle: return geometry::Footprint::make_disc(xy(pose), 0.02);
    }
    return {};
}

geometry::Footprint hole_footprint(const BoardSpec& board, int hole)
{
    const auto i = static_cast<std::size_t>(hole);
    return piece_footprint(board.hole_shapes[i], {board.hole_centers[i].x(), board.hole_centers[i].y(), 0.0, 0.0});
}

geometry::Footprint gripper_footprint(const WorldParams& params, const Pose4& ee)
{
    return geometry::Footprint::make_rect(xy(ee), {params.gripper_half, params.gripper_half}, ee.yaw);
}

geometry::OrientedRect box_footprint(const BoxSpec& box)
{
    return {{box.center.x(), box.center.y()}, {box.half_extents.x(), box.half_extents.y()}, box.yaw};
}

double yaw_residual(Shape shape, double yaw)
{
    switch (shape) {
        case Shape::Circle: return 0.0;
        case Shape::Rect: return std::abs(std::remainder(yaw, std::numbers::pi));
        case Shape::Square: return std::abs(std::remainder(yaw, std::numbers::pi / 2.0));
    }
    return 0.0;
}

bool aligned_with_goal(const WorldState& w, const Pose4& piece)
{
    if (w.goal_hole < 0) return false;
    const Vec2& c = w.board.hole_centers[static_cast<std::size_t>(w.goal_hole)];
    return std::hypot(piece.x - c.x(), piece.y - c.y()) < w.board.tol_insert &&
           yaw_residual(w.piece_shape, piece.yaw) < w.params.yaw_tol;
}

double lateral_error(const WorldState& w)
{
    const Vec2& c = w.board.hole_centers[static_cast<std::size_t>(w.goal_hole)];
    return std::hypot(w.piece_pose.x - c.x(), w.piece_pose.y - c.y());
}

std::pair<WorldState, PerceivedScene> make_task(const TaskConfig& config, std::uint64_t seed)
{
    if (config.start_cell < 0 || config.start_cell >= 8 || config.goal_cell < 0 || config.goal_cell >= 8) {
        throw Error(ErrorCode::InvalidConfig, "cells must lie in [0, 8)");
    }
    if (config.start_cell == config.goal_cell) {
        throw Error(ErrorCode::InvalidConfig, "start region equals goal region");
    }
    if (!(config.tol_insert > 0.0) || config.eps_percept < 0.0) {
        throw Error(ErrorCode::InvalidConfig, "tol_insert must be positive and eps_percept non-negative");
    }

    Rng rng(seed);
    WorldState w;
    w.piece_shape = config.shape;
    w.goal_hole = config.goal_cell;
    w.board.tol_insert = config.tol_insert;
    for (int i = 0; i < 8; ++i) {
        w.board.hole_centers[static_cast<std::size_t>(i)] = hole_grid_center(i);
        w.board.hole_shapes[static_cast<std::size_t>(i)] = default_hole_shape(i);
    }
    w.board.hole_shapes[static_cast<std::size_t>(config.goal_cell)] = config.shape;

    const Vec2 start = start_cell_center(config.start_cell);
    w.piece_pose = {start.x(), start.y(), w.board.surface_z, 0.0};
    w.ee = home_pose();

    if (config.obstacle) {
        const Vec2 goal = w.board.hole_centers[static_cast<std::size_t>(config.goal_cell)];
        const Vec2 dir = (goal - start).normalized();
        const Vec2 perp{-dir.y(), dir.x()};
        const double length = (goal - start).norm();
        std::uniform_real_distribution<double> along(0.45, 0.50);
        std::uniform_real_distribution<double> across(-0.005, 0.005);
        bool placed = false;
        for (int attempt = 0; attempt < 50 && !placed; ++attempt) {
            BoxSpec box;
            const Vec2 c = start + along(rng) * length * dir + across(rng) * perp;
            box.center = {c.x(), c.y(), 0.02};
            box.yaw = std::atan2(dir.y(), dir.x());
            const geometry::OrientedRect fp = box_footprint(box);
            const bool blocks = geometry::segment_intersects(start, goal, fp);
            const bool clear_goal = geometry::signed_distance(fp, goal) >= 0.065;
            const bool clear_start = geometry::signed_distance(fp, start) >= 0.06;
            const bool clear_home = geometry::signed_distance(fp, xy(home_pose())) >= 0.06;
            if (blocks && clear_goal && clear_start && clear_home) {
                w.obstacles.push_back(box);
                placed = true;
            }
        }
        if (!placed) throw Error(ErrorCode::Unplaceable, "no obstacle placement blocks the start-goal segment");
    }

    PerceivedScene scene;
    scene.eps_percept = config.eps_percept;
    std::uniform_real_distribution<double> noise(-config.eps_percept, config.eps_percept);
    auto jitter = [&]() { return config.eps_percept > 0.0 ? noise(rng) : 0.0; };
    for (std::size_t i = 0; i < 8; ++i) {
        const double dx = jitter();
        const double dy = jitter();
        scene.hole_centers_hat[i] = w.board.hole_centers[i] + Vec2{dx, dy};
    }
    for (const BoxSpec& box : w.obstacles) {
        BoxSpec hat = box;
        const double dx = jitter();
        const double dy = jitter();
        hat.center += Eigen::Vector3d{dx, dy, 0.0};
        scene.obstacles_hat.push_back(hat);
    }
    scene.piece_pose_hat = w.piece_pose;
    const double px = jitter();
    const double py = jitter();
    scene.piece_pose_hat.x += px;
    scene.piece_pose_hat.y += py;
    return {w, scene};
}

std::pair<WorldState, PerceivedScene> make_door_task(std::uint64_t seed)
{
    Rng rng(seed);
    std::uniform_real_distribution<double> hinge_jitter(-0.02, 0.02);
    WorldState w;
    w.goal_hole = -1;
    DoorSpec door;
    door.hinge = {hinge_jitter(rng), 0.05 + hinge_jitter(rng)};
    door.radius = 0.1;
    door.z = 0.03;
    door.angle = 0.0;
    door.target_angle = -std::numbers::pi / 4.0;
    w.door = door;
    w.ee = {door.hinge.x() + door.radius, door.hinge.y(), door.z, 0.0};
    // The handle is not a free piece; park it under the gripper for bookkeeping.
    w.piece_pose = w.ee;

    PerceivedScene scene;
    scene.eps_percept = 0.0;
    scene.door_hat = door;
    scene.piece_pose_hat = w.piece_pose;
    return {w, scene};
}

StepResult step(const WorldState& w, const Action& a_in)
{
    const Action a = clamp_action(a_in, w.params.limits);
    if (w.door) return step_door(w, a);

    WorldState n = w;
    n.contact = false;
    const WorldParams& p = n.params;

    if (a.grip == Grip::Close && !n.grasped && can_grasp(n)) {
        n.grasped = true;
        n.grasp_offset = relative(n.ee, n.piece_pose);
    } else if (a.grip == Grip::Open && n.grasped) {
        n.grasped = false;
        settle_piece(n);
    }

    const double span = std::max({std::abs(a.d.x), std::abs(a.d.y), std::abs(a.d.z)});
    const int substeps =
        std::max({1, static_cast<int>(std::ceil(span / p.substep)), static_cast<int>(std::ceil(std::abs(a.d.yaw) / 0.01))});
    const Pose4 inc{a.d.x / substeps, a.d.y / substeps, a.d.z / substeps, a.d.yaw / substeps};

    Pose4 cur = n.ee;
    for (int i = 0; i < substeps; ++i) {
        Pose4 cand = apply_delta(cur, inc);
        if (hits_obstacle(n, cand)) {
            n.contact = true;
            n.obstacle_hit = true;
            break;
        }
        if (n.grasped) {
            const Pose4 piece_cur = compose(cur, n.grasp_offset);
            Pose4 piece_cand = compose(cand, n.grasp_offset);
            if (piece_cur.z < n.board.surface_z - kNumericalSlack && !aligned_with_goal(n, piece_cand)) {
                // Inside the hole: the walls block lateral motion that breaks alignment.
                cand.x = cur.x;
                cand.y = cur.y;
                cand.yaw = cur.yaw;
                piece_cand = compose(cand, n.grasp_offset);
                n.contact = true;
            }
            const double floor = piece_floor(n, piece_cand);
            if (piece_cand.z < floor) {
                if (floor - piece_cand.z > kNumericalSlack) n.contact = true;
                cand.z += floor - piece_cand.z;
            }
        } else {
            const double floor = n.board.surface_z + p.grasp_height;
            if (cand.z < floor) {
                if (floor - cand.z > kNumericalSlack) n.contact = true;
                cand.z = floor;
            }
        }
        cur = cand;
    }
    n.ee = cur;

    if (n.grasped) {
        n.piece_pose = compose(n.ee, n.grasp_offset);
        const bool resting = std::abs(n.piece_pose.z - n.board.surface_z) <= kNumericalSlack;
        if (resting && aligned_with_goal(n, n.piece_pose)) {
            // Sliding into alignment: the piece drops in and the compliant gripper follows.
            n.ee.z -= n.board.lip_depth;
            n.piece_pose = compose(n.ee, n.grasp_offset);
        }
    }
    n.inserted_depth = std::max(0.0, n.board.surface_z - n.piece_pose.z);
    if (std::abs(n.inserted_depth - n.board.lip_depth) <= kNumericalSlack) n.inserted_depth = n.board.lip_depth;
    return {n, observe(n)};
}

Observation observe(const WorldState& w) { return {w.ee, w.contact, render_patch(w)}; }

RasterLayers render_layers(const WorldState& w)
{
    RasterLayers layers;
    if (w.door || w.goal_hole < 0) return layers;
    const Raster& shape = layers.hole;
    const Vec2 c = w.board.hole_centers[static_cast<std::size_t>(w.goal_hole)];
    const double px = kWindowSize / shape.w;
    constexpr int kSuper = 4;
    const geometry::Footprint hole = hole_footprint(w.board, w.goal_hole);
    const geometry::Footprint piece = piece_footprint(w.piece_shape, w.piece_pose);
    const geometry::Footprint marker = geometry::Footprint::make_rect(xy(w.ee), {0.004, 0.004}, 0.0);
    const double weight = 1.0 / (kSuper * kSuper);
    for (int row = 0; row < shape.h; ++row) {
        for (int col = 0; col < shape.w; ++col) {
            double ch = 0.0, cp = 0.0, ce = 0.0;
            for (int si = 0; si < kSuper; ++si) {
                for (int sj = 0; sj < kSuper; ++sj) {
                    const Vec2 q{c.x() - kWindowSize / 2.0 + (col + (sj + 0.5) / kSuper) * px,
                                 c.y() + kWindowSize / 2.0 - (row + (si + 0.5) / kSuper) * px};
                    if (hole.contains(q)) ch += weight;
                    if (piece.contains(q)) cp += weight;
                    if (marker.contains(q)) ce += weight;
                }
            }
            layers.hole.at(row, col) = ch;
            layers.piece.at(row, col) = cp;
            layers.ee.at(row, col) = ce;
        }
    }
    return layers;
}

Raster render_patch(const WorldState& w)
{
    const RasterLayers layers = render_layers(w);
    Raster r;
    for (std::size_t i = 0; i < r.pixels.size(); ++i) {
        r.pixels[i] = std::max({0.33 * layers.hole.pixels[i], 0.66 * layers.piece.pixels[i], 1.0 * layers.ee.pixels[i]});
    }
    return r;
}

Outcome check_outcome(const WorldState& w, int goal_hole)
{
    if (w.obstacle_hit) return Outcome::failure(Outcome::Reason::HitObstacle);
    if (w.door) {
        return std::abs(wrap_angle(w.door->angle - w.door->target_angle)) < 1e-6
                   ? Outcome::success()
                   : Outcome::failure(Outcome::Reason::NotInHole);
    }
    const Vec2& c = w.board.hole_centers[static_cast<std::size_t>(goal_hole)];
    const double err = std::hypot(w.piece_pose.x - c.x(), w.piece_pose.y - c.y());
    if (w.inserted_depth >= w.board.lip_depth && err < w.board.tol_insert) return Outcome::success();
    if (geometry::intersects(piece_footprint(w.piece_shape, w.piece_pose), hole_footprint(w.board, goal_hole))) {
        return Outcome::partial();
    }
    return Outcome::failure(Outcome::Reason::NotInHole);
}

}  // namespace skillpatch::world
