#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "skillpatch/geometry.hpp"
#include "skillpatch/pose.hpp"

namespace skillpatch::world {

using geometry::Vec2;

enum class Shape { Rect, Circle, Square };
enum class Grip { Hold, Open, Close };

const char* to_string(Shape s);
Shape shape_from_string(const std::string& s);
const char* to_string(Grip g);
Grip grip_from_string(const std::string& s);

struct Action {
    Pose4 d{};  // world-frame delta (dx, dy, dz, dyaw)
    Grip grip{Grip::Hold};

    bool operator==(const Action&) const = default;
};

struct StepLimits {
    double max_translation{0.02};
    double max_yaw{0.1};
};

/// Clamps each component of the delta into the step bounds.
Action clamp_action(const Action& a, const StepLimits& limits);

/// Fixed geometric constants of the desk-scale cell.
struct WorldParams {
    double piece_height{0.02};
    double grasp_height{0.01};   // grasp point above the piece bottom
    double grasp_radius{0.01};   // per-axis capture window for closing the gripper
    double gripper_half{0.01};   // gripper footprint half-width
    double yaw_tol{0.05};        // orientation tolerance for insertion
    double substep{0.002};       // contact resolution of the true dynamics
    StepLimits limits{};
};

struct BoardSpec {
    std::array<Vec2, 8> hole_centers{};
    std::array<Shape, 8> hole_shapes{};
    double surface_z{0.0};
    double tol_insert{0.004};
    double lip_depth{0.01};
};

struct BoxSpec {
    Eigen::Vector3d center{0.0, 0.0, 0.02};
    Eigen::Vector3d half_extents{0.035, 0.04, 0.02};
    double yaw{0.0};
};

/// Lever handle rotating about a vertical hinge; the gripper holds the handle tip.
struct DoorSpec {
    Vec2 hinge{0.0, 0.0};
    double radius{0.1};
    double z{0.03};
    double angle{0.0};
    double target_angle{0.0};
};

struct WorldState {
    Pose4 ee{};
    Shape piece_shape{Shape::Rect};
    Pose4 piece_pose{};
    bool grasped{false};
    Pose4 grasp_offset{};
    BoardSpec board{};
    std::vector<BoxSpec> obstacles{};
    bool contact{false};
    double inserted_depth{0.0};
    int goal_hole{0};
    bool obstacle_hit{false};  // sticky: any obstacle contact during the episode
    std::optional<DoorSpec> door{};
    WorldParams params{};
};

struct PerceivedScene {
    std::array<Vec2, 8> hole_centers_hat{};
    std::vector<BoxSpec> obstacles_hat{};
    Pose4 piece_pose_hat{};
    double eps_percept{0.01};
    std::optional<DoorSpec> door_hat{};
};

struct Raster {
    int w{16};
    int h{16};
    std::vector<double> pixels = std::vector<double>(256, 0.0);

    double at(int row, int col) const { return pixels[static_cast<std::size_t>(row * w + col)]; }
    double& at(int row, int col) { return pixels[static_cast<std::size_t>(row * w + col)]; }
    bool operator==(const Raster&) const = default;
};

struct Observation {
    Pose4 ee{};
    bool contact{false};
    Raster raster{};

    bool operator==(const Observation&) const = default;
};

struct Outcome {
    enum class Kind { Success, PartialSuccess, Failure } kind{Kind::Failure};
    enum class Reason { None, HitObstacle, NotInHole } reason{Reason::None};

    static Outcome success() { return {Kind::Success, Reason::None}; }
    static Outcome partial() { return {Kind::PartialSuccess, Reason::None}; }
    static Outcome failure(Reason r) { return {Kind::Failure, r}; }

    bool operator==(const Outcome&) const = default;
};

const char* to_string(Outcome::Kind k);
const char* to_string(Outcome::Reason r);

struct TaskConfig {
    Shape shape{Shape::Rect};
    int start_cell{0};
    int goal_cell{5};
    bool obstacle{false};
    double eps_percept{0.01};
    double tol_insert{0.004};
    std::uint64_t seed{0};
};

struct StepResult {
    WorldState world;
    Observation obs;
};

// Layout of the cell. Holes sit on a 4x2 grid on the board; start regions are a
// matching 4x2 grid on the table in front of it.
constexpr double kHolePitch = 0.075;
constexpr double kClearanceZ = 0.035;
Vec2 hole_grid_center(int cell);
Vec2 start_cell_center(int cell);
Pose4 home_pose();

/// Workspace bounds for the end-effector (x, y).
struct Workspace {
    double x_lo{-0.20}, x_hi{0.20};
    double y_lo{-0.32}, y_hi{0.21};
};
Workspace workspace();

geometry::Footprint piece_footprint(Shape shape, const Pose4& pose);
geometry::Footprint hole_footprint(const BoardSpec& board, int hole);
geometry::Footprint gripper_footprint(const WorldParams& params, const Pose4& ee);
geometry::OrientedRect box_footprint(const BoxSpec& box);

/// Residual yaw of a piece relative to an axis-aligned hole, modulo the shape's symmetry.
double yaw_residual(Shape shape, double yaw);

/// True when the piece pose is aligned with the goal hole closely enough to drop in.
bool aligned_with_goal(const WorldState& w, const Pose4& piece);
double lateral_error(const WorldState& w);

std::pair<WorldState, PerceivedScene> make_task(const TaskConfig& config, std::uint64_t seed);
std::pair<WorldState, PerceivedScene> make_door_task(std::uint64_t seed);

StepResult step(const WorldState& w, const Action& a);
Observation observe(const WorldState& w);

/// Separate coverage layers of the goal-centred window, before intensity coding.
struct RasterLayers {
    Raster hole, piece, ee;
};
constexpr double kWindowSize = 0.096;
RasterLayers render_layers(const WorldState& w);
Raster render_patch(const WorldState& w);

Outcome check_outcome(const WorldState& w, int goal_hole);

}  // namespace skillpatch::world
