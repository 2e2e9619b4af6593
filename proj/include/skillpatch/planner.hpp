#pragma once

#include <cstdint>
#include <string>
#include <variant>
#include <vector>

#include "skillpatch/io.hpp"
#include "skillpatch/pose.hpp"
#include "skillpatch/world.hpp"

namespace skillpatch::planner {

using world::Action;

/// Kinematic state tracked by the approximate model: pose plus believed attachment.
struct ModelState {
    Pose4 ee{};
    bool attached{false};
    Pose4 grasp_offset{};

    bool operator==(const ModelState&) const = default;
};

/// Approximate transition model: CAD geometry placed at the perceived poses.
/// Purely kinematic; contact is only predicted when the geometry would interpenetrate.
struct ApproxModel {
    world::PerceivedScene scene{};
    world::BoardSpec board{};  // hole centres replaced by the perceived ones
    world::WorldParams params{};
    world::Shape piece_shape{world::Shape::Rect};
    int goal_hole{0};
    double margin{0.002};           // clearance demanded from perceived obstacles
    double obstacle_padding{0.0};   // perceived-obstacle position uncertainty
    double piece_padding{0.0};      // uncertainty of the in-hand piece offset

    /// Builds the planner's model from what it perceives. Paddings default to eps_percept.
    static ApproxModel from_scene(const world::PerceivedScene& scene, const world::BoardSpec& cad_board,
                                  world::Shape shape, int goal_hole);
};

struct Prediction {
    ModelState state{};
    bool contact_predicted{false};
};

Prediction predict(const ApproxModel& model, const ModelState& s, const Action& a);

/// True iff the gripper (and the piece it is believed to hold) keeps `margin`
/// from the padded perceived obstacles and does not sink into solid board.
bool collision_free(const ModelState& s, const ApproxModel& model);

/// Every interpolated sample at `resolution` along a->b is collision-free.
bool segment_free(const ModelState& a, const Pose4& b, const ApproxModel& model, double resolution);

struct RrtParams {
    int restarts{5};
    int iterations{200};
    int smoothing_iterations{100};
    double step{0.02};
    double goal_bias{0.1};
    double resolution{0.005};
    double z_lo{0.025};
    double z_hi{0.045};
    double yaw_slack{0.3};  // yaw samples: endpoint arc widened by this much on each side
};

enum class PlanStatus { Found, NotFound, StartInCollision, GoalInCollision };
const char* to_string(PlanStatus s);

struct PathResult {
    PlanStatus status{PlanStatus::NotFound};
    std::vector<Pose4> path{};
    int restart{-1};
};

double path_length(const std::vector<Pose4>& path);

/// Bi-directional RRT with restarts followed by shortcut smoothing. The
/// attachment state of `start` holds along the whole path.
PathResult birrt(const ModelState& start, const Pose4& goal, const ApproxModel& model, const RrtParams& params,
                 std::uint64_t seed);

std::vector<Pose4> shortcut_smooth(const std::vector<Pose4>& path, bool attached, const Pose4& offset,
                                   const ApproxModel& model, int iterations, std::uint64_t seed,
                                   double resolution = 0.005);

/// Picks the candidate nearest to `start` (pose metric) among those birrt can reach;
/// ties go to the lower index. Throws NoFeasibleGoal when none is reachable.
Pose4 select_goal_config(const std::vector<Pose4>& candidates, const ModelState& start, const ApproxModel& model,
                         const RrtParams& params, std::uint64_t seed);

/// Goal either as the perceived goal hole (grasp, transport, descend) or as an
/// explicit pose such as a sample from the skill's initiation set.
struct HoleTarget {
    int hole{-1};  // negative: the model's goal hole
};
struct PoseTarget {
    Pose4 pose{};
};
struct GoalSet {
    std::variant<HoleTarget, PoseTarget> target{HoleTarget{}};
    std::string id{"S_g"};
};

struct Plan {
    ModelState start{};
    std::vector<ModelState> waypoints{};  // s_0 .. s_{n+1}
    std::vector<Action> actions{};         // a_0 .. a_n
    std::string goal_set_id{};
    std::uint64_t seed{0};
    RrtParams params{};

    bool empty() const { return actions.empty(); }
};

/// Splits a path into equal increments within the action step bounds and chains
/// `predict` so that waypoints are exactly reproducible.
void append_path(Plan& plan, const std::vector<Pose4>& path, const ApproxModel& model);
void append_action(Plan& plan, const Action& a, const ApproxModel& model);

/// Door-analog plan: linear interpolation of the handle angle in ceil(|dtheta|/0.1) steps.
Plan plan_door(const world::DoorSpec& door, double target_angle);

/// Throws Error(PlanNotFound) when no plan exists; a plan whose start or end
/// configuration is in collision comes back empty.
Plan plan_task(const ApproxModel& model, const ModelState& start, const GoalSet& goal, const RrtParams& params,
               std::uint64_t seed);

/// Index of the first action after the grasp and its vertical lift (actions.size() without a grasp).
std::size_t grasp_lift_end(const Plan& plan);
/// The first `k` actions and their k + 1 waypoints.
Plan plan_prefix(const Plan& plan, std::size_t k);
/// Appends `tail`, which must start where `head` ends.
void concat(Plan& head, const Plan& tail);

Json to_json(const Plan& plan);

}  // namespace skillpatch::planner
