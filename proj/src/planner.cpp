#include "skillpatch/planner.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <random>

#include "skillpatch/common.hpp"

namespace skillpatch::planner {

namespace {

using geometry::Footprint;
using world::Grip;

constexpr double kSlack = 1e-9;

Footprint obstacle_footprint(const world::BoxSpec& box)
{
    return Footprint::make_rect({box.center.x(), box.center.y()}, {box.half_extents.x(), box.half_extents.y()},
                                box.yaw);
}

bool overlaps_z(double lo_a, double hi_a, double lo_b, double hi_b) { return lo_a < hi_b && lo_b < hi_a; }

bool aligned_with_perceived_goal(const ApproxModel& m, const Pose4& piece)
{
    const auto& c = m.board.hole_centers[static_cast<std::size_t>(m.goal_hole)];
    return std::hypot(piece.x - c.x(), piece.y - c.y()) < m.board.tol_insert &&
           world::yaw_residual(m.piece_shape, piece.yaw) < m.params.yaw_tol;
}

/// Vertical extent swept over a segment, used to decide which obstacles are relevant.
struct ZBand {
    double finger_lo;
    double piece_lo;
    double piece_hi;
};

ZBand band_of(const ModelState& s, const Pose4& a, const Pose4& b, const world::WorldParams& p)
{
    const double lo = std::min(a.z, b.z);
    const double hi = std::max(a.z, b.z);
    return {lo - p.grasp_height, lo + s.grasp_offset.z, hi + s.grasp_offset.z + p.piece_height};
}

/// Smallest padded clearance to the perceived obstacles minus what is demanded (negative = too close).
/// 1-Lipschitz in the footprint displacement, which lets segments be certified continuously.
double obstacle_clearance(const ModelState& s, const ApproxModel& m, const ZBand& z)
{
    const Footprint gripper = world::gripper_footprint(m.params, s.ee);
    const Footprint piece = world::piece_footprint(m.piece_shape, compose(s.ee, s.grasp_offset));
    double worst = std::numeric_limits<double>::infinity();
    for (const world::BoxSpec& box : m.scene.obstacles_hat) {
        const Footprint fb = obstacle_footprint(box);
        const double lo = box.center.z() - box.half_extents.z();
        const double hi = box.center.z() + box.half_extents.z();
        if (overlaps_z(z.finger_lo, 1e9, lo, hi)) {
            worst = std::min(worst, geometry::separation(gripper, fb) - m.margin - m.obstacle_padding);
        }
        if (s.attached && overlaps_z(z.piece_lo, z.piece_hi, lo, hi)) {
            worst = std::min(worst, geometry::separation(piece, fb) - m.margin - m.obstacle_padding - m.piece_padding);
        }
    }
    return worst;
}

bool board_violation(const ModelState& s, const ApproxModel& m)
{
    const double surface = m.board.surface_z;
    if (s.attached) {
        const Pose4 piece = compose(s.ee, s.grasp_offset);
        if (piece.z < surface - kSlack) {
            if (!aligned_with_perceived_goal(m, piece)) return true;
            if (piece.z < surface - m.board.lip_depth - kSlack) return true;
        }
        return false;
    }
    return s.ee.z - m.params.grasp_height < surface - kSlack;
}

/// Unpadded interpenetration with the perceived geometry; what the model reports as contact.
bool penetrates(const ModelState& s, const ApproxModel& m)
{
    if (board_violation(s, m)) return true;
    const ZBand z = band_of(s, s.ee, s.ee, m.params);
    const Footprint gripper = world::gripper_footprint(m.params, s.ee);
    const Footprint piece = world::piece_footprint(m.piece_shape, compose(s.ee, s.grasp_offset));
    for (const world::BoxSpec& box : m.scene.obstacles_hat) {
        const Footprint fb = obstacle_footprint(box);
        const double lo = box.center.z() - box.half_extents.z();
        const double hi = box.center.z() + box.half_extents.z();
        if (overlaps_z(z.finger_lo, 1e9, lo, hi) && geometry::intersects(gripper, fb)) return true;
        if (s.attached && overlaps_z(z.piece_lo, z.piece_hi, lo, hi) && geometry::intersects(piece, fb)) return true;
    }
    return false;
}

// Bounding radius of every piece footprint about its own centre.
constexpr double kPieceReach = 0.0292;

/// Upper bound on how far any footprint point moves between two poses.
double displacement_bound(const ModelState& s, const Pose4& a, const Pose4& b, const ApproxModel& m)
{
    double reach = m.params.gripper_half * std::numbers::sqrt2;
    if (s.attached) reach = std::max(reach, std::hypot(s.grasp_offset.x, s.grasp_offset.y) + kPieceReach);
    return std::hypot(b.x - a.x, b.y - a.y) + reach * std::abs(wrap_angle(b.yaw - a.yaw));
}

bool certify(const ModelState& proto, const Pose4& a, const Pose4& b, double fa, double fb, const ZBand& z,
             const ApproxModel& m, int depth)
{
    const double d = displacement_bound(proto, a, b, m);
    if ((fa + fb - d) / 2.0 >= 0.0) return true;
    if (d < 1e-9 || depth > 40) return true;
    const Pose4 mid = interpolate(a, b, 0.5);
    ModelState probe = proto;
    probe.ee = mid;
    const double fm = obstacle_clearance(probe, m, z);
    if (fm < 0.0) return false;
    return certify(proto, a, mid, fa, fm, z, m, depth + 1) && certify(proto, mid, b, fm, fb, z, m, depth + 1);
}

bool within_workspace(const Pose4& p)
{
    const world::Workspace ws = world::workspace();
    return p.x >= ws.x_lo && p.x <= ws.x_hi && p.y >= ws.y_lo && p.y <= ws.y_hi;
}

bool can_believe_grasp(const ApproxModel& m, const ModelState& s)
{
    const Pose4& piece = m.scene.piece_pose_hat;
    const double tol = m.params.grasp_radius + kSlack;
    return std::abs(s.ee.x - piece.x) <= tol && std::abs(s.ee.y - piece.y) <= tol &&
           std::abs(s.ee.z - (piece.z + m.params.grasp_height)) <= tol;
}

struct Tree {
    std::vector<Pose4> nodes;
    std::vector<int> parent;

    int nearest(const Pose4& q) const
    {
        int best = 0;
        double best_d = std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < nodes.size(); ++i) {
            const double d = pose_distance(nodes[i], q);
            if (d < best_d) {
                best_d = d;
                best = static_cast<int>(i);
            }
        }
        return best;
    }

    std::vector<Pose4> branch(int leaf) const
    {
        std::vector<Pose4> out;
        for (int i = leaf; i >= 0; i = parent[static_cast<std::size_t>(i)]) out.push_back(nodes[static_cast<std::size_t>(i)]);
        return out;
    }
};

enum class Extend { Trapped, Advanced, Reached };

struct Extender {
    const ApproxModel& model;
    const RrtParams& params;
    bool attached;
    Pose4 offset;

    bool edge_free(const Pose4& a, const Pose4& b) const
    {
        return segment_free({a, attached, offset}, b, model, params.resolution);
    }

    Extend extend(Tree& tree, const Pose4& target) const
    {
        const int near = tree.nearest(target);
        const Pose4 q_near = tree.nodes[static_cast<std::size_t>(near)];
        const double d = pose_distance(q_near, target);
        const bool reaches = d <= params.step;
        const Pose4 q_new = reaches ? target : interpolate(q_near, target, params.step / d);
        if (within_workspace(q_new) && edge_free(q_near, q_new)) {
            tree.nodes.push_back(q_new);
            tree.parent.push_back(near);
            return reaches ? Extend::Reached : Extend::Advanced;
        }
        // Keep whatever progress was collision-free up to the blocking sample.
        const double len = pose_distance(q_near, q_new);
        const int n = static_cast<int>(std::ceil(len / params.resolution));
        int last_free = 0;
        for (int i = 1; i <= n; ++i) {
            const Pose4 q = interpolate(q_near, q_new, static_cast<double>(i) / n);
            if (!within_workspace(q) || !collision_free({q, attached, offset}, model)) break;
            last_free = i;
        }
        if (last_free == 0 || last_free == n) return Extend::Trapped;
        tree.nodes.push_back(interpolate(q_near, q_new, static_cast<double>(last_free) / n));
        tree.parent.push_back(near);
        return Extend::Advanced;
    }

    Extend connect(Tree& tree, const Pose4& target) const
    {
        Extend r = Extend::Advanced;
        while (r == Extend::Advanced) r = extend(tree, target);
        return r;
    }
};

/// Yaw is drawn from the arc between the endpoint orientations widened by `yaw_slack`;
/// full-circle yaw samples would spend most of each step rotating.
Pose4 sample_pose(Rng& rng, const RrtParams& params, double yaw_from, double yaw_span)
{
    const world::Workspace ws = world::workspace();
    std::uniform_real_distribution<double> ux(ws.x_lo, ws.x_hi), uy(ws.y_lo, ws.y_hi), uz(params.z_lo, params.z_hi),
        uyaw(-params.yaw_slack, yaw_span + params.yaw_slack);
    const double x = ux(rng);
    const double y = uy(rng);
    const double z = uz(rng);
    const double yaw = wrap_angle(yaw_from + uyaw(rng));
    return {x, y, z, yaw};
}

/// Point at arc length `s` along the path and the index of the segment containing it.
std::pair<std::size_t, Pose4> point_at(const std::vector<Pose4>& path, double s)
{
    for (std::size_t i = 0; i + 1 < path.size(); ++i) {
        const double seg = pose_distance(path[i], path[i + 1]);
        if (s <= seg || i + 2 == path.size()) {
            const double t = seg > 0.0 ? std::clamp(s / seg, 0.0, 1.0) : 0.0;
            return {i, interpolate(path[i], path[i + 1], t)};
        }
        s -= seg;
    }
    return {0, path.front()};
}

int steps_for(const Pose4& d, const world::StepLimits& limits)
{
    const double span = std::max({std::abs(d.x), std::abs(d.y), std::abs(d.z)});
    const int a = static_cast<int>(std::ceil(span / limits.max_translation - 1e-12));
    const int b = static_cast<int>(std::ceil(std::abs(d.yaw) / limits.max_yaw - 1e-12));
    return std::max({1, a, b});
}

}  // namespace

const char* to_string(PlanStatus s)
{
    switch (s) {
        case PlanStatus::Found: return "Found";
        case PlanStatus::NotFound: return "NotFound";
        case PlanStatus::StartInCollision: return "StartInCollision";
        case PlanStatus::GoalInCollision: return "GoalInCollision";
    }
    return "?";
}

ApproxModel ApproxModel::from_scene(const world::PerceivedScene& scene, const world::BoardSpec& cad_board,
                                    world::Shape shape, int goal_hole)
{
    ApproxModel m;
    m.scene = scene;
    m.board = cad_board;
    m.board.hole_centers = scene.hole_centers_hat;
    m.piece_shape = shape;
    m.goal_hole = goal_hole;
    m.obstacle_padding = scene.eps_percept;
    m.piece_padding = scene.eps_percept;
    return m;
}

Prediction predict(const ApproxModel& model, const ModelState& s, const Action& a)
{
    Prediction out;
    out.state = s;
    if (a.grip == Grip::Close && !s.attached && can_believe_grasp(model, s)) {
        out.state.attached = true;
        out.state.grasp_offset = relative(s.ee, model.scene.piece_pose_hat);
    } else if (a.grip == Grip::Open) {
        out.state.attached = false;
    }
    const ModelState moving = out.state;
    out.state.ee = apply_delta(s.ee, a.d);
    if (model.scene.door_hat) return out;  // the lever is modelled exactly; nothing to penetrate

    const int n = std::max(1, static_cast<int>(std::ceil(std::max({std::abs(a.d.x), std::abs(a.d.y), std::abs(a.d.z)}) /
                                                          model.params.substep)));
    for (int i = 1; i <= n && !out.contact_predicted; ++i) {
        ModelState probe = moving;
        probe.ee = interpolate(s.ee, out.state.ee, static_cast<double>(i) / n);
        out.contact_predicted = penetrates(probe, model);
    }
    return out;
}

bool collision_free(const ModelState& s, const ApproxModel& model)
{
    if (model.scene.door_hat) return true;
    return !board_violation(s, model) && obstacle_clearance(s, model, band_of(s, s.ee, s.ee, model.params)) >= 0.0;
}

bool segment_free(const ModelState& a, const Pose4& b, const ApproxModel& model, double resolution)
{
    if (model.scene.door_hat) return true;
    const ZBand z = band_of(a, a.ee, b, model.params);
    const double d = pose_distance(a.ee, b);
    const int n = std::max(1, static_cast<int>(std::ceil(d / resolution)));
    ModelState probe = a;
    Pose4 prev{};
    double f_prev = 0.0;
    for (int i = 0; i <= n; ++i) {
        probe.ee = interpolate(a.ee, b, static_cast<double>(i) / n);
        if (board_violation(probe, model)) return false;
        const double f = obstacle_clearance(probe, model, z);
        if (f < 0.0) return false;
        // Between samples the clearance may dip; certify the gap with the Lipschitz bound.
        if (i > 0 && !certify(a, prev, probe.ee, f_prev, f, z, model, 0)) return false;
        prev = probe.ee;
        f_prev = f;
    }
    return true;
}

double path_length(const std::vector<Pose4>& path)
{
    double total = 0.0;
    for (std::size_t i = 0; i + 1 < path.size(); ++i) total += pose_distance(path[i], path[i + 1]);
    return total;
}

PathResult birrt(const ModelState& start, const Pose4& goal, const ApproxModel& model, const RrtParams& params,
                 std::uint64_t seed)
{
    PathResult result;
    if (!collision_free(start, model)) {
        result.status = PlanStatus::StartInCollision;
        return result;
    }
    if (!collision_free({goal, start.attached, start.grasp_offset}, model)) {
        result.status = PlanStatus::GoalInCollision;
        return result;
    }
    if (pose_distance(start.ee, goal) == 0.0) {
        result.status = PlanStatus::Found;
        result.path = {start.ee};
        result.restart = 0;
        return result;
    }

    const Extender ext{model, params, start.attached, start.grasp_offset};
    const double yaw_span = wrap_angle(goal.yaw - start.ee.yaw);
    const double yaw_from = yaw_span >= 0.0 ? start.ee.yaw : goal.yaw;
    Rng rng(seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    for (int restart = 0; restart < params.restarts; ++restart) {
        Tree from_start{{start.ee}, {-1}};
        Tree from_goal{{goal}, {-1}};
        Tree* a = &from_start;
        Tree* b = &from_goal;
        for (int it = 0; it < params.iterations; ++it) {
            const Pose4 q_rand = unit(rng) < params.goal_bias ? b->nodes.front() : sample_pose(rng, params, yaw_from, std::abs(yaw_span));
            if (ext.extend(*a, q_rand) != Extend::Trapped) {
                const Pose4 q_new = a->nodes.back();
                if (ext.connect(*b, q_new) == Extend::Reached) {
                    std::vector<Pose4> head = from_start.branch(static_cast<int>(from_start.nodes.size()) - 1);
                    std::vector<Pose4> tail = from_goal.branch(static_cast<int>(from_goal.nodes.size()) - 1);
                    std::reverse(head.begin(), head.end());
                    // head ends and tail begins with the shared connection node.
                    head.insert(head.end(), tail.begin() + 1, tail.end());
                    result.status = PlanStatus::Found;
                    result.restart = restart;
                    result.path = shortcut_smooth(head, start.attached, start.grasp_offset, model,
                                                  params.smoothing_iterations, derive_seed(seed, 1, restart),
                                                  params.resolution);
                    return result;
                }
            }
            std::swap(a, b);
        }
    }
    result.status = PlanStatus::NotFound;
    return result;
}

std::vector<Pose4> shortcut_smooth(const std::vector<Pose4>& input, bool attached, const Pose4& offset,
                                   const ApproxModel& model, int iterations, std::uint64_t seed, double resolution)
{
    std::vector<Pose4> path = input;
    if (path.size() < 3) return path;
    auto free = [&](const Pose4& a, const Pose4& b) { return segment_free({a, attached, offset}, b, model, resolution); };
    if (free(path.front(), path.back())) return {path.front(), path.back()};

    Rng rng(seed);
    for (int it = 0; it < iterations && path.size() > 2; ++it) {
        const double total = path_length(path);
        std::uniform_real_distribution<double> u(0.0, total);
        double s1 = u(rng), s2 = u(rng);
        if (s1 > s2) std::swap(s1, s2);
        if (s2 - s1 < 1e-9) continue;
        const auto [i1, p1] = point_at(path, s1);
        const auto [i2, p2] = point_at(path, s2);
        if (i1 == i2) continue;  // same segment: already straight
        if (!free(p1, p2)) continue;
        std::vector<Pose4> next(path.begin(), path.begin() + static_cast<std::ptrdiff_t>(i1) + 1);
        if (pose_distance(next.back(), p1) > 0.0) next.push_back(p1);
        next.push_back(p2);
        for (std::size_t k = i2 + 1; k < path.size(); ++k) {
            if (pose_distance(next.back(), path[k]) > 0.0) next.push_back(path[k]);
        }
        if (path_length(next) < total - 1e-12) path = std::move(next);
    }
    return path;
}

Pose4 select_goal_config(const std::vector<Pose4>& candidates, const ModelState& start, const ApproxModel& model,
                         const RrtParams& params, std::uint64_t seed)
{
    std::vector<std::size_t> order(candidates.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return pose_distance(start.ee, candidates[a]) < pose_distance(start.ee, candidates[b]);
    });
    for (std::size_t idx : order) {
        if (birrt(start, candidates[idx], model, params, derive_seed(seed, 2, idx)).status == PlanStatus::Found) {
            return candidates[idx];
        }
    }
    throw Error(ErrorCode::NoFeasibleGoal, "no candidate goal configuration admits a plan");
}

void append_action(Plan& plan, const Action& a, const ApproxModel& model)
{
    if (plan.waypoints.empty()) plan.waypoints.push_back(plan.start);
    plan.actions.push_back(a);
    plan.waypoints.push_back(predict(model, plan.waypoints.back(), a).state);
}

void append_path(Plan& plan, const std::vector<Pose4>& path, const ApproxModel& model)
{
    if (plan.waypoints.empty()) plan.waypoints.push_back(plan.start);
    for (std::size_t i = 0; i + 1 < path.size(); ++i) {
        const Pose4 d = delta_between(path[i], path[i + 1]);
        const int n = steps_for(d, model.params.limits);
        for (int k = 0; k < n; ++k) {
            // Recompute the remaining delta from the chained pose so the segment ends on target.
            const Pose4 cur = plan.waypoints.back().ee;
            const Pose4 target = interpolate(path[i], path[i + 1], static_cast<double>(k + 1) / n);
            append_action(plan, {delta_between(cur, target), Grip::Hold}, model);
        }
    }
}

Plan plan_door(const world::DoorSpec& door, double target_angle)
{
    Plan plan;
    const auto pose_at = [&](double theta) {
        return Pose4{door.hinge.x() + door.radius * std::cos(theta), door.hinge.y() + door.radius * std::sin(theta),
                     door.z, wrap_angle(theta)};
    };
    plan.start = {pose_at(door.angle), false, {}};
    plan.goal_set_id = "door";
    plan.waypoints.push_back(plan.start);
    const double span = target_angle - door.angle;
    const int n = static_cast<int>(std::ceil(std::abs(span) / 0.1 - 1e-12));
    for (int k = 0; k < n; ++k) {
        const Pose4 cur = plan.waypoints.back().ee;
        const Pose4 next = pose_at(door.angle + span * (k + 1) / n);
        const Action a{delta_between(cur, next), Grip::Hold};
        plan.actions.push_back(a);
        ModelState s = plan.waypoints.back();
        s.ee = apply_delta(cur, a.d);
        plan.waypoints.push_back(s);
    }
    return plan;
}

Plan plan_task(const ApproxModel& model, const ModelState& start, const GoalSet& goal, const RrtParams& params,
               std::uint64_t seed)
{
    if (model.scene.door_hat) return plan_door(*model.scene.door_hat, model.scene.door_hat->target_angle);

    Plan plan;
    plan.start = start;
    plan.goal_set_id = goal.id;
    plan.seed = seed;
    plan.params = params;
    const double clearance = world::kClearanceZ;

    if (const auto* pose_target = std::get_if<PoseTarget>(&goal.target)) {
        ModelState from = start;
        std::vector<Pose4> prefix;
        if (from.ee.z < params.z_lo) {
            // Leave the surface vertically before searching the transport band.
            Pose4 lifted = from.ee;
            lifted.z = clearance;
            if (!segment_free(from, lifted, model, params.resolution)) {
                throw Error(ErrorCode::PlanNotFound, "cannot lift clear of the surface");
            }
            prefix = {from.ee, lifted};
            from.ee = lifted;
        }
        const PathResult r = birrt(from, pose_target->pose, model, params, seed);
        if (r.status == PlanStatus::StartInCollision || r.status == PlanStatus::GoalInCollision) return plan;
        if (r.status != PlanStatus::Found) throw Error(ErrorCode::PlanNotFound, "birrt exhausted its restarts");
        if (!prefix.empty()) append_path(plan, prefix, model);
        append_path(plan, r.path, model);
        if (plan.waypoints.empty()) plan.waypoints.push_back(plan.start);
        return plan;
    }

    const int requested = std::get<HoleTarget>(goal.target).hole;
    const int hole = requested < 0 ? model.goal_hole : requested;
    const auto& hole_hat = model.board.hole_centers[static_cast<std::size_t>(hole)];
    const Pose4& piece_hat = model.scene.piece_pose_hat;
    const double insert_z = model.board.surface_z - model.board.lip_depth + model.params.grasp_height;

    // Grasp candidates: gripper yaw relative to the piece. Final ee yaw aligns the piece with the hole.
    std::vector<double> grasp_yaws{0.0, std::numbers::pi / 2.0};
    std::vector<Pose4> finals;
    for (double g : grasp_yaws) finals.push_back({hole_hat.x(), hole_hat.y(), insert_z, wrap_angle(g)});
    std::vector<std::size_t> order(finals.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return pose_distance(start.ee, finals[a]) < pose_distance(start.ee, finals[b]);
    });

    bool any_search_failure = false;
    for (std::size_t idx : order) {
        const double g = grasp_yaws[idx];
        Plan attempt = plan;
        ModelState cur = start;
        const std::uint64_t cseed = derive_seed(seed, 3, idx);

        if (!cur.attached) {
            const Pose4 pregrasp{piece_hat.x, piece_hat.y, clearance, wrap_angle(piece_hat.yaw + g)};
            Pose4 grasp = pregrasp;
            grasp.z = piece_hat.z + model.params.grasp_height;
            const PathResult approach = birrt(cur, pregrasp, model, params, derive_seed(cseed, 0, 0));
            if (approach.status != PlanStatus::Found) {
                any_search_failure |= approach.status == PlanStatus::NotFound;
                continue;
            }
            if (!segment_free({pregrasp, false, {}}, grasp, model, params.resolution)) continue;
            append_path(attempt, approach.path, model);
            append_path(attempt, {pregrasp, grasp}, model);
            append_action(attempt, {{}, Grip::Close}, model);
            cur = attempt.waypoints.back();
            if (!cur.attached) continue;
            if (!segment_free(cur, pregrasp, model, params.resolution)) continue;
            append_path(attempt, {grasp, pregrasp}, model);
            cur = attempt.waypoints.back();
        }

        const Pose4 above{hole_hat.x(), hole_hat.y(), clearance, wrap_angle(-cur.grasp_offset.yaw)};
        Pose4 inserted = above;
        inserted.z = insert_z;
        ModelState from = cur;
        std::vector<Pose4> prefix;
        if (from.ee.z < params.z_lo) {
            Pose4 lifted = from.ee;
            lifted.z = clearance;
            if (!segment_free(from, lifted, model, params.resolution)) continue;
            prefix = {from.ee, lifted};
            from.ee = lifted;
        }
        const PathResult transport = birrt(from, above, model, params, derive_seed(cseed, 0, 1));
        if (transport.status != PlanStatus::Found) {
            any_search_failure |= transport.status == PlanStatus::NotFound;
            continue;
        }
        if (!segment_free({above, true, cur.grasp_offset}, inserted, model, params.resolution)) continue;
        if (!prefix.empty()) append_path(attempt, prefix, model);
        append_path(attempt, transport.path, model);
        append_path(attempt, {above, inserted}, model);
        return attempt;
    }
    if (any_search_failure) throw Error(ErrorCode::PlanNotFound, "no grasp candidate admits a collision-free plan");
    return plan;  // every candidate was blocked at a start or end configuration
}

std::size_t grasp_lift_end(const Plan& plan)
{
    std::size_t k = 0;
    while (k < plan.actions.size() && plan.actions[k].grip != Grip::Close) ++k;
    if (k == plan.actions.size()) return k;
    ++k;
    while (k < plan.actions.size()) {
        const Pose4& d = plan.actions[k].d;
        if (!(d.z > 0.0) || d.x != 0.0 || d.y != 0.0) break;
        ++k;
    }
    return k;
}

Plan plan_prefix(const Plan& plan, std::size_t k)
{
    Plan p = plan;
    k = std::min(k, plan.actions.size());
    p.actions.resize(k);
    if (!p.waypoints.empty()) p.waypoints.resize(std::min(p.waypoints.size(), k + 1));
    return p;
}

void concat(Plan& head, const Plan& tail)
{
    if (head.waypoints.empty()) {
        head.waypoints = tail.waypoints;
    } else if (!tail.waypoints.empty()) {
        head.waypoints.insert(head.waypoints.end(), tail.waypoints.begin() + 1, tail.waypoints.end());
    }
    head.actions.insert(head.actions.end(), tail.actions.begin(), tail.actions.end());
}

Json to_json(const Plan& plan)
{
    Json wps = Json::array();
    for (const ModelState& s : plan.waypoints) wps.push_back(s.ee);
    Json attached = Json::array();
    for (const ModelState& s : plan.waypoints) attached.push_back(s.attached);
    return Json{{"waypoints", wps},
                {"attached", attached},
                {"actions", plan.actions},
                {"goal_set_id", plan.goal_set_id},
                {"seed", plan.seed},
                {"params",
                 {{"restarts", plan.params.restarts},
                  {"iterations", plan.params.iterations},
                  {"smoothing_iterations", plan.params.smoothing_iterations},
                  {"step", plan.params.step},
                  {"goal_bias", plan.params.goal_bias},
                  {"resolution", plan.params.resolution}}}};
}

}  // namespace skillpatch::planner
