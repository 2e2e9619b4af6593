#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <numbers>

#include "skillpatch/common.hpp"
#include "skillpatch/planner.hpp"

using namespace skillpatch;
using namespace skillpatch::planner;
using world::Grip;
using world::Shape;

namespace {

struct Fixture {
    world::WorldState world;
    world::PerceivedScene scene;
    ApproxModel model;
};

Fixture exact_task(bool obstacle, Shape shape = Shape::Rect, int start_cell = 0, int goal_cell = 5,
                   std::uint64_t seed = 3)
{
    world::TaskConfig cfg;
    cfg.shape = shape;
    cfg.start_cell = start_cell;
    cfg.goal_cell = goal_cell;
    cfg.obstacle = obstacle;
    cfg.eps_percept = 0.0;
    auto [w, scene] = world::make_task(cfg, seed);
    auto model = ApproxModel::from_scene(scene, w.board, shape, goal_cell);
    return {w, scene, model};
}

world::BoxSpec box_at(double x, double y, double hx, double hy)
{
    world::BoxSpec b;
    b.center = {x, y, 0.02};
    b.half_extents = {hx, hy, 0.02};
    return b;
}

/// Empty scene plus a wall across y = wall_y with a centred gap of half-width `gap`.
ApproxModel corridor_model(double wall_y, double gap)
{
    Fixture f = exact_task(false);
    f.model.scene.obstacles_hat = {box_at(-gap - 0.1, wall_y, 0.1, 0.02), box_at(gap + 0.1, wall_y, 0.1, 0.02)};
    return f.model;
}

// Independent clearance oracle: axis-aligned gripper square against an axis-aligned box.
double aligned_square_box_gap(const Pose4& ee, double half, const world::BoxSpec& b)
{
    const double dx = std::max(0.0, std::abs(ee.x - b.center.x()) - half - b.half_extents.x());
    const double dy = std::max(0.0, std::abs(ee.y - b.center.y()) - half - b.half_extents.y());
    return std::hypot(dx, dy);
}

ModelState at(double x, double y, double z, double yaw = 0.0) { return {{x, y, z, yaw}, false, {}}; }

/// Densely re-samples every segment so the oracle does not share the planner's resolution.
bool dense_free(const std::vector<Pose4>& path, const ModelState& proto, const ApproxModel& m)
{
    for (std::size_t i = 0; i + 1 < path.size(); ++i) {
        for (int k = 0; k <= 200; ++k) {
            ModelState s = proto;
            s.ee = interpolate(path[i], path[i + 1], k / 200.0);
            if (!collision_free(s, m)) return false;
        }
    }
    return true;
}

}  // namespace

TEST_CASE("predict: zero action in free space changes nothing")
{
    Fixture f = exact_task(false);
    const ModelState s = at(0.0, -0.1, 0.05);
    const Prediction p = predict(f.model, s, {});
    CHECK(p.state == s);
    CHECK_FALSE(p.contact_predicted);
}

TEST_CASE("predict: descending into the perceived goal hole is believed free, beside it is not")
{
    Fixture f = exact_task(false);
    const auto c = f.model.board.hole_centers[5];
    const double gh = f.model.params.grasp_height;
    ModelState s{{c.x(), c.y(), gh + 0.004, 0.0}, true, {0.0, 0.0, -gh, 0.0}};
    const Action down{{0.0, 0.0, -0.012, 0.0}, Grip::Hold};
    const Prediction in = predict(f.model, s, down);
    CHECK_FALSE(in.contact_predicted);
    // Oracle: the piece bottom ends 8 mm below the surface, above the lip floor, and aligned.
    CHECK(compose(in.state.ee, in.state.grasp_offset).z == doctest::Approx(-0.008));

    s.ee.x += 0.01;  // lateral error beyond tol_insert: the board is solid here
    CHECK(predict(f.model, s, down).contact_predicted);
}

TEST_CASE("predict: lateral motion through a perceived obstacle predicts contact")
{
    Fixture f = exact_task(false);
    f.model.scene.obstacles_hat = {box_at(0.0, -0.1, 0.02, 0.02)};
    const ModelState s = at(-0.045, -0.1, 0.03);
    CHECK(predict(f.model, s, {{0.02, 0.0, 0.0, 0.0}, Grip::Hold}).contact_predicted);
    CHECK_FALSE(predict(f.model, s, {{-0.02, 0.0, 0.0, 0.0}, Grip::Hold}).contact_predicted);
}

TEST_CASE("predict: closing near the perceived piece attaches it at the relative offset")
{
    Fixture f = exact_task(false);
    const Pose4 piece = f.scene.piece_pose_hat;
    const ModelState s = at(piece.x + 0.003, piece.y, piece.z + f.model.params.grasp_height, 0.2);
    const Prediction p = predict(f.model, s, {{}, Grip::Close});
    REQUIRE(p.state.attached);
    const Pose4 recovered = compose(p.state.ee, p.state.grasp_offset);
    CHECK(recovered.x == doctest::Approx(piece.x));
    CHECK(recovered.y == doctest::Approx(piece.y));
    CHECK(recovered.yaw == doctest::Approx(piece.yaw));
}

TEST_CASE("collision_free: clear above, blocked inside, margin respected")
{
    Fixture f = exact_task(false);
    const world::BoxSpec b = box_at(0.0, -0.1, 0.03, 0.03);
    f.model.scene.obstacles_hat = {b};
    const double half = f.model.params.gripper_half;
    CHECK(collision_free(at(0.1, 0.1, 0.2), f.model));
    CHECK_FALSE(collision_free(at(0.0, -0.1, 0.03), f.model));
    for (double gap : {0.0005, 0.0015, 0.0019, 0.0021, 0.003, 0.01}) {
        const Pose4 ee{0.03 + half + gap, -0.1, 0.03, 0.0};
        const double oracle = aligned_square_box_gap(ee, half, b);
        CHECK(oracle == doctest::Approx(gap));
        CHECK(collision_free({ee, false, {}}, f.model) == (oracle >= f.model.margin));
    }
    // Fingertips may not sink below the surface.
    CHECK_FALSE(collision_free(at(0.1, 0.0, f.model.params.grasp_height - 0.001), f.model));
}

TEST_CASE("collision_free: padding inflates the perceived obstacle by eps")
{
    Fixture f = exact_task(false);
    f.model.scene.obstacles_hat = {box_at(0.0, -0.1, 0.03, 0.03)};
    const double half = f.model.params.gripper_half;
    const ModelState s = at(0.03 + half + 0.006, -0.1, 0.03);
    CHECK(collision_free(s, f.model));
    f.model.obstacle_padding = 0.01;
    CHECK_FALSE(collision_free(s, f.model));
}

TEST_CASE("birrt: start equal to goal yields a single waypoint")
{
    Fixture f = exact_task(false);
    const ModelState s = at(0.0, -0.1, 0.035);
    const PathResult r = birrt(s, s.ee, f.model, {}, 1);
    CHECK(r.status == PlanStatus::Found);
    REQUIRE(r.path.size() == 1);
    CHECK(r.path[0] == s.ee);
}

TEST_CASE("birrt: an empty scene collapses to the straight segment")
{
    Fixture f = exact_task(false);
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const ModelState s = at(-0.15, -0.28, 0.03, 0.3);
        const Pose4 g{0.15, 0.15, 0.04, -1.0};
        const PathResult r = birrt(s, g, f.model, {}, seed);
        REQUIRE(r.status == PlanStatus::Found);
        REQUIRE(r.path.size() == 2);
        CHECK(r.path.front() == s.ee);
        CHECK(r.path.back() == g);
    }
}

TEST_CASE("birrt: a goal inside a perceived obstacle returns an empty plan")
{
    Fixture f = exact_task(false);
    f.model.scene.obstacles_hat = {box_at(0.0, -0.1, 0.03, 0.03)};
    const ModelState s = at(0.0, -0.25, 0.035);
    const PathResult r = birrt(s, {0.0, -0.1, 0.035, 0.0}, f.model, {}, 4);
    CHECK(r.status == PlanStatus::GoalInCollision);
    CHECK(r.path.empty());
    const Plan p = plan_task(f.model, s, {PoseTarget{{0.0, -0.1, 0.035, 0.0}}, "S*_g"}, {}, 4);
    CHECK(p.empty());
    CHECK(birrt(at(0.0, -0.1, 0.035), s.ee, f.model, {}, 4).status == PlanStatus::StartInCollision);
}

TEST_CASE("shortcut_smooth: two-waypoint paths are unchanged")
{
    Fixture f = exact_task(false);
    const std::vector<Pose4> path{{0.0, -0.2, 0.03, 0.0}, {0.1, 0.0, 0.03, 0.0}};
    CHECK(shortcut_smooth(path, false, {}, f.model, 100, 9) == path);
}

TEST_CASE("shortcut_smooth: a zig-zag shortens strictly and keeps its endpoints")
{
    Fixture f = exact_task(false);
    std::vector<Pose4> zig;
    for (int i = 0; i <= 8; ++i) zig.push_back({-0.16 + 0.04 * i, (i % 2 ? 0.05 : -0.05), 0.035, 0.0});
    const auto out = shortcut_smooth(zig, false, {}, f.model, 100, 2);
    CHECK(path_length(out) < path_length(zig));
    CHECK(out.front() == zig.front());
    CHECK(out.back() == zig.back());
}

TEST_CASE("shortcut_smooth: a path hugging an obstacle stays collision-free")
{
    ApproxModel m = corridor_model(-0.05, 0.03);
    const std::vector<Pose4> hug{{0.0, -0.25, 0.035, 0.0}, {0.015, -0.1, 0.035, 0.0},  {0.015, -0.05, 0.035, 0.0},
                                 {-0.015, 0.0, 0.035, 0.0}, {0.0, 0.15, 0.035, 0.0}};
    const ModelState proto = at(0.0, 0.0, 0.0);
    REQUIRE(dense_free(hug, proto, m));
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const auto out = shortcut_smooth(hug, false, {}, m, 100, seed);
        CHECK(dense_free(out, proto, m));
        CHECK(path_length(out) <= path_length(hug) + 1e-12);
        CHECK(out.front() == hug.front());
        CHECK(out.back() == hug.back());
    }
}

TEST_CASE("select_goal_config: nearest feasible candidate wins")
{
    Fixture f = exact_task(false);
    const ModelState s = at(0.0, -0.25, 0.035);
    const Pose4 near{0.0, -0.1, 0.035, 0.0};
    const Pose4 far{0.1, 0.1, 0.035, 0.0};
    CHECK(select_goal_config({far}, s, f.model, {}, 1) == far);
    CHECK(select_goal_config({far, near}, s, f.model, {}, 1) == near);

    f.model.scene.obstacles_hat = {box_at(0.0, -0.1, 0.03, 0.03)};
    CHECK(select_goal_config({near, far}, s, f.model, {}, 1) == far);

    // Equidistant candidates: the lower index wins.
    const Pose4 left{-0.1, 0.1, 0.035, 0.0};
    const Pose4 right{0.1, 0.1, 0.035, 0.0};
    CHECK(select_goal_config({right, left}, s, f.model, {}, 1) == right);

    CHECK_THROWS_AS(select_goal_config({near}, s, f.model, {}, 1), Error);
}

TEST_CASE("plan_task: insertion without obstacles ends with the piece in the perceived hole")
{
    for (Shape shape : {Shape::Rect, Shape::Circle, Shape::Square}) {
        Fixture f = exact_task(false, shape);
        const ModelState s{f.world.ee, false, {}};
        const Plan p = plan_task(f.model, s, {}, {}, 11);
        REQUIRE_FALSE(p.empty());
        const ModelState& last = p.waypoints.back();
        REQUIRE(last.attached);
        const Pose4 piece = compose(last.ee, last.grasp_offset);
        const auto c = f.model.board.hole_centers[5];
        CHECK(piece.x == doctest::Approx(c.x()).epsilon(1e-9));
        CHECK(piece.y == doctest::Approx(c.y()).epsilon(1e-9));
        CHECK(piece.z < f.model.board.surface_z);
        CHECK(world::yaw_residual(shape, piece.yaw) < 1e-9);
        for (const Action& a : p.actions) {
            CHECK(std::abs(a.d.x) <= 0.02 + 1e-12);
            CHECK(std::abs(a.d.y) <= 0.02 + 1e-12);
            CHECK(std::abs(a.d.z) <= 0.02 + 1e-12);
            CHECK(std::abs(a.d.yaw) <= 0.1 + 1e-12);
        }
    }
}

TEST_CASE("plan_task: executing an exact-perception plan in the true world inserts the piece")
{
    Fixture f = exact_task(true);
    const Plan p = plan_task(f.model, {f.world.ee, false, {}}, {}, {}, 5);
    REQUIRE_FALSE(p.empty());
    world::WorldState w = f.world;
    for (const Action& a : p.actions) w = world::step(w, a).world;
    CHECK_FALSE(w.obstacle_hit);
    CHECK(world::check_outcome(w, 5) == world::Outcome::success());
}

TEST_CASE("plan_door: ceil(|dtheta| / 0.1) interpolated steps")
{
    auto [w, scene] = world::make_door_task(2);
    const world::DoorSpec& d = *scene.door_hat;
    const Plan p = plan_door(d, d.target_angle);
    const int expected = static_cast<int>(std::ceil(std::abs(d.target_angle - d.angle) / 0.1));
    CHECK(expected == 8);
    CHECK(p.actions.size() == static_cast<std::size_t>(expected));
    world::WorldState cur = w;
    for (const Action& a : p.actions) cur = world::step(cur, a).world;
    CHECK(world::check_outcome(cur, 0) == world::Outcome::success());
}

TEST_CASE("plan_task: a narrow corridor is crossed with at least the margin of clearance")
{
    ApproxModel m = corridor_model(-0.05, 0.03);
    const ModelState s = at(0.0, -0.25, 0.035);
    const Plan p = plan_task(m, s, {PoseTarget{{0.05, 0.15, 0.035, 0.0}}, "S*_g"}, {}, 17);
    REQUIRE_FALSE(p.empty());
    for (std::size_t i = 0; i + 1 < p.waypoints.size(); ++i) {
        for (int k = 0; k <= 20; ++k) {
            const Pose4 q = interpolate(p.waypoints[i].ee, p.waypoints[i + 1].ee, k / 20.0);
            const auto g = world::gripper_footprint(m.params, q);
            for (const auto& b : m.scene.obstacles_hat) {
                const auto fb = geometry::Footprint::make_rect({b.center.x(), b.center.y()},
                                                               {b.half_extents.x(), b.half_extents.y()}, b.yaw);
                CHECK(geometry::separation(g, fb) >= m.margin - 1e-12);
            }
        }
    }
}

TEST_CASE("property: plan self-consistency and determinism")
{
    for (std::uint64_t seed = 0; seed < 6; ++seed) {
        Fixture f = exact_task(true, Shape::Rect, static_cast<int>(seed % 4), 5, seed + 20);
        const ModelState s{f.world.ee, false, {}};
        const Plan p = plan_task(f.model, s, {}, {}, seed);
        REQUIRE_FALSE(p.empty());
        REQUIRE(p.waypoints.size() == p.actions.size() + 1);
        CHECK(p.waypoints.front() == s);
        for (std::size_t t = 0; t < p.actions.size(); ++t) {
            CHECK(predict(f.model, p.waypoints[t], p.actions[t]).state == p.waypoints[t + 1]);
            CHECK(collision_free(p.waypoints[t + 1], f.model));
        }
        const Plan q = plan_task(f.model, s, {}, {}, seed);
        CHECK(to_json(q) == to_json(p));
    }
}

TEST_CASE("property: birrt solves a corridor of three step resolutions for every seed")
{
    // Needed half-width: gripper 0.01 + margin 0.002; the gap adds 3 x 0.005 on top.
    ApproxModel m = corridor_model(-0.05, 0.012 + 0.015);
    const ModelState s = at(0.0, -0.25, 0.035);
    int found = 0;
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
        const PathResult r = birrt(s, {0.1, 0.15, 0.035, 0.5}, m, {}, seed);
        if (r.status == PlanStatus::Found && dense_free(r.path, s, m)) ++found;
    }
    CHECK(found == 50);
}

TEST_CASE("plan JSON carries waypoints, actions, seed and params")
{
    Fixture f = exact_task(false);
    const Plan p = plan_task(f.model, {f.world.ee, false, {}}, {}, {}, 8);
    const Json j = to_json(p);
    CHECK(j.at("waypoints").size() == p.waypoints.size());
    CHECK(j.at("actions").size() == p.actions.size());
    CHECK(j.at("seed").get<std::uint64_t>() == 8);
    CHECK(j.at("params").at("restarts").get<int>() == 5);
    CHECK(j.at("goal_set_id").get<std::string>() == "S_g");
}

TEST_CASE("grasp_lift_end: first action after the close and its vertical lift")
{
    Plan p;
    auto push = [&](double x, double z, Grip g) {
        Action a;
        a.d = {x, 0.0, z, 0.0};
        a.grip = g;
        p.actions.push_back(a);
    };
    push(0.01, -0.01, Grip::Hold);
    push(0.0, 0.0, Grip::Close);
    push(0.0, 0.01, Grip::Hold);
    push(0.0, 0.01, Grip::Hold);
    push(0.01, 0.01, Grip::Hold);
    CHECK(grasp_lift_end(p) == 4);
    p.actions.resize(2);
    CHECK(grasp_lift_end(p) == 2);
    p.actions[1].grip = Grip::Hold;
    CHECK(grasp_lift_end(p) == 2);
    CHECK(grasp_lift_end(Plan{}) == 0);

    Fixture f = exact_task(false);
    const Plan real = plan_task(f.model, {f.world.ee, false, {}}, {}, {}, 11);
    const std::size_t k = grasp_lift_end(real);
    REQUIRE(k < real.actions.size());
    CHECK(real.waypoints[k].attached);
    CHECK((real.actions[k - 1].grip == Grip::Close || real.actions[k - 1].d.z > 0.0));
    CHECK_FALSE((real.actions[k].d.z > 0.0 && real.actions[k].d.x == 0.0 && real.actions[k].d.y == 0.0));
}

TEST_CASE("plan_prefix and concat split and rejoin a plan exactly")
{
    Fixture f = exact_task(false);
    const Plan p = plan_task(f.model, {f.world.ee, false, {}}, {}, {}, 11);
    REQUIRE(p.actions.size() > 4);
    for (std::size_t k : {std::size_t{0}, std::size_t{3}, p.actions.size()}) {
        Plan head = plan_prefix(p, k);
        CHECK(head.actions.size() == k);
        CHECK(head.waypoints.size() == k + 1);
        Plan tail = p;
        tail.actions.erase(tail.actions.begin(), tail.actions.begin() + static_cast<std::ptrdiff_t>(k));
        tail.waypoints.erase(tail.waypoints.begin(), tail.waypoints.begin() + static_cast<std::ptrdiff_t>(k));
        concat(head, tail);
        CHECK(head.actions.size() == p.actions.size());
        REQUIRE(head.waypoints.size() == p.waypoints.size());
        for (std::size_t i = 0; i < p.waypoints.size(); ++i) CHECK(head.waypoints[i].ee == p.waypoints[i].ee);
    }
    CHECK(plan_prefix(p, p.actions.size() + 10).actions.size() == p.actions.size());
}
