#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <chrono>
#include <deque>

#include "skillpatch/bench.hpp"
#include "skillpatch/teleop.hpp"
#include "skillpatch/teleop_ui.hpp"

using namespace skillpatch;
using namespace skillpatch::teleop;
using namespace skillpatch::teleop::ui;

namespace {

Message snap(SessionState s, std::optional<std::uint64_t> ack = std::nullopt, Json extra = Json::object())
{
    Json p = std::move(extra);
    p["state"] = to_string(s);
    if (ack) p["ack"] = *ack;
    return {MessageType::StateSnapshot, 1, p};
}

Message demo_request(const Pose4& ee)
{
    return {MessageType::DemoRequest, 1, Json{{"failure_state", {{"ee", ee}}}}};
}

ViewModel demo_model()
{
    ViewModel vm;
    vm.on_connect();
    vm.on_message(demo_request({0.1, 0.2, 0.05, 0.0}));
    return vm;
}

Pose4 sent_delta(const Message& m) { return parse_action_cmd(m.payload).action.d; }

struct Failure {
    world::WorldState world;
    skill::FeatureFrame frame;
    std::uint64_t seed;
};

const Failure& failure()
{
    static const Failure f = [] {
        std::optional<Failure> got;
        orch::OrchestratorConfig c;
        c.gp_fit.restarts = 1;
        c.gp_fit.max_iterations = 30;
        c.skill.vae.epochs = 1;
        c.skill.vae.augmentation = 3;
        c.skill.grid.n_trees = {5};
        c.skill.grid.max_features = {skill::MaxFeatures::All};
        c.skill.grid.min_samples_split = {2};
        c.skill.grid.min_samples_leaf = {1};
        c.skill.grid.max_depth = {-1};
        const auto scripted = orch::scripted_demos(c.demo);
        orch::run_training(1, c, 8, [&](const world::WorldState& w, const skill::FeatureFrame& fr, std::uint64_t s) {
            if (!got) got = Failure{w, fr, s};
            return scripted(w, fr, s);
        });
        REQUIRE(got.has_value());
        return *got;
    }();
    return f;
}

/// Runs view model and session against each other until neither has anything to send.
void pump(ViewModel& vm, Session& s, std::deque<Message> to_server, std::deque<Message> to_client = {})
{
    while (!to_server.empty() || !to_client.empty()) {
        while (!to_client.empty()) {
            for (Message& m : vm.on_message(to_client.front())) to_server.push_back(std::move(m));
            to_client.pop_front();
        }
        while (!to_server.empty()) {
            for (Message& m : s.handle(to_server.front())) to_client.push_back(std::move(m));
            to_server.pop_front();
        }
    }
}

}  // namespace

TEST_CASE("bindings: one key, one fixed step")
{
    CHECK(key_from_name("ArrowRight") == Key::ArrowRight);
    CHECK(key_from_name(" ") == Key::Space);
    CHECK_FALSE(key_from_name("KeyQ").has_value());
    CHECK(binding(Key::ArrowRight).d == Pose4{0.01, 0, 0, 0});
    CHECK(binding(Key::ArrowLeft).d == Pose4{-0.01, 0, 0, 0});
    CHECK(binding(Key::ArrowUp).d == Pose4{0, 0.01, 0, 0});
    CHECK(binding(Key::ArrowDown).d == Pose4{0, -0.01, 0, 0});
    CHECK(binding(Key::PageUp).d == Pose4{0, 0, 0.01, 0});
    CHECK(binding(Key::PageDown).d == Pose4{0, 0, -0.01, 0});
    CHECK(binding(Key::BracketLeft).d == Pose4{0, 0, 0, -0.05});
    CHECK(binding(Key::BracketRight).d == Pose4{0, 0, 0, 0.05});
    CHECK(binding(Key::Space).grip_toggle);
    CHECK(binding(Key::Space).d == Pose4{});

    ViewModel vm = demo_model();
    const auto m = vm.press(Key::ArrowRight);
    REQUIRE(m.has_value());
    CHECK(m->type == MessageType::ActionCmd);
    CHECK(m->seq == 1);
    CHECK(sent_delta(*m) == Pose4{0.01, 0, 0, 0});
    CHECK(parse_action_cmd(m->payload).action.grip == world::Grip::Hold);
}

TEST_CASE("bindings: space alternates close and open")
{
    ViewModel vm = demo_model();
    const auto a = vm.press(Key::Space);
    REQUIRE(a.has_value());
    CHECK(parse_action_cmd(a->payload).action.grip == world::Grip::Close);
    const auto next = vm.on_message(snap(SessionState::DemoActive, a->seq));
    CHECK(next.empty());
    const auto b = vm.press(Key::Space);
    REQUIRE(b.has_value());
    CHECK(parse_action_cmd(b->payload).action.grip == world::Grip::Open);
}

TEST_CASE("input: disabled outside a demonstration and while disconnected")
{
    ViewModel vm;
    CHECK_FALSE(vm.press(Key::ArrowRight).has_value());
    vm.on_connect();
    vm.on_message(snap(SessionState::Executing));
    CHECK_FALSE(vm.input_enabled());
    CHECK_FALSE(vm.press(Key::ArrowRight).has_value());
    CHECK(vm.queued() == 0);
    CHECK(vm.banner() == "Executing");
    CHECK_FALSE(vm.highlighted_failure().has_value());

    vm.on_message(demo_request({0.1, 0.2, 0.05, 0.3}));
    CHECK(vm.input_enabled());
    CHECK(vm.state() == SessionState::AwaitingDemo);
    REQUIRE(vm.highlighted_failure().has_value());
    CHECK(*vm.highlighted_failure() == Pose4{0.1, 0.2, 0.05, 0.3});

    vm.on_message({MessageType::DemoDone, 2, Json{{"success", true}}});
    CHECK_FALSE(vm.input_enabled());
    CHECK_FALSE(vm.highlighted_failure().has_value());
}

TEST_CASE("input: one command in flight; later keys wait for the acknowledging snapshot")
{
    ViewModel vm = demo_model();
    const auto first = vm.press(Key::ArrowRight);
    REQUIRE(first.has_value());
    CHECK_FALSE(vm.press(Key::ArrowUp).has_value());
    CHECK_FALSE(vm.press(Key::PageUp).has_value());
    CHECK(vm.queued() == 2);

    // a snapshot that does not acknowledge the command is not shown
    CHECK(vm.on_message(snap(SessionState::DemoActive, std::nullopt, Json{{"t", 9}})).empty());
    CHECK_FALSE(vm.snapshot().has_value());

    const auto second = vm.on_message(snap(SessionState::DemoActive, first->seq, Json{{"t", 1}}));
    REQUIRE(second.size() == 1);
    CHECK(second[0].seq == 2);
    CHECK(sent_delta(second[0]) == Pose4{0, 0.01, 0, 0});
    REQUIRE(vm.snapshot().has_value());
    CHECK(vm.snapshot()->at("t") == 1);

    // a rejected command releases the slot too
    const auto third = vm.on_message({MessageType::Error, 3, Json{{"message", "no"}, {"in_reply_to", 2}}});
    REQUIRE(third.size() == 1);
    CHECK(sent_delta(third[0]) == Pose4{0, 0, 0.01, 0});
    CHECK(vm.errors().size() == 1);
    CHECK(vm.queued() == 0);
}

TEST_CASE("reconnect: queued input is dropped and the delay backs off")
{
    CHECK(backoff(0).count() == 250);
    CHECK(backoff(1).count() == 500);
    CHECK(backoff(4).count() == 4000);
    CHECK(backoff(5).count() == 8000);
    CHECK(backoff(12).count() == 8000);

    ViewModel vm = demo_model();
    REQUIRE(vm.press(Key::ArrowRight).has_value());
    vm.press(Key::ArrowLeft);
    vm.press(Key::ArrowLeft);
    vm.on_disconnect();
    CHECK(vm.queued() == 0);
    CHECK_FALSE(vm.in_flight().has_value());
    CHECK(vm.banner() == "Disconnected (retry in 500 ms)");
    vm.on_disconnect();
    CHECK(vm.banner() == "Disconnected (retry in 1000 ms)");
    CHECK_FALSE(vm.press(Key::ArrowUp).has_value());

    vm.on_connect();
    CHECK(vm.retry_attempt() == 0);
    const auto none = vm.on_message(demo_request({0, 0, 0, 0}));
    CHECK(none.empty());  // nothing from before the drop is replayed
    const auto m = vm.press(Key::PageUp);
    REQUIRE(m.has_value());
    CHECK(m->seq == 1);
    CHECK(sent_delta(*m) == Pose4{0, 0, 0.01, 0});
}

TEST_CASE("view model and session: rapid keys execute in order, each acknowledged once")
{
    const Failure& f = failure();
    Session s;
    ViewModel vm;
    vm.on_connect();
    std::deque<Message> to_client;
    for (Message& m : s.request_demo(f.world, f.frame, f.seed)) to_client.push_back(std::move(m));
    pump(vm, s, {}, to_client);
    REQUIRE(vm.highlighted_failure().has_value());
    CHECK(*vm.highlighted_failure() == f.world.ee);
    REQUIRE(vm.snapshot().has_value());
    CHECK(vm.snapshot()->at("ee").get<Pose4>() == f.world.ee);

    std::deque<Message> first;
    for (Key k : {Key::PageUp, Key::PageUp, Key::PageUp, Key::ArrowRight, Key::ArrowRight}) {
        if (auto m = vm.press(k)) first.push_back(*m);
    }
    CHECK(first.size() == 1);
    CHECK(vm.queued() == 4);
    pump(vm, s, first);
    CHECK(vm.queued() == 0);
    CHECK_FALSE(vm.in_flight().has_value());
    CHECK(vm.errors().empty());
    CHECK(s.state() == SessionState::DemoActive);
    CHECK(vm.state() == SessionState::DemoActive);
    REQUIRE(vm.snapshot().has_value());
    CHECK(vm.snapshot()->at("ack") == 5);
    const Pose4 ee = vm.snapshot()->at("ee").get<Pose4>();
    const double beta = skill::DemoOptions{}.beta;
    // five recorded steps of 1 cm, each with at most beta of noise per axis
    CHECK(ee.z > f.world.ee.z);
    CHECK(std::abs(ee.x - f.world.ee.x - 0.02) <= 5 * beta + 1e-9);
}

TEST_CASE("render: contact light, goal outline and the inserted piece")
{
    const Failure& f = failure();
    const Json at_failure = snapshot_payload(0, f.world, SessionState::AwaitingDemo, std::nullopt);
    const Frame a = render(at_failure, SessionState::AwaitingDemo);
    CHECK(a.contact_lit == world::observe(f.world).contact);
    CHECK(a.ee == f.world.ee);
    CHECK(a.z_gauge == doctest::Approx(f.world.ee.z - f.world.board.surface_z));
    int goals = 0, holes = 0;
    for (const Item& it : a.items) {
        goals += it.role == "goal_hole";
        holes += it.role == "hole";
    }
    CHECK(goals == 1);
    CHECK(holes == 7);
    CHECK(a.raster.size() == at_failure.at("raster").at("pixels").size());

    const skill::DemoResult done = skill::collect_demo(f.world, f.frame, {}, f.seed);
    const Json inserted = snapshot_payload(1, done.final_world, SessionState::Executing, std::nullopt);
    const Frame b = render(inserted, SessionState::Executing);
    const Json* piece = nullptr;
    const Json* goal = nullptr;
    for (const Item& it : b.items) {
        if (it.role == "piece") piece = &it.shape;
        if (it.role == "goal_hole") goal = &it.shape;
    }
    REQUIRE(piece);
    REQUIRE(goal);
    // holes admit a piece whose centre is within the insertion tolerance
    const double tol = inserted.at("scene").at("tol_insert").get<double>();
    CHECK(footprint_within(*piece, *goal, tol));
    CHECK(inserted.at("inserted_depth").get<double>() > 0.0);
    CHECK(b.contact_lit == world::observe(done.final_world).contact);

    // a piece beside the hole is not inside it
    Json shifted = *piece;
    shifted["center"][0] = shifted["center"][0].get<double>() + 0.05;
    CHECK_FALSE(footprint_within(shifted, *goal, tol));

    const auto t0 = std::chrono::steady_clock::now();
    for (int i = 0; i < 300; ++i) (void)render(inserted, SessionState::Executing);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    CHECK(300 / secs >= 10.0);
}

TEST_CASE("replay: the last frame shown is the episode's final state")
{
    bench::ExperimentSpec spec;
    spec.method = bench::Method::Planner;
    spec.shapes = {world::Shape::Square};
    spec.trials_per_shape = 1;
    const bench::ResultTable table = bench::run_experiment(spec);
    REQUIRE(table.rows.size() == 1);
    const std::vector<Json> records = replay_records(table.rows[0].log);
    REQUIRE_FALSE(records.empty());

    const Failure& f = failure();
    ViewModel vm;
    vm.on_connect();
    vm.on_message(snap(SessionState::Executing, std::nullopt, Json{{"scene", scene_json(f.world)}}));
    REQUIRE(vm.scene().has_value());
    Session s;
    s.begin_replay();
    for (const Json& r : records) vm.on_message(s.replay_frame(r));
    s.end_replay();
    CHECK(vm.state() == SessionState::Replay);
    CHECK_FALSE(vm.input_enabled());
    REQUIRE(vm.replay_frame().has_value());
    CHECK(*vm.replay_frame() == records.back());
    const Frame last = render(*vm.replay_frame(), vm.state(), &*vm.scene());
    CHECK(last.ee == records.back().at("ee").get<Pose4>());
    CHECK(last.piece_pose == records.back().at("piece_pose").get<Pose4>());
    CHECK(last.contact_lit == records.back().at("contact").get<bool>());
    CHECK(last.items.size() == 8 + f.world.obstacles.size());
}
