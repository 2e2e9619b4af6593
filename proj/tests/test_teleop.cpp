#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <filesystem>
#include <fstream>
#include <thread>

#include "skillpatch/bench.hpp"
#include "skillpatch/common.hpp"
#include "skillpatch/teleop.hpp"
#include "skillpatch/teleop_service.hpp"

using namespace skillpatch;
using namespace skillpatch::teleop;
using namespace std::chrono_literals;

namespace {

orch::OrchestratorConfig quick_config()
{
    orch::OrchestratorConfig c;
    c.gp_fit.restarts = 1;
    c.gp_fit.max_iterations = 30;
    c.refit_gp_every_demo = false;
    c.skill.vae.epochs = 1;
    c.skill.vae.augmentation = 3;
    c.skill.grid.n_trees = {10};
    c.skill.grid.max_features = {skill::MaxFeatures::All};
    c.skill.grid.min_samples_split = {2};
    c.skill.grid.min_samples_leaf = {1};
    c.skill.grid.max_depth = {-1};
    return c;
}

constexpr std::uint64_t kTrainSeed = 8;


/// The first demonstration request of a one-demo training run.
struct Request {
    world::WorldState world;
    skill::FeatureFrame frame;
    std::uint64_t seed;
    skill::Demonstration scripted;
};

const Request& first_request()
{
    static const Request r = [] {
        std::optional<Request> got;
        const auto scripted = orch::scripted_demos(quick_config().demo);
        orch::run_training(1, quick_config(), kTrainSeed,
                           [&](const world::WorldState& w, const skill::FeatureFrame& f, std::uint64_t s) {
                               skill::Demonstration d = scripted(w, f, s);
                               if (!got) got = Request{w, f, s, d};
                               return d;
                           });
        REQUIRE(got.has_value());
        return *got;
    }();
    return r;
}

struct Operator {
    std::vector<world::Action> actions;
    std::vector<bool> record;
};

/// The scripted expert's clean actions for a request, as an operator would type them.
Operator expert_operator(const Request& r, const skill::DemoOptions& options)
{
    Operator op;
    skill::DemoRecorder rec(r.world, r.frame, options, r.seed);
    skill::ScriptedExpert expert(r.world, options.expert);
    while (!rec.exhausted() && !rec.succeeded()) {
        const world::Action a = expert.next(rec.world());
        op.actions.push_back(a);
        op.record.push_back(expert.recording());
        rec.apply(a, expert.recording());
    }
    return op;
}

Message cmd(std::uint64_t seq, const world::Action& a, bool record = true)
{
    return {MessageType::ActionCmd, seq, action_cmd_payload({a, record})};
}

world::Action move(double dx)
{
    world::Action a;
    a.d = {dx, 0, 0, 0};
    return a;
}

bool same_steps(const skill::Demonstration& a, const skill::Demonstration& b)
{
    if (a.steps.size() != b.steps.size()) return false;
    for (std::size_t i = 0; i < a.steps.size(); ++i) {
        if (skill::to_json(a.steps[i]) != skill::to_json(b.steps[i])) return false;
    }
    return true;
}

Session session_in(SessionState target)
{
    Session s;
    const Request& r = first_request();
    switch (target) {
        case SessionState::Idle: break;
        case SessionState::Executing: s.executing_snapshot(r.world); break;
        case SessionState::AwaitingDemo: s.request_demo(r.world, r.frame, r.seed); break;
        case SessionState::DemoActive:
            s.request_demo(r.world, r.frame, r.seed);
            s.handle(cmd(1, move(0.0)));
            break;
        case SessionState::Replay: s.begin_replay(); break;
    }
    REQUIRE(s.state() == target);
    return s;
}

}  // namespace

TEST_CASE("framing: big-endian length prefix, split and batched delivery")
{
    const std::string body(258, 'x');
    const std::string f = encode_frame(body);
    REQUIRE(f.size() == 262);
    CHECK(static_cast<unsigned char>(f[0]) == 0);
    CHECK(static_cast<unsigned char>(f[1]) == 0);
    CHECK(static_cast<unsigned char>(f[2]) == 1);
    CHECK(static_cast<unsigned char>(f[3]) == 2);

    FrameDecoder d;
    const std::string two = encode_frame("{\"a\":1}") + encode_frame("");
    for (char c : two) d.feed(&c, 1);
    CHECK(d.next() == std::string("{\"a\":1}"));
    CHECK(d.next() == std::string());
    CHECK_FALSE(d.next().has_value());
    CHECK(d.buffered() == 0);

    FrameDecoder bad;
    bad.feed(std::string("\x7f\xff\xff\xff", 4));
    CHECK_THROWS_AS(bad.next(), Error);
}

TEST_CASE("envelope: round trip and rejection of malformed messages")
{
    const Message m{MessageType::DemoDone, 7, Json{{"success", true}}};
    const Message back = parse_message(serialize(m));
    CHECK(back.type == m.type);
    CHECK(back.seq == 7);
    CHECK(back.payload == m.payload);
    for (const char* text : {"not json", "[]", R"({"seq":1,"payload":{}})", R"({"type":"action_cmd","payload":{}})",
                             R"({"type":"action_cmd","seq":-1,"payload":{}})", R"({"type":"action_cmd","seq":1})",
                             R"({"type":"wave","seq":1,"payload":{}})"}) {
        CHECK_THROWS_AS(parse_message(text), Error);
    }
    const ActionCommand c = parse_action_cmd(Json{{"d", {0.01, 0, 0, 0}}});
    CHECK(c.action.grip == world::Grip::Hold);
    CHECK(c.record);
    CHECK_THROWS_AS(parse_action_cmd(Json{{"d", {0.01, 0}}}), Error);
    CHECK_THROWS_AS(parse_action_cmd(Json{{"grip", "close"}}), Error);
    CHECK_THROWS_AS(parse_action_cmd(Json{{"d", {0, 0, 0, 0}}, {"grip", "squeeze"}}), Error);
}

TEST_CASE("session: action_cmd while executing is rejected and the state is unchanged")
{
    Session s = session_in(SessionState::Executing);
    const auto out = s.handle(cmd(1, move(0.01)));
    REQUIRE(out.size() == 1);
    CHECK(out[0].type == MessageType::Error);
    CHECK(out[0].payload.at("in_reply_to") == 1);
    CHECK(s.state() == SessionState::Executing);
}

TEST_CASE("session: every inbound type has a defined response in every state")
{
    const std::vector<MessageType> types{MessageType::StateSnapshot, MessageType::DemoRequest, MessageType::ActionCmd,
                                         MessageType::DemoDone,      MessageType::ReplayFrame, MessageType::Error};
    for (SessionState st : {SessionState::Idle, SessionState::Executing, SessionState::AwaitingDemo,
                            SessionState::DemoActive, SessionState::Replay}) {
        for (MessageType t : types) {
            CAPTURE(to_string(st));
            CAPTURE(to_string(t));
            Session s = session_in(st);
            Message in{t, 100, Json::object()};
            if (t == MessageType::ActionCmd) in.payload = action_cmd_payload({move(0.0), true});
            const auto out = s.handle(in);
            const bool accepts = t == MessageType::ActionCmd &&
                                 (st == SessionState::AwaitingDemo || st == SessionState::DemoActive);
            if (accepts) {
                REQUIRE_FALSE(out.empty());
                CHECK(out[0].type == MessageType::StateSnapshot);
                CHECK(out[0].payload.at("ack") == 100);
                CHECK(s.state() == SessionState::DemoActive);
            } else if (t == MessageType::Error) {
                CHECK(out.empty());
                CHECK(s.state() == st);
            } else {
                REQUIRE(out.size() == 1);
                CHECK(out[0].type == MessageType::Error);
                CHECK(s.state() == st);
            }
            // malformed text never changes the state
            const SessionState before = s.state();
            const auto err = s.handle_text("{oops");
            REQUIRE(err.size() == 1);
            CHECK(err[0].type == MessageType::Error);
            CHECK(s.state() == before);
        }
    }
}

TEST_CASE("session: seq strictly increases in both directions; each command is acked by the next snapshot")
{
    Session s = session_in(SessionState::AwaitingDemo);
    std::uint64_t last_out = 0;
    auto check_out = [&](const std::vector<Message>& out) {
        for (const Message& m : out) {
            CHECK(m.seq > last_out);
            last_out = m.seq;
        }
    };
    for (std::uint64_t q = 1; q <= 5; ++q) {
        const auto out = s.handle(cmd(q * 2, move(0.0), false));
        REQUIRE_FALSE(out.empty());
        CHECK(out[0].type == MessageType::StateSnapshot);
        CHECK(out[0].payload.at("ack") == q * 2);
        check_out(out);
    }
    const auto stale = s.handle(cmd(3, move(0.0)));
    REQUIRE(stale.size() == 1);
    CHECK(stale[0].type == MessageType::Error);
    check_out(stale);
    CHECK(s.state() == SessionState::DemoActive);
}

TEST_CASE("session: the expert's actions typed in produce the scripted demonstration exactly")
{
    const Request& r = first_request();
    const skill::DemoOptions opt = quick_config().demo;
    const Operator op = expert_operator(r, opt);
    Session s(opt);
    auto out = s.request_demo(r.world, r.frame, r.seed);
    REQUIRE(out.size() == 2);
    CHECK(out[0].type == MessageType::DemoRequest);
    CHECK(out[0].payload.at("failure_state").at("ee").get<Pose4>() == r.world.ee);
    CHECK(out[1].type == MessageType::StateSnapshot);
    for (std::size_t i = 0; i < op.actions.size(); ++i) {
        out = s.handle(cmd(i + 1, op.actions[i], op.record[i]));
        CHECK(out[0].payload.at("ack") == i + 1);
    }
    REQUIRE(s.demo_finished());
    CHECK(out.back().type == MessageType::DemoDone);
    CHECK(out.back().payload.at("success") == true);
    CHECK(s.state() == SessionState::Executing);
    const skill::DemoResult d = s.take_demo();
    CHECK(same_steps(d.demo, r.scripted));
    CHECK(d.demo.reset_actions == r.scripted.reset_actions);
}

TEST_CASE("session: disconnect mid-demo discards the partial demo; step cap ends in a failed demo_done")
{
    const Request& r = first_request();
    skill::DemoOptions opt = quick_config().demo;
    Session s(opt);
    s.request_demo(r.world, r.frame, r.seed);
    s.handle(cmd(1, move(0.01)));
    s.handle(cmd(2, move(0.01)));
    CHECK(s.state() == SessionState::DemoActive);
    s.client_disconnected();
    CHECK(s.state() == SessionState::AwaitingDemo);
    CHECK_FALSE(s.demo_finished());
    const auto again = s.resend_request();
    REQUIRE(again.size() == 2);
    CHECK(again[1].payload.at("ee").get<Pose4>() == r.world.ee);

    // seq numbering restarts with the new client
    const Operator op = expert_operator(r, opt);
    std::vector<Message> out;
    for (std::size_t i = 0; i < op.actions.size(); ++i) out = s.handle(cmd(i + 1, op.actions[i], op.record[i]));
    CHECK(same_steps(s.take_demo().demo, r.scripted));

    opt.max_steps = 3;
    Session capped(opt);
    capped.request_demo(r.world, r.frame, r.seed);
    for (std::uint64_t q = 1; q <= 3; ++q) out = capped.handle(cmd(q, move(0.0)));
    CHECK(capped.demo_finished());
    CHECK(out.back().type == MessageType::DemoDone);
    CHECK(out.back().payload.at("success") == false);
    CHECK_THROWS_AS(capped.take_demo(), Error);
}

TEST_CASE("replay: empty log gives zero frames; n records come back in order and fieldwise equal")
{
    CHECK(replay_records(Json::object()).empty());
    CHECK_THROWS_AS(replay_records(Json{{"trace", 3}}), Error);
    CHECK_THROWS_AS(replay_records(Json{{"trace", {{{"t", 1}, {"ee", {0, 0, 0, 0}}}}}}), Error);
    CHECK_THROWS_AS(replay_records(Json{{"trace", {{{"t", 0}, {"ee", {0, 0}}}}}}), Error);

    bench::ExperimentSpec spec;
    spec.method = bench::Method::Planner;
    spec.shapes = {world::Shape::Rect};
    spec.trials_per_shape = 1;
    const auto dir = std::filesystem::temp_directory_path() / "skillpatch_teleop_replay";
    std::filesystem::remove_all(dir);
    bench::emit_report(bench::run_experiment(spec), dir.string());
    const std::string path = (dir / "episodes" / "planner.jsonl").string();
    const Json log = read_episode_log(path, 0);
    const auto records = replay_records(log);
    REQUIRE(records.size() == log.at("actions").size());
    REQUIRE_FALSE(records.empty());
    Session s;
    s.begin_replay();
    std::uint64_t last = 0;
    for (std::size_t t = 0; t < records.size(); ++t) {
        const Message m = s.replay_frame(records[t]);
        CHECK(m.type == MessageType::ReplayFrame);
        CHECK(m.seq > last);
        last = m.seq;
        CHECK(m.payload == log.at("trace")[t]);
        CHECK(m.payload.at("t") == static_cast<int>(t));
    }
    s.end_replay();
    CHECK(s.state() == SessionState::Idle);
    CHECK_THROWS_AS(read_episode_log(path, 5), Error);
    write_file((dir / "empty.jsonl").string(), "");
    CHECK(replay_records(read_episode_log((dir / "empty.jsonl").string(), 0)).empty());
    write_file((dir / "bad.jsonl").string(), "{nope\n");
    CHECK_THROWS_AS(read_episode_log((dir / "bad.jsonl").string(), 0), Error);
    std::filesystem::remove_all(dir);
}

TEST_CASE("service: a loopback operator delivers the demonstration during training")
{
    const Request& r = first_request();
    const skill::DemoOptions opt = quick_config().demo;
    const Operator op = expert_operator(r, opt);
    Server server(0);
    ServiceOptions so;
    so.demo = opt;
    so.reconnect_timeout = 5000ms;
    so.input_timeout = 5000ms;
    TeleopService service(server, so);

    int rejected = 0, snapshots = 0;
    bool done_ok = false;
    std::thread client([&] {
        Client c;
        c.connect("127.0.0.1", server.port());
        std::uint64_t seq = 0;
        // a command outside a demonstration is refused
        c.send(cmd(++seq, move(0.01)));
        rejected += c.receive_until(MessageType::Error, 5000ms).has_value();
        std::vector<Message> skipped;
        const auto req = c.receive_until(MessageType::DemoRequest, 20000ms, &skipped);
        if (!req) return;
        for (const Message& m : skipped) snapshots += m.type == MessageType::StateSnapshot;
        for (std::size_t i = 0; i < op.actions.size(); ++i) {
            const std::uint64_t q = ++seq;
            c.send(cmd(q, op.actions[i], op.record[i]));
            for (;;) {
                const auto m = c.receive(5000ms);
                if (!m) return;
                if (m->type == MessageType::StateSnapshot && m->payload.value("ack", 0ull) == q) break;
            }
        }
        const auto done = c.receive_until(MessageType::DemoDone, 5000ms);
        done_ok = done && done->payload.at("success") == true;
    });
    REQUIRE(server.accept_client(5000ms));
    std::optional<Inbound> first;
    for (int i = 0; i < 50 && !first; ++i) first = server.poll(100ms);
    REQUIRE(first.has_value());
    REQUIRE(first->kind == Inbound::Kind::Text);
    server.send_all(service.session().handle_text(first->text));

    orch::SessionArtifacts a;
    std::string failure;
    try {
        a = orch::run_training(1, quick_config(), kTrainSeed, service.demo_provider(), service.step_observer());
    } catch (const std::exception& e) {
        failure = e.what();
    }
    client.join();
    CHECK(failure == "");
    CHECK(done_ok);
    CHECK(rejected == 1);
    CHECK(snapshots > 0);
    CHECK(service.demos_received() == 1);
    REQUIRE(a.demos.demos.size() == 1);
    CHECK(same_steps(a.demos.demos[0], r.scripted));

    // the recording uses the scripted JSON-lines schema and trains a skill unchanged
    const std::string jsonl = skill::demos_to_jsonl(a.demos);
    const skill::DemoSet parsed = skill::demos_from_jsonl(jsonl);
    CHECK(skill::demos_to_jsonl(parsed) == jsonl);
    skill::DemoSet scripted;
    scripted.demos = {r.scripted};
    CHECK(skill::demos_to_jsonl(scripted) == jsonl);
    const skill::SkillBundle b = skill::train_skill(parsed, quick_config().skill, 3);
    CHECK(b.forest.input_dim == skill::kFeatureDim);
}

TEST_CASE("service: a dropped operator is replaced and the demonstration restarts from the failure state")
{
    const Request& r = first_request();
    const skill::DemoOptions opt = quick_config().demo;
    const Operator op = expert_operator(r, opt);
    Server server(0);
    ServiceOptions so;
    so.demo = opt;
    so.reconnect_timeout = 5000ms;
    so.input_timeout = 5000ms;
    TeleopService service(server, so);
    bool second_got_request = false;
    std::thread client([&] {
        {
            Client c;
            c.connect("127.0.0.1", server.port());
            if (!c.receive_until(MessageType::DemoRequest, 5000ms)) return;
            c.send(cmd(1, move(0.01), false));
            c.receive_until(MessageType::StateSnapshot, 5000ms);
        }  // closes mid-demo
        Client c;
        c.connect("127.0.0.1", server.port());
        second_got_request = c.receive_until(MessageType::DemoRequest, 5000ms).has_value();
        for (std::size_t i = 0; i < op.actions.size(); ++i) {
            c.send(cmd(i + 1, op.actions[i], op.record[i]));
            if (!c.receive_until(MessageType::StateSnapshot, 5000ms)) return;
        }
        c.receive_until(MessageType::DemoDone, 5000ms);
    });
    const skill::Demonstration d = service.demo_provider()(r.world, r.frame, r.seed);
    client.join();
    CHECK(second_got_request);
    CHECK(same_steps(d, r.scripted));
}

TEST_CASE("service: no operator within the reconnect window is ClientDisconnected")
{
    const Request& r = first_request();
    Server server(0);
    ServiceOptions so;
    so.reconnect_timeout = 50ms;
    TeleopService service(server, so);
    try {
        service.demo_provider()(r.world, r.frame, r.seed);
        FAIL("expected ClientDisconnected");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::ClientDisconnected);
    }
    CHECK(service.session().state() == SessionState::Executing);
}

TEST_CASE("service: replay frames stream in order at the requested cadence")
{
    std::vector<Json> records;
    for (int t = 0; t < 6; ++t) records.push_back(Json{{"t", t}, {"ee", {0.01 * t, 0, 0, 0}}});
    Server server(0);
    TeleopService service(server);
    std::vector<Message> got;
    std::thread client([&] {
        Client c;
        c.connect("127.0.0.1", server.port());
        while (got.size() < records.size()) {
            const auto m = c.receive(5000ms);
            if (!m) return;
            got.push_back(*m);
        }
    });
    REQUIRE(server.accept_client(5000ms));
    const auto t0 = std::chrono::steady_clock::now();
    CHECK(service.stream_replay(records, 10ms) == records.size());
    const auto elapsed = std::chrono::steady_clock::now() - t0;
    client.join();
    CHECK(elapsed >= 50ms);
    REQUIRE(got.size() == records.size());
    for (std::size_t i = 0; i < got.size(); ++i) {
        CHECK(got[i].type == MessageType::ReplayFrame);
        CHECK(got[i].payload == records[i]);
    }
    CHECK(service.session().state() == SessionState::Idle);
}

TEST_CASE("server: malformed frames get an error reply and the connection is dropped")
{
    Server server(0);
    TeleopService service(server);
    Client c;
    c.connect("127.0.0.1", server.port());
    REQUIRE(server.accept_client(5000ms));
    c.send_raw("{\"type\":\"action_cmd\"");
    std::optional<Inbound> in;
    for (int i = 0; i < 50 && !in; ++i) in = server.poll(100ms);
    REQUIRE(in.has_value());
    CHECK(in->kind == Inbound::Kind::Text);
    const auto reply = service.session().handle_text(in->text);
    server.send_all(reply);
    const auto m = c.receive(5000ms);
    REQUIRE(m.has_value());
    CHECK(m->type == MessageType::Error);
    c.close();
    std::optional<Inbound> gone;
    for (int i = 0; i < 50 && (!gone || gone->kind != Inbound::Kind::Disconnected); ++i) gone = server.poll(100ms);
    REQUIRE(gone.has_value());
    CHECK(gone->kind == Inbound::Kind::Disconnected);
    CHECK_FALSE(server.connected());
}
