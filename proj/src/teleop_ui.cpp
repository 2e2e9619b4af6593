#include "skillpatch/teleop_ui.hpp"

#include <algorithm>
#include <array>
#include <cmath>

#include "skillpatch/common.hpp"

namespace skillpatch::teleop::ui {

namespace {

struct KeyName {
    const char* name;
    Key key;
};

constexpr std::array<KeyName, 9> kNames{{{"ArrowLeft", Key::ArrowLeft},
                                         {"ArrowRight", Key::ArrowRight},
                                         {"ArrowUp", Key::ArrowUp},
                                         {"ArrowDown", Key::ArrowDown},
                                         {"PageUp", Key::PageUp},
                                         {"PageDown", Key::PageDown},
                                         {"BracketLeft", Key::BracketLeft},
                                         {"BracketRight", Key::BracketRight},
                                         {"Space", Key::Space}}};

std::vector<std::array<double, 2>> corners(const Json& f)
{
    const double cx = f.at("center")[0].get<double>(), cy = f.at("center")[1].get<double>();
    const double hx = f.at("half")[0].get<double>(), hy = f.at("half")[1].get<double>();
    const double c = std::cos(f.at("yaw").get<double>()), s = std::sin(f.at("yaw").get<double>());
    std::vector<std::array<double, 2>> out;
    for (double sx : {-1.0, 1.0}) {
        for (double sy : {-1.0, 1.0}) out.push_back({cx + c * sx * hx - s * sy * hy, cy + s * sx * hx + c * sy * hy});
    }
    return out;
}

bool point_within(double x, double y, const Json& outer, double slack)
{
    const double cx = outer.at("center")[0].get<double>(), cy = outer.at("center")[1].get<double>();
    if (outer.at("kind") == "disc") return std::hypot(x - cx, y - cy) <= outer.at("radius").get<double>() + slack;
    const double c = std::cos(outer.at("yaw").get<double>()), s = std::sin(outer.at("yaw").get<double>());
    const double lx = c * (x - cx) + s * (y - cy), ly = -s * (x - cx) + c * (y - cy);
    return std::abs(lx) <= outer.at("half")[0].get<double>() + slack &&
           std::abs(ly) <= outer.at("half")[1].get<double>() + slack;
}

}  // namespace

std::optional<Key> key_from_name(const std::string& name)
{
    for (const KeyName& k : kNames) {
        if (name == k.name) return k.key;
    }
    if (name == " ") return Key::Space;
    return std::nullopt;
}

Binding binding(Key k)
{
    switch (k) {
        case Key::ArrowLeft: return {{-kStep, 0, 0, 0}, false};
        case Key::ArrowRight: return {{kStep, 0, 0, 0}, false};
        case Key::ArrowUp: return {{0, kStep, 0, 0}, false};
        case Key::ArrowDown: return {{0, -kStep, 0, 0}, false};
        case Key::PageUp: return {{0, 0, kStep, 0}, false};
        case Key::PageDown: return {{0, 0, -kStep, 0}, false};
        case Key::BracketLeft: return {{0, 0, 0, -kYawStep}, false};
        case Key::BracketRight: return {{0, 0, 0, kYawStep}, false};
        case Key::Space: return {{}, true};
    }
    return {};
}

std::chrono::milliseconds backoff(int attempt)
{
    const int k = std::clamp(attempt, 0, 5);
    return std::chrono::milliseconds(250 << k);
}

bool ViewModel::input_enabled() const
{
    return connected_ && (state_ == SessionState::AwaitingDemo || state_ == SessionState::DemoActive);
}

std::string ViewModel::banner() const
{
    if (!connected_) return "Disconnected (retry in " + std::to_string(next_retry_delay().count()) + " ms)";
    return to_string(state_);
}

void ViewModel::on_connect()
{
    connected_ = true;
    retries_ = 0;
    seq_ = 0;
}

void ViewModel::on_disconnect()
{
    connected_ = false;
    ++retries_;
    in_flight_.reset();
    queue_.clear();  // nothing typed before the drop is sent after it
}

Message ViewModel::command(Key k)
{
    const Binding b = binding(k);
    ActionCommand c;
    c.action.d = b.d;
    if (b.grip_toggle) {
        c.action.grip = grip_closed_ ? world::Grip::Open : world::Grip::Close;
        grip_closed_ = !grip_closed_;
    }
    Message m{MessageType::ActionCmd, ++seq_, action_cmd_payload(c)};
    in_flight_ = m.seq;
    return m;
}

std::optional<Message> ViewModel::flush()
{
    if (in_flight_ || queue_.empty() || !input_enabled()) return std::nullopt;
    const Key k = queue_.front();
    queue_.pop_front();
    return command(k);
}

std::optional<Message> ViewModel::press(Key k)
{
    if (!input_enabled()) return std::nullopt;
    queue_.push_back(k);
    return flush();
}

std::vector<Message> ViewModel::on_message(const Message& m)
{
    std::vector<Message> out;
    switch (m.type) {
        case MessageType::StateSnapshot: {
            if (m.payload.contains("state")) state_ = session_state_from_string(m.payload.at("state").get<std::string>());
            const bool acks = m.payload.contains("ack") && in_flight_ && m.payload.at("ack").get<std::uint64_t>() == *in_flight_;
            if (acks) in_flight_.reset();
            if (!in_flight_) {
                snapshot_ = m.payload;
                if (m.payload.contains("grasped")) grip_closed_ = m.payload.at("grasped").get<bool>();
            }
            if (m.payload.contains("scene")) scene_ = m.payload.at("scene");
            if (auto next = flush()) out.push_back(*next);
            break;
        }
        case MessageType::DemoRequest:
            state_ = SessionState::AwaitingDemo;
            failure_ = m.payload.at("failure_state").at("ee").get<Pose4>();
            in_flight_.reset();
            queue_.clear();
            break;
        case MessageType::DemoDone:
            state_ = SessionState::Executing;
            failure_.reset();
            in_flight_.reset();
            queue_.clear();
            break;
        case MessageType::ReplayFrame:
            state_ = SessionState::Replay;
            replay_ = m.payload;
            break;
        case MessageType::Error:
            errors_.push_back(m.payload.value("message", std::string("error")));
            // a rejected command is never acknowledged by a snapshot
            if (m.payload.contains("in_reply_to") && in_flight_ &&
                m.payload.at("in_reply_to").get<std::uint64_t>() == *in_flight_) {
                in_flight_.reset();
            }
            if (auto next = flush()) out.push_back(*next);
            break;
        case MessageType::ActionCmd: errors_.push_back("unexpected action_cmd from server"); break;
    }
    return out;
}

Frame render(const Json& snapshot, SessionState state, const Json* base_scene)
{
    Frame f;
    f.ee = snapshot.at("ee").get<Pose4>();
    if (snapshot.contains("piece_pose")) f.piece_pose = snapshot.at("piece_pose").get<Pose4>();
    f.contact_lit = snapshot.value("contact", false);
    f.banner = to_string(state);
    const bool own = snapshot.contains("scene");
    const Json* scene = own ? &snapshot.at("scene") : base_scene;
    if (scene) {
        const int goal = scene->at("goal_hole").get<int>();
        int h = 0;
        for (const Json& hole : scene->at("holes")) f.items.push_back({h++ == goal ? "goal_hole" : "hole", hole});
        for (const Json& o : scene->at("obstacles")) f.items.push_back({"obstacle", o});
        if (own) {
            f.items.push_back({"piece", scene->at("piece")});
            f.items.push_back({"gripper", scene->at("gripper")});
        }
    }
    f.z_gauge = f.ee.z - (scene ? scene->value("surface_z", 0.0) : 0.0);
    if (snapshot.contains("raster")) f.raster = snapshot.at("raster").at("pixels").get<std::vector<double>>();
    return f;
}

bool footprint_within(const Json& inner, const Json& outer, double slack)
{
    if (inner.at("kind") == "disc") {
        const double cx = inner.at("center")[0].get<double>(), cy = inner.at("center")[1].get<double>();
        const double r = inner.at("radius").get<double>();
        if (outer.at("kind") == "disc") {
            const double d = std::hypot(cx - outer.at("center")[0].get<double>(), cy - outer.at("center")[1].get<double>());
            return d + r <= outer.at("radius").get<double>() + slack;
        }
        Json box{{"kind", "rect"}, {"center", inner.at("center")}, {"half", {r, r}}, {"yaw", 0.0}};
        for (const auto& c : corners(box)) {
            if (!point_within(c[0], c[1], outer, slack)) return false;
        }
        return true;
    }
    for (const auto& c : corners(inner)) {
        if (!point_within(c[0], c[1], outer, slack)) return false;
    }
    return true;
}

}  // namespace skillpatch::teleop::ui
