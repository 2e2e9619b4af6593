#include "skillpatch/teleop.hpp"

#include <sstream>

#include "skillpatch/common.hpp"

namespace skillpatch::teleop {

namespace {

Error malformed(const std::string& what) { return Error(ErrorCode::MalformedMessage, what); }

Json footprint_json(const geometry::Footprint& f)
{
    if (f.kind == geometry::Footprint::Kind::Disc) {
        return Json{{"kind", "disc"}, {"center", {f.disc.center.x(), f.disc.center.y()}}, {"radius", f.disc.radius}};
    }
    return Json{{"kind", "rect"},
                {"center", {f.rect.center.x(), f.rect.center.y()}},
                {"half", {f.rect.half.x(), f.rect.half.y()}},
                {"yaw", f.rect.yaw}};
}

Json state_json(const world::WorldState& w)
{
    return Json{{"ee", w.ee},
                {"piece_pose", w.piece_pose},
                {"contact", w.contact},
                {"grasped", w.grasped},
                {"inserted_depth", w.inserted_depth}};
}

}  // namespace

const char* to_string(MessageType t)
{
    switch (t) {
        case MessageType::StateSnapshot: return "state_snapshot";
        case MessageType::DemoRequest: return "demo_request";
        case MessageType::ActionCmd: return "action_cmd";
        case MessageType::DemoDone: return "demo_done";
        case MessageType::ReplayFrame: return "replay_frame";
        case MessageType::Error: return "error";
    }
    return "?";
}

MessageType message_type_from_string(const std::string& s)
{
    for (MessageType t : {MessageType::StateSnapshot, MessageType::DemoRequest, MessageType::ActionCmd,
                          MessageType::DemoDone, MessageType::ReplayFrame, MessageType::Error}) {
        if (s == to_string(t)) return t;
    }
    throw malformed("unknown message type '" + s + "'");
}

Json to_json(const Message& m) { return Json{{"type", to_string(m.type)}, {"seq", m.seq}, {"payload", m.payload}}; }

Message message_from_json(const Json& j)
{
    if (!j.is_object()) throw malformed("message must be a JSON object");
    if (!j.contains("type") || !j.at("type").is_string()) throw malformed("message needs a string 'type'");
    if (!j.contains("seq") || !j.at("seq").is_number_unsigned()) throw malformed("message needs a non-negative integer 'seq'");
    if (!j.contains("payload") || !j.at("payload").is_object()) throw malformed("message needs an object 'payload'");
    return {message_type_from_string(j.at("type").get<std::string>()), j.at("seq").get<std::uint64_t>(), j.at("payload")};
}

Message parse_message(const std::string& text)
{
    Json j;
    try {
        j = Json::parse(text);
    } catch (const Json::exception& e) {
        throw malformed(std::string("invalid JSON: ") + e.what());
    }
    return message_from_json(j);
}

std::string serialize(const Message& m) { return to_json(m).dump(); }

std::string encode_frame(const std::string& body)
{
    if (body.size() > kMaxFrameBytes) throw malformed("frame too large");
    const auto n = static_cast<std::uint32_t>(body.size());
    std::string out;
    out.reserve(body.size() + 4);
    out.push_back(static_cast<char>((n >> 24) & 0xff));
    out.push_back(static_cast<char>((n >> 16) & 0xff));
    out.push_back(static_cast<char>((n >> 8) & 0xff));
    out.push_back(static_cast<char>(n & 0xff));
    out += body;
    return out;
}

void FrameDecoder::feed(const char* data, std::size_t n) { buf_.append(data, n); }

std::optional<std::string> FrameDecoder::next()
{
    if (buf_.size() < 4) return std::nullopt;
    std::uint32_t n = 0;
    for (int i = 0; i < 4; ++i) n = (n << 8) | static_cast<unsigned char>(buf_[static_cast<std::size_t>(i)]);
    if (n > kMaxFrameBytes) throw malformed("declared frame length exceeds the limit");
    if (buf_.size() < 4 + static_cast<std::size_t>(n)) return std::nullopt;
    std::string body = buf_.substr(4, n);
    buf_.erase(0, 4 + static_cast<std::size_t>(n));
    return body;
}

const char* to_string(SessionState s)
{
    switch (s) {
        case SessionState::Idle: return "Idle";
        case SessionState::Executing: return "Executing";
        case SessionState::AwaitingDemo: return "AwaitingDemo";
        case SessionState::DemoActive: return "DemoActive";
        case SessionState::Replay: return "Replay";
    }
    return "?";
}

SessionState session_state_from_string(const std::string& s)
{
    for (SessionState st : {SessionState::Idle, SessionState::Executing, SessionState::AwaitingDemo,
                            SessionState::DemoActive, SessionState::Replay}) {
        if (s == to_string(st)) return st;
    }
    throw malformed("unknown session state '" + s + "'");
}

ActionCommand parse_action_cmd(const Json& payload)
{
    ActionCommand c;
    try {
        c.action = payload.get<world::Action>();
        if (payload.contains("record")) c.record = payload.at("record").get<bool>();
    } catch (const Json::exception& e) {
        throw malformed(std::string("bad action_cmd: ") + e.what());
    } catch (const Error& e) {
        throw malformed(std::string("bad action_cmd: ") + e.what());
    }
    for (double v : {c.action.d.x, c.action.d.y, c.action.d.z, c.action.d.yaw}) {
        if (!std::isfinite(v)) throw malformed("action_cmd components must be finite");
    }
    return c;
}

Json action_cmd_payload(const ActionCommand& c)
{
    Json j = c.action;
    j["record"] = c.record;
    return j;
}

Json scene_json(const world::WorldState& w)
{
    Json holes = Json::array();
    for (int h = 0; h < 8; ++h) holes.push_back(footprint_json(world::hole_footprint(w.board, h)));
    Json obstacles = Json::array();
    for (const world::BoxSpec& b : w.obstacles) {
        Json o = footprint_json(geometry::Footprint::make_rect(b.center.head<2>(), b.half_extents.head<2>(), b.yaw));
        o["top_z"] = b.center.z() + b.half_extents.z();
        obstacles.push_back(o);
    }
    return Json{{"holes", holes},
                {"goal_hole", w.goal_hole},
                {"obstacles", obstacles},
                {"shape", world::to_string(w.piece_shape)},
                {"piece", footprint_json(world::piece_footprint(w.piece_shape, w.piece_pose))},
                {"gripper", footprint_json(world::gripper_footprint(w.params, w.ee))},
                {"surface_z", w.board.surface_z},
                {"tol_insert", w.board.tol_insert}};
}

Json snapshot_payload(int t, const world::WorldState& w, SessionState state, std::optional<std::uint64_t> ack)
{
    const world::Observation obs = world::observe(w);
    Json j{{"t", t},
           {"ee", w.ee},
           {"piece_pose", w.piece_pose},
           {"contact", obs.contact},
           {"raster", obs.raster},
           {"phase", to_string(state)},
           {"state", to_string(state)},
           {"grasped", w.grasped},
           {"inserted_depth", w.inserted_depth},
           {"scene", scene_json(w)}};
    if (ack) j["ack"] = *ack;
    return j;
}

// ---------------------------------------------------------------------------

Session::Session(skill::DemoOptions options) : options_(options) {}

Message Session::next(MessageType type, Json payload) { return {type, ++out_seq_, std::move(payload)}; }

Message Session::snapshot(std::optional<std::uint64_t> ack)
{
    if (!world_) throw Error(ErrorCode::InvalidConfig, "no world to snapshot");
    return next(MessageType::StateSnapshot, snapshot_payload(t_, *world_, state_, ack));
}

Message Session::error_message(const std::string& what, std::optional<std::uint64_t> in_reply_to)
{
    Json p{{"message", what}, {"state", to_string(state_)}};
    if (in_reply_to) p["in_reply_to"] = *in_reply_to;
    return next(MessageType::Error, p);
}

std::vector<Message> Session::begin_execution()
{
    state_ = SessionState::Executing;
    if (!world_) return {};
    return {snapshot(std::nullopt)};
}

Message Session::executing_snapshot(const world::WorldState& w)
{
    if (state_ == SessionState::Idle) state_ = SessionState::Executing;
    world_ = w;
    ++t_;
    return snapshot(std::nullopt);
}

std::vector<Message> Session::request_demo(const world::WorldState& w, const skill::FeatureFrame& frame,
                                           std::uint64_t seed)
{
    failure_world_ = w;
    world_ = w;
    frame_ = frame;
    demo_seed_ = seed;
    recorder_.reset();
    result_.reset();
    finished_ = false;
    state_ = SessionState::AwaitingDemo;
    return resend_request();
}

std::vector<Message> Session::resend_request()
{
    if (state_ != SessionState::AwaitingDemo || !failure_world_) return {};
    Json p{{"failure_state", state_json(*failure_world_)},
           {"frame", {{"hole_hat", {frame_.hole_hat.x(), frame_.hole_hat.y()}}, {"grasp_yaw", frame_.grasp_yaw}}},
           {"beta", options_.beta},
           {"max_steps", options_.max_steps}};
    std::vector<Message> out{next(MessageType::DemoRequest, p)};
    out.push_back(snapshot(std::nullopt));
    return out;
}

std::vector<Message> Session::apply_action(const Message& in)
{
    const ActionCommand cmd = parse_action_cmd(in.payload);
    if (state_ == SessionState::AwaitingDemo) {
        recorder_.emplace(*failure_world_, frame_, options_, demo_seed_);
        state_ = SessionState::DemoActive;
    }
    recorder_->apply(cmd.action, cmd.record);
    world_ = recorder_->world();
    ++t_;
    std::vector<Message> out{snapshot(in.seq)};
    if (recorder_->succeeded() || recorder_->exhausted()) {
        const bool ok = recorder_->succeeded() && !recorder_->demo().steps.empty();
        Json p{{"outcome", world::check_outcome(recorder_->world(), recorder_->world().goal_hole)},
               {"success", ok},
               {"steps", recorder_->steps()},
               {"recorded", recorder_->demo().steps.size()}};
        if (ok) {
            result_ = recorder_->finish();
        } else {
            p["error"] = recorder_->succeeded() ? "no recorded steps" : "step cap reached";
        }
        recorder_.reset();
        finished_ = true;
        state_ = SessionState::Executing;
        out.push_back(next(MessageType::DemoDone, p));
    }
    return out;
}

std::vector<Message> Session::handle(const Message& in)
{
    if (last_in_seq_ && in.seq <= *last_in_seq_) {
        return {error_message("seq must increase (last " + std::to_string(*last_in_seq_) + ")", in.seq)};
    }
    last_in_seq_ = in.seq;
    switch (in.type) {
        case MessageType::ActionCmd:
            if (state_ != SessionState::AwaitingDemo && state_ != SessionState::DemoActive) {
                return {error_message(std::string("action_cmd not accepted in ") + to_string(state_), in.seq)};
            }
            try {
                return apply_action(in);
            } catch (const Error& e) {
                if (e.code() != ErrorCode::MalformedMessage) throw;
                return {error_message(e.what(), in.seq)};
            }
        case MessageType::Error:
            return {};  // client-side errors are not answered, so two peers cannot ping-pong
        case MessageType::StateSnapshot:
        case MessageType::DemoRequest:
        case MessageType::DemoDone:
        case MessageType::ReplayFrame:
            return {error_message(std::string(to_string(in.type)) + " is a server message", in.seq)};
    }
    return {error_message("unhandled message", in.seq)};
}

std::vector<Message> Session::handle_text(const std::string& text)
{
    Message m;
    try {
        m = parse_message(text);
    } catch (const Error& e) {
        if (e.code() != ErrorCode::MalformedMessage) throw;
        return {error_message(e.what())};
    }
    return handle(m);
}

void Session::client_disconnected()
{
    last_in_seq_.reset();
    if (state_ == SessionState::DemoActive) {
        recorder_.reset();
        state_ = SessionState::AwaitingDemo;
        if (failure_world_) world_ = *failure_world_;
    }
}

void Session::abandon_demo()
{
    recorder_.reset();
    result_.reset();
    finished_ = true;
    state_ = SessionState::Executing;
}

skill::DemoResult Session::take_demo()
{
    if (!result_) throw Error(ErrorCode::DemoFailed, "no successful demonstration was recorded");
    skill::DemoResult r = std::move(*result_);
    result_.reset();
    return r;
}

void Session::begin_replay() { state_ = SessionState::Replay; }

Message Session::replay_frame(const Json& record) { return next(MessageType::ReplayFrame, record); }

void Session::end_replay() { state_ = SessionState::Idle; }

// ---------------------------------------------------------------------------

std::vector<Json> replay_records(const Json& episode_log)
{
    if (episode_log.is_null() || (episode_log.is_object() && episode_log.empty())) return {};
    if (!episode_log.is_object() || !episode_log.contains("trace") || !episode_log.at("trace").is_array()) {
        throw Error(ErrorCode::CorruptLog, "episode log has no trace array");
    }
    std::vector<Json> out;
    int expected_t = 0;
    for (const Json& r : episode_log.at("trace")) {
        if (!r.is_object() || !r.contains("t") || !r.at("t").is_number_integer() || !r.contains("ee")) {
            throw Error(ErrorCode::CorruptLog, "trace record " + std::to_string(expected_t) + " is malformed");
        }
        if (r.at("t").get<int>() != expected_t) throw Error(ErrorCode::CorruptLog, "trace records out of order");
        try {
            (void)r.at("ee").get<Pose4>();
        } catch (const std::exception&) {
            throw Error(ErrorCode::CorruptLog, "trace record " + std::to_string(expected_t) + " has a bad pose");
        }
        out.push_back(r);
        ++expected_t;
    }
    return out;
}

Json read_episode_log(const std::string& path, std::size_t index)
{
    std::istringstream in(read_file(path));
    std::string line;
    std::size_t i = 0;
    bool any = false;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        any = true;
        if (i++ != index) continue;
        try {
            return Json::parse(line);
        } catch (const Json::exception& e) {
            throw Error(ErrorCode::CorruptLog, std::string("episode log line is not JSON: ") + e.what());
        }
    }
    if (!any) return Json::object();
    throw Error(ErrorCode::CorruptLog, "episode index " + std::to_string(index) + " not in " + path);
}

}  // namespace skillpatch::teleop
