#pragma once

// Teleoperation wire protocol and the transport-independent session state machine.
// Framing is a 4-byte big-endian length followed by that many bytes of UTF-8 JSON.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "skillpatch/io.hpp"
#include "skillpatch/skill.hpp"
#include "skillpatch/world.hpp"

namespace skillpatch::teleop {

enum class MessageType { StateSnapshot, DemoRequest, ActionCmd, DemoDone, ReplayFrame, Error };
const char* to_string(MessageType t);
/// Throws MalformedMessage for an unknown name.
MessageType message_type_from_string(const std::string& s);

struct Message {
    MessageType type{MessageType::Error};
    std::uint64_t seq{0};
    Json payload = Json::object();
};

Json to_json(const Message& m);
/// Validates the envelope {type, seq, payload}. Throws MalformedMessage.
Message message_from_json(const Json& j);
Message parse_message(const std::string& text);
std::string serialize(const Message& m);

constexpr std::size_t kMaxFrameBytes = 16u << 20;

/// Length-prefixed frame for one message body.
std::string encode_frame(const std::string& body);

/// Incremental frame splitter for a byte stream.
class FrameDecoder {
public:
    void feed(const char* data, std::size_t n);
    void feed(const std::string& s) { feed(s.data(), s.size()); }
    /// Next complete body; throws MalformedMessage when a declared length exceeds kMaxFrameBytes.
    std::optional<std::string> next();
    std::size_t buffered() const { return buf_.size(); }

private:
    std::string buf_;
};

enum class SessionState { Idle, Executing, AwaitingDemo, DemoActive, Replay };
const char* to_string(SessionState s);
SessionState session_state_from_string(const std::string& s);

struct ActionCommand {
    world::Action action{};
    bool record{true};  // false while the operator is still moving to the skill's starting location
};

/// Reads an action_cmd payload {d, grip, record?}. Throws MalformedMessage.
ActionCommand parse_action_cmd(const Json& payload);
Json action_cmd_payload(const ActionCommand& c);

/// Static board geometry, obstacles and piece footprint for rendering.
Json scene_json(const world::WorldState& w);
/// {t, ee, piece_pose, contact, raster, phase, state, grasped, inserted_depth, scene, ack?}
Json snapshot_payload(int t, const world::WorldState& w, SessionState state, std::optional<std::uint64_t> ack);

/// Protocol state machine. The episode thread owns it; every world mutation
/// caused by the operator happens in `handle`.
class Session {
public:
    explicit Session(skill::DemoOptions options = {});

    SessionState state() const { return state_; }

    /// Idle -> Executing. Returns the current snapshot when a world is known.
    std::vector<Message> begin_execution();
    /// Snapshot of a training-episode world (state Executing).
    Message executing_snapshot(const world::WorldState& w);

    /// Enters AwaitingDemo at a failure state and announces it.
    std::vector<Message> request_demo(const world::WorldState& w, const skill::FeatureFrame& frame, std::uint64_t seed);

    /// Responds to one decoded client message.
    std::vector<Message> handle(const Message& in);
    /// Parses and responds; a malformed message gets an error reply and leaves the state unchanged.
    std::vector<Message> handle_text(const std::string& text);

    /// A lost client during DemoActive discards the partial demo and returns to AwaitingDemo.
    void client_disconnected();
    /// Gives up on the pending request (operator gone or silent); back to Executing.
    void abandon_demo();
    /// Re-announces the pending request after a reconnect (AwaitingDemo only).
    std::vector<Message> resend_request();

    /// True once demo_done was sent for the current request.
    bool demo_finished() const { return finished_; }
    /// The recorded demonstration after a successful demo_done; throws DemoFailed otherwise.
    skill::DemoResult take_demo();

    /// Replay streaming: Replay state for the duration, one replay_frame per record.
    void begin_replay();
    Message replay_frame(const Json& record);
    void end_replay();

    Message error_message(const std::string& what, std::optional<std::uint64_t> in_reply_to = std::nullopt);

private:
    Message next(MessageType type, Json payload);
    Message snapshot(std::optional<std::uint64_t> ack);
    std::vector<Message> apply_action(const Message& in);

    skill::DemoOptions options_;
    SessionState state_{SessionState::Idle};
    std::uint64_t out_seq_{0};
    std::optional<std::uint64_t> last_in_seq_{};
    int t_{0};
    std::optional<world::WorldState> world_{};
    // pending demonstration request
    std::optional<world::WorldState> failure_world_{};
    skill::FeatureFrame frame_{};
    std::uint64_t demo_seed_{0};
    std::optional<skill::DemoRecorder> recorder_{};
    std::optional<skill::DemoResult> result_{};
    bool finished_{false};
};

/// Trace records of one episode log (the "trace" array of an episodes/*.jsonl line).
/// Throws CorruptLog when the log or a record is malformed.
std::vector<Json> replay_records(const Json& episode_log);
/// Reads line `index` of an episodes JSON-lines file. An empty file yields an empty log.
Json read_episode_log(const std::string& path, std::size_t index);

}  // namespace skillpatch::teleop
