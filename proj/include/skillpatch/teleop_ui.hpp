#pragma once

// Operator client model: key bindings, the one-in-flight command rule,
// session banners, reconnect backoff, and a top-down frame description.

#include <chrono>
#include <cstdint>
#include <deque>
#include <optional>
#include <string>
#include <vector>

#include "skillpatch/pose.hpp"
#include "skillpatch/teleop.hpp"

namespace skillpatch::teleop::ui {

enum class Key { ArrowLeft, ArrowRight, ArrowUp, ArrowDown, PageUp, PageDown, BracketLeft, BracketRight, Space };

/// DOM-style key names ("ArrowRight", "PageUp", "BracketLeft", "Space", ...).
std::optional<Key> key_from_name(const std::string& name);

constexpr double kStep = 0.01;     // m per key press
constexpr double kYawStep = 0.05;  // rad per key press

struct Binding {
    Pose4 d{};
    bool grip_toggle{false};
};

Binding binding(Key k);

/// Reconnect delay: 250 ms doubling per attempt, capped at 8 s.
std::chrono::milliseconds backoff(int attempt);

class ViewModel {
public:
    /// Handles a server message; returns queued commands that may now be sent.
    std::vector<Message> on_message(const Message& m);
    /// Key press: the command to send now, or nothing (queued, or input disabled).
    std::optional<Message> press(Key k);
    void on_connect();
    void on_disconnect();

    bool connected() const { return connected_; }
    bool input_enabled() const;
    SessionState state() const { return state_; }
    std::string banner() const;
    /// Latest snapshot that acknowledged every command sent so far.
    const std::optional<Json>& snapshot() const { return snapshot_; }
    std::optional<std::uint64_t> in_flight() const { return in_flight_; }
    std::size_t queued() const { return queue_.size(); }
    /// Failure state announced by the last demo_request, while it is pending.
    const std::optional<Pose4>& highlighted_failure() const { return failure_; }
    int retry_attempt() const { return retries_; }
    std::chrono::milliseconds next_retry_delay() const { return backoff(retries_); }
    const std::vector<std::string>& errors() const { return errors_; }
    /// Last replay_frame payload received.
    const std::optional<Json>& replay_frame() const { return replay_; }
    /// Board layout from the most recent snapshot carrying a scene.
    const std::optional<Json>& scene() const { return scene_; }

private:
    Message command(Key k);
    std::optional<Message> flush();

    bool connected_{false};
    SessionState state_{SessionState::Idle};
    std::optional<Json> snapshot_{};
    std::optional<std::uint64_t> in_flight_{};
    std::deque<Key> queue_{};
    std::optional<Pose4> failure_{};
    bool grip_closed_{false};
    std::uint64_t seq_{0};
    int retries_{0};
    std::vector<std::string> errors_{};
    std::optional<Json> replay_{};
    std::optional<Json> scene_{};
};

struct Item {
    std::string role;  // hole, goal_hole, obstacle, piece, gripper
    Json shape;        // footprint: {kind: rect|disc, center, half|radius, yaw}
};

struct Frame {
    std::vector<Item> items;
    Pose4 ee{};
    Pose4 piece_pose{};
    bool contact_lit{false};
    double z_gauge{0.0};  // end-effector height above the board surface
    std::vector<double> raster{};
    std::string banner{};
};

/// Top-down frame for a state_snapshot or replay_frame payload. Replay records
/// carry no scene; `base_scene` then supplies the holes and obstacles.
Frame render(const Json& snapshot, SessionState state, const Json* base_scene = nullptr);

/// True when every corner (or the disc) of `inner` lies within `outer`, up to `slack`.
bool footprint_within(const Json& inner, const Json& outer, double slack = 1e-9);

}  // namespace skillpatch::teleop::ui
