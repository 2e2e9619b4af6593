#pragma once

// Loopback TCP transport for the teleoperation protocol and its hook into training.

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "skillpatch/orchestrator.hpp"
#include "skillpatch/teleop.hpp"

namespace skillpatch::teleop {

struct Inbound {
    enum class Kind { Text, Malformed, Disconnected } kind{Kind::Text};
    std::string text{};
};

/// Single-client server on 127.0.0.1. A reader thread decodes frames into a
/// queue; sends happen on the caller's thread.
class Server {
public:
    /// Port 0 binds an ephemeral port. Throws IoFailure.
    explicit Server(std::uint16_t port = 0);
    ~Server();
    Server(const Server&) = delete;
    Server& operator=(const Server&) = delete;

    std::uint16_t port() const { return port_; }
    /// Waits for one client; false on timeout. Any previous client is dropped.
    bool accept_client(std::chrono::milliseconds timeout);
    bool connected() const { return connected_.load(); }
    /// Throws ClientDisconnected when the client is gone.
    void send(const Message& m);
    void send_all(const std::vector<Message>& ms);
    std::optional<Inbound> poll(std::chrono::milliseconds timeout);
    void close_client();

private:
    void reader(int fd);

    int listen_fd_{-1};
    int client_fd_{-1};
    std::uint16_t port_{0};
    std::atomic<bool> connected_{false};
    std::thread reader_{};
    std::mutex mu_{};
    std::condition_variable cv_{};
    std::deque<Inbound> queue_{};
    std::mutex send_mu_{};
};

/// Blocking client used by tests and scripted operators.
class Client {
public:
    Client() = default;
    ~Client();
    Client(const Client&) = delete;
    Client& operator=(const Client&) = delete;

    /// Throws IoFailure.
    void connect(const std::string& host, std::uint16_t port);
    void send(const Message& m);
    void send_raw(const std::string& body);
    /// Next message, or nullopt on timeout. Throws ClientDisconnected when the server closes.
    std::optional<Message> receive(std::chrono::milliseconds timeout);
    /// Receives until a message of `type` arrives; the skipped ones are appended to `skipped`.
    std::optional<Message> receive_until(MessageType type, std::chrono::milliseconds timeout,
                                         std::vector<Message>* skipped = nullptr);
    void close();
    bool open() const { return fd_ >= 0; }

private:
    int fd_{-1};
    FrameDecoder decoder_{};
};

struct ServiceOptions {
    skill::DemoOptions demo{};
    std::chrono::milliseconds reconnect_timeout{30000};
    std::chrono::milliseconds input_timeout{120000};
    bool stream_snapshots{true};
};

class TeleopService {
public:
    TeleopService(Server& server, ServiceOptions options = {});

    /// Demonstrations from the connected operator instead of the scripted expert.
    orch::DemoProvider demo_provider();
    /// Streams a snapshot per training step when a client is connected and answers its messages.
    orch::StepObserver step_observer();
    /// Sends replay frames at a fixed cadence; returns the number sent.
    std::size_t stream_replay(const std::vector<Json>& records, std::chrono::milliseconds cadence);

    Session& session() { return session_; }
    int demos_received() const { return demos_received_; }

private:
    skill::Demonstration run_demo(const world::WorldState& w, const skill::FeatureFrame& frame, std::uint64_t seed);
    bool send_safely(const std::vector<Message>& ms);
    void drain();

    Server& server_;
    ServiceOptions options_;
    Session session_;
    int demos_received_{0};
};

}  // namespace skillpatch::teleop
