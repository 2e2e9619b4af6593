#include "skillpatch/teleop_service.hpp"

#include <arpa/inet.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>

#include "skillpatch/common.hpp"

namespace skillpatch::teleop {

namespace {

using Clock = std::chrono::steady_clock;

Error io_error(const std::string& what) { return Error(ErrorCode::IoFailure, what + ": " + std::strerror(errno)); }

/// Waits until `fd` is readable; false on timeout.
bool wait_readable(int fd, std::chrono::milliseconds timeout)
{
    pollfd p{fd, POLLIN, 0};
    const int r = ::poll(&p, 1, static_cast<int>(timeout.count()));
    return r > 0;
}

bool write_all(int fd, const std::string& bytes)
{
    std::size_t off = 0;
    while (off < bytes.size()) {
        const ssize_t n = ::send(fd, bytes.data() + off, bytes.size() - off, MSG_NOSIGNAL);
        if (n < 0 && errno == EINTR) continue;
        if (n <= 0) return false;
        off += static_cast<std::size_t>(n);
    }
    return true;
}

}  // namespace

// ---------------------------------------------------------------------------
// Server

Server::Server(std::uint16_t port)
{
    listen_fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
    if (listen_fd_ < 0) throw io_error("socket");
    const int one = 1;
    ::setsockopt(listen_fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
    addr.sin_port = htons(port);
    if (::bind(listen_fd_, reinterpret_cast<sockaddr*>(&addr), sizeof addr) < 0 || ::listen(listen_fd_, 1) < 0) {
        const Error e = io_error("bind/listen on port " + std::to_string(port));
        ::close(listen_fd_);
        throw e;
    }
    socklen_t len = sizeof addr;
    ::getsockname(listen_fd_, reinterpret_cast<sockaddr*>(&addr), &len);
    port_ = ntohs(addr.sin_port);
}

Server::~Server()
{
    close_client();
    if (listen_fd_ >= 0) ::close(listen_fd_);
}

bool Server::accept_client(std::chrono::milliseconds timeout)
{
    close_client();
    if (!wait_readable(listen_fd_, timeout)) return false;
    const int fd = ::accept(listen_fd_, nullptr, nullptr);
    if (fd < 0) return false;
    const int one = 1;
    ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
    {
        std::lock_guard<std::mutex> lock(mu_);
        queue_.clear();
    }
    client_fd_ = fd;
    connected_ = true;
    reader_ = std::thread(&Server::reader, this, fd);
    return true;
}

void Server::reader(int fd)
{
    FrameDecoder decoder;
    char buf[4096];
    auto push = [&](Inbound in) {
        {
            std::lock_guard<std::mutex> lock(mu_);
            queue_.push_back(std::move(in));
        }
        cv_.notify_all();
    };
    for (;;) {
        const ssize_t n = ::recv(fd, buf, sizeof buf, 0);
        if (n < 0 && errno == EINTR) continue;
        if (n <= 0) break;
        decoder.feed(buf, static_cast<std::size_t>(n));
        try {
            while (auto body = decoder.next()) push({Inbound::Kind::Text, std::move(*body)});
        } catch (const Error& e) {
            // framing lost: report and stop reading this client
            push({Inbound::Kind::Malformed, e.what()});
            break;
        }
    }
    connected_ = false;
    push({Inbound::Kind::Disconnected, {}});
}

void Server::send(const Message& m)
{
    std::lock_guard<std::mutex> lock(send_mu_);
    if (client_fd_ < 0 || !connected_ || !write_all(client_fd_, encode_frame(serialize(m)))) {
        throw Error(ErrorCode::ClientDisconnected, "client is not connected");
    }
}

void Server::send_all(const std::vector<Message>& ms)
{
    for (const Message& m : ms) send(m);
}

std::optional<Inbound> Server::poll(std::chrono::milliseconds timeout)
{
    std::unique_lock<std::mutex> lock(mu_);
    if (!cv_.wait_for(lock, timeout, [&] { return !queue_.empty(); })) return std::nullopt;
    Inbound in = std::move(queue_.front());
    queue_.pop_front();
    return in;
}

void Server::close_client()
{
    if (client_fd_ >= 0) ::shutdown(client_fd_, SHUT_RDWR);
    if (reader_.joinable()) reader_.join();
    if (client_fd_ >= 0) ::close(client_fd_);
    client_fd_ = -1;
    connected_ = false;
    std::lock_guard<std::mutex> lock(mu_);
    queue_.clear();
}

// ---------------------------------------------------------------------------
// Client

Client::~Client() { close(); }

void Client::connect(const std::string& host, std::uint16_t port)
{
    close();
    fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
    if (fd_ < 0) throw io_error("socket");
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_port = htons(port);
    if (::inet_pton(AF_INET, host.c_str(), &addr.sin_addr) != 1 ||
        ::connect(fd_, reinterpret_cast<sockaddr*>(&addr), sizeof addr) < 0) {
        const Error e = io_error("connect to " + host + ":" + std::to_string(port));
        close();
        throw e;
    }
    const int one = 1;
    ::setsockopt(fd_, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
}

void Client::send(const Message& m) { send_raw(serialize(m)); }

void Client::send_raw(const std::string& body)
{
    if (fd_ < 0 || !write_all(fd_, encode_frame(body))) throw Error(ErrorCode::ClientDisconnected, "server closed the connection");
}

std::optional<Message> Client::receive(std::chrono::milliseconds timeout)
{
    const auto deadline = Clock::now() + timeout;
    for (;;) {
        if (auto body = decoder_.next()) return parse_message(*body);
        if (fd_ < 0) throw Error(ErrorCode::ClientDisconnected, "connection closed");
        const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - Clock::now());
        if (left.count() <= 0 || !wait_readable(fd_, left)) return std::nullopt;
        char buf[4096];
        const ssize_t n = ::recv(fd_, buf, sizeof buf, 0);
        if (n < 0 && errno == EINTR) continue;
        if (n <= 0) {
            close();
            throw Error(ErrorCode::ClientDisconnected, "server closed the connection");
        }
        decoder_.feed(buf, static_cast<std::size_t>(n));
    }
}

std::optional<Message> Client::receive_until(MessageType type, std::chrono::milliseconds timeout,
                                             std::vector<Message>* skipped)
{
    const auto deadline = Clock::now() + timeout;
    for (;;) {
        const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - Clock::now());
        if (left.count() <= 0) return std::nullopt;
        auto m = receive(left);
        if (!m) return std::nullopt;
        if (m->type == type) return m;
        if (skipped) skipped->push_back(std::move(*m));
    }
}

void Client::close()
{
    if (fd_ >= 0) ::close(fd_);
    fd_ = -1;
    decoder_ = {};
}

// ---------------------------------------------------------------------------
// Service

TeleopService::TeleopService(Server& server, ServiceOptions options)
    : server_(server), options_(options), session_(options.demo)
{
}

bool TeleopService::send_safely(const std::vector<Message>& ms)
{
    try {
        server_.send_all(ms);
        return true;
    } catch (const Error& e) {
        if (e.code() != ErrorCode::ClientDisconnected) throw;
        return false;
    }
}

void TeleopService::drain()
{
    while (auto in = server_.poll(std::chrono::milliseconds(0))) {
        switch (in->kind) {
            case Inbound::Kind::Text: send_safely(session_.handle_text(in->text)); break;
            case Inbound::Kind::Malformed:
                send_safely({session_.error_message(in->text)});
                server_.close_client();
                session_.client_disconnected();
                return;
            case Inbound::Kind::Disconnected:
                server_.close_client();
                session_.client_disconnected();
                return;
        }
    }
}

orch::StepObserver TeleopService::step_observer()
{
    return [this](const world::WorldState& w, const world::Action&, bool) {
        if (!server_.connected()) server_.accept_client(std::chrono::milliseconds(0));
        if (!server_.connected()) return;
        drain();
        if (options_.stream_snapshots && server_.connected()) send_safely({session_.executing_snapshot(w)});
    };
}

orch::DemoProvider TeleopService::demo_provider()
{
    return [this](const world::WorldState& w, const skill::FeatureFrame& frame, std::uint64_t seed) {
        return run_demo(w, frame, seed);
    };
}

skill::Demonstration TeleopService::run_demo(const world::WorldState& w, const skill::FeatureFrame& frame,
                                             std::uint64_t seed)
{
    if (server_.connected()) drain();
    auto reconnect = [&] {
        if (!server_.accept_client(options_.reconnect_timeout)) {
            session_.abandon_demo();
            throw Error(ErrorCode::ClientDisconnected, "no operator connected for the demonstration");
        }
    };
    if (!server_.connected()) reconnect();
    std::vector<Message> announce = session_.request_demo(w, frame, seed);
    for (;;) {
        if (!send_safely(announce)) {
            session_.client_disconnected();
            reconnect();
            announce = session_.resend_request();
            continue;
        }
        announce.clear();
        const auto in = server_.poll(options_.input_timeout);
        if (!in) {
            session_.abandon_demo();
            throw Error(ErrorCode::DemoFailed, "operator sent no input in time");
        }
        if (in->kind != Inbound::Kind::Text) {
            if (in->kind == Inbound::Kind::Malformed) send_safely({session_.error_message(in->text)});
            server_.close_client();
            session_.client_disconnected();
            reconnect();
            announce = session_.resend_request();
            continue;
        }
        announce = session_.handle_text(in->text);
        if (session_.demo_finished()) {
            send_safely(announce);
            skill::DemoResult r = session_.take_demo();
            ++demos_received_;
            return r.demo;
        }
    }
}

std::size_t TeleopService::stream_replay(const std::vector<Json>& records, std::chrono::milliseconds cadence)
{
    session_.begin_replay();
    std::size_t sent = 0;
    auto next_at = Clock::now();
    for (const Json& r : records) {
        std::this_thread::sleep_until(next_at);
        if (!send_safely({session_.replay_frame(r)})) break;
        ++sent;
        next_at += cadence;
    }
    session_.end_replay();
    return sent;
}

}  // namespace skillpatch::teleop
