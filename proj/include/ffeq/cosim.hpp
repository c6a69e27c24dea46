#pragma once

// Evaluation service for external optimizers. Each message is a 4-byte
// big-endian length followed by that many bytes of UTF-8 JSON; one request is
// in flight per connection. See docs/protocol.md for the schemas.

#include <atomic>
#include <cerrno>
#include <chrono>
#include <cstdint>
#include <cstring>
#include <deque>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <thread>
#include <utility>
#include <variant>
#include <vector>

#include <arpa/inet.h>
#include <fcntl.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <json.hpp>

#include "ffeq/channel.hpp"
#include "ffeq/error.hpp"
#include "ffeq/optimize.hpp"
#include "ffeq/serialize.hpp"

namespace ffeq::cosim {

inline constexpr int protocol_version = 1;
inline constexpr std::uint32_t max_frame_bytes = 16u << 20;

// -- framing ---------------------------------------------------------------

inline std::string encode_frame(std::string_view payload)
{
    if (payload.size() > max_frame_bytes)
        throw Error(ErrorCode::Frame, "payload exceeds 16 MiB");
    const auto n = static_cast<std::uint32_t>(payload.size());
    std::string out;
    out.reserve(4 + payload.size());
    out.push_back(static_cast<char>((n >> 24) & 0xff));
    out.push_back(static_cast<char>((n >> 16) & 0xff));
    out.push_back(static_cast<char>((n >> 8) & 0xff));
    out.push_back(static_cast<char>(n & 0xff));
    out.append(payload);
    return out;
}

inline std::string encode_message(const nlohmann::json& j) { return encode_frame(j.dump()); }

/// Incremental frame splitter. A zero-length or oversized header produces a
/// FrameError event; the body of an oversized frame is skipped so the stream
/// stays in sync.
class FrameDecoder {
public:
    struct Frame {
        std::string payload;
    };
    struct FrameError {
        std::string message;
    };
    using Event = std::variant<Frame, FrameError>;

    void feed(std::string_view bytes)
    {
        buffer_.append(bytes);
        for (;;) {
            if (skip_ > 0) {
                const auto n = std::min<std::size_t>(skip_, buffer_.size());
                buffer_.erase(0, n);
                skip_ -= n;
                if (skip_ > 0)
                    return;
            }
            if (buffer_.size() < 4)
                return;
            const auto b = reinterpret_cast<const unsigned char*>(buffer_.data());
            const std::uint32_t n = (std::uint32_t{b[0]} << 24) | (std::uint32_t{b[1]} << 16) |
                                    (std::uint32_t{b[2]} << 8) | std::uint32_t{b[3]};
            if (n == 0) {
                buffer_.erase(0, 4);
                events_.push_back(FrameError{"zero-length frame"});
                continue;
            }
            if (n > max_frame_bytes) {
                buffer_.erase(0, 4);
                skip_ = n;
                events_.push_back(FrameError{"frame of " + std::to_string(n) + " bytes exceeds 16 MiB"});
                continue;
            }
            if (buffer_.size() < 4 + std::size_t{n})
                return;
            events_.push_back(Frame{buffer_.substr(4, n)});
            buffer_.erase(0, 4 + std::size_t{n});
        }
    }

    std::optional<Event> next()
    {
        if (events_.empty())
            return std::nullopt;
        Event e = std::move(events_.front());
        events_.pop_front();
        return e;
    }

    std::size_t pending_bytes() const noexcept { return buffer_.size(); }

private:
    std::string buffer_;
    std::deque<Event> events_;
    std::size_t skip_ = 0;
};

// -- messages --------------------------------------------------------------

struct PresetRef {
    std::string name;
};

using ChannelRef = std::variant<ParametricChannel, PresetRef, TabulatedChannel>;

struct EvalRequest {
    int protocol_version = cosim::protocol_version;
    std::uint64_t request_id = 1;
    HardwareConfig hardware;
    ChannelRef channel = ParametricChannel::reference_cable();
    DataRateSettings rate = DataRateSettings::from_clock(1e9);
    StimulusSettings stimulus;
};

struct ResponseError {
    std::string code;  // FRAME, PARSE, VERSION, ORDER, INVALID, EVAL
    std::string message;

    bool operator==(const ResponseError&) const = default;
};

struct EvalResponse {
    std::uint64_t request_id = 0;
    std::optional<EvalResult> result;
    std::optional<ResponseError> error;

    bool ok() const noexcept { return result.has_value(); }
};

inline nlohmann::json to_json(const EvalRequest& r)
{
    nlohmann::json channel;
    if (const auto* p = std::get_if<ParametricChannel>(&r.channel))
        channel = channel_to_json(*p);
    else if (const auto* t = std::get_if<TabulatedChannel>(&r.channel))
        channel = channel_to_json(*t);
    else
        channel = {{"kind", "preset"}, {"name", std::get<PresetRef>(r.channel).name}};
    return {{"type", "eval_request"},  {"protocol_version", r.protocol_version},
            {"request_id", r.request_id}, {"hardware", r.hardware},
            {"channel", channel},          {"rate", r.rate},
            {"stimulus", r.stimulus}};
}

inline EvalRequest request_from_json(const nlohmann::json& j)
{
    return parse_guard("eval_request", [&] {
        EvalRequest r;
        r.protocol_version = j.at("protocol_version").get<int>();
        r.request_id = j.at("request_id").get<std::uint64_t>();
        r.hardware = j.at("hardware").get<HardwareConfig>();
        const auto& ch = j.at("channel");
        const auto kind = ch.at("kind").get<std::string>();
        if (kind == "parametric")
            r.channel = parametric_from_json(ch);
        else if (kind == "preset")
            r.channel = PresetRef{ch.at("name").get<std::string>()};
        else if (kind == "tabulated")
            r.channel = tabulated_from_json(ch);
        else
            throw Error(ErrorCode::Parse, "unknown channel kind '" + kind + "'");
        r.rate = j.at("rate").get<DataRateSettings>();
        r.stimulus = j.value("stimulus", nlohmann::json::object()).get<StimulusSettings>();
        return r;
    });
}

inline nlohmann::json to_json(const EvalResponse& r)
{
    nlohmann::json j = {{"type", "eval_response"}, {"request_id", r.request_id}};
    if (r.result) {
        j["status"] = "ok";
        j["result"] = *r.result;
    } else {
        j["status"] = "error";
        j["error"] = {{"code", r.error ? r.error->code : "EVAL"}, {"message", r.error ? r.error->message : ""}};
    }
    return j;
}

inline EvalResponse response_from_json(const nlohmann::json& j)
{
    return parse_guard("eval_response", [&] {
        EvalResponse r;
        r.request_id = j.at("request_id").get<std::uint64_t>();
        if (j.at("status").get<std::string>() == "ok")
            r.result = j.at("result").get<EvalResult>();
        else
            r.error = ResponseError{j.at("error").at("code").get<std::string>(),
                                    j.at("error").at("message").get<std::string>()};
        return r;
    });
}

inline EvalResponse error_response(std::uint64_t id, std::string code, std::string message)
{
    EvalResponse r;
    r.request_id = id;
    r.error = ResponseError{std::move(code), std::move(message)};
    return r;
}

// -- evaluation context ----------------------------------------------------

/// Named channels a server can refer to. "reference" is always available.
class ChannelPresets {
public:
    ChannelPresets() { presets_.emplace("reference", ParametricChannel::reference_cable()); }

    void add(std::string name, ChannelModel model) { presets_.insert_or_assign(std::move(name), std::move(model)); }

    /// Adds every *.csv file in `dir`, named by file stem.
    void load_directory(const std::filesystem::path& dir)
    {
        if (!std::filesystem::is_directory(dir))
            throw Error(ErrorCode::Io, "preset directory not found: " + dir.string());
        for (const auto& entry : std::filesystem::directory_iterator(dir))
            if (entry.is_regular_file() && entry.path().extension() == ".csv")
                add(entry.path().stem().string(), load_tabulated(entry.path()));
    }

    const ChannelModel& get(const std::string& name) const
    {
        const auto it = presets_.find(name);
        if (it == presets_.end())
            throw Error(ErrorCode::Configuration, "unknown channel preset '" + name + "'");
        return it->second;
    }

private:
    std::map<std::string, ChannelModel> presets_;
};

/// The link setup a request describes; shared by the server and by local
/// callers so both evaluate identically.
inline LinkSetup resolve_setup(const EvalRequest& req, const ChannelPresets& presets, const PowerCalibration& power)
{
    LinkSetup setup;
    if (const auto* p = std::get_if<ParametricChannel>(&req.channel))
        setup.channel = *p;
    else if (const auto* t = std::get_if<TabulatedChannel>(&req.channel))
        setup.channel = *t;
    else
        setup.channel = presets.get(std::get<PresetRef>(req.channel).name);
    setup.rate = req.rate;
    setup.stimulus = req.stimulus;
    setup.power = power;
    return setup;
}

/// Stateless request handler: the response depends only on the message.
class RequestHandler {
public:
    RequestHandler(ChannelPresets presets = {}, PowerCalibration power = default_calibration())
        : presets_(std::move(presets))
        , power_(power)
    {
    }

    EvalResponse handle(const EvalRequest& req) const
    {
        if (req.protocol_version != protocol_version)
            return error_response(req.request_id, "VERSION",
                                  "unsupported protocol version " + std::to_string(req.protocol_version) +
                                      " (server speaks " + std::to_string(protocol_version) + ")");
        try {
            req.hardware.validate();
            const LinkEvaluator link(resolve_setup(req, presets_, power_));
            EvalResponse r;
            r.request_id = req.request_id;
            r.result = evaluate(req.hardware, link);
            return r;
        } catch (const Error& e) {
            const bool invalid = e.code() == ErrorCode::Configuration || e.code() == ErrorCode::Degenerate ||
                                 e.code() == ErrorCode::Domain;
            return error_response(req.request_id, invalid ? "INVALID" : "EVAL", e.what());
        }
    }

    const PowerCalibration& power() const noexcept { return power_; }
    const ChannelPresets& presets() const noexcept { return presets_; }

private:
    ChannelPresets presets_;
    PowerCalibration power_;
};

// -- sockets ---------------------------------------------------------------

namespace detail {

class Socket {
public:
    Socket() = default;
    explicit Socket(int fd)
        : fd_(fd)
    {
    }
    Socket(Socket&& o) noexcept
        : fd_(std::exchange(o.fd_, -1))
    {
    }
    Socket& operator=(Socket&& o) noexcept
    {
        if (this != &o) {
            close();
            fd_ = std::exchange(o.fd_, -1);
        }
        return *this;
    }
    Socket(const Socket&) = delete;
    Socket& operator=(const Socket&) = delete;
    ~Socket() { close(); }

    int fd() const noexcept { return fd_; }
    bool valid() const noexcept { return fd_ >= 0; }

    void close() noexcept
    {
        if (fd_ >= 0) {
            ::close(fd_);
            fd_ = -1;
        }
    }

private:
    int fd_ = -1;
};

inline void send_all(int fd, std::string_view data)
{
    while (!data.empty()) {
        const ssize_t n = ::send(fd, data.data(), data.size(), MSG_NOSIGNAL);
        if (n < 0) {
            if (errno == EINTR)
                continue;
            if (errno == EAGAIN || errno == EWOULDBLOCK) {
                pollfd p{fd, POLLOUT, 0};
                ::poll(&p, 1, 100);
                continue;
            }
            throw Error(ErrorCode::Connection, std::string("send failed: ") + std::strerror(errno));
        }
        data.remove_prefix(static_cast<std::size_t>(n));
    }
}

/// Waits up to `timeout_ms` for readable data; returns bytes read, 0 on EOF,
/// -1 on timeout.
inline ssize_t recv_some(int fd, char* buf, std::size_t cap, int timeout_ms)
{
    pollfd p{fd, POLLIN, 0};
    const int rc = ::poll(&p, 1, timeout_ms);
    if (rc == 0)
        return -1;
    if (rc < 0) {
        if (errno == EINTR)
            return -1;
        throw Error(ErrorCode::Connection, std::string("poll failed: ") + std::strerror(errno));
    }
    for (;;) {
        const ssize_t n = ::recv(fd, buf, cap, 0);
        if (n >= 0)
            return n;
        if (errno == EINTR)
            continue;
        if (errno == EAGAIN || errno == EWOULDBLOCK)
            return -1;
        if (errno == ECONNRESET)
            return 0;
        throw Error(ErrorCode::Connection, std::string("recv failed: ") + std::strerror(errno));
    }
}

} // namespace detail

struct Endpoint {
    std::string host = "127.0.0.1";
    std::uint16_t port = 7465;
};

/// Multi-connection TCP server. Connections are served on their own threads;
/// each processes its requests strictly in order.
class Server {
public:
    explicit Server(RequestHandler handler, Endpoint endpoint = {})
        : handler_(std::move(handler))
        , endpoint_(std::move(endpoint))
    {
    }

    Server(const Server&) = delete;
    Server& operator=(const Server&) = delete;
    ~Server() { stop(); }

    /// Binds and starts accepting. Port 0 picks an ephemeral port.
    void start()
    {
        addrinfo hints{};
        hints.ai_family = AF_INET;
        hints.ai_socktype = SOCK_STREAM;
        hints.ai_flags = AI_PASSIVE;
        addrinfo* res = nullptr;
        const std::string port = std::to_string(endpoint_.port);
        if (::getaddrinfo(endpoint_.host.c_str(), port.c_str(), &hints, &res) != 0 || !res)
            throw Error(ErrorCode::Connection, "cannot resolve " + endpoint_.host);
        std::unique_ptr<addrinfo, decltype(&::freeaddrinfo)> guard(res, ::freeaddrinfo);

        detail::Socket s(::socket(res->ai_family, res->ai_socktype, res->ai_protocol));
        if (!s.valid())
            throw Error(ErrorCode::Connection, std::string("socket: ") + std::strerror(errno));
        int one = 1;
        ::setsockopt(s.fd(), SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
        if (::bind(s.fd(), res->ai_addr, res->ai_addrlen) != 0)
            throw Error(ErrorCode::Connection, "cannot bind " + endpoint_.host + ":" + port + ": " + std::strerror(errno));
        if (::listen(s.fd(), 16) != 0)
            throw Error(ErrorCode::Connection, std::string("listen: ") + std::strerror(errno));
        sockaddr_in addr{};
        socklen_t len = sizeof addr;
        ::getsockname(s.fd(), reinterpret_cast<sockaddr*>(&addr), &len);
        bound_port_ = ntohs(addr.sin_port);
        listener_ = std::move(s);
        running_ = true;
        acceptor_ = std::thread([this] { accept_loop(); });
    }

    std::uint16_t port() const noexcept { return bound_port_; }
    bool running() const noexcept { return running_; }

    /// Requests termination; safe to call from any thread, including handlers.
    void request_stop() noexcept { running_ = false; }

    void stop()
    {
        request_stop();
        if (acceptor_.joinable())
            acceptor_.join();
        std::vector<std::thread> workers;
        {
            std::lock_guard lock(mutex_);
            workers.swap(workers_);
        }
        for (auto& w : workers)
            if (w.joinable())
                w.join();
        listener_.close();
    }

    /// Blocks until a shutdown message or request_stop() ends the server.
    void wait()
    {
        while (running_)
            std::this_thread::sleep_for(std::chrono::milliseconds(20));
        stop();
    }

    std::size_t requests_served() const noexcept { return served_; }

private:
    void accept_loop()
    {
        while (running_) {
            pollfd p{listener_.fd(), POLLIN, 0};
            if (::poll(&p, 1, 50) <= 0)
                continue;
            const int fd = ::accept(listener_.fd(), nullptr, nullptr);
            if (fd < 0)
                continue;
            int one = 1;
            ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
            std::lock_guard lock(mutex_);
            workers_.emplace_back([this, fd] { serve_connection(detail::Socket(fd)); });
        }
    }

    void reply(int fd, const EvalResponse& r) { detail::send_all(fd, encode_message(to_json(r))); }

    void serve_connection(detail::Socket sock)
    {
        FrameDecoder decoder;
        std::uint64_t last_id = 0;
        std::vector<char> buf(64 * 1024);
        try {
            while (running_) {
                const ssize_t n = detail::recv_some(sock.fd(), buf.data(), buf.size(), 50);
                if (n == 0)
                    return;
                if (n < 0)
                    continue;
                decoder.feed({buf.data(), static_cast<std::size_t>(n)});
                while (auto ev = decoder.next()) {
                    if (const auto* err = std::get_if<FrameDecoder::FrameError>(&*ev)) {
                        reply(sock.fd(), error_response(0, "FRAME", err->message));
                        continue;
                    }
                    if (!handle_frame(sock.fd(), std::get<FrameDecoder::Frame>(*ev).payload, last_id))
                        return;
                }
            }
        } catch (const Error&) {
            // peer went away mid-reply; drop the connection
        }
    }

    // Returns false when the connection should close.
    bool handle_frame(int fd, const std::string& payload, std::uint64_t& last_id)
    {
        nlohmann::json msg;
        try {
            msg = nlohmann::json::parse(payload);
        } catch (const nlohmann::json::exception& e) {
            reply(fd, error_response(0, "PARSE", e.what()));
            return true;
        }
        const std::string type = msg.is_object() ? msg.value("type", "") : "";
        if (type == "shutdown") {
            detail::send_all(fd, encode_message({{"type", "shutdown_ack"}}));
            request_stop();
            return false;
        }
        if (type != "eval_request") {
            reply(fd, error_response(0, "PARSE", "unknown message type '" + type + "'"));
            return true;
        }
        EvalRequest req;
        try {
            req = request_from_json(msg);
        } catch (const Error& e) {
            const auto id = msg.contains("request_id") && msg["request_id"].is_number_unsigned()
                                ? msg["request_id"].get<std::uint64_t>()
                                : 0;
            const int version = msg.value("protocol_version", protocol_version);
            reply(fd, error_response(id, version != protocol_version ? "VERSION" : "PARSE", e.what()));
            return true;
        }
        if (req.request_id <= last_id) {
            reply(fd, error_response(req.request_id, "ORDER",
                                     "request_id must increase (last was " + std::to_string(last_id) + ")"));
            return true;
        }
        last_id = req.request_id;
        const EvalResponse resp = handler_.handle(req);
        ++served_;  // counted before the reply so a client that has its answer sees the count
        reply(fd, resp);
        return true;
    }

    RequestHandler handler_;
    Endpoint endpoint_;
    detail::Socket listener_;
    std::uint16_t bound_port_ = 0;
    std::atomic<bool> running_{false};
    std::atomic<std::size_t> served_{0};
    std::thread acceptor_;
    std::mutex mutex_;
    std::vector<std::thread> workers_;
};

/// Blocking client holding one connection.
class Client {
public:
    Client(const Endpoint& endpoint, double timeout_s = 30.0)
        : timeout_ms_(static_cast<int>(timeout_s * 1000.0))
    {
        addrinfo hints{};
        hints.ai_family = AF_INET;
        hints.ai_socktype = SOCK_STREAM;
        addrinfo* res = nullptr;
        const std::string port = std::to_string(endpoint.port);
        if (::getaddrinfo(endpoint.host.c_str(), port.c_str(), &hints, &res) != 0 || !res)
            throw Error(ErrorCode::Connection, "cannot resolve " + endpoint.host);
        std::unique_ptr<addrinfo, decltype(&::freeaddrinfo)> guard(res, ::freeaddrinfo);
        sock_ = detail::Socket(::socket(res->ai_family, res->ai_socktype, res->ai_protocol));
        if (!sock_.valid())
            throw Error(ErrorCode::Connection, std::string("socket: ") + std::strerror(errno));

        const int flags = ::fcntl(sock_.fd(), F_GETFL, 0);
        ::fcntl(sock_.fd(), F_SETFL, flags | O_NONBLOCK);
        if (::connect(sock_.fd(), res->ai_addr, res->ai_addrlen) != 0) {
            if (errno != EINPROGRESS)
                throw Error(ErrorCode::Connection, "connect to " + endpoint.host + ":" + port + ": " + std::strerror(errno));
            pollfd p{sock_.fd(), POLLOUT, 0};
            if (::poll(&p, 1, timeout_ms_) == 0)
                throw Error(ErrorCode::Timeout, "connect to " + endpoint.host + ":" + port + " timed out");
            int err = 0;
            socklen_t len = sizeof err;
            ::getsockopt(sock_.fd(), SOL_SOCKET, SO_ERROR, &err, &len);
            if (err != 0)
                throw Error(ErrorCode::Connection, "connect to " + endpoint.host + ":" + port + ": " + std::strerror(err));
        }
        int one = 1;
        ::setsockopt(sock_.fd(), IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
    }

    void send_raw(std::string_view bytes) { detail::send_all(sock_.fd(), bytes); }

    void send(const nlohmann::json& msg) { send_raw(encode_message(msg)); }

    /// Next complete message from the server.
    nlohmann::json receive()
    {
        const auto deadline = std::chrono::steady_clock::now() + std::chrono::milliseconds(timeout_ms_);
        std::vector<char> buf(64 * 1024);
        for (;;) {
            if (auto ev = decoder_.next()) {
                if (const auto* f = std::get_if<FrameDecoder::Frame>(&*ev))
                    return parse_guard("server message", [&] { return nlohmann::json::parse(f->payload); });
                throw Error(ErrorCode::Frame, std::get<FrameDecoder::FrameError>(*ev).message);
            }
            const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - std::chrono::steady_clock::now());
            if (left.count() <= 0)
                throw Error(ErrorCode::Timeout, "no response within timeout");
            const ssize_t n = detail::recv_some(sock_.fd(), buf.data(), buf.size(), static_cast<int>(left.count()));
            if (n == 0)
                throw Error(ErrorCode::Connection, "server closed the connection");
            if (n > 0)
                decoder_.feed({buf.data(), static_cast<std::size_t>(n)});
        }
    }

    EvalResponse call(const EvalRequest& req)
    {
        send(to_json(req));
        return response_from_json(receive());
    }

    /// Asks the server to terminate; returns once it acknowledges.
    void shutdown_server()
    {
        send({{"type", "shutdown"}});
        receive();
    }

private:
    detail::Socket sock_;
    int timeout_ms_;
    FrameDecoder decoder_;
};

/// One-shot request over a fresh connection.
inline EvalResponse request(const Endpoint& endpoint, const EvalRequest& req, double timeout_s)
{
    Client client(endpoint, timeout_s);
    return client.call(req);
}

} // namespace ffeq::cosim
