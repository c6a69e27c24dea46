#include <gtest/gtest.h>

#include <fstream>
#include <iterator>
#include <random>

#include "ffeq/cosim.hpp"

using namespace ffeq;
using namespace ffeq::cosim;

namespace {

std::string read_file(const std::string& path)
{
    std::ifstream in(path, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// Fast stimulus keeps the loopback suite quick.
StimulusSettings short_stimulus()
{
    StimulusSettings s;
    s.nbits = 600;
    s.discard_ui = 127;
    return s;
}

EvalRequest random_request(std::mt19937_64& rng, std::uint64_t id)
{
    EvalRequest r;
    r.request_id = id;
    auto& h = r.hardware;
    h.slices = {static_cast<int>(rng() % 9), 1 + static_cast<int>(rng() % 8), static_cast<int>(rng() % 9)};
    h.polarity = {rng() & 1 ? 1 : -1, 1, rng() & 1 ? 1 : -1};
    h.delay_codes = {static_cast<int>(rng() % 16), static_cast<int>(rng() % 16)};
    for (auto& x : h.r_slice)
        x = slice_resistances[rng() % 3];
    const double length = 1.0 + double(rng() % 5) * 0.5;
    r.channel = ParametricChannel::with_length(length);
    r.rate = DataRateSettings::from_clock(rng() & 1 ? 1e9 : 0.5e9, 16);
    r.stimulus = short_stimulus();
    r.stimulus.seed = 1 + rng() % 100;
    return r;
}

EvalRequest canonical_request()
{
    EvalRequest r;
    r.request_id = 1;
    r.hardware = HardwareConfig{{2, 8, 2}, {-1, 1, -1}, {7, 7}, {300.0, 300.0, 300.0}, 1.2};
    r.channel = PresetRef{"reference"};
    r.rate = DataRateSettings::from_clock(1e9, 32);
    return r;
}

struct LiveServer {
    Server server{RequestHandler{}, Endpoint{"127.0.0.1", 0}};
    LiveServer() { server.start(); }
    Endpoint endpoint() const { return {"127.0.0.1", server.port()}; }
};

} // namespace

TEST(Framing, EncodesBigEndianLength)
{
    const auto f = encode_frame("abc");
    ASSERT_EQ(f.size(), 7u);
    EXPECT_EQ(f.substr(0, 4), std::string("\0\0\0\3", 4));
    EXPECT_EQ(f.substr(4), "abc");
    const std::string big(300, 'x');
    EXPECT_EQ(encode_frame(big).substr(0, 4), std::string("\0\0\x01\x2c", 4));
}

TEST(Framing, DecoderHandlesArbitrarySplits)
{
    std::mt19937_64 rng(4);
    std::vector<std::string> payloads;
    std::string stream;
    for (int i = 0; i < 50; ++i) {
        std::string p(1 + rng() % 300, ' ');
        for (auto& c : p)
            c = static_cast<char>('a' + rng() % 26);
        payloads.push_back(p);
        stream += encode_frame(p);
    }
    FrameDecoder d;
    std::size_t pos = 0;
    while (pos < stream.size()) {
        const std::size_t n = std::min<std::size_t>(1 + rng() % 17, stream.size() - pos);
        d.feed(std::string_view(stream).substr(pos, n));
        pos += n;
    }
    for (const auto& p : payloads) {
        auto ev = d.next();
        ASSERT_TRUE(ev);
        ASSERT_TRUE(std::holds_alternative<FrameDecoder::Frame>(*ev));
        EXPECT_EQ(std::get<FrameDecoder::Frame>(*ev).payload, p);
    }
    EXPECT_FALSE(d.next());
    EXPECT_EQ(d.pending_bytes(), 0u);
}

TEST(Framing, BadHeadersAreReportedAndSkipped)
{
    FrameDecoder d;
    d.feed(std::string("\0\0\0\0", 4));
    auto ev = d.next();
    ASSERT_TRUE(ev);
    EXPECT_TRUE(std::holds_alternative<FrameDecoder::FrameError>(*ev));

    // oversized frame: header, then its body arrives in pieces, then a good frame
    const std::uint32_t n = max_frame_bytes + 1;
    std::string header{static_cast<char>(n >> 24), static_cast<char>(n >> 16), static_cast<char>(n >> 8),
                       static_cast<char>(n)};
    d.feed(header);
    ev = d.next();
    ASSERT_TRUE(ev);
    EXPECT_TRUE(std::holds_alternative<FrameDecoder::FrameError>(*ev));
    const std::string chunk(1 << 20, 'z');
    for (int i = 0; i < 16; ++i)
        d.feed(chunk);
    d.feed(std::string(1, 'z') + encode_frame("ok"));
    ev = d.next();
    ASSERT_TRUE(ev);
    ASSERT_TRUE(std::holds_alternative<FrameDecoder::Frame>(*ev));
    EXPECT_EQ(std::get<FrameDecoder::Frame>(*ev).payload, "ok");
    EXPECT_THROW(encode_frame(std::string(max_frame_bytes + 1, 'a')), Error);
}

TEST(Messages, RequestRoundTrip)
{
    std::mt19937_64 rng(8);
    for (std::uint64_t id = 1; id <= 100; ++id) {
        const auto r = random_request(rng, id);
        FrameDecoder d;
        d.feed(encode_message(to_json(r)));
        const auto payload = std::get<FrameDecoder::Frame>(*d.next()).payload;
        const auto back = request_from_json(nlohmann::json::parse(payload));
        EXPECT_EQ(back.request_id, r.request_id);
        EXPECT_EQ(back.hardware, r.hardware);
        EXPECT_EQ(back.rate.f_clk, r.rate.f_clk);
        EXPECT_EQ(back.stimulus, r.stimulus);
        EXPECT_EQ(std::get<ParametricChannel>(back.channel).bulk_delay,
                  std::get<ParametricChannel>(r.channel).bulk_delay);
        EXPECT_EQ(to_json(back), to_json(r));
    }
}

TEST(Messages, ResponseRoundTrip)
{
    EvalResponse ok;
    ok.request_id = 9;
    ok.result = EvalResult{{0.25, 7.5e-10, 1e-10}, 5e-3, 0.377};
    const auto back = response_from_json(nlohmann::json::parse(to_json(ok).dump()));
    EXPECT_TRUE(back.ok());
    EXPECT_EQ(*back.result, *ok.result);
    const auto err = response_from_json(nlohmann::json::parse(to_json(error_response(3, "EVAL", "boom")).dump()));
    EXPECT_FALSE(err.ok());
    EXPECT_EQ(err.error->code, "EVAL");
    EXPECT_EQ(err.request_id, 3u);
}

TEST(Messages, GoldenFixtures)
{
    const std::string dir = FFEQ_FIXTURE_DIR;
    EXPECT_EQ(encode_message(to_json(canonical_request())), read_file(dir + "/eval_request.frame"));
    EXPECT_EQ(encode_message({{"type", "shutdown"}}), read_file(dir + "/shutdown.frame"));
    EXPECT_EQ(encode_message(to_json(error_response(5, "VERSION", "unsupported protocol version 2 (server speaks 1)"))),
              read_file(dir + "/version_error.frame"));
    const auto j = nlohmann::json::parse(read_file(dir + "/eval_request.json"));
    EXPECT_EQ(to_json(request_from_json(j)), to_json(canonical_request()));
}

TEST(Server, LoopbackMatchesInProcessEvaluation)
{
    LiveServer live;
    Client client(live.endpoint(), 30.0);
    std::mt19937_64 rng(12);
    const ChannelPresets presets;
    for (std::uint64_t id = 1; id <= 10; ++id) {
        const auto req = random_request(rng, id);
        const auto resp = client.call(req);
        ASSERT_EQ(resp.request_id, id);
        ASSERT_TRUE(resp.ok()) << resp.error->message;
        const LinkEvaluator local(resolve_setup(req, presets, default_calibration()));
        EXPECT_EQ(*resp.result, evaluate(req.hardware, local));
    }
}

TEST(Server, HundredSequentialRequestsStayInOrder)
{
    LiveServer live;
    Client client(live.endpoint(), 30.0);
    EvalRequest req = canonical_request();
    req.stimulus = short_stimulus();
    req.rate = DataRateSettings::from_clock(1e9, 8);
    for (std::uint64_t id = 1; id <= 100; ++id) {
        req.request_id = id * 3;
        req.hardware.slices[2] = static_cast<int>(id % 9);
        const auto resp = client.call(req);
        EXPECT_EQ(resp.request_id, id * 3);
        EXPECT_TRUE(resp.ok());
    }
    EXPECT_EQ(live.server.requests_served(), 100u);
}

TEST(Server, PresetsResolveByName)
{
    LiveServer live;
    auto req = canonical_request();
    req.stimulus = short_stimulus();
    auto resp = request(live.endpoint(), req, 30.0);
    ASSERT_TRUE(resp.ok());
    req.channel = PresetRef{"no-such-channel"};
    resp = request(live.endpoint(), req, 30.0);
    ASSERT_FALSE(resp.ok());
    EXPECT_EQ(resp.error->code, "INVALID");
}

TEST(Server, MalformedInputKeepsConnectionOpen)
{
    LiveServer live;
    Client client(live.endpoint(), 30.0);

    client.send_raw(std::string("\0\0\0\0", 4));
    auto resp = response_from_json(client.receive());
    ASSERT_FALSE(resp.ok());
    EXPECT_EQ(resp.error->code, "FRAME");

    client.send_raw(encode_frame("{not json"));
    resp = response_from_json(client.receive());
    EXPECT_EQ(resp.error->code, "PARSE");

    client.send({{"type", "eval_request"}, {"protocol_version", 1}, {"request_id", 1}});
    resp = response_from_json(client.receive());
    EXPECT_EQ(resp.error->code, "PARSE");

    auto req = canonical_request();
    req.stimulus = short_stimulus();
    req.protocol_version = 2;
    resp = client.call(req);
    EXPECT_EQ(resp.error->code, "VERSION");

    req.protocol_version = 1;
    req.request_id = 2;
    req.hardware.slices = {0, 0, 0};
    resp = client.call(req);
    EXPECT_EQ(resp.error->code, "INVALID");

    req.hardware.slices = {2, 8, 2};
    req.request_id = 10;
    EXPECT_TRUE(client.call(req).ok());
    req.request_id = 10;
    resp = client.call(req);
    EXPECT_EQ(resp.error->code, "ORDER");
    req.request_id = 11;
    EXPECT_TRUE(client.call(req).ok());
}

TEST(Server, ShutdownMessageStopsServer)
{
    LiveServer live;
    Client client(live.endpoint(), 10.0);
    client.shutdown_server();
    live.server.wait();
    EXPECT_FALSE(live.server.running());
    EXPECT_THROW(Client(live.endpoint(), 2.0), Error);
}

TEST(Client, ClosedPortIsConnectionError)
{
    std::uint16_t port = 0;
    {
        LiveServer live;
        port = live.server.port();
    }
    try {
        request({"127.0.0.1", port}, canonical_request(), 2.0);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::Connection);
    }
}

TEST(Client, SilentServerIsTimeout)
{
    // A listening socket that accepts but never answers.
    const int fd = ::socket(AF_INET, SOCK_STREAM, 0);
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
    ASSERT_EQ(::bind(fd, reinterpret_cast<sockaddr*>(&addr), sizeof addr), 0);
    ASSERT_EQ(::listen(fd, 1), 0);
    socklen_t len = sizeof addr;
    ::getsockname(fd, reinterpret_cast<sockaddr*>(&addr), &len);
    try {
        request({"127.0.0.1", ntohs(addr.sin_port)}, canonical_request(), 0.3);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::Timeout);
    }
    ::close(fd);
}

TEST(Handler, StatelessAcrossRequests)
{
    const RequestHandler handler;
    auto a = canonical_request();
    a.stimulus = short_stimulus();
    auto b = a;
    b.hardware.slices = {4, 8, 4};
    const auto first = handler.handle(a);
    handler.handle(b);
    const auto again = handler.handle(a);
    EXPECT_EQ(*first.result, *again.result);
}
