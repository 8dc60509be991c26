#include <doctest.h>

#include <sstream>
#include <thread>

#include <boost/asio.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/websocket.hpp>

#include "myo/server.hpp"
#include "myo/wire.hpp"

using namespace myo;
using namespace myo::gateway;

namespace asio = boost::asio;
namespace beast = boost::beast;
namespace websocket = beast::websocket;
using tcp = asio::ip::tcp;

namespace {

EngineOptions small_options() {
    EngineOptions o;
    o.session.collection.ms_per_position = 500;
    o.auto_trials = true;
    o.cluster_points = 10;
    return o;
}

std::unique_ptr<EmgSource> synthetic(const session::ProtocolStage& stage, std::uint64_t seed, bool record = false) {
    synth::SweepConfig cfg;
    return std::make_unique<SyntheticSource>(synth::Generator(synth::profiles_for_level(stage, 6.0, cfg), seed), record);
}

// Blocking test client.
class Client {
public:
    explicit Client(unsigned short port) : ws_(ioc_) {
        tcp::resolver resolver(ioc_);
        asio::connect(ws_.next_layer(), resolver.resolve("127.0.0.1", std::to_string(port)));
        ws_.handshake("127.0.0.1", "/");
        ws_.text(true);
    }

    void send(const std::string& type, json payload = json::object()) {
        ws_.write(asio::buffer(encode_message({seq_++, type, std::move(payload)})));
    }
    void send_raw(const std::string& text) { ws_.write(asio::buffer(text)); }

    // Next message, or nullopt once the server closed the connection.
    std::optional<std::string> read_text() {
        beast::flat_buffer buf;
        beast::error_code ec;
        ws_.read(buf, ec);
        if (ec) return std::nullopt;
        return beast::buffers_to_string(buf.data());
    }
    std::optional<WireMessage> read() {
        auto t = read_text();
        if (!t) return std::nullopt;
        return decode_message(*t);
    }
    WireMessage read_until(const std::string& type) {
        while (auto m = read()) {
            if (m->type == type) return *m;
        }
        FAIL("connection closed before '" << type << "'");
        return {};
    }

    void close() {
        beast::error_code ec;
        ws_.close(websocket::close_code::normal, ec);
    }

private:
    asio::io_context ioc_;
    websocket::stream<tcp::socket> ws_;
    std::uint64_t seq_ = 0;
};

struct Running {
    Running(Engine& engine, ServerOptions options) : server(engine, std::move(options)), thread([this] { server.run(); }) {}
    ~Running() {
        server.stop();
        thread.join();
    }
    Server server;
    std::thread thread;
};

}  // namespace

TEST_CASE("bind addresses") {
    const auto b = parse_bind("0.0.0.0:9000");
    CHECK(b.host == "0.0.0.0");
    CHECK(b.port == 9000);
    CHECK(parse_bind("[::1]:80").host == "[::1]");
    CHECK_THROWS_AS(parse_bind("localhost"), std::invalid_argument);
    CHECK_THROWS_AS(parse_bind(":80"), std::invalid_argument);
    CHECK_THROWS_AS(parse_bind("h:70000"), std::invalid_argument);
    CHECK_THROWS_AS(parse_bind("h:8x"), std::invalid_argument);
}

TEST_CASE("roles, command routing and errors over a live socket") {
    const auto stage = session::plan_session(1);
    Engine engine(stage, small_options(), synthetic(stage, 1));
    ServerOptions so;
    so.tick_ms = 2;
    so.hold_until_subscribed = true;
    Running run(engine, so);

    Client ctl(run.server.port());
    ctl.send("subscribe", {{"role", "controller"}});
    auto m = ctl.read();
    REQUIRE(m);
    CHECK(m->seq == 0);
    CHECK(m->type == "session_state");
    m = ctl.read();
    REQUIRE(m);
    CHECK(m->type == "clusters");

    Client second(run.server.port());
    second.send("subscribe", {{"role", "controller"}});
    m = second.read();
    REQUIRE(m);
    CHECK(m->type == "error");
    CHECK(m->payload["code"] == "controller_taken");

    // Still not subscribed, so commands are refused.
    second.send("start_calibration");
    m = second.read();
    REQUIRE(m);
    CHECK(m->payload["code"] == "not_controller");

    Client observer(run.server.port());
    observer.send("subscribe");
    CHECK(observer.read()->type == "session_state");
    CHECK(observer.read()->type == "clusters");
    observer.send("start_calibration");
    auto e = observer.read_until("error");
    CHECK(e.payload["code"] == "not_controller");

    // Client sequence numbers must be gap-free.
    observer.send_raw(R"({"v":"reviewer/v1","seq":7,"type":"start_trial"})");
    e = observer.read_until("error");
    CHECK(e.payload["code"] == "sequence");
    observer.send_raw("not json");
    e = observer.read_until("error");
    CHECK(e.payload["code"] == "bad_request");

    ctl.send("start_calibration");
    e = ctl.read_until("session_state");
    CHECK(e.payload["phase"] == "calibration");
    ctl.send("recalibrate", {{"movement", "Moonwalk"}});
    e = ctl.read_until("error");
    CHECK(e.payload["code"] == "unknown_movement");
    CHECK(e.payload["movement"] == "Moonwalk");
    CHECK(e.payload["message"].get<std::string>().find("Moonwalk") != std::string::npos);

    ctl.close();
    // The controller role frees up once its holder disconnects.
    second.send("subscribe", {{"role", "controller"}});
    bool promoted = false;
    while (auto r = second.read()) {
        if (r->type == "session_state") {
            promoted = true;
            break;
        }
        if (r->type == "error" && r->payload["code"] == "controller_taken") {
            second.send("subscribe", {{"role", "controller"}});
        }
    }
    CHECK(promoted);
}

TEST_CASE("late subscriber gets one clusters snapshot, then deltas") {
    const auto stage = session::plan_session(1);
    Engine engine(stage, small_options(), synthetic(stage, 2));
    ServerOptions so;
    so.tick_ms = 1;
    so.hold_until_subscribed = true;
    StandardScriptOptions sso;
    sso.exploration_ms = 60000;
    sso.assessment = false;
    so.script = standard_script(engine, sso);
    Running run(engine, so);

    Client first(run.server.port());
    first.send("subscribe");
    std::uint64_t expect = 0;
    bool model = false;
    while (auto m = first.read()) {
        CHECK(m->seq == expect++);
        if (m->type == "clusters" && !m->payload["classes"].empty()) {
            model = true;
            break;
        }
    }
    REQUIRE(model);

    Client late(run.server.port());
    late.send("subscribe");
    auto m = late.read();
    REQUIRE(m);
    CHECK(m->seq == 0);
    CHECK(m->type == "session_state");
    CHECK(m->payload["phase"] == "exploration");
    m = late.read();
    REQUIRE(m);
    CHECK(m->seq == 1);
    CHECK(m->type == "clusters");
    CHECK(m->payload["classes"].size() == stage.movements.size());
    std::size_t cursors = 0;
    std::size_t snapshots = 0;
    std::uint64_t seq = 2;
    for (int i = 0; i < 40; ++i) {
        m = late.read();
        REQUIRE(m);
        CHECK(m->seq == seq++);
        cursors += m->type == "cursor3d";
        snapshots += m->type == "clusters";
    }
    CHECK(cursors >= 15);
    CHECK(snapshots == 0);
}

TEST_CASE("serving a recording reproduces the offline transcript byte for byte") {
    const auto stage = session::plan_session(1);

    // Record a synthetic session, with its script.
    signal::EmgStream recording;
    std::vector<ScriptCommand> script;
    {
        auto o = small_options();
        o.autopilot = synth::AgentPolicy{};
        Engine live(stage, o, synthetic(stage, 3, true));
        StandardScriptOptions sso;
        sso.recalibrations = {Movement::PowerGrasp};
        sso.exploration_ms = 20000;
        script = standard_script(live, sso);
        script.push_back({live.collection_steps() * 8 + 1200, "stop", json::object()});  // a few trials are enough
        Driver(live, script).run();
        recording = dynamic_cast<SyntheticSource&>(live.source()).recording();
    }

    std::string offline;
    {
        Engine e(stage, small_options(), std::make_unique<ReplaySource>(recording));
        std::ostringstream out;
        TranscriptWriter tw(out);
        for (auto& [t, p] : e.snapshot()) tw.write(t, p);
        e.set_sink([&](const std::string& t, const json& p) { tw.write(t, p); });
        Driver(e, script).run();
        offline = out.str();
    }

    std::string served;
    {
        Engine e(stage, small_options(), std::make_unique<ReplaySource>(recording));
        ServerOptions so;
        so.tick_ms = 1;
        so.hold_until_subscribed = true;
        so.script = script;
        Running run(e, so);
        Client c(run.server.port());
        c.send("subscribe");
        while (auto text = c.read_text()) served += frame(*text);
    }
    CHECK(served.size() > 1000);
    CHECK(served == offline);
}
