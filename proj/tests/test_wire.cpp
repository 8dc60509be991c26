#include <doctest.h>

#include <sstream>

#include "myo/engine.hpp"
#include "myo/error.hpp"
#include "myo/wire.hpp"

using namespace myo;
using namespace myo::gateway;

namespace {

EngineOptions small_options(std::ostream* log = nullptr) {
    EngineOptions o;
    o.session.collection.ms_per_position = 500;
    o.session.log = log;
    o.auto_trials = true;
    o.autopilot = synth::AgentPolicy{};
    o.cluster_points = 20;
    return o;
}

std::unique_ptr<SyntheticSource> synthetic(const session::ProtocolStage& stage, double level, std::uint64_t seed,
                                           bool record = false) {
    synth::SweepConfig cfg;
    return std::make_unique<SyntheticSource>(synth::Generator(synth::profiles_for_level(stage, level, cfg), seed), record);
}

struct Captured {
    std::vector<std::pair<std::string, json>> events;
    void attach(Engine& e) {
        e.set_sink([this](const std::string& t, const json& p) { events.emplace_back(t, p); });
    }
    std::size_t count(const std::string& type) const {
        std::size_t n = 0;
        for (const auto& [t, p] : events) n += t == type;
        return n;
    }
    const json* last(const std::string& type) const {
        for (auto it = events.rbegin(); it != events.rend(); ++it) {
            if (it->first == type) return &it->second;
        }
        return nullptr;
    }
};

}  // namespace

TEST_CASE("message encoding is canonical") {
    const WireMessage m{3, "error", {{"code", "x"}, {"a", 1.5}}};
    CHECK(encode_message(m) == R"({"payload":{"a":1.5,"code":"x"},"seq":3,"type":"error","v":"reviewer/v1"})");
    CHECK(decode_message(encode_message(m)) == m);
    CHECK(frame("abc") == "3:abc\n");
    const double third = 1.0 / 3.0;
    const auto back = decode_message(encode_message({0, "cursor3d", {{"x", third}}}));
    CHECK(back.payload["x"].get<double>() == third);
}

TEST_CASE("message decoding rejects malformed input") {
    CHECK_THROWS_AS(decode_message("{"), std::invalid_argument);
    CHECK_THROWS_AS(decode_message("[]"), std::invalid_argument);
    CHECK_THROWS_AS(decode_message(R"({"v":"reviewer/v2","seq":0,"type":"error"})"), std::invalid_argument);
    CHECK_THROWS_AS(decode_message(R"({"v":"reviewer/v1","seq":-1,"type":"error"})"), std::invalid_argument);
    CHECK_THROWS_AS(decode_message(R"({"v":"reviewer/v1","seq":0,"type":"hello"})"), std::invalid_argument);
    CHECK_THROWS_AS(decode_message(R"({"v":"reviewer/v1","seq":0,"type":"collect","payload":3})"), std::invalid_argument);
    const auto m = decode_message(R"({"v":"reviewer/v1","seq":0,"type":"start_trial"})");
    CHECK(m.payload == json::object());
}

TEST_CASE("message type vocabulary") {
    for (const char* t : {"clusters", "cursor3d", "decision", "flt_state", "session_state", "error"}) {
        CHECK(is_server_type(t));
        CHECK_FALSE(is_client_type(t));
    }
    for (const char* t : {"start_calibration", "collect", "recalibrate", "end_exploration", "start_trial", "subscribe"}) {
        CHECK(is_client_type(t));
        CHECK_FALSE(is_server_type(t));
    }
}

TEST_CASE("transcripts round-trip and report bad frames by line") {
    std::ostringstream out;
    TranscriptWriter w(out);
    w.write("session_state", {{"phase", "idle"}});
    w.write("cursor3d", {{"position", {0.0, 1.0, 2.0}}});
    std::istringstream in(out.str());
    const auto msgs = read_transcript(in, "t.wire");
    REQUIRE(msgs.size() == 2);
    CHECK(msgs[1].seq == 1);
    CHECK(msgs[1].type == "cursor3d");

    auto line_of = [](const std::string& text) {
        std::istringstream bad(text);
        try {
            read_transcript(bad, "t.wire");
        } catch (const ParseError& e) {
            CHECK(e.file() == "t.wire");
            return e.line();
        }
        return std::size_t{0};
    };
    const std::string first = out.str().substr(0, out.str().find('\n') + 1);
    CHECK(line_of(first + "5:abc\n") == 2);
    CHECK(line_of(first + "x:{}\n") == 2);
    CHECK(line_of(first + first) == 2);  // seq 0 again
    CHECK(line_of("99:{}\n") == 1);
}

TEST_CASE("script parsing") {
    std::istringstream ok(R"({"tick":0,"type":"start_calibration"}
{"tick":4,"type":"collect","payload":{"movement":"Rest"}}

{"tick":9,"type":"stop"}
)");
    const auto s = read_script(ok, "s.ndjson");
    REQUIRE(s.size() == 3);
    CHECK(s[1].payload["movement"] == "Rest");
    std::ostringstream back;
    write_script(back, s);
    std::istringstream again(back.str());
    CHECK(read_script(again) == s);

    auto line_of = [](const std::string& text) {
        std::istringstream bad(text);
        try {
            read_script(bad, "s.ndjson");
        } catch (const ParseError& e) {
            return e.line();
        }
        return std::size_t{0};
    };
    CHECK(line_of("{\"tick\":1,\"type\":\"start_calibration\"}\n{\"tick\":0,\"type\":\"start_trial\"}\n") == 2);
    CHECK(line_of("{\"tick\":1,\"type\":\"dance\"}\n") == 1);
    CHECK(line_of("\n\n{\"tick\":1,\n") == 3);
    CHECK(line_of("{\"type\":\"start_trial\"}\n") == 1);
}

TEST_CASE("engine rejects commands outside the protocol") {
    const auto stage = session::plan_session(1);
    Engine e(stage, small_options(), synthetic(stage, 6.0, 1));
    Captured cap;
    cap.attach(e);

    auto err = e.command("end_exploration", json::object());
    REQUIRE(err);
    CHECK(err->code == "protocol_state");
    err = e.command("collect", {{"movement", "Rest"}});
    REQUIRE(err);
    CHECK(err->code == "protocol_state");
    CHECK_FALSE(e.command("start_calibration", json::object()));
    CHECK(e.command("start_calibration", json::object())->code == "protocol_state");

    err = e.command("collect", {{"movement", "Jazz Hands"}});
    REQUIRE(err);
    CHECK(err->code == "unknown_movement");
    CHECK(err->message.find("Jazz Hands") != std::string::npos);
    CHECK(err->payload("collect")["movement"] == "Jazz Hands");
    err = e.command("collect", {{"movement", "Key Grasp"}});  // stage C only
    REQUIRE(err);
    CHECK(err->code == "not_in_stage");
    CHECK(e.command("collect", json::object())->code == "bad_request");
    CHECK(e.command("dance", json::object())->code == "unknown_command");
    CHECK_FALSE(e.command("collect", {{"movement", 0}}));
    CHECK(e.command("collect", {{"movement", "Power Grasp"}})->code == "busy");
    CHECK(e.command("recalibrate", {{"movement", "Power Grasp"}})->code == "protocol_state");
    CHECK(e.session().phase() == session::Phase::Calibration);
}

TEST_CASE("engine run: snapshot, deltas and centroid payloads") {
    const auto stage = session::plan_session(1);
    Engine e(stage, small_options(), synthetic(stage, 6.0, 2));
    const auto snap = e.snapshot();
    REQUIRE(snap.size() == 2);
    CHECK(snap[0].first == "session_state");
    CHECK(snap[0].second["phase"] == "idle");
    CHECK(snap[1].first == "clusters");
    CHECK(snap[1].second["classes"].empty());

    Captured cap;
    cap.attach(e);
    StandardScriptOptions so;
    so.exploration_ms = 2000;
    so.assessment = false;
    Driver d(e, standard_script(e, so));
    d.run();
    CHECK(e.session().phase() == session::Phase::Assessment);
    CHECK(cap.count("error") == 0);
    CHECK(cap.count("clusters") == 1);
    CHECK(cap.count("cursor3d") == cap.count("decision"));
    CHECK(cap.count("cursor3d") > 0);

    // Wire centroids equal the model's Reviewer centroids after a text round trip.
    const json* clusters = cap.last("clusters");
    REQUIRE(clusters);
    const auto decoded = decode_message(encode_message({0, "clusters", *clusters}));
    const auto& model = e.session().snapshots().back().model;
    REQUIRE(decoded.payload["classes"].size() == stage.movements.size());
    for (const auto& cls : decoded.payload["classes"]) {
        const auto m = *movement_from_id(cls["id"].get<int>());
        const auto c = subspace::reviewer_centroid(model, m);
        for (int k = 0; k < 3; ++k) CHECK(std::abs(cls["centroid"][k].get<double>() - c[k]) <= 1e-9);
        CHECK(cls["points"].size() == 20);
    }
    if (stage.movements.front() == Movement::Rest) {
        const auto rest = subspace::reviewer_centroid(model, Movement::Rest);
        for (double v : rest) CHECK(v == doctest::Approx(0.0).epsilon(1e-12));
    }
}

TEST_CASE("engine: recalibration accounting and assessment through the loop") {
    const auto stage = session::plan_session(1);
    std::ostringstream log;
    Engine e(stage, small_options(&log), synthetic(stage, 6.0, 3));
    Captured cap;
    cap.attach(e);
    StandardScriptOptions so;
    so.recalibrations = {Movement::PowerGrasp, Movement::HandOpen, Movement::WristSupinate};
    so.exploration_ms = stage.t_max_ms / 5;
    Driver d(e, standard_script(e, so));
    d.run();
    CHECK(e.session().phase() == session::Phase::Complete);
    CHECK(cap.count("error") == 0);

    std::istringstream in(log.str());
    const auto report = session::build_report(session::read_log(in));
    CHECK(report.nr == 3);
    CHECK(report.snapshots == 4);
    CHECK(report.t_d_ms == stage.t_max_ms / 5);
    CHECK(report.ntt == 0.2);
    CHECK(report.consistent());
    CHECK(report.trials.size() == stage.flt_trials);
    CHECK(report.metrics.cr >= 0.9);

    const json* fs = cap.last("flt_state");
    REQUIRE(fs);
    CHECK(fs->at("outcome") != "pending");
    CHECK(fs->at("trial") == stage.flt_trials - 1);
}

TEST_CASE("budget exhaustion ends exploration on its own") {
    auto stage = session::plan_session(1);
    stage.t_max_ms = 1000;
    auto o = small_options();
    o.auto_trials = false;
    Engine e(stage, o, synthetic(stage, 6.0, 4));
    Captured cap;
    cap.attach(e);
    StandardScriptOptions so;
    so.exploration_ms = 5000;  // clamped: the engine ends it at the budget
    so.assessment = false;
    Driver d(e, standard_script(e, so));
    d.run(2000);
    CHECK(e.session().phase() == session::Phase::Assessment);
    CHECK(e.session().exploration().t_d_ms == 1000);
    CHECK(e.command("recalibrate", {{"movement", "Power Grasp"}})->code == "protocol_state");
    CHECK_FALSE(e.command("start_trial", json::object()));
    CHECK(e.command("start_trial", json::object())->code == "busy");
}

TEST_CASE("replayed recording reproduces log and transcript byte for byte") {
    const auto stage = session::plan_session(1);
    signal::EmgStream recorded;
    auto run = [&](std::unique_ptr<EmgSource> src, std::string& log_out, std::string& wire_out,
                   const std::vector<ScriptCommand>* script) {
        std::ostringstream log;
        std::ostringstream wire;
        auto o = small_options(&log);
        Engine e(stage, o, std::move(src));
        TranscriptWriter tw(wire);
        for (auto& [t, p] : e.snapshot()) tw.write(t, p);
        e.set_sink([&](const std::string& t, const json& p) { tw.write(t, p); });
        StandardScriptOptions so;
        so.recalibrations = {Movement::HandOpen};
        so.exploration_ms = 20000;
        const auto s = script ? *script : standard_script(e, so);
        Driver(e, s).run();
        log_out = log.str();
        wire_out = wire.str();
        if (auto* synth = dynamic_cast<SyntheticSource*>(&e.source())) recorded = synth->recording();
        return s;
    };
    std::string log0, wire0, log1, wire1, log2, wire2;
    const auto script = run(synthetic(stage, 6.0, 5, true), log0, wire0, nullptr);
    std::ostringstream emg;
    signal::write_emg(emg, recorded);
    std::istringstream emg_in(emg.str());
    const auto recording = signal::read_emg(emg_in);
    run(std::make_unique<ReplaySource>(recording), log1, wire1, &script);
    run(std::make_unique<ReplaySource>(recording), log2, wire2, &script);
    CHECK(log1 == log2);
    CHECK(wire1 == wire2);
    // The replay also matches the live synthetic run it was recorded from.
    CHECK(log1 == log0);
    CHECK(wire1 == wire0);
}
