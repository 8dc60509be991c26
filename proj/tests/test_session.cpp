#include <doctest.h>

#include <filesystem>
#include <random>
#include <sstream>

#include "myo/error.hpp"
#include "myo/session.hpp"

using namespace myo;
using namespace myo::session;

namespace {

constexpr std::size_t kDim = 6;

// Gaussian cluster per movement; the mean is spread along a movement-specific direction.
std::vector<signal::FeatureVector> cluster(Movement m, std::size_t n, std::uint32_t seed, double spread = 4.0) {
    std::mt19937 rng(seed * 31U + movement_id(m));
    std::normal_distribution<double> z(0.0, 1.0);
    std::vector<signal::FeatureVector> out(n);
    const int id = movement_id(m);
    for (auto& v : out) {
        v.values.resize(kDim);
        for (std::size_t j = 0; j < kDim; ++j) {
            const double mu = id == 0 ? 0.0 : spread * (static_cast<int>(j) == (id - 1) % static_cast<int>(kDim) ? 1.0 : 0.2);
            v.values[j] = mu + z(rng);
        }
    }
    return out;
}

std::vector<LabeledSample> labeled(const ProtocolStage& stage, Movement m, std::uint32_t seed) {
    const auto stream = cluster(m, 200, seed);
    return collect_movement(stage, m, stream);
}

// Drives a session through calibration of every stage movement at t = 0..k-1 s.
void calibrate_all(Session& s, std::uint32_t seed = 1) {
    s.start_calibration(0);
    std::int64_t t = 0;
    for (Movement m : s.stage().movements) {
        t += 1000;
        s.collect(m, labeled(s.stage(), m, seed), t);
    }
}

}  // namespace

TEST_CASE("protocol table") {
    const int movements[] = {5, 5, 5, 5, 7, 7, 7, 9, 9, 9, 9};
    const std::int64_t tmax[] = {480, 480, 480, 480, 720, 720, 720, 960, 960, 960, 960};
    const std::size_t trials[] = {18, 18, 18, 18, 36, 36, 36, 54, 54, 54, 54};
    for (int i = 1; i <= 11; ++i) {
        const auto s = plan_session(i);
        CHECK(s.movements.size() == static_cast<std::size_t>(movements[i - 1]));
        CHECK(s.t_max_ms == tmax[i - 1] * 1000);
        CHECK(s.flt_trials == trials[i - 1]);
        CHECK(s.movements.front() == Movement::Rest);
    }
    CHECK(plan_session(11).same_activities(plan_session(10)));
    CHECK(!plan_session(7).same_activities(plan_session(8)));
    CHECK(plan_session(1).flt_gestures() == std::vector<Movement>{Movement::PowerGrasp});
    CHECK(plan_session(9).flt_gestures().size() == 5);
    CHECK_THROWS_AS(plan_session(0), std::out_of_range);
    CHECK_THROWS_AS(plan_session(12), std::out_of_range);
}

TEST_CASE("collect_movement tags samples by position") {
    const auto stage = plan_session(1);
    const auto stream = cluster(Movement::HandOpen, 250, 3);
    const auto samples = collect_movement(stage, Movement::HandOpen, stream);
    REQUIRE(samples.size() == 200);  // 5 positions x 2 s at 20 decisions/s
    CHECK(samples[0].position == 1);
    CHECK(samples[39].position == 1);
    CHECK(samples[40].position == 3);
    CHECK(samples[199].position == 6);
    for (const auto& s : samples) CHECK(s.features.label == Movement::HandOpen);

    CHECK_THROWS_AS(collect_movement(stage, Movement::KeyGrasp, stream), std::invalid_argument);
    CHECK_THROWS_AS(collect_movement(stage, Movement::HandOpen, std::vector<signal::FeatureVector>{}),
                    std::invalid_argument);
}

TEST_CASE("normalized training time") {
    CHECK(normalized_training_time({0, 480000, {}}) == 0.0);
    CHECK(normalized_training_time({480000, 480000, {}}) == 1.0);
    CHECK(normalized_training_time({96000, 480000, {}}) == 0.2);
    CHECK_THROWS_AS(normalized_training_time({0, 0, {}}), std::invalid_argument);
}

TEST_CASE("state machine") {
    Session s(plan_session(2), {});
    CHECK(s.phase() == Phase::Idle);
    const auto stage = s.stage();
    CHECK_THROWS_AS(s.collect(Movement::Rest, labeled(stage, Movement::Rest, 1), 0), ProtocolStateError);
    CHECK_THROWS_AS(s.end_exploration(0), ProtocolStateError);

    s.start_calibration(0);
    CHECK_THROWS_AS(s.start_calibration(0), ProtocolStateError);
    s.collect(Movement::Rest, labeled(stage, Movement::Rest, 1), 10);
    CHECK(s.phase() == Phase::Calibration);
    CHECK(!s.has_model());
    CHECK_THROWS_AS(s.collect(Movement::HandOpen, labeled(stage, Movement::HandOpen, 1), 5), std::invalid_argument);

    for (Movement m : stage.movements) s.collect(m, labeled(stage, m, 1), 1000);
    CHECK(s.phase() == Phase::Exploration);
    CHECK(s.has_model());
    CHECK(s.snapshots().size() == 1);
    CHECK_THROWS_AS(s.start_trial(1000), ProtocolStateError);

    s.end_exploration(2000);
    CHECK(s.phase() == Phase::Assessment);
    CHECK(s.trials_total() == 18);
    CHECK_THROWS_AS(s.recalibrate(Movement::HandOpen, labeled(stage, Movement::HandOpen, 2), 2000),
                    ProtocolStateError);
    CHECK_THROWS_AS(s.collect(Movement::HandOpen, labeled(stage, Movement::HandOpen, 2), 2000), ProtocolStateError);
}

TEST_CASE("recalibration replaces one class only") {
    Session s(plan_session(3), {});
    calibrate_all(s);
    const auto before = s.calibration();
    const auto model_before = s.snapshots().back().model;

    s.recalibrate(Movement::PowerGrasp, labeled(s.stage(), Movement::PowerGrasp, 99), 10000);
    const auto& after = s.calibration();
    CHECK(s.exploration().nr() == 1);
    CHECK(s.snapshots().size() == 2);
    CHECK(!(after.at(Movement::PowerGrasp).samples == before.at(Movement::PowerGrasp).samples));
    for (Movement m : s.stage().movements) {
        if (m == Movement::PowerGrasp) continue;
        CHECK(after.at(m).samples == before.at(m).samples);
    }
    CHECK(!(s.snapshots().back().model == model_before));
    // History is kept: the first snapshot still holds the original samples.
    CHECK(s.snapshots().front().calibration == before);
}

TEST_CASE("collect during exploration counts as a recalibration") {
    Session s(plan_session(1), {});
    calibrate_all(s);
    s.collect(Movement::HandOpen, labeled(s.stage(), Movement::HandOpen, 7), 6000);
    CHECK(s.exploration().nr() == 1);
    CHECK(s.events().back().type == "model");
    CHECK(s.events()[s.events().size() - 2].type == "recalibration");
}

TEST_CASE("recalibration errors leave the session unchanged") {
    Session s(plan_session(1), {});
    calibrate_all(s);
    const auto events = s.events().size();
    const auto cal = s.calibration();
    const auto t0 = s.events().back().t_ms;

    SUBCASE("budget exhausted") {
        const std::int64_t end = t0 + s.stage().t_max_ms;
        CHECK(s.budget_exhausted(end));
        CHECK(!s.budget_exhausted(end - 1));
        CHECK_THROWS_AS(s.recalibrate(Movement::HandOpen, labeled(s.stage(), Movement::HandOpen, 2), end),
                        BudgetExhausted);
    }
    SUBCASE("degenerate axis names the movement") {
        // Power Grasp recollected as Rest-like data collapses onto the Rest centroid.
        auto rest_like = labeled(s.stage(), Movement::Rest, 1);
        try {
            s.recalibrate(Movement::PowerGrasp, rest_like, t0 + 1000);
            FAIL("expected DegenerateAxis");
        } catch (const DegenerateAxis& e) {
            CHECK(e.movement() == Movement::PowerGrasp);
            CHECK(std::string(e.what()).find("Power Grasp") != std::string::npos);
        }
    }
    SUBCASE("unknown movement") {
        CHECK_THROWS_AS(s.recalibrate(Movement::KeyGrasp, labeled(plan_session(5), Movement::KeyGrasp, 2), t0 + 1),
                        std::invalid_argument);
    }
    CHECK(s.events().size() == events);
    CHECK(s.calibration() == cal);
    CHECK(s.exploration().nr() == 0);
    CHECK(s.snapshots().size() == 1);
}

TEST_CASE("NR and NTT are recomputed from the log") {
    std::ostringstream log;
    SessionOptions opts;
    opts.log = &log;
    Session s(plan_session(3), opts);
    calibrate_all(s);
    const std::int64_t t0 = s.events().back().t_ms;
    s.recalibrate(Movement::HandOpen, labeled(s.stage(), Movement::HandOpen, 2), t0 + 20000);
    s.recalibrate(Movement::PowerGrasp, labeled(s.stage(), Movement::PowerGrasp, 3), t0 + 50000);
    s.recalibrate(Movement::HandOpen, labeled(s.stage(), Movement::HandOpen, 4), t0 + 80000);
    s.end_exploration(t0 + 96000);
    CHECK(s.exploration().nr() == 3);
    CHECK(s.ntt() == 0.2);

    std::istringstream in(log.str());
    const auto events = read_log(in, "session.log");
    CHECK(events == s.events());
    const auto rep = build_report(events);
    CHECK(rep.nr == 3);
    CHECK(rep.snapshots == 4);
    CHECK(rep.t_d_ms == 96000);
    CHECK(rep.ntt == 0.2);
    CHECK(rep.consistent());
}

TEST_CASE("assessment block runs and is logged") {
    std::ostringstream log;
    SessionOptions opts;
    opts.log = &log;
    opts.seed = 5;
    Session s(plan_session(1), opts);
    calibrate_all(s);
    s.end_exploration(10000);
    std::int64_t t = 10000;
    // Perfect driver straight to the target.
    while (s.phase() == Phase::Assessment) {
        const auto target = s.start_trial(t);
        flt::Outcome o = flt::Outcome::Pending;
        while (o == flt::Outcome::Pending) {
            t += 50;
            const auto& c = s.active_trial()->cursor();
            Movement d = Movement::Rest;
            if (std::abs(c.r - target.target.r) > 0.01) {
                d = c.r > target.target.r ? target.gesture : Movement::HandOpen;
            } else if (std::abs(c.phi - target.target.phi) > 0.01) {
                d = c.phi > target.target.phi ? Movement::WristPronate : Movement::WristSupinate;
            }
            o = s.step_trial(d, t);
        }
        CHECK(o == flt::Outcome::Success);
    }
    CHECK(s.phase() == Phase::Complete);
    CHECK(s.records().size() == 18);

    std::istringstream in(log.str());
    const auto rep = build_report(read_log(in));
    REQUIRE(rep.trials.size() == 18);
    const auto direct = flt::compute_metrics(s.records());
    CHECK(rep.metrics.cr == 1.0);
    CHECK(*rep.metrics.pe == *direct.pe);
    CHECK(*rep.metrics.tp == *direct.tp);
    CHECK(*rep.metrics.ot == *direct.ot);
    for (std::size_t i = 0; i < rep.trials.size(); ++i) {
        CHECK(rep.trials[i].trajectory == s.records()[i].trajectory);
    }
    CHECK(s.events().back().type == "assessment_end");
}

TEST_CASE("log parse errors carry the line") {
    std::istringstream in(R"({"seq":0,"t_ms":0,"type":"a","payload":{}}
{"seq":1,"t_ms":0,"type":"b","payload":{})");
    try {
        read_log(in, "bad.log");
        FAIL("expected ParseError");
    } catch (const ParseError& e) {
        CHECK(e.line() == 2);
        CHECK(e.file() == "bad.log");
    }
    std::istringstream gap(R"({"seq":0,"t_ms":0,"type":"a","payload":{}}
{"seq":2,"t_ms":0,"type":"b","payload":{}})");
    CHECK_THROWS_AS(read_log(gap, "gap.log"), ParseError);
}

TEST_CASE("snapshot files are written per refit") {
    const auto dir = std::filesystem::temp_directory_path() / "myo_snapshots_test";
    std::filesystem::remove_all(dir);
    SessionOptions opts;
    opts.snapshot_dir = dir.string();
    Session s(plan_session(1), opts);
    calibrate_all(s);
    s.recalibrate(Movement::Rest, labeled(s.stage(), Movement::Rest, 8), 9000);
    CHECK(std::filesystem::exists(dir / "model-0.json"));
    CHECK(std::filesystem::exists(dir / "model-1.json"));
    CHECK(subspace::read_model_file((dir / "model-1.json").string()) == s.snapshots().back().model);
    std::filesystem::remove_all(dir);
}
