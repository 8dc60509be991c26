#pragma once

// Fitts' Law Test: target generation, decision-driven cursor dynamics,
// success/timeout adjudication and the CR / OT / PE / TP metrics.

#include <cstdint>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "myo/movement.hpp"
#include "myo/protocol.hpp"

namespace myo::flt {

// Normalized aperture r in [0, 1] and orientation phi = theta / 2pi.
struct CursorConfig {
    double r = 1.0;
    double phi = 0.5;

    bool operator==(const CursorConfig&) const = default;
};

double distance(const CursorConfig& a, const CursorConfig& b);

struct FltConfig {
    double width = 0.05;  // target band width per dimension
    CursorConfig start{1.0, 0.5};
    double aperture_rate = 0.4;     // units per second
    double orientation_rate = 0.4;  // units per second
    int step_ms = 50;
    double time_limit_s = 15.0;  // from the first non-Rest decision
    double dwell_s = 1.0;        // continuous Rest inside the band
    double idle_limit_s = 15.0;  // from trial onset when no movement is ever decoded
    double target_min = 0.25;
    double target_max = 0.75;
    Handedness handedness = Handedness::Right;

    double step_s() const { return step_ms / 1000.0; }
    std::size_t dwell_steps() const;
    std::size_t limit_steps() const;
    std::size_t idle_steps() const;
};

// Fitts width constant in the throughput index of difficulty.
inline constexpr double kThroughputWidth = 0.05;

struct TargetSpec {
    Movement gesture = Movement::PowerGrasp;
    CursorConfig target;
    double half_width = 0.025;
    int location = 5;
};

// Orientation direction relative to the start: clockwise targets lie at a
// smaller phi than the start configuration.
enum class Rotation { Clockwise, CounterClockwise };
Rotation rotation_of(const TargetSpec& spec, const FltConfig& config);

// Balanced target list for a stage: every calibrated closing gesture is prompted
// round-robin (counts differ by at most one), orientations alternate between the
// two rotation directions (an odd remainder picks its direction from the seed),
// apertures and orientations are uniform over [target_min, target_max].
std::vector<TargetSpec> sample_targets(const session::ProtocolStage& stage, const FltConfig& config,
                                       std::uint64_t seed);
std::vector<TargetSpec> sample_targets(std::span<const Movement> gestures, std::size_t total,
                                       const FltConfig& config, std::uint64_t seed);

enum class Outcome { Pending, Success, Timeout };
std::string_view outcome_name(Outcome o);

struct TrajectoryPoint {
    Movement decision = Movement::Rest;
    CursorConfig cursor;  // after applying the decision

    bool operator==(const TrajectoryPoint&) const = default;
};

struct TrialRecord {
    std::size_t index = 0;
    TargetSpec spec;
    CursorConfig start;
    double step_s = 0.05;
    std::vector<TrajectoryPoint> trajectory;  // one entry per decision since onset
    Outcome outcome = Outcome::Pending;
    double completion_s = 0.0;  // T_i, successes only
    std::size_t misclassifications = 0;
};

// One decision's effect on the cursor. The prompted gesture closes, Hand Open
// opens, the wrist rotates (direction by handedness); everything else holds.
CursorConfig step_cursor(const CursorConfig& s, Movement decision, Movement prompt, const FltConfig& config);

struct Adjudication {
    Outcome outcome = Outcome::Pending;
    std::optional<std::size_t> first_motion;  // index of the first non-Rest decision
    std::size_t decided_at = 0;               // trajectory index where the outcome was reached
    double completion_s = 0.0;
};

// Scans a trajectory: success once `dwell_s` of consecutive Rest decisions inside
// both bands completes no later than `time_limit_s` after the first non-Rest
// decision; timeout once that limit (or the idle limit) passes first.
Adjudication adjudicate(const TrialRecord& record, const FltConfig& config);

bool in_band(const CursorConfig& s, const TargetSpec& spec);

// Live trial driven one decision at a time.
class Trial {
public:
    Trial(std::size_t index, TargetSpec spec, const FltConfig& config);

    // Throws ProtocolStateError once the trial has been adjudicated.
    Outcome step(Movement decision);

    bool finished() const { return record_.outcome != Outcome::Pending; }
    const TrialRecord& record() const { return record_; }
    const CursorConfig& cursor() const { return cursor_; }
    double elapsed_s() const;  // since the first non-Rest decision
    double dwell_s() const { return static_cast<double>(dwell_) * config_.step_s(); }

private:
    FltConfig config_;
    TrialRecord record_;
    CursorConfig cursor_;
    std::optional<std::size_t> first_motion_;
    std::size_t dwell_ = 0;
};

// Overshoots of one trial up to its adjudication point: per dimension, entering
// the band and leaving it on the far side counts once.
std::size_t count_overshoots(const TrialRecord& record);

double completion_rate(std::span<const TrialRecord> records);
std::optional<double> overshoot(std::span<const TrialRecord> records);
std::optional<double> path_efficiency(std::span<const TrialRecord> records, std::size_t* excluded = nullptr);
std::optional<double> throughput(std::span<const TrialRecord> records);

struct Metrics {
    std::size_t trials = 0;
    std::size_t successes = 0;
    double cr = 0.0;
    std::optional<double> ot;
    std::optional<double> pe;
    std::optional<double> tp;
    std::size_t pe_excluded = 0;
};

Metrics compute_metrics(std::span<const TrialRecord> records);

}  // namespace myo::flt
