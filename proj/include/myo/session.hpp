#pragma once

// One training session: calibration collection across limb positions, the
// exploration phase with recalibration accounting (NTT, NR), the FLT assessment
// block, and the append-only NDJSON session log.

#include <cstdint>
#include <iosfwd>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "myo/classifier.hpp"
#include "myo/flt.hpp"
#include "myo/protocol.hpp"
#include "myo/signal.hpp"
#include "myo/subspace.hpp"

namespace myo::session {

using json = nlohmann::json;

enum class Phase { Idle, Calibration, Exploration, Assessment, Complete };
std::string_view phase_name(Phase p);

struct CollectionPlan {
    std::vector<int> positions = default_calibration_positions();
    int ms_per_position = 2000;
    int step_ms = 50;

    std::size_t samples_per_position() const;
    std::size_t total() const { return samples_per_position() * positions.size(); }
};

struct LabeledSample {
    signal::FeatureVector features;
    int position = 0;
};

// Takes the first plan.total() vectors of the stream (fewer if the stream is
// shorter) and tags them with the movement and the position being prompted.
// Throws std::invalid_argument for an empty stream or a movement outside the stage.
std::vector<LabeledSample> collect_movement(const ProtocolStage& stage, Movement movement,
                                            std::span<const signal::FeatureVector> stream,
                                            const CollectionPlan& plan = {});

struct Recalibration {
    Movement movement = Movement::Rest;
    std::int64_t t_ms = 0;  // session clock
    std::int64_t t_d_ms = 0;

    bool operator==(const Recalibration&) const = default;
};

struct ExplorationLog {
    std::int64_t t_d_ms = 0;
    std::int64_t t_max_ms = 0;
    std::vector<Recalibration> recalibrations;

    std::size_t nr() const { return recalibrations.size(); }
};

// T_d / T_max. Throws std::invalid_argument when T_max is not positive.
double normalized_training_time(const ExplorationLog& log);

// One line of the session log.
struct LogEvent {
    std::uint64_t seq = 0;
    std::int64_t t_ms = 0;
    std::string type;
    json payload;

    bool operator==(const LogEvent&) const = default;
};

std::string encode_event(const LogEvent& e);  // one JSON object, no newline
std::vector<LogEvent> read_log(std::istream& in, const std::string& source_name = "<stream>");
std::vector<LogEvent> read_log_file(const std::string& path);

json trial_to_json(const flt::TrialRecord& r);
flt::TrialRecord trial_from_json(const json& j);

struct Snapshot {
    subspace::CalibrationSet calibration;
    subspace::SubspaceModel model;
};

struct SessionOptions {
    CollectionPlan collection;
    flt::FltConfig flt;
    classifier::StreamOptions decode;
    std::optional<double> lambda;  // default: subspace::default_regularization
    std::uint64_t seed = 1;        // target sampling
    std::ostream* log = nullptr;   // NDJSON sink, may be null
    std::string snapshot_dir;      // model files written here when non-empty
};

class Session {
public:
    Session(ProtocolStage stage, SessionOptions options);

    const ProtocolStage& stage() const { return stage_; }
    const SessionOptions& options() const { return options_; }
    Phase phase() const { return phase_; }

    // Every mutating call carries the session clock in ms; it must not run backwards.
    void start_calibration(std::int64_t t_ms);

    // Calibration: stores (or replaces) the movement's samples. Once every stage
    // movement has samples the model is fitted and exploration begins at t_ms.
    // Exploration: same as recalibrate(). Any other phase: ProtocolStateError.
    void collect(Movement m, std::span<const LabeledSample> samples, std::int64_t t_ms);

    // Replaces one movement's samples and refits. Strong guarantee: on any error
    // (BudgetExhausted, DegenerateAxis, ...) the session is unchanged.
    void recalibrate(Movement m, std::span<const LabeledSample> samples, std::int64_t t_ms);

    // Exploration -> Assessment; samples the FLT targets.
    void end_exploration(std::int64_t t_ms, std::string_view reason = "user");

    // Assessment: begins the next trial. Throws when one is running or none remain.
    const flt::TargetSpec& start_trial(std::int64_t t_ms);
    // Feeds one decision to the running trial; logs it once adjudicated.
    flt::Outcome step_trial(Movement decision, std::int64_t t_ms);

    bool trial_active() const { return trial_.has_value(); }
    const flt::Trial* active_trial() const { return trial_ ? &*trial_ : nullptr; }
    std::size_t trials_done() const { return records_.size(); }
    std::size_t trials_total() const { return targets_.size(); }
    const std::vector<flt::TargetSpec>& targets() const { return targets_; }
    const std::vector<flt::TrialRecord>& records() const { return records_; }

    // Exploration clock, clamped to [0, T_max].
    std::int64_t exploration_ms(std::int64_t t_ms) const;
    bool budget_exhausted(std::int64_t t_ms) const;
    const ExplorationLog& exploration() const { return exploration_; }
    double ntt() const { return normalized_training_time(exploration_); }

    const subspace::CalibrationSet& calibration() const { return working_; }
    const std::vector<Snapshot>& snapshots() const { return snapshots_; }
    std::shared_ptr<const classifier::Decoder> decoder() const { return decoder_; }
    bool has_model() const { return decoder_ != nullptr; }
    bool calibrated(Movement m) const { return working_.has(m); }

    const std::vector<LogEvent>& events() const { return events_; }

private:
    void advance(std::int64_t t_ms);
    void require(Phase p, std::string_view action) const;
    void emit(std::int64_t t_ms, std::string type, json payload);
    // Writes the snapshot file (if configured) and returns the `model` event payload.
    json snapshot_payload(const subspace::CalibrationSet& cal, const subspace::SubspaceModel& model) const;
    void commit_model(subspace::CalibrationSet cal, subspace::SubspaceModel model,
                      std::shared_ptr<const classifier::Decoder> decoder, json payload, std::int64_t t_ms);
    void check_samples(Movement m, std::span<const LabeledSample> samples) const;

    ProtocolStage stage_;
    SessionOptions options_;
    Phase phase_ = Phase::Idle;
    std::int64_t clock_ms_ = 0;
    std::int64_t exploration_start_ms_ = 0;

    subspace::CalibrationSet working_;
    std::vector<Snapshot> snapshots_;
    std::shared_ptr<const classifier::Decoder> decoder_;
    ExplorationLog exploration_;

    std::vector<flt::TargetSpec> targets_;
    std::vector<flt::TrialRecord> records_;
    std::optional<flt::Trial> trial_;

    std::vector<LogEvent> events_;
};

// Figures recomputed from a session log alone.
struct SessionReport {
    int session_index = 0;
    char stage = 'A';
    std::size_t nr = 0;
    std::size_t snapshots = 0;
    std::int64_t t_d_ms = 0;
    std::int64_t t_max_ms = 0;
    double ntt = 0.0;
    // Values the session wrote in its exploration_end event, if present.
    std::optional<std::size_t> logged_nr;
    std::optional<double> logged_ntt;
    std::vector<flt::TrialRecord> trials;
    flt::Metrics metrics;
    std::string final_model;  // provenance of the last snapshot

    bool consistent() const;
};

SessionReport build_report(std::span<const LogEvent> events);

}  // namespace myo::session
