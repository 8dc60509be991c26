#pragma once

// Synthetic multichannel EMG with controllable class separability, and a
// simulated user that closes the loop through the full decoding pipeline.

#include <cstdint>
#include <memory>
#include <optional>
#include <random>
#include <vector>

#include "myo/classifier.hpp"
#include "myo/flt.hpp"
#include "myo/protocol.hpp"
#include "myo/session.hpp"
#include "myo/signal.hpp"
#include "myo/subspace.hpp"

namespace myo::synth {

struct Band {
    double low_hz = 15.0;
    double high_hz = 85.0;
};

// Per-channel amplitude follows |g_c * drift * location_c + sigma_within * j_c(t)|,
// where j_c is a unit-variance AR(1) process; the carrier is band-limited noise.
struct ClassProfile {
    Movement movement = Movement::Rest;
    std::vector<double> gains;
    double sigma_within = 0.1;
    double drift_per_min = 0.0;  // relative gain change per minute
    Band band;
};

struct GeneratorConfig {
    double sample_rate_hz = signal::kDefaultSampleRateHz;
    double noise_floor = 0.002;   // additive white sensor noise
    double jitter_tau_s = 0.25;   // AR(1) correlation time of the gain jitter
    double location_spread = 0.1; // per-location multiplicative gain perturbation (+/-)
};

// Stateful multi-class source. Switching movement keeps the jitter, filter and
// drift state continuous, so transitions look like real contractions changing.
class Generator {
public:
    // Throws std::invalid_argument for an empty band, mismatched channel counts
    // or non-finite gains.
    Generator(std::vector<ClassProfile> profiles, std::uint64_t seed, GeneratorConfig config = {});

    std::size_t channels() const { return channels_; }
    double sample_rate_hz() const { return config_.sample_rate_hz; }
    const std::vector<ClassProfile>& profiles() const { return profiles_; }
    const ClassProfile& profile(Movement m) const;
    bool has(Movement m) const;

    void set_location(int location);
    int location() const { return location_; }
    double location_gain(int location, std::size_t channel) const;

    // Appends n samples of movement m.
    void emit(Movement m, std::size_t n, std::vector<signal::EmgSample>& out);
    std::vector<signal::EmgSample> emit(Movement m, std::size_t n);

    std::size_t samples_emitted() const { return emitted_; }

private:
    struct Filter {
        double b0 = 0, b2 = 0, a1 = 0, a2 = 0, gain = 1;
    };
    struct ChannelState {
        double x1 = 0, x2 = 0, y1 = 0, y2 = 0;
        double jitter = 0;
    };

    std::vector<ClassProfile> profiles_;
    std::vector<Filter> filters_;  // per profile
    GeneratorConfig config_;
    std::size_t channels_ = 0;
    std::mt19937_64 rng_;
    std::vector<ChannelState> state_;
    std::vector<std::vector<double>> location_table_;  // [location][channel]
    int location_ = 5;
    std::size_t emitted_ = 0;
    double rho_ = 0.0;
};

// Single-profile stream of the given duration. Throws std::invalid_argument when
// duration_s <= 0 or the band is empty.
signal::EmgStream gen_signal(const ClassProfile& profile, double duration_s, std::uint64_t seed,
                             const GeneratorConfig& config = {});

struct SweepConfig {
    std::vector<double> levels{1.0, 2.25, 3.5, 4.75, 6.0};
    double sigma = 0.1;  // within-class gain jitter, the unit of spacing
    std::size_t channels = signal::kDefaultChannels;
    int session_index = 1;  // movement set to synthesize
    Band band;
    double drift_per_min = 0.0;
    GeneratorConfig generator;
};

// Class profiles at one spacing level: Rest has zero gains, every active movement
// gets gains level * sigma * v_i with v_i = 1 + h_i / 2 from distinct Hadamard rows,
// so the Rest-to-class and class-to-class gain distances scale linearly with level.
std::vector<ClassProfile> profiles_for_level(const session::ProtocolStage& stage, double level,
                                             const SweepConfig& config);

// Signal-level calibration: for every stage movement and position, a short lead-in
// followed by plan.ms_per_position of windows, all through the feature extractor.
subspace::CalibrationSet calibrate(Generator& gen, const session::ProtocolStage& stage,
                                   const session::CollectionPlan& plan = {},
                                   const signal::FeatureConfig& features = {});

// Feature-level shortcut: draws feature vectors straight from the amplitude model,
// skipping signal synthesis. Much faster, cruder frequency features.
class FeatureSynth {
public:
    FeatureSynth(std::vector<ClassProfile> profiles, std::uint64_t seed, GeneratorConfig config = {});
    void set_location(int location) { location_ = location; }
    signal::FeatureVector next(Movement m);

private:
    Generator gen_;  // reused for profile lookup and location gains
    std::mt19937_64 rng_;
    std::vector<double> jitter_;
    int location_ = 5;
    double rho_;
};

subspace::CalibrationSet calibrate_features(FeatureSynth& synth, const session::ProtocolStage& stage,
                                            const session::CollectionPlan& plan = {});

struct SweepLevel {
    double level = 0.0;
    std::vector<ClassProfile> profiles;
    subspace::CalibrationSet calibration;
};

// One calibration set per level, all from the same seed. Throws
// std::invalid_argument for fewer than 2 levels.
std::vector<SweepLevel> separability_sweep(const SweepConfig& config, std::uint64_t seed,
                                           const session::CollectionPlan& plan = {});

struct AgentPolicy {
    std::size_t reaction_delay = 0;  // decisions between seeing the cursor and acting on it
    // Anticipated decoding lag in steps. Unset: run_agent derives it from the
    // window length and vote smoothing; a bare Agent then assumes none.
    std::optional<std::size_t> lead_steps;
    double tolerance = 0.024;        // accepts |error| <= tolerance per dimension
    double epsilon = 0.0;            // chance per step of intending a random wrong movement

    void validate() const;
};

// The intended movement for one step, given the (possibly delayed) cursor.
class Agent {
public:
    Agent(AgentPolicy policy, const flt::FltConfig& flt, std::vector<Movement> available, std::uint64_t seed);
    void reset(const flt::TargetSpec& target);
    Movement intend(const flt::CursorConfig& cursor);

private:
    struct Intent {
        Movement movement;
        bool backup;
    };
    Intent seek(const flt::CursorConfig& cursor) const;

    AgentPolicy policy_;
    flt::FltConfig flt_;
    std::vector<Movement> available_;
    std::mt19937_64 rng_;
    flt::TargetSpec target_;
    std::vector<flt::CursorConfig> seen_;
    double lead_ = 0.0;
    Movement last_ = Movement::Rest;
    bool backed_up_ = false;
};

struct RunOptions {
    classifier::StreamOptions decode;
    signal::FeatureConfig features;
    bool feature_level = false;
    std::size_t rest_steps_between_trials = 20;
};

struct AgentRun {
    std::vector<flt::TrialRecord> records;
    flt::Metrics metrics;
    std::size_t decisions = 0;
};

// Runs a full FLT block for the stage: the agent intends, the generator produces
// matching signal at the trial's location, the pipeline decodes, the trial steps.
AgentRun run_agent(const AgentPolicy& policy, const session::ProtocolStage& stage, const classifier::Decoder& decoder,
                   Generator& gen, const flt::FltConfig& flt, std::uint64_t seed, const RunOptions& options = {});
AgentRun run_agent(const AgentPolicy& policy, const session::ProtocolStage& stage, const classifier::Decoder& decoder,
                   FeatureSynth& synth, const flt::FltConfig& flt, std::uint64_t seed,
                   const RunOptions& options = {});

struct StudyPoint {
    double level = 0.0;
    std::vector<double> cr;  // one per seed
    double mean_cr = 0.0;
    std::vector<double> accuracy;  // offline holdout accuracy per seed
};

struct StudyConfig {
    SweepConfig sweep;
    AgentPolicy policy;
    RunOptions run;
    flt::FltConfig flt;
    std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5, 6, 7, 8, 9, 10};
};

// Calibrate, fit and run one FLT block per (level, seed). Levels whose fit fails
// (degenerate) score CR = 0.
std::vector<StudyPoint> separability_study(const StudyConfig& config);

// Fraction of holdout vectors whose decision matches their label.
double holdout_accuracy(const classifier::Decoder& decoder, const subspace::CalibrationSet& holdout,
                        double t_rest = classifier::kDefaultRestThreshold);

}  // namespace myo::synth
