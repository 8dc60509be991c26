#pragma once

// The live loop behind the gateway: one EMG source, one session, one decoding
// pipeline, advanced in 50 ms ticks. Every observable change leaves through a
// single sink as (type, payload) pairs in the reviewer/v1 vocabulary.

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "myo/pipeline.hpp"
#include "myo/session.hpp"
#include "myo/signal.hpp"
#include "myo/synth.hpp"

namespace myo::gateway {

using json = nlohmann::json;

class EmgSource {
public:
    virtual ~EmgSource() = default;
    virtual std::size_t channels() const = 0;
    virtual double sample_rate_hz() const = 0;
    // Appends up to n samples; false once the source is exhausted.
    virtual bool read(std::size_t n, std::vector<signal::EmgSample>& out) = 0;
    // What the user is asked to do next. Recorded sources ignore it.
    virtual void prompt(Movement) {}
    virtual void set_position(int) {}
};

class ReplaySource : public EmgSource {
public:
    explicit ReplaySource(signal::EmgStream stream);
    std::size_t channels() const override { return stream_.channel_count(); }
    double sample_rate_hz() const override { return stream_.sample_rate_hz; }
    bool read(std::size_t n, std::vector<signal::EmgSample>& out) override;
    std::size_t remaining() const { return stream_.samples.size() - pos_; }

private:
    signal::EmgStream stream_;
    std::size_t pos_ = 0;
};

// Synthetic user: emits whatever movement it is prompted with. Optionally keeps
// every emitted sample so the run can be written out as a recording.
class SyntheticSource : public EmgSource {
public:
    explicit SyntheticSource(synth::Generator gen, bool record = false);
    std::size_t channels() const override { return gen_.channels(); }
    double sample_rate_hz() const override { return gen_.sample_rate_hz(); }
    bool read(std::size_t n, std::vector<signal::EmgSample>& out) override;
    void prompt(Movement m) override { current_ = m; }
    void set_position(int location) override { gen_.set_location(location); }

    const signal::EmgStream& recording() const { return recording_; }

private:
    synth::Generator gen_;
    Movement current_ = Movement::Rest;
    bool record_;
    signal::EmgStream recording_;
};

struct EngineOptions {
    session::SessionOptions session;
    signal::FeatureConfig features;
    // Windows discarded at the start of a collection while the window still
    // holds the previous movement.
    std::size_t lead_in_steps = 3;
    // Run the whole FLT block without start_trial commands.
    bool auto_trials = false;
    std::size_t rest_steps_between_trials = 20;
    // Drives a synthetic source through FLT trials (ignored by recorded sources).
    std::optional<synth::AgentPolicy> autopilot;
    std::uint64_t autopilot_seed = 1;
    // Feature vectors per class sent in `clusters` (evenly strided; 0 = all).
    std::size_t cluster_points = 0;
};

struct CommandError {
    std::string code;
    std::string message;
    json detail = json::object();

    json payload(std::string_view command) const;
};

class Engine {
public:
    using Sink = std::function<void(const std::string& type, const json& payload)>;

    Engine(session::ProtocolStage stage, EngineOptions options, std::unique_ptr<EmgSource> source);

    void set_sink(Sink sink) { sink_ = std::move(sink); }

    // Applies one client command at the current tick. Validation failures come
    // back as a CommandError and leave the engine unchanged.
    std::optional<CommandError> command(const std::string& type, const json& payload);
    // Publishes a rejected command as an `error` event.
    void report(const std::string& command, const CommandError& error);

    // One decision step. False once the source is exhausted or the session has
    // completed; later calls do nothing.
    bool tick();

    // Full state for a new subscriber: session_state then clusters.
    std::vector<std::pair<std::string, json>> snapshot() const;

    std::int64_t t_ms() const { return t_ms_; }
    std::uint64_t ticks() const { return ticks_; }
    bool finished() const { return finished_; }
    bool collecting() const { return collect_.has_value(); }
    const session::Session& session() const { return session_; }
    EmgSource& source() { return *source_; }

    json session_state() const;
    json clusters() const;

    // Decision steps one collect/recalibrate command occupies.
    std::size_t collection_steps() const;

private:
    struct Collection {
        Movement movement;
        bool recalibration;
        std::size_t skip;
        std::vector<signal::FeatureVector> features;
    };

    void emit(const std::string& type, json payload);
    void finish_collection();
    void start_next_trial();
    Movement intent();

    session::ProtocolStage stage_;
    EngineOptions options_;
    std::unique_ptr<EmgSource> source_;
    session::Session session_;
    Pipeline pipeline_;
    std::size_t step_samples_;
    std::vector<signal::EmgSample> buffer_;
    Sink sink_;

    std::int64_t t_ms_ = 0;
    std::uint64_t ticks_ = 0;
    bool finished_ = false;
    std::optional<Collection> collect_;
    std::optional<synth::Agent> agent_;
    std::size_t trial_gap_ = 0;  // rest steps left before the next automatic trial
    bool auto_running_ = false;
};

// One scripted client command, applied before the tick with the same index.
struct ScriptCommand {
    std::uint64_t tick = 0;
    std::string type;
    json payload = json::object();

    bool operator==(const ScriptCommand&) const = default;
};

// NDJSON, one {"tick":N,"type":"...","payload":{...}} per line, ticks
// non-decreasing. "stop" ends the run. ParseError names file and line.
std::vector<ScriptCommand> read_script(std::istream& in, const std::string& source_name = "<stream>");
std::vector<ScriptCommand> read_script_file(const std::string& path);
void write_script(std::ostream& out, std::span<const ScriptCommand> script);

struct StandardScriptOptions {
    // Recalibrations performed during exploration, in order, evenly spaced.
    std::vector<Movement> recalibrations;
    // Exploration length before end_exploration; clamped to the budget.
    std::int64_t exploration_ms = 0;
    bool assessment = true;
};

// start_calibration, one collect per stage movement, the requested exploration,
// end_exploration and (with auto_trials) the assessment block.
std::vector<ScriptCommand> standard_script(const Engine& engine, const StandardScriptOptions& options);

// Applies the script while ticking: commands whose tick has come are handed to
// the engine; rejected commands surface as `error` events through the sink.
class Driver {
public:
    Driver(Engine& engine, std::vector<ScriptCommand> script);
    // One tick; false when the run is over (engine finished, stop, or max ticks).
    bool step();
    std::uint64_t run(std::uint64_t max_ticks = UINT64_MAX);
    bool done() const { return done_; }

private:
    Engine& engine_;
    std::vector<ScriptCommand> script_;
    std::size_t next_ = 0;
    bool done_ = false;
};

}  // namespace myo::gateway
