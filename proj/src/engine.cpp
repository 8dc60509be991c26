#include "myo/engine.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <limits>
#include <ostream>
#include <stdexcept>

#include "json_util.hpp"
#include "myo/error.hpp"
#include "myo/wire.hpp"

namespace myo::gateway {

namespace {

json point_json(const subspace::Point3& p) { return json::array({p[0], p[1], p[2]}); }

json movement_json(Movement m) {
    return {{"id", movement_id(m)}, {"name", movement_name(m)}};
}

CommandError bad_request(std::string message) { return {"bad_request", std::move(message)}; }

}  // namespace

json CommandError::payload(std::string_view command) const {
    json p = {{"code", code}, {"message", message}, {"command", command}};
    for (const auto& [k, v] : detail.items()) p[k] = v;
    return p;
}

// ---------------------------------------------------------------------------
// Sources

ReplaySource::ReplaySource(signal::EmgStream stream) : stream_(std::move(stream)) {
    if (stream_.samples.empty()) throw std::invalid_argument("replay recording has no samples");
}

bool ReplaySource::read(std::size_t n, std::vector<signal::EmgSample>& out) {
    if (remaining() < n) {
        pos_ = stream_.samples.size();
        return false;
    }
    out.insert(out.end(), stream_.samples.begin() + static_cast<std::ptrdiff_t>(pos_),
               stream_.samples.begin() + static_cast<std::ptrdiff_t>(pos_ + n));
    pos_ += n;
    return true;
}

SyntheticSource::SyntheticSource(synth::Generator gen, bool record) : gen_(std::move(gen)), record_(record) {
    recording_.sample_rate_hz = gen_.sample_rate_hz();
}

bool SyntheticSource::read(std::size_t n, std::vector<signal::EmgSample>& out) {
    const std::size_t first = out.size();
    gen_.emit(current_, n, out);
    if (record_) recording_.samples.insert(recording_.samples.end(), out.begin() + static_cast<std::ptrdiff_t>(first), out.end());
    return true;
}

// ---------------------------------------------------------------------------
// Engine

Engine::Engine(session::ProtocolStage stage, EngineOptions options, std::unique_ptr<EmgSource> source)
    : stage_(stage),
      options_(std::move(options)),
      source_(std::move(source)),
      session_(stage_, options_.session),
      pipeline_(source_->channels(), source_->sample_rate_hz(),
                signal::WindowSpec{signal::kDefaultWindowMs, options_.session.flt.step_ms}, [&] {
                    signal::FeatureConfig fc = options_.features;
                    fc.sample_rate_hz = source_->sample_rate_hz();
                    return fc;
                }()),
      step_samples_(signal::samples_for(options_.session.flt.step_ms, source_->sample_rate_hz())) {
    if (options_.session.collection.step_ms != options_.session.flt.step_ms) {
        throw std::invalid_argument("collection and FLT must share the decision step");
    }
    if (options_.autopilot) {
        synth::AgentPolicy policy = *options_.autopilot;
        if (!policy.lead_steps) {
            const std::size_t window = signal::samples_for(signal::kDefaultWindowMs, source_->sample_rate_hz());
            policy.lead_steps = window / step_samples_ - 1 + options_.session.decode.smoothing / 2;
        }
        agent_.emplace(policy, options_.session.flt, stage_.movements, options_.autopilot_seed);
    }
}

void Engine::emit(const std::string& type, json payload) {
    if (sink_) sink_(type, payload);
}

void Engine::report(const std::string& command, const CommandError& error) {
    emit("error", error.payload(command));
}

std::size_t Engine::collection_steps() const {
    return options_.lead_in_steps + options_.session.collection.total();
}

json Engine::session_state() const {
    json movements = json::array();
    for (Movement m : stage_.movements) {
        json j = movement_json(m);
        j["calibrated"] = session_.calibrated(m);
        movements.push_back(std::move(j));
    }
    json collecting = nullptr;
    if (collect_) {
        collecting = movement_json(collect_->movement);
        collecting["recalibration"] = collect_->recalibration;
        collecting["samples"] = collect_->features.size();
        collecting["total"] = options_.session.collection.total();
    }
    const auto& ex = session_.exploration();
    const bool exploring = session_.phase() == session::Phase::Exploration;
    const std::int64_t t_d = exploring ? session_.exploration_ms(t_ms_) : ex.t_d_ms;
    return {{"t_ms", t_ms_},
            {"phase", session::phase_name(session_.phase())},
            {"session_index", stage_.session_index},
            {"stage", std::string(1, static_cast<char>(stage_.stage))},
            {"movements", std::move(movements)},
            {"collecting", std::move(collecting)},
            {"snapshots", session_.snapshots().size()},
            {"exploration",
             {{"t_d_ms", t_d},
              {"t_max_ms", stage_.t_max_ms},
              {"nr", ex.nr()},
              {"ntt", static_cast<double>(t_d) / static_cast<double>(stage_.t_max_ms)}}},
            {"assessment",
             {{"trials_done", session_.trials_done()},
              {"trials_total", stage_.flt_trials},
              {"trial_active", session_.trial_active()}}}};
}

json Engine::clusters() const {
    json classes = json::array();
    json model = nullptr;
    json snapshot = nullptr;
    if (!session_.snapshots().empty()) {
        const auto& snap = session_.snapshots().back();
        snapshot = session_.snapshots().size() - 1;
        model = subspace::hash_hex(snap.model.provenance);
        for (const auto& cls : snap.calibration.classes()) {
            json j = movement_json(cls.movement);
            j["centroid"] = point_json(subspace::reviewer_centroid(snap.model, cls.movement));
            json points = json::array();
            const std::size_t n = cls.samples.size();
            const std::size_t want = options_.cluster_points == 0 ? n : std::min(n, options_.cluster_points);
            for (std::size_t i = 0; i < want; ++i) {
                points.push_back(point_json(subspace::reviewer_coords(snap.model, cls.samples[i * n / want])));
            }
            j["points"] = std::move(points);
            classes.push_back(std::move(j));
        }
    }
    return {{"t_ms", t_ms_}, {"snapshot", snapshot}, {"model", model}, {"classes", std::move(classes)}};
}

std::vector<std::pair<std::string, json>> Engine::snapshot() const {
    return {{"session_state", session_state()}, {"clusters", clusters()}};
}

std::optional<CommandError> Engine::command(const std::string& type, const json& payload) {
    using session::Phase;
    if (finished_) return CommandError{"finished", "the session has ended"};
    const Phase phase = session_.phase();
    try {
        if (type == "subscribe") return std::nullopt;  // connection-level, nothing to do here
        if (type == "start_calibration") {
            if (phase != Phase::Idle) {
                return CommandError{"protocol_state", "calibration already started"};
            }
            session_.start_calibration(t_ms_);
            emit("session_state", session_state());
            return std::nullopt;
        }
        if (type == "collect" || type == "recalibrate") {
            if (!payload.is_object() || !payload.contains("movement")) return bad_request("missing movement");
            const json& mv = payload["movement"];
            std::optional<Movement> m;
            std::string label;
            if (mv.is_string()) {
                label = mv.get<std::string>();
                m = parse_movement(label);
            } else if (mv.is_number_integer()) {
                label = std::to_string(mv.get<long long>());
                m = movement_from_id(static_cast<int>(mv.get<long long>()));
            } else {
                return bad_request("movement must be a name or an id");
            }
            if (!m) return CommandError{"unknown_movement", "unknown movement '" + label + "'", {{"movement", label}}};
            if (!stage_.contains(*m)) {
                return CommandError{"not_in_stage",
                                    std::string(movement_name(*m)) + " is not trained in session " +
                                        std::to_string(stage_.session_index),
                                    {{"movement", movement_name(*m)}}};
            }
            const bool recal = phase == Phase::Exploration;
            if (type == "recalibrate" && !recal) {
                return CommandError{"protocol_state", "recalibrate is only allowed during Exploration"};
            }
            if (phase != Phase::Calibration && !recal) {
                return CommandError{"protocol_state", "collect is not allowed during " +
                                                          std::string(session::phase_name(phase))};
            }
            if (collect_) return CommandError{"busy", "a collection is already running"};
            if (recal && session_.budget_exhausted(t_ms_)) {
                return CommandError{"budget_exhausted", "exploration budget is used up"};
            }
            collect_ = Collection{*m, recal, options_.lead_in_steps, {}};
            emit("session_state", session_state());
            return std::nullopt;
        }
        if (type == "end_exploration") {
            if (phase != Phase::Exploration) {
                return CommandError{"protocol_state", "end_exploration is not allowed during " +
                                                          std::string(session::phase_name(phase))};
            }
            if (collect_) return CommandError{"busy", "a collection is still running"};
            session_.end_exploration(t_ms_, "user");
            auto_running_ = options_.auto_trials;
            trial_gap_ = options_.rest_steps_between_trials;
            emit("session_state", session_state());
            return std::nullopt;
        }
        if (type == "start_trial") {
            if (phase != Phase::Assessment) {
                return CommandError{"protocol_state", "start_trial is not allowed during " +
                                                          std::string(session::phase_name(phase))};
            }
            if (session_.trial_active()) return CommandError{"busy", "a trial is already running"};
            start_next_trial();
            return std::nullopt;
        }
    } catch (const BudgetExhausted& e) {
        return CommandError{"budget_exhausted", e.what()};
    } catch (const ProtocolStateError& e) {
        return CommandError{"protocol_state", e.what()};
    } catch (const std::invalid_argument& e) {
        return bad_request(e.what());
    }
    return CommandError{"unknown_command", "unknown command '" + type + "'"};
}

void Engine::start_next_trial() {
    const auto& spec = session_.start_trial(t_ms_);
    source_->set_position(spec.location);
    if (agent_) agent_->reset(spec);
    emit("session_state", session_state());
}

Movement Engine::intent() {
    if (collect_) {
        const auto& plan = options_.session.collection;
        const std::size_t k = std::min(collect_->features.size() / plan.samples_per_position(), plan.positions.size() - 1);
        source_->set_position(plan.positions[k]);
        return collect_->movement;
    }
    if (const flt::Trial* trial = session_.active_trial(); trial && agent_) return agent_->intend(trial->cursor());
    return Movement::Rest;
}

void Engine::finish_collection() {
    const Collection c = std::move(*collect_);
    collect_.reset();
    const std::string command = c.recalibration ? "recalibrate" : "collect";
    const auto before = session_.snapshots().size();
    try {
        const auto samples = session::collect_movement(stage_, c.movement, c.features, options_.session.collection);
        if (c.recalibration) {
            session_.recalibrate(c.movement, samples, t_ms_);
        } else {
            session_.collect(c.movement, samples, t_ms_);
        }
    } catch (const DegenerateAxis& e) {
        report(command, {"degenerate_axis", e.what(), {{"movement", movement_name(e.movement())}}});
    } catch (const BudgetExhausted& e) {
        report(command, {"budget_exhausted", e.what(), {{"movement", movement_name(c.movement)}}});
    } catch (const Error& e) {
        report(command, {"fit_failed", e.what(), {{"movement", movement_name(c.movement)}}});
    }
    if (session_.snapshots().size() != before) {
        pipeline_.set_decoder(session_.decoder(), options_.session.decode);
        emit("clusters", clusters());
    }
    emit("session_state", session_state());
}

bool Engine::tick() {
    using session::Phase;
    if (finished_) return false;
    source_->prompt(intent());
    buffer_.clear();
    if (!source_->read(step_samples_, buffer_)) {
        finished_ = true;
        emit("session_state", session_state());
        return false;
    }
    ++ticks_;
    t_ms_ += options_.session.flt.step_ms;

    std::optional<PipelineOutput> out;
    for (const auto& s : buffer_) {
        if (auto o = pipeline_.push(s.channels)) out = std::move(o);
    }

    if (out && collect_) {
        if (collect_->skip > 0) {
            --collect_->skip;
        } else {
            collect_->features.push_back(out->features);
        }
        if (collect_->features.size() == options_.session.collection.total()) finish_collection();
    }

    if (out && out->projected && out->raw) {
        const auto& model = pipeline_.decoder()->model;
        emit("cursor3d", {{"t_ms", t_ms_}, {"position", point_json(subspace::reviewer_coords(model, *out->projected))}});
        const auto& d = *out->raw;
        json margin = std::isfinite(d.margin) ? json(d.margin) : json(nullptr);
        json axis = d.winning_axis ? json(movement_id(*d.winning_axis)) : json(nullptr);
        emit("decision", {{"t_ms", t_ms_},
                          {"label", movement_id(out->label)},
                          {"name", movement_name(out->label)},
                          {"raw_label", movement_id(d.label)},
                          {"winning_axis", axis},
                          {"t_star", d.t_star},
                          {"distance", d.distance},
                          {"margin", margin}});
    }

    if (out && session_.trial_active()) {
        const std::size_t index = session_.trials_done();
        const flt::Outcome o = session_.step_trial(out->label, t_ms_);
        json state = {{"t_ms", t_ms_}, {"trial", index}, {"trials_total", session_.trials_total()}};
        if (o == flt::Outcome::Pending) {
            const flt::Trial& tr = *session_.active_trial();
            const auto& spec = tr.record().spec;
            state.update({{"gesture", movement_id(spec.gesture)},
                          {"target", json::array({spec.target.r, spec.target.phi})},
                          {"half_width", spec.half_width},
                          {"cursor", json::array({tr.cursor().r, tr.cursor().phi})},
                          {"elapsed_s", tr.elapsed_s()},
                          {"dwell_s", tr.dwell_s()},
                          {"outcome", flt::outcome_name(o)}});
        } else {
            const auto& rec = session_.records().back();
            const auto& cur = rec.trajectory.back().cursor;
            const auto& cfg = options_.session.flt;
            state.update({{"gesture", movement_id(rec.spec.gesture)},
                          {"target", json::array({rec.spec.target.r, rec.spec.target.phi})},
                          {"half_width", rec.spec.half_width},
                          {"cursor", json::array({cur.r, cur.phi})},
                          {"elapsed_s", o == flt::Outcome::Success ? rec.completion_s : cfg.time_limit_s},
                          {"dwell_s", o == flt::Outcome::Success ? cfg.dwell_s : 0.0},
                          {"outcome", flt::outcome_name(o)}});
        }
        emit("flt_state", std::move(state));
        if (o != flt::Outcome::Pending) {
            trial_gap_ = options_.rest_steps_between_trials;
            emit("session_state", session_state());
        }
    }

    if (session_.phase() == Phase::Exploration && !collect_ && session_.budget_exhausted(t_ms_)) {
        session_.end_exploration(t_ms_, "budget");
        auto_running_ = options_.auto_trials;
        trial_gap_ = options_.rest_steps_between_trials;
        emit("session_state", session_state());
    }

    if (auto_running_ && session_.phase() == Phase::Assessment && !session_.trial_active()) {
        if (trial_gap_ > 0) {
            --trial_gap_;
        } else {
            start_next_trial();
        }
    }

    if (session_.phase() == Phase::Complete) finished_ = true;
    return !finished_;
}

// ---------------------------------------------------------------------------
// Scripts

std::vector<ScriptCommand> read_script(std::istream& in, const std::string& source_name) {
    std::vector<ScriptCommand> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        const json j = detail::parse_json(line, source_name, lineno);
        try {
            if (!j.is_object()) throw std::invalid_argument("script line is not an object");
            if (!j.contains("tick") || !j["tick"].is_number_unsigned()) throw std::invalid_argument("missing or negative tick");
            if (!j.contains("type") || !j["type"].is_string()) throw std::invalid_argument("missing type");
            ScriptCommand c;
            c.tick = j["tick"].get<std::uint64_t>();
            c.type = j["type"].get<std::string>();
            if (c.type != "stop" && !is_client_type(c.type)) throw std::invalid_argument("unknown command '" + c.type + "'");
            if (j.contains("payload")) {
                if (!j["payload"].is_object()) throw std::invalid_argument("payload must be an object");
                c.payload = j["payload"];
            }
            if (!out.empty() && c.tick < out.back().tick) throw std::invalid_argument("ticks must not decrease");
            out.push_back(std::move(c));
        } catch (const std::invalid_argument& e) {
            throw ParseError(source_name, lineno, e.what());
        }
    }
    return out;
}

std::vector<ScriptCommand> read_script_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError(path, 0, "cannot open file");
    return read_script(in, path);
}

void write_script(std::ostream& out, std::span<const ScriptCommand> script) {
    for (const auto& c : script) {
        json j = {{"tick", c.tick}, {"type", c.type}};
        if (!c.payload.empty()) j["payload"] = c.payload;
        out << j.dump() << '\n';
    }
}

std::vector<ScriptCommand> standard_script(const Engine& engine, const StandardScriptOptions& options) {
    const auto& stage = engine.session().stage();
    const int step_ms = engine.session().options().flt.step_ms;
    const std::uint64_t cs = engine.collection_steps();
    // The first decision needs a full window; later gaps are just rest.
    const std::uint64_t gap = static_cast<std::uint64_t>(signal::kDefaultWindowMs / step_ms);
    std::vector<ScriptCommand> out;
    out.push_back({0, "start_calibration", json::object()});
    std::uint64_t tick = gap;
    for (Movement m : stage.movements) {
        out.push_back({tick, "collect", {{"movement", movement_name(m)}}});
        tick += cs + (m == stage.movements.back() ? 0 : gap);
    }
    const std::uint64_t start = tick;  // exploration begins when the last collection completes
    const std::int64_t explore = std::clamp<std::int64_t>(options.exploration_ms, 0, stage.t_max_ms);
    const std::uint64_t span = static_cast<std::uint64_t>(explore / step_ms);
    const std::size_t n = options.recalibrations.size();
    for (std::size_t i = 0; i < n; ++i) {
        out.push_back({start + (i + 1) * span / (n + 1), "recalibrate", {{"movement", movement_name(options.recalibrations[i])}}});
    }
    if (explore < stage.t_max_ms) out.push_back({start + span, "end_exploration", json::object()});
    if (!options.assessment) out.push_back({start + span + 1, "stop", json::object()});
    return out;
}

// ---------------------------------------------------------------------------
// Driver

Driver::Driver(Engine& engine, std::vector<ScriptCommand> script) : engine_(engine), script_(std::move(script)) {}

bool Driver::step() {
    if (done_) return false;
    while (next_ < script_.size() && script_[next_].tick <= engine_.ticks()) {
        const ScriptCommand& c = script_[next_++];
        if (c.type == "stop") {
            done_ = true;
            return false;
        }
        if (auto err = engine_.command(c.type, c.payload)) engine_.report(c.type, *err);
    }
    if (!engine_.tick()) done_ = true;
    return !done_;
}

std::uint64_t Driver::run(std::uint64_t max_ticks) {
    std::uint64_t n = 0;
    while (n < max_ticks && step()) ++n;
    return engine_.ticks();
}

}  // namespace myo::gateway
