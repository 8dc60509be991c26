#include "myo/session.hpp"

#include <algorithm>
#include <filesystem>
#include <istream>
#include <ostream>
#include <stdexcept>

#include "json_util.hpp"
#include "myo/error.hpp"

namespace myo::session {

std::string_view phase_name(Phase p) {
    switch (p) {
        case Phase::Idle: return "idle";
        case Phase::Calibration: return "calibration";
        case Phase::Exploration: return "exploration";
        case Phase::Assessment: return "assessment";
        case Phase::Complete: return "complete";
    }
    return "idle";
}

std::size_t CollectionPlan::samples_per_position() const {
    if (step_ms <= 0 || ms_per_position <= 0) throw std::invalid_argument("collection timing must be positive");
    return static_cast<std::size_t>(ms_per_position / step_ms);
}

std::vector<LabeledSample> collect_movement(const ProtocolStage& stage, Movement movement,
                                            std::span<const signal::FeatureVector> stream,
                                            const CollectionPlan& plan) {
    if (!stage.contains(movement)) {
        throw std::invalid_argument(std::string(movement_name(movement)) + " is not trained in this stage");
    }
    if (stream.empty()) throw std::invalid_argument("empty feature stream for " + std::string(movement_name(movement)));
    if (plan.positions.empty()) throw std::invalid_argument("collection plan has no positions");
    const std::size_t per = plan.samples_per_position();
    const std::size_t n = std::min(stream.size(), plan.total());
    std::vector<LabeledSample> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        LabeledSample s{stream[i], plan.positions[(i / per) % plan.positions.size()]};
        s.features.label = movement;
        out.push_back(std::move(s));
    }
    return out;
}

double normalized_training_time(const ExplorationLog& log) {
    if (log.t_max_ms <= 0) throw std::invalid_argument("exploration budget T_max must be positive");
    return static_cast<double>(log.t_d_ms) / static_cast<double>(log.t_max_ms);
}

// ---------------------------------------------------------------------------
// Log encoding

std::string encode_event(const LogEvent& e) {
    json j;
    j["seq"] = e.seq;
    j["t_ms"] = e.t_ms;
    j["type"] = e.type;
    j["payload"] = e.payload;
    return j.dump();
}

std::vector<LogEvent> read_log(std::istream& in, const std::string& source_name) {
    std::vector<LogEvent> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        const json j = detail::parse_json(line, source_name, lineno);
        try {
            LogEvent e;
            e.seq = j.at("seq").get<std::uint64_t>();
            e.t_ms = j.at("t_ms").get<std::int64_t>();
            e.type = j.at("type").get<std::string>();
            e.payload = j.at("payload");
            if (e.seq != out.size()) throw std::invalid_argument("sequence gap: expected " + std::to_string(out.size()));
            if (!out.empty() && e.t_ms < out.back().t_ms) throw std::invalid_argument("timestamp runs backwards");
            out.push_back(std::move(e));
        } catch (const std::exception& ex) {
            throw ParseError(source_name, lineno, ex.what());
        }
    }
    return out;
}

std::vector<LogEvent> read_log_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError(path, 0, "cannot open file");
    return read_log(in, path);
}

namespace {

json cursor_json(const flt::CursorConfig& c) { return json::array({c.r, c.phi}); }

flt::CursorConfig cursor_from(const json& j) { return {j.at(0).get<double>(), j.at(1).get<double>()}; }

Movement movement_at(const json& j) {
    const auto m = movement_from_id(j.get<int>());
    if (!m) throw std::invalid_argument("unknown movement id " + j.dump());
    return *m;
}

json optional_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

}  // namespace

json trial_to_json(const flt::TrialRecord& r) {
    json traj = json::array();
    for (const auto& p : r.trajectory) traj.push_back(json::array({movement_id(p.decision), p.cursor.r, p.cursor.phi}));
    return json{{"index", r.index},
                {"gesture", movement_id(r.spec.gesture)},
                {"gesture_name", std::string(movement_name(r.spec.gesture))},
                {"target", cursor_json(r.spec.target)},
                {"half_width", r.spec.half_width},
                {"location", r.spec.location},
                {"start", cursor_json(r.start)},
                {"step_s", r.step_s},
                {"outcome", std::string(flt::outcome_name(r.outcome))},
                {"completion_s", r.completion_s},
                {"misclassifications", r.misclassifications},
                {"overshoots", flt::count_overshoots(r)},
                {"trajectory", traj}};
}

flt::TrialRecord trial_from_json(const json& j) {
    flt::TrialRecord r;
    r.index = j.at("index").get<std::size_t>();
    r.spec.gesture = movement_at(j.at("gesture"));
    r.spec.target = cursor_from(j.at("target"));
    r.spec.half_width = j.at("half_width").get<double>();
    r.spec.location = j.at("location").get<int>();
    r.start = cursor_from(j.at("start"));
    r.step_s = j.at("step_s").get<double>();
    const auto outcome = j.at("outcome").get<std::string>();
    if (outcome == "success") {
        r.outcome = flt::Outcome::Success;
    } else if (outcome == "timeout") {
        r.outcome = flt::Outcome::Timeout;
    } else if (outcome == "pending") {
        r.outcome = flt::Outcome::Pending;
    } else {
        throw std::invalid_argument("unknown trial outcome '" + outcome + "'");
    }
    r.completion_s = j.at("completion_s").get<double>();
    r.misclassifications = j.at("misclassifications").get<std::size_t>();
    for (const auto& p : j.at("trajectory")) {
        r.trajectory.push_back({movement_at(p.at(0)), {p.at(1).get<double>(), p.at(2).get<double>()}});
    }
    return r;
}

// ---------------------------------------------------------------------------
// Session

Session::Session(ProtocolStage stage, SessionOptions options) : stage_(std::move(stage)), options_(std::move(options)) {
    exploration_.t_max_ms = stage_.t_max_ms;
}

void Session::advance(std::int64_t t_ms) {
    if (t_ms < clock_ms_) {
        throw std::invalid_argument("session clock ran backwards: " + std::to_string(t_ms) + " < " +
                                    std::to_string(clock_ms_));
    }
}

void Session::require(Phase p, std::string_view action) const {
    if (phase_ != p) {
        throw ProtocolStateError(std::string(action) + " is not allowed during " + std::string(phase_name(phase_)));
    }
}

void Session::emit(std::int64_t t_ms, std::string type, json payload) {
    clock_ms_ = t_ms;
    LogEvent e{events_.size(), t_ms, std::move(type), std::move(payload)};
    if (options_.log) *options_.log << encode_event(e) << '\n' << std::flush;
    events_.push_back(std::move(e));
}

void Session::start_calibration(std::int64_t t_ms) {
    require(Phase::Idle, "start_calibration");
    advance(t_ms);
    json names = json::array();
    for (Movement m : stage_.movements) names.push_back(std::string(movement_name(m)));
    emit(t_ms, "session_start",
         {{"session_index", stage_.session_index},
          {"stage", std::string(1, static_cast<char>(stage_.stage))},
          {"movements", names},
          {"positions", stage_.positions},
          {"t_max_ms", stage_.t_max_ms},
          {"flt_trials", stage_.flt_trials}});
    phase_ = Phase::Calibration;
    emit(t_ms, "calibration_start", json::object());
}

void Session::check_samples(Movement m, std::span<const LabeledSample> samples) const {
    if (!stage_.contains(m)) {
        throw std::invalid_argument(std::string(movement_name(m)) + " is not trained in this stage");
    }
    if (samples.size() < 2) {
        throw std::invalid_argument("need at least 2 samples for " + std::string(movement_name(m)));
    }
    const std::size_t d = working_.class_count() > 0 ? working_.dim() : samples.front().features.dim();
    for (const auto& s : samples) {
        if (s.features.dim() != d) {
            throw DimensionMismatch("feature dimension " + std::to_string(s.features.dim()) + " != " + std::to_string(d));
        }
    }
}

namespace {

std::vector<signal::FeatureVector> features_of(std::span<const LabeledSample> samples) {
    std::vector<signal::FeatureVector> out;
    out.reserve(samples.size());
    for (const auto& s : samples) out.push_back(s.features);
    return out;
}

json positions_of(std::span<const LabeledSample> samples) {
    json out = json::array();
    for (const auto& s : samples) out.push_back(s.position);
    return out;
}

}  // namespace

json Session::snapshot_payload(const subspace::CalibrationSet& cal, const subspace::SubspaceModel& model) const {
    const std::size_t index = snapshots_.size();
    json payload{{"snapshot", index},
                 {"provenance", subspace::hash_hex(model.provenance)},
                 {"p", model.p},
                 {"lambda", model.lambda},
                 {"samples", cal.total_samples()}};
    if (!options_.snapshot_dir.empty()) {
        const std::string name = "model-" + std::to_string(index) + ".json";
        std::filesystem::create_directories(options_.snapshot_dir);
        subspace::write_model_file((std::filesystem::path(options_.snapshot_dir) / name).string(), model);
        payload["file"] = name;
    }
    return payload;
}

void Session::commit_model(subspace::CalibrationSet cal, subspace::SubspaceModel model,
                           std::shared_ptr<const classifier::Decoder> decoder, json payload, std::int64_t t_ms) {
    working_ = cal;
    snapshots_.push_back({std::move(cal), std::move(model)});
    decoder_ = std::move(decoder);
    emit(t_ms, "model", std::move(payload));
}

void Session::collect(Movement m, std::span<const LabeledSample> samples, std::int64_t t_ms) {
    if (phase_ == Phase::Exploration) {
        recalibrate(m, samples, t_ms);
        return;
    }
    require(Phase::Calibration, "collect");
    advance(t_ms);
    check_samples(m, samples);

    subspace::CalibrationSet next = working_;
    const bool replaced = next.has(m);
    next.set_class(m, features_of(samples));

    const bool complete = std::all_of(stage_.movements.begin(), stage_.movements.end(),
                                      [&](Movement s) { return next.has(s); });
    std::optional<subspace::SubspaceModel> model;
    std::shared_ptr<const classifier::Decoder> decoder;
    json snapshot;
    if (complete) {
        model = options_.lambda ? subspace::fit_lda(next, *options_.lambda) : subspace::fit_lda(next);
        decoder = classifier::Decoder::build(*model);
        snapshot = snapshot_payload(next, *model);
    }

    emit(t_ms, "collect",
         {{"movement", movement_id(m)},
          {"name", std::string(movement_name(m))},
          {"samples", samples.size()},
          {"positions", positions_of(samples)},
          {"replaced", replaced}});
    if (!complete) {
        working_ = std::move(next);
        return;
    }
    commit_model(std::move(next), std::move(*model), std::move(decoder), std::move(snapshot), t_ms);
    phase_ = Phase::Exploration;
    exploration_start_ms_ = t_ms;
    emit(t_ms, "exploration_start", {{"t_max_ms", stage_.t_max_ms}});
}

std::int64_t Session::exploration_ms(std::int64_t t_ms) const {
    if (phase_ != Phase::Exploration) return exploration_.t_d_ms;
    return std::clamp<std::int64_t>(t_ms - exploration_start_ms_, 0, stage_.t_max_ms);
}

bool Session::budget_exhausted(std::int64_t t_ms) const {
    return phase_ == Phase::Exploration && exploration_ms(t_ms) >= stage_.t_max_ms;
}

void Session::recalibrate(Movement m, std::span<const LabeledSample> samples, std::int64_t t_ms) {
    require(Phase::Exploration, "recalibrate");
    advance(t_ms);
    if (!working_.has(m)) {
        throw std::invalid_argument(std::string(movement_name(m)) + " is not calibrated in this session");
    }
    const std::int64_t t_d = exploration_ms(t_ms);
    if (t_d >= stage_.t_max_ms) {
        throw BudgetExhausted("exploration budget of " + std::to_string(stage_.t_max_ms / 1000) + " s is used up");
    }
    check_samples(m, samples);

    subspace::CalibrationSet next = working_;
    next.set_class(m, features_of(samples));
    auto model = options_.lambda ? subspace::fit_lda(next, *options_.lambda) : subspace::fit_lda(next);
    auto decoder = classifier::Decoder::build(model);
    json snapshot = snapshot_payload(next, model);

    exploration_.recalibrations.push_back({m, t_ms, t_d});
    exploration_.t_d_ms = t_d;
    emit(t_ms, "recalibration",
         {{"movement", movement_id(m)},
          {"name", std::string(movement_name(m))},
          {"samples", samples.size()},
          {"positions", positions_of(samples)},
          {"nr", exploration_.nr()},
          {"t_d_ms", t_d}});
    commit_model(std::move(next), std::move(model), std::move(decoder), std::move(snapshot), t_ms);
}

void Session::end_exploration(std::int64_t t_ms, std::string_view reason) {
    require(Phase::Exploration, "end_exploration");
    advance(t_ms);
    exploration_.t_d_ms = exploration_ms(t_ms);
    targets_ = flt::sample_targets(stage_, options_.flt, options_.seed);
    emit(t_ms, "exploration_end",
         {{"reason", std::string(reason)},
          {"t_d_ms", exploration_.t_d_ms},
          {"t_max_ms", exploration_.t_max_ms},
          {"nr", exploration_.nr()},
          {"ntt", ntt()}});
    phase_ = Phase::Assessment;
    json targets = json::array();
    for (const auto& t : targets_) {
        targets.push_back({{"gesture", movement_id(t.gesture)},
                           {"target", cursor_json(t.target)},
                           {"location", t.location}});
    }
    emit(t_ms, "assessment_start",
         {{"trials", targets_.size()},
          {"seed", options_.seed},
          {"model", subspace::hash_hex(snapshots_.back().model.provenance)},
          {"targets", targets}});
}

const flt::TargetSpec& Session::start_trial(std::int64_t t_ms) {
    require(Phase::Assessment, "start_trial");
    advance(t_ms);
    if (trial_) throw ProtocolStateError("a trial is already running");
    const std::size_t index = records_.size();
    trial_.emplace(index, targets_.at(index), options_.flt);
    emit(t_ms, "trial_start",
         {{"index", index},
          {"gesture", movement_id(targets_[index].gesture)},
          {"target", cursor_json(targets_[index].target)},
          {"location", targets_[index].location}});
    return targets_[index];
}

flt::Outcome Session::step_trial(Movement decision, std::int64_t t_ms) {
    require(Phase::Assessment, "step_trial");
    advance(t_ms);
    if (!trial_) throw ProtocolStateError("no trial is running");
    const flt::Outcome o = trial_->step(decision);
    clock_ms_ = t_ms;
    if (o == flt::Outcome::Pending) return o;

    records_.push_back(trial_->record());
    trial_.reset();
    json payload = trial_to_json(records_.back());
    payload["model"] = subspace::hash_hex(snapshots_.back().model.provenance);
    emit(t_ms, "trial", std::move(payload));
    if (records_.size() == targets_.size()) {
        const auto m = flt::compute_metrics(records_);
        emit(t_ms, "assessment_end",
             {{"trials", m.trials},
              {"successes", m.successes},
              {"cr", m.cr},
              {"ot", optional_json(m.ot)},
              {"pe", optional_json(m.pe)},
              {"tp", optional_json(m.tp)}});
        phase_ = Phase::Complete;
    }
    return o;
}

// ---------------------------------------------------------------------------
// Report

bool SessionReport::consistent() const {
    if (snapshots > 0 && nr != snapshots - 1) return false;
    if (logged_nr && *logged_nr != nr) return false;
    if (logged_ntt && *logged_ntt != ntt) return false;
    return true;
}

SessionReport build_report(std::span<const LogEvent> events) {
    SessionReport rep;
    std::optional<std::int64_t> explore_start;
    std::optional<std::int64_t> explore_end;
    for (const auto& e : events) {
        const json& p = e.payload;
        if (e.type == "session_start") {
            rep.session_index = p.at("session_index").get<int>();
            rep.stage = p.at("stage").get<std::string>().at(0);
            rep.t_max_ms = p.at("t_max_ms").get<std::int64_t>();
        } else if (e.type == "model") {
            ++rep.snapshots;
            rep.final_model = p.at("provenance").get<std::string>();
        } else if (e.type == "recalibration") {
            ++rep.nr;
        } else if (e.type == "exploration_start") {
            explore_start = e.t_ms;
        } else if (e.type == "exploration_end") {
            explore_end = e.t_ms;
            rep.logged_nr = p.at("nr").get<std::size_t>();
            rep.logged_ntt = p.at("ntt").get<double>();
        } else if (e.type == "trial") {
            rep.trials.push_back(trial_from_json(p));
        }
    }
    if (explore_start) {
        const std::int64_t end = explore_end ? *explore_end : (events.empty() ? *explore_start : events.back().t_ms);
        rep.t_d_ms = std::clamp<std::int64_t>(end - *explore_start, 0, rep.t_max_ms);
    }
    if (rep.t_max_ms > 0) rep.ntt = static_cast<double>(rep.t_d_ms) / static_cast<double>(rep.t_max_ms);
    if (!rep.trials.empty()) rep.metrics = flt::compute_metrics(rep.trials);
    return rep;
}

}  // namespace myo::session
