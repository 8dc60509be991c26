#include "myo/flt.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>

#include "myo/error.hpp"

namespace myo::flt {

double distance(const CursorConfig& a, const CursorConfig& b) {
    return std::hypot(a.r - b.r, a.phi - b.phi);
}

namespace {

std::size_t steps_for(double seconds, int step_ms) {
    return static_cast<std::size_t>(std::llround(seconds * 1000.0 / step_ms));
}

}  // namespace

std::size_t FltConfig::dwell_steps() const { return steps_for(dwell_s, step_ms); }
std::size_t FltConfig::limit_steps() const { return steps_for(time_limit_s, step_ms); }
std::size_t FltConfig::idle_steps() const { return steps_for(idle_limit_s, step_ms); }

Rotation rotation_of(const TargetSpec& spec, const FltConfig& config) {
    return spec.target.phi < config.start.phi ? Rotation::Clockwise : Rotation::CounterClockwise;
}

std::string_view outcome_name(Outcome o) {
    switch (o) {
        case Outcome::Pending: return "pending";
        case Outcome::Success: return "success";
        case Outcome::Timeout: return "timeout";
    }
    return "pending";
}

// ---------------------------------------------------------------------------
// Targets

std::vector<TargetSpec> sample_targets(const session::ProtocolStage& stage, const FltConfig& config,
                                       std::uint64_t seed) {
    const auto gestures = stage.flt_gestures();
    return sample_targets(gestures, stage.flt_trials, config, seed);
}

std::vector<TargetSpec> sample_targets(std::span<const Movement> gestures, std::size_t total,
                                       const FltConfig& config, std::uint64_t seed) {
    if (gestures.empty()) throw std::invalid_argument("no FLT-eligible gesture is calibrated");
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> aperture(config.target_min, config.target_max);
    std::uniform_real_distribution<double> below(config.target_min, config.start.phi);
    std::uniform_real_distribution<double> above(std::nextafter(config.start.phi, 2.0), config.target_max);

    const auto locations = session::assessment_locations(config.handedness);
    const bool odd_direction_cw = (rng() & 1U) != 0;

    std::vector<TargetSpec> out;
    out.reserve(total);
    for (std::size_t i = 0; i < total; ++i) {
        TargetSpec t;
        t.gesture = gestures[i % gestures.size()];
        t.half_width = config.width / 2.0;
        const bool last_unpaired = (total % 2 == 1) && i + 1 == total;
        const bool clockwise = last_unpaired ? odd_direction_cw : i % 2 == 0;
        t.target.r = aperture(rng);
        t.target.phi = clockwise ? below(rng) : above(rng);
        out.push_back(t);
    }
    std::shuffle(out.begin(), out.end(), rng);
    for (std::size_t i = 0; i < out.size(); ++i) out[i].location = locations[i % locations.size()];
    return out;
}

// ---------------------------------------------------------------------------
// Cursor dynamics and adjudication

CursorConfig step_cursor(const CursorConfig& s, Movement decision, Movement prompt, const FltConfig& config) {
    CursorConfig next = s;
    const double dt = config.step_s();
    const double sign = config.handedness == Handedness::Right ? 1.0 : -1.0;
    if (decision == prompt) {
        next.r -= config.aperture_rate * dt;
    } else if (decision == Movement::HandOpen) {
        next.r += config.aperture_rate * dt;
    } else if (decision == Movement::WristPronate) {
        next.phi -= sign * config.orientation_rate * dt;
    } else if (decision == Movement::WristSupinate) {
        next.phi += sign * config.orientation_rate * dt;
    }
    next.r = std::clamp(next.r, 0.0, 1.0);
    return next;
}

bool in_band(const CursorConfig& s, const TargetSpec& spec) {
    return std::abs(s.r - spec.target.r) <= spec.half_width && std::abs(s.phi - spec.target.phi) <= spec.half_width;
}

namespace {

// Incremental adjudication shared by Trial and adjudicate().
class Scanner {
public:
    Scanner(const TargetSpec& spec, const FltConfig& config) : spec_(spec), config_(config) {}

    Outcome feed(const TrajectoryPoint& p) {
        const std::size_t idx = seen_++;
        if (!first_motion && p.decision != Movement::Rest) first_motion = idx;
        if (!first_motion) {
            if (seen_ >= config_.idle_steps()) return decide(Outcome::Timeout, idx);
            return Outcome::Pending;
        }
        dwell = (p.decision == Movement::Rest && in_band(p.cursor, spec_)) ? dwell + 1 : 0;
        const std::size_t since = idx - *first_motion + 1;
        if (dwell >= config_.dwell_steps() && since <= config_.limit_steps()) {
            completion_s = static_cast<double>(since) * config_.step_s();
            return decide(Outcome::Success, idx);
        }
        if (since >= config_.limit_steps()) return decide(Outcome::Timeout, idx);
        return Outcome::Pending;
    }

    std::optional<std::size_t> first_motion;
    std::size_t dwell = 0;
    double completion_s = 0.0;
    std::size_t decided_at = 0;

private:
    Outcome decide(Outcome o, std::size_t idx) {
        decided_at = idx;
        return o;
    }

    TargetSpec spec_;
    FltConfig config_;
    std::size_t seen_ = 0;
};

}  // namespace

Adjudication adjudicate(const TrialRecord& record, const FltConfig& config) {
    Scanner scan(record.spec, config);
    Adjudication out;
    for (const auto& p : record.trajectory) {
        const Outcome o = scan.feed(p);
        if (o != Outcome::Pending) {
            out.outcome = o;
            out.decided_at = scan.decided_at;
            out.completion_s = o == Outcome::Success ? scan.completion_s : 0.0;
            break;
        }
    }
    out.first_motion = scan.first_motion;
    return out;
}

Trial::Trial(std::size_t index, TargetSpec spec, const FltConfig& config) : config_(config), cursor_(config.start) {
    record_.index = index;
    record_.spec = spec;
    record_.start = config.start;
    record_.step_s = config.step_s();
}

Outcome Trial::step(Movement decision) {
    if (finished()) throw ProtocolStateError("trial " + std::to_string(record_.index) + " is already adjudicated");
    cursor_ = step_cursor(cursor_, decision, record_.spec.gesture, config_);
    if (is_closing_gesture(decision) && decision != record_.spec.gesture) ++record_.misclassifications;
    record_.trajectory.push_back({decision, cursor_});

    // Re-scanning only the newest point keeps this O(1) per step.
    const std::size_t idx = record_.trajectory.size() - 1;
    if (!first_motion_ && decision != Movement::Rest) first_motion_ = idx;
    if (!first_motion_) {
        if (record_.trajectory.size() >= config_.idle_steps()) record_.outcome = Outcome::Timeout;
        return record_.outcome;
    }
    dwell_ = (decision == Movement::Rest && in_band(cursor_, record_.spec)) ? dwell_ + 1 : 0;
    const std::size_t since = idx - *first_motion_ + 1;
    if (dwell_ >= config_.dwell_steps() && since <= config_.limit_steps()) {
        record_.outcome = Outcome::Success;
        record_.completion_s = static_cast<double>(since) * config_.step_s();
    } else if (since >= config_.limit_steps()) {
        record_.outcome = Outcome::Timeout;
    }
    return record_.outcome;
}

double Trial::elapsed_s() const {
    if (!first_motion_) return 0.0;
    return static_cast<double>(record_.trajectory.size() - *first_motion_) * config_.step_s();
}

// ---------------------------------------------------------------------------
// Metrics

namespace {

enum class Region { Below, Inside, Above };

Region region(double x, double centre, double half_width) {
    if (x < centre - half_width) return Region::Below;
    if (x > centre + half_width) return Region::Above;
    return Region::Inside;
}

std::size_t overshoots_1d(const std::vector<double>& xs, double centre, double half_width) {
    std::size_t count = 0;
    std::optional<Region> entered_from;
    for (std::size_t i = 1; i < xs.size(); ++i) {
        const Region prev = region(xs[i - 1], centre, half_width);
        const Region cur = region(xs[i], centre, half_width);
        if (prev == cur) continue;
        if (cur == Region::Inside) {
            entered_from = prev;
        } else if (prev == Region::Inside) {
            if (entered_from && *entered_from != cur) ++count;
            entered_from.reset();
        } else {
            ++count;  // jumped across the whole band in one step
        }
    }
    return count;
}

// s_0 followed by every recorded configuration. Trial stops recording at
// adjudication, so the last point is the final acquired configuration.
std::vector<CursorConfig> path_of(const TrialRecord& record) {
    std::vector<CursorConfig> pts{record.start};
    for (const auto& p : record.trajectory) pts.push_back(p.cursor);
    return pts;
}

std::vector<const TrialRecord*> successes(std::span<const TrialRecord> records) {
    std::vector<const TrialRecord*> out;
    for (const auto& r : records) {
        if (r.outcome == Outcome::Success) out.push_back(&r);
    }
    return out;
}

}  // namespace

std::size_t count_overshoots(const TrialRecord& record) {
    const auto pts = path_of(record);
    std::vector<double> rs;
    std::vector<double> phis;
    for (const auto& p : pts) {
        rs.push_back(p.r);
        phis.push_back(p.phi);
    }
    return overshoots_1d(rs, record.spec.target.r, record.spec.half_width) +
           overshoots_1d(phis, record.spec.target.phi, record.spec.half_width);
}

double completion_rate(std::span<const TrialRecord> records) {
    if (records.empty()) throw std::invalid_argument("completion rate needs at least one trial");
    return static_cast<double>(successes(records).size()) / static_cast<double>(records.size());
}

std::optional<double> overshoot(std::span<const TrialRecord> records) {
    const auto ok = successes(records);
    if (ok.empty()) return std::nullopt;
    std::size_t total = 0;
    for (const auto* r : ok) total += count_overshoots(*r);
    return static_cast<double>(total) / static_cast<double>(ok.size());
}

std::optional<double> path_efficiency(std::span<const TrialRecord> records, std::size_t* excluded) {
    double sum = 0.0;
    std::size_t used = 0;
    std::size_t skipped = 0;
    for (const auto* r : successes(records)) {
        const auto pts = path_of(*r);
        double length = 0.0;
        for (std::size_t i = 1; i < pts.size(); ++i) length += distance(pts[i], pts[i - 1]);
        if (!(length > 0.0)) {
            ++skipped;
            continue;
        }
        sum += 100.0 * distance(pts.front(), pts.back()) / length;
        ++used;
    }
    if (excluded) *excluded = skipped;
    if (used == 0) return std::nullopt;
    return sum / static_cast<double>(used);
}

std::optional<double> throughput(std::span<const TrialRecord> records) {
    const auto ok = successes(records);
    if (ok.empty()) return std::nullopt;
    double sum = 0.0;
    for (const auto* r : ok) {
        if (!(r->completion_s > 0.0)) throw std::invalid_argument("successful trial with non-positive time");
        const double d = distance(r->start, r->spec.target);
        sum += std::log2(d / kThroughputWidth + 1.0) / r->completion_s;
    }
    return sum / static_cast<double>(ok.size());
}

Metrics compute_metrics(std::span<const TrialRecord> records) {
    Metrics m;
    m.trials = records.size();
    m.successes = successes(records).size();
    m.cr = records.empty() ? 0.0 : completion_rate(records);
    m.ot = overshoot(records);
    m.pe = path_efficiency(records, &m.pe_excluded);
    m.tp = throughput(records);
    return m;
}

}  // namespace myo::flt
