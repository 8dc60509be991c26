#include "myo/synth.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <numbers>
#include <stdexcept>

#include "myo/error.hpp"
#include "myo/pipeline.hpp"

namespace myo::synth {

namespace {

constexpr int kLocations = 9;  // 3 x 3 board

void check_band(const Band& b, double rate) {
    if (!(b.low_hz > 0.0) || !(b.high_hz > b.low_hz) || !(b.high_hz < rate / 2.0)) {
        throw std::invalid_argument("empty band [" + std::to_string(b.low_hz) + ", " + std::to_string(b.high_hz) +
                                    "] Hz at " + std::to_string(rate) + " Hz sampling");
    }
}

}  // namespace

// ---------------------------------------------------------------------------
// Generator

Generator::Generator(std::vector<ClassProfile> profiles, std::uint64_t seed, GeneratorConfig config)
    : profiles_(std::move(profiles)), config_(config), rng_(seed) {
    if (profiles_.empty()) throw std::invalid_argument("generator needs at least one class profile");
    channels_ = profiles_.front().gains.size();
    if (channels_ == 0) throw std::invalid_argument("class profile has no channels");
    for (const auto& p : profiles_) {
        if (p.gains.size() != channels_) throw std::invalid_argument("class profiles disagree on channel count");
        for (double g : p.gains) {
            if (!std::isfinite(g)) throw std::invalid_argument("non-finite gain in " + std::string(movement_name(p.movement)));
        }
        if (!(p.sigma_within >= 0.0)) throw std::invalid_argument("negative within-class sigma");
        check_band(p.band, config_.sample_rate_hz);

        // RBJ band-pass (0 dB peak), rescaled to unit output variance for white input.
        const double f0 = std::sqrt(p.band.low_hz * p.band.high_hz);
        const double w0 = 2.0 * std::numbers::pi * f0 / config_.sample_rate_hz;
        const double bw = std::log2(p.band.high_hz / p.band.low_hz);
        const double alpha = std::sin(w0) * std::sinh(std::log(2.0) / 2.0 * bw * w0 / std::sin(w0));
        const double a0 = 1.0 + alpha;
        Filter f{alpha / a0, -alpha / a0, -2.0 * std::cos(w0) / a0, (1.0 - alpha) / a0, 1.0};
        double energy = 0.0;
        double x1 = 0, x2 = 0, y1 = 0, y2 = 0;
        for (int n = 0; n < 4096; ++n) {
            const double x = n == 0 ? 1.0 : 0.0;
            const double y = f.b0 * x + f.b2 * x2 - f.a1 * y1 - f.a2 * y2;
            x2 = x1;
            x1 = x;
            y2 = y1;
            y1 = y;
            energy += y * y;
        }
        f.gain = 1.0 / std::sqrt(energy);
        filters_.push_back(f);
    }
    rho_ = config_.jitter_tau_s > 0.0 ? std::exp(-1.0 / (config_.sample_rate_hz * config_.jitter_tau_s)) : 0.0;

    std::uniform_real_distribution<double> u(-1.0, 1.0);
    location_table_.assign(kLocations + 1, std::vector<double>(channels_, 1.0));
    for (int loc = 1; loc <= kLocations; ++loc) {
        for (std::size_t c = 0; c < channels_; ++c) location_table_[loc][c] = 1.0 + config_.location_spread * u(rng_);
    }
    state_.assign(channels_, ChannelState{});
    std::normal_distribution<double> z(0.0, 1.0);
    for (auto& s : state_) s.jitter = z(rng_);
}

bool Generator::has(Movement m) const {
    return std::any_of(profiles_.begin(), profiles_.end(), [&](const ClassProfile& p) { return p.movement == m; });
}

const ClassProfile& Generator::profile(Movement m) const {
    for (const auto& p : profiles_) {
        if (p.movement == m) return p;
    }
    throw std::invalid_argument("no profile for " + std::string(movement_name(m)));
}

void Generator::set_location(int location) {
    if (location < 1 || location > kLocations) throw std::invalid_argument("board location outside 1..9");
    location_ = location;
}

double Generator::location_gain(int location, std::size_t channel) const {
    return location_table_.at(static_cast<std::size_t>(location)).at(channel);
}

void Generator::emit(Movement m, std::size_t n, std::vector<signal::EmgSample>& out) {
    std::size_t idx = 0;
    while (profiles_[idx].movement != m) {
        if (++idx == profiles_.size()) throw std::invalid_argument("no profile for " + std::string(movement_name(m)));
    }
    const ClassProfile& p = profiles_[idx];
    const Filter& f = filters_[idx];
    const auto& loc = location_table_[static_cast<std::size_t>(location_)];
    const double innovation = std::sqrt(1.0 - rho_ * rho_);
    std::normal_distribution<double> z(0.0, 1.0);

    for (std::size_t k = 0; k < n; ++k) {
        const double t_min = static_cast<double>(emitted_) / config_.sample_rate_hz / 60.0;
        const double drift = 1.0 + p.drift_per_min * t_min;
        signal::EmgSample s;
        s.timestamp_ms = static_cast<double>(emitted_) * 1000.0 / config_.sample_rate_hz;
        s.channels.resize(channels_);
        for (std::size_t c = 0; c < channels_; ++c) {
            ChannelState& st = state_[c];
            st.jitter = rho_ * st.jitter + innovation * z(rng_);
            const double x = z(rng_);
            const double y = f.b0 * x + f.b2 * st.x2 - f.a1 * st.y1 - f.a2 * st.y2;
            st.x2 = st.x1;
            st.x1 = x;
            st.y2 = st.y1;
            st.y1 = y;
            const double amp = std::abs(p.gains[c] * drift * loc[c] + p.sigma_within * st.jitter);
            s.channels[c] = amp * f.gain * y + config_.noise_floor * z(rng_);
        }
        out.push_back(std::move(s));
        ++emitted_;
    }
}

std::vector<signal::EmgSample> Generator::emit(Movement m, std::size_t n) {
    std::vector<signal::EmgSample> out;
    out.reserve(n);
    emit(m, n, out);
    return out;
}

signal::EmgStream gen_signal(const ClassProfile& profile, double duration_s, std::uint64_t seed,
                             const GeneratorConfig& config) {
    if (!(duration_s > 0.0)) throw std::invalid_argument("duration must be positive");
    Generator gen({profile}, seed, config);
    signal::EmgStream stream;
    stream.sample_rate_hz = config.sample_rate_hz;
    const auto n = static_cast<std::size_t>(std::llround(duration_s * config.sample_rate_hz));
    gen.emit(profile.movement, n, stream.samples);
    return stream;
}

// ---------------------------------------------------------------------------
// Sweep geometry

std::vector<ClassProfile> profiles_for_level(const session::ProtocolStage& stage, double level,
                                             const SweepConfig& config) {
    if (config.channels == 0) throw std::invalid_argument("sweep needs at least one channel");
    // Sylvester-Hadamard rows over the next power of two; row 0 (all ones) is used last.
    const std::size_t order = std::bit_ceil(config.channels);
    std::vector<std::size_t> rows;
    for (std::size_t r = 1; r < order; ++r) rows.push_back(r);
    rows.push_back(0);

    std::vector<ClassProfile> out;
    std::size_t active = 0;
    for (Movement m : stage.movements) {
        ClassProfile p;
        p.movement = m;
        p.sigma_within = config.sigma;
        p.drift_per_min = config.drift_per_min;
        p.band = config.band;
        p.gains.assign(config.channels, 0.0);
        if (m != Movement::Rest) {
            if (active >= rows.size()) throw std::invalid_argument("more active movements than distinct channel patterns");
            const std::size_t row = rows[active++];
            for (std::size_t c = 0; c < config.channels; ++c) {
                const double h = (std::popcount(row & c) % 2 == 0) ? 1.0 : -1.0;
                p.gains[c] = level * config.sigma * (1.0 + 0.5 * h);
            }
        }
        out.push_back(std::move(p));
    }
    return out;
}

subspace::CalibrationSet calibrate(Generator& gen, const session::ProtocolStage& stage,
                                   const session::CollectionPlan& plan, const signal::FeatureConfig& features) {
    signal::FeatureConfig fc = features;
    fc.sample_rate_hz = gen.sample_rate_hz();
    const signal::WindowSpec spec{signal::kDefaultWindowMs, plan.step_ms};
    const std::size_t w = signal::samples_for(spec.window_ms, gen.sample_rate_hz());
    const std::size_t s = signal::samples_for(spec.step_ms, gen.sample_rate_hz());
    const std::size_t per = plan.samples_per_position();

    subspace::CalibrationSet cal;
    for (Movement m : stage.movements) {
        std::vector<signal::FeatureVector> vectors;
        for (int pos : plan.positions) {
            gen.set_location(pos);
            signal::EmgStream stream;
            stream.sample_rate_hz = gen.sample_rate_hz();
            gen.emit(m, w + (per - 1) * s, stream.samples);
            for (const auto& win : signal::window_stream(stream, spec)) vectors.push_back(signal::extract_features(win, fc));
        }
        cal.set_class(m, std::move(vectors));
    }
    return cal;
}

// ---------------------------------------------------------------------------
// Feature-level shortcut

FeatureSynth::FeatureSynth(std::vector<ClassProfile> profiles, std::uint64_t seed, GeneratorConfig config)
    : gen_(std::move(profiles), seed, config), rng_(seed ^ 0x9e3779b97f4a7c15ULL) {
    jitter_.assign(gen_.channels(), 0.0);
    // One decision step of AR(1) decay.
    rho_ = config.jitter_tau_s > 0.0 ? std::exp(-signal::kDefaultStepMs / 1000.0 / config.jitter_tau_s) : 0.0;
}

signal::FeatureVector FeatureSynth::next(Movement m) {
    const ClassProfile& p = gen_.profile(m);
    std::normal_distribution<double> z(0.0, 1.0);
    const double innovation = std::sqrt(1.0 - rho_ * rho_);
    signal::FeatureVector v;
    v.values.resize(gen_.channels() * signal::kFeaturesPerChannel);
    for (std::size_t c = 0; c < gen_.channels(); ++c) {
        jitter_[c] = rho_ * jitter_[c] + innovation * z(rng_);
        const double amp = std::abs(p.gains[c] * gen_.location_gain(location_, c) + p.sigma_within * jitter_[c]);
        const double level = std::hypot(amp, 0.002);
        const double mav = level * std::sqrt(2.0 / std::numbers::pi) * (1.0 + 0.12 * z(rng_));
        v.values[signal::feature_index(c, signal::Feature::MeanAbsoluteValue)] = mav;
        v.values[signal::feature_index(c, signal::Feature::WaveformLength)] = mav * 40.0 * (1.0 + 0.08 * z(rng_));
        v.values[signal::feature_index(c, signal::Feature::ZeroCrossings)] = std::round(16.0 + 2.5 * z(rng_));
        v.values[signal::feature_index(c, signal::Feature::SlopeSignChanges)] = std::round(20.0 + 2.5 * z(rng_));
        v.values[signal::feature_index(c, signal::Feature::MeanFrequency)] = 45.0 + 4.0 * z(rng_);
        v.values[signal::feature_index(c, signal::Feature::MedianFrequency)] = 42.0 + 5.0 * z(rng_);
    }
    v.label = m;
    return v;
}

subspace::CalibrationSet calibrate_features(FeatureSynth& synth, const session::ProtocolStage& stage,
                                            const session::CollectionPlan& plan) {
    subspace::CalibrationSet cal;
    for (Movement m : stage.movements) {
        std::vector<signal::FeatureVector> vectors;
        for (int pos : plan.positions) {
            synth.set_location(pos);
            for (std::size_t i = 0; i < plan.samples_per_position(); ++i) vectors.push_back(synth.next(m));
        }
        cal.set_class(m, std::move(vectors));
    }
    return cal;
}

std::vector<SweepLevel> separability_sweep(const SweepConfig& config, std::uint64_t seed,
                                           const session::CollectionPlan& plan) {
    if (config.levels.size() < 2) throw std::invalid_argument("a sweep needs at least 2 levels");
    const auto stage = session::plan_session(config.session_index);
    std::vector<SweepLevel> out;
    for (double level : config.levels) {
        SweepLevel l;
        l.level = level;
        l.profiles = profiles_for_level(stage, level, config);
        Generator gen(l.profiles, seed, config.generator);
        l.calibration = calibrate(gen, stage, plan);
        out.push_back(std::move(l));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Agent

void AgentPolicy::validate() const {
    if (!(epsilon >= 0.0 && epsilon <= 1.0)) throw std::invalid_argument("agent error rate must lie in [0, 1]");
    if (!(tolerance >= 0.0)) throw std::invalid_argument("agent tolerance must be non-negative");
}

Agent::Agent(AgentPolicy policy, const flt::FltConfig& flt, std::vector<Movement> available, std::uint64_t seed)
    : policy_(policy), flt_(flt), rng_(seed) {
    policy_.validate();
    lead_ = static_cast<double>(policy_.lead_steps.value_or(0));
    for (Movement m : available) {
        if (m != Movement::Rest) available_.push_back(m);
    }
}

void Agent::reset(const flt::TargetSpec& target) {
    target_ = target;
    seen_.clear();
    last_ = Movement::Rest;
    backed_up_ = false;
}

Agent::Intent Agent::seek(const flt::CursorConfig& c) const {
    double vr = 0.0;
    double vphi = 0.0;
    if (seen_.size() >= 2 + policy_.reaction_delay) {
        const auto& prev = seen_[seen_.size() - 2 - policy_.reaction_delay];
        vr = c.r - prev.r;
        vphi = c.phi - prev.phi;
    }
    // While moving toward the target, stop as soon as stopping now (with the
    // anticipated lag) lands no farther away than stopping one step later.
    const double lead = lead_;
    const auto done = [&](double e, double v) {
        if (std::abs(e) <= policy_.tolerance + 1e-9) return true;  // cursor steps accumulate rounding
        if (v * e >= 0.0) return false;
        return std::abs(e + lead * v) <= std::abs(e + (lead + 1.0) * v);
    };
    const double er = c.r - target_.target.r;
    const double ephi = c.phi - target_.target.phi;
    const bool r_done = done(er, vr);
    const bool phi_done = done(ephi, vphi);
    if (r_done && phi_done) return {Movement::Rest, false};

    const bool right = flt_.handedness == Handedness::Right;
    const bool use_r = !r_done && (phi_done || std::abs(er) >= std::abs(ephi));
    const double e = use_r ? er : ephi;
    const double v = use_r ? vr : vphi;
    const double step = (use_r ? flt_.aperture_rate : flt_.orientation_rate) * flt_.step_s();
    // From standstill the shortest burst still travels (1 + lead) steps; if that
    // would overshoot the tolerance, back off first to make room for the approach.
    const bool backup = v == 0.0 && std::abs(e) < step * (1.0 + lead) - policy_.tolerance;
    const bool decrease = (e > 0.0) != backup;
    if (use_r) return {decrease ? target_.gesture : Movement::HandOpen, backup};
    return {decrease == right ? Movement::WristPronate : Movement::WristSupinate, backup};
}

Movement Agent::intend(const flt::CursorConfig& cursor) {
    seen_.push_back(cursor);
    const std::size_t at = seen_.size() > policy_.reaction_delay ? seen_.size() - 1 - policy_.reaction_delay : 0;
    Intent next = seek(seen_[at]);
    // After deciding to stop (or a single back-off step), let the cursor coast to
    // rest before correcting again.
    if (backed_up_) {
        next = {Movement::Rest, false};
    } else if (last_ == Movement::Rest && at >= 1) {
        const auto& c = seen_[at];
        const auto& p = seen_[at - 1];
        if (c.r != p.r || c.phi != p.phi) next = {Movement::Rest, false};
    }
    last_ = next.movement;
    backed_up_ = next.backup;
    const Movement wanted = next.movement;
    if (policy_.epsilon > 0.0) {
        std::uniform_real_distribution<double> u(0.0, 1.0);
        if (u(rng_) < policy_.epsilon) {
            std::vector<Movement> wrong;
            for (Movement m : available_) {
                if (m != wanted) wrong.push_back(m);
            }
            if (!wrong.empty()) {
                std::uniform_int_distribution<std::size_t> pick(0, wrong.size() - 1);
                return wrong[pick(rng_)];
            }
        }
    }
    return wanted;
}

// ---------------------------------------------------------------------------
// Closed loop

namespace {

// Drives one FLT block; `decide(intent)` returns the decoded label for one step.
template <class Decide, class Locate>
AgentRun run_block(const AgentPolicy& policy, const session::ProtocolStage& stage, const flt::FltConfig& flt,
                   std::uint64_t seed, const RunOptions& options, std::size_t lag, Decide&& decide, Locate&& locate) {
    const auto targets = flt::sample_targets(stage, flt, seed);
    AgentPolicy tuned = policy;
    if (!tuned.lead_steps) tuned.lead_steps = lag;
    Agent agent(tuned, flt, stage.movements, seed ^ 0xa5a5a5a5a5a5a5a5ULL);
    AgentRun run;
    for (std::size_t i = 0; i < targets.size(); ++i) {
        locate(targets[i].location);
        for (std::size_t k = 0; k < options.rest_steps_between_trials; ++k) decide(Movement::Rest);
        flt::Trial trial(i, targets[i], flt);
        agent.reset(targets[i]);
        while (!trial.finished()) {
            trial.step(decide(agent.intend(trial.cursor())));
            ++run.decisions;
        }
        run.records.push_back(trial.record());
    }
    run.metrics = flt::compute_metrics(run.records);
    return run;
}

std::shared_ptr<const classifier::Decoder> borrow(const classifier::Decoder& d) {
    return std::shared_ptr<const classifier::Decoder>(std::shared_ptr<const classifier::Decoder>(), &d);
}

}  // namespace

AgentRun run_agent(const AgentPolicy& policy, const session::ProtocolStage& stage, const classifier::Decoder& decoder,
                   Generator& gen, const flt::FltConfig& flt, std::uint64_t seed, const RunOptions& options) {
    const signal::WindowSpec spec{signal::kDefaultWindowMs, flt.step_ms};
    Pipeline pipe(gen.channels(), gen.sample_rate_hz(), spec, options.features);
    pipe.set_decoder(borrow(decoder), options.decode);
    const std::size_t step = signal::samples_for(flt.step_ms, gen.sample_rate_hz());
    std::vector<signal::EmgSample> buf;

    Movement last = Movement::Rest;
    auto decide = [&](Movement intent) {
        buf.clear();
        gen.emit(intent, step, buf);
        for (const auto& s : buf) {
            if (auto out = pipe.push(s.channels)) last = out->label;
        }
        return last;
    };
    // Fill the first window before anything is scored.
    const std::size_t fill = signal::samples_for(spec.window_ms, gen.sample_rate_hz()) / step;
    for (std::size_t k = 0; k < fill; ++k) decide(Movement::Rest);
    // A burst stays visible until the window has slid past it.
    const std::size_t lag = fill - 1 + options.decode.smoothing / 2;
    return run_block(policy, stage, flt, seed, options, lag, decide, [&](int loc) { gen.set_location(loc); });
}

AgentRun run_agent(const AgentPolicy& policy, const session::ProtocolStage& stage, const classifier::Decoder& decoder,
                   FeatureSynth& synth, const flt::FltConfig& flt, std::uint64_t seed, const RunOptions& options) {
    classifier::MajorityVote vote(options.decode.smoothing);
    auto decide = [&](Movement intent) {
        const auto y = subspace::project(decoder.model, synth.next(intent));
        return vote.push(classifier::classify(decoder.axes, y, options.decode.t_rest).label);
    };
    return run_block(policy, stage, flt, seed, options, options.decode.smoothing / 2, decide,
                     [&](int loc) { synth.set_location(loc); });
}

double holdout_accuracy(const classifier::Decoder& decoder, const subspace::CalibrationSet& holdout, double t_rest) {
    std::size_t hits = 0;
    std::size_t total = 0;
    for (const auto& cls : holdout.classes()) {
        for (const auto& v : cls.samples) {
            const auto d = classifier::classify(decoder.axes, subspace::project(decoder.model, v), t_rest);
            hits += d.label == cls.movement;
            ++total;
        }
    }
    if (total == 0) throw std::invalid_argument("empty holdout set");
    return static_cast<double>(hits) / static_cast<double>(total);
}

std::vector<StudyPoint> separability_study(const StudyConfig& config) {
    const auto stage = session::plan_session(config.sweep.session_index);
    std::vector<StudyPoint> out;
    for (double level : config.sweep.levels) {
        StudyPoint pt;
        pt.level = level;
        const auto profiles = profiles_for_level(stage, level, config.sweep);
        for (std::uint64_t seed : config.seeds) {
            std::shared_ptr<const classifier::Decoder> decoder;
            double cr = 0.0;
            double acc = 0.0;
            if (config.run.feature_level) {
                FeatureSynth synth(profiles, seed, config.sweep.generator);
                const auto cal = calibrate_features(synth, stage);
                try {
                    decoder = classifier::Decoder::build(subspace::fit_lda(cal));
                } catch (const Error&) {
                }
                if (decoder) {
                    acc = holdout_accuracy(*decoder, calibrate_features(synth, stage), config.run.decode.t_rest);
                    cr = run_agent(config.policy, stage, *decoder, synth, config.flt, seed, config.run).metrics.cr;
                }
            } else {
                Generator gen(profiles, seed, config.sweep.generator);
                const auto cal = calibrate(gen, stage, {}, config.run.features);
                try {
                    decoder = classifier::Decoder::build(subspace::fit_lda(cal));
                } catch (const Error&) {
                }
                if (decoder) {
                    acc = holdout_accuracy(*decoder, calibrate(gen, stage, {}, config.run.features),
                                           config.run.decode.t_rest);
                    cr = run_agent(config.policy, stage, *decoder, gen, config.flt, seed, config.run).metrics.cr;
                }
            }
            pt.cr.push_back(cr);
            pt.accuracy.push_back(acc);
        }
        double sum = 0.0;
        for (double c : pt.cr) sum += c;
        pt.mean_cr = pt.cr.empty() ? 0.0 : sum / static_cast<double>(pt.cr.size());
        out.push_back(std::move(pt));
    }
    return out;
}

}  // namespace myo::synth
