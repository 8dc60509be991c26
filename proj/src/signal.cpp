#include "myo/signal.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <map>
#include <numbers>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include "myo/error.hpp"

namespace myo::signal {

EmgWindow::EmgWindow(std::size_t start_index, double sample_rate_hz, std::size_t channels,
                     std::size_t length)
    : start_index_(start_index),
      sample_rate_hz_(sample_rate_hz),
      channels_(channels),
      length_(length),
      data_(channels * length, 0.0) {}

std::size_t samples_for(int ms, double sample_rate_hz) {
    if (ms <= 0 || !(sample_rate_hz > 0)) {
        throw std::invalid_argument("window durations and sample rate must be positive");
    }
    const double exact = ms * sample_rate_hz / 1000.0;
    const double rounded = std::round(exact);
    if (std::abs(exact - rounded) > 1e-9) {
        throw std::invalid_argument(std::to_string(ms) + " ms is not a whole number of samples at " +
                                    std::to_string(sample_rate_hz) + " Hz");
    }
    return static_cast<std::size_t>(rounded);
}

namespace {

void check_spec(const WindowSpec& spec) {
    if (spec.step_ms <= 0 || spec.window_ms <= 0 || spec.window_ms % spec.step_ms != 0) {
        throw std::invalid_argument("window_ms must be a positive multiple of step_ms");
    }
}

}  // namespace

std::vector<EmgWindow> window_stream(const EmgStream& stream, const WindowSpec& spec) {
    check_spec(spec);
    const std::size_t w = samples_for(spec.window_ms, stream.sample_rate_hz);
    const std::size_t s = samples_for(spec.step_ms, stream.sample_rate_hz);
    const std::size_t channels = stream.channel_count();
    const auto& samples = stream.samples;

    for (std::size_t i = 0; i < samples.size(); ++i) {
        if (samples[i].channels.size() != channels) {
            throw StreamFormatError("sample " + std::to_string(i) + " has " +
                                    std::to_string(samples[i].channels.size()) + " channels, expected " +
                                    std::to_string(channels));
        }
        if (i > 0 && !(samples[i].timestamp_ms > samples[i - 1].timestamp_ms)) {
            throw StreamFormatError("timestamps not strictly increasing at sample " + std::to_string(i));
        }
    }

    std::vector<EmgWindow> out;
    if (samples.size() < w) return out;
    out.reserve((samples.size() - w) / s + 1);
    for (std::size_t start = 0; start + w <= samples.size(); start += s) {
        EmgWindow win(start, stream.sample_rate_hz, channels, w);
        for (std::size_t i = 0; i < w; ++i) {
            for (std::size_t c = 0; c < channels; ++c) win.at(i, c) = samples[start + i].channels[c];
        }
        out.push_back(std::move(win));
    }
    return out;
}

WindowAssembler::WindowAssembler(std::size_t channels, double sample_rate_hz, const WindowSpec& spec)
    : channels_(channels), rate_(sample_rate_hz) {
    check_spec(spec);
    window_len_ = samples_for(spec.window_ms, sample_rate_hz);
    step_len_ = samples_for(spec.step_ms, sample_rate_hz);
    ring_.assign(window_len_ * channels_, 0.0);
}

std::optional<EmgWindow> WindowAssembler::push(std::span<const double> sample) {
    if (sample.size() != channels_) {
        throw StreamFormatError("sample has " + std::to_string(sample.size()) + " channels, expected " +
                                std::to_string(channels_));
    }
    const std::size_t slot = seen_ % window_len_;
    std::copy(sample.begin(), sample.end(), ring_.begin() + static_cast<std::ptrdiff_t>(slot * channels_));
    ++seen_;
    if (seen_ < window_len_ || (seen_ - window_len_) % step_len_ != 0) return std::nullopt;

    const std::size_t start = seen_ - window_len_;
    EmgWindow win(start, rate_, channels_, window_len_);
    for (std::size_t i = 0; i < window_len_; ++i) {
        const std::size_t src = (start + i) % window_len_;
        for (std::size_t c = 0; c < channels_; ++c) win.at(i, c) = ring_[src * channels_ + c];
    }
    return win;
}

double mean_absolute_value(std::span<const double> x) {
    if (x.empty()) return 0.0;
    double sum = 0.0;
    for (double v : x) sum += std::abs(v);
    return sum / static_cast<double>(x.size());
}

double waveform_length(std::span<const double> x) {
    double sum = 0.0;
    for (std::size_t i = 1; i < x.size(); ++i) sum += std::abs(x[i] - x[i - 1]);
    return sum;
}

int zero_crossings(std::span<const double> x, double threshold) {
    int count = 0;
    for (std::size_t i = 0; i + 1 < x.size(); ++i) {
        if (x[i] * x[i + 1] < 0.0 && std::abs(x[i] - x[i + 1]) >= threshold) ++count;
    }
    return count;
}

int slope_sign_changes(std::span<const double> x, double threshold) {
    int count = 0;
    for (std::size_t i = 1; i + 1 < x.size(); ++i) {
        const double back = x[i] - x[i - 1];
        const double fwd = x[i] - x[i + 1];
        if (back * fwd > 0.0 && (std::abs(back) >= threshold || std::abs(fwd) >= threshold)) ++count;
    }
    return count;
}

namespace {

struct Twiddles {
    std::vector<double> cos;
    std::vector<double> sin;
};

// cos/sin of 2*pi*m/N for m in [0, N)
const Twiddles& twiddles(std::size_t n) {
    thread_local std::map<std::size_t, Twiddles> cache;
    auto it = cache.find(n);
    if (it != cache.end()) return it->second;
    Twiddles t;
    t.cos.resize(n);
    t.sin.resize(n);
    for (std::size_t m = 0; m < n; ++m) {
        const double angle = 2.0 * std::numbers::pi * static_cast<double>(m) / static_cast<double>(n);
        t.cos[m] = std::cos(angle);
        t.sin[m] = std::sin(angle);
    }
    return cache.emplace(n, std::move(t)).first->second;
}

}  // namespace

SpectralFeatures spectral_features(std::span<const double> x, double sample_rate_hz) {
    const std::size_t n = x.size();
    if (n < 2) return {};
    double mean = 0.0;
    for (double v : x) mean += v;
    mean /= static_cast<double>(n);

    const Twiddles& tw = twiddles(n);
    const std::size_t bins = n / 2 + 1;
    std::vector<double> power(bins, 0.0);
    double total = 0.0;
    double weighted = 0.0;
    for (std::size_t k = 0; k < bins; ++k) {
        double re = 0.0;
        double im = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double y = x[i] - mean;
            const std::size_t m = (k * i) % n;
            re += y * tw.cos[m];
            im -= y * tw.sin[m];
        }
        power[k] = re * re + im * im;
        total += power[k];
        weighted += power[k] * (static_cast<double>(k) * sample_rate_hz / static_cast<double>(n));
    }
    if (!(total > 0.0)) return {};

    SpectralFeatures out;
    out.mean_hz = weighted / total;
    double cumulative = 0.0;
    for (std::size_t k = 0; k < bins; ++k) {
        cumulative += power[k];
        if (cumulative >= 0.5 * total) {
            out.median_hz = static_cast<double>(k) * sample_rate_hz / static_cast<double>(n);
            break;
        }
    }
    return out;
}

FeatureVector extract_features(const EmgWindow& window, const FeatureConfig& config) {
    FeatureVector fv;
    fv.values.resize(window.channels() * kFeaturesPerChannel);
    for (std::size_t c = 0; c < window.channels(); ++c) {
        const auto x = window.channel(c);
        const SpectralFeatures spec = spectral_features(x, config.sample_rate_hz);
        fv.values[feature_index(c, Feature::MeanAbsoluteValue)] = mean_absolute_value(x);
        fv.values[feature_index(c, Feature::WaveformLength)] = waveform_length(x);
        fv.values[feature_index(c, Feature::ZeroCrossings)] = zero_crossings(x, config.zc_threshold);
        fv.values[feature_index(c, Feature::SlopeSignChanges)] = slope_sign_changes(x, config.ssc_threshold);
        fv.values[feature_index(c, Feature::MeanFrequency)] = spec.mean_hz;
        fv.values[feature_index(c, Feature::MedianFrequency)] = spec.median_hz;
    }
    return fv;
}

// ---------------------------------------------------------------------------
// emg/v1 files

namespace {

bool parse_double(std::string_view text, double& out) {
    while (!text.empty() && (text.front() == ' ' || text.front() == '\t')) text.remove_prefix(1);
    while (!text.empty() && (text.back() == ' ' || text.back() == '\t' || text.back() == '\r')) {
        text.remove_suffix(1);
    }
    if (text.empty()) return false;
    if (text.front() == '+') text.remove_prefix(1);
    const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), out);
    return ec == std::errc() && ptr == text.data() + text.size() && std::isfinite(out);
}

}  // namespace

EmgStream read_emg(std::istream& in, const std::string& source_name) {
    std::string line;
    std::size_t line_no = 1;
    if (!std::getline(in, line)) throw ParseError(source_name, 1, "missing emg/v1 header");
    if (!line.empty() && line.back() == '\r') line.pop_back();

    std::istringstream header(line);
    std::string magic;
    header >> magic;
    if (magic != "emg/v1") throw ParseError(source_name, 1, "expected 'emg/v1' header, got '" + magic + "'");
    long channels = -1;
    double rate = -1.0;
    std::string kv;
    while (header >> kv) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos) throw ParseError(source_name, 1, "malformed header field '" + kv + "'");
        const std::string key = kv.substr(0, eq);
        const std::string value = kv.substr(eq + 1);
        double parsed = 0.0;
        if (!parse_double(value, parsed)) throw ParseError(source_name, 1, "bad value in '" + kv + "'");
        if (key == "channels") {
            channels = static_cast<long>(parsed);
            if (parsed != static_cast<double>(channels) || channels <= 0) {
                throw ParseError(source_name, 1, "channels must be a positive integer");
            }
        } else if (key == "rate") {
            if (!(parsed > 0)) throw ParseError(source_name, 1, "rate must be positive");
            rate = parsed;
        } else {
            throw ParseError(source_name, 1, "unknown header field '" + key + "'");
        }
    }
    if (channels < 0 || rate < 0) throw ParseError(source_name, 1, "header needs channels= and rate=");

    EmgStream stream;
    stream.sample_rate_hz = rate;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        EmgSample sample;
        sample.channels.reserve(static_cast<std::size_t>(channels));
        std::string_view rest(line);
        while (true) {
            const auto comma = rest.find(',');
            double v = 0.0;
            if (!parse_double(rest.substr(0, comma), v)) {
                throw ParseError(source_name, line_no, "invalid amplitude");
            }
            sample.channels.push_back(v);
            if (comma == std::string_view::npos) break;
            rest.remove_prefix(comma + 1);
        }
        if (sample.channels.size() != static_cast<std::size_t>(channels)) {
            throw ParseError(source_name, line_no,
                             "expected " + std::to_string(channels) + " channels, got " +
                                 std::to_string(sample.channels.size()));
        }
        sample.timestamp_ms = static_cast<double>(stream.samples.size()) * 1000.0 / rate;
        stream.samples.push_back(std::move(sample));
    }
    return stream;
}

EmgStream read_emg_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError(path, 0, "cannot open file");
    return read_emg(in, path);
}

namespace {

void append_double(std::string& out, double v) {
    char buf[32];
    const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    out.append(buf, ptr);
}

}  // namespace

void write_emg(std::ostream& out, const EmgStream& stream) {
    std::string header = "emg/v1 channels=" + std::to_string(stream.channel_count()) + " rate=";
    append_double(header, stream.sample_rate_hz);
    out << header << '\n';
    std::string line;
    for (const auto& s : stream.samples) {
        line.clear();
        for (std::size_t c = 0; c < s.channels.size(); ++c) {
            if (c) line.push_back(',');
            append_double(line, s.channels[c]);
        }
        line.push_back('\n');
        out << line;
    }
}

void write_emg_file(const std::string& path, const EmgStream& stream) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write " + path);
    write_emg(out, stream);
}

}  // namespace myo::signal
