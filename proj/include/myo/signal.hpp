#pragma once

// Raw EMG streams, sliding windows and per-channel feature extraction.

#include <cstddef>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "myo/movement.hpp"

namespace myo::signal {

inline constexpr int kDefaultSampleRateHz = 200;
inline constexpr int kDefaultChannels = 8;
inline constexpr int kDefaultWindowMs = 200;
inline constexpr int kDefaultStepMs = 50;

struct EmgSample {
    std::vector<double> channels;
    double timestamp_ms = 0.0;
};

struct EmgStream {
    double sample_rate_hz = kDefaultSampleRateHz;
    std::vector<EmgSample> samples;

    std::size_t channel_count() const { return samples.empty() ? 0 : samples.front().channels.size(); }
};

struct WindowSpec {
    int window_ms = kDefaultWindowMs;
    int step_ms = kDefaultStepMs;
};

// W consecutive samples, stored channel-major: data[c * length + i].
class EmgWindow {
public:
    EmgWindow() = default;
    EmgWindow(std::size_t start_index, double sample_rate_hz, std::size_t channels, std::size_t length);

    std::size_t start_index() const { return start_index_; }
    double sample_rate_hz() const { return sample_rate_hz_; }
    std::size_t channels() const { return channels_; }
    std::size_t length() const { return length_; }

    std::span<const double> channel(std::size_t c) const {
        return {data_.data() + c * length_, length_};
    }
    double& at(std::size_t sample, std::size_t c) { return data_[c * length_ + sample]; }
    double at(std::size_t sample, std::size_t c) const { return data_[c * length_ + sample]; }

    bool operator==(const EmgWindow&) const = default;

private:
    std::size_t start_index_ = 0;
    double sample_rate_hz_ = kDefaultSampleRateHz;
    std::size_t channels_ = 0;
    std::size_t length_ = 0;
    std::vector<double> data_;
};

// Number of samples covered by `ms` at `rate`; throws std::invalid_argument unless exact.
std::size_t samples_for(int ms, double sample_rate_hz);

// Splits a recorded stream into overlapping windows. The k-th window starts at
// k * step; a partial trailing window is dropped. Throws StreamFormatError on a
// channel-count change or non-increasing timestamps.
std::vector<EmgWindow> window_stream(const EmgStream& stream, const WindowSpec& spec = {});

// Incremental equivalent of window_stream for live input.
class WindowAssembler {
public:
    WindowAssembler(std::size_t channels, double sample_rate_hz, const WindowSpec& spec = {});

    // Returns a window whenever the pushed sample completes one.
    std::optional<EmgWindow> push(std::span<const double> sample);

    std::size_t window_length() const { return window_len_; }
    std::size_t step_length() const { return step_len_; }
    std::size_t samples_seen() const { return seen_; }

private:
    std::size_t channels_;
    double rate_;
    std::size_t window_len_;
    std::size_t step_len_;
    std::size_t seen_ = 0;
    std::vector<double> ring_;  // window_len_ x channels_, sample-major
};

enum class Feature : int {
    MeanAbsoluteValue = 0,
    WaveformLength,
    ZeroCrossings,
    SlopeSignChanges,
    MeanFrequency,
    MedianFrequency,
};

inline constexpr std::size_t kFeaturesPerChannel = 6;

struct FeatureConfig {
    double sample_rate_hz = kDefaultSampleRateHz;
    double zc_threshold = 0.0;
    double ssc_threshold = 0.0;
};

struct FeatureVector {
    std::vector<double> values;
    std::optional<Movement> label;

    std::size_t dim() const { return values.size(); }
    bool operator==(const FeatureVector&) const = default;
};

inline std::size_t feature_index(std::size_t channel, Feature f) {
    return channel * kFeaturesPerChannel + static_cast<std::size_t>(f);
}

// Channel-major concatenation of {MAV, WL, ZC, SSC, MNF, MDF} per channel.
FeatureVector extract_features(const EmgWindow& window, const FeatureConfig& config = {});

// Single-channel helpers, exposed for tests and the synthetic generator.
double mean_absolute_value(std::span<const double> x);
double waveform_length(std::span<const double> x);
int zero_crossings(std::span<const double> x, double threshold);
int slope_sign_changes(std::span<const double> x, double threshold);

struct SpectralFeatures {
    double mean_hz = 0.0;
    double median_hz = 0.0;
};
// One-sided power spectrum of the mean-removed signal (rectangular window).
// Both values are 0 when the spectrum carries no power.
SpectralFeatures spectral_features(std::span<const double> x, double sample_rate_hz);

// emg/v1 text format: header `emg/v1 channels=<C> rate=<Hz>`, then one sample per
// line as comma-separated amplitudes. Timestamps are implicit (index / rate).
EmgStream read_emg(std::istream& in, const std::string& source_name = "<stream>");
EmgStream read_emg_file(const std::string& path);
void write_emg(std::ostream& out, const EmgStream& stream);
void write_emg_file(const std::string& path, const EmgStream& stream);

}  // namespace myo::signal
