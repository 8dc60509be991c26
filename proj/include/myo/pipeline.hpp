#pragma once

// Live decoding chain: samples -> windows -> features -> subspace -> decision.

#include <memory>
#include <optional>
#include <span>

#include "myo/classifier.hpp"
#include "myo/signal.hpp"

namespace myo {

struct PipelineOutput {
    signal::FeatureVector features;
    // Present only when a decoder is installed.
    std::optional<subspace::Vector> projected;
    std::optional<classifier::Decision> raw;
    Movement label = Movement::Rest;  // after majority smoothing
};

class Pipeline {
public:
    Pipeline(std::size_t channels, double sample_rate_hz, const signal::WindowSpec& window = {},
             const signal::FeatureConfig& features = {});

    // Swapping the decoder keeps the window buffer but restarts the vote history.
    void set_decoder(std::shared_ptr<const classifier::Decoder> decoder, const classifier::StreamOptions& options = {});
    const std::shared_ptr<const classifier::Decoder>& decoder() const { return decoder_; }

    std::optional<PipelineOutput> push(std::span<const double> sample);

private:
    signal::WindowAssembler assembler_;
    signal::FeatureConfig feature_config_;
    std::shared_ptr<const classifier::Decoder> decoder_;
    classifier::StreamOptions options_;
    classifier::MajorityVote vote_{1};
};

}  // namespace myo
