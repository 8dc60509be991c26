#include "myo/pipeline.hpp"

namespace myo {

Pipeline::Pipeline(std::size_t channels, double sample_rate_hz, const signal::WindowSpec& window,
                   const signal::FeatureConfig& features)
    : assembler_(channels, sample_rate_hz, window), feature_config_(features) {
    feature_config_.sample_rate_hz = sample_rate_hz;
}

void Pipeline::set_decoder(std::shared_ptr<const classifier::Decoder> decoder, const classifier::StreamOptions& options) {
    decoder_ = std::move(decoder);
    options_ = options;
    vote_ = classifier::MajorityVote(options.smoothing);
}

std::optional<PipelineOutput> Pipeline::push(std::span<const double> sample) {
    auto window = assembler_.push(sample);
    if (!window) return std::nullopt;
    PipelineOutput out;
    out.features = signal::extract_features(*window, feature_config_);
    if (decoder_) {
        out.projected = subspace::project(decoder_->model, out.features);
        out.raw = classifier::classify(decoder_->axes, *out.projected, options_.t_rest);
        out.label = vote_.push(out.raw->label);
    }
    return out;
}

}  // namespace myo
