#pragma once

// Nearest-axis classifier: one segment per active movement running from the Rest
// centroid to that movement's centroid in the LDA subspace.

#include <cstddef>
#include <deque>
#include <memory>
#include <optional>
#include <span>
#include <vector>

#include "myo/movement.hpp"
#include "myo/signal.hpp"
#include "myo/subspace.hpp"

namespace myo::classifier {

using subspace::Vector;

inline constexpr double kDefaultRestThreshold = 0.15;
inline constexpr double kDegenerateAxisEpsilon = 1e-9;

struct Axis {
    Movement movement = Movement::Rest;
    Vector tip;        // mu_i
    Vector direction;  // mu_i - mu_Rest
    double length_sq = 0.0;
};

class AxisSet {
public:
    AxisSet() = default;
    AxisSet(Vector anchor, std::vector<Axis> axes) : anchor_(std::move(anchor)), axes_(std::move(axes)) {}

    const Vector& anchor() const { return anchor_; }
    const std::vector<Axis>& axes() const { return axes_; }
    std::size_t size() const { return axes_.size(); }
    bool empty() const { return axes_.empty(); }
    const Axis& axis(Movement m) const;

    // L_i(t) = t (mu_i - mu_Rest) + mu_Rest
    Vector point(Movement m, double t) const;

private:
    Vector anchor_;
    std::vector<Axis> axes_;
};

struct Decision {
    Movement label = Movement::Rest;
    std::optional<Movement> winning_axis;
    double t_star = 0.0;
    double distance = 0.0;
    double margin = 0.0;  // +inf with a single axis

    bool operator==(const Decision&) const = default;
};

// Throws DegenerateAxis when an active centroid lies within epsilon of Rest.
AxisSet build_axes(const subspace::SubspaceModel& model, double epsilon = kDegenerateAxisEpsilon);

// Clamped orthogonal projection onto every segment; the closest segment wins
// (lowest movement id on ties) and Rest is reported when its t* < t_rest.
Decision classify(const AxisSet& axes, const Vector& y, double t_rest = kDefaultRestThreshold);

// Majority vote over the last m labels; ties go to the most recent tied label.
class MajorityVote {
public:
    explicit MajorityVote(std::size_t m) : m_(m == 0 ? 1 : m) {}
    Movement push(Movement label);
    void reset() { history_.clear(); }

private:
    std::size_t m_;
    std::deque<Movement> history_;
};

struct StreamOptions {
    double t_rest = kDefaultRestThreshold;
    std::size_t smoothing = 1;  // 1 = off
};

std::vector<Decision> decision_stream(const subspace::SubspaceModel& model, const AxisSet& axes,
                                      std::span<const signal::FeatureVector> features,
                                      const StreamOptions& options = {});

// A fitted model with its axes; immutable once built and shared by pointer.
struct Decoder {
    subspace::SubspaceModel model;
    AxisSet axes;

    static std::shared_ptr<const Decoder> build(subspace::SubspaceModel model);
};

}  // namespace myo::classifier
