#include "myo/classifier.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "myo/error.hpp"

namespace myo::classifier {

const Axis& AxisSet::axis(Movement m) const {
    for (const auto& a : axes_) {
        if (a.movement == m) return a;
    }
    throw std::out_of_range("no axis for '" + std::string(movement_name(m)) + "'");
}

Vector AxisSet::point(Movement m, double t) const {
    return t * axis(m).direction + anchor_;
}

AxisSet build_axes(const subspace::SubspaceModel& model, double epsilon) {
    if (!model.has(Movement::Rest)) throw std::invalid_argument("model has no Rest centroid");
    const Vector rest = model.centroid(Movement::Rest);
    std::vector<Axis> axes;
    for (Movement m : model.movements) {
        if (m == Movement::Rest) continue;
        Axis a;
        a.movement = m;
        a.tip = model.centroid(m);
        a.direction = a.tip - rest;
        a.length_sq = a.direction.squaredNorm();
        if (!(std::sqrt(a.length_sq) >= epsilon)) throw DegenerateAxis(m);
        axes.push_back(std::move(a));
    }
    if (axes.empty()) throw std::invalid_argument("model has no active movements");
    return AxisSet(rest, std::move(axes));
}

Decision classify(const AxisSet& axes, const Vector& y, double t_rest) {
    if (axes.empty()) throw std::invalid_argument("cannot classify with an empty axis set");
    if (y.size() != axes.anchor().size()) throw DimensionMismatch("query point dimension differs from subspace");

    const Vector offset = y - axes.anchor();
    double best = std::numeric_limits<double>::infinity();
    double runner_up = std::numeric_limits<double>::infinity();
    const Axis* winner = nullptr;
    double winner_t = 0.0;
    // Axes are stored in movement-id order, so strict < keeps the lowest id on ties.
    for (const auto& a : axes.axes()) {
        const double t = std::clamp(offset.dot(a.direction) / a.length_sq, 0.0, 1.0);
        const double dist = (offset - t * a.direction).norm();
        if (dist < best) {
            runner_up = best;
            best = dist;
            winner = &a;
            winner_t = t;
        } else if (dist < runner_up) {
            runner_up = dist;
        }
    }

    Decision d;
    d.winning_axis = winner->movement;
    d.t_star = winner_t;
    d.distance = best;
    d.margin = runner_up - best;
    d.label = winner_t < t_rest ? Movement::Rest : winner->movement;
    return d;
}

Movement MajorityVote::push(Movement label) {
    history_.push_back(label);
    if (history_.size() > m_) history_.pop_front();

    std::array<std::size_t, kMovementCount> counts{};
    for (Movement m : history_) ++counts[static_cast<std::size_t>(m)];
    const std::size_t top = *std::max_element(counts.begin(), counts.end());
    for (auto it = history_.rbegin(); it != history_.rend(); ++it) {
        if (counts[static_cast<std::size_t>(*it)] == top) return *it;
    }
    return label;
}

std::vector<Decision> decision_stream(const subspace::SubspaceModel& model, const AxisSet& axes,
                                      std::span<const signal::FeatureVector> features,
                                      const StreamOptions& options) {
    std::vector<Decision> out;
    out.reserve(features.size());
    MajorityVote vote(options.smoothing);
    for (const auto& f : features) {
        Decision d = classify(axes, subspace::project(model, f), options.t_rest);
        if (options.smoothing > 1) d.label = vote.push(d.label);
        out.push_back(d);
    }
    return out;
}

std::shared_ptr<const Decoder> Decoder::build(subspace::SubspaceModel model) {
    auto axes = build_axes(model);
    return std::make_shared<const Decoder>(Decoder{std::move(model), std::move(axes)});
}

}  // namespace myo::classifier
