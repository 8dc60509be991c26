#pragma once

// LDA subspace fitting and projection, including the 3-axis Reviewer view.

#include <array>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "myo/movement.hpp"
#include "myo/signal.hpp"

namespace myo::subspace {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using Point3 = std::array<double, 3>;

struct CalibrationClass {
    Movement movement = Movement::Rest;
    std::vector<signal::FeatureVector> samples;

    bool operator==(const CalibrationClass&) const = default;
};

// Labeled calibration data, one entry per movement, kept in movement-id order.
class CalibrationSet {
public:
    CalibrationSet() = default;

    // Inserts or replaces the samples of one movement.
    void set_class(Movement m, std::vector<signal::FeatureVector> samples);
    bool has(Movement m) const;
    const CalibrationClass& at(Movement m) const;

    const std::vector<CalibrationClass>& classes() const { return classes_; }
    std::size_t class_count() const { return classes_.size(); }
    std::size_t dim() const;
    std::size_t total_samples() const;

    // Throws std::invalid_argument naming the first violated requirement:
    // Rest present, >= 2 classes, >= 2 samples per class, common finite dimension.
    void validate() const;

    // FNV-1a over movement ids and the raw bits of every value.
    std::uint64_t hash() const;

    bool operator==(const CalibrationSet&) const = default;

private:
    std::vector<CalibrationClass> classes_;
};

struct Scatter {
    Vector mean;     // global mean
    Matrix within;   // pooled within-class scatter
    Matrix between;  // sum_i n_i (mu_i - mu)(mu_i - mu)^T
};

// Scatter of the calibration data after mapping every vector through
// x -> (x - offset) ./ scale. Passing offset 0 and scale 1 gives raw scatter.
Scatter scatter_matrices(const CalibrationSet& cal, const Vector& offset, const Vector& scale);
Scatter scatter_matrices(const CalibrationSet& cal);

struct SubspaceModel {
    std::size_t d = 0;
    std::size_t p = 0;
    double lambda = 0.0;
    Vector mean;          // global mean of the calibration features
    Vector scale;         // per-feature pooled within-class std (1 where zero)
    // d x p, in standardized feature coordinates. Columns have unit variance under
    // the pooled within-class covariance, so subspace distances are in
    // within-class standard deviations.
    Matrix basis;
    Vector eigenvalues;   // p, non-increasing
    std::vector<Movement> movements;
    Matrix centroids;     // k x p, row order follows `movements`
    bool degenerate = false;
    std::uint64_t provenance = 0;

    bool has(Movement m) const;
    Vector centroid(Movement m) const;
    // Basis mapped back to raw feature units: diag(1/scale) * basis.
    Matrix effective_basis() const;

    bool operator==(const SubspaceModel& other) const;
};

// 1e-3 * trace(S_w) / d over the standardized features.
double default_regularization(const CalibrationSet& cal);

// Fits the top-p discriminant directions of (S_w + lambda I)^-1 S_b, p = min(k-1, d).
// Each column's largest-magnitude entry is positive; equal eigenvalues keep solver order.
// Throws RegularizationRequired when S_w + lambda I is singular.
SubspaceModel fit_lda(const CalibrationSet& cal, double lambda);
SubspaceModel fit_lda(const CalibrationSet& cal);

// basis^T * ((x - mean) ./ scale)
Vector project(const SubspaceModel& model, std::span<const double> x);
Vector project(const SubspaceModel& model, const signal::FeatureVector& x);

// First three subspace coordinates with the Rest centroid at the origin.
Point3 reviewer_coords(const SubspaceModel& model, const Vector& projected);
Point3 reviewer_coords(const SubspaceModel& model, const signal::FeatureVector& x);

// Reviewer-space centroid of one movement (mu_i - mu_Rest, first three axes).
Point3 reviewer_centroid(const SubspaceModel& model, Movement m);

// JSON container `subspace/v1`; doubles are written in shortest round-trip form.
void write_model(std::ostream& out, const SubspaceModel& model);
void write_model_file(const std::string& path, const SubspaceModel& model);
SubspaceModel read_model(std::istream& in, const std::string& source_name = "<stream>");
SubspaceModel read_model_file(const std::string& path);

std::string hash_hex(std::uint64_t h);

}  // namespace myo::subspace
