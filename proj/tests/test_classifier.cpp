#include <doctest.h>

#include <random>

#include "myo/classifier.hpp"
#include "myo/error.hpp"
#include "oracles.hpp"

using namespace myo;
using namespace myo::classifier;
using subspace::Matrix;
using subspace::SubspaceModel;

namespace {

// Identity-basis model whose subspace coincides with feature space.
SubspaceModel hand_model(const std::vector<Movement>& movements, const Matrix& centroids) {
    SubspaceModel m;
    m.d = static_cast<std::size_t>(centroids.cols());
    m.p = m.d;
    m.mean = Vector::Zero(centroids.cols());
    m.scale = Vector::Ones(centroids.cols());
    m.basis = Matrix::Identity(centroids.cols(), centroids.cols());
    m.eigenvalues = Vector::Ones(centroids.cols());
    m.movements = movements;
    m.centroids = centroids;
    return m;
}

const std::vector<Movement> kStageA = {Movement::Rest, Movement::HandOpen, Movement::PowerGrasp,
                                       Movement::WristPronate, Movement::WristSupinate};

Matrix random_centroids(std::mt19937& rng, Eigen::Index k, Eigen::Index p) {
    std::normal_distribution<double> z(0.0, 3.0);
    Matrix c(k, p);
    for (Eigen::Index i = 0; i < k; ++i) {
        for (Eigen::Index j = 0; j < p; ++j) c(i, j) = z(rng);
    }
    return c;
}

signal::FeatureVector as_feature(const Vector& v) {
    return {std::vector<double>(v.data(), v.data() + v.size()), std::nullopt};
}

}  // namespace

TEST_CASE("axes run from the Rest centroid to each active centroid") {
    std::mt19937 rng(1);
    const auto model = hand_model(kStageA, random_centroids(rng, 5, 4));
    const auto axes = build_axes(model);
    CHECK(axes.size() == 4);
    for (const auto& a : axes.axes()) {
        CHECK((axes.point(a.movement, 0.0) - model.centroid(Movement::Rest)).norm() == 0.0);
        CHECK((axes.point(a.movement, 1.0) - model.centroid(a.movement)).norm() < 1e-12);
    }
}

TEST_CASE("a centroid on top of Rest is a degenerate axis") {
    Matrix c(3, 2);
    c << 0.5, 0.5, 1.0, 0.0, 0.5, 0.5;
    const auto model = hand_model({Movement::Rest, Movement::HandOpen, Movement::PowerGrasp}, c);
    try {
        build_axes(model);
        FAIL("expected DegenerateAxis");
    } catch (const DegenerateAxis& e) {
        CHECK(e.movement() == Movement::PowerGrasp);
        CHECK(std::string(e.what()).find("Power Grasp") != std::string::npos);
    }
}

TEST_CASE("centroids classify as themselves and Rest as Rest") {
    std::mt19937 rng(2);
    const auto model = hand_model(kStageA, random_centroids(rng, 5, 4));
    const auto axes = build_axes(model);
    for (Movement m : kStageA) {
        const auto d = classify(axes, model.centroid(m));
        if (m == Movement::Rest) {
            CHECK(d.label == Movement::Rest);
            CHECK(d.t_star == 0.0);
        } else {
            CHECK(d.label == m);
            CHECK(d.distance < 1e-12);
            CHECK(d.t_star == doctest::Approx(1.0));
        }
    }
    CHECK_THROWS_AS(classify(AxisSet{}, Vector::Zero(4)), std::invalid_argument);
}

TEST_CASE("labels agree with a dense t-grid brute-force minimizer") {
    std::mt19937 rng(3);
    std::normal_distribution<double> z(0.0, 4.0);
    int compared = 0;
    for (int instance = 0; instance < 5; ++instance) {
        const auto model = hand_model(kStageA, random_centroids(rng, 5, 4));
        const auto axes = build_axes(model);
        for (int q = 0; q < 40; ++q) {
            Vector y(4);
            for (Eigen::Index j = 0; j < 4; ++j) y(j) = z(rng);
            const auto d = classify(axes, y);
            if (d.margin <= 1e-9) continue;
            double best = std::numeric_limits<double>::infinity();
            Movement best_m = Movement::Rest;
            for (const auto& a : axes.axes()) {
                const double dist = oracle::grid_segment_distance(y, axes.anchor(), a.direction, 1e-3);
                if (dist < best) {
                    best = dist;
                    best_m = a.movement;
                }
            }
            CHECK(*d.winning_axis == best_m);
            ++compared;
        }
    }
    CHECK(compared > 150);
}

TEST_CASE("t* is clamped and t_rest = 0 never yields Rest") {
    std::mt19937 rng(4);
    std::normal_distribution<double> z(0.0, 10.0);
    const auto model = hand_model(kStageA, random_centroids(rng, 5, 4));
    const auto axes = build_axes(model);
    for (int q = 0; q < 500; ++q) {
        Vector y(4);
        for (Eigen::Index j = 0; j < 4; ++j) y(j) = z(rng);
        const auto d = classify(axes, y, 0.0);
        CHECK(d.t_star >= 0.0);
        CHECK(d.t_star <= 1.0);
        CHECK(d.distance >= 0.0);
        CHECK(d.margin >= 0.0);
        CHECK(d.label != Movement::Rest);
    }
}

TEST_CASE("labels are invariant under rigid rotations") {
    std::mt19937 rng(5);
    std::normal_distribution<double> z(0.0, 3.0);
    const Matrix c = random_centroids(rng, 5, 4);
    Matrix g(4, 4);
    for (Eigen::Index i = 0; i < 16; ++i) g(i) = z(rng);
    const Matrix rot = Eigen::HouseholderQR<Matrix>(g).householderQ();
    Vector shift(4);
    for (Eigen::Index j = 0; j < 4; ++j) shift(j) = z(rng);

    const Matrix moved = (c * rot.transpose()).rowwise() + shift.transpose();
    const auto a = build_axes(hand_model(kStageA, c));
    const auto b = build_axes(hand_model(kStageA, moved));
    for (int q = 0; q < 300; ++q) {
        Vector y(4);
        for (Eigen::Index j = 0; j < 4; ++j) y(j) = z(rng);
        const auto da = classify(a, y);
        const auto db = classify(b, rot * y + shift);
        if (da.margin > 1e-9 && std::abs(da.t_star - kDefaultRestThreshold) > 1e-9) CHECK(da.label == db.label);
    }
}

TEST_CASE("exact distance ties go to the lowest movement id") {
    Matrix c(3, 2);
    c << 0, 0, 1, 1, 1, -1;
    const auto axes = build_axes(hand_model({Movement::Rest, Movement::HandOpen, Movement::PowerGrasp}, c));
    const auto d = classify(axes, Vector::Unit(2, 0) * 2.0);
    CHECK(d.margin == 0.0);
    CHECK(d.label == Movement::HandOpen);
}

TEST_CASE("decision stream") {
    std::mt19937 rng(6);
    const auto model = hand_model(kStageA, random_centroids(rng, 5, 4));
    const auto axes = build_axes(model);
    const auto rest = as_feature(model.centroid(Movement::Rest));
    const auto grasp = as_feature(model.centroid(Movement::PowerGrasp));
    const auto open = as_feature(model.centroid(Movement::HandOpen));

    SUBCASE("rest-like input stays Rest") {
        const std::vector<signal::FeatureVector> in(10, rest);
        for (const auto& d : decision_stream(model, axes, in)) CHECK(d.label == Movement::Rest);
    }
    SUBCASE("alternating centroids alternate without smoothing") {
        std::vector<signal::FeatureVector> in;
        for (int i = 0; i < 8; ++i) in.push_back(i % 2 ? grasp : open);
        const auto out = decision_stream(model, axes, in);
        for (std::size_t i = 0; i < out.size(); ++i) {
            CHECK(out[i].label == (i % 2 ? Movement::PowerGrasp : Movement::HandOpen));
        }
    }
    SUBCASE("majority vote over 3 delays a label change by one step") {
        const std::vector<signal::FeatureVector> in = {open, open, open, grasp, grasp, grasp, open, open, open};
        const auto raw = decision_stream(model, axes, in);
        const auto smooth = decision_stream(model, axes, in, StreamOptions{kDefaultRestThreshold, 3});
        const std::vector<Movement> expected = {Movement::HandOpen,   Movement::HandOpen,   Movement::HandOpen,
                                                Movement::HandOpen,   Movement::PowerGrasp, Movement::PowerGrasp,
                                                Movement::PowerGrasp, Movement::HandOpen,   Movement::HandOpen};
        for (std::size_t i = 0; i < in.size(); ++i) CHECK(smooth[i].label == expected[i]);
        CHECK(raw[3].label == Movement::PowerGrasp);
    }
}

TEST_CASE("decoder bundles a model with its axes") {
    std::mt19937 rng(7);
    const auto decoder = Decoder::build(hand_model(kStageA, random_centroids(rng, 5, 4)));
    CHECK(decoder->axes.size() == 4);
}
