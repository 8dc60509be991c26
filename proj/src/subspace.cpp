#include "myo/subspace.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <stdexcept>

#include "json_util.hpp"
#include "myo/error.hpp"

namespace myo::subspace {

using detail::json;

// ---------------------------------------------------------------------------
// CalibrationSet

void CalibrationSet::set_class(Movement m, std::vector<signal::FeatureVector> samples) {
    for (auto& s : samples) s.label = m;
    auto it = std::lower_bound(classes_.begin(), classes_.end(), m,
                               [](const CalibrationClass& c, Movement key) { return c.movement < key; });
    if (it != classes_.end() && it->movement == m) {
        it->samples = std::move(samples);
    } else {
        classes_.insert(it, CalibrationClass{m, std::move(samples)});
    }
}

bool CalibrationSet::has(Movement m) const {
    return std::any_of(classes_.begin(), classes_.end(), [m](const auto& c) { return c.movement == m; });
}

const CalibrationClass& CalibrationSet::at(Movement m) const {
    for (const auto& c : classes_) {
        if (c.movement == m) return c;
    }
    throw std::out_of_range("calibration set has no class '" + std::string(movement_name(m)) + "'");
}

std::size_t CalibrationSet::dim() const {
    for (const auto& c : classes_) {
        if (!c.samples.empty()) return c.samples.front().dim();
    }
    return 0;
}

std::size_t CalibrationSet::total_samples() const {
    std::size_t n = 0;
    for (const auto& c : classes_) n += c.samples.size();
    return n;
}

void CalibrationSet::validate() const {
    if (!has(Movement::Rest)) throw std::invalid_argument("calibration set lacks a Rest class");
    if (classes_.size() < 2) throw std::invalid_argument("calibration set needs at least two classes");
    const std::size_t d = dim();
    if (d == 0) throw std::invalid_argument("calibration features are empty");
    for (const auto& c : classes_) {
        if (c.samples.size() < 2) {
            throw std::invalid_argument("class '" + std::string(movement_name(c.movement)) +
                                        "' has fewer than 2 samples");
        }
        for (const auto& s : c.samples) {
            if (s.dim() != d) throw DimensionMismatch("calibration vectors differ in dimension");
            for (double v : s.values) {
                if (!std::isfinite(v)) throw std::invalid_argument("calibration feature is not finite");
            }
        }
    }
}

std::uint64_t CalibrationSet::hash() const {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    auto mix = [&h](std::uint64_t word) {
        for (int i = 0; i < 8; ++i) {
            h ^= (word >> (8 * i)) & 0xffU;
            h *= 0x100000001b3ULL;
        }
    };
    for (const auto& c : classes_) {
        mix(static_cast<std::uint64_t>(movement_id(c.movement)));
        mix(c.samples.size());
        for (const auto& s : c.samples) {
            mix(s.values.size());
            for (double v : s.values) {
                std::uint64_t bits = 0;
                std::memcpy(&bits, &v, sizeof bits);
                mix(bits);
            }
        }
    }
    return h;
}

// ---------------------------------------------------------------------------
// Scatter

namespace {

Vector to_vector(std::span<const double> v) {
    return Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size()));
}

}  // namespace

Scatter scatter_matrices(const CalibrationSet& cal, const Vector& offset, const Vector& scale) {
    const auto d = static_cast<Eigen::Index>(cal.dim());
    Scatter out;
    out.mean = Vector::Zero(d);
    out.within = Matrix::Zero(d, d);
    out.between = Matrix::Zero(d, d);

    std::vector<Vector> class_means;
    std::size_t n = 0;
    for (const auto& c : cal.classes()) {
        Vector mu = Vector::Zero(d);
        for (const auto& s : c.samples) mu += (to_vector(s.values) - offset).cwiseQuotient(scale);
        out.mean += mu;
        n += c.samples.size();
        mu /= static_cast<double>(c.samples.size());
        class_means.push_back(std::move(mu));
    }
    out.mean /= static_cast<double>(n);

    for (std::size_t i = 0; i < cal.classes().size(); ++i) {
        const auto& c = cal.classes()[i];
        for (const auto& s : c.samples) {
            const Vector dev = (to_vector(s.values) - offset).cwiseQuotient(scale) - class_means[i];
            out.within.selfadjointView<Eigen::Lower>().rankUpdate(dev);
        }
        const Vector shift = class_means[i] - out.mean;
        out.between.selfadjointView<Eigen::Lower>().rankUpdate(shift, static_cast<double>(c.samples.size()));
    }
    out.within = out.within.selfadjointView<Eigen::Lower>();
    out.between = out.between.selfadjointView<Eigen::Lower>();
    return out;
}

Scatter scatter_matrices(const CalibrationSet& cal) {
    const auto d = static_cast<Eigen::Index>(cal.dim());
    return scatter_matrices(cal, Vector::Zero(d), Vector::Ones(d));
}

// ---------------------------------------------------------------------------
// Fitting

namespace {

struct Standardized {
    Vector mean;
    Vector scale;
    Scatter scatter;
};

Standardized standardize(const CalibrationSet& cal) {
    cal.validate();
    const auto d = static_cast<Eigen::Index>(cal.dim());
    Scatter raw = scatter_matrices(cal);
    const double dof = static_cast<double>(cal.total_samples() - cal.class_count());

    Standardized out;
    out.mean = raw.mean;
    out.scale = Vector::Ones(d);
    for (Eigen::Index j = 0; j < d; ++j) {
        const double sd = std::sqrt(std::max(raw.within(j, j), 0.0) / dof);
        if (sd > 0.0 && std::isfinite(sd)) out.scale(j) = sd;
    }
    out.scatter = scatter_matrices(cal, out.mean, out.scale);
    return out;
}

void fix_sign(Eigen::Ref<Vector> v) {
    Eigen::Index arg = 0;
    double best = -1.0;
    for (Eigen::Index i = 0; i < v.size(); ++i) {
        if (std::abs(v(i)) > best) {
            best = std::abs(v(i));
            arg = i;
        }
    }
    if (v(arg) < 0.0) v = -v;
}

}  // namespace

double default_regularization(const CalibrationSet& cal) {
    const Standardized st = standardize(cal);
    return 1e-3 * st.scatter.within.trace() / static_cast<double>(cal.dim());
}

SubspaceModel fit_lda(const CalibrationSet& cal) {
    return fit_lda(cal, default_regularization(cal));
}

SubspaceModel fit_lda(const CalibrationSet& cal, double lambda) {
    if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw std::invalid_argument("lambda must be >= 0");
    const Standardized st = standardize(cal);
    const auto d = static_cast<Eigen::Index>(cal.dim());
    const std::size_t k = cal.class_count();
    const auto p = static_cast<Eigen::Index>(std::min<std::size_t>(k - 1, cal.dim()));
    const double dof = static_cast<double>(cal.total_samples() - k);

    const Matrix regularized = st.scatter.within + lambda * Matrix::Identity(d, d);
    Eigen::SelfAdjointEigenSolver<Matrix> wsolve(regularized, Eigen::EigenvaluesOnly);
    const double wmax = std::max(wsolve.eigenvalues().maxCoeff(), 1.0);
    if (!(wsolve.eigenvalues().minCoeff() > 1e-12 * wmax)) {
        throw RegularizationRequired("within-class scatter is singular; use lambda > 0");
    }

    Eigen::GeneralizedSelfAdjointEigenSolver<Matrix> ges(st.scatter.between, regularized);
    if (ges.info() != Eigen::Success) throw Error("generalized eigen-decomposition failed");

    // Solver order is ascending; walk it backwards, keeping solver order on exact ties.
    std::vector<Eigen::Index> order(static_cast<std::size_t>(d));
    std::iota(order.begin(), order.end(), Eigen::Index{0});
    const Vector& evals = ges.eigenvalues();
    std::stable_sort(order.begin(), order.end(),
                     [&evals](Eigen::Index a, Eigen::Index b) { return evals(a) > evals(b); });

    SubspaceModel model;
    model.d = static_cast<std::size_t>(d);
    model.p = static_cast<std::size_t>(p);
    model.lambda = lambda;
    model.mean = st.mean;
    model.scale = st.scale;
    model.basis.resize(d, p);
    model.eigenvalues.resize(p);
    for (Eigen::Index j = 0; j < p; ++j) {
        const Eigen::Index src = order[static_cast<std::size_t>(j)];
        // Solver vectors satisfy v^T (S_w + lambda I) v = 1; rescale to unit pooled variance.
        model.basis.col(j) = ges.eigenvectors().col(src) * std::sqrt(dof);
        fix_sign(model.basis.col(j));
        model.eigenvalues(j) = std::max(evals(src), 0.0);
    }
    const double top = evals.maxCoeff();
    const double btrace = st.scatter.between.trace();
    model.degenerate = !(top > 1e-12 * std::max(1.0, btrace)) || btrace <= 0.0;

    model.movements.reserve(k);
    model.centroids.resize(static_cast<Eigen::Index>(k), p);
    for (std::size_t i = 0; i < k; ++i) {
        const auto& c = cal.classes()[i];
        model.movements.push_back(c.movement);
        Vector mu = Vector::Zero(d);
        for (const auto& s : c.samples) mu += to_vector(s.values);
        mu /= static_cast<double>(c.samples.size());
        model.centroids.row(static_cast<Eigen::Index>(i)) =
            model.basis.transpose() * (mu - model.mean).cwiseQuotient(model.scale);
    }
    model.provenance = cal.hash();
    return model;
}

// ---------------------------------------------------------------------------
// Model accessors and projection

bool SubspaceModel::has(Movement m) const {
    return std::find(movements.begin(), movements.end(), m) != movements.end();
}

Vector SubspaceModel::centroid(Movement m) const {
    const auto it = std::find(movements.begin(), movements.end(), m);
    if (it == movements.end()) {
        throw std::out_of_range("model has no centroid for '" + std::string(movement_name(m)) + "'");
    }
    return centroids.row(static_cast<Eigen::Index>(it - movements.begin())).transpose();
}

Matrix SubspaceModel::effective_basis() const {
    return scale.cwiseInverse().asDiagonal() * basis;
}

bool SubspaceModel::operator==(const SubspaceModel& o) const {
    return d == o.d && p == o.p && lambda == o.lambda && mean == o.mean && scale == o.scale &&
           basis == o.basis && eigenvalues == o.eigenvalues && movements == o.movements &&
           centroids == o.centroids && degenerate == o.degenerate && provenance == o.provenance;
}

Vector project(const SubspaceModel& model, std::span<const double> x) {
    if (x.size() != model.d) {
        throw DimensionMismatch("feature vector has dimension " + std::to_string(x.size()) + ", model expects " +
                                std::to_string(model.d));
    }
    return model.basis.transpose() * (to_vector(x) - model.mean).cwiseQuotient(model.scale);
}

Vector project(const SubspaceModel& model, const signal::FeatureVector& x) {
    return project(model, std::span<const double>(x.values));
}

Point3 reviewer_coords(const SubspaceModel& model, const Vector& projected) {
    const Vector rest = model.centroid(Movement::Rest);
    Point3 out{0.0, 0.0, 0.0};
    const auto n = std::min<Eigen::Index>(3, projected.size());
    for (Eigen::Index i = 0; i < n; ++i) out[static_cast<std::size_t>(i)] = projected(i) - rest(i);
    return out;
}

Point3 reviewer_coords(const SubspaceModel& model, const signal::FeatureVector& x) {
    return reviewer_coords(model, project(model, x));
}

Point3 reviewer_centroid(const SubspaceModel& model, Movement m) {
    return reviewer_coords(model, model.centroid(m));
}

// ---------------------------------------------------------------------------
// Model file

std::string hash_hex(std::uint64_t h) {
    static constexpr char kDigits[] = "0123456789abcdef";
    std::string out(16, '0');
    for (int i = 15; i >= 0; --i) {
        out[static_cast<std::size_t>(i)] = kDigits[h & 0xf];
        h >>= 4;
    }
    return out;
}

namespace {

json vector_json(const Vector& v) {
    json arr = json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) arr.push_back(v(i));
    return arr;
}

json matrix_json(const Matrix& m) {
    json arr = json::array();
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        for (Eigen::Index c = 0; c < m.cols(); ++c) arr.push_back(m(r, c));
    }
    return arr;
}

Vector vector_from(const json& j, std::size_t n, const std::string& what) {
    if (!j.is_array() || j.size() != n) throw std::invalid_argument(what + " has wrong length");
    Vector v(static_cast<Eigen::Index>(n));
    for (std::size_t i = 0; i < n; ++i) v(static_cast<Eigen::Index>(i)) = j.at(i).get<double>();
    return v;
}

Matrix matrix_from(const json& j, std::size_t rows, std::size_t cols, const std::string& what) {
    if (!j.is_array() || j.size() != rows * cols) throw std::invalid_argument(what + " has wrong length");
    Matrix m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < cols; ++c) {
            m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = j.at(r * cols + c).get<double>();
        }
    }
    return m;
}

}  // namespace

void write_model(std::ostream& out, const SubspaceModel& model) {
    json j;
    j["format"] = "subspace/v1";
    j["d"] = model.d;
    j["p"] = model.p;
    j["lambda"] = model.lambda;
    j["degenerate"] = model.degenerate;
    j["provenance"] = hash_hex(model.provenance);
    json ids = json::array();
    json names = json::array();
    for (Movement m : model.movements) {
        ids.push_back(movement_id(m));
        names.push_back(std::string(movement_name(m)));
    }
    j["movement_ids"] = ids;
    j["movement_names"] = names;
    j["mean"] = vector_json(model.mean);
    j["scale"] = vector_json(model.scale);
    j["eigenvalues"] = vector_json(model.eigenvalues);
    j["basis"] = matrix_json(model.basis);
    j["centroids"] = matrix_json(model.centroids);
    out << j.dump(1) << '\n';
}

void write_model_file(const std::string& path, const SubspaceModel& model) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write " + path);
    write_model(out, model);
}

SubspaceModel read_model(std::istream& in, const std::string& source_name) {
    const std::string text = detail::read_text(in);
    const json j = detail::parse_json(text, source_name);
    try {
        if (j.value("format", std::string()) != "subspace/v1") {
            throw std::invalid_argument("not a subspace/v1 model");
        }
        SubspaceModel m;
        m.d = j.at("d").get<std::size_t>();
        m.p = j.at("p").get<std::size_t>();
        m.lambda = j.at("lambda").get<double>();
        m.degenerate = j.at("degenerate").get<bool>();
        m.provenance = std::stoull(j.at("provenance").get<std::string>(), nullptr, 16);
        for (const auto& id : j.at("movement_ids")) {
            const auto mv = movement_from_id(id.get<int>());
            if (!mv) throw std::invalid_argument("unknown movement id " + id.dump());
            m.movements.push_back(*mv);
        }
        m.mean = vector_from(j.at("mean"), m.d, "mean");
        m.scale = vector_from(j.at("scale"), m.d, "scale");
        m.eigenvalues = vector_from(j.at("eigenvalues"), m.p, "eigenvalues");
        m.basis = matrix_from(j.at("basis"), m.d, m.p, "basis");
        m.centroids = matrix_from(j.at("centroids"), m.movements.size(), m.p, "centroids");
        return m;
    } catch (const ParseError&) {
        throw;
    } catch (const std::exception& e) {
        throw ParseError(source_name, 1, e.what());
    }
}

SubspaceModel read_model_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError(path, 0, "cannot open file");
    return read_model(in, path);
}

}  // namespace myo::subspace
