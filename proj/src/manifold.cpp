#include "mzero/manifold.hpp"

#include "mzero/matlin.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <string>
#include <utility>

namespace mzero::manifold {

namespace {

std::string shape_str(const Matrix& a) {
    return std::to_string(a.rows()) + "x" + std::to_string(a.cols());
}

std::string num_str(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.3e", v);
    return buf;
}

double orth_defect(const Matrix& x) {
    return (x.transpose() * x - Matrix::Identity(x.cols(), x.cols())).norm();
}

double asym_defect(const Matrix& x) { return (x - x.transpose()).norm(); }

// P_X Z = Z - X sym(X'Z): orthogonal projector onto T_X St(p,m), hence
// non-expansive in the Frobenius norm.
Matrix tangent_project_raw(const Matrix& x, const Matrix& z) {
    Matrix xtz = x.transpose() * z;
    Matrix sym = 0.5 * (xtz + xtz.transpose());
    return z - x * sym;
}

void require_same_base(const Matrix& a, const Matrix& b, const char* who) {
    if (a.rows() != b.rows() || a.cols() != b.cols() || (a - b).norm() != 0.0) {
        throw BaseMismatch(std::string(who) + ": tangents anchored at different points");
    }
}

}  // namespace

// --------------------------------------------------------------------------
// Strong types
// --------------------------------------------------------------------------

StiefelPoint::StiefelPoint(Matrix x) : x_(std::move(x)) {
    if (x_.cols() < 1 || x_.rows() <= x_.cols()) {
        throw InvalidPoint("StiefelPoint: need m > p >= 1, got " + shape_str(x_));
    }
    if (!all_finite(x_)) {
        throw InvalidPoint("StiefelPoint: non-finite entries");
    }
    const double defect = orth_defect(x_);
    if (defect > kTol) {
        throw InvalidPoint("StiefelPoint: ||X'X - I||_F = " + num_str(defect) +
                           " exceeds " + num_str(kTol));
    }
}

double StiefelPoint::orthonormality_defect() const { return orth_defect(x_); }

StiefelTangent::StiefelTangent(StiefelPoint base, Matrix z)
    : base_(std::move(base)), z_(std::move(z)) {
    if (z_.rows() != base_.m() || z_.cols() != base_.p()) {
        throw ShapeMismatch("StiefelTangent: vector is " + shape_str(z_) + ", base is " +
                            shape_str(base_.mat()));
    }
    if (!all_finite(z_)) {
        throw InvalidPoint("StiefelTangent: non-finite entries");
    }
    Matrix xtz = base_.mat().transpose() * z_;
    const double defect = (0.5 * (xtz + xtz.transpose())).norm();
    if (defect > kTol * std::max(1.0, z_.norm())) {
        throw InvalidPoint("StiefelTangent: ||sym(X'Z)||_F = " + num_str(defect) +
                           " breaks tangency");
    }
}

SpdPoint::SpdPoint(Matrix x) : x_(std::move(x)) {
    if (x_.rows() != x_.cols()) {
        throw NonSquare("SpdPoint: matrix is " + shape_str(x_));
    }
    if (!all_finite(x_)) {
        throw InvalidPoint("SpdPoint: non-finite entries");
    }
    const double defect = asym_defect(x_);
    if (defect > kSymTol * std::max(1.0, x_.norm())) {
        throw InvalidPoint("SpdPoint: asymmetry ||X - X'||_F = " + num_str(defect));
    }
    auto chol = matlin::chol_logdet(x_);  // throws NotPositiveDefinite
    chol_ = std::move(chol.factor);
    lndet_ = chol.lndet;
}

Matrix SpdPoint::solve(const Matrix& b) const {
    if (b.rows() != x_.rows()) {
        throw ShapeMismatch("SpdPoint::solve: rhs has " + std::to_string(b.rows()) +
                            " rows, need " + std::to_string(x_.rows()));
    }
    Matrix y = chol_.triangularView<Eigen::Lower>().solve(b);
    return chol_.transpose().triangularView<Eigen::Upper>().solve(y);
}

SpdTangent::SpdTangent(SpdPoint base, Matrix z) : base_(std::move(base)), z_(std::move(z)) {
    if (z_.rows() != base_.m() || z_.cols() != base_.m()) {
        throw ShapeMismatch("SpdTangent: vector is " + shape_str(z_) + ", base is " +
                            shape_str(base_.mat()));
    }
    if (!all_finite(z_)) {
        throw InvalidPoint("SpdTangent: non-finite entries");
    }
    const double defect = asym_defect(z_);
    if (defect > kSymTol * std::max(1.0, z_.norm())) {
        throw InvalidPoint("SpdTangent: asymmetry ||Z - Z'||_F = " + num_str(defect));
    }
}

// --------------------------------------------------------------------------
// Dimensions
// --------------------------------------------------------------------------

long manifold_dim(const ManifoldMeta& meta) {
    const long m = static_cast<long>(meta.m);
    const long p = static_cast<long>(meta.p);
    switch (meta.kind) {
        case ManifoldKind::Stiefel:
            return m * p - p * (p + 1) / 2;
        case ManifoldKind::Spd:
            return m * (m + 1) / 2;
        case ManifoldKind::GrassmannHorizontal:
            return p * (m - p);
    }
    throw Error("manifold_dim: unknown kind");
}

// --------------------------------------------------------------------------
// Stiefel geometry
// --------------------------------------------------------------------------

double st_inner(const StiefelTangent& xi, const StiefelTangent& eta) {
    require_same_base(xi.base().mat(), eta.base().mat(), "st_inner");
    return xi.mat().cwiseProduct(eta.mat()).sum();
}

StiefelTangent st_project(const StiefelPoint& x, const Matrix& z) {
    if (z.rows() != x.m() || z.cols() != x.p()) {
        throw ShapeMismatch("st_project: ambient vector is " + shape_str(z) + ", point is " +
                            shape_str(x.mat()));
    }
    return {x, tangent_project_raw(x.mat(), z)};
}

StiefelPoint st_retract(const StiefelPoint& x, const StiefelTangent& xi) {
    require_same_base(x.mat(), xi.base().mat(), "st_retract");
    if (xi.mat().norm() == 0.0) {
        return x;  // R_X(0) = X, bit for bit
    }
    return StiefelPoint(matlin::qf(x.mat() + xi.mat()).q);
}

StiefelTangent st_transport(const StiefelPoint& x, const StiefelTangent& eta,
                            const StiefelTangent& xi) {
    require_same_base(x.mat(), eta.base().mat(), "st_transport");
    require_same_base(x.mat(), xi.base().mat(), "st_transport");
    if (eta.mat().norm() == 0.0) {
        return xi;  // T_0 xi = xi, bit for bit
    }
    StiefelPoint y = st_retract(x, eta);
    return st_project(y, xi.mat());
}

// --------------------------------------------------------------------------
// SPD geometry
// --------------------------------------------------------------------------

double spd_inner(const SpdPoint& x, const SpdTangent& xi, const SpdTangent& eta) {
    require_same_base(x.mat(), xi.base().mat(), "spd_inner");
    require_same_base(x.mat(), eta.base().mat(), "spd_inner");
    Matrix a = x.solve(xi.mat());
    Matrix b = x.solve(eta.mat());
    // tr(AB) = sum_ij A_ij B_ji
    return a.cwiseProduct(b.transpose()).sum();
}

SpdPoint spd_retract(const SpdPoint& x, const SpdTangent& xi, SpdRetraction mode) {
    require_same_base(x.mat(), xi.base().mat(), "spd_retract");
    if (xi.mat().norm() == 0.0) {
        return x;  // R_X(0) = X, bit for bit
    }
    if (mode == SpdRetraction::SecondOrder) {
        // X + xi + (1/2) xi X^{-1} xi = X^{1/2}(I + S + S^2/2)X^{1/2} with
        // S = X^{-1/2} xi X^{-1/2}; 1 + s + s^2/2 >= 1/2, so the result is
        // SPD for every symmetric xi.
        Matrix w = x.solve(xi.mat());
        Matrix y = x.mat() + xi.mat() + 0.5 * xi.mat() * w;
        return SpdPoint(0.5 * (y + y.transpose()));
    }
    Matrix step = xi.mat();
    for (int attempt = 0; attempt <= 30; ++attempt) {
        try {
            return SpdPoint(x.mat() + step);
        } catch (const NotPositiveDefinite&) {
            step *= 0.5;
        }
    }
    throw RetractionFailed("spd_retract(additive): still indefinite after 30 halvings");
}

SpdTangent spd_transport(const SpdTangent& eta, const SpdTangent& xi, SpdRetraction mode) {
    require_same_base(eta.base().mat(), xi.base().mat(), "spd_transport");
    SpdPoint y = spd_retract(xi.base(), eta, mode);
    return {std::move(y), xi.mat()};
}

// --------------------------------------------------------------------------
// Grassmann horizontal structure
// --------------------------------------------------------------------------

Matrix gr_horizontal_project(const StiefelPoint& x, const Matrix& z) {
    if (z.rows() != x.m() || z.cols() != x.p()) {
        throw ShapeMismatch("gr_horizontal_project: ambient vector is " + shape_str(z) +
                            ", point is " + shape_str(x.mat()));
    }
    return z - x.mat() * (x.mat().transpose() * z);
}

// --------------------------------------------------------------------------
// Type-erased adapter
// --------------------------------------------------------------------------

double ManifoldOps::norm(const Matrix& x, const Matrix& xi) const {
    return std::sqrt(std::max(0.0, inner(x, xi, xi)));
}

StiefelOps::StiefelOps(Eigen::Index m, Eigen::Index p) : m_(m), p_(p) {
    if (p < 1 || m <= p) {
        throw ConstraintViolated("StiefelOps: need m > p >= 1, got m=" + std::to_string(m) +
                                 ", p=" + std::to_string(p));
    }
}

ManifoldMeta StiefelOps::meta() const { return ManifoldMeta::stiefel(m_, p_); }

void StiefelOps::check_point(const Matrix& x) const {
    if (x.rows() != m_ || x.cols() != p_) {
        throw ShapeMismatch("StiefelOps: point is " + shape_str(x) + ", manifold is St(" +
                            std::to_string(p_) + "," + std::to_string(m_) + ")");
    }
    StiefelPoint probe(x);
    (void)probe;
}

double StiefelOps::point_defect(const Matrix& x) const { return orth_defect(x); }

Matrix StiefelOps::reproject(const Matrix& x) const { return matlin::qf(x).q; }

double StiefelOps::inner(const Matrix& /*x*/, const Matrix& xi, const Matrix& eta) const {
    return xi.cwiseProduct(eta).sum();
}

Matrix StiefelOps::retract(const Matrix& x, const Matrix& xi) const {
    if (xi.norm() == 0.0) {
        return x;
    }
    return matlin::qf(x + xi).q;
}

Matrix StiefelOps::transport(const Matrix& x, const Matrix& eta, const Matrix& xi) const {
    if (eta.norm() == 0.0) {
        return xi;  // T_0 xi = xi, bit for bit
    }
    return tangent_project_raw(retract(x, eta), xi);
}

Matrix StiefelOps::transport_at(const Matrix& y, const Matrix& xi) const {
    return tangent_project_raw(y, xi);
}

SpdOps::SpdOps(Eigen::Index m, SpdRetraction mode) : m_(m), mode_(mode) {
    if (m < 1) {
        throw ConstraintViolated("SpdOps: need m >= 1, got m=" + std::to_string(m));
    }
}

ManifoldMeta SpdOps::meta() const { return ManifoldMeta::spd(m_); }

void SpdOps::check_point(const Matrix& x) const {
    if (x.rows() != m_ || x.cols() != m_) {
        throw ShapeMismatch("SpdOps: point is " + shape_str(x) + ", manifold is Spd(" +
                            std::to_string(m_) + ")");
    }
    SpdPoint probe(x);
    (void)probe;
}

double SpdOps::point_defect(const Matrix& x) const { return asym_defect(x); }

Matrix SpdOps::reproject(const Matrix& x) const { return 0.5 * (x + x.transpose()); }

double SpdOps::inner(const Matrix& x, const Matrix& xi, const Matrix& eta) const {
    SpdPoint px(x);
    Matrix a = px.solve(xi);
    Matrix b = px.solve(eta);
    return a.cwiseProduct(b.transpose()).sum();
}

Matrix SpdOps::retract(const Matrix& x, const Matrix& xi) const {
    SpdPoint px(x);
    SpdTangent t(px, xi);
    return spd_retract(px, t, mode_).mat();
}

Matrix SpdOps::transport(const Matrix& /*x*/, const Matrix& /*eta*/, const Matrix& xi) const {
    return xi;  // identity transport
}

Matrix SpdOps::transport_at(const Matrix& /*y*/, const Matrix& xi) const { return xi; }

std::unique_ptr<ManifoldOps> make_ops(const ManifoldMeta& meta, SpdRetraction spd_mode) {
    switch (meta.kind) {
        case ManifoldKind::Stiefel:
            return std::make_unique<StiefelOps>(meta.m, meta.p);
        case ManifoldKind::Spd:
            return std::make_unique<SpdOps>(meta.m, spd_mode);
        case ManifoldKind::GrassmannHorizontal:
            break;
    }
    throw ConstraintViolated("make_ops: no point-manifold ops for this kind");
}

}  // namespace mzero::manifold
