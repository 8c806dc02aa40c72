#include "mzero/field.hpp"

#include "mzero/matlin.hpp"

#include <cmath>
#include <memory>
#include <string>
#include <utility>

namespace mzero::field {

namespace {

std::string shape_str(const Matrix& a) {
    return std::to_string(a.rows()) + "x" + std::to_string(a.cols());
}

void require_conformal(const Matrix& a, const manifold::StiefelPoint& x, const char* who) {
    if (a.rows() != a.cols() || a.rows() != x.m()) {
        throw ShapeMismatch(std::string(who) + ": coefficient is " + shape_str(a) +
                            ", point is " + shape_str(x.mat()));
    }
}

void require_horizontal(const Matrix& x, const Matrix& xi, const char* who) {
    if (xi.rows() != x.rows() || xi.cols() != x.cols()) {
        throw ShapeMismatch(std::string(who) + ": direction is " + shape_str(xi) +
                            ", point is " + shape_str(x));
    }
    const double nrm = xi.norm();
    if (nrm == 0.0) {
        return;
    }
    const double defect = (x.transpose() * xi).norm();
    if (defect > 1e-8 * nrm) {
        throw NotHorizontal(std::string(who) + ": ||X'xi|| exceeds 1e-8 ||xi||");
    }
}

void require_symmetric(const Matrix& a, const char* label) {
    if (a.rows() != a.cols()) {
        throw NonSquare(std::string(label) + " is " + shape_str(a));
    }
    if ((a - a.transpose()).norm() > 1e-12) {
        throw ConstraintViolated(std::string(label) + " is not symmetric to 1e-12");
    }
}

Matrix horizontal_part(const Matrix& x, const Matrix& v) {
    return v - x * (x.transpose() * v);
}

// Everything the trace-ratio Jacobian lift needs at a fixed X; one cache per
// Newton step feeds every CG application.
struct TraceRatioCache {
    Matrix x;     // m x p
    Matrix ax;    // A X
    Matrix bx;    // B X
    Matrix e;     // E(X)
    Matrix xtex;  // X' E X
    double phi_a = 0.0;
    double phi_b = 0.0;
};

TraceRatioCache make_trace_ratio_cache(const Matrix& a, const Matrix& b, const Matrix& c,
                                       const Matrix& x) {
    TraceRatioCache cc;
    cc.x = x;
    cc.ax = a * x;
    cc.bx = b * x;
    cc.phi_a = x.cwiseProduct(cc.ax).sum();
    cc.phi_b = x.cwiseProduct(cc.bx).sum();
    if (cc.phi_b <= 1e-13) {
        throw DegenerateDenominator("trace-ratio: phi_B(X) <= 1e-13");
    }
    cc.e = a / cc.phi_b - b * (cc.phi_a / (cc.phi_b * cc.phi_b)) + c;
    Matrix ex = cc.e * x;
    cc.xtex = x.transpose() * ex;
    return cc;
}

Matrix trace_ratio_lift_apply(const TraceRatioCache& cc, const Matrix& xi) {
    require_horizontal(cc.x, xi, "trace_ratio_jac_lift");
    const double phib2 = cc.phi_b * cc.phi_b;
    const double dphi_a = 2.0 * cc.ax.cwiseProduct(xi).sum();
    const double dphi_b = 2.0 * cc.bx.cwiseProduct(xi).sum();
    const double s_a = -dphi_b / phib2;
    const double s_b = -(dphi_a * cc.phi_b - 2.0 * dphi_b * cc.phi_a) / (phib2 * cc.phi_b);
    // G(X,xi) X with G = s_a A + s_b B reuses the cached AX, BX.
    Matrix v = cc.e * xi + s_a * cc.ax + s_b * cc.bx - xi * cc.xtex;
    return horizontal_part(cc.x, v);
}

Matrix oja_lift_apply(const Matrix& a, const Matrix& x, const Matrix& xtax, const Matrix& xi) {
    require_horizontal(x, xi, "oja_jac_lift");
    Matrix v = a * xi - xi * xtax;
    return horizontal_part(x, v);
}

}  // namespace

// ---------------------------------------------------------------------------
// Free functions
// ---------------------------------------------------------------------------

FieldValue oja_eval(const Matrix& a, const manifold::StiefelPoint& x) {
    require_conformal(a, x, "oja_eval");
    const Matrix& xm = x.mat();
    Matrix ax = a * xm;
    Matrix f = ax - xm * (xm.transpose() * ax);
    const double nrm = f.norm();
    return {std::move(f), nrm};
}

Matrix oja_jac_lift(const Matrix& a, const manifold::StiefelPoint& x, const Matrix& xi) {
    require_conformal(a, x, "oja_jac_lift");
    const Matrix& xm = x.mat();
    Matrix xtax = xm.transpose() * (a * xm);
    return oja_lift_apply(a, xm, xtax, xi);
}

FieldValue trace_ratio_eval(const Matrix& a, const Matrix& b, const Matrix& c,
                            const manifold::StiefelPoint& x) {
    require_conformal(a, x, "trace_ratio_eval");
    require_conformal(b, x, "trace_ratio_eval");
    require_conformal(c, x, "trace_ratio_eval");
    const Matrix& xm = x.mat();
    Matrix ax = a * xm;
    Matrix bx = b * xm;
    const double phi_a = xm.cwiseProduct(ax).sum();
    const double phi_b = xm.cwiseProduct(bx).sum();
    if (phi_b <= 1e-13) {
        throw DegenerateDenominator("trace_ratio_eval: phi_B(X) <= 1e-13");
    }
    // E(X) X = AX/phi_B - BX phi_A/phi_B^2 + CX without forming E.
    Matrix ex = ax / phi_b - bx * (phi_a / (phi_b * phi_b)) + c * xm;
    Matrix f = ex - xm * (xm.transpose() * ex);
    const double nrm = f.norm();
    return {std::move(f), nrm};
}

Matrix trace_ratio_jac_lift(const Matrix& a, const Matrix& b, const Matrix& c,
                            const manifold::StiefelPoint& x, const Matrix& xi) {
    require_conformal(a, x, "trace_ratio_jac_lift");
    require_conformal(b, x, "trace_ratio_jac_lift");
    require_conformal(c, x, "trace_ratio_jac_lift");
    return trace_ratio_lift_apply(make_trace_ratio_cache(a, b, c, x.mat()), xi);
}

FieldValue logdet_eval(const manifold::SpdPoint& x) {
    const double lndet = x.lndet();
    Matrix f = 2.0 * lndet * x.mat();
    const double nrm = 2.0 * std::sqrt(static_cast<double>(x.m())) * std::abs(lndet);
    return {std::move(f), nrm};
}

// ---------------------------------------------------------------------------
// VectorField default
// ---------------------------------------------------------------------------

std::function<Matrix(const Matrix&)> VectorField::jac_operator(const Matrix& /*x*/) const {
    throw ConstraintViolated("field '" + name() + "' supplies no Jacobian lift");
}

// ---------------------------------------------------------------------------
// OjaField
// ---------------------------------------------------------------------------

OjaField::OjaField(Matrix a, Eigen::Index p) : a_(std::move(a)), p_(p) {
    require_symmetric(a_, "OjaField: A");
    if (p < 1 || p >= a_.rows()) {
        throw ConstraintViolated("OjaField: need m > p >= 1");
    }
}

manifold::ManifoldMeta OjaField::domain() const {
    return manifold::ManifoldMeta::stiefel(a_.rows(), p_);
}

FieldValue OjaField::eval(const Matrix& x) const {
    return oja_eval(a_, manifold::StiefelPoint(x));
}

std::function<Matrix(const Matrix&)> OjaField::jac_operator(const Matrix& x) const {
    manifold::StiefelPoint px(x);
    auto xm = std::make_shared<Matrix>(px.mat());
    auto xtax = std::make_shared<Matrix>(xm->transpose() * (a_ * (*xm)));
    return [this, xm, xtax](const Matrix& xi) {
        return oja_lift_apply(a_, *xm, *xtax, xi);
    };
}

// ---------------------------------------------------------------------------
// TraceRatioField
// ---------------------------------------------------------------------------

TraceRatioField::TraceRatioField(Matrix a, Matrix b, Matrix c, Eigen::Index p)
    : a_(std::move(a)), b_(std::move(b)), c_(std::move(c)), p_(p) {
    require_symmetric(a_, "TraceRatioField: A");
    require_symmetric(b_, "TraceRatioField: B");
    require_symmetric(c_, "TraceRatioField: C");
    if (a_.rows() != b_.rows() || a_.rows() != c_.rows()) {
        throw ShapeMismatch("TraceRatioField: A, B, C must share one size");
    }
    if (p < 1 || p >= a_.rows()) {
        throw ConstraintViolated("TraceRatioField: need m > p >= 1");
    }
    matlin::chol_logdet(b_);  // throws NotPositiveDefinite unless B is SPD
}

manifold::ManifoldMeta TraceRatioField::domain() const {
    return manifold::ManifoldMeta::stiefel(a_.rows(), p_);
}

FieldValue TraceRatioField::eval(const Matrix& x) const {
    return trace_ratio_eval(a_, b_, c_, manifold::StiefelPoint(x));
}

std::function<Matrix(const Matrix&)> TraceRatioField::jac_operator(const Matrix& x) const {
    manifold::StiefelPoint px(x);
    auto cache = std::make_shared<TraceRatioCache>(make_trace_ratio_cache(a_, b_, c_, px.mat()));
    return [cache](const Matrix& xi) { return trace_ratio_lift_apply(*cache, xi); };
}

// ---------------------------------------------------------------------------
// LogDetField
// ---------------------------------------------------------------------------

LogDetField::LogDetField(Eigen::Index m) : m_(m) {
    if (m < 1) {
        throw ConstraintViolated("LogDetField: need m >= 1");
    }
}

manifold::ManifoldMeta LogDetField::domain() const { return manifold::ManifoldMeta::spd(m_); }

FieldValue LogDetField::eval(const Matrix& x) const {
    if (x.rows() != m_ || x.cols() != m_) {
        throw ShapeMismatch("LogDetField: point is " + shape_str(x) + ", field lives on Spd(" +
                            std::to_string(m_) + ")");
    }
    return logdet_eval(manifold::SpdPoint(x));
}

// ---------------------------------------------------------------------------
// Helpers
// ---------------------------------------------------------------------------

double residual_norm(const VectorField& field, const Matrix& x) { return field.eval(x).norm; }

Matrix fd_field_derivative(const VectorField& field, const manifold::ManifoldOps& ops,
                           const Matrix& x, const Matrix& xi, double h) {
    if (!(h > 0.0)) {
        throw ConstraintViolated("fd_field_derivative: h must be positive");
    }
    Matrix step = h * xi;
    Matrix y = ops.retract(x, step);
    Matrix f_y = field.eval(y).f;
    Matrix f_x_moved = ops.transport(x, step, field.eval(x).f);
    return (f_y - f_x_moved) / h;
}

}  // namespace mzero::field
