#pragma once

#include "mzero/manifold.hpp"
#include "mzero/types.hpp"

#include <functional>
#include <string>

namespace mzero::field {

/// A field evaluation: the tangent representative F(X) together with its
/// Riemannian norm at the queried point (Frobenius on Stiefel, the
/// affine-invariant trace norm on SPD).
struct FieldValue {
    Matrix f;
    double norm = 0.0;

    /// Merit f(X) = (1/2) ||F(X)||^2.
    double merit() const { return 0.5 * norm * norm; }
};

// ---------------------------------------------------------------------------
// Free-function API on the strong geometry types.
// ---------------------------------------------------------------------------

/// Oja field F(X) = AX - XX'AX on St(p,m); tangent by construction.
FieldValue oja_eval(const Matrix& a, const manifold::StiefelPoint& x);

/// Horizontal Jacobian lift of the Oja field at x applied to a horizontal
/// xi: (I - XX')(A xi - xi X'AX). Throws NotHorizontal when
/// ||X'xi|| > 1e-8 ||xi||.
Matrix oja_jac_lift(const Matrix& a, const manifold::StiefelPoint& x, const Matrix& xi);

/// Trace-ratio field F(X) = E(X)X - X(X'E(X)X) with
/// E(X) = A/phi_B - B phi_A/phi_B^2 + C and phi_S = tr(X'SX).
/// Throws DegenerateDenominator when phi_B <= 1e-13.
FieldValue trace_ratio_eval(const Matrix& a, const Matrix& b, const Matrix& c,
                            const manifold::StiefelPoint& x);

/// Horizontal Jacobian lift of the trace-ratio field:
/// (I - XX')(E xi + G(X,xi)X - xi X'EX) with
/// G = -phi_B'/phi_B^2 A - (phi_A' phi_B - 2 phi_B' phi_A)/phi_B^3 B and
/// phi_S'(xi) = 2 tr(X'S xi).
Matrix trace_ratio_jac_lift(const Matrix& a, const Matrix& b, const Matrix& c,
                            const manifold::StiefelPoint& x, const Matrix& xi);

/// Log-det field F(X) = 2 (ln det X) X on S++(m); Riemannian norm collapses
/// to 2 sqrt(m) |ln det X|.
FieldValue logdet_eval(const manifold::SpdPoint& x);

// ---------------------------------------------------------------------------
// Type-erased field interface used by the solvers.
// ---------------------------------------------------------------------------

class VectorField {
public:
    virtual ~VectorField() = default;

    virtual manifold::ManifoldMeta domain() const = 0;
    virtual std::string name() const = 0;

    /// F(X) with cached Riemannian norm; validates the point.
    virtual FieldValue eval(const Matrix& x) const = 0;

    /// True when a horizontal Jacobian lift is available (Newton phase).
    virtual bool has_jacobian() const { return false; }

    /// Linear operator xi -> horizontal Jacobian lift at x, with the
    /// x-dependent pieces precomputed once. The closure borrows the field:
    /// it must not outlive *this. Throws ConstraintViolated when
    /// has_jacobian() is false.
    virtual std::function<Matrix(const Matrix&)> jac_operator(const Matrix& x) const;
};

/// A (symmetric) matrix pencil's invariant-subspace field; A is checked
/// symmetric on construction (||A - A'||_F <= 1e-12).
class OjaField final : public VectorField {
public:
    OjaField(Matrix a, Eigen::Index p);

    const Matrix& a() const { return a_; }

    manifold::ManifoldMeta domain() const override;
    std::string name() const override { return "oja"; }
    FieldValue eval(const Matrix& x) const override;
    bool has_jacobian() const override { return true; }
    std::function<Matrix(const Matrix&)> jac_operator(const Matrix& x) const override;

private:
    Matrix a_;
    Eigen::Index p_;
};

/// Trace-ratio first-order field; A, B, C checked symmetric on
/// construction, B additionally positive definite.
class TraceRatioField final : public VectorField {
public:
    TraceRatioField(Matrix a, Matrix b, Matrix c, Eigen::Index p);

    const Matrix& a() const { return a_; }
    const Matrix& b() const { return b_; }
    const Matrix& c() const { return c_; }

    manifold::ManifoldMeta domain() const override;
    std::string name() const override { return "trace-ratio"; }
    FieldValue eval(const Matrix& x) const override;
    bool has_jacobian() const override { return true; }
    std::function<Matrix(const Matrix&)> jac_operator(const Matrix& x) const override;

private:
    Matrix a_;
    Matrix b_;
    Matrix c_;
    Eigen::Index p_;
};

/// Monotone log-det field on S++(m); zeros are exactly {det X = 1}. No
/// Jacobian lift (the hybrid solver rejects it).
class LogDetField final : public VectorField {
public:
    explicit LogDetField(Eigen::Index m);

    manifold::ManifoldMeta domain() const override;
    std::string name() const override { return "logdet-spd"; }
    FieldValue eval(const Matrix& x) const override;

private:
    Eigen::Index m_;
};

// ---------------------------------------------------------------------------
// Helpers shared by solver and tests.
// ---------------------------------------------------------------------------

/// Riemannian residual ||F(X)||.
double residual_norm(const VectorField& field, const Matrix& x);

/// One-sided transported difference quotient
/// (F(R_X(h xi)) - T_{h xi} F(X)) / h, the probe of the initial-step
/// heuristic. ops supplies the retraction and transport.
Matrix fd_field_derivative(const VectorField& field, const manifold::ManifoldOps& ops,
                           const Matrix& x, const Matrix& xi, double h);

}  // namespace mzero::field
