#pragma once

#include "mzero/types.hpp"

#include <cstdint>
#include <memory>
#include <string>

namespace mzero::manifold {

// ---------------------------------------------------------------------------
// Points and tangents. Strong types so a Stiefel tangent cannot silently be
// fed to an SPD operation; construction enforces the manifold invariant.
// ---------------------------------------------------------------------------

/// Point on the compact Stiefel manifold St(p,m): an m x p matrix with
/// orthonormal columns, ||X'X - I||_F <= 1e-10.
class StiefelPoint {
public:
    explicit StiefelPoint(Matrix x);

    const Matrix& mat() const { return x_; }
    Eigen::Index m() const { return x_.rows(); }
    Eigen::Index p() const { return x_.cols(); }

    /// Frobenius defect ||X'X - I||_F, re-checkable at any time.
    double orthonormality_defect() const;

    static constexpr double kTol = 1e-10;

private:
    Matrix x_;
};

/// Tangent vector at a Stiefel point: X'Z antisymmetric (sym(X'Z) = 0 to
/// 1e-10). Carries its base point for base-consistency checks.
class StiefelTangent {
public:
    StiefelTangent(StiefelPoint base, Matrix z);

    const Matrix& mat() const { return z_; }
    const StiefelPoint& base() const { return base_; }
    double norm() const { return z_.norm(); }

    static constexpr double kTol = 1e-10;

private:
    StiefelPoint base_;
    Matrix z_;
};

/// Point on the SPD manifold S++(m): symmetric (to 1e-12) positive definite.
/// Caches the Cholesky factor and ln det from the definiteness check so the
/// metric and the log-det field get them for free.
class SpdPoint {
public:
    explicit SpdPoint(Matrix x);

    const Matrix& mat() const { return x_; }
    Eigen::Index m() const { return x_.rows(); }
    double lndet() const { return lndet_; }
    const Matrix& chol_factor() const { return chol_; }

    /// X^{-1} B via the cached Cholesky factor.
    Matrix solve(const Matrix& b) const;

    static constexpr double kSymTol = 1e-12;

private:
    Matrix x_;
    Matrix chol_;
    double lndet_;
};

/// Tangent vector at an SPD point: any symmetric matrix (to 1e-12).
class SpdTangent {
public:
    SpdTangent(SpdPoint base, Matrix z);

    const Matrix& mat() const { return z_; }
    const SpdPoint& base() const { return base_; }

    static constexpr double kSymTol = 1e-12;

private:
    SpdPoint base_;
    Matrix z_;
};

// ---------------------------------------------------------------------------
// Manifold metadata and dimensions.
// ---------------------------------------------------------------------------

enum class ManifoldKind : std::uint8_t { Stiefel, Spd, GrassmannHorizontal };

struct ManifoldMeta {
    ManifoldKind kind;
    Eigen::Index m;
    Eigen::Index p;  // ignored for Spd

    static ManifoldMeta stiefel(Eigen::Index m, Eigen::Index p) {
        return {ManifoldKind::Stiefel, m, p};
    }
    static ManifoldMeta spd(Eigen::Index m) { return {ManifoldKind::Spd, m, 0}; }
    static ManifoldMeta grassmann_horizontal(Eigen::Index m, Eigen::Index p) {
        return {ManifoldKind::GrassmannHorizontal, m, p};
    }
};

/// Intrinsic dimension: Stiefel(m,p) -> mp - p(p+1)/2; Spd(m) -> m(m+1)/2;
/// GrassmannHorizontal(m,p) -> p(m-p).
long manifold_dim(const ManifoldMeta& meta);

// ---------------------------------------------------------------------------
// Stiefel geometry: Frobenius metric, qf retraction, projection transport.
// ---------------------------------------------------------------------------

/// Metric g_X(xi, eta) = tr(xi' eta). Throws BaseMismatch when the bases
/// differ.
double st_inner(const StiefelTangent& xi, const StiefelTangent& eta);

/// Tangent-space projection P_X Z = Z - X sym(X'Z).
StiefelTangent st_project(const StiefelPoint& x, const Matrix& z);

/// Retraction R_X(xi) = qf(X + xi).
StiefelPoint st_retract(const StiefelPoint& x, const StiefelTangent& xi);

/// Vector transport T_eta xi = P_Y xi with Y = R_X(eta). Projection never
/// increases the Frobenius norm, so the transport bound holds with C = 1.
StiefelTangent st_transport(const StiefelPoint& x, const StiefelTangent& eta,
                            const StiefelTangent& xi);

// ---------------------------------------------------------------------------
// SPD geometry: affine-invariant metric, second-order/additive retraction,
// identity transport.
// ---------------------------------------------------------------------------

enum class SpdRetraction : std::uint8_t { SecondOrder, Additive };

/// Metric <xi, eta>_X = tr(xi X^{-1} eta X^{-1}).
double spd_inner(const SpdPoint& x, const SpdTangent& xi, const SpdTangent& eta);

/// SecondOrder (default): X + xi + (1/2) xi X^{-1} xi, SPD for every
/// symmetric xi. Additive: X + xi, halving xi up to 30 times until the
/// result is SPD; throws RetractionFailed when halvings run out.
SpdPoint spd_retract(const SpdPoint& x, const SpdTangent& xi,
                     SpdRetraction mode = SpdRetraction::SecondOrder);

/// Identity transport: same matrix, rebased at R_X(eta).
SpdTangent spd_transport(const SpdTangent& eta, const SpdTangent& xi,
                         SpdRetraction mode = SpdRetraction::SecondOrder);

// ---------------------------------------------------------------------------
// Grassmann horizontal structure (on Stiefel representatives).
// ---------------------------------------------------------------------------

/// Horizontal projection (I - XX')Z; X' * result = 0.
Matrix gr_horizontal_project(const StiefelPoint& x, const Matrix& z);

// ---------------------------------------------------------------------------
// Type-erased adapter so the solver loop is written once for both
// geometries. Points and tangents travel as raw matrices; the adapter owns
// the invariant checks and the metric.
// ---------------------------------------------------------------------------

class ManifoldOps {
public:
    virtual ~ManifoldOps() = default;

    virtual ManifoldMeta meta() const = 0;

    /// Throws InvalidPoint when x fails the manifold invariant.
    virtual void check_point(const Matrix& x) const = 0;

    /// Distance of x from the constraint set in the invariant's norm.
    virtual double point_defect(const Matrix& x) const = 0;

    /// Cheap repair used when round-off accumulates (qf on Stiefel,
    /// symmetrization on SPD).
    virtual Matrix reproject(const Matrix& x) const = 0;

    virtual double inner(const Matrix& x, const Matrix& xi, const Matrix& eta) const = 0;
    virtual Matrix retract(const Matrix& x, const Matrix& xi) const = 0;

    /// Transport of xi from x to retract(x, eta).
    virtual Matrix transport(const Matrix& x, const Matrix& eta, const Matrix& xi) const = 0;

    /// Transport of xi into the tangent space at y, where y is a retracted
    /// point the caller already holds; avoids recomputing the retraction.
    virtual Matrix transport_at(const Matrix& y, const Matrix& xi) const = 0;

    double norm(const Matrix& x, const Matrix& xi) const;
};

class StiefelOps final : public ManifoldOps {
public:
    StiefelOps(Eigen::Index m, Eigen::Index p);

    ManifoldMeta meta() const override;
    void check_point(const Matrix& x) const override;
    double point_defect(const Matrix& x) const override;
    Matrix reproject(const Matrix& x) const override;
    double inner(const Matrix& x, const Matrix& xi, const Matrix& eta) const override;
    Matrix retract(const Matrix& x, const Matrix& xi) const override;
    Matrix transport(const Matrix& x, const Matrix& eta, const Matrix& xi) const override;
    Matrix transport_at(const Matrix& y, const Matrix& xi) const override;

private:
    Eigen::Index m_;
    Eigen::Index p_;
};

class SpdOps final : public ManifoldOps {
public:
    explicit SpdOps(Eigen::Index m, SpdRetraction mode = SpdRetraction::SecondOrder);

    ManifoldMeta meta() const override;
    void check_point(const Matrix& x) const override;
    double point_defect(const Matrix& x) const override;
    Matrix reproject(const Matrix& x) const override;
    double inner(const Matrix& x, const Matrix& xi, const Matrix& eta) const override;
    Matrix retract(const Matrix& x, const Matrix& xi) const override;
    Matrix transport(const Matrix& x, const Matrix& eta, const Matrix& xi) const override;
    Matrix transport_at(const Matrix& y, const Matrix& xi) const override;

    SpdRetraction retraction_mode() const { return mode_; }

private:
    Eigen::Index m_;
    SpdRetraction mode_;
};

/// Point-manifold ops for a Stiefel or Spd meta; GrassmannHorizontal is a
/// structure on Stiefel representatives, not a point manifold, and is
/// rejected.
std::unique_ptr<ManifoldOps> make_ops(const ManifoldMeta& meta,
                                      SpdRetraction spd_mode = SpdRetraction::SecondOrder);

}  // namespace mzero::manifold
