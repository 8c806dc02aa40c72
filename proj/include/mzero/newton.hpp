#pragma once

#include "mzero/field.hpp"
#include "mzero/manifold.hpp"
#include "mzero/prp.hpp"
#include "mzero/types.hpp"

#include <functional>
#include <vector>

namespace mzero::newton {

/// Hybrid solver parameters: run the derivative-free PRP phase down to
/// residual zeta1, then Newton steps (CG inner solves) down to zeta2.
struct HybridConfig {
    double zeta1 = 1e-3;
    double zeta2 = 1e-7;
    double varsigma = 1e-8;  // forcing-term cap
    long cg_max = 0;         // CG cap per step; 0 = auto min(p(m-p), 2000)
    long newton_max = 50;    // Newton step cap
    prp::PrpConfig prp;

    void validate() const;

    /// The cap actually used for a given horizontal-space dimension.
    long effective_cg_cap(long horizontal_dim) const;
};

struct CgResult {
    Matrix delta;
    long ncg = 0;          // operator applications
    bool degraded = false; // stopped by cap or curvature, not by tolerance
};

/// Truncated conjugate gradients for J delta = rhs in the trace inner
/// product, started from delta = 0. Exits on ||J delta - rhs|| <=
/// rel_tol ||rhs||, on the iteration cap, or on non-positive curvature
/// <d, Jd> <= 1e-14 ||d||^2; always returns the smallest-residual iterate
/// seen. Never throws on its own.
CgResult truncated_cg(const std::function<Matrix(const Matrix&)>& apply_j, const Matrix& rhs,
                      double rel_tol, long cap);

/// Forcing term for the inexact Newton solve: min(varsigma, res).
double forcing_tol(double res, double varsigma);

struct NewtonStepResult {
    Matrix x_next;
    field::FieldValue f_next;
    long ncg = 0;
    long nf = 0;              // field evaluations inside the step
    bool cg_degraded = false;
    bool used_fallback = false;  // CG made no progress; took delta = rhs
};

/// One inexact Newton step at x: solve the horizontal Newton equation
/// J[delta] = -F(x) by truncated CG with rel_tol = min(varsigma, ||F||),
/// retract via qf, and evaluate the new point.
NewtonStepResult newton_step(const field::VectorField& fld, const Matrix& x,
                             const field::FieldValue& f_x, double varsigma, long cg_cap);

struct NewtonPhase {
    long iters = 0;
    long nf = 0;
    long ncg = 0;
    std::vector<prp::HistoryRow> history;  // residual per Newton iterate, length iters + 1
    double wall_time = 0.0;
};

struct HybridReport {
    prp::SolveReport prp_phase;
    NewtonPhase newton_phase;
    prp::Status status = prp::Status::MaxIter;
    Matrix x_final;
    double res_final = 0.0;
    long cg_cap_used = 0;

    long total_nf() const { return prp_phase.nf + newton_phase.nf; }
    bool converged() const { return status == prp::Status::Converged; }
};

/// Algorithm: PRP phase with the stop rule overridden to ||F|| < zeta1,
/// then Newton steps until ||F|| < zeta2. The field must supply a Jacobian
/// lift (ConstraintViolated otherwise) and the manifold must be Stiefel.
/// A Newton step whose CG solve was degraded and whose merit increased ends
/// the run with status NewtonStalled; the report then carries the best
/// iterate seen.
HybridReport hybrid_solve(const field::VectorField& fld, const manifold::ManifoldOps& ops,
                          const Matrix& x0, const HybridConfig& cfg);

}  // namespace mzero::newton
