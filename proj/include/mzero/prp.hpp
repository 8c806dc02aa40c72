#pragma once

#include "mzero/field.hpp"
#include "mzero/manifold.hpp"
#include "mzero/types.hpp"

#include <functional>
#include <vector>

namespace mzero::prp {

/// Solver parameters; the defaults are the tuned values the method ships
/// with (backtracking factor 0.5, averaging weight 0.6, sufficient-decrease
/// weights 1e-10, step clamps [1e-10, 1e10], probe step 1e-8, stopping
/// tolerances e_a = 1e-6 / e_r = 1e-5).
struct PrpConfig {
    double rho = 0.5;
    double t1 = 1e-10;
    double t2 = 1e-10;
    double lambda = 0.6;
    double alpha_min = 1e-10;
    double alpha_max = 1e10;
    double eps_fd = 1e-8;
    double e_a = 1e-6;
    double e_r = 1e-5;
    long max_iter = 20000;
    int max_backtracks = 60;

    /// Throws ConstraintViolated when a parameter leaves its legal range.
    void validate() const;
};

enum class Status { Converged, MaxIter, LineSearchFailed, NewtonStalled };

const char* status_name(Status s);

/// One iteration's worth of trace: the residual at X_k and the step taken
/// from X_k. The final row carries the terminal residual with zeroed step
/// data.
struct HistoryRow {
    long k = 0;
    double residual = 0.0;
    double alpha = 0.0;
    int sign = 0;
    int backtracks = 0;
};

struct SolveReport {
    Status status = Status::MaxIter;
    long iters = 0;
    long nf = 0;  // field evaluations, probes and line-search trials included
    double res0 = 0.0;
    double res_final = 0.0;
    std::vector<HistoryRow> history;  // length iters + 1
    double wall_time = 0.0;           // seconds, the solve call only
    Matrix x_final;

    // Diagnostics: runtime-assertion counters, all zero on healthy runs.
    long pineq_violations = 0;     // f(X_k) <= Gamma_k or Gamma update bound broken
    long levelset_violations = 0;  // f(X_k) <= f(X_0) + sum delta broken
    long reprojections = 0;        // iterate repair after constraint drift

    bool converged() const { return status == Status::Converged; }
};

// ---------------------------------------------------------------------------
// Algorithm pieces, exposed for direct testing.
// ---------------------------------------------------------------------------

/// Forgiveness schedule delta_k = ||F(X_0)|| / ((2+k) ln^2(2+k)); summable.
double delta_schedule(long k, double f0_norm);

/// beta_k = <F(X_k), Y_{k-1}>_{X_k} / ||F(X_{k-1})||^2 with
/// Y_{k-1} = F(X_k) - T F(X_{k-1}); the transported previous value is
/// supplied by the caller. Throws DivideByZero when f_prev_norm <= 1e-300.
double compute_beta(const manifold::ManifoldOps& ops, const Matrix& x_k, const Matrix& f_k,
                    const Matrix& f_prev_transported, double f_prev_norm);

/// Conjugate direction -F_k + beta * (transported previous direction); pass
/// beta = 0 and an empty prev for the k = 0 branch -F_0.
Matrix compute_direction(const Matrix& f_k, double beta, const Matrix& prev_dir_transported);

/// The derivative-free initial-step heuristic
/// sigma = |<F(X_k), dir>_{X_k} / <Z_k, T_{eps dir} dir>_{Y}| with
/// Z_k = (F(R_X(eps dir)) - T_{eps dir} F(X_k)) / eps, clamped to
/// [alpha_min, alpha_max]; a vanishing denominator (|.| <= 1e-300) falls
/// back to alpha = 1. Costs one field evaluation, added to nf.
double initial_step(const field::VectorField& fld, const manifold::ManifoldOps& ops,
                    const Matrix& x, const field::FieldValue& f_x, const Matrix& dir,
                    const PrpConfig& cfg, long& nf);

struct LineSearchResult {
    bool ok = false;
    double alpha = 0.0;
    int sign = 0;
    int backtracks = 0;  // fully failed trial levels before acceptance
    Matrix x_next;
    field::FieldValue f_next;  // the accepted trial's evaluation, reusable as F(X_{k+1})
    Matrix step;               // accepted sign * alpha * dir, anchored at x
    long nf_used = 0;
};

/// Non-monotone two-sided backtracking from alpha0: at each level alpha =
/// alpha0 rho^j test the +alpha condition
///   f(R_X(alpha dir)) <= Gamma_k + delta_k - t1 alpha^2 ||dir||^2
///                                          - t2 alpha^2 f(X_k)
/// then its -alpha mirror; first success wins. ok = false after
/// max_backtracks levels, immediately for a zero direction.
LineSearchResult line_search(const field::VectorField& fld, const manifold::ManifoldOps& ops,
                             const Matrix& x, double f_merit_x, const Matrix& dir, double alpha0,
                             double gamma_k, double delta_k, const PrpConfig& cfg);

/// Averaged-merit recursion: Phi' = lambda Phi + 1,
/// Gamma' = (lambda Phi (Gamma + delta) + f_next) / Phi'.
std::pair<double, double> gamma_update(double gamma_k, double phi_k, double lambda,
                                       double delta_k, double f_next);

/// Relative/absolute stopping rule ||F(X_k)||/sqrt(M) <= e_a +
/// e_r ||F(X_0)||/sqrt(M).
bool check_stop(double res_k, double res_0, long manifold_dim, double e_a, double e_r);

/// Optional replacement for the stopping rule (used by the hybrid driver's
/// phase 1); receives (res_k, res_0).
using StopOverride = std::function<bool(double, double)>;

/// The full derivative-free PRP iteration. Invalid X0 raises; everything
/// else is reported through SolveReport.status.
SolveReport prp_solve(const field::VectorField& fld, const manifold::ManifoldOps& ops,
                      const Matrix& x0, const PrpConfig& cfg, const StopOverride& stop = {});

}  // namespace mzero::prp
