#include "mzero/newton.hpp"

#include "mzero/matlin.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <utility>

namespace mzero::newton {

namespace {

double tr_inner(const Matrix& a, const Matrix& b) { return a.cwiseProduct(b).sum(); }

}  // namespace

void HybridConfig::validate() const {
    if (!(zeta2 > 0.0 && zeta2 < zeta1)) {
        throw ConstraintViolated("HybridConfig: need 0 < zeta2 < zeta1");
    }
    if (!(varsigma > 0.0 && varsigma < 1.0)) {
        throw ConstraintViolated("HybridConfig: varsigma must lie in (0,1)");
    }
    if (cg_max < 0) {
        throw ConstraintViolated("HybridConfig: cg_max must be nonnegative (0 = auto)");
    }
    if (newton_max < 0) {
        throw ConstraintViolated("HybridConfig: newton_max must be nonnegative");
    }
    prp.validate();
}

long HybridConfig::effective_cg_cap(long horizontal_dim) const {
    if (cg_max > 0) {
        return cg_max;
    }
    return std::min(horizontal_dim, 2000L);
}

CgResult truncated_cg(const std::function<Matrix(const Matrix&)>& apply_j, const Matrix& rhs,
                      double rel_tol, long cap) {
    CgResult out;
    out.delta = Matrix::Zero(rhs.rows(), rhs.cols());

    const double rhs_norm = rhs.norm();
    const double target = rel_tol * rhs_norm;
    if (rhs_norm == 0.0) {
        return out;  // delta = 0 solves exactly
    }

    Matrix r = rhs;  // residual rhs - J delta at delta = 0
    Matrix d = r;
    double rr = tr_inner(r, r);

    Matrix best_delta = out.delta;
    double best_res = std::sqrt(rr);
    if (best_res <= target) {
        return out;
    }

    while (out.ncg < cap) {
        Matrix jd = apply_j(d);
        ++out.ncg;
        const double djd = tr_inner(d, jd);
        if (djd <= 1e-14 * tr_inner(d, d)) {
            out.degraded = true;  // non-positive curvature: truncate here
            break;
        }
        const double step = rr / djd;
        out.delta += step * d;
        r -= step * jd;
        const double rr_next = tr_inner(r, r);
        const double res = std::sqrt(rr_next);
        if (res < best_res) {
            best_res = res;
            best_delta = out.delta;
        }
        if (res <= target) {
            out.delta = std::move(best_delta);
            return out;
        }
        d = r + (rr_next / rr) * d;
        rr = rr_next;
    }

    out.degraded = true;  // cap or curvature: hand back the best iterate
    out.delta = std::move(best_delta);
    return out;
}

double forcing_tol(double res, double varsigma) { return std::min(varsigma, res); }

NewtonStepResult newton_step(const field::VectorField& fld, const Matrix& x,
                             const field::FieldValue& f_x, double varsigma, long cg_cap) {
    NewtonStepResult out;
    const double rel_tol = forcing_tol(f_x.norm, varsigma);
    auto lift = fld.jac_operator(x);
    // The CG vectors are horizontal in exact arithmetic, but rounding leaves a
    // component along X whose size is fixed by ||A||, not by the shrinking
    // vectors themselves. Re-projecting is the identity on horizontal input
    // and keeps that drift from tripping the lift's horizontality guard.
    auto apply_j = [&x, &lift](const Matrix& v) {
        return lift(Matrix(v - x * (x.transpose() * v)));
    };
    const Matrix rhs = -f_x.f + x * (x.transpose() * f_x.f);
    CgResult cg = truncated_cg(apply_j, rhs, rel_tol, cg_cap);
    out.ncg = cg.ncg;
    out.cg_degraded = cg.degraded;
    if (cg.delta.norm() == 0.0 && f_x.norm > 0.0) {
        cg.delta = -f_x.f;  // no CG progress at all: residual step
        out.used_fallback = true;
    }
    out.x_next = matlin::qf(x + cg.delta).q;
    out.f_next = fld.eval(out.x_next);
    out.nf = 1;
    return out;
}

HybridReport hybrid_solve(const field::VectorField& fld, const manifold::ManifoldOps& ops,
                          const Matrix& x0, const HybridConfig& cfg) {
    cfg.validate();
    if (!fld.has_jacobian()) {
        throw ConstraintViolated("hybrid_solve: field '" + fld.name() +
                                 "' supplies no Jacobian lift");
    }
    const manifold::ManifoldMeta meta = ops.meta();
    if (meta.kind != manifold::ManifoldKind::Stiefel) {
        throw ConstraintViolated("hybrid_solve: Newton phase is defined on Stiefel only");
    }

    HybridReport rep;
    const long hdim = manifold::manifold_dim(
        manifold::ManifoldMeta::grassmann_horizontal(meta.m, meta.p));
    rep.cg_cap_used = cfg.effective_cg_cap(hdim);

    // Phase 1: derivative-free PRP down to zeta1.
    const double zeta1 = cfg.zeta1;
    rep.prp_phase = prp::prp_solve(fld, ops, x0, cfg.prp,
                                   [zeta1](double res, double /*res0*/) { return res < zeta1; });
    if (rep.prp_phase.status != prp::Status::Converged) {
        rep.status = rep.prp_phase.status;
        rep.x_final = rep.prp_phase.x_final;
        rep.res_final = rep.prp_phase.res_final;
        return rep;
    }

    // Phase 2: inexact Newton down to zeta2.
    const auto t_start = std::chrono::steady_clock::now();
    Matrix x = rep.prp_phase.x_final;
    field::FieldValue f = fld.eval(x);
    rep.newton_phase.nf = 1;

    Matrix best_x = x;
    double best_res = f.norm;

    long k = 0;
    while (true) {
        rep.newton_phase.history.push_back({k, f.norm, 0.0, 0, 0});
        if (f.norm < cfg.zeta2) {
            rep.status = prp::Status::Converged;
            break;
        }
        if (k >= cfg.newton_max) {
            rep.status = prp::Status::MaxIter;
            break;
        }
        NewtonStepResult st = newton_step(fld, x, f, cfg.varsigma, rep.cg_cap_used);
        rep.newton_phase.ncg += st.ncg;
        rep.newton_phase.nf += st.nf;
        const bool stalled = st.cg_degraded && st.f_next.merit() > f.merit();
        x = std::move(st.x_next);
        f = std::move(st.f_next);
        ++k;
        if (f.norm < best_res) {
            best_res = f.norm;
            best_x = x;
        }
        if (stalled) {
            rep.newton_phase.history.push_back({k, f.norm, 0.0, 0, 0});
            rep.status = prp::Status::NewtonStalled;
            break;
        }
    }
    rep.newton_phase.iters = k;
    rep.newton_phase.wall_time =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();

    rep.x_final = std::move(best_x);
    rep.res_final = best_res;
    return rep;
}

}  // namespace mzero::newton
