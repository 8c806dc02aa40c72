#include "mzero/prp.hpp"

#include <chrono>
#include <cmath>
#include <utility>

namespace mzero::prp {

namespace {

// Roundoff slack for the runtime inequality assertions: the proofs give the
// bounds in exact arithmetic, so a violation is only counted when it
// exceeds what accumulated rounding could produce.
double assert_slack(double scale) { return 1e-10 * std::max(1.0, std::abs(scale)); }

}  // namespace

void PrpConfig::validate() const {
    if (!(rho > 0.0 && rho < 1.0)) {
        throw ConstraintViolated("PrpConfig: rho must lie in (0,1)");
    }
    if (!(t1 > 0.0 && t2 > 0.0)) {
        throw ConstraintViolated("PrpConfig: t1, t2 must be positive");
    }
    if (!(lambda > 0.0 && lambda < 1.0)) {
        throw ConstraintViolated("PrpConfig: lambda must lie in (0,1)");
    }
    if (!(alpha_min > 0.0 && alpha_min <= alpha_max)) {
        throw ConstraintViolated("PrpConfig: need 0 < alpha_min <= alpha_max");
    }
    if (!(eps_fd > 0.0)) {
        throw ConstraintViolated("PrpConfig: eps_fd must be positive");
    }
    if (e_a < 0.0 || e_r < 0.0) {
        throw ConstraintViolated("PrpConfig: e_a, e_r must be nonnegative");
    }
    if (max_iter < 0) {
        throw ConstraintViolated("PrpConfig: max_iter must be nonnegative");
    }
    if (max_backtracks < 1) {
        throw ConstraintViolated("PrpConfig: max_backtracks must be at least 1");
    }
}

const char* status_name(Status s) {
    switch (s) {
        case Status::Converged:
            return "Converged";
        case Status::MaxIter:
            return "MaxIter";
        case Status::LineSearchFailed:
            return "LineSearchFailed";
        case Status::NewtonStalled:
            return "NewtonStalled";
    }
    return "Unknown";
}

double delta_schedule(long k, double f0_norm) {
    if (k < 0) {
        throw ConstraintViolated("delta_schedule: k must be nonnegative");
    }
    const double t = static_cast<double>(2 + k);
    const double l = std::log(t);
    return f0_norm / (t * l * l);
}

double compute_beta(const manifold::ManifoldOps& ops, const Matrix& x_k, const Matrix& f_k,
                    const Matrix& f_prev_transported, double f_prev_norm) {
    if (f_prev_norm <= 1e-300) {
        throw DivideByZero("compute_beta: previous residual vanished; stop rule should fire");
    }
    Matrix y = f_k - f_prev_transported;
    return ops.inner(x_k, f_k, y) / (f_prev_norm * f_prev_norm);
}

Matrix compute_direction(const Matrix& f_k, double beta, const Matrix& prev_dir_transported) {
    if (prev_dir_transported.size() == 0) {
        return -f_k;
    }
    return -f_k + beta * prev_dir_transported;
}

double initial_step(const field::VectorField& fld, const manifold::ManifoldOps& ops,
                    const Matrix& x, const field::FieldValue& f_x, const Matrix& dir,
                    const PrpConfig& cfg, long& nf) {
    Matrix step = cfg.eps_fd * dir;
    Matrix y = ops.retract(x, step);
    field::FieldValue f_y = fld.eval(y);
    ++nf;
    Matrix z = (f_y.f - ops.transport_at(y, f_x.f)) / cfg.eps_fd;
    Matrix dir_moved = ops.transport_at(y, dir);
    const double denom = ops.inner(y, z, dir_moved);
    if (std::abs(denom) <= 1e-300) {
        return 1.0;  // degenerate curvature probe: neutral unit step
    }
    const double numer = ops.inner(x, f_x.f, dir);
    const double sigma = std::abs(numer / denom);
    if (!std::isfinite(sigma)) {
        return 1.0;
    }
    if (sigma > cfg.alpha_max) {
        return cfg.alpha_max;
    }
    if (sigma < cfg.alpha_min) {
        return cfg.alpha_min;
    }
    return sigma;
}

LineSearchResult line_search(const field::VectorField& fld, const manifold::ManifoldOps& ops,
                             const Matrix& x, double f_merit_x, const Matrix& dir, double alpha0,
                             double gamma_k, double delta_k, const PrpConfig& cfg) {
    LineSearchResult res;
    const double dir_norm2 = ops.inner(x, dir, dir);
    if (!(dir_norm2 > 0.0)) {
        return res;  // zero direction: no alpha can make progress
    }
    double alpha = alpha0;
    for (int j = 0; j < cfg.max_backtracks; ++j, alpha *= cfg.rho) {
        const double bound =
            gamma_k + delta_k - cfg.t1 * alpha * alpha * dir_norm2 - cfg.t2 * alpha * alpha * f_merit_x;
        for (const int sign : {+1, -1}) {
            Matrix step = (sign * alpha) * dir;
            try {
                Matrix x_try = ops.retract(x, step);
                field::FieldValue f_try = fld.eval(x_try);
                ++res.nf_used;
                if (f_try.merit() <= bound) {
                    res.ok = true;
                    res.alpha = alpha;
                    res.sign = sign;
                    res.backtracks = j;
                    res.x_next = std::move(x_try);
                    res.f_next = std::move(f_try);
                    res.step = std::move(step);
                    return res;
                }
            } catch (const Error&) {
                // An infeasible trial (retraction or evaluation failure)
                // counts as a rejection for this sign at this level.
            }
        }
    }
    return res;
}

std::pair<double, double> gamma_update(double gamma_k, double phi_k, double lambda,
                                       double delta_k, double f_next) {
    const double phi_next = lambda * phi_k + 1.0;
    const double gamma_next = (lambda * phi_k * (gamma_k + delta_k) + f_next) / phi_next;
    return {gamma_next, phi_next};
}

bool check_stop(double res_k, double res_0, long manifold_dim, double e_a, double e_r) {
    const double root_m = std::sqrt(static_cast<double>(manifold_dim));
    return res_k <= root_m * e_a + e_r * res_0;
}

SolveReport prp_solve(const field::VectorField& fld, const manifold::ManifoldOps& ops,
                      const Matrix& x0, const PrpConfig& cfg, const StopOverride& stop) {
    cfg.validate();
    ops.check_point(x0);

    const auto t_start = std::chrono::steady_clock::now();
    SolveReport rep;

    Matrix x = x0;
    field::FieldValue f = fld.eval(x);
    rep.nf = 1;
    rep.res0 = f.norm;
    const double f0_merit = f.merit();
    const long dim = manifold::manifold_dim(ops.meta());
    const auto stopped = [&](double res) {
        return stop ? stop(res, rep.res0) : check_stop(res, rep.res0, dim, cfg.e_a, cfg.e_r);
    };

    double gamma = f0_merit;
    double phi = 1.0;
    double delta_sum = 0.0;  // sum of delta_j over completed iterations

    Matrix prev_f;        // F(X_{k-1})
    Matrix prev_dir;      // direction taken from X_{k-1}
    double prev_f_norm = 0.0;

    for (long k = 0;; ++k) {
        const double f_merit = f.merit();
        if (f_merit > gamma + assert_slack(gamma)) {
            ++rep.pineq_violations;
        }
        if (f_merit > f0_merit + delta_sum + assert_slack(f0_merit + delta_sum)) {
            ++rep.levelset_violations;
        }

        if (stopped(f.norm)) {
            rep.status = Status::Converged;
            rep.iters = k;
            rep.history.push_back({k, f.norm, 0.0, 0, 0});
            break;
        }
        if (k >= cfg.max_iter) {
            rep.status = Status::MaxIter;
            rep.iters = k;
            rep.history.push_back({k, f.norm, 0.0, 0, 0});
            break;
        }

        const double delta_k = delta_schedule(k, rep.res0);

        Matrix dir;
        if (k == 0) {
            dir = compute_direction(f.f, 0.0, Matrix());
        } else {
            Matrix f_prev_moved = ops.transport_at(x, prev_f);
            Matrix dir_prev_moved = ops.transport_at(x, prev_dir);
            const double beta = compute_beta(ops, x, f.f, f_prev_moved, prev_f_norm);
            dir = compute_direction(f.f, beta, dir_prev_moved);
        }

        if (!(ops.inner(x, dir, dir) > 0.0)) {
            rep.status = Status::LineSearchFailed;
            rep.iters = k;
            rep.history.push_back({k, f.norm, 0.0, 0, 0});
            break;
        }

        const double alpha0 = initial_step(fld, ops, x, f, dir, cfg, rep.nf);
        LineSearchResult ls = line_search(fld, ops, x, f_merit, dir, alpha0, gamma, delta_k, cfg);
        rep.nf += ls.nf_used;
        if (!ls.ok) {
            rep.status = Status::LineSearchFailed;
            rep.iters = k;
            rep.history.push_back({k, f.norm, 0.0, 0, 0});
            break;
        }

        if (ops.point_defect(ls.x_next) > 1e-10) {
            ls.x_next = ops.reproject(ls.x_next);
            ls.f_next = fld.eval(ls.x_next);
            ++rep.nf;
            ++rep.reprojections;
        }

        const auto [gamma_next, phi_next] = gamma_update(gamma, phi, cfg.lambda, delta_k, ls.f_next.merit());
        if (gamma_next > gamma + delta_k + assert_slack(gamma + delta_k)) {
            ++rep.pineq_violations;
        }

        rep.history.push_back({k, f.norm, ls.alpha, ls.sign, ls.backtracks});

        prev_f = std::move(f.f);
        prev_f_norm = f.norm;
        prev_dir = std::move(dir);
        gamma = gamma_next;
        phi = phi_next;
        delta_sum += delta_k;
        x = std::move(ls.x_next);
        f = std::move(ls.f_next);
    }

    rep.res_final = f.norm;
    rep.x_final = std::move(x);
    rep.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
    return rep;
}

}  // namespace mzero::prp
