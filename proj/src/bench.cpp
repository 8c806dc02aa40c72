#include "mzero/bench.hpp"

#include "mzero/matlin.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <exception>
#include <thread>
#include <utility>

namespace mzero::bench {

namespace {

constexpr double kTwoPi = 6.283185307179586476925286766559;

std::uint64_t splitmix64(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

std::string fmt(const char* format, double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), format, v);
    return buf;
}

// Evaluates into a fresh matrix: writing 0.5*(a + a^T) straight back into a
// reads entries the assignment already overwrote.
Matrix symmetrized(const Matrix& m) { return 0.5 * (m + m.transpose()); }

}  // namespace

// ---------------------------------------------------------------------------
// RngStream
// ---------------------------------------------------------------------------

RngStream::RngStream(std::uint64_t seed) : seed_(seed), gen_(seed) {}

double RngStream::uniform() {
    // 53 uniformly distributed mantissa bits in [0, 1).
    return static_cast<double>(gen_() >> 11) * 0x1.0p-53;
}

double RngStream::normal() {
    if (have_spare_) {
        have_spare_ = false;
        return spare_;
    }
    const double u1 = 1.0 - uniform();  // (0, 1]: keeps the log finite
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    spare_ = r * std::sin(kTwoPi * u2);
    have_spare_ = true;
    return r * std::cos(kTwoPi * u2);
}

Matrix RngStream::uniform_matrix(Eigen::Index rows, Eigen::Index cols) {
    Matrix out(rows, cols);
    for (Eigen::Index j = 0; j < cols; ++j) {
        for (Eigen::Index i = 0; i < rows; ++i) {
            out(i, j) = uniform();
        }
    }
    return out;
}

Matrix RngStream::normal_matrix(Eigen::Index rows, Eigen::Index cols) {
    Matrix out(rows, cols);
    for (Eigen::Index j = 0; j < cols; ++j) {
        for (Eigen::Index i = 0; i < rows; ++i) {
            out(i, j) = normal();
        }
    }
    return out;
}

RngStream RngStream::substream(std::uint64_t index) const {
    return RngStream(splitmix64(seed_ + splitmix64(index + 1)));
}

// ---------------------------------------------------------------------------
// Problem generation
// ---------------------------------------------------------------------------

OjaProblem gen_oja(Eigen::Index m, Eigen::Index p, RngStream& stream) {
    if (!(m > p && p >= 1)) {
        throw ConstraintViolated("gen_oja: need m > p >= 1");
    }
    for (int attempt = 0;; ++attempt) {
        try {
            Vector d = stream.uniform_matrix(m, 1);
            Matrix q = matlin::qf(stream.normal_matrix(m, m)).q;
            Matrix a = q * d.asDiagonal() * q.transpose();
            a = symmetrized(a);
            Matrix x0 = matlin::qf(stream.normal_matrix(m, p)).q;
            return {std::move(a), std::move(x0)};
        } catch (const RankDeficient&) {
            if (attempt >= 1) {
                throw;  // a second zero-probability event: give up
            }
        }
    }
}

TraceRatioProblem gen_trace_ratio(Eigen::Index m, Eigen::Index p, RngStream& stream) {
    if (p < 1) {
        throw ConstraintViolated("gen_trace_ratio: need p >= 1");
    }
    if (m <= 2 * p) {
        throw ConstraintViolated("gen_trace_ratio: need m > 2p");
    }
    for (int attempt = 0;; ++attempt) {
        try {
            Matrix a = stream.uniform_matrix(m, m);
            a = symmetrized(a);
            Matrix q = matlin::qf(stream.normal_matrix(m, m)).q;
            Vector eigs = Vector::Constant(m, 50.0) +
                          10.0 * (2.0 * stream.uniform_matrix(m, 1).array() - 1.0).matrix();
            Matrix b = q * eigs.asDiagonal() * q.transpose();
            b = symmetrized(b);
            Matrix c = stream.normal_matrix(m, m);
            c = symmetrized(c);
            Matrix x0 = matlin::qf(stream.normal_matrix(m, p)).q;
            return {std::move(a), std::move(b), std::move(c), std::move(x0)};
        } catch (const RankDeficient&) {
            if (attempt >= 1) {
                throw;
            }
        }
    }
}

Matrix gen_spd_start(Eigen::Index m, RngStream& stream) {
    if (m < 1) {
        throw ConstraintViolated("gen_spd_start: need m >= 1");
    }
    for (int attempt = 0;; ++attempt) {
        try {
            Vector g = Vector::Constant(m, 0.1) + stream.uniform_matrix(m, 1);
            Matrix w = matlin::qf(stream.normal_matrix(m, m)).q;
            Matrix x0 = w * g.asDiagonal() * w.transpose();
            return 0.5 * (x0 + x0.transpose());
        } catch (const RankDeficient&) {
            if (attempt >= 1) {
                throw;
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Experiments
// ---------------------------------------------------------------------------

const char* field_name(FieldKind f) {
    switch (f) {
        case FieldKind::Oja:
            return "oja";
        case FieldKind::TraceRatio:
            return "trace-ratio";
        case FieldKind::LogDetSpd:
            return "logdet-spd";
    }
    return "unknown";
}

const char* solver_name(SolverKind s) {
    return s == SolverKind::Prp ? "prp" : "hybrid";
}

namespace {

struct TrialOutcome {
    prp::Status status = prp::Status::MaxIter;
    double ct = 0.0;
    double res0 = 0.0;
    double res = 0.0;
    long it = 0;
    long nf = 0;
    long ncg = 0;
    double ct_prp = 0.0;
    double ct_newton = 0.0;
    long it_prp = 0;
    long it_newton = 0;
    long nf_prp = 0;
    long nf_newton = 0;
    std::vector<TraceRow> history;
    bool converged() const { return status == prp::Status::Converged; }
};

std::vector<TraceRow> tag_history(const std::vector<prp::HistoryRow>& rows, const char* phase,
                                  long iter_offset, bool drop_last) {
    std::vector<TraceRow> out;
    const std::size_t n = rows.size() - (drop_last && !rows.empty() ? 1 : 0);
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        const auto& r = rows[i];
        out.push_back({r.k + iter_offset, r.residual, r.alpha, r.sign, r.backtracks, phase});
    }
    return out;
}

TrialOutcome run_trial(const ExperimentSpec& spec, int trial_index) {
    RngStream stream = RngStream(spec.base_seed).substream(static_cast<std::uint64_t>(trial_index));

    std::unique_ptr<field::VectorField> fld;
    Matrix x0;
    switch (spec.field) {
        case FieldKind::Oja: {
            OjaProblem prob = gen_oja(spec.m, spec.p, stream);
            fld = std::make_unique<field::OjaField>(std::move(prob.a), spec.p);
            x0 = std::move(prob.x0);
            break;
        }
        case FieldKind::TraceRatio: {
            TraceRatioProblem prob = gen_trace_ratio(spec.m, spec.p, stream);
            fld = std::make_unique<field::TraceRatioField>(std::move(prob.a), std::move(prob.b),
                                                           std::move(prob.c), spec.p);
            x0 = std::move(prob.x0);
            break;
        }
        case FieldKind::LogDetSpd: {
            fld = std::make_unique<field::LogDetField>(spec.m);
            x0 = gen_spd_start(spec.m, stream);
            break;
        }
    }
    auto ops = manifold::make_ops(fld->domain(), spec.spd_mode);

    TrialOutcome out;
    if (spec.solver == SolverKind::Prp) {
        prp::SolveReport rep = prp::prp_solve(*fld, *ops, x0, spec.prp);
        out.status = rep.status;
        out.ct = rep.wall_time;
        out.ct_prp = rep.wall_time;
        out.res0 = rep.res0;
        out.res = rep.res_final;
        out.it = rep.iters;
        out.it_prp = rep.iters;
        out.nf = rep.nf;
        out.nf_prp = rep.nf;
        out.history = tag_history(rep.history, "prp", 0, false);
    } else {
        newton::HybridConfig hcfg = spec.hybrid;
        hcfg.prp = spec.prp;
        newton::HybridReport rep = newton::hybrid_solve(*fld, *ops, x0, hcfg);
        out.status = rep.status;
        out.ct_prp = rep.prp_phase.wall_time;
        out.ct_newton = rep.newton_phase.wall_time;
        out.ct = out.ct_prp + out.ct_newton;
        out.res0 = rep.prp_phase.res0;
        out.res = rep.res_final;
        out.it_prp = rep.prp_phase.iters;
        out.it_newton = rep.newton_phase.iters;
        out.it = out.it_prp + out.it_newton;
        out.nf_prp = rep.prp_phase.nf;
        out.nf_newton = rep.newton_phase.nf;
        out.nf = out.nf_prp + out.nf_newton;
        out.ncg = rep.newton_phase.ncg;
        const bool newton_ran = !rep.newton_phase.history.empty();
        out.history = tag_history(rep.prp_phase.history, "prp", 0, newton_ran);
        if (newton_ran) {
            auto tail = tag_history(rep.newton_phase.history, "newton", rep.prp_phase.iters, false);
            out.history.insert(out.history.end(), tail.begin(), tail.end());
        }
    }
    return out;
}

}  // namespace

ExperimentResult run_experiment(const ExperimentSpec& spec) {
    if (spec.trials < 1) {
        throw ConstraintViolated("run_experiment: need trials >= 1");
    }
    if (spec.m < 1) {
        throw ConstraintViolated("run_experiment: need m >= 1");
    }

    const int trials = spec.trials;
    std::vector<TrialOutcome> outcomes(trials);
    std::vector<std::exception_ptr> errors(trials);

    const int jobs = std::max(1, std::min(spec.jobs, trials));
    if (jobs == 1) {
        for (int i = 0; i < trials; ++i) {
            outcomes[i] = run_trial(spec, i);
        }
    } else {
        std::atomic<int> next{0};
        auto worker = [&]() {
            while (true) {
                const int i = next.fetch_add(1);
                if (i >= trials) {
                    return;
                }
                try {
                    outcomes[i] = run_trial(spec, i);
                } catch (...) {
                    errors[i] = std::current_exception();
                }
            }
        };
        std::vector<std::thread> pool;
        pool.reserve(jobs);
        for (int j = 0; j < jobs; ++j) {
            pool.emplace_back(worker);
        }
        for (auto& t : pool) {
            t.join();
        }
        for (int i = 0; i < trials; ++i) {
            if (errors[i]) {
                std::rethrow_exception(errors[i]);
            }
        }
    }

    ExperimentResult result;
    TableRow& row = result.row;
    row.m = spec.m;
    row.p = spec.field == FieldKind::LogDetSpd ? 0 : spec.p;
    row.dim = manifold::manifold_dim(spec.field == FieldKind::LogDetSpd
                                         ? manifold::ManifoldMeta::spd(spec.m)
                                         : manifold::ManifoldMeta::stiefel(spec.m, spec.p));

    long n_ok = 0;
    for (int i = 0; i < trials; ++i) {
        const TrialOutcome& t = outcomes[i];
        result.statuses.push_back(t.status);
        result.histories.push_back(std::move(outcomes[i].history));
        if (!t.converged()) {
            ++row.failures;
            continue;
        }
        ++n_ok;
        row.ct += t.ct;
        row.it += static_cast<double>(t.it);
        row.nf += static_cast<double>(t.nf);
        row.ncg += static_cast<double>(t.ncg);
        row.res0 += t.res0;
        row.res += t.res;
        row.ct_prp += t.ct_prp;
        row.ct_newton += t.ct_newton;
        row.it_prp += static_cast<double>(t.it_prp);
        row.it_newton += static_cast<double>(t.it_newton);
        row.nf_prp += static_cast<double>(t.nf_prp);
        row.nf_newton += static_cast<double>(t.nf_newton);
    }
    if (n_ok > 0) {
        const double inv = 1.0 / static_cast<double>(n_ok);
        row.ct *= inv;
        row.it *= inv;
        row.nf *= inv;
        row.ncg *= inv;
        row.res0 *= inv;
        row.res *= inv;
        row.ct_prp *= inv;
        row.ct_newton *= inv;
        row.it_prp *= inv;
        row.it_newton *= inv;
        row.nf_prp *= inv;
        row.nf_newton *= inv;
    }
    if (spec.ct_zero) {
        row.ct = 0.0;
        row.ct_prp = 0.0;
        row.ct_newton = 0.0;
    }
    return result;
}

// ---------------------------------------------------------------------------
// Emission
// ---------------------------------------------------------------------------

std::string emit_table(const std::vector<TableRow>& rows) {
    std::string out = "m,p,DIM,CT,IT,NF,NCG,Res0,Res,failures\n";
    for (const TableRow& r : rows) {
        out += std::to_string(r.m) + ',' + std::to_string(r.p) + ',' + std::to_string(r.dim) +
               ',' + fmt("%.3e", r.ct) + ',' + fmt("%.3e", r.it) + ',' + fmt("%.3e", r.nf) + ',' +
               fmt("%.3e", r.ncg) + ',' + fmt("%.3e", r.res0) + ',' + fmt("%.3e", r.res) + ',' +
               std::to_string(r.failures) + '\n';
    }
    return out;
}

std::string emit_history(const std::vector<TraceRow>& trace) {
    std::string out = "iter,residual,alpha,sign,backtracks,phase\n";
    for (const TraceRow& r : trace) {
        out += std::to_string(r.iter) + ',' + fmt("%.9e", r.residual) + ',' +
               fmt("%.9e", r.alpha) + ',' + std::to_string(r.sign) + ',' +
               std::to_string(r.backtracks) + ',' + r.phase + '\n';
    }
    return out;
}

std::string table_filename(const ExperimentSpec& spec) {
    const Eigen::Index p = spec.field == FieldKind::LogDetSpd ? 0 : spec.p;
    return std::string(field_name(spec.field)) + "_" + std::to_string(spec.m) + "x" +
           std::to_string(p) + "_" + solver_name(spec.solver) + ".csv";
}

std::string history_filename(const ExperimentSpec& spec, int trial) {
    const Eigen::Index p = spec.field == FieldKind::LogDetSpd ? 0 : spec.p;
    return std::string(field_name(spec.field)) + "_" + std::to_string(spec.m) + "x" +
           std::to_string(p) + "_" + solver_name(spec.solver) + "_trial" + std::to_string(trial) +
           "_history.csv";
}

}  // namespace mzero::bench
