#pragma once

#include "mzero/field.hpp"
#include "mzero/manifold.hpp"
#include "mzero/newton.hpp"
#include "mzero/prp.hpp"
#include "mzero/types.hpp"

#include <cstdint>
#include <random>
#include <string>
#include <vector>

namespace mzero::bench {

/// Deterministic 64-bit-seeded variate stream: mt19937_64 words mapped to
/// uniforms by (x >> 11) * 2^-53, standard normals by Box-Muller (pairs,
/// with the second value cached). Matrices fill column by column. Identical
/// seeds give identical sequences on every platform.
class RngStream {
public:
    explicit RngStream(std::uint64_t seed);

    std::uint64_t seed() const { return seed_; }

    double uniform();  // [0, 1)
    double normal();   // standard normal

    Matrix uniform_matrix(Eigen::Index rows, Eigen::Index cols);
    Matrix normal_matrix(Eigen::Index rows, Eigen::Index cols);

    /// Statistically independent child stream for a trial index, derived by
    /// SplitMix64 mixing so neighbouring indices land far apart.
    RngStream substream(std::uint64_t index) const;

private:
    std::uint64_t seed_;
    std::mt19937_64 gen_;
    bool have_spare_ = false;
    double spare_ = 0.0;
};

// ---------------------------------------------------------------------------
// Problem generation
// ---------------------------------------------------------------------------

struct OjaProblem {
    Matrix a;   // SPD with uniform(0,1) eigenvalues
    Matrix x0;  // orthonormal start
};

/// D = uniform(m), Q = qf(normal(m,m)), A = Q diag(D) Q' (symmetrized),
/// X0 = qf(normal(m,p)). Retries once on a rank-deficient draw.
OjaProblem gen_oja(Eigen::Index m, Eigen::Index p, RngStream& stream);

struct TraceRatioProblem {
    Matrix a;   // symmetrized uniform(0,1) entries
    Matrix b;   // SPD, eigenvalues in [40, 60]
    Matrix c;   // symmetrized standard normal
    Matrix x0;  // orthonormal start
};

/// The quoted constructions; requires m > 2p (ConstraintViolated).
TraceRatioProblem gen_trace_ratio(Eigen::Index m, Eigen::Index p, RngStream& stream);

/// X0 = W diag(0.1 + uniform(m)) W' with W = qf(normal(m,m)); SPD with
/// eigenvalues in (0.1, 1.1).
Matrix gen_spd_start(Eigen::Index m, RngStream& stream);

// ---------------------------------------------------------------------------
// Experiments
// ---------------------------------------------------------------------------

enum class FieldKind { Oja, TraceRatio, LogDetSpd };
enum class SolverKind { Prp, Hybrid };

const char* field_name(FieldKind f);
const char* solver_name(SolverKind s);

struct ExperimentSpec {
    FieldKind field = FieldKind::Oja;
    Eigen::Index m = 0;
    Eigen::Index p = 0;  // ignored for LogDetSpd
    int trials = 10;
    SolverKind solver = SolverKind::Prp;
    std::uint64_t base_seed = 0;
    prp::PrpConfig prp;
    newton::HybridConfig hybrid;  // consulted when solver == Hybrid
    manifold::SpdRetraction spd_mode = manifold::SpdRetraction::SecondOrder;
    int jobs = 1;
    bool ct_zero = false;  // report CT as 0 for byte-stable output files
};

/// One line of a results table; means are over converged trials only, with
/// non-converged trials surfaced in `failures`.
struct TableRow {
    Eigen::Index m = 0;
    Eigen::Index p = 0;
    long dim = 0;
    double ct = 0.0;
    double it = 0.0;
    double nf = 0.0;
    double ncg = 0.0;
    double res0 = 0.0;
    double res = 0.0;
    int failures = 0;

    // Per-phase splits (hybrid runs; zero otherwise). Reported on stdout,
    // not part of the pinned CSV header.
    double ct_prp = 0.0;
    double ct_newton = 0.0;
    double it_prp = 0.0;
    double it_newton = 0.0;
    double nf_prp = 0.0;
    double nf_newton = 0.0;
};

/// One residual-trace row; phase is "prp" or "newton".
struct TraceRow {
    long iter = 0;
    double residual = 0.0;
    double alpha = 0.0;
    int sign = 0;
    int backtracks = 0;
    std::string phase;
};

struct ExperimentResult {
    TableRow row;
    std::vector<std::vector<TraceRow>> histories;  // per trial
    std::vector<prp::Status> statuses;             // per trial
};

/// Runs `trials` independently seeded solves (substream(i) of the base
/// seed), optionally on a `jobs`-wide worker pool; aggregation folds in
/// trial-index order, so the result is independent of scheduling.
ExperimentResult run_experiment(const ExperimentSpec& spec);

// ---------------------------------------------------------------------------
// Emission
// ---------------------------------------------------------------------------

/// CSV with header m,p,DIM,CT,IT,NF,NCG,Res0,Res,failures; floats as %.3e
/// (four significant digits); byte-deterministic.
std::string emit_table(const std::vector<TableRow>& rows);

/// CSV with header iter,residual,alpha,sign,backtracks,phase; residuals are
/// raw (consumers take the log).
std::string emit_history(const std::vector<TraceRow>& trace);

std::string table_filename(const ExperimentSpec& spec);
std::string history_filename(const ExperimentSpec& spec, int trial);

}  // namespace mzero::bench
