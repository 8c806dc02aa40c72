#include "mzero/bench.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

namespace {

using namespace mzero;

struct CmdOptions {
    std::string field = "oja";
    long m = 0;
    long p = 1;
    std::uint64_t seed = 0;
    int trials = 10;
    int jobs = 1;
    bool ct_zero = false;
    std::string out;
    std::string history;       // solve: a path; bench/hybrid: flag via history_flag
    bool history_flag = false;
    std::string spd_retraction = "second-order";
    std::string config_path;

    prp::PrpConfig prp;
    newton::HybridConfig hybrid;
};

std::string trimmed(const std::string& s) {
    const auto begin = s.find_first_not_of(" \t\r");
    if (begin == std::string::npos) {
        return "";
    }
    const auto end = s.find_last_not_of(" \t\r");
    return s.substr(begin, end - begin + 1);
}

// Expands a flat key=value file into "--key=value" tokens. They are inserted
// ahead of the command-line flags, and every option takes its last occurrence,
// so explicit flags override the file and the file overrides built-in defaults.
std::vector<std::string> config_tokens(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw CLI::FileError("could not open config file " + path);
    }
    std::vector<std::string> tokens;
    std::string line;
    while (std::getline(in, line)) {
        if (const auto hash = line.find('#'); hash != std::string::npos) {
            line.erase(hash);
        }
        line = trimmed(line);
        if (line.empty()) {
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw CLI::FileError("config line is not key=value: '" + line + "'");
        }
        const std::string key = trimmed(line.substr(0, eq));
        std::string value = trimmed(line.substr(eq + 1));
        if (value.size() >= 2 && ((value.front() == '"' && value.back() == '"') ||
                                  (value.front() == '\'' && value.back() == '\''))) {
            value = value.substr(1, value.size() - 2);
        }
        if (key.empty()) {
            throw CLI::FileError("config line has an empty key: '" + line + "'");
        }
        tokens.push_back("--" + key + "=" + value);
    }
    return tokens;
}

bench::FieldKind parse_field(const std::string& name) {
    if (name == "oja") {
        return bench::FieldKind::Oja;
    }
    if (name == "trace-ratio") {
        return bench::FieldKind::TraceRatio;
    }
    return bench::FieldKind::LogDetSpd;
}

void add_size_options(CLI::App* cmd, CmdOptions& o) {
    cmd->option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
    cmd->add_option("--config", o.config_path,
                    "Flat key=value config file; flags take precedence");
    cmd->add_option("--field", o.field, "Vector field: oja | trace-ratio | logdet-spd")
        ->check(CLI::IsMember({"oja", "trace-ratio", "logdet-spd"}))
        ->default_str("oja");
    cmd->add_option("--m", o.m, "Ambient size m")->required();
    cmd->add_option("--p", o.p, "Number of columns p (Stiefel fields)")->default_str("1");
    cmd->add_option("--seed", o.seed,
                    "Base seed (fallback: MZ_SEED environment variable, then 0)");
}

void add_solver_options(CLI::App* cmd, CmdOptions& o) {
    cmd->add_option("--rho", o.prp.rho, "Backtracking factor in (0,1)")->default_str("0.5");
    cmd->add_option("--t1", o.prp.t1, "Sufficient-decrease weight on ||direction||^2")
        ->default_str("1e-10");
    cmd->add_option("--t2", o.prp.t2, "Sufficient-decrease weight on the merit")
        ->default_str("1e-10");
    cmd->add_option("--lambda", o.prp.lambda, "Averaging weight in (0,1)")->default_str("0.6");
    cmd->add_option("--eps", o.prp.eps_fd, "Probe step of the initial-step heuristic")
        ->default_str("1e-8");
    cmd->add_option("--alpha-min", o.prp.alpha_min, "Lower clamp of the initial step")
        ->default_str("1e-10");
    cmd->add_option("--alpha-max", o.prp.alpha_max, "Upper clamp of the initial step")
        ->default_str("1e10");
    cmd->add_option("--e-a", o.prp.e_a, "Absolute stopping tolerance e_a")->default_str("1e-6");
    cmd->add_option("--e-r", o.prp.e_r, "Relative stopping tolerance e_r")->default_str("1e-5");
    cmd->add_option("--max-iter", o.prp.max_iter, "Iteration cap of the PRP phase")
        ->default_str("20000");
    cmd->add_option("--max-backtracks", o.prp.max_backtracks,
                    "Line-search trial levels before giving up")
        ->default_str("60");
    cmd->add_option("--spd-retraction", o.spd_retraction,
                    "SPD retraction: second-order | additive")
        ->check(CLI::IsMember({"second-order", "additive"}))
        ->default_str("second-order");
}

void add_hybrid_options(CLI::App* cmd, CmdOptions& o) {
    cmd->add_option("--zeta1", o.hybrid.zeta1, "Residual handing over from PRP to Newton")
        ->default_str("1e-3");
    cmd->add_option("--zeta2", o.hybrid.zeta2, "Final residual of the Newton phase")
        ->default_str("1e-7");
    cmd->add_option("--varsigma", o.hybrid.varsigma, "Forcing-term cap of the inner CG solve")
        ->default_str("1e-8");
    cmd->add_option("--cg-max", o.hybrid.cg_max,
                    "CG iteration cap per Newton step (0 = min(p(m-p), 2000))")
        ->default_str("0");
    cmd->add_option("--newton-max", o.hybrid.newton_max, "Newton step cap")->default_str("50");
}

int usage_error(const std::string& message) {
    std::cerr << "error: " << message << "\n";
    return 1;
}

/// Constraints that depend on combinations of values; CLI11 cannot express
/// them declaratively.
int validate_combination(const CmdOptions& o, bench::SolverKind solver) {
    const bench::FieldKind field = parse_field(o.field);
    if (o.m < 1) {
        return usage_error("--m must be at least 1");
    }
    if (field == bench::FieldKind::LogDetSpd) {
        if (solver == bench::SolverKind::Hybrid) {
            return usage_error("field logdet-spd has no Jacobian lift; hybrid is unavailable");
        }
        return 0;
    }
    if (o.p < 1 || o.p >= o.m) {
        return usage_error("need m > p >= 1 for Stiefel fields");
    }
    if (field == bench::FieldKind::TraceRatio && o.m <= 2 * o.p) {
        return usage_error("trace-ratio requires m > 2p");
    }
    return 0;
}

bench::ExperimentSpec make_spec(const CmdOptions& o, bench::SolverKind solver) {
    bench::ExperimentSpec spec;
    spec.field = parse_field(o.field);
    spec.m = o.m;
    spec.p = o.p;
    spec.trials = o.trials;
    spec.solver = solver;
    spec.base_seed = o.seed;
    spec.prp = o.prp;
    spec.hybrid = o.hybrid;
    spec.spd_mode = o.spd_retraction == "additive" ? manifold::SpdRetraction::Additive
                                                   : manifold::SpdRetraction::SecondOrder;
    spec.jobs = o.jobs;
    spec.ct_zero = o.ct_zero;
    return spec;
}

bool write_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    out << content;
    return static_cast<bool>(out);
}

void print_row(const bench::ExperimentSpec& spec, const bench::TableRow& row) {
    std::printf("field=%s m=%ld p=%ld solver=%s trials=%d seed=%llu\n",
                bench::field_name(spec.field), static_cast<long>(spec.m),
                static_cast<long>(row.p), bench::solver_name(spec.solver), spec.trials,
                static_cast<unsigned long long>(spec.base_seed));
    std::printf("DIM=%ld CT=%.3e IT=%.3e NF=%.3e NCG=%.3e Res0=%.3e Res=%.3e failures=%d\n",
                row.dim, row.ct, row.it, row.nf, row.ncg, row.res0, row.res, row.failures);
    if (spec.solver == bench::SolverKind::Hybrid) {
        std::printf("phase prp:    CT=%.3e IT=%.3e NF=%.3e\n", row.ct_prp, row.it_prp, row.nf_prp);
        std::printf("phase newton: CT=%.3e IT=%.3e NF=%.3e NCG=%.3e\n", row.ct_newton,
                    row.it_newton, row.nf_newton, row.ncg);
    }
}

int exit_code_for(const std::vector<prp::Status>& statuses) {
    for (prp::Status s : statuses) {
        if (s != prp::Status::Converged) {
            return 2;
        }
    }
    return 0;
}

int run_solve(const CmdOptions& o) {
    if (int rc = validate_combination(o, bench::SolverKind::Prp); rc != 0) {
        return rc;
    }
    bench::ExperimentSpec spec = make_spec(o, bench::SolverKind::Prp);
    spec.trials = 1;
    spec.jobs = 1;
    bench::ExperimentResult result = bench::run_experiment(spec);

    std::printf("status=%s\n", prp::status_name(result.statuses[0]));
    print_row(spec, result.row);
    if (!o.history.empty()) {
        if (!write_file(o.history, bench::emit_history(result.histories[0]))) {
            return usage_error("cannot write history file " + o.history);
        }
        std::printf("wrote %s\n", o.history.c_str());
    }
    if (!o.out.empty()) {
        if (!write_file(o.out, bench::emit_table({result.row}))) {
            return usage_error("cannot write table file " + o.out);
        }
        std::printf("wrote %s\n", o.out.c_str());
    }
    return exit_code_for(result.statuses);
}

int run_bench(const CmdOptions& o, bench::SolverKind solver) {
    if (int rc = validate_combination(o, solver); rc != 0) {
        return rc;
    }
    if (o.trials < 1) {
        return usage_error("--trials must be at least 1");
    }
    bench::ExperimentSpec spec = make_spec(o, solver);
    bench::ExperimentResult result = bench::run_experiment(spec);

    print_row(spec, result.row);

    const std::string table_path = o.out.empty() ? bench::table_filename(spec) : o.out;
    if (!write_file(table_path, bench::emit_table({result.row}))) {
        return usage_error("cannot write table file " + table_path);
    }
    std::printf("wrote %s\n", table_path.c_str());

    if (o.history_flag) {
        const std::filesystem::path dir = std::filesystem::path(table_path).parent_path();
        for (int i = 0; i < spec.trials; ++i) {
            const std::string name = bench::history_filename(spec, i);
            const std::string path = dir.empty() ? name : (dir / name).string();
            if (!write_file(path, bench::emit_history(result.histories[i]))) {
                return usage_error("cannot write history file " + path);
            }
            std::printf("wrote %s\n", path.c_str());
        }
    }
    return exit_code_for(result.statuses);
}

}  // namespace

int main(int argc, char** argv) {
    CmdOptions solve_opts;
    CmdOptions bench_opts;
    CmdOptions hybrid_opts;

    if (const char* env = std::getenv("MZ_SEED")) {
        const std::uint64_t env_seed = std::strtoull(env, nullptr, 10);
        solve_opts.seed = env_seed;
        bench_opts.seed = env_seed;
        hybrid_opts.seed = env_seed;
    }

    CLI::App app{"mzero: find zeros of tangent vector fields on Stiefel and SPD manifolds\n"
                 "via a derivative-free PRP iteration, optionally refined by inexact Newton."};
    app.require_subcommand(1);

    CLI::App* solve = app.add_subcommand(
        "solve", "One seeded run of the derivative-free PRP solver");
    add_size_options(solve, solve_opts);
    add_solver_options(solve, solve_opts);
    solve->add_option("--history", solve_opts.history, "Write the residual trace to this CSV");
    solve->add_option("--out", solve_opts.out, "Write a one-row results CSV to this path");

    CLI::App* benchcmd = app.add_subcommand(
        "bench", "Averaged multi-trial experiment with the PRP solver");
    add_size_options(benchcmd, bench_opts);
    add_solver_options(benchcmd, bench_opts);
    benchcmd->add_option("--trials", bench_opts.trials, "Independently seeded runs to average")
        ->default_str("10");
    benchcmd->add_option("--jobs", bench_opts.jobs, "Worker threads for trials")->default_str("1");
    benchcmd->add_option("--out", bench_opts.out, "Results CSV path (default: derived name)");
    benchcmd->add_flag("--history", bench_opts.history_flag,
                       "Also write one residual-trace CSV per trial");
    benchcmd->add_flag("--ct-zero", bench_opts.ct_zero,
                       "Report CT as 0 so repeated runs emit identical bytes");

    CLI::App* hybrid = app.add_subcommand(
        "hybrid", "Averaged multi-trial experiment with the PRP + inexact-Newton solver");
    add_size_options(hybrid, hybrid_opts);
    add_solver_options(hybrid, hybrid_opts);
    add_hybrid_options(hybrid, hybrid_opts);
    hybrid->add_option("--trials", hybrid_opts.trials, "Independently seeded runs to average")
        ->default_str("10");
    hybrid->add_option("--jobs", hybrid_opts.jobs, "Worker threads for trials")->default_str("1");
    hybrid->add_option("--out", hybrid_opts.out, "Results CSV path (default: derived name)");
    hybrid->add_flag("--history", hybrid_opts.history_flag,
                     "Also write one residual-trace CSV per trial");
    hybrid->add_flag("--ct-zero", hybrid_opts.ct_zero,
                     "Report CT as 0 so repeated runs emit identical bytes");

    std::vector<std::string> args(argv + 1, argv + argc);
    try {
        std::string cfg_path;
        for (std::size_t i = 1; i < args.size(); ++i) {
            if (args[i] == "--config" && i + 1 < args.size()) {
                cfg_path = args[i + 1];
            } else if (args[i].rfind("--config=", 0) == 0) {
                cfg_path = args[i].substr(9);
            }
        }
        if (!cfg_path.empty() && !args.empty() && args.front().front() != '-') {
            const std::vector<std::string> extra = config_tokens(cfg_path);
            args.insert(args.begin() + 1, extra.begin(), extra.end());
        }
        std::reverse(args.begin(), args.end());  // CLI11's vector parse pops from the back
        app.parse(args);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        if (solve->parsed()) {
            return run_solve(solve_opts);
        }
        if (benchcmd->parsed()) {
            return run_bench(bench_opts, bench::SolverKind::Prp);
        }
        return run_bench(hybrid_opts, bench::SolverKind::Hybrid);
    } catch (const mzero::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
