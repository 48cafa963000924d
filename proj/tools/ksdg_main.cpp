// Command-line driver: runs, convergence studies, condition checks, and
// snapshot sampling for the Keller-Segel dG solver.

#include <CLI11.hpp>

#include <cmath>
#include <fstream>
#include <iostream>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "ksdg/config_file.hpp"
#include "ksdg/csv.hpp"
#include "ksdg/estimators.hpp"
#include "ksdg/harness.hpp"
#include "ksdg/timestepper.hpp"

namespace {

using namespace ksdg;

void print_run_summary(const RunResult& r, double T) {
    double mass_drift = 0.0;
    for (double m : r.masses)
        mass_drift = std::max(mass_drift, std::abs(m - r.masses.front()) /
                                              std::max(std::abs(r.masses.front()), 1e-300));
    std::cout << "RESULT"
              << " T=" << fmt17(T) << " Abar=" << fmt17(r.gronwall.abar_upper)
              << " log_Ebar=" << fmt17(r.gronwall.log_ebar)
              << " Ebar=" << (r.gronwall.ebar_saturated() ? "saturated" : fmt17(r.gronwall.ebar()))
              << " condition=" << (r.condition.holds ? "holds" : "fails")
              << " log_margin=" << fmt17(r.condition.log_margin)
              << " margin=" << (r.condition.saturated ? "saturated" : fmt17(r.condition.margin))
              << " full_estimator=" << (r.full.saturated ? "saturated" : fmt17(r.full.value))
              << " certified=" << (r.full.certified ? 1 : 0) << " sup_E0=" << fmt17(r.sup_e0)
              << " l2t_E1=" << fmt17(r.l2t_e1) << " l2t_ERrho=" << fmt17(r.l2t_errho)
              << " initial_error=" << fmt17(r.initial_error) << " mass_drift=" << fmt17(mass_drift)
              << " wsip_clamp_fraction=" << fmt17(r.max_clamp_fraction) << "\n";
    if (r.max_clamp_fraction > 0.01)
        std::cout << "note: wSIP weight clamping triggered on " << fmt17(100.0 * r.max_clamp_fraction)
                  << "% of face quadrature samples\n";
}

int cmd_run(const std::string& config_path) {
    const ConfigFile cfg = ConfigFile::parse_file(config_path);
    const RunConfig rc = run_config_from(cfg);
    atomic_write_file(rc.output_dir + "/effective_config.ini", dump_effective_config(rc));
    const RunResult r = run(rc);
    std::cout << "estimator log: " << r.estimator_log_path << "\n";
    for (const auto& snap : r.snapshots)
        std::cout << "snapshot t=" << fmt17(snap.requested_time) << " max_rho="
                  << fmt17(snap.max_rho) << " " << snap.path << "\n";
    print_run_summary(r, rc.final_time);
    return 0;
}

int cmd_study(const std::string& config_path, int kmin, int kmax, int degree) {
    const ConfigFile cfg = ConfigFile::parse_file(config_path);
    StudyConfig sc = study_config_from(cfg);
    if (kmin > 0) sc.i_min = kmin;
    if (kmax > 0) sc.i_max = kmax;
    if (degree > 0) sc.degree = degree;
    if (sc.i_min >= sc.i_max) throw ConfigError("study: need kmin < kmax");
    const StudyResult result = run_study(sc);
    std::cout << format_study_table(result);
    for (const auto& path : result.csv_paths) std::cout << "wrote " << path << "\n";
    for (const auto& row : result.rows) {
        std::cout << "level " << row.level;
        if (row.failed) {
            std::cout << " FAILED: " << row.error << "\n";
            continue;
        }
        std::cout << " condition=" << (row.condition.holds ? "holds" : "fails")
                  << " log_margin=" << fmt17(row.condition.log_margin) << " full_estimator="
                  << (row.full.saturated ? "saturated" : fmt17(row.full.value)) << "\n";
    }
    for (const auto& row : result.rows)
        if (row.failed) return 2;
    return 0;
}

struct ParsedLog {
    std::vector<double> t, e0, errho, abar;
};

ParsedLog parse_estimator_log(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open estimator log: " + path);
    std::string line;
    if (!std::getline(in, line)) throw ConfigError("estimator log is empty: " + path);
    const std::string expected = "t,E0,E1,Eminus1,E1tilde,ERrho,ERrho_t1,ERrho_t2,ERrho_t3,"
                                 "ERrho_t4,ERrho_t5,abar,rho_Linf,gradc_Linf";
    if (line != expected) throw ConfigError("estimator log header mismatch in " + path);
    ParsedLog log;
    int lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::vector<double> vals;
        std::istringstream ls(line);
        std::string tok;
        while (std::getline(ls, tok, ',')) {
            try {
                vals.push_back(std::stod(tok));
            } catch (const std::exception&) {
                throw ConfigError("estimator log parse error at line " + std::to_string(lineno));
            }
        }
        if (vals.size() != 14)
            throw ConfigError("estimator log parse error at line " + std::to_string(lineno) +
                              ": expected 14 columns");
        log.t.push_back(vals[0]);
        log.e0.push_back(vals[1]);
        log.errho.push_back(vals[5]);
        log.abar.push_back(vals[11]);
    }
    if (log.t.empty()) throw ConfigError("estimator log has no data rows: " + path);
    return log;
}

int cmd_check_condition(const std::string& log_path, const std::string& config_path,
                        double initial_error, double t_override) {
    const ConfigFile cfg = ConfigFile::parse_file(config_path);
    const RunConfig rc = run_config_from(cfg);
    const ParsedLog log = parse_estimator_log(log_path);

    const double T = t_override >= 0.0 ? t_override : log.t.back();
    double abar_int = 0.0, errho_int = 0.0;
    for (std::size_t i = 1; i < log.t.size(); ++i) {
        const double dt = log.t[i] - log.t[i - 1];
        if (dt < 0.0) throw ConfigError("estimator log times are not increasing");
        if (log.t[i] > T + 1e-12 * std::max(T, 1.0)) break;
        abar_int += dt * log.abar[i];
        errho_int += dt * log.errho[i] * log.errho[i];
    }
    const double abar_upper =
        2.0 * initial_error * initial_error + 2.0 * log.e0.front() * log.e0.front() + errho_int;

    const ConditionResult cond = condition_check(abar_upper, abar_int, T, rc.constants);
    std::cout << "Abar=" << fmt17(abar_upper) << " log_Ebar=" << fmt17(abar_int)
              << " B=" << fmt17(rc.constants.b()) << " T=" << fmt17(T) << "\n";
    std::cout << "log_margin="
              << (std::isinf(cond.log_margin) ? "-inf (saturated)" : fmt17(cond.log_margin))
              << " margin=" << (cond.saturated ? "saturated" : fmt17(cond.margin)) << "\n";
    if (cond.holds) {
        std::cout << "condition HOLDS: the error bound is certified and a weak solution "
                     "exists at least until T="
                  << fmt17(T) << "\n";
    } else {
        std::cout << "condition FAILS: the bound is not certified at T=" << fmt17(T)
                  << " (refine the mesh to shrink the margin)\n";
    }
    return 0;
}

int cmd_snapshot(const std::string& config_path, const std::vector<double>& times) {
    const ConfigFile cfg = ConfigFile::parse_file(config_path);
    RunConfig rc = run_config_from(cfg);
    if (!times.empty()) {
        rc.snapshot_times = times;
        for (double t : times) {
            if (t < 0.0) throw ConfigError("snapshot: times must be nonnegative");
            rc.final_time = std::max(rc.final_time, t);
        }
    }
    if (rc.snapshot_times.empty()) throw ConfigError("snapshot: no snapshot times configured");
    const RunResult r = run(rc);
    for (const auto& snap : r.snapshots)
        std::cout << "snapshot t=" << fmt17(snap.requested_time) << " max_rho="
                  << fmt17(snap.max_rho) << " " << snap.path << "\n";
    print_run_summary(r, rc.final_time);
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Keller-Segel dG solver with a posteriori error estimation"};
    app.require_subcommand(1);

    std::string config_path, log_path;
    int kmin = -1, kmax = -1, degree = -1;
    double initial_error = 0.0, t_override = -1.0;
    std::vector<double> times;

    auto* run_cmd = app.add_subcommand("run", "run one simulation with estimators");
    run_cmd->add_option("config", config_path, "config file")->required();

    auto* study_cmd = app.add_subcommand("study", "convergence study over refinement levels");
    study_cmd->add_option("config", config_path, "config file")->required();
    study_cmd->add_option("--kmin", kmin, "coarsest refinement level");
    study_cmd->add_option("--kmax", kmax, "finest refinement level");
    study_cmd->add_option("--degree", degree, "polynomial degree");

    auto* check_cmd = app.add_subcommand("check-condition", "evaluate the existence condition");
    check_cmd->add_option("log", log_path, "estimator log CSV")->required();
    check_cmd->add_option("config", config_path, "config file")->required();
    check_cmd->add_option("--initial-error", initial_error, "||rho_0 - rho_h(0)||_L2");
    check_cmd->add_option("--T", t_override, "final time override");

    auto* snap_cmd = app.add_subcommand("snapshot", "write solution snapshots");
    snap_cmd->add_option("config", config_path, "config file")->required();
    snap_cmd->add_option("--times", times, "snapshot times");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        if (run_cmd->parsed()) return cmd_run(config_path);
        if (study_cmd->parsed()) return cmd_study(config_path, kmin, kmax, degree);
        if (check_cmd->parsed())
            return cmd_check_condition(log_path, config_path, initial_error, t_override);
        if (snap_cmd->parsed()) return cmd_snapshot(config_path, times);
    } catch (const ksdg::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 1;
    } catch (const std::invalid_argument& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return 1;
    } catch (const ksdg::NumericalError& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 1;
}
