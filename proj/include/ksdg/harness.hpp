#pragma once

#include <cmath>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "ksdg/csv.hpp"
#include "ksdg/timestepper.hpp"

namespace ksdg {

/// Local log-log slopes: entry i relates levels i and i+1, so the result has
/// one entry fewer than the inputs.
inline std::vector<double> eoc(const std::vector<double>& values,
                               const std::vector<double>& meshwidths) {
    if (values.size() != meshwidths.size())
        throw std::invalid_argument("eoc: values and meshwidths differ in length");
    if (values.size() < 2) throw std::invalid_argument("eoc: need at least two entries");
    for (double v : values)
        if (!(v > 0.0)) throw std::invalid_argument("eoc: values must be positive");
    for (std::size_t i = 1; i < meshwidths.size(); ++i)
        if (!(meshwidths[i] < meshwidths[i - 1]))
            throw std::invalid_argument("eoc: meshwidths must be strictly decreasing");
    std::vector<double> out(values.size() - 1);
    for (std::size_t i = 0; i + 1 < values.size(); ++i)
        out[i] = std::log(values[i + 1] / values[i]) / std::log(meshwidths[i + 1] / meshwidths[i]);
    return out;
}

inline const std::vector<std::string>& study_quantity_names() {
    static const std::vector<std::string> names = {"E0_Linf",     "E1_L2T",  "ERrho_L2T",
                                                   "E1tilde_L2T", "E0_at0",  "abar_at0"};
    return names;
}

struct StudyConfig {
    int degree = 1;
    int i_min = 4;
    int i_max = 8;
    double final_time = 1e-4;
    TauRule tau_rule = TauRule::scaled;
    double tau = 0.0;
    PenaltyConfig penalties;
    ConstantsSet constants;
    InitialData initial;
    Rectangle rect;
    SolverKind solver = SolverKind::direct;
    bool include_eminus1 = true;
    std::vector<std::string> quantities = study_quantity_names();
    std::string output_dir = "study";
    bool write_outputs = true;
};

struct StudyLevelReport {
    int level = 0;
    double h = 0.0;
    bool failed = false;
    std::string error;
    double e0_linf = 0.0;
    double e1_l2t = 0.0;
    double errho_l2t = 0.0;
    double e1tilde_l2t = 0.0;
    double e0_at0 = 0.0;
    double abar_at0 = 0.0;
    GronwallBounds gronwall;
    ConditionResult condition;
    FullEstimate full;
    double max_mass_drift = 0.0;      // relative to the initial mass
    double c_min_face_jump_sq = 0.0;  // at the final sample
    double c_linf = 0.0;
    double max_step_residual = 0.0;
    double field_scale = 0.0;  // |rho_h(0)|_Linf, the roundoff reference
    double rho_l2_sq_at0 = 0.0; // broken-norm floor ingredients of abar(0)
    double rho_h1_sq_at0 = 0.0;
};

struct EocTable {
    std::string quantity;
    std::vector<int> levels;
    std::vector<double> meshwidths;
    std::vector<std::optional<double>> values;
    std::vector<std::optional<double>> eoc; // entry i pairs levels i and i+1
};

struct StudyResult {
    StudyConfig config;
    std::vector<StudyLevelReport> rows;
    std::vector<EocTable> tables;
    std::vector<std::string> csv_paths;
};

namespace detail {

inline double quantity_of(const StudyLevelReport& row, const std::string& name) {
    if (name == "E0_Linf") return row.e0_linf;
    if (name == "E1_L2T") return row.e1_l2t;
    if (name == "ERrho_L2T") return row.errho_l2t;
    if (name == "E1tilde_L2T") return row.e1tilde_l2t;
    if (name == "E0_at0") return row.e0_at0;
    if (name == "abar_at0") return row.abar_at0;
    throw std::invalid_argument("unknown study quantity: " + name);
}

inline EocTable build_table(const std::string& name, const std::vector<StudyLevelReport>& rows) {
    EocTable t;
    t.quantity = name;
    for (const auto& row : rows) {
        t.levels.push_back(row.level);
        t.meshwidths.push_back(row.h);
        if (row.failed)
            t.values.push_back(std::nullopt);
        else
            t.values.push_back(quantity_of(row, name));
    }
    t.eoc.assign(rows.size(), std::nullopt);
    for (std::size_t i = 0; i + 1 < rows.size(); ++i) {
        if (!t.values[i] || !t.values[i + 1]) continue;
        const double a0 = *t.values[i], a1 = *t.values[i + 1];
        // values at roundoff level (identically-zero columns in exact
        // arithmetic) have no defined order; the cell stays blank
        const double floor0 = 1e-12 * (1.0 + rows[i].field_scale);
        const double floor1 = 1e-12 * (1.0 + rows[i + 1].field_scale);
        if (!(a0 > floor0) || !(a1 > floor1)) continue;
        t.eoc[i] = std::log(a1 / a0) / std::log(t.meshwidths[i + 1] / t.meshwidths[i]);
    }
    return t;
}

inline std::string table_csv(const EocTable& t) {
    std::string out = "i,h,value,eoc\n";
    for (std::size_t i = 0; i < t.levels.size(); ++i) {
        out += std::to_string(t.levels[i]);
        out += ',';
        out += fmt17(t.meshwidths[i]);
        out += ',';
        if (t.values[i]) out += fmt17(*t.values[i]);
        out += ',';
        if (t.eoc[i]) out += fmt17(*t.eoc[i]);
        out += '\n';
    }
    return out;
}

} // namespace detail

/// Executes one run per refinement level and assembles EOC tables; a failed
/// level annotates its row and the remaining levels still run.
inline StudyResult run_study(const StudyConfig& config) {
    if (config.i_min >= config.i_max)
        throw std::invalid_argument("run_study: need i_min < i_max");
    StudyResult result;
    result.config = config;

    for (int level = config.i_min; level <= config.i_max; ++level) {
        StudyLevelReport row;
        row.level = level;
        row.h = std::exp2(0.5 - level) * (config.rect.x1 - config.rect.x0);
        try {
            RunConfig rc;
            rc.level = level;
            rc.degree = config.degree;
            rc.final_time = config.final_time;
            rc.tau_rule = config.tau_rule;
            rc.tau = config.tau;
            rc.penalties = config.penalties;
            rc.constants = config.constants;
            rc.initial = config.initial;
            rc.rect = config.rect;
            rc.solver = config.solver;
            rc.include_eminus1 = config.include_eminus1;
            rc.grid_samples = 2; // studies write no snapshots
            rc.output_dir = config.output_dir + "/level" + std::to_string(level);
            rc.write_outputs = config.write_outputs;
            const RunResult rr = run(rc);

            row.e0_linf = rr.sup_e0;
            row.e1_l2t = rr.l2t_e1;
            row.errho_l2t = rr.l2t_errho;
            row.e1tilde_l2t = rr.l2t_e1tilde;
            row.e0_at0 = rr.samples.front().e0;
            row.abar_at0 = rr.samples.front().abar;
            row.gronwall = rr.gronwall;
            row.condition = rr.condition;
            row.full = rr.full;
            row.c_min_face_jump_sq = rr.samples.back().c_min_face_jump_sq;
            row.c_linf = rr.samples.back().c_linf;
            row.field_scale = rr.samples.front().rho_linf;
            row.rho_l2_sq_at0 = rr.samples.front().rho_l2_sq;
            row.rho_h1_sq_at0 = rr.samples.front().rho_h1_sq;
            const double m0 = rr.masses.front();
            for (double m : rr.masses)
                row.max_mass_drift = std::max(row.max_mass_drift,
                                              std::abs(m - m0) / std::max(std::abs(m0), 1e-300));
            for (double r : rr.step_residuals)
                row.max_step_residual = std::max(row.max_step_residual, r);
        } catch (const std::exception& e) {
            row.failed = true;
            row.error = e.what();
        }
        result.rows.push_back(row);
    }

    for (const auto& name : config.quantities)
        result.tables.push_back(detail::build_table(name, result.rows));

    if (config.write_outputs) {
        for (const auto& t : result.tables) {
            const std::string path = config.output_dir + "/" + t.quantity + ".csv";
            atomic_write_file(path, detail::table_csv(t));
            result.csv_paths.push_back(path);
        }
        // combined summary, one row per level
        std::string out = "i,h";
        for (const auto& t : result.tables) out += "," + t.quantity + "," + t.quantity + "_eoc";
        out += ",Abar,log_Ebar,Ebar_saturated,condition_holds,condition_log_margin,"
               "full_estimator,full_saturated,error\n";
        for (std::size_t i = 0; i < result.rows.size(); ++i) {
            const auto& row = result.rows[i];
            out += std::to_string(row.level) + "," + fmt17(row.h);
            for (const auto& t : result.tables) {
                out += ',';
                if (t.values[i]) out += fmt17(*t.values[i]);
                out += ',';
                if (t.eoc[i]) out += fmt17(*t.eoc[i]);
            }
            if (row.failed) {
                out += ",,,,,,,," + row.error;
            } else {
                out += ',' + fmt17(row.gronwall.abar_upper);
                out += ',' + fmt17(row.gronwall.log_ebar);
                out += row.gronwall.ebar_saturated() ? ",1" : ",0";
                out += row.condition.holds ? ",1" : ",0";
                out += ',' + fmt17(row.condition.log_margin);
                out += ',' + fmt17(row.full.value);
                out += row.full.saturated ? ",1" : ",0";
                out += ',';
            }
            out += '\n';
        }
        const std::string path = config.output_dir + "/summary.csv";
        atomic_write_file(path, out);
        result.csv_paths.push_back(path);
    }
    return result;
}

/// Human-readable table, three significant digits like the usual convergence
/// tables.
inline std::string format_study_table(const StudyResult& result) {
    std::ostringstream os;
    os << "degree k = " << result.config.degree << "\n";
    os << "   i";
    for (const auto& t : result.tables) os << "  " << t.quantity << "  EOC   ";
    os << "\n";
    for (std::size_t i = 0; i < result.rows.size(); ++i) {
        const auto& row = result.rows[i];
        char lvl[16];
        std::snprintf(lvl, sizeof(lvl), "%4d", row.level);
        os << lvl;
        if (row.failed) {
            os << "  FAILED: " << row.error;
        } else {
            for (const auto& t : result.tables) {
                os << "  " << (t.values[i] ? fmt3(*t.values[i]) : "   -    ");
                if (t.eoc[i]) {
                    char buf[16];
                    std::snprintf(buf, sizeof(buf), " %5.3f", *t.eoc[i]);
                    os << buf;
                } else {
                    os << "   -  ";
                }
            }
        }
        os << "\n";
    }
    return os.str();
}

} // namespace ksdg
