#pragma once

#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "ksdg/csv.hpp"
#include "ksdg/harness.hpp"
#include "ksdg/timestepper.hpp"

namespace ksdg {

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Flat key-value configuration with [section] headers, '#' comments, and
/// one `key = value` pair per line. Unknown sections or keys are rejected.
class ConfigFile {
public:
    static ConfigFile parse_string(const std::string& text) {
        ConfigFile cfg;
        std::istringstream in(text);
        std::string line, section;
        int lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            const auto hash = line.find('#');
            if (hash != std::string::npos) line.erase(hash);
            line = trim(line);
            if (line.empty()) continue;
            if (line.front() == '[') {
                if (line.back() != ']')
                    throw ConfigError("config line " + std::to_string(lineno) +
                                      ": malformed section header");
                section = trim(line.substr(1, line.size() - 2));
                continue;
            }
            const auto eq = line.find('=');
            if (eq == std::string::npos)
                throw ConfigError("config line " + std::to_string(lineno) +
                                  ": expected key = value");
            const std::string key = trim(line.substr(0, eq));
            const std::string value = trim(line.substr(eq + 1));
            if (section.empty())
                throw ConfigError("config line " + std::to_string(lineno) +
                                  ": key outside any [section]");
            if (key.empty())
                throw ConfigError("config line " + std::to_string(lineno) + ": empty key");
            cfg.entries_[section + "." + key] = value;
        }
        return cfg;
    }

    static ConfigFile parse_file(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw ConfigError("cannot open config file: " + path);
        std::stringstream ss;
        ss << in.rdbuf();
        return parse_string(ss.str());
    }

    bool has(const std::string& key) const { return entries_.count(key) > 0; }

    std::string get(const std::string& key) const {
        auto it = entries_.find(key);
        if (it == entries_.end()) throw ConfigError("missing required key " + pretty(key));
        used_.insert(key);
        return it->second;
    }

    std::string get_or(const std::string& key, const std::string& fallback) const {
        auto it = entries_.find(key);
        if (it == entries_.end()) return fallback;
        used_.insert(key);
        return it->second;
    }

    double get_double(const std::string& key) const { return to_double(key, get(key)); }
    double get_double_or(const std::string& key, double fallback) const {
        if (!has(key)) return fallback;
        return to_double(key, get(key));
    }
    int get_int_or(const std::string& key, int fallback) const {
        const double v = get_double_or(key, fallback);
        const int i = static_cast<int>(v);
        if (static_cast<double>(i) != v) throw ConfigError("key " + pretty(key) + " must be an integer");
        return i;
    }
    bool get_bool_or(const std::string& key, bool fallback) const {
        if (!has(key)) return fallback;
        const std::string v = get(key);
        if (v == "true" || v == "1") return true;
        if (v == "false" || v == "0") return false;
        throw ConfigError("key " + pretty(key) + " must be true or false");
    }
    std::vector<double> get_double_list_or(const std::string& key) const {
        std::vector<double> out;
        if (!has(key)) return out;
        std::istringstream in(get(key));
        std::string tok;
        while (in >> tok) out.push_back(to_double(key, tok));
        return out;
    }

    /// Every stored key must have been consumed by the mapping layer.
    void reject_unknown() const {
        for (const auto& [key, value] : entries_)
            if (!used_.count(key)) throw ConfigError("unknown config key " + pretty(key));
    }

private:
    static std::string trim(const std::string& s) {
        const auto a = s.find_first_not_of(" \t\r\n");
        if (a == std::string::npos) return "";
        const auto b = s.find_last_not_of(" \t\r\n");
        return s.substr(a, b - a + 1);
    }
    static std::string pretty(const std::string& key) {
        const auto dotpos = key.find('.');
        return "[" + key.substr(0, dotpos) + "] " + key.substr(dotpos + 1);
    }
    double to_double(const std::string& key, const std::string& v) const {
        try {
            std::size_t pos = 0;
            const double d = std::stod(v, &pos);
            if (pos != v.size()) throw std::invalid_argument(v);
            return d;
        } catch (const std::exception&) {
            throw ConfigError("key " + pretty(key) + " has non-numeric value '" + v + "'");
        }
    }

    std::map<std::string, std::string> entries_;
    mutable std::set<std::string> used_;
};

namespace detail {

inline ConstantsSet constants_from(const ConfigFile& cfg) {
    ConstantsSet cs;
    cs.c_s = cfg.get_double_or("constants.C_S", 1.0);
    cs.c_s_prime = cfg.get_double_or("constants.C_S_prime", 1.0);
    cs.c_s_dprime = cfg.get_double_or("constants.C_S_dprime", 1.0);
    cs.c_ell = cfg.get_double_or("constants.C_ell", 1.0);
    cs.c_0 = cfg.get_double_or("constants.C_0", 1.0);
    cs.c_1 = cfg.get_double_or("constants.C_1", 1.0);
    cs.c_minus1 = cfg.get_double_or("constants.C_minus1", 1.0);
    cs.c_tilde1 = cfg.get_double_or("constants.C_tilde1", 1.0);
    cs.c_app_prime = cfg.get_double_or("constants.C_app_prime", 1.0);
    cs.c_app_dprime = cfg.get_double_or("constants.C_app_dprime", 1.0);
    cs.c_app_tprime = cfg.get_double_or("constants.C_app_tprime", 1.0);
    cs.c_tr = cfg.get_double_or("constants.C_tr", 1.0);
    for (double v : {cs.c_s, cs.c_s_prime, cs.c_s_dprime, cs.c_ell, cs.c_0, cs.c_1, cs.c_minus1,
                     cs.c_tilde1, cs.c_app_prime, cs.c_app_dprime, cs.c_app_tprime, cs.c_tr})
        if (!(v > 0.0)) throw ConfigError("[constants] entries must be positive");
    return cs;
}

inline InitialData initial_from(const ConfigFile& cfg) {
    InitialData init;
    const std::string kind = cfg.get_or("initial.kind", "gaussian");
    if (kind == "gaussian")
        init.kind = InitialData::Kind::gaussian;
    else if (kind == "constant")
        init.kind = InitialData::Kind::constant;
    else
        throw ConfigError("[initial] kind must be gaussian or constant");
    init.amplitude = cfg.get_double_or("initial.amplitude", 1e-3);
    init.width = cfg.get_double_or("initial.width", 1e-2);
    init.value = cfg.get_double_or("initial.value", 0.0);
    if (cfg.has("initial.center")) {
        const auto c = cfg.get_double_list_or("initial.center");
        if (c.size() != 2) throw ConfigError("[initial] center needs two coordinates");
        init.center_x = c[0];
        init.center_y = c[1];
    }
    if (init.kind == InitialData::Kind::gaussian && !(init.width > 0.0))
        throw ConfigError("[initial] width must be positive");
    return init;
}

inline SolverKind solver_from(const ConfigFile& cfg) {
    const std::string method = cfg.get_or("solver.method", "direct");
    if (method == "direct") return SolverKind::direct;
    if (method == "iterative") return SolverKind::iterative;
    throw ConfigError("[solver] method must be direct or iterative");
}

} // namespace detail

inline RunConfig run_config_from(const ConfigFile& cfg) {
    RunConfig rc;
    // [study] keys belong to the same grammar; consume them so a shared
    // config works for both run and study commands
    cfg.get_or("study.i_min", "");
    cfg.get_or("study.i_max", "");
    cfg.get_or("study.quantities", "");
    rc.level = static_cast<int>(cfg.get_double("mesh.level"));
    if (rc.level < 1) throw ConfigError("[mesh] level must be >= 1");
    rc.degree = cfg.get_int_or("space.degree", 1);
    if (rc.degree != 1 && rc.degree != 2) throw ConfigError("[space] degree must be 1 or 2");
    rc.final_time = cfg.get_double_or("time.T", 1e-4);
    if (!(rc.final_time > 0.0)) throw ConfigError("[time] T must be positive");
    const std::string rule = cfg.get_or("time.tau_rule", "scaled");
    if (rule == "scaled")
        rc.tau_rule = TauRule::scaled;
    else if (rule == "fixed")
        rc.tau_rule = TauRule::fixed;
    else
        throw ConfigError("[time] tau_rule must be scaled or fixed");
    rc.tau = cfg.get_double_or("time.tau", 0.0);
    if (rc.tau_rule == TauRule::fixed && !(rc.tau > 0.0))
        throw ConfigError("[time] tau must be positive when tau_rule = fixed");

    rc.penalties.eta = cfg.get_double_or("penalty.eta", 10.0 * rc.degree * rc.degree);
    rc.penalties.sigma = cfg.get_double_or("penalty.sigma", 10.0 * rc.degree * rc.degree);
    rc.penalties.eps_w = cfg.get_double_or("penalty.eps_w", 1e-12);
    if (!(rc.penalties.eta > 0.0) || !(rc.penalties.sigma > 0.0) || !(rc.penalties.eps_w > 0.0))
        throw ConfigError("[penalty] eta, sigma, eps_w must be positive");

    rc.constants = detail::constants_from(cfg);
    rc.initial = detail::initial_from(cfg);
    rc.solver = detail::solver_from(cfg);
    rc.include_eminus1 = cfg.get_bool_or("estimator.include_eminus1", true);

    rc.output_dir = cfg.get_or("output.directory", "out");
    rc.snapshot_times = cfg.get_double_list_or("output.snapshot_times");
    for (double t : rc.snapshot_times)
        if (t < 0.0 || t > rc.final_time)
            throw ConfigError("[output] snapshot_times must lie in [0, T]");
    rc.grid_samples = cfg.get_int_or("output.grid_samples", 256);
    if (rc.grid_samples < 2) throw ConfigError("[output] grid_samples must be >= 2");

    cfg.reject_unknown();
    return rc;
}

inline StudyConfig study_config_from(const ConfigFile& cfg) {
    StudyConfig sc;
    // the study reuses the run keys; [mesh] level is the default i_min
    sc.i_min = cfg.get_int_or("study.i_min", static_cast<int>(cfg.get_double("mesh.level")));
    sc.i_max = cfg.get_int_or("study.i_max", sc.i_min + 4);
    const std::string quantities = cfg.get_or("study.quantities", "");
    if (!quantities.empty()) {
        sc.quantities.clear();
        std::istringstream in(quantities);
        std::string tok;
        while (in >> tok) sc.quantities.push_back(tok);
        for (const auto& q : sc.quantities) {
            bool known = false;
            for (const auto& name : study_quantity_names()) known |= (name == q);
            if (!known) throw ConfigError("[study] unknown quantity " + q);
        }
    }
    RunConfig rc = run_config_from(cfg);
    sc.degree = rc.degree;
    sc.final_time = rc.final_time;
    sc.tau_rule = rc.tau_rule;
    sc.tau = rc.tau;
    sc.penalties = rc.penalties;
    sc.constants = rc.constants;
    sc.initial = rc.initial;
    sc.rect = rc.rect;
    sc.solver = rc.solver;
    sc.include_eminus1 = rc.include_eminus1;
    sc.output_dir = rc.output_dir;
    return sc;
}

/// Effective configuration; parsing the dump reproduces the run.
inline std::string dump_effective_config(const RunConfig& rc) {
    std::ostringstream os;
    os << "[mesh]\nlevel = " << rc.level << "\n\n";
    os << "[space]\ndegree = " << rc.degree << "\n\n";
    os << "[time]\nT = " << fmt17(rc.final_time)
       << "\ntau_rule = " << (rc.tau_rule == TauRule::scaled ? "scaled" : "fixed")
       << "\ntau = " << fmt17(rc.tau) << "\n\n";
    os << "[penalty]\neta = " << fmt17(rc.penalties.eta) << "\nsigma = " << fmt17(rc.penalties.sigma)
       << "\neps_w = " << fmt17(rc.penalties.eps_w) << "\n\n";
    const ConstantsSet& cs = rc.constants;
    os << "[constants]\n";
    os << "C_S = " << fmt17(cs.c_s) << "\nC_S_prime = " << fmt17(cs.c_s_prime)
       << "\nC_S_dprime = " << fmt17(cs.c_s_dprime) << "\nC_ell = " << fmt17(cs.c_ell)
       << "\nC_0 = " << fmt17(cs.c_0) << "\nC_1 = " << fmt17(cs.c_1)
       << "\nC_minus1 = " << fmt17(cs.c_minus1) << "\nC_tilde1 = " << fmt17(cs.c_tilde1)
       << "\nC_app_prime = " << fmt17(cs.c_app_prime)
       << "\nC_app_dprime = " << fmt17(cs.c_app_dprime)
       << "\nC_app_tprime = " << fmt17(cs.c_app_tprime) << "\nC_tr = " << fmt17(cs.c_tr) << "\n\n";
    os << "[initial]\nkind = "
       << (rc.initial.kind == InitialData::Kind::gaussian ? "gaussian" : "constant")
       << "\namplitude = " << fmt17(rc.initial.amplitude) << "\ncenter = "
       << fmt17(rc.initial.center_x) << " " << fmt17(rc.initial.center_y)
       << "\nwidth = " << fmt17(rc.initial.width) << "\nvalue = " << fmt17(rc.initial.value)
       << "\n\n";
    os << "[output]\ndirectory = " << rc.output_dir << "\n";
    if (!rc.snapshot_times.empty()) {
        os << "snapshot_times =";
        for (double t : rc.snapshot_times) os << " " << fmt17(t);
        os << "\n";
    }
    os << "grid_samples = " << rc.grid_samples << "\n\n";
    os << "[solver]\nmethod = " << (rc.solver == SolverKind::direct ? "direct" : "iterative")
       << "\n\n";
    os << "[estimator]\ninclude_eminus1 = " << (rc.include_eminus1 ? "true" : "false") << "\n";
    return os.str();
}

} // namespace ksdg
