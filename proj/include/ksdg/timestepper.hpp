#pragma once

#include <algorithm>
#include <cmath>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "ksdg/csv.hpp"
#include "ksdg/dg_field.hpp"
#include "ksdg/estimators.hpp"
#include "ksdg/forms.hpp"
#include "ksdg/mesh.hpp"
#include "ksdg/projection.hpp"
#include "ksdg/sparse_operator.hpp"

namespace ksdg {

struct InitialData {
    enum class Kind { gaussian, constant };
    Kind kind = Kind::gaussian;
    double amplitude = 1e-3;
    double center_x = 0.5;
    double center_y = 0.5;
    double width = 1e-2; // squared length scale in the exponent
    double value = 0.0;  // constant kind

    double operator()(double x, double y) const {
        if (kind == Kind::constant) return value;
        const double dx = x - center_x, dy = y - center_y;
        return amplitude * std::exp(-(dx * dx + dy * dy) / width);
    }
};

enum class TauRule { scaled, fixed };

struct RunConfig {
    int level = 4;
    int degree = 1;
    double final_time = 1e-4;
    TauRule tau_rule = TauRule::scaled; // scaled: tau = 2^(2-i)
    double tau = 0.0;                   // used when tau_rule == fixed
    PenaltyConfig penalties;
    ConstantsSet constants;
    InitialData initial;
    Rectangle rect;
    std::vector<double> snapshot_times;
    std::string output_dir = "out";
    int grid_samples = 256;
    SolverKind solver = SolverKind::direct;
    bool include_eminus1 = true;
    bool keep_trajectory = false;
    bool write_outputs = true;

    double effective_tau() const {
        if (tau_rule == TauRule::scaled) return std::exp2(2.0 - level);
        return tau;
    }
};

struct State {
    double time = 0.0;
    int step_index = 0;
    DgField rho;
    DgField c;
};

/// One fully discrete backward-Euler step solves the coupled block system
///   [ M/tau + S   -W(rho^n) ] [rho^{n+1}]   [M rho^n / tau]
///   [    -M         S + M   ] [ c^{n+1} ] = [      0      ]
/// by defect correction with a block-triangular preconditioner built from
/// Cholesky factorizations of M/tau + S and S + M.
class KellerSegelStepper {
public:
    KellerSegelStepper(const Mesh& mesh, std::shared_ptr<const ReferenceBasis> basis,
                       PenaltyConfig penalties, SolverKind solver_kind = SolverKind::direct)
        : mesh_(&mesh), basis_(std::move(basis)), penalties_(penalties),
          solver_kind_(solver_kind), c_solver_(solver_kind), a_solver_(solver_kind) {
        const int k = basis_->degree();
        mass_ = assemble_mass(mesh, *basis_);
        stiffness_ = assemble_sip(mesh, *basis_, penalties_.eta_for(k));
        mass_solver_.compute(mass_, basis_->size());
        SpMat c_mat = stiffness_.matrix + mass_.matrix;
        c_solver_.compute(c_mat);
    }

    const SparseOperator& mass() const { return mass_; }
    const SparseOperator& stiffness() const { return stiffness_; }
    const MassSolver& mass_solver() const { return mass_solver_; }
    double last_step_residual() const { return last_residual_; }
    double last_clamp_fraction() const { return last_clamp_fraction_; }

    State init_state(const RunConfig& config) const {
        State s;
        s.time = 0.0;
        s.step_index = 0;
        auto f = [&config](double x, double y) { return config.initial(x, y); };
        s.rho = elliptic_project(f, *mesh_, basis_, stiffness_,
                                 penalties_.eta_for(basis_->degree()), solver_kind_);
        // discrete c-equation at t = 0 so estimators are defined from the start
        const Eigen::VectorXd rhs = mass_.matrix * as_vector(s.rho);
        s.c = field_from_vector(*mesh_, basis_, c_solver_.solve(rhs));
        return s;
    }

    State step(const State& state, double tau) {
        if (!(tau > 0.0)) throw std::invalid_argument("step: tau must be positive");
        prepare_tau(tau);
        const WsipResult wsip = assemble_wsip(state.rho, *mesh_, *basis_,
                                              penalties_.sigma_for(basis_->degree()),
                                              penalties_.eps_w);
        last_clamp_fraction_ = wsip.clamp_fraction;
        const SpMat& w = wsip.op.matrix;

        const Eigen::VectorXd rho_n = as_vector(state.rho);
        const Eigen::VectorXd rhs_rho = mass_.matrix * rho_n / tau;
        const double bnorm = rhs_rho.norm();

        Eigen::VectorXd x_rho = rho_n;
        Eigen::VectorXd x_c = as_vector(state.c);
        double rnorm = std::numeric_limits<double>::infinity();
        double prev = rnorm;
        int stalled = 0;
        const int max_iter = 60;
        int iter = 0;
        for (; iter < max_iter; ++iter) {
            const Eigen::VectorXd r_rho = rhs_rho - (a_mat_ * x_rho - w * x_c);
            const Eigen::VectorXd r_c = mass_.matrix * x_rho - (stiffness_.matrix * x_c + mass_.matrix * x_c);
            rnorm = std::sqrt(r_rho.squaredNorm() + r_c.squaredNorm());
            if (rnorm <= 1e-12 * bnorm) break;
            if (rnorm > 0.9 * prev) {
                if (++stalled >= 3) break;
            } else {
                stalled = 0;
            }
            prev = rnorm;
            const Eigen::VectorXd d_rho = a_solver_.solve(r_rho);
            const Eigen::VectorXd d_c = c_solver_.solve(r_c + mass_.matrix * d_rho);
            x_rho += d_rho;
            x_c += d_c;
        }
        last_residual_ = bnorm > 0.0 ? rnorm / bnorm : rnorm;
        if (!(last_residual_ <= 1e-9)) {
            std::ostringstream msg;
            msg << "step: block solve failed at t = " << state.time << ", step "
                << state.step_index << ": relative residual " << last_residual_ << " after "
                << iter << " defect-correction iterations";
            throw NumericalError(msg.str());
        }

        State next;
        next.time = state.time + tau;
        next.step_index = state.step_index + 1;
        next.rho = field_from_vector(*mesh_, basis_, x_rho);
        next.c = field_from_vector(*mesh_, basis_, x_c);
        if (!as_vector(next.rho).allFinite() || !as_vector(next.c).allFinite())
            throw NumericalError("step: non-finite field values at step " +
                                 std::to_string(next.step_index));
        return next;
    }

    EstimatorContext estimator_context(const RunConfig& config) const {
        EstimatorContext ctx;
        ctx.mesh = mesh_;
        ctx.basis = basis_;
        ctx.stiffness = &stiffness_;
        ctx.mass_solver = &mass_solver_;
        ctx.penalties = penalties_;
        ctx.constants = config.constants;
        const MeshStats stats = mesh_statistics(*mesh_);
        ctx.delta = stats.delta;
        ctx.n_partial = stats.n_boundary_max;
        ctx.include_eminus1 = config.include_eminus1;
        return ctx;
    }

private:
    void prepare_tau(double tau) {
        if (have_tau_ && tau == cached_tau_) return;
        a_mat_ = stiffness_.matrix + mass_.matrix / tau;
        a_solver_.compute(a_mat_);
        cached_tau_ = tau;
        have_tau_ = true;
    }

    const Mesh* mesh_;
    std::shared_ptr<const ReferenceBasis> basis_;
    PenaltyConfig penalties_;
    SolverKind solver_kind_;
    SparseOperator mass_;
    SparseOperator stiffness_;
    MassSolver mass_solver_;
    SpdSolver c_solver_;
    SpdSolver a_solver_;
    SpMat a_mat_;
    double cached_tau_ = 0.0;
    bool have_tau_ = false;
    double last_residual_ = 0.0;
    double last_clamp_fraction_ = 0.0;
};

struct SnapshotRecord {
    double requested_time = 0.0;
    double actual_time = 0.0;
    int step_index = 0;
    double max_rho = 0.0;
    std::string path;
};

struct RunResult {
    std::shared_ptr<const Mesh> mesh; // owns the mesh the state fields point into
    std::vector<EstimatorSample> samples;
    std::vector<double> masses;
    std::vector<double> step_residuals;
    std::vector<State> trajectory; // only when keep_trajectory
    std::optional<State> final_state;
    double initial_error = 0.0; // ||rho_0 - rho_h(0)||_L2 by over-integration
    GronwallBounds gronwall;
    ConditionResult condition;
    FullEstimate full;
    double sup_e0 = 0.0;
    double l2t_e1 = 0.0;
    double l2t_errho = 0.0;
    double l2t_e1tilde = 0.0;
    double max_clamp_fraction = 0.0;
    std::vector<SnapshotRecord> snapshots;
    std::string estimator_log_path;
};

namespace detail {

inline std::vector<double> time_partition(double T, double tau, const std::vector<double>& snaps) {
    const int n_steps = std::max(1, static_cast<int>(std::ceil(T / tau - 1e-12)));
    std::vector<double> times;
    times.reserve(n_steps + 1 + snaps.size());
    for (int j = 0; j <= n_steps; ++j) times.push_back(T * j / n_steps);
    for (double s : snaps)
        if (s > 0.0 && s < T) times.push_back(s);
    std::sort(times.begin(), times.end());
    std::vector<double> unique;
    for (double t : times)
        if (unique.empty() || t - unique.back() > 1e-12 * std::max(T, 1.0)) unique.push_back(t);
    unique.back() = T;
    return unique;
}

inline std::string snapshot_filename(double requested_time) {
    char buf[48];
    std::snprintf(buf, sizeof(buf), "snapshot_t%g.csv", requested_time);
    return buf;
}

inline SnapshotRecord write_snapshot(const RunConfig& config, const State& state,
                                     double requested_time) {
    SnapshotRecord rec;
    rec.requested_time = requested_time;
    rec.actual_time = state.time;
    rec.step_index = state.step_index;
    const Mesh& mesh = state.rho.mesh();
    const int m = config.grid_samples;
    std::string body;
    body.reserve(static_cast<std::size_t>(m) * m * 48);
    body += "x,y,rho,c\n";
    double max_rho = -std::numeric_limits<double>::infinity();
    for (int py = 0; py < m; ++py)
        for (int px = 0; px < m; ++px) {
            const double x = config.rect.x0 + (config.rect.x1 - config.rect.x0) * px / (m - 1.0);
            const double y = config.rect.y0 + (config.rect.y1 - config.rect.y0) * py / (m - 1.0);
            double xi, eta;
            const int cell = mesh.locate_point(x, y, xi, eta);
            const double r = state.rho.value_in_cell(cell, xi, eta);
            const double c = state.c.value_in_cell(cell, xi, eta);
            max_rho = std::max(max_rho, r);
            if (config.write_outputs) {
                body += fmt17(x);
                body += ',';
                body += fmt17(y);
                body += ',';
                body += fmt17(r);
                body += ',';
                body += fmt17(c);
                body += '\n';
            }
        }
    rec.max_rho = max_rho;
    if (config.write_outputs) {
        rec.path = config.output_dir + "/" + snapshot_filename(requested_time);
        atomic_write_file(rec.path, body);
    }
    return rec;
}

inline std::string estimator_log_csv(const std::vector<EstimatorSample>& samples) {
    std::string out = "t,E0,E1,Eminus1,E1tilde,ERrho,ERrho_t1,ERrho_t2,ERrho_t3,ERrho_t4,"
                      "ERrho_t5,abar,rho_Linf,gradc_Linf\n";
    for (const auto& s : samples) {
        out += fmt17(s.t);
        for (double v : {s.e0, s.e1, s.eminus1, s.e1tilde, s.errho.value, s.errho.t1, s.errho.t2,
                         s.errho.t3, s.errho.t4, s.errho.t5, s.abar, s.rho_linf, s.gradc_linf}) {
            out += ',';
            out += fmt17(v);
        }
        out += '\n';
    }
    return out;
}

} // namespace detail

/// L2 distance between the analytic initial data and its projection,
/// over-integrated cellwise.
inline double initial_projection_error(const InitialData& rho0, const DgField& rho_h,
                                       int quad_degree = 12) {
    const Mesh& mesh = rho_h.mesh();
    const TriangleRule rule = make_triangle_rule(quad_degree);
    const BasisTable table(rho_h.basis(), rule);
    const int n = rho_h.modes_per_cell();
    double acc = 0.0;
    for (int cell = 0; cell < mesh.n_cells(); ++cell) {
        const auto& g = mesh.geometry[cell];
        const double* c = rho_h.cell_block(cell);
        for (std::size_t q = 0; q < rule.size(); ++q) {
            const double px = g.v0.x + g.jac[0][0] * rule.xi[q] + g.jac[0][1] * rule.eta[q];
            const double py = g.v0.y + g.jac[1][0] * rule.xi[q] + g.jac[1][1] * rule.eta[q];
            double uh = 0.0;
            for (int i = 0; i < n; ++i) uh += c[i] * table.value[q * n + i];
            const double d = rho0(px, py) - uh;
            acc += rule.weights[q] * g.det * d * d;
        }
    }
    return std::sqrt(acc);
}

/// Run the fully discrete scheme. The time partition is N = max(1, ceil(T/tau))
/// uniform steps refined with the configured snapshot times, so snapshots land
/// on step boundaries exactly.
inline RunResult run(const RunConfig& config) {
    if (!(config.final_time > 0.0)) throw std::invalid_argument("run: T must be positive");
    const double tau = config.effective_tau();
    if (!(tau > 0.0)) throw std::invalid_argument("run: tau must be positive");

    auto mesh_owner = std::make_shared<const Mesh>(build_uniform_triangulation(config.level, config.rect));
    const Mesh& mesh = *mesh_owner;
    auto basis = std::make_shared<ReferenceBasis>(config.degree);
    KellerSegelStepper stepper(mesh, basis, config.penalties, config.solver);
    const EstimatorContext ctx = stepper.estimator_context(config);

    RunResult result;
    result.mesh = mesh_owner;
    State state = stepper.init_state(config);
    result.initial_error = initial_projection_error(config.initial, state.rho);

    result.samples.push_back(compute_sample(ctx, 0.0, state.rho, state.c, nullptr));
    result.masses.push_back(result.samples.back().mass);
    if (config.keep_trajectory) result.trajectory.push_back(state);

    auto snapshot_due = [&](double t) {
        for (double s : config.snapshot_times)
            if (std::abs(s - t) <= 1e-12 * std::max(config.final_time, 1.0)) return true;
        return false;
    };
    if (snapshot_due(0.0))
        result.snapshots.push_back(detail::write_snapshot(config, state, 0.0));

    const std::vector<double> times =
        detail::time_partition(config.final_time, tau, config.snapshot_times);
    for (std::size_t j = 1; j < times.size(); ++j) {
        const double dt = times[j] - times[j - 1];
        State next = stepper.step(state, dt);
        next.time = times[j]; // avoid drift from accumulated addition
        result.step_residuals.push_back(stepper.last_step_residual());
        result.max_clamp_fraction = std::max(result.max_clamp_fraction,
                                             stepper.last_clamp_fraction());

        DgField drho_dt = next.rho - state.rho;
        for (double& v : drho_dt.coefficients()) v /= dt;
        result.samples.push_back(compute_sample(ctx, next.time, next.rho, next.c, &drho_dt));
        result.masses.push_back(result.samples.back().mass);

        state = std::move(next);
        if (config.keep_trajectory) result.trajectory.push_back(state);
        if (snapshot_due(state.time))
            result.snapshots.push_back(detail::write_snapshot(config, state, state.time));
    }
    result.final_state = state;

    // time norms: right-rule integrals plus the t = 0 sample for sup norms
    result.sup_e0 = result.samples.front().e0;
    double i_e1 = 0.0, i_err = 0.0, i_e1t = 0.0;
    for (std::size_t j = 1; j < result.samples.size(); ++j) {
        const double dt = result.samples[j].t - result.samples[j - 1].t;
        result.sup_e0 = std::max(result.sup_e0, result.samples[j].e0);
        i_e1 += dt * result.samples[j].e1 * result.samples[j].e1;
        i_err += dt * result.samples[j].errho.value * result.samples[j].errho.value;
        i_e1t += dt * result.samples[j].e1tilde * result.samples[j].e1tilde;
    }
    result.l2t_e1 = std::sqrt(i_e1);
    result.l2t_errho = std::sqrt(i_err);
    result.l2t_e1tilde = std::sqrt(i_e1t);

    result.gronwall = abar_ebar(result.samples, result.initial_error, config.final_time,
                                config.constants);
    result.condition = condition_check(result.gronwall, config.final_time, config.constants);
    result.full = full_estimator(result.gronwall.abar_upper, result.gronwall.log_ebar,
                                 result.sup_e0, result.l2t_e1, config.constants,
                                 result.condition.holds);

    if (config.write_outputs) {
        result.estimator_log_path = config.output_dir + "/estimators.csv";
        atomic_write_file(result.estimator_log_path, detail::estimator_log_csv(result.samples));
    }
    return result;
}

} // namespace ksdg
