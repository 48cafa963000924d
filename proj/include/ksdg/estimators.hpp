#pragma once

#include <cmath>
#include <limits>
#include <memory>
#include <optional>
#include <stdexcept>
#include <vector>

#include "ksdg/constants.hpp"
#include "ksdg/dg_field.hpp"
#include "ksdg/forms.hpp"
#include "ksdg/mesh.hpp"
#include "ksdg/sparse_operator.hpp"

namespace ksdg {

/// Squared elemental residuals: R_T = ||lap u + f||^2 per cell,
/// R_F^1 = ||[grad u] . n||^2 and R_F^0 = ||[u]||^2 per interior face.
struct ElementalResiduals {
    std::vector<double> cell;      // R_T
    std::vector<double> face_grad; // R_F^1
    std::vector<double> face_jump; // R_F^0
};

inline ElementalResiduals elemental_residuals(const DgField& u, const DgField& f) {
    const Mesh& mesh = u.mesh();
    if (&f.mesh() != &mesh || f.degree() != u.degree())
        throw std::invalid_argument("elemental_residuals: fields live in different spaces");
    const int k = u.degree();
    const int n = u.modes_per_cell();
    const TriangleRule cell_rule = make_triangle_rule(std::max(2 * k, 2));
    const EdgeRule edge_rule = make_edge_rule(2 * k + 2);
    const BasisTable table(u.basis(), cell_rule);

    // tabulated reference hessians for the cell Laplacian
    const std::size_t nq = cell_rule.size();
    std::vector<double> hxx(nq * n), hxy(nq * n), hyy(nq * n);
    for (std::size_t q = 0; q < nq; ++q)
        for (int i = 0; i < n; ++i)
            u.basis().hessian(i, cell_rule.xi[q], cell_rule.eta[q], hxx[q * n + i],
                              hxy[q * n + i], hyy[q * n + i]);

    ElementalResiduals res;
    res.cell.assign(mesh.n_cells(), 0.0);
    res.face_grad.assign(mesh.interior_faces.size(), 0.0);
    res.face_jump.assign(mesh.interior_faces.size(), 0.0);

    for (int cell = 0; cell < mesh.n_cells(); ++cell) {
        const auto& g = mesh.geometry[cell];
        const double g00 = g.inv[0][0] * g.inv[0][0] + g.inv[0][1] * g.inv[0][1];
        const double g01 = g.inv[0][0] * g.inv[1][0] + g.inv[0][1] * g.inv[1][1];
        const double g11 = g.inv[1][0] * g.inv[1][0] + g.inv[1][1] * g.inv[1][1];
        const double* cu = u.cell_block(cell);
        const double* cf = f.cell_block(cell);
        double acc = 0.0;
        for (std::size_t q = 0; q < nq; ++q) {
            double lap = 0.0, fval = 0.0;
            for (int i = 0; i < n; ++i) {
                lap += cu[i] * (g00 * hxx[q * n + i] + 2.0 * g01 * hxy[q * n + i] +
                                g11 * hyy[q * n + i]);
                fval += cf[i] * table.value[q * n + i];
            }
            const double r = lap + fval;
            acc += cell_rule.weights[q] * g.det * r * r;
        }
        res.cell[cell] = acc;
    }

    for (std::size_t fi = 0; fi < mesh.interior_faces.size(); ++fi) {
        const auto& face = mesh.interior_faces[fi];
        double accg = 0.0, accj = 0.0;
        for (std::size_t q = 0; q < edge_rule.size(); ++q) {
            double xi, eta;
            Mesh::face_point_on_reference(face.left_a, face.left_b, edge_rule.points[q], xi, eta);
            const double ul = u.value_in_cell(face.left, xi, eta);
            const Vec2 gl = u.gradient_in_cell(face.left, xi, eta);
            Mesh::face_point_on_reference(face.right_a, face.right_b, edge_rule.points[q], xi, eta);
            const double ur = u.value_in_cell(face.right, xi, eta);
            const Vec2 gr = u.gradient_in_cell(face.right, xi, eta);
            const double gjump = dot(gl - gr, face.normal);
            const double vjump = ul - ur;
            const double w = edge_rule.weights[q] * face.length;
            accg += w * gjump * gjump;
            accj += w * vjump * vjump;
        }
        res.face_grad[fi] = accg;
        res.face_jump[fi] = accj;
    }
    return res;
}

struct EllipticEstimators {
    double e0 = 0.0;
    double e1 = 0.0;
    double eminus1 = 0.0;
};

inline EllipticEstimators elliptic_estimators(const ElementalResiduals& res, const Mesh& mesh,
                                              double eta) {
    double s0 = 0.0, s1 = 0.0, sm = 0.0;
    for (int cell = 0; cell < mesh.n_cells(); ++cell) {
        const double h = mesh.cell_diameters[cell];
        const double h2 = h * h;
        s0 += h2 * h2 * res.cell[cell];
        s1 += h2 * res.cell[cell];
        sm += h2 * h2 * h2 * res.cell[cell];
    }
    const double eta2 = eta * eta;
    for (std::size_t fi = 0; fi < mesh.interior_faces.size(); ++fi) {
        const double h = mesh.interior_faces[fi].length;
        s0 += h * h * h * res.face_grad[fi] + eta2 * h * res.face_jump[fi];
        s1 += h * res.face_grad[fi] + eta2 / h * res.face_jump[fi];
        sm += h * h * h * h * h * res.face_grad[fi] + eta2 * h * h * h * res.face_jump[fi];
    }
    return {std::sqrt(s0), std::sqrt(s1), std::sqrt(sm)};
}

inline double e0(const DgField& u, const DgField& f, double eta) {
    return elliptic_estimators(elemental_residuals(u, f), u.mesh(), eta).e0;
}
inline double e1(const DgField& u, const DgField& f, double eta) {
    return elliptic_estimators(elemental_residuals(u, f), u.mesh(), eta).e1;
}
inline double e_minus1(const DgField& u, const DgField& f, double eta) {
    return elliptic_estimators(elemental_residuals(u, f), u.mesh(), eta).eminus1;
}

/// E~_1[c_h, f_h]^2 with f_h = rho_h: volume residual of the discrete
/// c-equation plus gradient-jump and penalty-weighted jump terms.
inline double e1_tilde(const DgField& c, const DgField& rho, double sigma) {
    const Mesh& mesh = c.mesh();
    if (&rho.mesh() != &mesh || rho.degree() != c.degree())
        throw std::invalid_argument("e1_tilde: fields live in different spaces");
    const int k = c.degree();
    const int n = c.modes_per_cell();
    const TriangleRule cell_rule = make_triangle_rule(std::max(2 * k, 2));
    const EdgeRule edge_rule = make_edge_rule(2 * k + 2);
    const BasisTable table(c.basis(), cell_rule);
    const std::size_t nq = cell_rule.size();
    std::vector<double> hxx(nq * n), hxy(nq * n), hyy(nq * n);
    for (std::size_t q = 0; q < nq; ++q)
        for (int i = 0; i < n; ++i)
            c.basis().hessian(i, cell_rule.xi[q], cell_rule.eta[q], hxx[q * n + i], hxy[q * n + i],
                              hyy[q * n + i]);

    double total = 0.0;
    for (int cell = 0; cell < mesh.n_cells(); ++cell) {
        const auto& g = mesh.geometry[cell];
        const double g00 = g.inv[0][0] * g.inv[0][0] + g.inv[0][1] * g.inv[0][1];
        const double g01 = g.inv[0][0] * g.inv[1][0] + g.inv[0][1] * g.inv[1][1];
        const double g11 = g.inv[1][0] * g.inv[1][0] + g.inv[1][1] * g.inv[1][1];
        const double* cc = c.cell_block(cell);
        const double* cr = rho.cell_block(cell);
        double acc = 0.0;
        for (std::size_t q = 0; q < nq; ++q) {
            double lap = 0.0, cval = 0.0, rval = 0.0;
            for (int i = 0; i < n; ++i) {
                lap += cc[i] * (g00 * hxx[q * n + i] + 2.0 * g01 * hxy[q * n + i] +
                                g11 * hyy[q * n + i]);
                cval += cc[i] * table.value[q * n + i];
                rval += cr[i] * table.value[q * n + i];
            }
            const double r = rval - cval + lap;
            acc += cell_rule.weights[q] * g.det * r * r;
        }
        const double h = mesh.cell_diameters[cell];
        total += h * h * acc;
    }

    for (const auto& face : mesh.interior_faces) {
        double accg = 0.0, accj = 0.0;
        for (std::size_t q = 0; q < edge_rule.size(); ++q) {
            double xi, eta;
            Mesh::face_point_on_reference(face.left_a, face.left_b, edge_rule.points[q], xi, eta);
            const double cl = c.value_in_cell(face.left, xi, eta);
            const Vec2 gl = c.gradient_in_cell(face.left, xi, eta);
            Mesh::face_point_on_reference(face.right_a, face.right_b, edge_rule.points[q], xi, eta);
            const double crv = c.value_in_cell(face.right, xi, eta);
            const Vec2 gr = c.gradient_in_cell(face.right, xi, eta);
            const double w = edge_rule.weights[q] * face.length;
            const double gjump = dot(gl - gr, face.normal);
            const double vjump = cl - crv;
            accg += w * gjump * gjump;
            accj += w * vjump * vjump;
        }
        total += face.length * accg + sigma * sigma / face.length * accj;
    }
    return std::sqrt(total);
}

/// Minimum over interior faces of the mean-square jump ||[u]||^2 / h_F.
/// Used to detect the roundoff floor of the c_h jumps.
inline double min_face_mean_square_jump(const DgField& u) {
    const Mesh& mesh = u.mesh();
    const EdgeRule edge_rule = make_edge_rule(2 * u.degree() + 2);
    double best = std::numeric_limits<double>::infinity();
    for (const auto& face : mesh.interior_faces) {
        const FaceTraces tr = face_traces(u, face, edge_rule);
        double acc = 0.0;
        for (std::size_t q = 0; q < edge_rule.size(); ++q) {
            const double j = tr.left[q] - tr.right[q];
            acc += edge_rule.weights[q] * j * j; // already divided by h_F
        }
        best = std::min(best, acc);
    }
    return best;
}

/// Everything the residual bound needs from the surrounding run.
struct EstimatorContext {
    const Mesh* mesh = nullptr;
    std::shared_ptr<const ReferenceBasis> basis;
    const SparseOperator* stiffness = nullptr; // SIP operator with eta
    const MassSolver* mass_solver = nullptr;
    PenaltyConfig penalties;
    ConstantsSet constants;
    double delta = 0.0;     // mesh regularity
    double n_partial = 3.0; // N_del
    bool include_eminus1 = true;

    DgField discrete_laplacian(const DgField& u) const {
        const Eigen::VectorXd su = stiffness->matrix * as_vector(u);
        return field_from_vector(*mesh, basis, mass_solver->solve(su));
    }
};

struct ERrhoBreakdown {
    double t1 = 0.0, t2 = 0.0, t3 = 0.0, t4 = 0.0, t5 = 0.0;
    double value = 0.0;
    double term5_h_cell_variant = 0.0; // face sum weighted by the cell diameter
};

namespace detail {

/// ||d - pi_h d||^2 per cell for d = div(rho grad c), a cellwise polynomial
/// of degree 2k-2. Expanded in an orthonormal basis of that degree, the
/// projection residual is the coefficient mass above degree k, so for k <= 2
/// the set of contributing modes is empty and the result is exactly zero.
inline std::vector<double> chemo_projection_residual_sq(const DgField& rho, const DgField& c) {
    const Mesh& mesh = rho.mesh();
    const int k = rho.degree();
    std::vector<double> out(mesh.n_cells(), 0.0);
    const int ddeg = 2 * k - 2;
    if (ddeg <= k) return out;

    const ReferenceBasis dbasis(ddeg);
    const TriangleRule rule = make_triangle_rule(2 * ddeg);
    const BasisTable dtable(dbasis, rule);
    const int nd = dbasis.size();
    const int n_keep = (k + 1) * (k + 2) / 2;
    for (int cell = 0; cell < mesh.n_cells(); ++cell) {
        const auto& g = mesh.geometry[cell];
        std::vector<double> coeff(nd, 0.0);
        for (std::size_t q = 0; q < rule.size(); ++q) {
            const Vec2 gr = rho.gradient_in_cell(cell, rule.xi[q], rule.eta[q]);
            const Vec2 gc = c.gradient_in_cell(cell, rule.xi[q], rule.eta[q]);
            const double rv = rho.value_in_cell(cell, rule.xi[q], rule.eta[q]);
            const double lc = c.laplacian_in_cell(cell, rule.xi[q], rule.eta[q]);
            const double d = dot(gr, gc) + rv * lc;
            const double w = rule.weights[q] * g.det;
            for (int i = n_keep; i < nd; ++i) coeff[i] += w * d * dtable.value[q * nd + i];
        }
        double s = 0.0;
        for (int i = n_keep; i < nd; ++i) s += coeff[i] * coeff[i];
        out[cell] = s / g.det; // physical orthonormal modes carry 1/sqrt(det)
    }
    return out;
}

} // namespace detail

/// The five-term computable bound on the H^{-1} residual norm.
inline ERrhoBreakdown e_rrho_terms(const EstimatorContext& ctx, const DgField& rho,
                                   const DgField& c, const EllipticEstimators& est_rho,
                                   double eminus1_dt, double e1t, double h1_sq_sum,
                                   double rho_linf, double gradc_linf,
                                   const ElementalResiduals& res_rho) {
    const ConstantsSet& cs = ctx.constants;
    const Mesh& mesh = *ctx.mesh;
    ERrhoBreakdown out;

    out.t1 = cs.c_minus1 * eminus1_dt;
    out.t2 = 2.0 * cs.c_s_dprime * cs.c_ell * cs.c_0 * est_rho.e0 *
             std::sqrt(cs.c_1 * cs.c_1 * est_rho.e1 * est_rho.e1 + h1_sq_sum);

    const std::vector<double> proj_res = detail::chemo_projection_residual_sq(rho, c);
    double t3_sq = 0.0;
    for (int cell = 0; cell < mesh.n_cells(); ++cell) {
        const double h = mesh.cell_diameters[cell];
        t3_sq += cs.c_app_prime * cs.c_app_prime * h * h * proj_res[cell];
    }
    out.t3 = std::sqrt(t3_sq);

    const double cmax = cs.c_max(ctx.n_partial, ctx.delta);
    const double cap1 = cs.c_app_prime + 1.0;
    out.t4 = std::sqrt(2.0) * std::sqrt(ctx.n_partial) * std::sqrt(cap1 * cap1 + 1.0) *
             std::sqrt(cmax) * rho_linf *
             std::sqrt(cs.c_ell * cs.c_ell * cs.c_0 * cs.c_0 * est_rho.e0 * est_rho.e0 +
                       cs.c_tilde1 * cs.c_tilde1 * e1t * e1t);

    double jump_hf = 0.0, jump_ht = 0.0;
    for (std::size_t fi = 0; fi < mesh.interior_faces.size(); ++fi) {
        const auto& f = mesh.interior_faces[fi];
        jump_hf += f.length * res_rho.face_jump[fi];
        jump_ht += std::max(mesh.cell_diameters[f.left], mesh.cell_diameters[f.right]) *
                   res_rho.face_jump[fi];
    }
    out.t5 = ctx.n_partial * cs.c_app_dprime * gradc_linf * std::sqrt(jump_hf);
    out.term5_h_cell_variant = ctx.n_partial * cs.c_app_dprime * gradc_linf * std::sqrt(jump_ht);

    out.value = out.t1 + out.t2 + out.t3 + out.t4 + out.t5;
    return out;
}

/// Per-time-step record of all estimator values.
struct EstimatorSample {
    double t = 0.0;
    double e0 = 0.0, e1 = 0.0, eminus1 = 0.0, e1tilde = 0.0;
    ERrhoBreakdown errho;
    double abar = 0.0;
    double rho_linf = 0.0;
    double gradc_linf = 0.0;
    double rho_l2_sq = 0.0; // sum of ||rho||^2 over cells
    double rho_h1_sq = 0.0; // sum of |rho|^2_H1 over cells
    double mass = 0.0;      // integral of rho
    double c_min_face_jump_sq = 0.0;
    double c_linf = 0.0;
};

inline double abar_integrand(double e0v, double e1v, double l2_sq, double h1_sq,
                             const ConstantsSet& cs) {
    const double e0t = cs.c_0 * cs.c_0 * e0v * e0v;
    const double e1t = cs.c_1 * cs.c_1 * e1v * e1v;
    return 6.0 * cs.c_s * cs.c_s * cs.c_s_prime * cs.c_s_prime * cs.c_ell * cs.c_ell *
               (e0t + e1t + l2_sq + h1_sq) +
           6.0 * cs.c_s_dprime * cs.c_ell * cs.c_ell * (e1t + h1_sq) + 1.0 / 3.0;
}

/// Full estimator record at one time; drho_dt may be null at t = 0, in which
/// case the time-derivative estimator contributes zero.
inline EstimatorSample compute_sample(const EstimatorContext& ctx, double t, const DgField& rho,
                                      const DgField& c, const DgField* drho_dt) {
    EstimatorSample s;
    s.t = t;

    const DgField a_rho = ctx.discrete_laplacian(rho);
    const ElementalResiduals res_rho = elemental_residuals(rho, a_rho);
    const EllipticEstimators est = elliptic_estimators(res_rho, *ctx.mesh,
                                                       ctx.penalties.eta_for(rho.degree()));
    s.e0 = est.e0;
    s.e1 = est.e1;

    if (drho_dt != nullptr && ctx.include_eminus1) {
        const DgField a_dt = ctx.discrete_laplacian(*drho_dt);
        s.eminus1 = elliptic_estimators(elemental_residuals(*drho_dt, a_dt), *ctx.mesh,
                                        ctx.penalties.eta_for(rho.degree()))
                        .eminus1;
    }

    s.e1tilde = e1_tilde(c, rho, ctx.penalties.sigma_for(c.degree()));

    const BrokenNorms bn = broken_norms(rho);
    s.rho_linf = bn.linf;
    s.rho_l2_sq = bn.l2 * bn.l2;
    s.rho_h1_sq = bn.h1_semi * bn.h1_semi;
    s.gradc_linf = grad_linf_sampled(c);
    s.mass = integral(rho);
    s.c_min_face_jump_sq = min_face_mean_square_jump(c);
    {
        const BrokenNorms bc = broken_norms(c);
        s.c_linf = bc.linf;
    }

    s.errho = e_rrho_terms(ctx, rho, c, est, s.eminus1, s.e1tilde, s.rho_h1_sq, s.rho_linf,
                           s.gradc_linf, res_rho);
    // div(rho grad c) lies inside the projection's range for k <= 2
    if (rho.degree() <= 2 && s.errho.t3 != 0.0)
        throw NumericalError("compute_sample: nonzero chemotaxis projection residual for k <= 2");
    s.abar = abar_integrand(s.e0, s.e1, s.rho_l2_sq, s.rho_h1_sq, ctx.constants);

    if (!std::isfinite(s.e0) || !std::isfinite(s.e1) || !std::isfinite(s.errho.value) ||
        !std::isfinite(s.abar))
        throw NumericalError("compute_sample: non-finite estimator value at t = " +
                             std::to_string(t));
    return s;
}

/// Spec-shaped convenience wrapper around the five-term bound.
inline ERrhoBreakdown e_rrho(const EstimatorContext& ctx, const DgField& rho, const DgField& c,
                             const DgField& drho_dt) {
    const EstimatorSample s = compute_sample(ctx, 0.0, rho, c, &drho_dt);
    return s.errho;
}

/// Computable Gronwall data: Abar and the exponent of Ebar (kept in log space
/// so the condition stays decidable when exp overflows).
struct GronwallBounds {
    double abar_upper = 0.0; // Abar
    double log_ebar = 0.0;   // integral of the abar integrand

    bool ebar_saturated() const { return log_ebar > 709.0; }
    double ebar() const {
        return ebar_saturated() ? std::numeric_limits<double>::max() : std::exp(log_ebar);
    }
};

/// Time integrals over the sample sequence: each sample after the first is
/// weighted by its backward interval; the t = 0 sample enters only through
/// E_0(0).
inline GronwallBounds abar_ebar(const std::vector<EstimatorSample>& samples, double initial_error,
                                double /*T*/, const ConstantsSet&) {
    if (samples.empty()) throw std::invalid_argument("abar_ebar: empty sample series");
    GronwallBounds g;
    double int_errho_sq = 0.0;
    double int_abar = 0.0;
    for (std::size_t i = 1; i < samples.size(); ++i) {
        const double dt = samples[i].t - samples[i - 1].t;
        if (dt < 0.0) throw std::invalid_argument("abar_ebar: samples not ordered in time");
        int_errho_sq += dt * samples[i].errho.value * samples[i].errho.value;
        int_abar += dt * samples[i].abar;
    }
    g.abar_upper = 2.0 * initial_error * initial_error + 2.0 * samples.front().e0 * samples.front().e0 +
                   int_errho_sq;
    g.log_ebar = int_abar;
    return g;
}

struct ConditionResult {
    bool holds = false;
    double margin = 0.0;     // 2^9 Abar Ebar^3 (B (1+T))^2, saturated at max
    double log_margin = 0.0; // -inf when Abar = 0
    bool saturated = false;
};

inline ConditionResult condition_check(double abar_upper, double log_ebar, double T,
                                       const ConstantsSet& cs) {
    ConditionResult r;
    if (abar_upper < 0.0) throw std::invalid_argument("condition_check: negative Abar");
    const double bt = cs.b() * (1.0 + T);
    if (abar_upper == 0.0) {
        r.holds = true;
        r.margin = 0.0;
        r.log_margin = -std::numeric_limits<double>::infinity();
        return r;
    }
    r.log_margin = std::log(512.0 * abar_upper) + 3.0 * log_ebar + 2.0 * std::log(bt);
    r.holds = r.log_margin <= 0.0;
    if (r.log_margin > 709.0) {
        r.saturated = true;
        r.margin = std::numeric_limits<double>::max();
    } else {
        const double ebar = std::exp(log_ebar);
        r.margin = 512.0 * abar_upper * ebar * ebar * ebar * (bt * bt);
    }
    return r;
}

inline ConditionResult condition_check(const GronwallBounds& g, double T, const ConstantsSet& cs) {
    ConditionResult r = condition_check(g.abar_upper, g.log_ebar, T, cs);
    if (g.ebar_saturated()) r.holds = false; // saturated exponent is never certified
    return r;
}

struct FullEstimate {
    double value = 0.0;
    bool saturated = false; // exponential term overflowed
    bool certified = false; // condition_check held
};

/// 32 Abar Ebar + 2 C_0^2 sup E_0^2 + 2 C_1^2 ||E_1||^2_{L2(0,T)}.
inline FullEstimate full_estimator(double abar_upper, double log_ebar, double sup_e0,
                                   double l2t_e1, const ConstantsSet& cs, bool condition_holds) {
    FullEstimate f;
    f.certified = condition_holds;
    const double tail = 2.0 * cs.c_0 * cs.c_0 * sup_e0 * sup_e0 +
                        2.0 * cs.c_1 * cs.c_1 * l2t_e1 * l2t_e1;
    if (abar_upper == 0.0) {
        f.value = tail;
        return f;
    }
    const double log_first = std::log(32.0 * abar_upper) + log_ebar;
    if (log_first > 709.0) {
        f.saturated = true;
        f.value = std::numeric_limits<double>::max();
        return f;
    }
    f.value = 32.0 * abar_upper * std::exp(log_ebar) + tail;
    return f;
}

} // namespace ksdg
