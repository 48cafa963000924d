#include <catch2/catch.hpp>

#include <cmath>
#include <memory>
#include <random>

#include "ksdg/estimators.hpp"
#include "ksdg/forms.hpp"
#include "ksdg/mesh.hpp"
#include "oracle.hpp"

using namespace ksdg;

namespace {

std::shared_ptr<const ReferenceBasis> make_basis(int k) {
    return std::make_shared<ReferenceBasis>(k);
}

struct Fixture {
    Mesh mesh;
    std::shared_ptr<const ReferenceBasis> basis;
    SparseOperator mass;
    SparseOperator stiffness;
    MassSolver mass_solver;
    PenaltyConfig penalties;
    EstimatorContext ctx;

    Fixture(int level, int k) : mesh(build_uniform_triangulation(level)), basis(make_basis(k)) {
        mass = assemble_mass(mesh, *basis);
        stiffness = assemble_sip(mesh, *basis, penalties.eta_for(k));
        mass_solver.compute(mass, basis->size());
        const MeshStats stats = mesh_statistics(mesh);
        ctx.mesh = &mesh;
        ctx.basis = basis;
        ctx.stiffness = &stiffness;
        ctx.mass_solver = &mass_solver;
        ctx.penalties = penalties;
        ctx.delta = stats.delta;
        ctx.n_partial = stats.n_boundary_max;
    }
};

} // namespace

TEST_CASE("elemental residuals vanish for constants and smooth interpolants") {
    Fixture f(2, 2);
    const DgField zero(f.mesh, f.basis);
    const DgField cst = constant_field(f.mesh, f.basis, 7.0);
    const ElementalResiduals r1 = elemental_residuals(cst, zero);
    for (double v : r1.cell) CHECK(v == Approx(0.0).margin(1e-24));
    for (double v : r1.face_grad) CHECK(v == Approx(0.0).margin(1e-24));
    for (double v : r1.face_jump) CHECK(v == Approx(0.0).margin(1e-24));

    const DgField fx = l2_project([](double x, double) { return x; }, f.mesh, f.basis);
    const ElementalResiduals r2 = elemental_residuals(fx, zero);
    for (double v : r2.cell) CHECK(v == Approx(0.0).margin(1e-24));
    for (double v : r2.face_grad) CHECK(v == Approx(0.0).margin(1e-24));
    for (double v : r2.face_jump) CHECK(v == Approx(0.0).margin(1e-24));
}

TEST_CASE("elemental residuals match the oracle on random fields") {
    std::mt19937 rng(3);
    for (int k : {1, 2}) {
        Fixture f(1, k);
        for (int rep = 0; rep < 5; ++rep) {
            const DgField u = oracle::random_field(f.mesh, f.basis, rng);
            const DgField g = oracle::random_field(f.mesh, f.basis, rng);
            const ElementalResiduals mine = elemental_residuals(u, g);
            const oracle::Residuals ref = oracle::residuals(u, g, k + 3);
            for (int cell = 0; cell < f.mesh.n_cells(); ++cell)
                CHECK(oracle::approx_rel(mine.cell[cell], ref.cell[cell], 1e-12));
            for (std::size_t fi = 0; fi < f.mesh.interior_faces.size(); ++fi) {
                CHECK(oracle::approx_rel(mine.face_grad[fi], ref.face_grad[fi], 1e-12));
                CHECK(oracle::approx_rel(mine.face_jump[fi], ref.face_jump[fi], 1e-12));
            }
        }
    }
}

TEST_CASE("for k=1 the cell residual is the L2 norm of the forcing") {
    std::mt19937 rng(5);
    Fixture f(1, 1);
    const DgField u = oracle::random_field(f.mesh, f.basis, rng);
    const DgField g = oracle::random_field(f.mesh, f.basis, rng);
    const ElementalResiduals res = elemental_residuals(u, g);
    double total = 0.0;
    for (double v : res.cell) total += v;
    CHECK(oracle::approx_rel(total, oracle::mass_pairing(g, g, 4), 1e-12));
}

TEST_CASE("elliptic estimators: zero for constants, oracle agreement, homogeneity") {
    std::mt19937 rng(7);
    for (int k : {1, 2}) {
        Fixture f(1, k);
        const double eta = f.penalties.eta_for(k);

        const DgField cst = constant_field(f.mesh, f.basis, 3.0);
        const DgField a_cst = f.ctx.discrete_laplacian(cst);
        const EllipticEstimators ez =
            elliptic_estimators(elemental_residuals(cst, a_cst), f.mesh, eta);
        CHECK(ez.e0 == Approx(0.0).margin(1e-12));
        CHECK(ez.e1 == Approx(0.0).margin(1e-12));
        CHECK(ez.eminus1 == Approx(0.0).margin(1e-12));

        for (int rep = 0; rep < 5; ++rep) {
            const DgField u = oracle::random_field(f.mesh, f.basis, rng);
            const DgField au = f.ctx.discrete_laplacian(u);
            const EllipticEstimators mine =
                elliptic_estimators(elemental_residuals(u, au), f.mesh, eta);
            const oracle::EllipticEst ref = oracle::elliptic(u, au, eta, k + 3);
            CHECK(oracle::approx_rel(mine.e0, ref.e0, 1e-12));
            CHECK(oracle::approx_rel(mine.e1, ref.e1, 1e-12));
            CHECK(oracle::approx_rel(mine.eminus1, ref.eminus1, 1e-12));

            // homogeneity: scaling u scales every estimator linearly
            const double lambda = 3.25;
            const DgField su = lambda * u;
            const DgField asu = f.ctx.discrete_laplacian(su);
            const EllipticEstimators scaled =
                elliptic_estimators(elemental_residuals(su, asu), f.mesh, eta);
            CHECK(oracle::approx_rel(scaled.e0, lambda * mine.e0, 1e-12));
            CHECK(oracle::approx_rel(scaled.e1, lambda * mine.e1, 1e-12));
            CHECK(oracle::approx_rel(scaled.eminus1, lambda * mine.eminus1, 1e-12));

            // scale relation from the three-term structure
            const MeshStats stats = mesh_statistics(f.mesh);
            CHECK(mine.e0 <=
                  stats.h_max * mine.e1 * std::max(1.0, stats.h_max) * std::sqrt(3.0) + 1e-14);
        }
    }
}

TEST_CASE("e1_tilde: zero for matching constants, oracle agreement") {
    std::mt19937 rng(11);
    for (int k : {1, 2}) {
        Fixture f(1, k);
        const double sigma = f.penalties.sigma_for(k);
        const DgField cst = constant_field(f.mesh, f.basis, 2.0);
        CHECK(e1_tilde(cst, cst, sigma) == Approx(0.0).margin(1e-12));

        for (int rep = 0; rep < 5; ++rep) {
            const DgField c = oracle::random_field(f.mesh, f.basis, rng);
            const DgField rho = oracle::random_field(f.mesh, f.basis, rng);
            CHECK(oracle::approx_rel(e1_tilde(c, rho, sigma),
                                     oracle::e1_tilde(c, rho, sigma, k + 3), 1e-12));
        }
    }
}

TEST_CASE("E_Rrho: all terms vanish for constant states") {
    for (int k : {1, 2}) {
        Fixture f(2, k);
        const DgField cst = constant_field(f.mesh, f.basis, 1.5);
        const DgField zero(f.mesh, f.basis);
        const ERrhoBreakdown b = e_rrho(f.ctx, cst, cst, zero);
        CHECK(b.t1 == Approx(0.0).margin(1e-12));
        CHECK(b.t2 == Approx(0.0).margin(1e-12));
        CHECK(b.t3 == 0.0);
        CHECK(b.t4 == Approx(0.0).margin(1e-10));
        CHECK(b.t5 == Approx(0.0).margin(1e-10));
        CHECK(b.value == Approx(0.0).margin(1e-10));
    }
}

TEST_CASE("E_Rrho: breakdown sums to the value and term 3 is exactly zero") {
    std::mt19937 rng(13);
    for (int k : {1, 2}) {
        Fixture f(1, k);
        for (int rep = 0; rep < 10; ++rep) {
            const DgField rho = oracle::random_field(f.mesh, f.basis, rng, 0.1, 2.0);
            const DgField c = oracle::random_field(f.mesh, f.basis, rng);
            const DgField dt = oracle::random_field(f.mesh, f.basis, rng);
            const ERrhoBreakdown b = e_rrho(f.ctx, rho, c, dt);
            CHECK(b.t3 == 0.0); // div(rho grad c) has degree 2k-2 <= k
            CHECK(oracle::approx_rel(b.value, b.t1 + b.t2 + b.t3 + b.t4 + b.t5, 1e-13));
            CHECK(b.value >= 0.0);
            // h_T >= h_F per face, and h_T <= h_F / delta by mesh regularity
            const double delta = mesh_statistics(f.mesh).delta;
            CHECK(b.term5_h_cell_variant >= b.t5 * (1.0 - 1e-12));
            CHECK(b.term5_h_cell_variant <= b.t5 / std::sqrt(delta) * (1.0 + 1e-12));
        }
    }
}

TEST_CASE("E_Rrho formula matches an oracle recomposition") {
    std::mt19937 rng(17);
    for (int k : {1, 2}) {
        Fixture f(1, k);
        const double eta = f.penalties.eta_for(k);
        const double sigma = f.penalties.sigma_for(k);
        const ConstantsSet cs; // all ones
        const MeshStats stats = mesh_statistics(f.mesh);
        for (int rep = 0; rep < 5; ++rep) {
            const DgField rho = oracle::random_field(f.mesh, f.basis, rng, 0.1, 2.0);
            const DgField c = oracle::random_field(f.mesh, f.basis, rng);
            const DgField dt = oracle::random_field(f.mesh, f.basis, rng);
            const ERrhoBreakdown mine = e_rrho(f.ctx, rho, c, dt);

            const DgField a_rho = f.ctx.discrete_laplacian(rho);
            const DgField a_dt = f.ctx.discrete_laplacian(dt);
            const oracle::EllipticEst est = oracle::elliptic(rho, a_rho, eta, k + 3);
            const oracle::EllipticEst est_dt = oracle::elliptic(dt, a_dt, eta, k + 3);
            const double e1t = oracle::e1_tilde(c, rho, sigma, k + 3);

            // broken H1 and the face jump sum through the oracle residuals
            const oracle::Residuals res = oracle::residuals(rho, a_rho, k + 3);
            double h1 = 0.0;
            {
                const auto rule = oracle::triangle_rule(k + 2);
                const oracle::Poly poly(*f.basis);
                for (int cell = 0; cell < f.mesh.n_cells(); ++cell) {
                    const oracle::CellMap map = oracle::cell_map(f.mesh, cell);
                    for (const auto& q : rule) {
                        const Vec2 g = poly.gradient_phys(rho.cell_block(cell), map, q.xi, q.eta);
                        h1 += std::abs(map.det) * q.w * dot(g, g);
                    }
                }
            }
            double jump_hf = 0.0;
            for (std::size_t fi = 0; fi < f.mesh.interior_faces.size(); ++fi)
                jump_hf += f.mesh.interior_faces[fi].length * res.face_jump[fi];

            // sampled sup norms are shared inputs, not part of the formula check
            const BrokenNorms bn = broken_norms(rho);
            const double gradc_inf = grad_linf_sampled(c);

            const double cmax = cs.c_max(stats.n_boundary_max, stats.delta);
            const double t1 = est_dt.eminus1;
            const double t2 = 2.0 * est.e0 * std::sqrt(est.e1 * est.e1 + h1);
            const double t4 = std::sqrt(2.0) * std::sqrt(3.0) * std::sqrt(4.0 + 1.0) *
                              std::sqrt(cmax) * bn.linf * std::sqrt(est.e0 * est.e0 + e1t * e1t);
            const double t5 = 3.0 * gradc_inf * std::sqrt(jump_hf);
            CHECK(oracle::approx_rel(mine.value, t1 + t2 + t4 + t5, 1e-12));
        }
    }
}

TEST_CASE("abar integrand reduces to 1/3 for the zero state") {
    const ConstantsSet cs;
    CHECK(abar_integrand(0.0, 0.0, 0.0, 0.0, cs) == Approx(1.0 / 3.0).epsilon(1e-15));
}

TEST_CASE("abar_ebar: zero trajectory, single sample, empty input") {
    const ConstantsSet cs;
    const double T = 0.5;
    std::vector<EstimatorSample> samples(3);
    samples[0].t = 0.0;
    samples[1].t = 0.25;
    samples[2].t = 0.5;
    for (auto& s : samples) s.abar = 1.0 / 3.0; // zero fields
    const GronwallBounds g = abar_ebar(samples, 0.0, T, cs);
    CHECK(g.abar_upper == Approx(0.0).margin(1e-15));
    CHECK(g.log_ebar == Approx(T / 3.0).epsilon(1e-13));
    CHECK(g.ebar() == Approx(std::exp(T / 3.0)).epsilon(1e-13));
    CHECK_FALSE(g.ebar_saturated());

    std::vector<EstimatorSample> single(1);
    single[0].t = 0.0;
    const GronwallBounds g1 = abar_ebar(single, 0.0, 1.0, cs);
    CHECK(g1.abar_upper == 0.0);
    CHECK(g1.log_ebar == 0.0);

    CHECK_THROWS_AS(abar_ebar({}, 0.0, 1.0, cs), std::invalid_argument);
}

TEST_CASE("condition check: zero Abar holds, textbook margin, saturation") {
    const ConstantsSet cs; // B = 2
    const ConditionResult r0 = condition_check(0.0, 0.0, 1.0, cs);
    CHECK(r0.holds);
    CHECK(r0.margin == 0.0);
    CHECK(std::isinf(r0.log_margin));

    const ConditionResult r1 = condition_check(1.0, 0.0, 0.0, cs);
    CHECK_FALSE(r1.holds);
    CHECK(r1.margin == 2048.0);

    // margin grows with T for fixed Abar and Ebar
    const ConditionResult ra = condition_check(1e-6, 0.0, 0.1, cs);
    const ConditionResult rb = condition_check(1e-6, 0.0, 1.0, cs);
    CHECK(rb.margin > ra.margin);

    GronwallBounds sat;
    sat.abar_upper = 1.0;
    sat.log_ebar = 1000.0;
    const ConditionResult rs = condition_check(sat, 1.0, cs);
    CHECK_FALSE(rs.holds);
    CHECK(rs.saturated);

    CHECK_THROWS_AS(condition_check(-1.0, 0.0, 1.0, cs), std::invalid_argument);
}

TEST_CASE("condition holds for small enough Abar") {
    const ConstantsSet cs;
    // 512 * Abar * (2 (1+T))^2 <= 1 with T = 1, Ebar = 1
    const ConditionResult r = condition_check(1e-5, 0.0, 1.0, cs);
    CHECK(r.holds);
    CHECK(r.margin == Approx(512.0 * 1e-5 * 16.0).epsilon(1e-13));
}

TEST_CASE("full estimator: zero case, tail-only case, saturation") {
    const ConstantsSet cs;
    const FullEstimate f0 = full_estimator(0.0, 0.0, 0.0, 0.0, cs, true);
    CHECK(f0.value == 0.0);
    CHECK(f0.certified);
    CHECK_FALSE(f0.saturated);

    const double a = 0.7, b = 1.3;
    const FullEstimate ft = full_estimator(0.0, 0.0, a, b, cs, true);
    CHECK(ft.value == Approx(2.0 * a * a + 2.0 * b * b).epsilon(1e-15));

    const FullEstimate fs = full_estimator(1.0, 800.0, a, b, cs, false);
    CHECK(fs.saturated);
    CHECK_FALSE(fs.certified);

    const FullEstimate fv = full_estimator(2.0, 1.0, a, b, cs, true);
    CHECK(fv.value ==
          Approx(32.0 * 2.0 * std::exp(1.0) + 2.0 * a * a + 2.0 * b * b).epsilon(1e-13));
}

TEST_CASE("compute_sample produces finite, consistent records") {
    std::mt19937 rng(29);
    Fixture f(2, 1);
    const DgField rho = oracle::random_field(f.mesh, f.basis, rng, 0.1, 1.0);
    const DgField c = oracle::random_field(f.mesh, f.basis, rng, 0.1, 1.0);
    const DgField dt = oracle::random_field(f.mesh, f.basis, rng);
    const EstimatorSample s = compute_sample(f.ctx, 0.25, rho, c, &dt);
    CHECK(s.t == 0.25);
    CHECK(s.e0 >= 0.0);
    CHECK(s.e1 >= 0.0);
    CHECK(s.eminus1 >= 0.0);
    CHECK(s.e1tilde >= 0.0);
    CHECK(s.errho.value >= 0.0);
    CHECK(s.abar >= 1.0 / 3.0);
    CHECK(std::isfinite(s.rho_linf));
    CHECK(std::isfinite(s.gradc_linf));
    CHECK(s.mass == Approx(integral(rho)).epsilon(1e-13));

    // without a time derivative the E_minus1 contribution is zero
    const EstimatorSample s0 = compute_sample(f.ctx, 0.0, rho, c, nullptr);
    CHECK(s0.eminus1 == 0.0);
    CHECK(s0.errho.t1 == 0.0);

    // the k=1 literal reading zeroes E_minus1 through the context flag
    EstimatorContext ctx2 = f.ctx;
    ctx2.include_eminus1 = false;
    const EstimatorSample s2 = compute_sample(ctx2, 0.25, rho, c, &dt);
    CHECK(s2.eminus1 == 0.0);
    CHECK(s2.errho.t1 == 0.0);
    CHECK(s2.errho.value <= s.errho.value);
}

TEST_CASE("min face jump detector distinguishes continuous from broken fields") {
    Fixture f(2, 1);
    const DgField smooth = l2_project([](double x, double y) { return x + y; }, f.mesh, f.basis);
    CHECK(min_face_mean_square_jump(smooth) < 1e-26);
    std::mt19937 rng(31);
    const DgField rough = oracle::random_field(f.mesh, f.basis, rng);
    CHECK(min_face_mean_square_jump(rough) > 1e-10);
}
