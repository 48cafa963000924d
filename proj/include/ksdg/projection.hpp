#pragma once

#include <Eigen/Sparse>

#include <functional>
#include <memory>

#include "ksdg/dg_field.hpp"
#include "ksdg/forms.hpp"
#include "ksdg/sparse_operator.hpp"

namespace ksdg {

namespace detail {

/// Copy of `a` with dof `pin` strongly fixed: row/col removed, unit diagonal.
inline SpMat pin_dof(const SpMat& a, Eigen::Index pin) {
    std::vector<Eigen::Triplet<double>> trips;
    trips.reserve(static_cast<std::size_t>(a.nonZeros()) + 1);
    for (int k = 0; k < a.outerSize(); ++k)
        for (SpMat::InnerIterator it(a, k); it; ++it) {
            if (it.row() == pin || it.col() == pin) continue;
            trips.emplace_back(it.row(), it.col(), it.value());
        }
    trips.emplace_back(pin, pin, 1.0);
    SpMat out(a.rows(), a.cols());
    out.setFromTriplets(trips.begin(), trips.end());
    return out;
}

/// Vector of integrals of all global basis functions.
inline Eigen::VectorXd dof_integrals(const Mesh& mesh, const ReferenceBasis& basis) {
    const int n = basis.size();
    Eigen::VectorXd g(static_cast<Eigen::Index>(mesh.n_cells()) * n);
    for (int cell = 0; cell < mesh.n_cells(); ++cell)
        for (int i = 0; i < n; ++i)
            g[cell * n + i] = mesh.geometry[cell].det * basis.mode_integral(i);
    return g;
}

} // namespace detail

/// Elliptic projection onto the degree-k space: the SIP system is driven by a
/// cellwise degree-(k+2) projection of f, the constant kernel is fixed by
/// pinning one dof, and the mean value of the result is set to the integral
/// of f afterwards.
inline DgField elliptic_project(const std::function<double(double, double)>& f, const Mesh& mesh,
                                std::shared_ptr<const ReferenceBasis> basis,
                                const SparseOperator& sip, double eta,
                                SolverKind solver_kind = SolverKind::direct,
                                int mean_quad_degree = 12) {
    const int k = basis->degree();
    auto high_basis = std::make_shared<ReferenceBasis>(k + 2);
    const DgField interpolant = l2_project(f, mesh, high_basis, 2 * (k + 2) + 4);
    Eigen::VectorXd b = sip_apply_to_field(interpolant, *basis, eta);

    SpdSolver solver(solver_kind);
    SpMat pinned = detail::pin_dof(sip.matrix, 0);
    b[0] = 0.0;
    solver.compute(pinned);
    Eigen::VectorXd x = solver.solve(b);

    // fix the mean to the integral of f
    const TriangleRule rule = make_triangle_rule(mean_quad_degree);
    double target = 0.0;
    for (int cell = 0; cell < mesh.n_cells(); ++cell) {
        const auto& g = mesh.geometry[cell];
        double s = 0.0;
        for (std::size_t q = 0; q < rule.size(); ++q) {
            const double px = g.v0.x + g.jac[0][0] * rule.xi[q] + g.jac[0][1] * rule.eta[q];
            const double py = g.v0.y + g.jac[1][0] * rule.xi[q] + g.jac[1][1] * rule.eta[q];
            s += rule.weights[q] * f(px, py);
        }
        target += g.det * s;
    }
    const Eigen::VectorXd g = detail::dof_integrals(mesh, *basis);
    const DgField ones = constant_field(mesh, basis, 1.0);
    const Eigen::VectorXd onevec = as_vector(ones);
    const double area = g.dot(onevec);
    const double shift = (target - g.dot(x)) / area;
    x += shift * onevec;

    const Eigen::VectorXd x_pinned = x - shift * onevec;
    double entry_scale = 0.0;
    for (int k2 = 0; k2 < pinned.outerSize(); ++k2)
        for (SpMat::InnerIterator it(pinned, k2); it; ++it)
            entry_scale = std::max(entry_scale, std::abs(it.value()));
    // breakdown is judged against the data magnitude, not just ||b||, which
    // is pure roundoff for constant inputs
    const double data_scale = as_vector(interpolant).norm() + x_pinned.norm();
    const double scale = b.norm() + entry_scale * data_scale;
    const double res = (pinned * x_pinned - b).norm();
    if (scale > 0.0 && res > 1e-6 * scale)
        throw NumericalError("elliptic_project: solver breakdown, relative residual " +
                             std::to_string(res / scale));
    return field_from_vector(mesh, basis, x);
}

inline DgField elliptic_project(const std::function<double(double, double)>& f, const Mesh& mesh,
                                std::shared_ptr<const ReferenceBasis> basis, double eta,
                                SolverKind solver_kind = SolverKind::direct) {
    const SparseOperator sip = assemble_sip(mesh, *basis, eta);
    return elliptic_project(f, mesh, std::move(basis), sip, eta, solver_kind);
}

} // namespace ksdg
