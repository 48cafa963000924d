#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <functional>
#include <memory>
#include <stdexcept>
#include <vector>

#include "ksdg/mesh.hpp"
#include "ksdg/quadrature.hpp"
#include "ksdg/reference_basis.hpp"

namespace ksdg {

struct NumericalError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Piecewise polynomial on a mesh: one coefficient block per cell in the
/// orthonormal reference basis.
class DgField {
public:
    DgField() = default;
    DgField(const Mesh& mesh, std::shared_ptr<const ReferenceBasis> basis)
        : mesh_(&mesh), basis_(std::move(basis)),
          coeffs_(static_cast<std::size_t>(mesh.n_cells()) * basis_->size(), 0.0) {}

    const Mesh& mesh() const { return *mesh_; }
    const ReferenceBasis& basis() const { return *basis_; }
    std::shared_ptr<const ReferenceBasis> basis_ptr() const { return basis_; }
    int degree() const { return basis_->degree(); }
    int modes_per_cell() const { return basis_->size(); }
    std::size_t size() const { return coeffs_.size(); }

    std::vector<double>& coefficients() { return coeffs_; }
    const std::vector<double>& coefficients() const { return coeffs_; }

    double* cell_block(int cell) { return coeffs_.data() + static_cast<std::size_t>(cell) * basis_->size(); }
    const double* cell_block(int cell) const {
        return coeffs_.data() + static_cast<std::size_t>(cell) * basis_->size();
    }

    void check_cell(int cell) const {
        if (cell < 0 || cell >= mesh_->n_cells())
            throw std::out_of_range("DgField: cell index out of range");
    }

    double value_in_cell(int cell, double xi, double eta) const {
        check_cell(cell);
        const double* c = cell_block(cell);
        double s = 0.0;
        for (int i = 0; i < basis_->size(); ++i) s += c[i] * basis_->value(i, xi, eta);
        return s;
    }

    /// Physical gradient inside a cell (uses the cell's affine map).
    Vec2 gradient_in_cell(int cell, double xi, double eta) const {
        check_cell(cell);
        const double* c = cell_block(cell);
        const auto& g = mesh_->geometry[cell];
        double gx = 0.0, gy = 0.0;
        for (int i = 0; i < basis_->size(); ++i) {
            double dxi, deta;
            basis_->gradient(i, xi, eta, dxi, deta);
            gx += c[i] * (g.inv[0][0] * dxi + g.inv[1][0] * deta);
            gy += c[i] * (g.inv[0][1] * dxi + g.inv[1][1] * deta);
        }
        return {gx, gy};
    }

    /// Physical Laplacian inside a cell.
    double laplacian_in_cell(int cell, double xi, double eta) const {
        check_cell(cell);
        const double* c = cell_block(cell);
        const auto& g = mesh_->geometry[cell];
        // metric of the affine pullback: G = inv * inv^T
        const double g00 = g.inv[0][0] * g.inv[0][0] + g.inv[0][1] * g.inv[0][1];
        const double g01 = g.inv[0][0] * g.inv[1][0] + g.inv[0][1] * g.inv[1][1];
        const double g11 = g.inv[1][0] * g.inv[1][0] + g.inv[1][1] * g.inv[1][1];
        double s = 0.0;
        for (int i = 0; i < basis_->size(); ++i) {
            double dxx, dxy, dyy;
            basis_->hessian(i, xi, eta, dxx, dxy, dyy);
            s += c[i] * (g00 * dxx + 2.0 * g01 * dxy + g11 * dyy);
        }
        return s;
    }

private:
    const Mesh* mesh_ = nullptr;
    std::shared_ptr<const ReferenceBasis> basis_;
    std::vector<double> coeffs_;
};

inline DgField operator*(double s, const DgField& f) {
    DgField out = f;
    for (double& c : out.coefficients()) c *= s;
    return out;
}

inline DgField operator-(const DgField& a, const DgField& b) {
    DgField out = a;
    for (std::size_t i = 0; i < out.size(); ++i) out.coefficients()[i] -= b.coefficients()[i];
    return out;
}

/// Traces of a field on one face, sampled at edge-rule nodes running from
/// endpoint a to endpoint b.
struct FaceTraces {
    std::vector<double> left;
    std::vector<double> right;
};

inline FaceTraces face_traces(const DgField& u, const InteriorFace& f, const EdgeRule& rule) {
    FaceTraces tr;
    tr.left.resize(rule.size());
    tr.right.resize(rule.size());
    for (std::size_t q = 0; q < rule.size(); ++q) {
        double xi, eta;
        Mesh::face_point_on_reference(f.left_a, f.left_b, rule.points[q], xi, eta);
        tr.left[q] = u.value_in_cell(f.left, xi, eta);
        Mesh::face_point_on_reference(f.right_a, f.right_b, rule.points[q], xi, eta);
        tr.right[q] = u.value_in_cell(f.right, xi, eta);
    }
    return tr;
}

inline FaceTraces face_traces(const DgField& u, const BoundaryFace& f, const EdgeRule& rule) {
    FaceTraces tr;
    tr.left.resize(rule.size());
    for (std::size_t q = 0; q < rule.size(); ++q) {
        double xi, eta;
        Mesh::face_point_on_reference(f.local_a, f.local_b, rule.points[q], xi, eta);
        tr.left[q] = u.value_in_cell(f.cell, xi, eta);
    }
    tr.right = tr.left;
    return tr;
}

/// Cellwise L2 projection of a scalar function; the local mass systems are
/// assembled and solved per cell.
inline DgField l2_project(const std::function<double(double, double)>& f, const Mesh& mesh,
                          std::shared_ptr<const ReferenceBasis> basis, int quad_degree = -1) {
    const int k = basis->degree();
    if (quad_degree < 0) quad_degree = 2 * k + 4;
    const TriangleRule rule = make_triangle_rule(quad_degree);
    const BasisTable table(*basis, rule);
    const int n = basis->size();

    DgField out(mesh, basis);
    Eigen::MatrixXd mass(n, n);
    Eigen::VectorXd rhs(n);
    for (int cell = 0; cell < mesh.n_cells(); ++cell) {
        const auto& g = mesh.geometry[cell];
        mass.setZero();
        rhs.setZero();
        for (std::size_t q = 0; q < rule.size(); ++q) {
            const double w = rule.weights[q] * g.det;
            const double px = g.v0.x + g.jac[0][0] * rule.xi[q] + g.jac[0][1] * rule.eta[q];
            const double py = g.v0.y + g.jac[1][0] * rule.xi[q] + g.jac[1][1] * rule.eta[q];
            const double fv = f(px, py);
            const double* phi = &table.value[q * n];
            for (int i = 0; i < n; ++i) {
                rhs[i] += w * fv * phi[i];
                for (int j = 0; j <= i; ++j) mass(i, j) += w * phi[i] * phi[j];
            }
        }
        for (int i = 0; i < n; ++i)
            for (int j = i + 1; j < n; ++j) mass(i, j) = mass(j, i);
        Eigen::LLT<Eigen::MatrixXd> llt(mass);
        if (llt.info() != Eigen::Success)
            throw NumericalError("l2_project: singular local mass matrix (broken basis)");
        Eigen::VectorXd c = llt.solve(rhs);
        for (int i = 0; i < n; ++i) out.cell_block(cell)[i] = c[i];
    }
    return out;
}

/// Projection of an existing field onto a (possibly different-degree) basis.
inline DgField l2_project(const DgField& u, std::shared_ptr<const ReferenceBasis> basis,
                          int quad_degree = -1) {
    // evaluated cellwise through the field itself, so discontinuities are kept
    const Mesh& mesh = u.mesh();
    const int k = std::max(basis->degree(), u.degree());
    if (quad_degree < 0) quad_degree = 2 * k + 4;
    const TriangleRule rule = make_triangle_rule(quad_degree);
    const BasisTable table(*basis, rule);
    const BasisTable source_table(u.basis(), rule);
    const int n = basis->size();
    const int ns = u.modes_per_cell();

    DgField out(mesh, basis);
    Eigen::MatrixXd mass(n, n);
    Eigen::VectorXd rhs(n);
    for (int cell = 0; cell < mesh.n_cells(); ++cell) {
        const auto& g = mesh.geometry[cell];
        mass.setZero();
        rhs.setZero();
        const double* src = u.cell_block(cell);
        for (std::size_t q = 0; q < rule.size(); ++q) {
            const double w = rule.weights[q] * g.det;
            double uv = 0.0;
            for (int i = 0; i < ns; ++i) uv += src[i] * source_table.value[q * ns + i];
            const double* phi = &table.value[q * n];
            for (int i = 0; i < n; ++i) {
                rhs[i] += w * uv * phi[i];
                for (int j = 0; j <= i; ++j) mass(i, j) += w * phi[i] * phi[j];
            }
        }
        for (int i = 0; i < n; ++i)
            for (int j = i + 1; j < n; ++j) mass(i, j) = mass(j, i);
        Eigen::LLT<Eigen::MatrixXd> llt(mass);
        if (llt.info() != Eigen::Success)
            throw NumericalError("l2_project: singular local mass matrix (broken basis)");
        Eigen::VectorXd c = llt.solve(rhs);
        for (int i = 0; i < n; ++i) out.cell_block(cell)[i] = c[i];
    }
    return out;
}

struct BrokenNorms {
    std::vector<double> cell_l2_sq;    // ||u||^2 per cell
    std::vector<double> cell_h1_sq;    // |u|^2_H1 per cell
    std::vector<double> face_jump_sq;  // ||[u]||^2 per interior face
    double l2 = 0.0;
    double h1_semi = 0.0;
    double linf = 0.0;   // sampled
    double dg_norm = 0.0; // broken H1 + h_F^{-1}-weighted interior jumps
};

/// Exact broken norms (polynomial integrands) plus a sampled L-infinity value
/// taken over cell quadrature points, vertices, and edge quadrature points.
inline BrokenNorms broken_norms(const DgField& u) {
    const Mesh& mesh = u.mesh();
    const int k = u.degree();
    const int n = u.modes_per_cell();
    const TriangleRule cell_rule = make_triangle_rule(2 * k + 4);
    const EdgeRule edge_rule = make_edge_rule(2 * k + 2);
    const BasisTable table(u.basis(), cell_rule);

    BrokenNorms out;
    out.cell_l2_sq.assign(mesh.n_cells(), 0.0);
    out.cell_h1_sq.assign(mesh.n_cells(), 0.0);
    out.face_jump_sq.assign(mesh.interior_faces.size(), 0.0);

    for (int cell = 0; cell < mesh.n_cells(); ++cell) {
        const auto& g = mesh.geometry[cell];
        const double* c = u.cell_block(cell);
        double l2 = 0.0, h1 = 0.0;
        for (std::size_t q = 0; q < cell_rule.size(); ++q) {
            const double w = cell_rule.weights[q] * g.det;
            double val = 0.0, dxi = 0.0, deta = 0.0;
            for (int i = 0; i < n; ++i) {
                val += c[i] * table.value[q * n + i];
                dxi += c[i] * table.grad_xi[q * n + i];
                deta += c[i] * table.grad_eta[q * n + i];
            }
            const double gx = g.inv[0][0] * dxi + g.inv[1][0] * deta;
            const double gy = g.inv[0][1] * dxi + g.inv[1][1] * deta;
            l2 += w * val * val;
            h1 += w * (gx * gx + gy * gy);
            out.linf = std::max(out.linf, std::abs(val));
        }
        out.cell_l2_sq[cell] = l2;
        out.cell_h1_sq[cell] = h1;
        out.l2 += l2;
        out.h1_semi += h1;
        for (const auto& rv : kRefVertex)
            out.linf = std::max(out.linf, std::abs(u.value_in_cell(cell, rv[0], rv[1])));
    }

    double jump_sum = 0.0;
    for (std::size_t fi = 0; fi < mesh.interior_faces.size(); ++fi) {
        const auto& f = mesh.interior_faces[fi];
        const FaceTraces tr = face_traces(u, f, edge_rule);
        double js = 0.0;
        for (std::size_t q = 0; q < edge_rule.size(); ++q) {
            const double jump = tr.left[q] - tr.right[q];
            js += edge_rule.weights[q] * f.length * jump * jump;
            out.linf = std::max(out.linf, std::max(std::abs(tr.left[q]), std::abs(tr.right[q])));
        }
        out.face_jump_sq[fi] = js;
        jump_sum += js / f.length;
    }
    for (const auto& f : mesh.boundary_faces) {
        const FaceTraces tr = face_traces(u, f, edge_rule);
        for (double v : tr.left) out.linf = std::max(out.linf, std::abs(v));
    }

    out.l2 = std::sqrt(out.l2);
    out.h1_semi = std::sqrt(out.h1_semi);
    out.dg_norm = std::sqrt(out.h1_semi * out.h1_semi + jump_sum);
    return out;
}

/// Sampled max of |grad u| over cell quadrature points, vertices, and edge
/// quadrature points.
inline double grad_linf_sampled(const DgField& u) {
    const Mesh& mesh = u.mesh();
    const int k = u.degree();
    const TriangleRule cell_rule = make_triangle_rule(2 * k + 4);
    const EdgeRule edge_rule = make_edge_rule(2 * k + 2);
    double best = 0.0;
    for (int cell = 0; cell < mesh.n_cells(); ++cell) {
        for (std::size_t q = 0; q < cell_rule.size(); ++q) {
            const Vec2 gr = u.gradient_in_cell(cell, cell_rule.xi[q], cell_rule.eta[q]);
            best = std::max(best, norm(gr));
        }
        for (const auto& rv : kRefVertex)
            best = std::max(best, norm(u.gradient_in_cell(cell, rv[0], rv[1])));
    }
    for (const auto& f : mesh.interior_faces)
        for (std::size_t q = 0; q < edge_rule.size(); ++q) {
            double xi, eta;
            Mesh::face_point_on_reference(f.left_a, f.left_b, edge_rule.points[q], xi, eta);
            best = std::max(best, norm(u.gradient_in_cell(f.left, xi, eta)));
            Mesh::face_point_on_reference(f.right_a, f.right_b, edge_rule.points[q], xi, eta);
            best = std::max(best, norm(u.gradient_in_cell(f.right, xi, eta)));
        }
    for (const auto& f : mesh.boundary_faces)
        for (std::size_t q = 0; q < edge_rule.size(); ++q) {
            double xi, eta;
            Mesh::face_point_on_reference(f.local_a, f.local_b, edge_rule.points[q], xi, eta);
            best = std::max(best, norm(u.gradient_in_cell(f.cell, xi, eta)));
        }
    return best;
}

/// Mass (integral) of the field; exact.
inline double integral(const DgField& u) {
    const Mesh& mesh = u.mesh();
    double s = 0.0;
    for (int cell = 0; cell < mesh.n_cells(); ++cell) {
        const double* c = u.cell_block(cell);
        double cellint = 0.0;
        for (int i = 0; i < u.modes_per_cell(); ++i) cellint += c[i] * u.basis().mode_integral(i);
        s += mesh.geometry[cell].det * cellint;
    }
    return s;
}

/// Field with a constant value everywhere.
inline DgField constant_field(const Mesh& mesh, std::shared_ptr<const ReferenceBasis> basis,
                              double value) {
    DgField out(mesh, basis);
    const double c0 = value / basis->value(0, 0.0, 0.0); // mode 0 is constant
    for (int cell = 0; cell < mesh.n_cells(); ++cell) out.cell_block(cell)[0] = c0;
    return out;
}

} // namespace ksdg
