#pragma once

#include <Eigen/Dense>
#include <Eigen/IterativeLinearSolvers>
#include <Eigen/Sparse>
#ifdef KSDG_HAVE_CHOLMOD
#include <Eigen/CholmodSupport>
#endif

#include <memory>
#include <sstream>
#include <string>

#include "ksdg/dg_field.hpp"

namespace ksdg {

using SpMat = Eigen::SparseMatrix<double>;

/// Sparse matrix on a dG space; dimension is cells * modes-per-cell, dof
/// blocks per cell are contiguous.
struct SparseOperator {
    SpMat matrix;
    bool symmetric = false;

    Eigen::Index dim() const { return matrix.rows(); }

    Eigen::VectorXd apply(const Eigen::VectorXd& x) const { return matrix * x; }

    /// max |A - A^T| entry relative to max |A| entry
    double symmetry_defect() const {
        SpMat diff = SpMat(matrix.transpose()) - matrix;
        double num = 0.0, den = 0.0;
        for (int k = 0; k < diff.outerSize(); ++k)
            for (SpMat::InnerIterator it(diff, k); it; ++it) num = std::max(num, std::abs(it.value()));
        for (int k = 0; k < matrix.outerSize(); ++k)
            for (SpMat::InnerIterator it(matrix, k); it; ++it)
                den = std::max(den, std::abs(it.value()));
        return den > 0.0 ? num / den : num;
    }
};

enum class SolverKind { direct, iterative };

/// Direct (default) or preconditioned-CG solver for SPD operators.
class SpdSolver {
public:
    explicit SpdSolver(SolverKind kind = SolverKind::direct) : kind_(kind) {}

    void compute(const SpMat& a) {
        if (kind_ == SolverKind::direct) {
#ifdef KSDG_HAVE_CHOLMOD
            direct_.compute(a);
            if (direct_.info() != Eigen::Success)
                throw NumericalError("SpdSolver: Cholesky factorization failed");
#else
            simplicial_.compute(a);
            if (simplicial_.info() != Eigen::Success)
                throw NumericalError("SpdSolver: Cholesky factorization failed");
#endif
        } else {
            kept_ = a; // the CG solver only references its matrix
            cg_.setTolerance(1e-14);
            cg_.setMaxIterations(200000);
            cg_.compute(kept_);
            if (cg_.info() != Eigen::Success)
                throw NumericalError("SpdSolver: CG setup failed");
        }
    }
    void compute(const SparseOperator& a) { compute(a.matrix); }

    Eigen::VectorXd solve(const Eigen::VectorXd& b) const {
        if (kind_ == SolverKind::direct) {
#ifdef KSDG_HAVE_CHOLMOD
            return direct_.solve(b);
#else
            return simplicial_.solve(b);
#endif
        }
        return cg_.solve(b);
    }

private:
    SolverKind kind_;
    SpMat kept_;
#ifdef KSDG_HAVE_CHOLMOD
    Eigen::CholmodSupernodalLLT<SpMat> direct_;
#else
    Eigen::SimplicialLDLT<SpMat> simplicial_;
#endif
    Eigen::ConjugateGradient<SpMat, Eigen::Lower | Eigen::Upper,
                             Eigen::IncompleteCholesky<double>>
        cg_;
};

/// Solver for the block-diagonal mass matrix: one dense Cholesky per cell.
class MassSolver {
public:
    MassSolver() = default;
    MassSolver(const SparseOperator& mass, int modes_per_cell) { compute(mass, modes_per_cell); }

    void compute(const SparseOperator& mass, int modes_per_cell) {
        n_ = modes_per_cell;
        const Eigen::Index cells = mass.dim() / n_;
        blocks_.clear();
        blocks_.reserve(cells);
        Eigen::MatrixXd block(n_, n_);
        for (Eigen::Index c = 0; c < cells; ++c) {
            block.setZero();
            for (int j = 0; j < n_; ++j)
                for (SpMat::InnerIterator it(mass.matrix, c * n_ + j); it; ++it) {
                    const Eigen::Index i = it.row() - c * n_;
                    if (i < 0 || i >= n_)
                        throw NumericalError("MassSolver: operator is not block diagonal");
                    block(i, j) = it.value();
                }
            Eigen::LLT<Eigen::MatrixXd> llt(block);
            if (llt.info() != Eigen::Success)
                throw NumericalError("MassSolver: local mass block not positive definite");
            blocks_.push_back(llt);
        }
    }

    Eigen::VectorXd solve(const Eigen::VectorXd& b) const {
        Eigen::VectorXd x(b.size());
        for (std::size_t c = 0; c < blocks_.size(); ++c)
            x.segment(c * n_, n_) = blocks_[c].solve(b.segment(c * n_, n_));
        return x;
    }

private:
    int n_ = 0;
    std::vector<Eigen::LLT<Eigen::MatrixXd>> blocks_;
};

inline Eigen::Map<const Eigen::VectorXd> as_vector(const DgField& u) {
    return {u.coefficients().data(), static_cast<Eigen::Index>(u.size())};
}

inline DgField field_from_vector(const Mesh& mesh, std::shared_ptr<const ReferenceBasis> basis,
                                 const Eigen::VectorXd& v) {
    DgField out(mesh, std::move(basis));
    if (static_cast<Eigen::Index>(out.size()) != v.size())
        throw std::invalid_argument("field_from_vector: size mismatch");
    std::copy(v.data(), v.data() + v.size(), out.coefficients().begin());
    return out;
}

} // namespace ksdg
