#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <stdexcept>
#include <vector>

#include "ksdg/quadrature.hpp"

namespace ksdg {

/// L2-orthonormal polynomial basis of total degree <= k on the reference
/// triangle {xi,eta >= 0, xi+eta <= 1}, built from monomials via Cholesky of
/// the exact monomial Gram matrix. Mode 0 is the constant sqrt(2).
class ReferenceBasis {
public:
    explicit ReferenceBasis(int degree) : degree_(degree) {
        if (degree < 0) throw std::invalid_argument("ReferenceBasis: degree must be >= 0");
        if (degree > 10) throw std::invalid_argument("ReferenceBasis: degree too large");
        const int n = (degree + 1) * (degree + 2) / 2;
        exps_.reserve(n);
        for (int d = 0; d <= degree; ++d)
            for (int a = d; a >= 0; --a) exps_.push_back({a, d - a});

        Eigen::MatrixXd gram(n, n);
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j)
                gram(i, j) = monomial_integral(exps_[i].a + exps_[j].a, exps_[i].b + exps_[j].b);

        // two Cholesky passes so the basis stays orthonormal to roundoff even
        // when the monomial Gram is poorly conditioned
        Eigen::MatrixXd c1 = Eigen::MatrixXd(gram.llt().matrixL()).inverse();
        Eigen::MatrixXd g2 = c1 * gram * c1.transpose();
        Eigen::MatrixXd c2 = Eigen::MatrixXd(g2.llt().matrixL()).inverse();
        coeffs_ = c2 * c1;
    }

    int degree() const { return degree_; }
    int size() const { return static_cast<int>(exps_.size()); }

    /// Coefficients of basis function i over the monomial list (row i).
    const Eigen::MatrixXd& monomial_coefficients() const { return coeffs_; }

    struct Exponent {
        int a, b;
    };
    const std::vector<Exponent>& exponents() const { return exps_; }

    /// Exact integral of xi^a eta^b over the reference triangle.
    static double monomial_integral(int a, int b) {
        return factorial(a) * factorial(b) / factorial(a + b + 2);
    }

    double value(int i, double xi, double eta) const {
        double s = 0.0;
        for (int m = 0; m <= i; ++m)
            s += coeffs_(i, m) * ipow(xi, exps_[m].a) * ipow(eta, exps_[m].b);
        return s;
    }

    void gradient(int i, double xi, double eta, double& dxi, double& deta) const {
        dxi = 0.0;
        deta = 0.0;
        for (int m = 0; m <= i; ++m) {
            const int a = exps_[m].a, b = exps_[m].b;
            if (a > 0) dxi += coeffs_(i, m) * a * ipow(xi, a - 1) * ipow(eta, b);
            if (b > 0) deta += coeffs_(i, m) * b * ipow(xi, a) * ipow(eta, b - 1);
        }
    }

    /// Second derivatives (d_xixi, d_xieta, d_etaeta) of basis function i.
    void hessian(int i, double xi, double eta, double& dxx, double& dxy, double& dyy) const {
        dxx = dxy = dyy = 0.0;
        for (int m = 0; m <= i; ++m) {
            const int a = exps_[m].a, b = exps_[m].b;
            const double c = coeffs_(i, m);
            if (a > 1) dxx += c * a * (a - 1) * ipow(xi, a - 2) * ipow(eta, b);
            if (a > 0 && b > 0) dxy += c * a * b * ipow(xi, a - 1) * ipow(eta, b - 1);
            if (b > 1) dyy += c * b * (b - 1) * ipow(xi, a) * ipow(eta, b - 2);
        }
    }

    /// Exact integrals of the basis functions (nonzero only for mode 0).
    double mode_integral(int i) const {
        double s = 0.0;
        for (int m = 0; m <= i; ++m) s += coeffs_(i, m) * monomial_integral(exps_[m].a, exps_[m].b);
        return s;
    }

private:
    static double factorial(int n) {
        double f = 1.0;
        for (int i = 2; i <= n; ++i) f *= i;
        return f;
    }
    static double ipow(double x, int p) {
        double r = 1.0;
        for (int i = 0; i < p; ++i) r *= x;
        return r;
    }

    int degree_;
    std::vector<Exponent> exps_;
    Eigen::MatrixXd coeffs_; // lower triangular in the degree-graded ordering
};

/// Basis values/derivatives tabulated at the nodes of a triangle rule.
struct BasisTable {
    int n_modes = 0;
    std::vector<double> value;   // [q * n_modes + i]
    std::vector<double> grad_xi; // reference-coordinate gradients
    std::vector<double> grad_eta;

    BasisTable() = default;
    BasisTable(const ReferenceBasis& basis, const TriangleRule& rule) {
        n_modes = basis.size();
        const std::size_t nq = rule.size();
        value.resize(nq * n_modes);
        grad_xi.resize(nq * n_modes);
        grad_eta.resize(nq * n_modes);
        for (std::size_t q = 0; q < nq; ++q)
            for (int i = 0; i < n_modes; ++i) {
                value[q * n_modes + i] = basis.value(i, rule.xi[q], rule.eta[q]);
                basis.gradient(i, rule.xi[q], rule.eta[q], grad_xi[q * n_modes + i],
                               grad_eta[q * n_modes + i]);
            }
    }
};

} // namespace ksdg
