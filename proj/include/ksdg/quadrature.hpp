#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

namespace ksdg {

/// Gauss-Legendre rule on [0,1]; n points integrate polynomials of degree 2n-1.
struct EdgeRule {
    std::vector<double> points;
    std::vector<double> weights;
    int exactness = 0;

    std::size_t size() const { return points.size(); }
};

/// Quadrature on the reference triangle {x,y >= 0, x+y <= 1}.
struct TriangleRule {
    std::vector<double> xi;
    std::vector<double> eta;
    std::vector<double> weights;
    int exactness = 0;

    std::size_t size() const { return weights.size(); }
};

namespace detail {

// Legendre nodes on [-1,1] by Newton iteration, Chebyshev starting guesses.
inline void gauss_legendre_minus1_1(int n, std::vector<double>& x, std::vector<double>& w) {
    x.assign(n, 0.0);
    w.assign(n, 0.0);
    for (int i = 0; i < n; ++i) {
        double t = std::cos(M_PI * (i + 0.75) / (n + 0.5));
        double p0 = 0.0, p1 = 0.0, dp = 0.0;
        for (int iter = 0; iter < 100; ++iter) {
            p0 = 1.0;
            p1 = t;
            for (int j = 2; j <= n; ++j) {
                double p2 = ((2.0 * j - 1.0) * t * p1 - (j - 1.0) * p0) / j;
                p0 = p1;
                p1 = p2;
            }
            dp = n * (t * p1 - p0) / (t * t - 1.0);
            double dt = p1 / dp;
            t -= dt;
            if (std::abs(dt) < 1e-16) break;
        }
        // recompute dp at the converged node
        p0 = 1.0;
        p1 = t;
        for (int j = 2; j <= n; ++j) {
            double p2 = ((2.0 * j - 1.0) * t * p1 - (j - 1.0) * p0) / j;
            p0 = p1;
            p1 = p2;
        }
        dp = n * (t * p1 - p0) / (t * t - 1.0);
        x[i] = t;
        w[i] = 2.0 / ((1.0 - t * t) * dp * dp);
    }
}

} // namespace detail

inline EdgeRule make_edge_rule(int exactness_degree) {
    if (exactness_degree < 0) throw std::invalid_argument("make_edge_rule: negative degree");
    const int n = (exactness_degree + 2) / 2; // 2n-1 >= degree
    std::vector<double> x, w;
    detail::gauss_legendre_minus1_1(n, x, w);
    EdgeRule rule;
    rule.exactness = 2 * n - 1;
    rule.points.resize(n);
    rule.weights.resize(n);
    for (int i = 0; i < n; ++i) {
        rule.points[i] = 0.5 * (x[i] + 1.0);
        rule.weights[i] = 0.5 * w[i];
    }
    return rule;
}

// Collapsed (Duffy) product rule: x = u(1-v), y = v with the (1-v) Jacobian
// carried in the weights. A monomial x^a y^b with a+b <= d has u-degree <= d
// and v-degree <= d+1, so n = ceil((d+2)/2) Gauss points per direction suffice.
inline TriangleRule make_triangle_rule(int exactness_degree) {
    if (exactness_degree < 0) throw std::invalid_argument("make_triangle_rule: negative degree");
    const int n = (exactness_degree + 3) / 2; // 2n-1 >= degree+1
    std::vector<double> x, w;
    detail::gauss_legendre_minus1_1(n, x, w);
    TriangleRule rule;
    rule.exactness = 2 * n - 2;
    rule.xi.reserve(static_cast<std::size_t>(n) * n);
    rule.eta.reserve(static_cast<std::size_t>(n) * n);
    rule.weights.reserve(static_cast<std::size_t>(n) * n);
    for (int i = 0; i < n; ++i) {
        const double u = 0.5 * (x[i] + 1.0);
        const double wu = 0.5 * w[i];
        for (int j = 0; j < n; ++j) {
            const double v = 0.5 * (x[j] + 1.0);
            const double wv = 0.5 * w[j];
            rule.xi.push_back(u * (1.0 - v));
            rule.eta.push_back(v);
            rule.weights.push_back(wu * wv * (1.0 - v));
        }
    }
    return rule;
}

} // namespace ksdg
