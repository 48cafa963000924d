#pragma once

#include <algorithm>

namespace ksdg {

/// Analytic constants of the estimator formulas. All default to 1 and are
/// configuration inputs; evaluating them for a concrete domain is out of
/// scope here.
struct ConstantsSet {
    double c_s = 1.0;        // Sobolev embedding H1 -> L6
    double c_s_prime = 1.0;  // Sobolev embedding H1 -> L3
    double c_s_dprime = 1.0; // Sobolev embedding H2 -> Linf
    double c_ell = 1.0;      // elliptic regularity of the c-equation
    double c_0 = 1.0;        // reliability of E_0
    double c_1 = 1.0;        // reliability of E_1
    double c_minus1 = 1.0;   // reliability of E_{-1}
    double c_tilde1 = 1.0;   // reliability of E~_1
    double c_app_prime = 1.0;  // L2-projection approximation, volume
    double c_app_dprime = 1.0; // L2-projection approximation, faces
    double c_app_tprime = 1.0; // face normal-gradient approximation; carried, unused
    double c_tr = 1.0;         // discrete trace inequality

    /// Gronwall coupling constant B = 2 C_S' C_S C_ell.
    double b() const { return 2.0 * c_s_prime * c_s * c_ell; }

    /// C_max = max{1, N_del C_app'', N_del (C_app''^2 / delta + C_tr^2)}.
    double c_max(double n_partial, double delta) const {
        return std::max({1.0, n_partial * c_app_dprime,
                         n_partial * (c_app_dprime * c_app_dprime / delta + c_tr * c_tr)});
    }
};

} // namespace ksdg
