#pragma once

#include <optional>

#include "dhdist/pencil.hpp"

namespace dhdist {

// Extremal eigen-data of the perturbed pencil at magnitude eps: the smallest
// eigenpairs of E + eps*Delta and R + eps*Theta, plus the spectral data of
// J + eps*Gamma (a real null vector w for odd dimension, or the eigenvalue
// i*mu of smallest mu >= 0 with complex eigenvector w for even dimension).
struct EigenData {
    double lambda = 0.0;  // smallest eigenvalue of E + eps*Delta
    Vector x;             // its unit eigenvector
    double nu = 0.0;      // smallest eigenvalue of R + eps*Theta
    Vector u;             // its unit eigenvector
    bool odd = true;      // parity of the dimension
    double mu = 0.0;      // 0 in the odd case
    Vector w_r;           // odd: the null vector w; even: Re(w)
    Vector w_i;           // even only: Im(w)
    double gap_E = 0.0;   // simplicity diagnostics
    double gap_R = 0.0;
    double gap_J = 0.0;   // singular-value / imaginary-part gap of the skew part
};

struct ScalarCouplings {
    double theta = 0.0;  // x^T u
    double eta = 0.0;    // x^T w (odd) or x^T Re(w) (even)
    double zeta = 0.0;   // x^T Im(w) (even only)
};
ScalarCouplings couplings(const EigenData& d);

// Gradient of the functional with respect to the (structured) perturbation
// triple, plus the norm-conservation multiplier rho.
struct GradientTriple {
    Matrix G_E;  // symmetric
    Matrix G_R;  // symmetric
    Matrix G_J;  // skew
    double rho = 0.0;
};

// Assembles the perturbed matrices and extracts the extremal eigen-data,
// dispatching on parity. When `prev` is given, eigenvector signs (and the
// even-case plane orientation) are aligned for continuity along a flow.
EigenData extract_eigendata(const DHPencil& p, const PerturbationTriple& pert, double eps,
                            const EigenData* prev = nullptr, Target target = Target::Singularity);

// F = 1/2 (lambda^2 + nu^2 + 1 - (x^T u)^2 + 1 - (x^T w)^2); the optional
// extra term adds 1 - (u^T w)^2 (config flag, default off).
double eval_F_odd(const EigenData& d, bool extra_uw_term = false);

// F = 1/2 (lambda^2 + nu^2 + mu^2 + 1 - (x^T u)^2 + 1 - 2(x^T Re w)^2 - 2(x^T Im w)^2).
double eval_F_even(const EigenData& d);

// F = 1/2 (lambda^2 + nu^2 + ||(R+eps Theta)x||^2 + ||(J+eps Gamma)x||^2).
double eval_F_unified(const DHPencil& p, const PerturbationTriple& pert, double eps,
                      const EigenData& d);

// Instability variants drop every J/w contribution (the pencil's skew part is
// neither perturbed nor tracked).
double eval_F_instability(const EigenData& d);

// Odd-case gradient assembly. Also returns the auxiliary vectors p, q, r.
// Throws DegenerateEigenvalue when an extremal eigenvalue is (numerically)
// not simple.
struct OddGradient {
    GradientTriple grad;
    Vector p_vec, q_vec, r_vec;
};
OddGradient assemble_gradient_odd(const DHPencil& p, const PerturbationTriple& pert, double eps,
                                  const EigenData& d, Target target = Target::Singularity);

GradientTriple assemble_gradient_even(const DHPencil& p, const PerturbationTriple& pert,
                                      double eps, const EigenData& d);

// Unified-functional gradient; also returns s, t, z.
struct UnifiedGradient {
    GradientTriple grad;
    Vector s_vec, t_vec, z_vec;
};
UnifiedGradient assemble_gradient_unified(const DHPencil& p, const PerturbationTriple& pert,
                                          double eps, const EigenData& d,
                                          Target target = Target::Singularity);

} // namespace dhdist
