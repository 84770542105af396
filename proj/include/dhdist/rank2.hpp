#pragma once

#include "dhdist/flow.hpp"

namespace dhdist {

// Rank-2 symmetric matrix in factored form X = U S U^T.
struct Rank2Sym {
    Matrix U;  // n x 2, orthonormal columns
    Matrix S;  // 2 x 2, symmetric
    Matrix dense() const;  // exactly symmetric reconstruction
};

// Rank-2 skew-symmetric matrix: S = [[0, s12], [-s12, 0]].
struct Rank2Skew {
    Matrix U;          // n x 2, orthonormal columns
    double s12 = 0.0;  // single free entry of the 2x2 skew block
    Matrix smat() const;
    Matrix dense() const;  // exactly skew-symmetric reconstruction
};

// The factored perturbation triple (Delta, Theta, Gamma) = (D1, D2, D3).
struct Rank2Triple {
    Rank2Sym D1, D2;
    Rank2Skew D3;

    PerturbationTriple dense() const;
    // Joint Frobenius norm; equals sqrt(|S1|^2 + |S2|^2 + |S3|^2) since the
    // U factors are orthonormal.
    double joint_norm() const;
    // Joint renormalization: one common scale applied to S1, S2, S3.
    void normalize();
};

// Orthogonal projection onto the tangent space of the rank-2 manifold at X:
// P(Z) = Z - (I - UU^T) Z (I - UU^T).
Matrix project_tangent_sym(const Rank2Sym& x, const Matrix& z);
Matrix project_tangent_skew(const Rank2Skew& x, const Matrix& z);

// Factored right-hand sides (gauge U^T dU = 0) of the rank-2 flow:
//   dS_i = -U_i^T G_i U_i + rho S_i,   dU_i = -(I - U_i U_i^T) G_i U_i S_i^{-1}.
// Requires sigma_min(S_i) >= s_reg for the members it differentiates
// (S3 skipped for the Instability target); throws SNearSingular otherwise.
struct Rank2Rhs {
    Matrix dS1, dU1;
    Matrix dS2, dU2;
    double ds3 = 0.0;
    Matrix dU3;
};
Rank2Rhs rank2_rhs_factored(const DHPencil& p, const Rank2Triple& t, double eps,
                            const EigenData& data, const GradientTriple& g,
                            Target target = Target::Singularity, double s_reg = 1e-8);

// One step of the low-rank structure-preserving integrator with the gradient
// (and its rho multiplier) frozen at the current state. Per member: K-step
// (one explicit Euler substep of K' = -G U0 + rho K from K0 = U0 S0), thin QR
// of K1 -> U1, S-step from S(t0) = U1^T X0 U1, then one joint rescaling of
// (S1, S2, S3) to unit joint norm. A member with zero S and zero gradient is
// left unchanged; a member whose K-step collapses to zero raises
// SNearSingular. Step acceptance (F decrease) is the caller's job.
Rank2Triple lowrank_integrator_step(const Rank2Triple& t, const GradientTriple& g, double h,
                                    Target target);

// Best rank-2 approximation of each member: the two largest-|eigenvalue|
// directions for the symmetric parts, the dominant conjugate eigenpair plane
// of the skew part; the result is jointly renormalized. A single zero member
// is represented with S = 0 and an arbitrary orthonormal U; an all-zero
// triple throws DegenerateInput.
Rank2Triple truncate_to_rank2(const PerturbationTriple& pert);

// Rank-2 analog of integrate_to_stationary. The flow functional and its
// gradient are evaluated on the dense reconstruction; steps are taken with
// lowrank_integrator_step (falling back to one projected full-flow step plus
// re-truncation when the factored step stalls). The returned FlowState holds
// the dense view of the final factored state.
struct Rank2FlowResult {
    FlowState state;
    Rank2Triple triple;
};
Rank2FlowResult integrate_rank2_to_stationary(const DHPencil& p, const Rank2Triple& init,
                                              const FlowConfig& cfg);

} // namespace dhdist
