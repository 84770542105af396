#pragma once

#include <cstdint>
#include <optional>
#include <utility>

#include "dhdist/linalg.hpp"
#include "dhdist/types.hpp"

namespace dhdist {

// The dissipative-Hamiltonian pencil  L(lambda) = lambda E - (J - R)  with
// E, R symmetric (nominally positive semidefinite) and J skew-symmetric.
struct DHPencil {
    SymMatrix E;
    SkewMatrix J;
    SymMatrix R;

    DHPencil() = default;
    DHPencil(SymMatrix e, SkewMatrix j, SymMatrix r);

    Index n() const { return E.n(); }

    // (E+dE)^2 + (R+dR)^2 - (J+dJ)^2 at a perturbation scale: the PSD matrix
    // whose kernel is the common kernel of the three perturbed matrices.
    Matrix kernel_certificate_matrix(const PerturbationTriple& pert, double eps) const;
};

struct ValidationReport {
    bool is_symmetric_E = false;
    bool is_symmetric_R = false;
    bool is_skew_J = false;
    double min_eig_E = 0.0;
    double min_eig_R = 0.0;
    bool psd_ok_E = false;   // min_eig_E >= -psd_tol
    bool psd_ok_R = false;
    bool is_regular = false;
    int common_kernel_dim = 0;
};

// Symmetric boolean masks restricting which entries the flow may perturb.
struct SparsityPattern {
    Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic> mask_E, mask_R, mask_J;

    static SparsityPattern from_pencil(const DHPencil& p, double threshold = 0.0);
    Matrix apply_E(const Matrix& x) const { return mask_E.select(x, Matrix::Zero(x.rows(), x.cols())); }
    Matrix apply_R(const Matrix& x) const { return mask_R.select(x, Matrix::Zero(x.rows(), x.cols())); }
    Matrix apply_J(const Matrix& x) const { return mask_J.select(x, Matrix::Zero(x.rows(), x.cols())); }
};

// Structural/regularity report. The common kernel dimension is the number of
// eigenvalues of E^2 + R^2 - J^2 below kernel_tol (relative).
ValidationReport validate(const DHPencil& p);

// Theorem-level two-sided bounds on the structured distances:
// singularity: lower = sqrt(lambda_min(-J^2 + R^2 + E^2)), upper = sqrt(2)*lower;
// instability/high-index: same with the J term dropped.
std::pair<double, double> singularity_bounds(const DHPencil& p);
std::pair<double, double> instability_bounds(const DHPencil& p);

// Closed-form distance expression evaluated at a unit vector u:
//   sqrt(2||Ju||^2 + 2||(I-uu^T)Eu||^2 + (u^T E u)^2 + 2||(I-uu^T)Ru||^2 + (u^T R u)^2)
// with the ||Ju|| term dropped for the Instability target.
double direct_formula_value(const DHPencil& p, const Vector& u, Target target);

// Gradient of the squared formula on R^n (before sphere projection).
Vector direct_formula_grad_sq(const DHPencil& p, const Vector& u, Target target);

// Projected-gradient minimization of the formula over the unit sphere from
// `restarts` random starts plus the bound-matrix eigenvector warm start.
struct SphereMin {
    double d = 0.0;
    Vector u_star;
};
SphereMin direct_formula_minimize(const DHPencil& p, Target target, int restarts, std::uint64_t seed);

// The rank<=2 construction  D_Y^u = -uu^T Y - Y uu^T + (u^T Y u) uu^T  for
// Y in {E, R, J}; each perturbed matrix annihilates u exactly. Gamma is zero
// for the Instability target. The result is NOT normalized.
PerturbationTriple optimal_perturbation_from_u(const DHPencil& p, const Vector& u, Target target);

// Minimum-norm symmetric D with (Y+D)u = 0 AND Y+D positive semidefinite:
// the rank-2 construction above plus a lift of the negative eigenvalues of
// the deflated (I-uu^T)Y(I-uu^T). For PSD inputs the lift vanishes and this
// coincides with the rank-2 construction.
Matrix psd_feasible_perturbation(const Matrix& y, const Vector& u);

// Feasibility-aware variant of direct_formula_value: the joint norm of the
// PSD-feasible constructions at u (E and R lifted; J annihilation only).
double feasible_formula_value(const DHPencil& p, const Vector& u, Target target);

// Sphere minimization of feasible_formula_value: analytic-gradient descent on
// the plain formula, refined by a derivative-free polish only when the lift
// is active (indefinite inputs).
SphereMin feasible_formula_minimize(const DHPencil& p, Target target, int restarts, std::uint64_t seed);

// Rank<=2 PSD-feasible construction at u. Each symmetric member is the
// annihilating construction plus an IN-PLANE lift b*vv^T (v the normalized
// deflected column, so the member stays rank<=2) sized so the perturbed
// matrix is positive semidefinite. Unlike psd_feasible_perturbation, the
// lift direction is constrained, so not every u admits one; `feasible`
// reports whether the construction exists. For PSD inputs the lift vanishes
// and the value coincides with direct_formula_value.
struct Rank2Feasible {
    PerturbationTriple T;
    double value = 0.0;
    bool feasible = false;
};
Rank2Feasible rank2_feasible_perturbation(const DHPencil& p, const Vector& u, Target target);

// Joint norm of the rank-2 feasible construction; +infinity when none exists.
double rank2_feasible_value(const DHPencil& p, const Vector& u, Target target);

// Sphere minimization of rank2_feasible_value. PSD inputs reduce to
// direct_formula_minimize; indefinite inputs get a derivative-free polish of
// the lift-aware value with an infeasibility wall.
SphereMin rank2_feasible_minimize(const DHPencil& p, Target target, int restarts, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Problem generators.
// ---------------------------------------------------------------------------
// Random dH pencil: E, R normalized Gram matrices of Gaussian factors, J a
// scaled skew part of a Gaussian matrix; deterministic given the seed.
DHPencil gen_random_dh(Index n, std::uint64_t seed);

// Constrained mass-spring-damper chain:
//   E = diag(K, M, 0),  J = [[0, K, 0], [-K, 0, -G^T], [0, G, 0]],
//   R = diag(0, D, gamma I_m),
// with K tridiagonal SPD, M = I, D = 0.5 I, and G an m x N incidence-type
// block (first row replicated per constraint); total dimension 2N + m.
DHPencil gen_mass_spring_damper(Index n_masses, Index m_constraints, double gamma);

} // namespace dhdist
