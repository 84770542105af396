#pragma once

#include <string>
#include <vector>

#include "dhdist/functional.hpp"

namespace dhdist {

// Configuration of one inner constrained gradient flow at fixed eps.
struct FlowConfig {
    double eps = 1.0;
    Variant variant = Variant::Odd;      // Odd/Even must match the dimension parity
    Target target = Target::Singularity;
    double h0 = 0.1;
    double h_min = 1e-8;
    double h_max = 1.0;
    double tol_stationary = 1e-8;  // relative to the gradient norm at the start
    double tol_F = 1e-12;          // relative F-change stall threshold
    int stall_steps = 10;          // consecutive accepted steps below tol_F
    int max_steps = 2000;
    double f_zero_tol = 1e-16;     // F at/below this counts as an exact zero
    // Relative width of the extremal-eigenvalue tie window. Eigenvalues within
    // window * (spectral scale) of the extremal one form a cluster whose
    // members may be combined when selecting the working eigenvectors; the
    // same membership defines the pseudoinverse exclusions.
    double tie_window = 1e-3;
    bool extra_uw_term = false;  // optional 1 - (u^T w)^2 term (odd case)
    // Heuristic early exit for outer iterations: give up when F stays far
    // above the singularity tolerance and barely moves for many steps.
    bool allow_slow_exit = false;
    double slow_exit_threshold = 1e-7;
    double slow_exit_rel = 1e-5;
    int slow_exit_steps = 300;
    const SparsityPattern* sparsity = nullptr;  // not owned
    std::string trace_path;  // per-step CSV (step,h,F,residual) when nonempty
};

// Returns the parity-matching standard variant for dimension n.
Variant variant_for_dimension(Index n);

// Cached evaluation at a perturbation: perturbed matrices, decompositions,
// tie-window membership, the selected eigen-data and the functional value.
struct FlowEval {
    double F = 0.0;
    EigenData data;
    Matrix ep, rp, jp;  // jp empty for the Instability target
    SymEig eig_E, eig_R;
    RealSvd svd_J;                       // odd Singularity only
    std::vector<int> win_E, win_R, win_J;  // tie-window members (win_J: SVD indices)
};

// Evaluates the flow functional at `pert` (shared-extremal selection for the
// standard variants; plain extremal pairs for Unified). `prev` aligns
// eigenvector signs for continuity along a trajectory.
FlowEval flow_eval(const DHPencil& p, const PerturbationTriple& pert, const FlowConfig& cfg,
                   const FlowEval* prev = nullptr);

// Gradient of the evaluated functional; pseudoinverse exclusions match the
// tie-window membership recorded in `ev`.
GradientTriple flow_gradient(const DHPencil& p, const PerturbationTriple& pert,
                             const FlowConfig& cfg, const FlowEval& ev);

// State of the flow after zero or more accepted steps.
struct FlowState {
    PerturbationTriple pert;  // unit joint norm
    EigenData data;
    double F = 0.0;          // functional at pert (shared selection)
    double h = 0.1;          // current step size
    double residual = 0.0;   // joint norm of the projected RHS at pert
    double grad_norm0 = 0.0; // residual at the initial state
    int accepted = 0;
    int rejected = 0;
    bool converged = false;
    std::string stop_reason;  // F_zero | stationary | F_stall | slow_progress | h_min | max_steps
    // Window-independent diagnostics at the final state:
    double F_strict = 0.0;     // plain extremal-pair functional value
    double certificate = 0.0;  // see certificate_value()
};

// Norm-constrained negative gradient: (-G_E + rho*Delta, -G_R + rho*Theta,
// -G_J + rho*Gamma), structure-projected; with a sparsity pattern set the
// gradient is masked first and rho recomputed from the masked terms; the
// Instability target freezes the Gamma component at zero.
PerturbationTriple rhs(const DHPencil& p, const FlowState& state, const FlowConfig& cfg);

// One accepted explicit-Euler step: candidate = normalize(pert + h*RHS),
// accepted iff F decreases, h halved on rejection down to h_min (throws
// StalledFlow if no acceptable step exists), then h <- min(1.2 h, h_max).
FlowState euler_step(const DHPencil& p, const FlowState& state, const FlowConfig& cfg);

// Integrates from `init` (normalized internally; a zero triple selects the
// default initialization: the normalized negative free gradient at pert = 0)
// until the residual drops below tol_stationary * initial residual, the
// relative F-change stays below tol_F for stall_steps accepted steps, F hits
// f_zero_tol, or a step/stall limit is reached. A StalledFlow condition is
// reported through `converged` / `stop_reason` rather than thrown.
FlowState integrate_to_stationary(const DHPencil& p, const PerturbationTriple& init,
                                  const FlowConfig& cfg);

// Rank-2 alignment diagnostics at a (near-)stationary state: the cosine of
// the angle between each perturbation matrix and its gradient counterpart
// must approach 1 in absolute value, and the numerical ranks must be <= 2.
struct AlignmentReport {
    double align_E = 0.0, align_R = 0.0, align_J = 0.0;  // |cos| angles
    int rank_E = 0, rank_R = 0, rank_J = 0;
    bool pass = false;
};
AlignmentReport stationarity_alignment_check(const DHPencil& p, const FlowState& state,
                                             const FlowConfig& cfg);

// Window-independent singularity certificate at a state:
//   1/2 ( lambda_min(M) + min(0, lambda_min(E + eps Delta))^2
//                       + min(0, lambda_min(R + eps Theta))^2 )
// with M = (E+eps Delta)^2 + (R+eps Theta)^2 - (J+eps Gamma)^2 (the J term
// dropped for Instability). Zero exactly when the perturbed pencil has a
// common kernel AND both perturbed symmetric matrices stay PSD.
double certificate_value(const DHPencil& p, const PerturbationTriple& pert, double eps,
                         Target target);

// Plain extremal-pair functional value (the public eval_F_* forms) at a
// state, for reporting alongside the shared-selection value.
double strict_functional_value(const DHPencil& p, const PerturbationTriple& pert,
                               const FlowConfig& cfg, const EigenData* prev = nullptr);

} // namespace dhdist
