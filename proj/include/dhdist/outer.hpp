#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "dhdist/rank2.hpp"

namespace dhdist {

// Configuration of the outer bisection on eps.
struct OuterConfig {
    Target target = Target::Singularity;
    bool rank2 = false;    // factored inner flow instead of the full one
    bool unified = false;  // unified inner functional
    double tol = 1e-8;     // absolute tolerance for "f(eps) = 0"
    double tol_eps = 1e-5; // bracket width tolerance, relative to eps_ub
    int k_max = 60;
    int restarts = 3;      // random restarts at the first eps only
    int expansion_cap = 20;
    std::uint64_t seed = 20250817ULL;
    int threads = 1;  // worker cap for the first-eps restarts
    FlowConfig inner;  // step sizes / tolerances template for the inner flows
};

// Per-eps inner-solve diagnostics.
struct InnerSolveInfo {
    double eps = 0.0;
    double f = 0.0;           // reported value: max(functional, certificate)
    double f_functional = 0.0;
    double certificate = 0.0;
    int accepted_steps = 0;
    std::string stop_reason;
    std::string init_kind;  // analytic | warm | restart-k | default
};

struct DistanceResult {
    double eps_star = 0.0;
    double eps_lb = 0.0, eps_ub = 0.0;  // final bracket
    PerturbationTriple pert_star;       // unit joint norm minimizer at eps_ub
    Vector null_vector;                 // common-kernel direction at eps_star
    std::vector<std::pair<double, double>> f_samples;  // (eps, f), ascending
    std::vector<InnerSolveInfo> diagnostics;
    bool converged = false;
    double theorem_lower = 0.0, theorem_upper = 0.0;
    double f_at_ub = 0.0;
    double certificate = 0.0;
    double residual_E = 0.0, residual_R = 0.0, residual_J = 0.0;  // at null_vector
    int inner_solves = 0;
    int bisection_iterations = 0;
    bool has_rank2 = false;
    Rank2Triple triple_star;  // factored stationary state (rank-2 runs)
};

// Minimum-norm feasible construction at u_star, scaled for magnitude eps:
// when its norm t exceeds eps the triple is returned at unit norm
// (undershooting); otherwise it is scaled by 1/eps and the leftover Frobenius
// mass is filled into PSD directions of the annihilated E so the perturbed
// pencil at eps is exactly singular and feasible.
PerturbationTriple analytic_initial_perturbation(const DHPencil& p, const Vector& u_star,
                                                 double eps, Target target);

// Rank-2 counterpart: built from rank2_feasible_perturbation so every member
// stays rank <= 2, with the leftover mass padded in-plane (same undershoot /
// exact / filler cases as the full version). Falls back to the plain
// annihilating construction when no in-plane lift exists at u_star.
PerturbationTriple analytic_initial_perturbation_rank2(const DHPencil& p, const Vector& u_star,
                                                       double eps, Target target);

// One inner solve at fixed eps. Candidates: the analytic initialization from
// `u_star`, the optional warm start, and `restarts` random initializations
// (run concurrently up to cfg.threads); the best terminal state wins. The
// reported f is max(shared-selection F, certificate): both vanish exactly at
// a feasible singular configuration, and the certificate is immune to the
// tie-window selection.
struct FOfEpsResult {
    double f = 0.0;
    FlowState state;
    Rank2Triple triple;  // valid when cfg.rank2
    std::vector<InnerSolveInfo> tried;
};
FOfEpsResult f_of_eps(const DHPencil& p, double eps, const PerturbationTriple* warm,
                      const Vector& u_star, const OuterConfig& cfg, int restarts);

// Bisection (with automatic bracket setup and doubling expansion of the
// upper end) for the structured distance. Throws NoUpperBracket when the
// expansion cap is exhausted.
DistanceResult bisection_distance(const DHPencil& p, const OuterConfig& cfg);

// Warm-started sweep of f over an increasing grid.
std::vector<std::pair<double, double>> f_curve(const DHPencil& p, const std::vector<double>& grid,
                                               const OuterConfig& cfg);

// Common-kernel direction at (eps, pert): the eigenvector of the smallest
// eigenvalue of (E+eps Delta)^2 + (R+eps Theta)^2 - (J+eps Gamma)^2 (the J
// term dropped for Instability). Optionally reports the three residual norms
// ||(Y + eps D) c||.
Vector extract_null_vector(const DHPencil& p, double eps, const PerturbationTriple& pert,
                           Target target, Vector* residuals = nullptr);

} // namespace dhdist
