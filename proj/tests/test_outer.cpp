// Tests for the outer bisection: bracket invariants, exactly-known distances,
// the analytic initial perturbations, null-vector extraction, the warm-started
// curve sweep, determinism, and failure reporting.

#include <cmath>
#include <cstdlib>
#include <utility>
#include <vector>

#include "doctest.h"

#include "dhdist/errors.hpp"
#include "dhdist/flow.hpp"
#include "dhdist/outer.hpp"
#include "dhdist/pencil.hpp"

#include "fixtures.hpp"

using namespace dhdist;

namespace {

// A pencil with the exact common kernel span{e1}: distance zero.
DHPencil singular_pencil() {
    Matrix e = Matrix::Zero(5, 5), r = Matrix::Zero(5, 5), j = Matrix::Zero(5, 5);
    e.diagonal() << 0.0, 1.0, 0.8, 0.6, 0.4;
    r.diagonal() << 0.0, 0.3, 0.5, 0.7, 0.9;
    j(1, 2) = 0.4;
    j(2, 1) = -0.4;
    j(3, 4) = -0.6;
    j(4, 3) = 0.6;
    return DHPencil(SymMatrix::project(e), SkewMatrix::project(j), SymMatrix::project(r));
}

} // namespace

TEST_CASE("an exactly singular pencil reports distance zero without bisection") {
    const DHPencil p = singular_pencil();
    REQUIRE(validate(p).common_kernel_dim == 1);

    OuterConfig cfg;
    cfg.restarts = 1;
    const DistanceResult res = bisection_distance(p, cfg);

    CHECK(res.converged);
    CHECK(res.eps_star == 0.0);
    CHECK(res.eps_lb == 0.0);
    CHECK(res.eps_ub == 0.0);
    CHECK(res.bisection_iterations == 0);
    CHECK(res.theorem_lower <= 1e-12);
    CHECK(res.f_at_ub <= cfg.tol);
    CHECK(std::abs(res.null_vector.norm() - 1.0) <= 1e-12);
    CHECK(res.residual_E <= 1e-10);
    CHECK(res.residual_R <= 1e-10);
    CHECK(res.residual_J <= 1e-10);
}

TEST_CASE("the constrained mass-spring-damper distance to instability is exactly gamma") {
    const double gamma = 0.1;
    const DHPencil p = gen_mass_spring_damper(4, 5, gamma);

    OuterConfig cfg;
    cfg.target = Target::Instability;
    cfg.restarts = 1;
    const DistanceResult res = bisection_distance(p, cfg);

    CHECK(res.converged);
    CHECK(res.eps_star == doctest::Approx(gamma).epsilon(1e-12));
    CHECK(res.bisection_iterations == 0);  // the lower bound is already feasible
    CHECK(res.theorem_lower == doctest::Approx(gamma).epsilon(1e-12));
    CHECK(res.f_at_ub <= cfg.tol);
}

TEST_CASE("bisection on the reference pencil satisfies the bracket invariants") {
    const DHPencil p = fixtures::reference_pencil();
    OuterConfig cfg;
    cfg.restarts = 1;
    const DistanceResult res = bisection_distance(p, cfg);

    CHECK(res.converged);
    CHECK(res.eps_star == res.eps_ub);
    CHECK(res.eps_lb <= res.eps_ub);
    CHECK(res.eps_ub - res.eps_lb <= cfg.tol_eps * res.eps_ub + 1e-15);
    CHECK(res.eps_star == doctest::Approx(0.355079).epsilon(2e-3));
    CHECK(res.theorem_lower <= res.eps_star + 1e-12);
    CHECK(res.eps_star <= res.theorem_upper + 1e-12);
    CHECK(res.f_at_ub <= cfg.tol);
    CHECK(res.certificate <= cfg.tol);

    // Every sampled eps classifies consistently with the final bracket.
    for (const auto& [eps, f] : res.f_samples) {
        if (f > cfg.tol) CHECK(eps <= res.eps_lb + 1e-15);
        if (f <= cfg.tol) CHECK(eps >= res.eps_ub - 1e-15);
    }

    // The unit minimizer annihilates the null vector at eps_star.
    CHECK(std::abs(res.pert_star.joint_norm() - 1.0) <= 1e-10);
    CHECK(std::abs(res.null_vector.norm() - 1.0) <= 1e-12);
    CHECK(res.residual_E <= 1e-3);
    CHECK(res.residual_R <= 1e-3);
    CHECK(res.residual_J <= 1e-3);
    CHECK(res.inner_solves > 0);
    CHECK(res.bisection_iterations > 0);
    CHECK(!res.has_rank2);
}

TEST_CASE("bisection_distance is deterministic for a fixed seed") {
    const DHPencil p = fixtures::reference_pencil();
    OuterConfig cfg;
    cfg.restarts = 2;
    const DistanceResult a = bisection_distance(p, cfg);
    const DistanceResult b = bisection_distance(p, cfg);
    CHECK(a.eps_star == b.eps_star);
    CHECK(a.eps_lb == b.eps_lb);
    CHECK(a.inner_solves == b.inner_solves);
    CHECK((a.pert_star.Delta - b.pert_star.Delta).norm() == 0.0);

    // Threaded restarts select the same winner as the sequential merge.
    OuterConfig cfg_mt = cfg;
    cfg_mt.threads = 3;
    const DistanceResult c = bisection_distance(p, cfg_mt);
    CHECK(c.eps_star == a.eps_star);
}

TEST_CASE("analytic_initial_perturbation covers the undershoot and exact cases") {
    const DHPencil p = fixtures::reference_pencil();
    const SphereMin sm = feasible_formula_minimize(p, Target::Singularity, 2, 7);

    // Exact case: eps above the feasible norm gives a singular, PSD-feasible,
    // unit-norm perturbation with F and certificate at zero.
    {
        const double eps = 0.40;
        const PerturbationTriple init =
            analytic_initial_perturbation(p, sm.u_star, eps, Target::Singularity);
        CHECK(std::abs(init.joint_norm() - 1.0) <= 1e-12);
        FlowConfig fc;
        fc.eps = eps;
        fc.variant = Variant::Odd;
        CHECK(flow_eval(p, init, fc).F <= 1e-10);
        CHECK(certificate_value(p, init, eps, Target::Singularity) <= 1e-8);
        CHECK(sym_eig_smallest(Matrix(p.E.mat() + eps * init.Delta)).value >= -1e-10);
        CHECK(sym_eig_smallest(Matrix(p.R.mat() + eps * init.Theta)).value >= -1e-10);
    }

    // Undershoot: eps below the feasible norm returns the unit direction of
    // the feasible construction, which cannot reach a singular pencil yet.
    {
        const double eps = 0.20;
        const PerturbationTriple init =
            analytic_initial_perturbation(p, sm.u_star, eps, Target::Singularity);
        CHECK(std::abs(init.joint_norm() - 1.0) <= 1e-12);
        FlowConfig fc;
        fc.eps = eps;
        fc.variant = Variant::Odd;
        CHECK(flow_eval(p, init, fc).F > 1e-4);
    }
}

TEST_CASE("analytic_initial_perturbation_rank2 stays rank-2 and feasible") {
    const DHPencil p = fixtures::reference_pencil();
    const SphereMin sm = rank2_feasible_minimize(p, Target::Singularity, 2, 7);
    const double eps = 0.40;
    const PerturbationTriple init =
        analytic_initial_perturbation_rank2(p, sm.u_star, eps, Target::Singularity);

    CHECK(std::abs(init.joint_norm() - 1.0) <= 1e-10);
    for (const Matrix* m : {&init.Delta, &init.Theta, &init.Gamma}) {
        const Vector s = Eigen::JacobiSVD<Matrix>(*m).singularValues();
        CHECK(s(2) <= 1e-10 * std::max(1.0, s(0)));
    }
    FlowConfig fc;
    fc.eps = eps;
    fc.variant = Variant::Odd;
    CHECK(flow_eval(p, init, fc).F <= 1e-10);
    CHECK(certificate_value(p, init, eps, Target::Singularity) <= 1e-8);
    CHECK(sym_eig_smallest(Matrix(p.E.mat() + eps * init.Delta)).value >= -1e-10);
    CHECK(sym_eig_smallest(Matrix(p.R.mat() + eps * init.Theta)).value >= -1e-10);
}

TEST_CASE("extract_null_vector returns the kernel direction with exact residual norms") {
    const DHPencil p = fixtures::reference_pencil();
    OuterConfig cfg;
    cfg.restarts = 1;
    const DistanceResult res = bisection_distance(p, cfg);

    Vector residuals;
    const Vector c = extract_null_vector(p, res.eps_star, res.pert_star, Target::Singularity,
                                         &residuals);
    CHECK(std::abs(c.norm() - 1.0) <= 1e-12);
    REQUIRE(residuals.size() == 3);
    CHECK(residuals[0] ==
          doctest::Approx(((p.E.mat() + res.eps_star * res.pert_star.Delta) * c).norm())
              .epsilon(1e-12));
    CHECK(residuals[1] ==
          doctest::Approx(((p.R.mat() + res.eps_star * res.pert_star.Theta) * c).norm())
              .epsilon(1e-12));
    CHECK(residuals[2] ==
          doctest::Approx(((p.J.mat() + res.eps_star * res.pert_star.Gamma) * c).norm())
              .epsilon(1e-12));

    Vector ri;
    (void)extract_null_vector(p, 0.1, res.pert_star, Target::Instability, &ri);
    REQUIRE(ri.size() == 3);
    CHECK(ri[2] == 0.0);
}

TEST_CASE("f_curve sweeps with warm starts and flattens above the distance") {
    const DHPencil p = fixtures::reference_pencil();
    OuterConfig cfg;
    cfg.restarts = 1;
    const std::vector<double> grid = {0.20, 0.28, 0.36, 0.44};
    const auto curve = f_curve(p, grid, cfg);

    REQUIRE(curve.size() == grid.size());
    for (size_t i = 0; i < curve.size(); ++i) {
        CHECK(curve[i].first == grid[i]);
        CHECK(curve[i].second >= 0.0);
    }
    CHECK(curve[0].second > curve[2].second);
    CHECK(curve[2].second <= 1e-8);  // 0.36 is above the distance
    CHECK(curve[3].second <= 1e-8);
}

TEST_CASE("f_of_eps labels its candidate initializations") {
    const DHPencil p = fixtures::reference_pencil();
    OuterConfig cfg;
    const SphereMin sm = feasible_formula_minimize(p, Target::Singularity, 2, cfg.seed);

    // Above the distance the analytic candidate already meets the tolerance
    // and the remaining candidates are skipped.
    const FOfEpsResult above = f_of_eps(p, 0.40, nullptr, sm.u_star, cfg, 1);
    CHECK(above.f <= 1e-8);
    REQUIRE(above.tried.size() == 1);
    CHECK(above.tried[0].init_kind == "analytic");

    // Below the distance every candidate runs and gets its label.
    const FOfEpsResult below = f_of_eps(p, 0.30, nullptr, sm.u_star, cfg, 1);
    CHECK(below.f > cfg.tol);
    bool saw_analytic = false, saw_restart = false;
    double f_analytic = 0.0;
    for (const InnerSolveInfo& info : below.tried) {
        if (info.init_kind == "analytic") {
            saw_analytic = true;
            f_analytic = info.f;
        }
        if (info.init_kind.rfind("restart-", 0) == 0) saw_restart = true;
        CHECK(info.eps == 0.30);
    }
    CHECK(saw_analytic);
    CHECK(saw_restart);
    CHECK(below.f <= f_analytic + 1e-15);  // best-of over the candidates

    const PerturbationTriple warm = below.state.pert;
    const FOfEpsResult warmed = f_of_eps(p, 0.31, &warm, sm.u_star, cfg, 0);
    bool saw_warm = false;
    for (const InnerSolveInfo& info : warmed.tried)
        if (info.init_kind == "warm") saw_warm = true;
    CHECK(saw_warm);
}

TEST_CASE("bisection_distance reports an exhausted bracket expansion") {
    const DHPencil p = fixtures::reference_pencil();
    OuterConfig cfg;
    cfg.tol = 0.0;  // unreachable: f keeps a rounding-level positive floor
    cfg.expansion_cap = 2;
    cfg.restarts = 0;
    cfg.inner.max_steps = 60;
    CHECK_THROWS_AS((void)bisection_distance(p, cfg), NoUpperBracket);
}
