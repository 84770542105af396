#include <doctest.h>

#include <cmath>

#include "dhdist/pencil.hpp"
#include "fixtures.hpp"

using namespace dhdist;

TEST_CASE("validate reports structure and PSD status of the reference pencil") {
    const DHPencil p = fixtures::reference_pencil();
    ValidationReport rep = validate(p);
    CHECK(rep.is_symmetric_E);
    CHECK(rep.is_symmetric_R);
    CHECK(rep.is_skew_J);
    CHECK(rep.is_regular);
    CHECK(rep.common_kernel_dim == 0);
    // The printed E is slightly indefinite (a rounding artifact of the data).
    CHECK(rep.min_eig_E == doctest::Approx(-0.0394).epsilon(2e-2));
    CHECK_FALSE(rep.psd_ok_E);
    CHECK(rep.psd_ok_R);
}

TEST_CASE("validate flags an exactly singular pencil") {
    // Common kernel e_3: zero last row/column everywhere.
    Matrix e = Matrix::Identity(3, 3), r = Matrix::Identity(3, 3);
    e(2, 2) = 0.0;
    r(2, 2) = 0.0;
    Matrix j = Matrix::Zero(3, 3);
    j(0, 1) = 1.0;
    j(1, 0) = -1.0;
    DHPencil p(SymMatrix::project(e), SkewMatrix::project(j), SymMatrix::project(r));
    ValidationReport rep = validate(p);
    CHECK_FALSE(rep.is_regular);
    CHECK(rep.common_kernel_dim == 1);
}

TEST_CASE("bounds: identity pencil gives lower sqrt(2) and upper 2") {
    const Index n = 4;
    DHPencil p(SymMatrix::project(Matrix::Identity(n, n)), SkewMatrix(n),
               SymMatrix::project(Matrix::Identity(n, n)));
    auto sb = singularity_bounds(p);
    CHECK(sb.first == doctest::Approx(std::sqrt(2.0)).epsilon(1e-14));
    CHECK(sb.second == doctest::Approx(2.0).epsilon(1e-14));
    auto ib = instability_bounds(p);
    CHECK(ib.first == doctest::Approx(std::sqrt(2.0)).epsilon(1e-14));
    CHECK(ib.second == doctest::Approx(2.0).epsilon(1e-14));
}

TEST_CASE("bounds sandwich: lower = sqrt(lambda_min), upper = sqrt(2) lower") {
    for (std::uint64_t seed : {21ULL, 22ULL, 23ULL}) {
        const DHPencil p = fixtures::random_pencil(5, seed);
        auto sb = singularity_bounds(p);
        const Matrix m = p.E.mat() * p.E.mat() + p.R.mat() * p.R.mat() -
                         p.J.mat() * p.J.mat();
        const double lam = sym_eig_smallest(sym_part(m)).value;
        CHECK(sb.first == doctest::Approx(std::sqrt(std::max(0.0, lam))).epsilon(1e-12));
        CHECK(sb.second == doctest::Approx(std::sqrt(2.0) * sb.first).epsilon(1e-14));
        auto ib = instability_bounds(p);
        // -J^2 = J^T J is PSD, so dropping it can only lower lambda_min:
        // the instability lower bound sits at or below the singularity one.
        CHECK(ib.first <= sb.first + 1e-14);
    }
}

TEST_CASE("direct_formula_value matches an independent evaluation") {
    const DHPencil p = fixtures::reference_pencil();
    fixtures::TestRng rng(31);
    for (int k = 0; k < 10; ++k) {
        const Vector u = rng.unit_vector(5);
        const Matrix proj = Matrix::Identity(5, 5) - u * u.transpose();
        const double te = 2.0 * (proj * p.E.mat() * u).squaredNorm() +
                          std::pow(u.dot(p.E.mat() * u), 2);
        const double tr = 2.0 * (proj * p.R.mat() * u).squaredNorm() +
                          std::pow(u.dot(p.R.mat() * u), 2);
        const double tj = 2.0 * (p.J.mat() * u).squaredNorm();
        CHECK(direct_formula_value(p, u, Target::Singularity) ==
              doctest::Approx(std::sqrt(te + tr + tj)).epsilon(1e-12));
        CHECK(direct_formula_value(p, u, Target::Instability) ==
              doctest::Approx(std::sqrt(te + tr)).epsilon(1e-12));
    }
}

TEST_CASE("direct_formula_grad_sq matches central differences") {
    const DHPencil p = fixtures::random_pencil(5, 37);
    fixtures::TestRng rng(38);
    const double h = 1e-6;
    for (Target target : {Target::Singularity, Target::Instability}) {
        for (int k = 0; k < 5; ++k) {
            const Vector u = rng.unit_vector(5);
            const Vector d = rng.vector(5);
            auto fsq = [&](const Vector& v) {
                const double val = direct_formula_value(p, v / v.norm(), target);
                return val * val;
            };
            // Gradient of the squared formula on R^n restricted to the sphere:
            // compare along the projected direction.
            const Vector dt = d - u * u.dot(d);
            const double fd = (fsq(u + h * dt) - fsq(u - h * dt)) / (2.0 * h);
            const Vector g = direct_formula_grad_sq(p, u, target);
            const Vector gt = g - u * u.dot(g);
            CHECK(gt.dot(dt) == doctest::Approx(fd).epsilon(1e-5));
        }
    }
}

TEST_CASE("direct_formula_minimize beats random probes and is deterministic") {
    for (std::uint64_t seed : {41ULL, 42ULL}) {
        const DHPencil p = fixtures::random_pencil(5, seed);
        SphereMin a = direct_formula_minimize(p, Target::Singularity, 3, 7);
        SphereMin b = direct_formula_minimize(p, Target::Singularity, 3, 7);
        CHECK(a.d == b.d);
        CHECK((a.u_star - b.u_star).norm() == 0.0);
        fixtures::TestRng rng(seed + 100);
        for (int k = 0; k < 200; ++k)
            CHECK(a.d <= direct_formula_value(p, rng.unit_vector(5), Target::Singularity) + 1e-12);
        // Within the theoretical sandwich.
        auto sb = singularity_bounds(p);
        CHECK(a.d >= sb.first - 1e-10);
        CHECK(a.d <= sb.second + 1e-10);
    }
}

TEST_CASE("optimal_perturbation_from_u annihilates with norm = formula value") {
    // 100 random (pencil, u) pairs at 1e-12: the constructor is exact.
    int checked = 0;
    for (std::uint64_t seed = 0; seed < 25; ++seed) {
        const Index n = 3 + 2 * static_cast<Index>(seed % 3);
        const DHPencil p = fixtures::random_pencil(n, 1000 + seed);
        fixtures::TestRng rng(2000 + seed);
        for (int k = 0; k < 4; ++k) {
            const Vector u = rng.unit_vector(n);
            for (Target target : {Target::Singularity, Target::Instability}) {
                PerturbationTriple t = optimal_perturbation_from_u(p, u, target);
                CHECK(((p.E.mat() + t.Delta) * u).norm() < 1e-12);
                CHECK(((p.R.mat() + t.Theta) * u).norm() < 1e-12);
                if (target == Target::Singularity)
                    CHECK(((p.J.mat() + t.Gamma) * u).norm() < 1e-12);
                else
                    CHECK(t.Gamma.norm() == 0.0);
                CHECK(t.joint_norm() ==
                      doctest::Approx(direct_formula_value(p, u, target)).epsilon(1e-12));
            }
            ++checked;
        }
    }
    CHECK(checked == 100);
}

TEST_CASE("optimal perturbation members have rank at most two") {
    const DHPencil p = fixtures::reference_pencil();
    fixtures::TestRng rng(51);
    const Vector u = rng.unit_vector(5);
    PerturbationTriple t = optimal_perturbation_from_u(p, u, Target::Singularity);
    for (const Matrix* m : {&t.Delta, &t.Theta, &t.Gamma}) {
        Eigen::JacobiSVD<Matrix> svd(*m);
        CHECK(svd.singularValues()[2] < 1e-12 * svd.singularValues()[0]);
    }
}

TEST_CASE("psd_feasible_perturbation restores semidefiniteness with the kernel") {
    const DHPencil p = fixtures::reference_pencil();  // E indefinite
    fixtures::TestRng rng(52);
    for (int k = 0; k < 5; ++k) {
        const Vector u = rng.unit_vector(5);
        const Matrix d = psd_feasible_perturbation(p.E.mat(), u);
        const Matrix ep = p.E.mat() + d;
        CHECK((ep * u).norm() < 1e-12);
        CHECK(sym_eig_smallest(sym_part(ep)).value > -1e-10);
        // PSD input: reduces to the plain construction.
        const Matrix dr = psd_feasible_perturbation(p.R.mat(), u);
        const Matrix plain = optimal_perturbation_from_u(p, u, Target::Singularity).Theta;
        CHECK((dr - plain).norm() < 1e-12);
    }
}

TEST_CASE("feasible_formula_value >= direct value, equal for PSD inputs") {
    const DHPencil pref = fixtures::reference_pencil();
    const DHPencil prand = fixtures::random_pencil(5, 53);
    fixtures::TestRng rng(54);
    for (int k = 0; k < 10; ++k) {
        const Vector u = rng.unit_vector(5);
        CHECK(feasible_formula_value(pref, u, Target::Singularity) >=
              direct_formula_value(pref, u, Target::Singularity) - 1e-12);
        CHECK(feasible_formula_value(prand, u, Target::Singularity) ==
              doctest::Approx(direct_formula_value(prand, u, Target::Singularity))
                  .epsilon(1e-12));
    }
}

TEST_CASE("rank2_feasible_perturbation stays rank-2, PSD, and annihilating") {
    const DHPencil p = fixtures::reference_pencil();
    fixtures::TestRng rng(55);
    int feasible_count = 0;
    for (int k = 0; k < 20; ++k) {
        const Vector u = rng.unit_vector(5);
        Rank2Feasible r2 = rank2_feasible_perturbation(p, u, Target::Singularity);
        if (!r2.feasible) continue;
        ++feasible_count;
        const Matrix ep = p.E.mat() + r2.T.Delta;
        const Matrix rp = p.R.mat() + r2.T.Theta;
        CHECK((ep * u).norm() < 1e-10);
        CHECK((rp * u).norm() < 1e-10);
        CHECK(sym_eig_smallest(sym_part(ep)).value > -1e-9);
        CHECK(sym_eig_smallest(sym_part(rp)).value > -1e-9);
        for (const Matrix* m : {&r2.T.Delta, &r2.T.Theta, &r2.T.Gamma}) {
            Eigen::JacobiSVD<Matrix> svd(*m);
            CHECK(svd.singularValues()[2] < 1e-9 * std::max(1.0, svd.singularValues()[0]));
        }
        CHECK(r2.value >= direct_formula_value(p, u, Target::Singularity) - 1e-12);
    }
    CHECK(feasible_count > 0);
}

TEST_CASE("rank2_feasible_minimize equals direct minimization on PSD inputs") {
    const DHPencil p = fixtures::random_pencil(5, 57);
    SphereMin r2 = rank2_feasible_minimize(p, Target::Singularity, 2, 9);
    SphereMin d = direct_formula_minimize(p, Target::Singularity, 2, 9);
    CHECK(r2.d == doctest::Approx(d.d).epsilon(1e-12));
}

TEST_CASE("gen_random_dh produces a valid normalized dH pencil") {
    const DHPencil p = gen_random_dh(6, 77);
    ValidationReport rep = validate(p);
    CHECK(rep.is_symmetric_E);
    CHECK(rep.is_symmetric_R);
    CHECK(rep.is_skew_J);
    CHECK(rep.psd_ok_E);
    CHECK(rep.psd_ok_R);
    CHECK(p.E.norm() == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(p.R.norm() == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(p.J.norm() == doctest::Approx(1.0).epsilon(1e-12));
    // Deterministic in the seed.
    const DHPencil q = gen_random_dh(6, 77);
    CHECK((p.E.mat() - q.E.mat()).norm() == 0.0);
}

TEST_CASE("gen_mass_spring_damper has the documented block structure") {
    const Index nm = 4, mc = 5;
    const double gamma = 0.1;
    const DHPencil p = gen_mass_spring_damper(nm, mc, gamma);
    const Index n = 2 * nm + mc;
    REQUIRE(p.n() == n);
    ValidationReport rep = validate(p);
    CHECK(rep.is_symmetric_E);
    CHECK(rep.is_skew_J);
    CHECK(rep.psd_ok_E);
    CHECK(rep.psd_ok_R);
    CHECK(rep.is_regular);

    // E = diag(K, M, 0) with K tridiagonal (3 on the diagonal, -1 off).
    CHECK(p.E.mat()(0, 0) == 3.0);
    CHECK(p.E.mat()(0, 1) == -1.0);
    CHECK(p.E.mat().bottomRightCorner(mc, mc).norm() == 0.0);
    CHECK((p.E.mat().block(nm, nm, nm, nm) - Matrix::Identity(nm, nm)).norm() == 0.0);
    // R = diag(0, D, gamma I).
    CHECK(p.R.mat().topLeftCorner(nm, nm).norm() == 0.0);
    CHECK((p.R.mat().block(nm, nm, nm, nm) - 0.5 * Matrix::Identity(nm, nm)).norm() == 0.0);
    CHECK((p.R.mat().bottomRightCorner(mc, mc) - gamma * Matrix::Identity(mc, mc)).norm() ==
          0.0);
    // J blocks: top-middle K, middle-bottom -G^T.
    CHECK((p.J.mat().topLeftCorner(nm, nm)).norm() == 0.0);
    CHECK((p.J.mat().block(0, nm, nm, nm) - p.E.mat().topLeftCorner(nm, nm)).norm() == 0.0);

    // The instability lower bound is exactly gamma: the gamma I_m block of R
    // is the smallest diagonal contribution of E^2 + R^2.
    auto ib = instability_bounds(p);
    CHECK(ib.first == doctest::Approx(gamma).epsilon(1e-12));

    CHECK_THROWS_AS((void)gen_mass_spring_damper(0, 1, 0.1), InputError);
    CHECK_THROWS_AS((void)gen_mass_spring_damper(3, 1, -0.5), InputError);
}

TEST_CASE("kernel_certificate_matrix is PSD with kernel at a feasible triple") {
    const DHPencil p = fixtures::random_pencil(5, 91);
    fixtures::TestRng rng(92);
    const Vector u = rng.unit_vector(5);
    PerturbationTriple t = optimal_perturbation_from_u(p, u, Target::Singularity);
    const double eps = t.joint_norm();
    t.scale(1.0 / eps);
    const Matrix m = p.kernel_certificate_matrix(t, eps);
    SmallestEig s = sym_eig_smallest(sym_part(m));
    CHECK(std::abs(s.value) < 1e-10);
    CHECK(std::abs(std::abs(s.vector.dot(u)) - 1.0) < 1e-8);
}
