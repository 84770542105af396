#pragma once

// Shared test fixtures: the bundled 5x5 reference problem (with the values
// published for it), deterministic random generators, and small helpers used
// across the test binaries.
//
// The reference values below were produced by the original experiment on
// unrounded data; the matrices here are the 2-decimal printed versions, so
// reference-value comparisons carry the tolerances stated at each use.

#include <cstdint>
#include <random>

#include "dhdist/pencil.hpp"

namespace fixtures {

using dhdist::DHPencil;
using dhdist::Index;
using dhdist::Matrix;
using dhdist::PerturbationTriple;
using dhdist::SkewMatrix;
using dhdist::SymMatrix;
using dhdist::Target;
using dhdist::Vector;

// ---------------------------------------------------------------------------
// The 5x5 reference problem.
// ---------------------------------------------------------------------------
inline DHPencil reference_pencil() {
    Matrix e(5, 5), r(5, 5), j(5, 5);
    e << 0.15, 0.02, -0.04, 0.02, -0.04,
         0.02, 0.22, 0.00, -0.01, -0.03,
        -0.04, 0.00, 0.11, -0.07, -0.04,
         0.02, -0.01, -0.07, 0.01, 0.10,
        -0.04, -0.03, -0.04, 0.10, 0.39;
    r << 0.49, -0.13, 0.05, -0.15, 0.11,
        -0.13, 0.23, -0.05, -0.10, -0.19,
         0.05, -0.05, 0.48, -0.06, 0.02,
        -0.15, -0.10, -0.06, 0.55, 0.16,
         0.11, -0.19, 0.02, 0.16, 0.48;
    j << 0.00, -0.27, -0.03, -0.01, 0.21,
         0.27, 0.00, -0.15, 0.03, 0.11,
         0.03, 0.15, 0.00, 0.07, -0.07,
         0.01, -0.03, -0.07, 0.00, 0.05,
        -0.21, -0.11, 0.07, -0.05, 0.00;
    return DHPencil(SymMatrix::project(e), SkewMatrix::project(j), SymMatrix::project(r));
}

// Published distance to singularity of the reference problem.
inline constexpr double kReferenceEpsStar = 0.35681;

// Published value of the functional at eps = 0.
inline constexpr double kReferenceF0 = 0.9181;

// Published common-kernel direction (printed to 4 decimals, not normalized).
inline Vector reference_null_vector() {
    Vector c(5);
    c << 0.2195, -0.6664, -0.0639, 0.3187, -0.6341;
    return c;
}

// Published unit-joint-norm perturbation triple (printed to 4 decimals):
// multiply by kReferenceEpsStar for the actual perturbation.
inline PerturbationTriple reference_perturbation() {
    Matrix de(5, 5), dr(5, 5), dj(5, 5);
    de << -0.0385, 0.0912, 0.0089, 0.0251, 0.1408,
           0.0912, -0.2114, -0.0218, -0.0903, -0.3482,
           0.0089, -0.0218, -0.0009, 0.0019, -0.0293,
           0.0251, -0.0903, 0.0019, 0.1628, -0.0123,
           0.1408, -0.3482, -0.0293, -0.0123, -0.4801;
    dr << -0.0689, 0.1166, 0.0148, -0.1044, 0.1242,
           0.1166, -0.1164, -0.0307, 0.1766, -0.1433,
           0.0148, -0.0307, -0.0049, 0.0208, -0.0319,
          -0.1044, 0.1766, 0.0208, -0.1592, 0.1884,
           0.1242, -0.1433, -0.0319, 0.1884, -0.1679;
    dj << 0.0, 0.0887, -0.0118, -0.0474, 0.0852,
         -0.0887, 0.0, 0.0496, 0.0003, 0.0027,
          0.0118, -0.0496, 0.0, 0.0257, -0.0488,
          0.0474, -0.0003, -0.0257, 0.0, -0.0030,
         -0.0852, -0.0027, 0.0488, 0.0030, 0.0;
    PerturbationTriple t(5);
    t.Delta = de;
    t.Theta = dr;
    t.Gamma = dj;
    t.enforce_structure();
    return t;
}

// Published eigenvalues of eps* S1 (the factored E-member) of the rank-2 run.
inline Vector reference_s1_eigs() {
    Vector v(2);
    v << -0.2722, 0.0719;
    return v;
}

// ---------------------------------------------------------------------------
// Deterministic random helpers (independent of the library's samplers).
// ---------------------------------------------------------------------------
class TestRng {
  public:
    explicit TestRng(std::uint64_t seed) : rng_(seed) {}

    double gauss() {
        // Box-Muller over the raw stream: identical across standard libraries.
        if (have_) {
            have_ = false;
            return spare_;
        }
        double u1 = 0.0;
        while (u1 <= 0.0) u1 = uniform();
        const double u2 = uniform();
        const double rad = std::sqrt(-2.0 * std::log(u1));
        spare_ = rad * std::sin(6.283185307179586 * u2);
        have_ = true;
        return rad * std::cos(6.283185307179586 * u2);
    }
    double uniform() { return static_cast<double>(rng_() >> 11) * 0x1.0p-53; }

    Vector vector(Index n) {
        Vector v(n);
        for (Index i = 0; i < n; ++i) v[i] = gauss();
        return v;
    }
    Vector unit_vector(Index n) {
        Vector v = vector(n);
        while (v.norm() < 1e-12) v = vector(n);
        return v / v.norm();
    }
    Matrix matrix(Index n, Index m) {
        Matrix a(n, m);
        for (Index j = 0; j < m; ++j)
            for (Index i = 0; i < n; ++i) a(i, j) = gauss();
        return a;
    }

  private:
    std::mt19937_64 rng_;
    double spare_ = 0.0;
    bool have_ = false;
};

// Random unit-joint-norm structured perturbation triple.
inline PerturbationTriple random_triple(Index n, std::uint64_t seed,
                                        Target target = Target::Singularity) {
    TestRng rng(seed);
    PerturbationTriple t(n);
    t.Delta = dhdist::sym_part(rng.matrix(n, n));
    t.Theta = dhdist::sym_part(rng.matrix(n, n));
    if (target == Target::Singularity) t.Gamma = dhdist::skew_part(rng.matrix(n, n));
    t.normalize();
    return t;
}

// Random structured tangent-style direction (not normalized, Gamma-free for
// the Instability target).
inline PerturbationTriple random_direction(Index n, std::uint64_t seed,
                                           Target target = Target::Singularity) {
    TestRng rng(seed ^ 0x9e3779b97f4a7c15ULL);
    PerturbationTriple d(n);
    d.Delta = dhdist::sym_part(rng.matrix(n, n));
    d.Theta = dhdist::sym_part(rng.matrix(n, n));
    if (target == Target::Singularity) d.Gamma = dhdist::skew_part(rng.matrix(n, n));
    return d;
}

// Random dH pencil built from the test RNG (E, R PSD Gram matrices).
inline DHPencil random_pencil(Index n, std::uint64_t seed) {
    TestRng rng(seed);
    Matrix a = rng.matrix(n, n);
    Matrix b = rng.matrix(n, n);
    Matrix c = rng.matrix(n, n);
    Matrix e = a * a.transpose();
    e /= e.norm();
    Matrix r = b * b.transpose();
    r /= r.norm();
    Matrix j = 0.5 * (c - c.transpose());
    j /= j.norm();
    return DHPencil(SymMatrix::project(e), SkewMatrix::project(j), SymMatrix::project(r));
}

} // namespace fixtures
