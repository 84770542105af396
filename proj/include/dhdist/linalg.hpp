#pragma once

#include <complex>
#include <utility>
#include <vector>

#include "dhdist/types.hpp"

namespace dhdist {

// Relative truncation threshold used by all pseudoinverses: singular values /
// shifted eigenvalues with magnitude <= rank_tol * (largest magnitude) are
// inverted to zero.
inline constexpr double kRankTol = 1e-10;

// ---------------------------------------------------------------------------
// Elementwise structure projections.
// ---------------------------------------------------------------------------
Matrix sym_part(const Matrix& x);
Matrix skew_part(const Matrix& x);

// Frobenius inner product of matrix tuples: sum_i <Xs[i], Ys[i]>.
double frobenius_inner(const std::vector<const Matrix*>& xs, const std::vector<const Matrix*>& ys);
inline double frobenius_inner(const Matrix& x, const Matrix& y) { return (x.array() * y.array()).sum(); }

// ---------------------------------------------------------------------------
// Deterministic sign conventions.
// ---------------------------------------------------------------------------
// Flips v (in place) so its first entry with |v_i| > 1e-10 is positive.
void sign_fix(Vector& v);

// ---------------------------------------------------------------------------
// Full decompositions (internal building blocks, exposed for reuse/testing).
// ---------------------------------------------------------------------------
// Eigendecomposition of a symmetric matrix; eigenvalues ascending.
struct SymEig {
    Vector w;  // ascending eigenvalues
    Matrix V;  // orthonormal eigenvectors (columns, matching w)
};
SymEig sym_eig(const Matrix& a);

// Singular value decomposition of a (skew-)symmetric real matrix,
// B = U * diag(sigma) * V^T with sigma descending.
struct RealSvd {
    Matrix U;
    Vector sigma;  // descending
    Matrix V;
};
RealSvd real_svd(const Matrix& b);

// Hermitian eigendecomposition of i*B for a real skew-symmetric B; the
// (real) eigenvalues come back ascending with complex eigenvectors. Used by
// the even-dimension spectral extraction and the complex pseudoinverse.
struct HermEig {
    Vector w;   // ascending real eigenvalues of i*B
    CMatrix V;  // unitary eigenvectors
};
HermEig skew_herm_eig(const Matrix& b);

// Applies the pseudoinverse (A - shift I)^+ to vector v given the
// eigendecomposition of A, with the eigenvalues at the listed indices
// excluded (treated as part of the inverted-to-zero kernel) in addition to
// the relative rank_tol truncation. `scale` is the magnitude reference for
// the truncation (largest |eigenvalue - shift| when <= 0 is passed).
Vector apply_pinv_excluding(const SymEig& eig, double shift, const Vector& v,
                            const std::vector<int>& excluded, double scale = -1.0);

// ---------------------------------------------------------------------------
// Contracted operations.
// ---------------------------------------------------------------------------
struct SmallestEig {
    double value = 0.0;
    Vector vector;
    double gap = 0.0;  // distance to the next-smallest eigenvalue
};
// Algebraically smallest eigenpair of a symmetric matrix, with the
// deterministic sign convention applied to the eigenvector.
SmallestEig sym_eig_smallest(const Matrix& a);

// Real unit null vector of a skew-symmetric matrix of odd dimension (the
// singular vector of the smallest singular value). Throws EvenDimension.
Vector skew_null_vector(const Matrix& b);

// Eigenvalue i*mu (mu >= 0 smallest) of an even-dimension skew-symmetric
// matrix with its complex unit eigenvector, phase-fixed so that
// Re(w)^T Im(w) = 0 and ||Re(w)|| = ||Im(w)|| = 1/sqrt(2), and the sign
// convention applied to Re(w). Throws OddDimension.
struct SkewPair {
    double mu = 0.0;
    CVector w;
};
SkewPair skew_smallest_imag_pair(const Matrix& b);

// (A - shift I)^+ for symmetric A via eigendecomposition with rank_tol
// truncation; the result is symmetric.
Matrix pseudoinverse_shifted(const Matrix& a, double shift);

// (B - i mu I)^+ for skew-symmetric real B; complex result. For mu = 0 this
// is real and coincides with the Moore-Penrose pseudoinverse of B.
CMatrix complex_pseudoinverse_shifted(const Matrix& b, double mu);

// Thin QR of an n x 2 matrix with nonnegative diagonal of Rf. `rank_flag`
// reports a (near-)rank-deficient input (not fatal).
struct ThinQR {
    Matrix U;   // n x 2, orthonormal columns
    Matrix Rf;  // 2 x 2 upper triangular, nonnegative diagonal
    bool rank_deficient = false;
};
ThinQR qr_thin(const Matrix& k);

} // namespace dhdist
