#include "dhdist/linalg.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/QR>
#include <Eigen/SVD>
#include <algorithm>
#include <cmath>

namespace dhdist {

Matrix sym_part(const Matrix& x) { return 0.5 * (x + x.transpose()); }

Matrix skew_part(const Matrix& x) {
    Matrix s = 0.5 * (x - x.transpose());
    s.diagonal().setZero();
    return s;
}

double frobenius_inner(const std::vector<const Matrix*>& xs, const std::vector<const Matrix*>& ys) {
    double acc = 0.0;
    for (std::size_t i = 0; i < xs.size() && i < ys.size(); ++i)
        acc += (xs[i]->array() * ys[i]->array()).sum();
    return acc;
}

void sign_fix(Vector& v) {
    for (Index i = 0; i < v.size(); ++i) {
        if (std::abs(v[i]) > 1e-10) {
            if (v[i] < 0.0) v = -v;
            return;
        }
    }
}

SymEig sym_eig(const Matrix& a) {
    Eigen::SelfAdjointEigenSolver<Matrix> es(a);
    return SymEig{es.eigenvalues(), es.eigenvectors()};
}

RealSvd real_svd(const Matrix& b) {
    if (b.rows() <= 16) {
        Eigen::JacobiSVD<Matrix> svd(b, Eigen::ComputeFullU | Eigen::ComputeFullV);
        return RealSvd{svd.matrixU(), svd.singularValues(), svd.matrixV()};
    }
    Eigen::BDCSVD<Matrix> svd(b, Eigen::ComputeFullU | Eigen::ComputeFullV);
    return RealSvd{svd.matrixU(), svd.singularValues(), svd.matrixV()};
}

HermEig skew_herm_eig(const Matrix& b) {
    const std::complex<double> im(0.0, 1.0);
    CMatrix h = im * b.cast<std::complex<double>>();
    Eigen::SelfAdjointEigenSolver<CMatrix> es(h);
    return HermEig{es.eigenvalues(), es.eigenvectors()};
}

Vector apply_pinv_excluding(const SymEig& eig, double shift, const Vector& v,
                            const std::vector<int>& excluded, double scale) {
    const Index n = eig.w.size();
    double s = scale;
    if (s <= 0.0) {
        s = 0.0;
        for (Index i = 0; i < n; ++i) s = std::max(s, std::abs(eig.w[i] - shift));
    }
    std::vector<char> skip(static_cast<std::size_t>(n), 0);
    for (int i : excluded)
        if (i >= 0 && i < n) skip[static_cast<std::size_t>(i)] = 1;
    Vector coef = eig.V.transpose() * v;
    for (Index i = 0; i < n; ++i) {
        const double d = eig.w[i] - shift;
        if (skip[static_cast<std::size_t>(i)] || std::abs(d) <= kRankTol * s)
            coef[i] = 0.0;
        else
            coef[i] /= d;
    }
    return eig.V * coef;
}

SmallestEig sym_eig_smallest(const Matrix& a) {
    SymEig eig = sym_eig(a);
    SmallestEig out;
    out.value = eig.w[0];
    out.vector = eig.V.col(0);
    out.gap = (eig.w.size() > 1) ? (eig.w[1] - eig.w[0]) : 0.0;
    sign_fix(out.vector);
    return out;
}

Vector skew_null_vector(const Matrix& b) {
    const Index n = b.rows();
    if (n % 2 == 0) throw EvenDimension("skew_null_vector requires odd dimension");
    if (b.norm() == 0.0) {
        Vector e1 = Vector::Zero(n);
        e1[0] = 1.0;
        return e1;
    }
    RealSvd svd = real_svd(b);
    Vector w = svd.V.col(n - 1);  // singular vector of the smallest singular value
    sign_fix(w);
    return w;
}

SkewPair skew_smallest_imag_pair(const Matrix& b) {
    const Index n = b.rows();
    if (n % 2 != 0) throw OddDimension("skew_smallest_imag_pair requires even dimension");
    HermEig he = skew_herm_eig(b);
    // B w = i mu w  <=>  (iB) w = -mu w: look for the eigenvalue of iB closest
    // to zero from below (mu >= 0 smallest).
    int best = -1;
    for (Index i = 0; i < n; ++i) {
        if (he.w[i] <= 1e-14 * std::max(1.0, std::abs(he.w[n - 1]))) {
            if (best < 0 || he.w[i] > he.w[best]) best = static_cast<int>(i);
        }
    }
    if (best < 0) best = 0;  // all eigenvalues positive can only happen by rounding
    SkewPair out;
    out.mu = std::max(0.0, -he.w[best]);
    CVector w = he.V.col(best);

    // Phase fixing: for a simple pair, w^T w = 0 automatically (eigenvectors
    // of the normal matrix B for distinct eigenvalues +-i mu); enforce the
    // Re/Im orthonormalization exactly by Gram-Schmidt.
    Vector wr = w.real();
    Vector wi = w.imag();
    double nr = wr.norm();
    if (nr < 1e-14) {  // rotate a quarter phase if the real part degenerated
        w *= std::complex<double>(0.0, 1.0);
        wr = w.real();
        wi = w.imag();
        nr = wr.norm();
    }
    wr /= nr;
    wi -= (wr.dot(wi)) * wr;
    double ni = wi.norm();
    if (ni < 1e-14) {
        // mu = 0 with a real eigenvector: complete with another kernel vector.
        RealSvd svd = real_svd(b);
        wi = svd.V.col(n - 1);
        wi -= (wr.dot(wi)) * wr;
        ni = wi.norm();
        if (ni < 1e-14) {
            wi = svd.V.col(n - 2);
            wi -= (wr.dot(wi)) * wr;
            ni = wi.norm();
        }
    }
    wi /= ni;
    // Deterministic sign: flip the whole vector (real AND imaginary parts, so
    // the eigenvalue branch +i mu is preserved) to make the first significant
    // entry of Re(w) positive.
    for (Index i = 0; i < n; ++i) {
        if (std::abs(wr[i]) > 1e-10) {
            if (wr[i] < 0.0) {
                wr = -wr;
                wi = -wi;
            }
            break;
        }
    }
    const double inv_sqrt2 = 1.0 / std::sqrt(2.0);
    out.w = inv_sqrt2 * (wr.cast<std::complex<double>>() +
                         std::complex<double>(0.0, 1.0) * wi.cast<std::complex<double>>());
    return out;
}

Matrix pseudoinverse_shifted(const Matrix& a, double shift) {
    SymEig eig = sym_eig(a);
    const Index n = eig.w.size();
    double scale = 0.0;
    for (Index i = 0; i < n; ++i) scale = std::max(scale, std::abs(eig.w[i] - shift));
    Vector inv(n);
    for (Index i = 0; i < n; ++i) {
        const double d = eig.w[i] - shift;
        inv[i] = (std::abs(d) <= kRankTol * scale) ? 0.0 : 1.0 / d;
    }
    return eig.V * inv.asDiagonal() * eig.V.transpose();
}

CMatrix complex_pseudoinverse_shifted(const Matrix& b, double mu) {
    // B - i mu I = -i (H + mu I) with H = iB Hermitian, so
    // (B - i mu I)^+ = i (H + mu I)^+.
    HermEig he = skew_herm_eig(b);
    const Index n = he.w.size();
    double scale = 0.0;
    for (Index i = 0; i < n; ++i) scale = std::max(scale, std::abs(he.w[i] + mu));
    Vector inv(n);
    for (Index i = 0; i < n; ++i) {
        const double d = he.w[i] + mu;
        inv[i] = (std::abs(d) <= kRankTol * scale) ? 0.0 : 1.0 / d;
    }
    CMatrix pinv_h = he.V * inv.asDiagonal().toDenseMatrix().cast<std::complex<double>>() *
                     he.V.adjoint();
    return std::complex<double>(0.0, 1.0) * pinv_h;
}

ThinQR qr_thin(const Matrix& k) {
    Eigen::HouseholderQR<Matrix> qr(k);
    Matrix q = qr.householderQ() * Matrix::Identity(k.rows(), 2);
    Matrix r = qr.matrixQR().topRows(2).triangularView<Eigen::Upper>();
    for (int j = 0; j < 2; ++j) {
        if (r(j, j) < 0.0) {
            r.row(j) = -r.row(j);
            q.col(j) = -q.col(j);
        }
    }
    ThinQR out;
    out.U = q;
    out.Rf = r;
    const double scale = std::max(k.norm(), 1e-300);
    out.rank_deficient = std::min(std::abs(r(0, 0)), std::abs(r(1, 1))) <= 1e-12 * scale;
    return out;
}

} // namespace dhdist
