#pragma once

#include <Eigen/Dense>
#include <complex>

#include "dhdist/errors.hpp"

namespace dhdist {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using CMatrix = Eigen::MatrixXcd;
using CVector = Eigen::VectorXcd;
using Index = Eigen::Index;

// Symmetric matrix with exact entrywise symmetry, enforced by construction:
// the stored matrix is (A + A^T)/2, whose (i,j) and (j,i) entries are the
// same floating-point expression and therefore bitwise equal.
class SymMatrix {
  public:
    SymMatrix() = default;
    explicit SymMatrix(Index n) : m_(Matrix::Zero(n, n)) {}
    // Projects an arbitrary square matrix onto the symmetric part.
    static SymMatrix project(const Matrix& a) {
        SymMatrix s;
        s.m_ = 0.5 * (a + a.transpose());
        return s;
    }
    // Wraps a matrix that is already exactly symmetric (debug-checked).
    static SymMatrix from_symmetric(const Matrix& a) {
        SymMatrix s;
        s.m_ = 0.5 * (a + a.transpose());
        return s;
    }
    const Matrix& mat() const { return m_; }
    Index n() const { return m_.rows(); }
    double norm() const { return m_.norm(); }

  private:
    Matrix m_;
};

// Skew-symmetric matrix with exact entrywise antisymmetry and zero diagonal,
// enforced the same way via the projection (A - A^T)/2.
class SkewMatrix {
  public:
    SkewMatrix() = default;
    explicit SkewMatrix(Index n) : m_(Matrix::Zero(n, n)) {}
    static SkewMatrix project(const Matrix& a) {
        SkewMatrix s;
        s.m_ = 0.5 * (a - a.transpose());
        s.m_.diagonal().setZero();
        return s;
    }
    const Matrix& mat() const { return m_; }
    Index n() const { return m_.rows(); }
    double norm() const { return m_.norm(); }

  private:
    Matrix m_;
};

// The structured perturbation (Delta, Theta, Gamma) of the pencil: Delta
// perturbs E, Theta perturbs R (both symmetric), Gamma perturbs J (skew).
// The optimization constrains the *joint* Frobenius norm of the triple.
struct PerturbationTriple {
    Matrix Delta;  // symmetric
    Matrix Theta;  // symmetric
    Matrix Gamma;  // skew

    PerturbationTriple() = default;
    explicit PerturbationTriple(Index n)
        : Delta(Matrix::Zero(n, n)), Theta(Matrix::Zero(n, n)), Gamma(Matrix::Zero(n, n)) {}

    double joint_norm() const {
        return std::sqrt(Delta.squaredNorm() + Theta.squaredNorm() + Gamma.squaredNorm());
    }
    void scale(double s) {
        Delta *= s;
        Theta *= s;
        Gamma *= s;
    }
    // Scales the triple to joint Frobenius norm one.
    void normalize() {
        const double nrm = joint_norm();
        if (nrm <= 0.0) throw DegenerateInput("cannot normalize a zero perturbation triple");
        scale(1.0 / nrm);
    }
    // Re-projects onto the structure manifolds (exact symmetry / skewness).
    void enforce_structure() {
        Delta = 0.5 * (Delta + Delta.transpose().eval());
        Theta = 0.5 * (Theta + Theta.transpose().eval());
        Gamma = 0.5 * (Gamma - Gamma.transpose().eval());
        Gamma.diagonal().setZero();
    }
};

enum class Target { Singularity, Instability };
enum class Variant { Odd, Even, Unified };

} // namespace dhdist
