#include "dhdist/functional.hpp"

#include <cmath>

namespace dhdist {

namespace {

constexpr double kDegenTolRel = 1e-12;

double clamp_sq(double v) { return std::min(1.0, v * v); }

void align_or_fix(Vector& v, const Vector* prev) {
    if (prev != nullptr && prev->size() == v.size()) {
        if (prev->dot(v) < 0.0) v = -v;
    } else {
        sign_fix(v);
    }
}

void check_simple(double gap, double span, const char* which) {
    if (gap <= kDegenTolRel * std::max(1.0, span))
        throw DegenerateEigenvalue(std::string("extremal eigenvalue of ") + which +
                                       " is numerically multiple",
                                   gap);
}

} // namespace

ScalarCouplings couplings(const EigenData& d) {
    ScalarCouplings c;
    c.theta = d.x.dot(d.u);
    if (d.w_r.size() > 0) c.eta = d.x.dot(d.w_r);
    if (!d.odd && d.w_i.size() > 0) c.zeta = d.x.dot(d.w_i);
    return c;
}

EigenData extract_eigendata(const DHPencil& p, const PerturbationTriple& pert, double eps,
                            const EigenData* prev, Target target) {
    EigenData d;
    const Matrix ep = p.E.mat() + eps * pert.Delta;
    const Matrix rp = p.R.mat() + eps * pert.Theta;

    SmallestEig se = sym_eig_smallest(ep);
    d.lambda = se.value;
    d.x = se.vector;
    d.gap_E = se.gap;
    align_or_fix(d.x, prev ? &prev->x : nullptr);

    SmallestEig sr = sym_eig_smallest(rp);
    d.nu = sr.value;
    d.u = sr.vector;
    d.gap_R = sr.gap;
    align_or_fix(d.u, prev ? &prev->u : nullptr);

    d.odd = (p.n() % 2 != 0);
    if (target == Target::Instability) return d;  // skew part neither perturbed nor tracked

    const Matrix jp = p.J.mat() + eps * pert.Gamma;
    if (d.odd) {
        RealSvd svd = real_svd(jp);
        const Index n = p.n();
        d.w_r = svd.V.col(n - 1);
        d.gap_J = (n > 1) ? (svd.sigma[n - 2] - svd.sigma[n - 1]) : 0.0;
        align_or_fix(d.w_r, prev ? &prev->w_r : nullptr);
        d.mu = 0.0;
    } else {
        SkewPair sp = skew_smallest_imag_pair(jp);
        d.mu = sp.mu;
        d.w_r = sp.w.real();
        d.w_i = sp.w.imag();
        if (prev != nullptr && prev->w_r.size() == d.w_r.size()) {
            if (prev->w_r.dot(d.w_r) < 0.0) {
                d.w_r = -d.w_r;
                d.w_i = -d.w_i;
            }
        }
        // Imaginary-part gap: distance of -mu to the rest of the i*B spectrum.
        HermEig he = skew_herm_eig(jp);
        double gap = std::numeric_limits<double>::infinity();
        for (Index i = 0; i < he.w.size(); ++i) {
            const double dist = std::abs(he.w[i] + d.mu);
            if (dist > 1e-14 * std::max(1.0, std::abs(he.w[he.w.size() - 1])))
                gap = std::min(gap, dist);
        }
        d.gap_J = std::isfinite(gap) ? gap : 0.0;
    }
    return d;
}

double eval_F_odd(const EigenData& d, bool extra_uw_term) {
    const ScalarCouplings c = couplings(d);
    double f = 0.5 * (d.lambda * d.lambda + d.nu * d.nu + (1.0 - clamp_sq(c.theta)) +
                      (1.0 - clamp_sq(c.eta)));
    if (extra_uw_term) f += 0.5 * (1.0 - clamp_sq(d.u.dot(d.w_r)));
    return f;
}

double eval_F_even(const EigenData& d) {
    const ScalarCouplings c = couplings(d);
    const double align = std::min(1.0, 2.0 * c.eta * c.eta + 2.0 * c.zeta * c.zeta);
    return 0.5 * (d.lambda * d.lambda + d.nu * d.nu + d.mu * d.mu + (1.0 - clamp_sq(c.theta)) +
                  (1.0 - align));
}

double eval_F_unified(const DHPencil& p, const PerturbationTriple& pert, double eps,
                      const EigenData& d) {
    const Vector t = (p.R.mat() + eps * pert.Theta) * d.x;
    const Vector z = (p.J.mat() + eps * pert.Gamma) * d.x;
    return 0.5 * (d.lambda * d.lambda + d.nu * d.nu + t.squaredNorm() + z.squaredNorm());
}

double eval_F_instability(const EigenData& d) {
    const double theta = d.x.dot(d.u);
    return 0.5 * (d.lambda * d.lambda + d.nu * d.nu + (1.0 - clamp_sq(theta)));
}

OddGradient assemble_gradient_odd(const DHPencil& p, const PerturbationTriple& pert, double eps,
                                  const EigenData& d, Target target) {
    const Index n = p.n();
    const Matrix ep = p.E.mat() + eps * pert.Delta;
    const Matrix rp = p.R.mat() + eps * pert.Theta;

    SymEig ee = sym_eig(ep);
    SymEig er = sym_eig(rp);
    check_simple(ee.w[1] - ee.w[0], ee.w[n - 1] - ee.w[0], "E + eps*Delta");
    check_simple(er.w[1] - er.w[0], er.w[n - 1] - er.w[0], "R + eps*Theta");

    const ScalarCouplings c = couplings(d);
    OddGradient out;

    Vector rhs = c.theta * d.u;
    if (target == Target::Singularity) rhs += c.eta * d.w_r;
    out.p_vec = apply_pinv_excluding(ee, d.lambda, rhs, {0});
    out.q_vec = c.theta * apply_pinv_excluding(er, d.nu, d.x, {0});

    out.grad.G_E = sym_part((d.lambda * d.x + out.p_vec) * d.x.transpose());
    out.grad.G_R = sym_part((d.nu * d.u + out.q_vec) * d.u.transpose());

    if (target == Target::Singularity) {
        const Matrix jp = p.J.mat() + eps * pert.Gamma;
        RealSvd svd = real_svd(jp);
        // P = (J + eps*Gamma)^+ = V Sigma^+ U^T; r = eta * P^T x.
        const double smax = std::max(svd.sigma[0], 1e-300);
        Vector sinv(n);
        for (Index i = 0; i < n; ++i)
            sinv[i] = (svd.sigma[i] <= kRankTol * smax) ? 0.0 : 1.0 / svd.sigma[i];
        out.r_vec = c.eta * (svd.U * (sinv.asDiagonal() * (svd.V.transpose() * d.x)));
        out.grad.G_J = skew_part(out.r_vec * d.w_r.transpose());
    } else {
        out.r_vec = Vector::Zero(n);
        out.grad.G_J = Matrix::Zero(n, n);
    }

    out.grad.rho = frobenius_inner(pert.Delta, out.grad.G_E) +
                   frobenius_inner(pert.Theta, out.grad.G_R) +
                   frobenius_inner(pert.Gamma, out.grad.G_J);
    return out;
}

GradientTriple assemble_gradient_even(const DHPencil& p, const PerturbationTriple& pert,
                                      double eps, const EigenData& d) {
    const Index n = p.n();
    const Matrix ep = p.E.mat() + eps * pert.Delta;
    const Matrix rp = p.R.mat() + eps * pert.Theta;
    const Matrix jp = p.J.mat() + eps * pert.Gamma;

    SymEig ee = sym_eig(ep);
    SymEig er = sym_eig(rp);
    check_simple(ee.w[1] - ee.w[0], ee.w[n - 1] - ee.w[0], "E + eps*Delta");
    check_simple(er.w[1] - er.w[0], er.w[n - 1] - er.w[0], "R + eps*Theta");

    const ScalarCouplings c = couplings(d);
    GradientTriple g;

    const Vector rhs = c.theta * d.u + 2.0 * (c.eta * d.w_r + c.zeta * d.w_i);
    const Vector pvec = apply_pinv_excluding(ee, d.lambda, rhs, {0});
    const Vector qvec = c.theta * apply_pinv_excluding(er, d.nu, d.x, {0});

    g.G_E = sym_part((d.lambda * d.x + pvec) * d.x.transpose());
    g.G_R = sym_part((d.nu * d.u + qvec) * d.u.transpose());

    // mu-gradient plus the alignment term 2 Re(conj(x^T w) P^T x w^T) with
    // P = (J + eps*Gamma - i mu I)^+.
    Matrix wtilde = d.w_r * d.w_i.transpose() - d.w_i * d.w_r.transpose();
    const CMatrix pc = complex_pseudoinverse_shifted(jp, d.mu);
    const CVector w = d.w_r.cast<std::complex<double>>() +
                      std::complex<double>(0.0, 1.0) * d.w_i.cast<std::complex<double>>();
    const std::complex<double> xtw = d.x.cast<std::complex<double>>().transpose() * w;
    const CVector ptx = pc.transpose() * d.x.cast<std::complex<double>>();
    const CMatrix hmat = std::conj(xtw) * (ptx * w.transpose());
    g.G_J = skew_part(d.mu * wtilde + 2.0 * hmat.real());

    g.rho = frobenius_inner(pert.Delta, g.G_E) + frobenius_inner(pert.Theta, g.G_R) +
            frobenius_inner(pert.Gamma, g.G_J);
    return g;
}

UnifiedGradient assemble_gradient_unified(const DHPencil& p, const PerturbationTriple& pert,
                                          double eps, const EigenData& d, Target target) {
    const Index n = p.n();
    const Matrix ep = p.E.mat() + eps * pert.Delta;
    const Matrix rp = p.R.mat() + eps * pert.Theta;

    SymEig ee = sym_eig(ep);
    SymEig er = sym_eig(rp);
    check_simple(ee.w[1] - ee.w[0], ee.w[n - 1] - ee.w[0], "E + eps*Delta");
    check_simple(er.w[1] - er.w[0], er.w[n - 1] - er.w[0], "R + eps*Theta");

    UnifiedGradient out;
    out.t_vec = rp * d.x;
    Vector acc = -(rp * out.t_vec);
    if (target == Target::Singularity) {
        const Matrix jp = p.J.mat() + eps * pert.Gamma;
        out.z_vec = jp * d.x;
        acc += jp * out.z_vec;
    } else {
        out.z_vec = Vector::Zero(n);
    }
    out.s_vec = apply_pinv_excluding(ee, d.lambda, acc, {0});

    out.grad.G_E = sym_part((d.lambda * d.x + out.s_vec) * d.x.transpose());
    out.grad.G_R = sym_part(d.nu * (d.u * d.u.transpose()) + out.t_vec * d.x.transpose());
    out.grad.G_J = (target == Target::Singularity)
                       ? skew_part(out.z_vec * d.x.transpose())
                       : Matrix::Zero(n, n);

    out.grad.rho = frobenius_inner(pert.Delta, out.grad.G_E) +
                   frobenius_inner(pert.Theta, out.grad.G_R) +
                   frobenius_inner(pert.Gamma, out.grad.G_J);
    return out;
}

} // namespace dhdist
