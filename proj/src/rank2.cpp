#include "dhdist/rank2.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>

namespace dhdist {

namespace {

constexpr double kTiny = 1e-30;

Matrix ortho_pair(const Vector& a, const Vector& b) {
    // Orthonormalizes [a, b] by modified Gram-Schmidt (a assumed nonzero).
    Matrix u(a.size(), 2);
    u.col(0) = a / a.norm();
    Vector c = b - u.col(0).dot(b) * u.col(0);
    const double cn = c.norm();
    if (cn > 1e-14 * std::max(1.0, b.norm())) {
        u.col(1) = c / cn;
    } else {
        // Complete with any unit vector orthogonal to u0.
        const Index n = a.size();
        for (Index k = 0; k < n; ++k) {
            Vector e = Vector::Zero(n);
            e[k] = 1.0;
            c = e - u.col(0).dot(e) * u.col(0);
            if (c.norm() > 0.5) break;
        }
        u.col(1) = c / c.norm();
    }
    return u;
}

Matrix identity_pair(Index n) {
    Matrix u = Matrix::Zero(n, 2);
    u(0, 0) = 1.0;
    u(1, 1) = 1.0;
    return u;
}

double sigma_min_2x2(const Matrix& s) {
    return Eigen::JacobiSVD<Matrix>(s).singularValues()(1);
}

// K-step + QR + S-step for one member with frozen gradient g and multiplier
// rho. X0 = U0 * S0 * U0^T. Returns (U1, S1_raw) before joint rescaling.
std::pair<Matrix, Matrix> member_step(const Matrix& u0, const Matrix& s0, const Matrix& g,
                                      double rho, double h) {
    const Matrix k0 = u0 * s0;
    const Matrix k1 = k0 + h * (-(g * u0) + rho * k0);
    if (k1.norm() <= kTiny)
        throw SNearSingular("rank collapse in the low-rank integrator K-step", 0.0);
    ThinQR qr = qr_thin(k1);
    const Matrix a = qr.U.transpose() * u0;  // 2 x 2
    const Matrix s_t0 = a * s0 * a.transpose();
    const Matrix s1 = s_t0 + h * (-(qr.U.transpose() * (g * qr.U)) + rho * s_t0);
    return {qr.U, s1};
}

} // namespace

Matrix Rank2Sym::dense() const { return sym_part(U * (S * U.transpose())); }

Matrix Rank2Skew::smat() const {
    Matrix s(2, 2);
    s << 0.0, s12, -s12, 0.0;
    return s;
}

Matrix Rank2Skew::dense() const { return skew_part(U * (smat() * U.transpose())); }

PerturbationTriple Rank2Triple::dense() const {
    PerturbationTriple out;
    out.Delta = D1.dense();
    out.Theta = D2.dense();
    out.Gamma = D3.dense();
    return out;
}

double Rank2Triple::joint_norm() const {
    return std::sqrt(D1.S.squaredNorm() + D2.S.squaredNorm() + 2.0 * D3.s12 * D3.s12);
}

void Rank2Triple::normalize() {
    const double nrm = joint_norm();
    if (nrm <= 0.0) throw DegenerateInput("cannot normalize a zero factored triple");
    D1.S /= nrm;
    D2.S /= nrm;
    D3.s12 /= nrm;
}

Matrix project_tangent_sym(const Rank2Sym& x, const Matrix& z) {
    const Matrix q = Matrix::Identity(z.rows(), z.cols()) - x.U * x.U.transpose();
    return z - q * z * q;
}

Matrix project_tangent_skew(const Rank2Skew& x, const Matrix& z) {
    const Matrix q = Matrix::Identity(z.rows(), z.cols()) - x.U * x.U.transpose();
    return z - q * z * q;
}

Rank2Rhs rank2_rhs_factored(const DHPencil& p, const Rank2Triple& t, double eps,
                            const EigenData& data, const GradientTriple& g, Target target,
                            double s_reg) {
    (void)p;
    (void)eps;
    (void)data;
    const double rho = g.rho;

    auto sym_member = [&](const Rank2Sym& d, const Matrix& grad, Matrix& ds, Matrix& du) {
        if (sigma_min_2x2(d.S) < s_reg)
            throw SNearSingular("S block is numerically singular in the factored RHS",
                                sigma_min_2x2(d.S));
        const Matrix gu = grad * d.U;            // n x 2
        const Matrix core = d.U.transpose() * gu;  // 2 x 2
        ds = -sym_part(core) + rho * d.S;
        const Matrix perp = gu - d.U * core;  // (I - UU^T) G U
        du = -perp * d.S.inverse();
    };

    Rank2Rhs out;
    sym_member(t.D1, g.G_E, out.dS1, out.dU1);
    sym_member(t.D2, g.G_R, out.dS2, out.dU2);

    if (target == Target::Instability) {
        out.ds3 = 0.0;
        out.dU3 = Matrix::Zero(t.D3.U.rows(), 2);
        return out;
    }
    const double smin = std::abs(t.D3.s12);
    if (smin < s_reg)
        throw SNearSingular("skew S block is numerically singular in the factored RHS", smin);
    const Matrix gu = g.G_J * t.D3.U;
    const Matrix core = t.D3.U.transpose() * gu;
    const Matrix ds3m = -skew_part(core) + rho * t.D3.smat();
    out.ds3 = ds3m(0, 1);
    Matrix sinv(2, 2);
    sinv << 0.0, -1.0 / t.D3.s12, 1.0 / t.D3.s12, 0.0;
    out.dU3 = -(gu - t.D3.U * core) * sinv;
    return out;
}

Rank2Triple lowrank_integrator_step(const Rank2Triple& t, const GradientTriple& g, double h,
                                    Target target) {
    const double rho = g.rho;
    Rank2Triple next = t;

    auto step1 = member_step(t.D1.U, t.D1.S, g.G_E, rho, h);
    next.D1.U = step1.first;
    next.D1.S = sym_part(step1.second);

    auto step2 = member_step(t.D2.U, t.D2.S, g.G_R, rho, h);
    next.D2.U = step2.first;
    next.D2.S = sym_part(step2.second);

    const bool gamma_frozen = (target == Target::Instability) ||
                              (t.D3.s12 == 0.0 && g.G_J.size() > 0 && g.G_J.norm() <= kTiny) ||
                              (t.D3.s12 == 0.0 && g.G_J.size() == 0);
    if (!gamma_frozen) {
        auto step3 = member_step(t.D3.U, t.D3.smat(), g.G_J, rho, h);
        next.D3.U = step3.first;
        next.D3.s12 = skew_part(step3.second)(0, 1);
    }

    next.normalize();
    return next;
}

Rank2Triple truncate_to_rank2(const PerturbationTriple& pert) {
    if (pert.joint_norm() <= 0.0)
        throw DegenerateInput("cannot truncate an all-zero perturbation triple to rank 2");
    const Index n = pert.Delta.rows();

    auto trunc_sym = [&](const Matrix& m) {
        Rank2Sym out;
        if (m.norm() <= 0.0) {
            out.U = identity_pair(n);
            out.S = Matrix::Zero(2, 2);
            return out;
        }
        SymEig e = sym_eig(m);
        // The two largest-magnitude eigenvalues.
        std::vector<Index> idx(static_cast<size_t>(n));
        for (Index i = 0; i < n; ++i) idx[static_cast<size_t>(i)] = i;
        std::partial_sort(idx.begin(), idx.begin() + 2, idx.end(),
                          [&](Index a, Index b) { return std::abs(e.w[a]) > std::abs(e.w[b]); });
        out.U = Matrix(n, 2);
        out.U.col(0) = e.V.col(idx[0]);
        out.U.col(1) = e.V.col(idx[1]);
        out.S = Matrix::Zero(2, 2);
        out.S(0, 0) = e.w[idx[0]];
        out.S(1, 1) = e.w[idx[1]];
        return out;
    };

    auto trunc_skew = [&](const Matrix& m) {
        Rank2Skew out;
        if (m.norm() <= 0.0) {
            out.U = identity_pair(n);
            out.s12 = 0.0;
            return out;
        }
        // Dominant conjugate eigenpair plane of the skew matrix, via i*B.
        HermEig he = skew_herm_eig(m);
        Index top = 0;
        for (Index i = 0; i < he.w.size(); ++i)
            if (std::abs(he.w[i]) > std::abs(he.w[top])) top = i;
        const Vector zr = he.V.col(top).real();
        const Vector zi = he.V.col(top).imag();
        out.U = (zr.norm() >= zi.norm()) ? ortho_pair(zr, zi) : ortho_pair(zi, zr);
        Matrix s = out.U.transpose() * (m * out.U);
        out.s12 = skew_part(s)(0, 1);
        return out;
    };

    Rank2Triple t;
    t.D1 = trunc_sym(pert.Delta);
    t.D2 = trunc_sym(pert.Theta);
    t.D3 = trunc_skew(pert.Gamma);
    t.normalize();
    return t;
}

Rank2FlowResult integrate_rank2_to_stationary(const DHPencil& p, const Rank2Triple& init,
                                              const FlowConfig& cfg) {
    Rank2Triple t = init;
    t.normalize();

    FlowState st;
    st.pert = t.dense();
    st.h = cfg.h0;
    FlowEval cur = flow_eval(p, st.pert, cfg, nullptr);
    st.F = cur.F;
    st.data = cur.data;

    int stall_count = 0;
    int slow_count = 0;
    std::string trace;
    if (!cfg.trace_path.empty()) trace = "step,h,F,residual\n";

    for (int step = 0; step < cfg.max_steps; ++step) {
        const GradientTriple g = flow_gradient(p, st.pert, cfg, cur);
        // Manifold residual: the tangent projection of -G + rho * pert.
        PerturbationTriple dir;
        dir.Delta = project_tangent_sym(t.D1, -g.G_E + g.rho * st.pert.Delta);
        dir.Theta = project_tangent_sym(t.D2, -g.G_R + g.rho * st.pert.Theta);
        dir.Gamma = (cfg.target == Target::Instability)
                        ? Matrix(Matrix::Zero(p.n(), p.n()))
                        : project_tangent_skew(t.D3, -g.G_J + g.rho * st.pert.Gamma);
        st.residual = dir.joint_norm();
        if (step == 0) st.grad_norm0 = std::max(st.residual, kTiny);
        if (!cfg.trace_path.empty()) {
            char row[128];
            std::snprintf(row, sizeof(row), "%d,%.17g,%.17g,%.17g\n", step, st.h, st.F,
                          st.residual);
            trace += row;
        }

        if (st.F <= cfg.f_zero_tol) {
            st.converged = true;
            st.stop_reason = "F_zero";
            break;
        }
        if (st.residual <= cfg.tol_stationary * st.grad_norm0) {
            st.converged = true;
            st.stop_reason = "stationary";
            break;
        }

        // Factored step with F-decrease acceptance; h halved on rejection.
        bool accepted = false;
        double h = st.h;
        Rank2Triple cand;
        FlowEval ce;
        double h_used = 0.0;
        while (h >= cfg.h_min) {
            bool built = false;
            try {
                cand = lowrank_integrator_step(t, g, h, cfg.target);
                built = true;
            } catch (const SNearSingular&) {
                built = false;
            }
            if (built) {
                PerturbationTriple cd = cand.dense();
                ce = flow_eval(p, cd, cfg, &cur);
                if (ce.F < st.F) {
                    accepted = true;
                    h_used = h;
                    break;
                }
            }
            st.rejected += 1;
            h *= 0.5;
        }
        if (!accepted) {
            // Fallback: one projected full-flow Euler step, re-truncated.
            PerturbationTriple full;
            full.Delta = -g.G_E + g.rho * st.pert.Delta;
            full.Theta = -g.G_R + g.rho * st.pert.Theta;
            full.Gamma = (cfg.target == Target::Instability)
                             ? Matrix(Matrix::Zero(p.n(), p.n()))
                             : Matrix(-g.G_J + g.rho * st.pert.Gamma);
            h = st.h;
            while (h >= cfg.h_min && !accepted) {
                PerturbationTriple cp;
                cp.Delta = st.pert.Delta + h * full.Delta;
                cp.Theta = st.pert.Theta + h * full.Theta;
                cp.Gamma = st.pert.Gamma + h * full.Gamma;
                const double nrm = cp.joint_norm();
                if (nrm > 0.0) {
                    cp.scale(1.0 / nrm);
                    Rank2Triple tc = truncate_to_rank2(cp);
                    PerturbationTriple cd = tc.dense();
                    ce = flow_eval(p, cd, cfg, &cur);
                    if (ce.F < st.F) {
                        cand = tc;
                        accepted = true;
                        h_used = h;
                        break;
                    }
                }
                st.rejected += 1;
                h *= 0.5;
            }
        }
        if (!accepted) {
            st.converged = false;
            st.stop_reason = "h_min";
            break;
        }

        const double rel_drop = (st.F - ce.F) / std::max(st.F, kTiny);
        t = cand;
        st.pert = t.dense();
        cur = ce;
        st.F = cur.F;
        st.data = cur.data;
        st.h = std::min(1.2 * h_used, cfg.h_max);
        st.accepted += 1;

        stall_count = (rel_drop <= cfg.tol_F) ? stall_count + 1 : 0;
        if (stall_count >= cfg.stall_steps) {
            st.converged = true;
            st.stop_reason = "F_stall";
            break;
        }
        if (cfg.allow_slow_exit) {
            slow_count = (st.F > cfg.slow_exit_threshold && rel_drop < cfg.slow_exit_rel)
                             ? slow_count + 1
                             : 0;
            if (slow_count >= cfg.slow_exit_steps) {
                st.converged = false;
                st.stop_reason = "slow_progress";
                break;
            }
        }
    }
    if (st.stop_reason.empty()) {
        st.converged = false;
        st.stop_reason = "max_steps";
    }

    if (!cfg.trace_path.empty()) {
        std::ofstream out(cfg.trace_path);
        if (out) out << trace;
    }
    st.F_strict = strict_functional_value(p, st.pert, cfg, &st.data);
    st.certificate = certificate_value(p, st.pert, cfg.eps, cfg.target);
    return {st, t};
}

} // namespace dhdist
