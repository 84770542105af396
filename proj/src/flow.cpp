#include "dhdist/flow.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

namespace dhdist {

namespace {

constexpr double kTiny = 1e-30;

double clamp_unit_sq(double v) { return std::min(1.0, v * v); }

// Selects the working eigenpairs of E+eps*Delta and R+eps*Theta. All
// eigenvalues within the tie window of the smallest one are cluster members;
// the selected pair is the member combination (including the principal pair
// of the cluster subspaces) minimizing lambda^2 + nu^2 + (1 - theta^2).
void select_pair(const FlowConfig& cfg, FlowEval& ev, const EigenData* prev) {
    const Vector& wa = ev.eig_E.w;
    const Matrix& va = ev.eig_E.V;
    const Vector& wb = ev.eig_R.w;
    const Matrix& vb = ev.eig_R.V;
    const Index n = wa.size();

    const double sa = std::max({std::abs(wa[0]), std::abs(wa[n - 1]), kTiny});
    const double sb = std::max({std::abs(wb[0]), std::abs(wb[n - 1]), kTiny});
    ev.win_E.clear();
    ev.win_R.clear();
    for (Index i = 0; i < n && wa[i] <= wa[0] + cfg.tie_window * sa; ++i)
        ev.win_E.push_back(static_cast<int>(i));
    for (Index i = 0; i < n && wb[i] <= wb[0] + cfg.tie_window * sb; ++i)
        ev.win_R.push_back(static_cast<int>(i));

    double best = std::numeric_limits<double>::infinity();
    double bl = 0.0, bn = 0.0;
    Vector bx, bu;
    auto consider = [&](double lam, double nu, double theta, const Vector& x, const Vector& u) {
        const double score = lam * lam + nu * nu + (1.0 - clamp_unit_sq(theta));
        if (score < best) {
            best = score;
            bl = lam;
            bn = nu;
            bx = x;
            bu = u;
        }
    };

    const Index na = static_cast<Index>(ev.win_E.size());
    const Index nb = static_cast<Index>(ev.win_R.size());
    if (na > 1 || nb > 1) {
        // Principal pair of the two cluster subspaces.
        const Matrix cross = va.leftCols(na).transpose() * vb.leftCols(nb);
        Eigen::JacobiSVD<Matrix> svd(cross, Eigen::ComputeFullU | Eigen::ComputeFullV);
        const Vector x = va.leftCols(na) * svd.matrixU().col(0);
        const Vector u = vb.leftCols(nb) * svd.matrixV().col(0);
        const double theta = std::min(1.0, svd.singularValues()(0));
        consider(x.dot(ev.ep * x), u.dot(ev.rp * u), theta, x, u);
    }
    for (int i : ev.win_E)
        for (int j : ev.win_R)
            consider(wa[i], wb[j], std::abs(va.col(i).dot(vb.col(j))), va.col(i), vb.col(j));

    if (prev != nullptr && prev->x.size() == n) {
        if (bx.dot(prev->x) < 0.0) bx = -bx;
    } else {
        sign_fix(bx);
    }
    if (bx.dot(bu) < 0.0) bu = -bu;

    ev.data.lambda = bl;
    ev.data.x = bx;
    ev.data.nu = bn;
    ev.data.u = bu;
    ev.data.gap_E = (na < n) ? (wa[na] - wa[0]) : 0.0;
    ev.data.gap_R = (nb < n) ? (wb[nb] - wb[0]) : 0.0;
}

// Odd-dimension skew part: singular values within the tie window of the
// smallest form the near-null cluster; w is the normalized projection of x
// onto the cluster's right-singular subspace (falling back to the smallest
// singular vector when the projection degenerates).
void select_skew_odd(const FlowConfig& cfg, FlowEval& ev) {
    const Vector& sv = ev.svd_J.sigma;  // descending
    const Matrix& v = ev.svd_J.V;
    const Index n = sv.size();
    const double ss = std::max(sv[0], kTiny);

    ev.win_J.clear();
    for (Index i = n - 1; i >= 0 && sv[i] <= sv[n - 1] + cfg.tie_window * ss; --i)
        ev.win_J.push_back(static_cast<int>(i));

    Vector w;
    if (ev.win_J.size() > 1) {
        Matrix vw(n, static_cast<Index>(ev.win_J.size()));
        for (Index k = 0; k < vw.cols(); ++k) vw.col(k) = v.col(ev.win_J[static_cast<size_t>(k)]);
        Vector proj = vw * (vw.transpose() * ev.data.x);
        const double pn = proj.norm();
        if (pn > 1e-12) {
            w = proj / pn;
        } else {
            w = v.col(n - 1);
        }
    } else {
        w = v.col(n - 1);
    }
    if (w.dot(ev.data.x) < 0.0) w = -w;
    ev.data.w_r = w;
    ev.data.mu = 0.0;
    const Index m = static_cast<Index>(ev.win_J.size());
    ev.data.gap_J = (m < n) ? (sv[n - 1 - m] - sv[n - 1]) : 0.0;
}

double eval_selected_F(const DHPencil& p, const PerturbationTriple& pert, const FlowConfig& cfg,
                       const FlowEval& ev) {
    const EigenData& d = ev.data;
    if (cfg.variant == Variant::Unified) return eval_F_unified(p, pert, cfg.eps, d);
    if (cfg.target == Target::Instability) return eval_F_instability(d);
    const double theta = d.x.dot(d.u);
    double f = 0.5 * (d.lambda * d.lambda + d.nu * d.nu + (1.0 - clamp_unit_sq(theta)));
    if (d.odd) {
        const double eta = d.x.dot(d.w_r);
        f += 0.5 * (1.0 - clamp_unit_sq(eta));
        if (cfg.extra_uw_term) f += 0.5 * (1.0 - clamp_unit_sq(d.u.dot(d.w_r)));
    } else {
        const double eta = d.x.dot(d.w_r);
        const double zeta = d.x.dot(d.w_i);
        f += 0.5 * (d.mu * d.mu + (1.0 - std::min(1.0, 2.0 * eta * eta + 2.0 * zeta * zeta)));
    }
    return f;
}

// Masks the gradient (when a sparsity pattern is set) and assembles the
// norm-constrained RHS with rho recomputed from the masked terms.
PerturbationTriple assemble_rhs(const PerturbationTriple& pert, const FlowConfig& cfg,
                                GradientTriple g) {
    if (cfg.sparsity != nullptr) {
        g.G_E = cfg.sparsity->apply_E(g.G_E);
        g.G_R = cfg.sparsity->apply_R(g.G_R);
        g.G_J = cfg.sparsity->apply_J(g.G_J);
    }
    const double rho = frobenius_inner(pert.Delta, g.G_E) + frobenius_inner(pert.Theta, g.G_R) +
                       frobenius_inner(pert.Gamma, g.G_J);
    PerturbationTriple out;
    out.Delta = -g.G_E + rho * pert.Delta;
    out.Theta = -g.G_R + rho * pert.Theta;
    if (cfg.target == Target::Instability) {
        out.Gamma = Matrix::Zero(pert.Gamma.rows(), pert.Gamma.cols());
    } else {
        out.Gamma = -g.G_J + rho * pert.Gamma;
    }
    return out;
}

PerturbationTriple add_scaled(const PerturbationTriple& a, double h, const PerturbationTriple& b) {
    PerturbationTriple out;
    out.Delta = a.Delta + h * b.Delta;
    out.Theta = a.Theta + h * b.Theta;
    out.Gamma = a.Gamma + h * b.Gamma;
    return out;
}

struct TraceRow {
    int step;
    double h, F, residual;
};

void write_trace(const std::string& path, const std::vector<TraceRow>& rows) {
    if (path.empty()) return;
    std::ofstream out(path);
    if (!out) return;
    out << "step,h,F,residual\n";
    char buf[128];
    for (const TraceRow& r : rows) {
        std::snprintf(buf, sizeof(buf), "%d,%.17g,%.17g,%.17g\n", r.step, r.h, r.F, r.residual);
        out << buf;
    }
}

int numerical_rank(const Matrix& m) {
    if (m.size() == 0) return 0;
    const Vector s = Eigen::JacobiSVD<Matrix>(m).singularValues();
    const double tol = 1e-8 * std::max(s(0), kTiny);
    int r = 0;
    for (Index i = 0; i < s.size(); ++i)
        if (s(i) > tol) ++r;
    return r;
}

} // namespace

Variant variant_for_dimension(Index n) { return (n % 2 != 0) ? Variant::Odd : Variant::Even; }

FlowEval flow_eval(const DHPencil& p, const PerturbationTriple& pert, const FlowConfig& cfg,
                   const FlowEval* prev) {
    if (cfg.variant == Variant::Odd && p.n() % 2 == 0)
        throw EvenDimension("odd-variant flow on an even-dimensional pencil");
    if (cfg.variant == Variant::Even && p.n() % 2 != 0)
        throw OddDimension("even-variant flow on an odd-dimensional pencil");

    FlowEval ev;
    ev.ep = p.E.mat() + cfg.eps * pert.Delta;
    ev.rp = p.R.mat() + cfg.eps * pert.Theta;
    ev.data.odd = (p.n() % 2 != 0);

    ev.eig_E = sym_eig(ev.ep);
    ev.eig_R = sym_eig(ev.rp);

    const EigenData* prev_data = (prev != nullptr) ? &prev->data : nullptr;

    if (cfg.variant == Variant::Unified) {
        // Plain extremal pairs; the unified functional has no alignment terms.
        ev.win_E = {0};
        ev.win_R = {0};
        ev.data.lambda = ev.eig_E.w[0];
        ev.data.x = ev.eig_E.V.col(0);
        ev.data.nu = ev.eig_R.w[0];
        ev.data.u = ev.eig_R.V.col(0);
        ev.data.gap_E = ev.eig_E.w[1] - ev.eig_E.w[0];
        ev.data.gap_R = ev.eig_R.w[1] - ev.eig_R.w[0];
        if (prev_data != nullptr && prev_data->x.size() == ev.data.x.size()) {
            if (ev.data.x.dot(prev_data->x) < 0.0) ev.data.x = -ev.data.x;
            if (ev.data.u.dot(prev_data->u) < 0.0) ev.data.u = -ev.data.u;
        } else {
            sign_fix(ev.data.x);
            sign_fix(ev.data.u);
        }
        if (cfg.target == Target::Singularity) ev.jp = p.J.mat() + cfg.eps * pert.Gamma;
        ev.F = eval_selected_F(p, pert, cfg, ev);
        return ev;
    }

    select_pair(cfg, ev, prev_data);

    if (cfg.target == Target::Singularity) {
        ev.jp = p.J.mat() + cfg.eps * pert.Gamma;
        if (ev.data.odd) {
            ev.svd_J = real_svd(ev.jp);
            select_skew_odd(cfg, ev);
        } else {
            SkewPair sp = skew_smallest_imag_pair(ev.jp);
            ev.data.mu = sp.mu;
            ev.data.w_r = sp.w.real();
            ev.data.w_i = sp.w.imag();
            if (prev_data != nullptr && prev_data->w_r.size() == ev.data.w_r.size() &&
                prev_data->w_r.dot(ev.data.w_r) < 0.0) {
                ev.data.w_r = -ev.data.w_r;
                ev.data.w_i = -ev.data.w_i;
            }
        }
    }

    ev.F = eval_selected_F(p, pert, cfg, ev);
    return ev;
}

GradientTriple flow_gradient(const DHPencil& p, const PerturbationTriple& pert,
                             const FlowConfig& cfg, const FlowEval& ev) {
    const Index n = p.n();
    const EigenData& d = ev.data;

    if (cfg.variant == Variant::Unified)
        return assemble_gradient_unified(p, pert, cfg.eps, d, cfg.target).grad;
    if (!d.odd && cfg.target == Target::Singularity)
        return assemble_gradient_even(p, pert, cfg.eps, d);

    GradientTriple g;
    const double theta = d.x.dot(d.u);
    const double eta = (cfg.target == Target::Singularity) ? d.x.dot(d.w_r) : 0.0;

    Vector rhs_e = theta * d.u;
    if (cfg.target == Target::Singularity) rhs_e += eta * d.w_r;
    const Vector p_vec = apply_pinv_excluding(ev.eig_E, d.lambda, rhs_e, ev.win_E);
    const Vector q_vec = theta * apply_pinv_excluding(ev.eig_R, d.nu, d.x, ev.win_R);

    g.G_E = sym_part((d.lambda * d.x + p_vec) * d.x.transpose());
    g.G_R = sym_part((d.nu * d.u + q_vec) * d.u.transpose());

    // Optional alignment term 1/2 (1 - (u^T w)^2): u and w both move, adding
    // a Theta contribution and a second J term that pairs with w^T like the
    // eta one, so it folds into the shared pseudoinverse application below.
    const double s_uw =
        (cfg.extra_uw_term && d.odd && cfg.target == Target::Singularity) ? d.u.dot(d.w_r) : 0.0;
    if (s_uw != 0.0 && std::abs(s_uw) < 1.0) {
        g.G_R += s_uw * sym_part(apply_pinv_excluding(ev.eig_R, d.nu, d.w_r, ev.win_R) *
                                 d.u.transpose());
    }

    if (cfg.target == Target::Singularity) {
        // r = (J + eps Gamma)^+T (eta x + s_uw u), near-null singular values excluded.
        Vector rhs_j = eta * d.x;
        if (s_uw != 0.0 && std::abs(s_uw) < 1.0) rhs_j += s_uw * d.u;
        const Vector& sv = ev.svd_J.sigma;
        const double smax = std::max(sv[0], kTiny);
        Vector t = ev.svd_J.V.transpose() * rhs_j;
        for (Index i = 0; i < n; ++i) {
            const bool excl = std::find(ev.win_J.begin(), ev.win_J.end(), static_cast<int>(i)) !=
                              ev.win_J.end();
            t[i] = (excl || sv[i] <= kRankTol * smax) ? 0.0 : t[i] / sv[i];
        }
        const Vector r_vec = ev.svd_J.U * t;
        g.G_J = skew_part(r_vec * d.w_r.transpose());
    } else {
        g.G_J = Matrix::Zero(n, n);
    }

    g.rho = frobenius_inner(pert.Delta, g.G_E) + frobenius_inner(pert.Theta, g.G_R) +
            frobenius_inner(pert.Gamma, g.G_J);
    return g;
}

PerturbationTriple rhs(const DHPencil& p, const FlowState& state, const FlowConfig& cfg) {
    FlowEval ev = flow_eval(p, state.pert, cfg, nullptr);
    if (state.data.x.size() == p.n()) {
        // Re-evaluate with continuity alignment against the state's data.
        FlowEval aligned;
        aligned.data = state.data;
        ev = flow_eval(p, state.pert, cfg, &aligned);
    }
    return assemble_rhs(state.pert, cfg, flow_gradient(p, state.pert, cfg, ev));
}

namespace {

// Step acceptance shared by the public euler_step and the integrator:
// halves h until the renormalized Euler candidate decreases F.
struct StepResult {
    PerturbationTriple pert;
    FlowEval eval;
    double h_used = 0.0;
    int rejections = 0;
    bool accepted = false;
};

StepResult try_step(const DHPencil& p, const PerturbationTriple& pert, const FlowEval& cur,
                    const PerturbationTriple& dir, double h, const FlowConfig& cfg) {
    StepResult r;
    while (h >= cfg.h_min) {
        PerturbationTriple cand = add_scaled(pert, h, dir);
        const double nrm = cand.joint_norm();
        if (nrm > 0.0) {
            cand.scale(1.0 / nrm);
            FlowEval ce = flow_eval(p, cand, cfg, &cur);
            if (ce.F < cur.F) {
                r.pert = std::move(cand);
                r.eval = std::move(ce);
                r.h_used = h;
                r.accepted = true;
                return r;
            }
        }
        ++r.rejections;
        h *= 0.5;
    }
    return r;
}

} // namespace

FlowState euler_step(const DHPencil& p, const FlowState& state, const FlowConfig& cfg) {
    FlowEval aligned;
    aligned.data = state.data;
    const bool have_data = state.data.x.size() == p.n();
    FlowEval cur = flow_eval(p, state.pert, cfg, have_data ? &aligned : nullptr);
    const PerturbationTriple dir = assemble_rhs(state.pert, cfg, flow_gradient(p, state.pert, cfg, cur));

    StepResult sr = try_step(p, state.pert, cur, dir, state.h, cfg);
    if (!sr.accepted)
        throw StalledFlow("no F-decreasing Euler step above h_min at F = " + std::to_string(cur.F));

    FlowState next = state;
    next.pert = sr.pert;
    next.data = sr.eval.data;
    next.F = sr.eval.F;
    next.h = std::min(1.2 * sr.h_used, cfg.h_max);
    next.accepted = state.accepted + 1;
    next.rejected = state.rejected + sr.rejections;
    next.residual = dir.joint_norm();
    return next;
}

FlowState integrate_to_stationary(const DHPencil& p, const PerturbationTriple& init,
                                  const FlowConfig& cfg) {
    const Index n = p.n();
    FlowState st;
    st.pert = init;
    if (st.pert.Delta.size() == 0) st.pert = PerturbationTriple(n);

    if (st.pert.joint_norm() <= 0.0) {
        // Default initialization: normalized negative free gradient at 0.
        const PerturbationTriple zero(n);
        FlowEval e0 = flow_eval(p, zero, cfg, nullptr);
        GradientTriple g0 = flow_gradient(p, zero, cfg, e0);
        st.pert.Delta = -g0.G_E;
        st.pert.Theta = -g0.G_R;
        st.pert.Gamma =
            (cfg.target == Target::Instability) ? Matrix(Matrix::Zero(n, n)) : Matrix(-g0.G_J);
        if (cfg.sparsity != nullptr) {
            st.pert.Delta = cfg.sparsity->apply_E(st.pert.Delta);
            st.pert.Theta = cfg.sparsity->apply_R(st.pert.Theta);
            st.pert.Gamma = cfg.sparsity->apply_J(st.pert.Gamma);
        }
        if (st.pert.joint_norm() <= 0.0)
            throw DegenerateInput("zero free gradient: no default flow initialization");
    }
    st.pert.normalize();
    st.h = cfg.h0;

    FlowEval cur = flow_eval(p, st.pert, cfg, nullptr);
    st.F = cur.F;
    st.data = cur.data;

    std::vector<TraceRow> trace;
    int stall_count = 0;
    int slow_count = 0;

    for (int step = 0; step < cfg.max_steps; ++step) {
        const PerturbationTriple dir =
            assemble_rhs(st.pert, cfg, flow_gradient(p, st.pert, cfg, cur));
        st.residual = dir.joint_norm();
        if (step == 0) st.grad_norm0 = std::max(st.residual, kTiny);
        if (!cfg.trace_path.empty())
            trace.push_back({step, st.h, st.F, st.residual});

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

        StepResult sr = try_step(p, st.pert, cur, dir, st.h, cfg);
        if (!sr.accepted) {
            st.converged = false;
            st.stop_reason = "h_min";
            break;
        }

        const double rel_drop = (st.F - sr.eval.F) / std::max(st.F, kTiny);
        st.pert = sr.pert;
        cur = std::move(sr.eval);
        st.F = cur.F;
        st.data = cur.data;
        st.h = std::min(1.2 * sr.h_used, cfg.h_max);
        st.accepted += 1;
        st.rejected += sr.rejections;

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

    write_trace(cfg.trace_path, trace);
    st.F_strict = strict_functional_value(p, st.pert, cfg, &st.data);
    st.certificate = certificate_value(p, st.pert, cfg.eps, cfg.target);
    return st;
}

AlignmentReport stationarity_alignment_check(const DHPencil& p, const FlowState& state,
                                             const FlowConfig& cfg) {
    FlowEval aligned;
    aligned.data = state.data;
    const bool have_data = state.data.x.size() == p.n();
    FlowEval ev = flow_eval(p, state.pert, cfg, have_data ? &aligned : nullptr);
    GradientTriple g = flow_gradient(p, state.pert, cfg, ev);
    if (cfg.sparsity != nullptr) {
        g.G_E = cfg.sparsity->apply_E(g.G_E);
        g.G_R = cfg.sparsity->apply_R(g.G_R);
        g.G_J = cfg.sparsity->apply_J(g.G_J);
    }

    AlignmentReport rep;
    auto cos_angle = [](const Matrix& a, const Matrix& b) {
        const double na = a.norm(), nb = b.norm();
        if (na <= kTiny || nb <= kTiny) return 1.0;  // zero matrices align vacuously
        return std::abs(frobenius_inner(a, b)) / (na * nb);
    };
    rep.align_E = cos_angle(state.pert.Delta, g.G_E);
    rep.align_R = cos_angle(state.pert.Theta, g.G_R);
    rep.align_J = cos_angle(state.pert.Gamma, g.G_J);
    rep.rank_E = numerical_rank(state.pert.Delta);
    rep.rank_R = numerical_rank(state.pert.Theta);
    rep.rank_J = numerical_rank(state.pert.Gamma);
    const double tol = 1.0 - 1e-6;
    rep.pass = rep.align_E >= tol && rep.align_R >= tol && rep.align_J >= tol && rep.rank_E <= 2 &&
               rep.rank_R <= 2 && rep.rank_J <= 2;
    return rep;
}

double certificate_value(const DHPencil& p, const PerturbationTriple& pert, double eps,
                         Target target) {
    const Matrix ep = p.E.mat() + eps * pert.Delta;
    const Matrix rp = p.R.mat() + eps * pert.Theta;
    Matrix m = ep * ep + rp * rp;
    if (target == Target::Singularity) {
        const Matrix jp = p.J.mat() + eps * pert.Gamma;
        m += jp.transpose() * jp;
    }
    const SymEig em = sym_eig(sym_part(m));
    const double kernel_res = std::max(0.0, em.w[0]);
    const double neg_e = std::min(0.0, sym_eig_smallest(ep).value);
    const double neg_r = std::min(0.0, sym_eig_smallest(rp).value);
    return 0.5 * (kernel_res + neg_e * neg_e + neg_r * neg_r);
}

double strict_functional_value(const DHPencil& p, const PerturbationTriple& pert,
                               const FlowConfig& cfg, const EigenData* prev) {
    const EigenData d = extract_eigendata(p, pert, cfg.eps, prev, cfg.target);
    if (cfg.variant == Variant::Unified) return eval_F_unified(p, pert, cfg.eps, d);
    if (cfg.target == Target::Instability) return eval_F_instability(d);
    return d.odd ? eval_F_odd(d, cfg.extra_uw_term) : eval_F_even(d);
}

} // namespace dhdist
