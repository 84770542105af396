#include "dhdist/outer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <thread>

namespace dhdist {

namespace {

constexpr double kTiny = 1e-30;

// Deterministic Gaussian sampler (Box-Muller over the raw 64-bit stream, so
// results do not depend on the standard library's distribution internals).
class Gaussian {
  public:
    explicit Gaussian(std::uint64_t seed) : rng_(seed) {}
    double operator()() {
        if (have_) {
            have_ = false;
            return spare_;
        }
        double u1 = 0.0;
        while (u1 <= 0.0) u1 = uniform();
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double a = 2.0 * M_PI * u2;
        spare_ = r * std::sin(a);
        have_ = true;
        return r * std::cos(a);
    }
    Matrix matrix(Index n) {
        Matrix m(n, n);
        for (Index j = 0; j < n; ++j)
            for (Index i = 0; i < n; ++i) m(i, j) = (*this)();
        return m;
    }

  private:
    double uniform() { return static_cast<double>(rng_() >> 11) * 0x1.0p-53; }
    std::mt19937_64 rng_;
    double spare_ = 0.0;
    bool have_ = false;
};

PerturbationTriple random_triple(Index n, std::uint64_t seed, Target target) {
    Gaussian g(seed);
    PerturbationTriple t(n);
    t.Delta = sym_part(g.matrix(n));
    t.Theta = sym_part(g.matrix(n));
    t.Gamma = (target == Target::Instability) ? Matrix::Zero(n, n) : skew_part(g.matrix(n));
    t.normalize();
    return t;
}

struct RunOut {
    FlowState state;
    Rank2Triple triple;
    bool has_triple = false;
    double f = std::numeric_limits<double>::infinity();
};

RunOut run_inner(const DHPencil& p, const PerturbationTriple& init, const OuterConfig& cfg,
                 const FlowConfig& fc) {
    RunOut out;
    if (cfg.rank2) {
        Rank2Triple t0 = truncate_to_rank2(init);
        Rank2FlowResult r = integrate_rank2_to_stationary(p, t0, fc);
        out.state = std::move(r.state);
        out.triple = std::move(r.triple);
        out.has_triple = true;
    } else {
        out.state = integrate_to_stationary(p, init, fc);
    }
    out.f = std::max(out.state.F, out.state.certificate);
    return out;
}

FlowConfig inner_config(const DHPencil& p, double eps, const OuterConfig& cfg) {
    FlowConfig fc = cfg.inner;
    fc.eps = eps;
    fc.target = cfg.target;
    fc.variant = cfg.unified ? Variant::Unified : variant_for_dimension(p.n());
    fc.allow_slow_exit = true;
    fc.trace_path.clear();  // per-candidate traces would clobber each other
    return fc;
}

InnerSolveInfo info_of(double eps, const RunOut& r, const std::string& kind) {
    InnerSolveInfo info;
    info.eps = eps;
    info.f = r.f;
    info.f_functional = r.state.F;
    info.certificate = r.state.certificate;
    info.accepted_steps = r.state.accepted;
    info.stop_reason = r.state.stop_reason;
    info.init_kind = kind;
    return info;
}

} // namespace

PerturbationTriple analytic_initial_perturbation(const DHPencil& p, const Vector& u_star,
                                                 double eps, Target target) {
    const Index n = p.n();
    if (u_star.size() != n) throw InputError("analytic initialization: u_star has wrong size");
    Vector u = u_star / u_star.norm();

    PerturbationTriple t(n);
    t.Delta = psd_feasible_perturbation(p.E.mat(), u);
    t.Theta = psd_feasible_perturbation(p.R.mat(), u);
    if (target == Target::Singularity)
        t.Gamma = optimal_perturbation_from_u(p, u, target).Gamma;
    const double tn = t.joint_norm();

    if (tn <= kTiny) {
        // The pencil already annihilates u: any feasible filler works; spread
        // the mass over the complement of u inside Delta.
        t.Delta = sym_part(Matrix::Identity(n, n) - u * u.transpose());
        t.normalize();
        return t;
    }
    if (tn >= eps) {
        t.scale(1.0 / tn);
        return t;
    }

    // Overshoot case: eps exceeds the needed norm. Apply the construction
    // exactly (scale 1/eps) and fill the leftover Frobenius mass into
    // positive-eigenvalue directions of the annihilated E, which preserves
    // both the kernel and positive semidefiniteness.
    const Matrix me = p.E.mat() + t.Delta;
    t.scale(1.0 / eps);
    const double beta = tn / eps;
    const double fill = std::sqrt(std::max(0.0, 1.0 - beta * beta));

    SymEig e = sym_eig(me);
    const double wmax = std::max(std::abs(e.w[n - 1]), kTiny);
    std::vector<Index> pos;
    for (Index i = 0; i < n; ++i)
        if (e.w[i] > 1e-12 * wmax) pos.push_back(i);

    Matrix filler = Matrix::Zero(n, n);
    if (pos.empty()) {
        filler = Matrix::Identity(n, n) - u * u.transpose();
        filler /= std::max(filler.norm(), kTiny);
    } else {
        for (Index i : pos) filler += e.V.col(i) * e.V.col(i).transpose();
        filler /= std::sqrt(static_cast<double>(pos.size()));
    }
    t.Delta += fill * sym_part(filler);
    t.enforce_structure();
    t.normalize();
    return t;
}

PerturbationTriple analytic_initial_perturbation_rank2(const DHPencil& p, const Vector& u_star,
                                                       double eps, Target target) {
    const Index n = p.n();
    if (u_star.size() != n)
        throw InputError("analytic initialization: u_star has wrong size");
    const Vector u = u_star / u_star.norm();

    Rank2Feasible r2 = rank2_feasible_perturbation(p, u, target);
    PerturbationTriple t =
        r2.feasible ? r2.T : optimal_perturbation_from_u(p, u, target);
    const double tn = t.joint_norm();

    if (tn <= kTiny) {
        // Already annihilating: a rank-1 PSD filler orthogonal to u.
        const Matrix proj = Matrix::Identity(n, n) - u * u.transpose();
        Matrix deflated = sym_part(proj * p.E.mat() * proj);
        SymEig e = sym_eig(deflated);
        const Vector v = e.V.col(n - 1);
        t.Delta = v * v.transpose();
        t.enforce_structure();
        t.normalize();
        return t;
    }
    if (tn >= eps || !r2.feasible) {
        t.scale(1.0 / tn);
        return t;
    }

    // Pad the E member in-plane so the joint norm reaches eps exactly while
    // the member stays rank <= 2, PSD-preserving, and annihilating.
    const Matrix proj = Matrix::Identity(n, n) - u * u.transpose();
    const Vector a = proj * (p.E.mat() * u);
    Vector v;
    if (a.norm() > 1e-12 * std::max(1.0, p.E.mat().norm())) {
        v = a.normalized();
    } else {
        Matrix deflated = sym_part(proj * (p.E.mat() + t.Delta) * proj);
        SymEig e = sym_eig(deflated);
        v = e.V.col(n - 1);
    }
    const double c = v.dot(t.Delta * v);
    const double gamma =
        -c + std::sqrt(std::max(0.0, c * c + eps * eps - tn * tn));
    t.Delta += gamma * (v * v.transpose());
    t.enforce_structure();
    t.scale(1.0 / eps);
    return t;
}

FOfEpsResult f_of_eps(const DHPencil& p, double eps, const PerturbationTriple* warm,
                      const Vector& u_star, const OuterConfig& cfg, int restarts) {
    const FlowConfig fc = inner_config(p, eps, cfg);
    FOfEpsResult out;
    out.f = std::numeric_limits<double>::infinity();

    auto keep_best = [&](const RunOut& r, const std::string& kind) {
        out.tried.push_back(info_of(eps, r, kind));
        if (r.f < out.f) {
            out.f = r.f;
            out.state = r.state;
            if (r.has_triple) out.triple = r.triple;
        }
    };

    // 1. Analytic initialization from the formula minimizer; the rank-2 path
    //    gets the in-plane variant so the construction survives truncation.
    {
        const PerturbationTriple init =
            cfg.rank2 ? analytic_initial_perturbation_rank2(p, u_star, eps, cfg.target)
                      : analytic_initial_perturbation(p, u_star, eps, cfg.target);
        keep_best(run_inner(p, init, cfg, fc), "analytic");
        if (out.f <= cfg.tol) return out;
    }
    // 2. Warm start from a neighboring eps.
    if (warm != nullptr && warm->Delta.size() > 0 && warm->joint_norm() > 0.0) {
        keep_best(run_inner(p, *warm, cfg, fc), "warm");
        if (out.f <= cfg.tol) return out;
    }
    // 3. Random restarts (first eps only, possibly threaded).
    const int r = std::max(0, restarts);
    const int workers = std::max(1, cfg.threads);
    for (int base = 0; base < r && out.f > cfg.tol; base += workers) {
        const int batch = std::min(workers, r - base);
        std::vector<RunOut> results(static_cast<size_t>(batch));
        if (batch == 1) {
            results[0] = run_inner(
                p, random_triple(p.n(), cfg.seed + 1 + static_cast<std::uint64_t>(base), cfg.target),
                cfg, fc);
        } else {
            std::vector<std::thread> pool;
            pool.reserve(static_cast<size_t>(batch));
            for (int k = 0; k < batch; ++k) {
                pool.emplace_back([&, k] {
                    results[static_cast<size_t>(k)] = run_inner(
                        p,
                        random_triple(p.n(), cfg.seed + 1 + static_cast<std::uint64_t>(base + k),
                                      cfg.target),
                        cfg, fc);
                });
            }
            for (std::thread& th : pool) th.join();
        }
        for (int k = 0; k < batch; ++k)
            keep_best(results[static_cast<size_t>(k)], "restart-" + std::to_string(base + k));
    }
    return out;
}

Vector extract_null_vector(const DHPencil& p, double eps, const PerturbationTriple& pert,
                           Target target, Vector* residuals) {
    const Matrix ep = p.E.mat() + eps * pert.Delta;
    const Matrix rp = p.R.mat() + eps * pert.Theta;
    Matrix m = ep * ep + rp * rp;
    Matrix jp;
    if (target == Target::Singularity) {
        jp = p.J.mat() + eps * pert.Gamma;
        m += jp.transpose() * jp;
    }
    const Vector c = sym_eig_smallest(sym_part(m)).vector;
    if (residuals != nullptr) {
        residuals->resize(3);
        (*residuals)[0] = (ep * c).norm();
        (*residuals)[1] = (rp * c).norm();
        (*residuals)[2] = (target == Target::Singularity) ? (jp * c).norm() : 0.0;
    }
    return c;
}

DistanceResult bisection_distance(const DHPencil& p, const OuterConfig& cfg) {
    DistanceResult res;
    const auto bounds = (cfg.target == Target::Singularity) ? singularity_bounds(p)
                                                            : instability_bounds(p);
    res.theorem_lower = bounds.first;
    res.theorem_upper = bounds.second;

    // Sphere minimizer of the feasibility-aware distance formula; drives the
    // analytic initialization at every eps. The rank-2 variant minimizes the
    // rank-2-representable value instead (the lift direction is constrained).
    const SphereMin sm = cfg.rank2 ? rank2_feasible_minimize(p, cfg.target, 2, cfg.seed)
                                   : feasible_formula_minimize(p, cfg.target, 2, cfg.seed);
    const Vector& u_star = sm.u_star;

    auto record = [&](const FOfEpsResult& r, double eps) {
        res.f_samples.emplace_back(eps, r.f);
        for (const InnerSolveInfo& i : r.tried) res.diagnostics.push_back(i);
        res.inner_solves += static_cast<int>(r.tried.size());
    };

    auto finish = [&](double lb, double ub, const FOfEpsResult& ub_state) {
        res.eps_lb = lb;
        res.eps_ub = ub;
        res.eps_star = ub;
        res.pert_star = ub_state.state.pert;
        res.f_at_ub = ub_state.f;
        res.certificate = ub_state.state.certificate;
        res.has_rank2 = cfg.rank2;
        if (cfg.rank2) res.triple_star = ub_state.triple;
        Vector r3;
        res.null_vector = extract_null_vector(p, res.eps_star, res.pert_star, cfg.target, &r3);
        res.residual_E = r3[0];
        res.residual_R = r3[1];
        res.residual_J = r3[2];
        std::sort(res.f_samples.begin(), res.f_samples.end());
        return res;
    };

    // First eps: the theoretical lower bound, with random restarts.
    double lb = bounds.first;
    FOfEpsResult r_lb = f_of_eps(p, lb, nullptr, u_star, cfg, cfg.restarts);
    record(r_lb, lb);
    if (r_lb.f <= cfg.tol) {
        // The distance is attained exactly at the lower bound.
        res.converged = true;
        return finish(lb, lb, r_lb);
    }

    // Upper end, expanded by doubling if needed.
    double ub = std::max(bounds.second, lb * (1.0 + 1e-12));
    if (ub <= 0.0) {
        // Degenerate bounds (near-singular input): start the expansion from a
        // small fraction of the pencil's scale.
        const double scale = std::sqrt(p.E.mat().squaredNorm() + p.R.mat().squaredNorm() +
                                       p.J.mat().squaredNorm());
        ub = 1e-4 * std::max(scale, 1.0);
    }
    FOfEpsResult r_ub = f_of_eps(p, ub, &r_lb.state.pert, u_star, cfg, 0);
    record(r_ub, ub);
    int expansions = 0;
    while (r_ub.f > cfg.tol && expansions < cfg.expansion_cap) {
        lb = ub;
        r_lb = r_ub;
        ub *= 2.0;
        r_ub = f_of_eps(p, ub, &r_lb.state.pert, u_star, cfg, 0);
        record(r_ub, ub);
        ++expansions;
    }
    if (r_ub.f > cfg.tol)
        throw NoUpperBracket("no eps with f(eps) <= tol after " +
                             std::to_string(cfg.expansion_cap) + " doublings");

    // Classic bisection: the upper state is the singular-branch minimizer and
    // serves as the warm start for every midpoint solve.
    int k = 0;
    while ((ub - lb) > cfg.tol_eps * ub && k < cfg.k_max) {
        const double mid = 0.5 * (lb + ub);
        FOfEpsResult r_mid = f_of_eps(p, mid, &r_ub.state.pert, u_star, cfg, 0);
        record(r_mid, mid);
        if (r_mid.f <= cfg.tol) {
            ub = mid;
            r_ub = r_mid;
        } else {
            lb = mid;
            r_lb = r_mid;
        }
        ++k;
    }
    res.bisection_iterations = k;
    res.converged = (ub - lb) <= cfg.tol_eps * ub;
    return finish(lb, ub, r_ub);
}

std::vector<std::pair<double, double>> f_curve(const DHPencil& p, const std::vector<double>& grid,
                                               const OuterConfig& cfg) {
    if (grid.empty()) throw InputError("f_curve: empty eps grid");
    std::vector<double> eps_grid = grid;
    std::sort(eps_grid.begin(), eps_grid.end());

    const SphereMin sm = cfg.rank2 ? rank2_feasible_minimize(p, cfg.target, 2, cfg.seed)
                                   : feasible_formula_minimize(p, cfg.target, 2, cfg.seed);
    std::vector<std::pair<double, double>> samples;
    samples.reserve(eps_grid.size());

    const PerturbationTriple* warm = nullptr;
    PerturbationTriple warm_store;
    bool first = true;
    for (double eps : eps_grid) {
        FOfEpsResult r = f_of_eps(p, eps, warm, sm.u_star, cfg, first ? cfg.restarts : 0);
        samples.emplace_back(eps, r.f);
        warm_store = r.state.pert;
        warm = &warm_store;
        first = false;
    }
    return samples;
}

} // namespace dhdist
