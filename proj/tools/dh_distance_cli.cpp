#include <chrono>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <iostream>
#include <string>
#include <thread>

#include <CLI11.hpp>

#include "dhdist/io.hpp"

namespace {

using namespace dhdist;

std::string iso_timestamp() {
    const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm_utc{};
    gmtime_r(&now, &tm_utc);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%FT%TZ", &tm_utc);
    return buf;
}

int thread_cap() {
    const unsigned hc = std::thread::hardware_concurrency();
    int cap = hc > 0 ? static_cast<int>(hc) : 1;
    if (const char* env = std::getenv("DH_DISTANCE_THREADS")) {
        const int v = std::atoi(env);
        if (v >= 1) cap = std::min(cap, v);
    }
    return cap;
}

void emit(const std::string& text, const std::string& path) {
    if (path.empty()) {
        std::cout << text << "\n";
        return;
    }
    std::ofstream out(path);
    if (!out) throw InputError("cannot open '" + path + "' for writing");
    out << text << "\n";
}

struct PencilFiles {
    std::string e, j, r;
};

// Reads the three files and checks exact structural symmetry before the
// (bitwise no-op) structure projection.
DHPencil load_pencil(const PencilFiles& f, bool check_structure) {
    const Matrix me = read_matrix_market(f.e);
    const Matrix mj = read_matrix_market(f.j);
    const Matrix mr = read_matrix_market(f.r);
    if (me.rows() != mj.rows() || me.rows() != mr.rows())
        throw InputError("pencil matrices have mismatched dimensions");
    if (check_structure) {
        const double te = 1e-12 * std::max(1.0, me.norm());
        const double tj = 1e-12 * std::max(1.0, mj.norm());
        const double tr = 1e-12 * std::max(1.0, mr.norm());
        if ((me - me.transpose()).norm() > te)
            throw InputError(f.e + ": E is not symmetric");
        if ((mj + mj.transpose()).norm() > tj)
            throw InputError(f.j + ": J is not skew-symmetric");
        if ((mr - mr.transpose()).norm() > tr)
            throw InputError(f.r + ": R is not symmetric");
    }
    return DHPencil(SymMatrix::project(me), SkewMatrix::project(mj), SymMatrix::project(mr));
}

void psd_gate(const DHPencil& p, bool strict) {
    const ValidationReport rep = validate(p);
    if (!rep.psd_ok_E || !rep.psd_ok_R) {
        const std::string msg = std::string("warning: pencil is not positive semidefinite (") +
                                "min eig E = " + std::to_string(rep.min_eig_E) +
                                ", min eig R = " + std::to_string(rep.min_eig_R) + ")";
        if (strict) throw InputError(msg + " and --strict-psd is set");
        std::cerr << msg << "\n";
    }
}

Target parse_target(const std::string& s) {
    if (s == "sing" || s == "singularity") return Target::Singularity;
    if (s == "inst" || s == "instability") return Target::Instability;
    throw InputError("unknown target '" + s + "' (expected sing|inst)");
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{
        "Structured distances to singularity and instability for "
        "dissipative-Hamiltonian pencils  lambda*E - (J - R)"};
    app.require_subcommand(1);

    PencilFiles files;
    std::string target_s = "sing";
    std::string variant_s = "full";
    std::string functional_s = "standard";
    std::string out_path, curve_path, trace_path;
    double tol = 1e-8, tol_eps = 1e-5, h0 = 0.1, tie_window = 1e-3;
    int k_max = 60, restarts = 3, max_steps = 2000;
    std::uint64_t seed = 20250817ULL;
    bool no_validate = false, strict_psd = false, extra_uw = false;

    auto add_pencil_opts = [&](CLI::App* cmd) {
        cmd->add_option("-E,--matrix-e", files.e, "Matrix Market file for E")->required();
        cmd->add_option("-J,--matrix-j", files.j, "Matrix Market file for J")->required();
        cmd->add_option("-R,--matrix-r", files.r, "Matrix Market file for R")->required();
        cmd->add_flag("--no-validate", no_validate, "skip structural/PSD validation");
        cmd->add_flag("--strict-psd", strict_psd, "treat PSD violations as input errors");
    };
    auto add_solver_opts = [&](CLI::App* cmd) {
        cmd->add_option("--target", target_s, "distance target: sing|inst (default sing)");
        cmd->add_option("--variant", variant_s, "inner flow: full|rank2 (default full)");
        cmd->add_option("--functional", functional_s,
                        "inner functional: standard|unified (default standard)");
        cmd->add_option("--tol", tol, "absolute tolerance for f(eps)=0 (default 1e-8)");
        cmd->add_option("--tol-eps", tol_eps,
                        "bracket width tolerance, relative to eps_ub (default 1e-5)");
        cmd->add_option("--kmax", k_max, "max bisection iterations (default 60)");
        cmd->add_option("--restarts", restarts, "random restarts at the first eps (default 3)");
        cmd->add_option("--seed", seed, "random seed (default 20250817)");
        cmd->add_option("--max-steps", max_steps, "max inner flow steps (default 2000)");
        cmd->add_option("--h0", h0, "initial flow step size (default 0.1)");
        cmd->add_option("--tie-window", tie_window,
                        "relative eigenvalue tie window of the inner flow (default 1e-3)");
        cmd->add_flag("--extra-uw-term", extra_uw,
                      "add the optional 1-(u^T w)^2 alignment term (odd case)");
    };

    CLI::App* c_validate = app.add_subcommand("validate", "structural/PSD/regularity report");
    add_pencil_opts(c_validate);
    c_validate->add_option("-o,--output", out_path, "write the JSON report to this file");

    CLI::App* c_bounds = app.add_subcommand("bounds", "two-sided distance bounds per target");
    add_pencil_opts(c_bounds);
    c_bounds->add_option("--target", target_s, "distance target: sing|inst (default sing)");
    c_bounds->add_option("-o,--output", out_path, "write the JSON bounds to this file");

    CLI::App* c_distance = app.add_subcommand("distance", "structured distance via bisection");
    add_pencil_opts(c_distance);
    add_solver_opts(c_distance);
    c_distance->add_option("-o,--output", out_path, "write the JSON result to this file");
    c_distance->add_option("--curve", curve_path,
                           "write the bisection samples (epsilon,f_value CSV) to this file");
    c_distance->add_option("--trace", trace_path,
                           "write a per-step flow trace (step,h,F,residual CSV) at eps_star");

    CLI::App* c_curve = app.add_subcommand("curve", "sample f(eps) over a uniform grid");
    add_pencil_opts(c_curve);
    add_solver_opts(c_curve);
    double eps_min = 0.0, eps_max = 0.0;
    int grid_steps = 0;
    c_curve->add_option("--eps-min", eps_min, "grid start")->required();
    c_curve->add_option("--eps-max", eps_max, "grid end")->required();
    c_curve->add_option("--steps", grid_steps, "number of grid points (>= 1)")->required();
    c_curve->add_option("-o,--output", out_path, "write the CSV to this file");

    CLI::App* c_generate = app.add_subcommand("generate", "write a generated pencil to files");
    std::string model = "random", prefix = "pencil";
    Index gen_n = 5, gen_masses = 20, gen_constraints = 0;
    double gamma = 0.1;
    c_generate->add_option("--model", model, "random|msd (default random)");
    c_generate->add_option("--n", gen_n, "dimension (random model, default 5)");
    c_generate->add_option("--seed", seed, "random seed");
    c_generate->add_option("--masses", gen_masses, "number of masses N (msd model, default 20)");
    c_generate->add_option("--constraints", gen_constraints,
                           "number of constraints m (msd model, default N+1)");
    c_generate->add_option("--gamma", gamma, "constraint damping gamma (msd model, default 0.1)");
    c_generate->add_option("--prefix", prefix, "output path prefix (default ./pencil)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (c_generate->parsed()) {
            const Index m_eff = gen_constraints > 0 ? gen_constraints : gen_masses + 1;
            DHPencil p = (model == "msd")
                             ? gen_mass_spring_damper(gen_masses, m_eff, gamma)
                             : gen_random_dh(gen_n, seed);
            const std::string pe = prefix + "_E.mtx";
            const std::string pj = prefix + "_J.mtx";
            const std::string pr = prefix + "_R.mtx";
            write_pencil(p, pe, pj, pr);
            nlohmann::json j;
            j["schema"] = "dh-distance/1";
            j["kind"] = "generate";
            j["model"] = model;
            j["n"] = p.n();
            j["files"] = {pe, pj, pr};
            emit(j.dump(2), out_path);
            return 0;
        }

        if (c_validate->parsed()) {
            const DHPencil p = load_pencil(files, true);
            const ValidationReport rep = validate(p);
            emit(validation_report_json(rep, iso_timestamp()).dump(2), out_path);
            return 0;
        }

        if (c_bounds->parsed()) {
            const DHPencil p = load_pencil(files, !no_validate);
            if (!no_validate) psd_gate(p, strict_psd);
            emit(bounds_json(p, iso_timestamp()).dump(2), out_path);
            return 0;
        }

        OuterConfig cfg;
        cfg.target = parse_target(target_s);
        cfg.rank2 = (variant_s == "rank2");
        if (!cfg.rank2 && variant_s != "full")
            throw InputError("unknown variant '" + variant_s + "' (expected full|rank2)");
        cfg.unified = (functional_s == "unified");
        if (!cfg.unified && functional_s != "standard")
            throw InputError("unknown functional '" + functional_s +
                             "' (expected standard|unified)");
        cfg.tol = tol;
        cfg.tol_eps = tol_eps;
        cfg.k_max = k_max;
        cfg.restarts = restarts;
        cfg.seed = seed;
        cfg.threads = thread_cap();
        cfg.inner.h0 = h0;
        cfg.inner.max_steps = max_steps;
        cfg.inner.tie_window = tie_window;
        cfg.inner.extra_uw_term = extra_uw;

        if (c_distance->parsed()) {
            const DHPencil p = load_pencil(files, !no_validate);
            if (!no_validate) psd_gate(p, strict_psd);
            DistanceResult res = bisection_distance(p, cfg);
            emit(distance_result_json(res, cfg, iso_timestamp()).dump(2), out_path);
            if (!curve_path.empty()) emit(curve_csv(res.f_samples), curve_path);
            if (!trace_path.empty()) {
                // Diagnostic rerun at eps_star from the analytic initialization.
                FlowConfig fc = cfg.inner;
                fc.eps = res.eps_star;
                fc.target = cfg.target;
                fc.variant =
                    cfg.unified ? Variant::Unified : variant_for_dimension(p.n());
                fc.trace_path = trace_path;
                const SphereMin sm = feasible_formula_minimize(p, cfg.target, 2, cfg.seed);
                const PerturbationTriple init =
                    analytic_initial_perturbation(p, sm.u_star, res.eps_star, cfg.target);
                if (cfg.rank2)
                    integrate_rank2_to_stationary(p, truncate_to_rank2(init), fc);
                else
                    integrate_to_stationary(p, init, fc);
            }
            return 0;
        }

        if (c_curve->parsed()) {
            if (grid_steps < 1) throw InputError("curve: --steps must be >= 1");
            if (eps_max < eps_min) throw InputError("curve: eps_max must be >= eps_min");
            const DHPencil p = load_pencil(files, !no_validate);
            if (!no_validate) psd_gate(p, strict_psd);
            std::vector<double> grid;
            grid.reserve(static_cast<size_t>(grid_steps));
            if (grid_steps == 1) {
                grid.push_back(eps_min);
            } else {
                for (int i = 0; i < grid_steps; ++i)
                    grid.push_back(eps_min + (eps_max - eps_min) * i / (grid_steps - 1));
            }
            const auto samples = f_curve(p, grid, cfg);
            emit(curve_csv(samples), out_path);
            return 0;
        }
    } catch (const InputError& e) {
        std::cerr << "input error: " << e.what() << "\n";
        return 2;
    } catch (const NoUpperBracket& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return 1;
    } catch (const StalledFlow& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return 1;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
