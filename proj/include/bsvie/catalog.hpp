#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "bsvie/bsvie_solver.hpp"
#include "bsvie/fbsde_bridge.hpp"
#include "bsvie/io.hpp"
#include "bsvie/path_dependent.hpp"

namespace bsvie {

enum class ScenarioKind { type1, type2, path_dependent, fbsde };

inline const char* to_string(ScenarioKind k) {
    switch (k) {
        case ScenarioKind::type1: return "type1";
        case ScenarioKind::type2: return "type2";
        case ScenarioKind::path_dependent: return "pathdep";
        case ScenarioKind::fbsde: return "fbsde";
    }
    return "?";
}

struct Scenario {
    std::string id;
    std::string description;
    ScenarioKind kind = ScenarioKind::type1;
    double T = 1.0;
    double kappa = 0.0;
    std::function<PathProcess(const BrownianEnsemble&)> psi;
    GeneratorSpec generator;
    PathGeneratorSpec path_generator;
    std::optional<FbsdeSpec> fbsde;
    // Closed-form solution where one exists: Y(t) as a function of (t, W(t)) and the
    // deterministic Z(t, s) on s > t.
    std::function<double(double t, double w)> exact_Y;
    std::function<double(double t, double s)> exact_Z;
};

inline std::vector<std::string> catalog_ids() {
    return {"example-1.1", "example-4.2", "linear-zhat", "fbsde-sin", "adapted-linear"};
}

// Auxiliary scenarios outside the frozen catalog, used as trivial references.
inline std::vector<std::string> auxiliary_ids() { return {"zero"}; }

namespace detail {

inline PathProcess psi_from(const BrownianEnsemble& ens, const std::function<double(double t, double w_t, double w_T)>& f) {
    PathProcess out(ens.grid(), ens.n_paths());
    const double* wT = ens.W_node(ens.n_steps());
    for (int i = 0; i <= ens.n_steps(); ++i) {
        const double t = ens.grid().node(i);
        const double* wt = ens.W_node(i);
        for (int p = 0; p < ens.n_paths(); ++p) out.node(i)[p] = f(t, wt[p], wT[p]);
    }
    return out;
}

}  // namespace detail

// Builds a catalogued scenario. Recognised overrides: T (all but example-4.2), kappa
// (linear-zhat, fbsde-sin), and x0 and xi in {sin, tanh, clip} (fbsde-sin).
inline Scenario make_scenario(const std::string& id, const io::KeyValueConfig& overrides = {}) {
    Scenario s;
    s.id = id;
    if (id == "example-1.1") {
        s.T = overrides.number("T", 1.0);
        s.kind = ScenarioKind::type1;
        s.description = "Y(t) = int_t^T W(T) ds - int_t^T Z(t,s) dW(s): anticipating generator W(T)";
        const double T = s.T;
        s.psi = [](const BrownianEnsemble& e) { return PathProcess(e.grid(), e.n_paths()); };
        GeneratorSpec& g = s.generator;
        g.id = id;
        g.measurability = Measurability::anticipating;
        g.profile = LipschitzProfile::constants(T, 0, 0, 0, 0, 0, 0);
        g.eval = [](const BrownianEnsemble& e, const SliceArgs&, double* o) {
            const double* w = e.W_node(e.n_steps());
            std::copy(w, w + e.n_paths(), o);
        };
        g.exact_g1 = [](const BrownianEnsemble& e, const SliceArgs& a, double* o) {
            const double* w = e.W_node(a.s_index);
            std::copy(w, w + e.n_paths(), o);
        };
        s.exact_Y = [T](double t, double w) { return w * (T - t); };
        s.exact_Z = [T](double t, double) { return T - t; };
    } else if (id == "example-4.2") {
        if (overrides.has("T")) throw InvalidArgument("example-4.2 is defined on [0,2] only");
        s.T = 2.0;
        s.kind = ScenarioKind::path_dependent;
        s.description = "Y(t) = W(2) + int_t^2 Y((s+1) ^ 2) ds - int_t^2 Z(t,s) dW(s)";
        s.psi = [](const BrownianEnsemble& e) {
            return detail::psi_from(e, [](double, double, double wT) { return wT; });
        };
        PathGeneratorSpec& g = s.path_generator;
        g.id = id;
        g.L = 1.0;
        g.rho = "rho(d) = d";
        g.xi = "|W(2)|";
        g.eval = [](const BrownianEnsemble& e, int, int k, const PathSegment& y, double* o) {
            const int shift = static_cast<int>(std::lround(1.0 / e.dt()));
            if (std::abs(shift * e.dt() - 1.0) > 1e-9)
                throw InvalidArgument("example-4.2 needs a grid on which s + 1 is a node");
            const int j = std::min(k + shift, e.n_steps());
            const double* v = y.node(j);
            std::copy(v, v + e.n_paths(), o);
        };
        s.exact_Y = [](double t, double w) { return t >= 1.0 ? (3.0 - t) * w : w * (3.5 - 2.0 * t + 0.5 * t * t); };
        s.exact_Z = [](double t, double) { return t >= 1.0 ? 3.0 - t : 3.5 - 2.0 * t + 0.5 * t * t; };
    } else if (id == "linear-zhat") {
        s.T = overrides.number("T", 1.0);
        s.kappa = overrides.number("kappa", 0.2);
        s.kind = ScenarioKind::type2;
        s.description = "Y(t) = W(T) + int_t^T kappa Z(s,t) ds - int_t^T Z(t,s) dW(s)";
        const double T = s.T, kappa = s.kappa;
        s.psi = [](const BrownianEnsemble& e) {
            return detail::psi_from(e, [](double, double, double wT) { return wT; });
        };
        GeneratorSpec& g = s.generator;
        g.id = id;
        g.uses_zhat = true;
        g.measurability = Measurability::adapted;
        g.profile = LipschitzProfile::constants(T, 0, 0, 0, 0, 0, std::abs(kappa));
        g.eval = [kappa](const BrownianEnsemble& e, const SliceArgs& a, double* o) {
            for (int p = 0; p < e.n_paths(); ++p) o[p] = a.zhat ? kappa * a.zhat[p] : 0.0;
        };
        // Y(t) = W(t) + kappa (T - t), Z = 1 on the whole square.
        s.exact_Y = [T, kappa](double t, double w) { return w + kappa * (T - t); };
        s.exact_Z = [](double, double) { return 1.0; };
    } else if (id == "fbsde-sin") {
        s.T = overrides.number("T", 1.0);
        s.kappa = overrides.number("kappa", 0.1);
        s.kind = ScenarioKind::fbsde;
        s.description = "X^t = 1 + int kappa Z^t dr, Y^t(T) = sin(W(T)) X^t(T), g^t = 0";
        const double kappa = s.kappa;
        const double x0 = overrides.number("x0", 1.0);
        const std::string xi_kind = overrides.get("xi", "sin");
        if (xi_kind != "sin" && xi_kind != "tanh" && xi_kind != "clip")
            throw InvalidArgument("fbsde-sin: xi must be sin, tanh or clip");
        FbsdeSpec f;
        f.id = id;
        f.x = [x0](const BrownianEnsemble& e, int, double* o) { std::fill(o, o + e.n_paths(), x0); };
        f.xi = [xi_kind](const BrownianEnsemble& e, int, double* o) {
            const double* w = e.W_node(e.n_steps());
            for (int p = 0; p < e.n_paths(); ++p)
                o[p] = xi_kind == "sin" ? std::sin(w[p]) : xi_kind == "tanh" ? std::tanh(w[p]) : std::clamp(w[p], -1.0, 1.0);
        };
        f.xi_bound = 1.0;
        f.b = [kappa](double, double, double, double z) { return kappa * z; };
        f.L_b = std::abs(kappa);
        s.fbsde = f;
    } else if (id == "adapted-linear") {
        s.T = overrides.number("T", 1.0);
        s.kind = ScenarioKind::type1;
        s.description = "Y(t) = W(t) + 1 - int_t^T Y(s) ds - int_t^T Z(t,s) dW(s)";
        const double T = s.T;
        s.psi = [](const BrownianEnsemble& e) {
            return detail::psi_from(e, [](double, double wt, double) { return wt + 1.0; });
        };
        GeneratorSpec& g = s.generator;
        g.id = id;
        g.uses_y = true;
        g.measurability = Measurability::adapted;
        g.profile = LipschitzProfile::constants(T, 0, 0, 0, 1.0, 0, 0);
        g.eval = [](const BrownianEnsemble& e, const SliceArgs& a, double* o) {
            for (int p = 0; p < e.n_paths(); ++p) o[p] = a.y ? -a.y[p] : 0.0;
        };
        s.exact_Y = [T](double t, double w) { return std::exp(t - T) * (w + 1.0); };
        s.exact_Z = [T](double, double sv) { return std::exp(sv - T) - 1.0; };
    } else if (id == "zero") {
        s.T = overrides.number("T", 1.0);
        s.kind = ScenarioKind::type1;
        s.description = "Y(t) = 0 - int_t^T Z(t,s) dW(s): trivial reference";
        s.psi = [](const BrownianEnsemble& e) { return PathProcess(e.grid(), e.n_paths()); };
        s.generator.id = id;
        s.generator.profile = LipschitzProfile::constants(s.T, 0, 0, 0, 0, 0, 0);
        s.generator.eval = [](const BrownianEnsemble& e, const SliceArgs&, double* o) {
            std::fill(o, o + e.n_paths(), 0.0);
        };
        s.exact_Y = [](double, double) { return 0.0; };
        s.exact_Z = [](double, double) { return 0.0; };
    } else {
        std::string known;
        for (const auto& k : catalog_ids()) known += (known.empty() ? "" : ", ") + k;
        throw InvalidArgument("unknown generator id '" + id + "'; catalog: " + known);
    }
    return s;
}

// ---------------------------------------------------------------------------
// Error measures against closed forms
// ---------------------------------------------------------------------------

struct ExactErrors {
    double rmse_Y = 0.0;
    double rmse_Z = 0.0;
};

// RMSE over grid nodes [first_row, n] (Y) and over the triangle s_k >= t_i (Z), averaged
// over paths.
inline ExactErrors exact_errors(const Scenario& sc, const BsvieSolution& sol, const BrownianEnsemble& ens,
                                int first_row = 0) {
    ExactErrors e;
    if (!sc.exact_Y) return e;
    const int n = ens.n_steps();
    const int P = ens.n_paths();
    const TimeGrid& g = ens.grid();
    double sy = 0.0, sz = 0.0;
    long long cy = 0, cz = 0;
    for (int i = first_row; i <= n; ++i) {
        const double t = g.node(i);
        const double* w = ens.W_node(i);
        for (int p = 0; p < P; ++p) {
            const double d = sol.Y.node(i)[p] - sc.exact_Y(t, w[p]);
            sy += d * d;
        }
        cy += P;
        if (!sol.has_field) continue;
        for (int k = i; k < n; ++k) {
            const double ez = sc.exact_Z(t, g.node(k));
            const double* z = sol.Z.slice(i, k);
            for (int p = 0; p < P; ++p) sz += (z[p] - ez) * (z[p] - ez);
            cz += P;
        }
    }
    e.rmse_Y = std::sqrt(sy / cy);
    e.rmse_Z = cz ? std::sqrt(sz / cz) : 0.0;
    return e;
}

// RMS over paths and nodes of Y_fine - Y_coarse at the coarse nodes; the two solutions
// must live on the same Brownian paths with fine steps = factor * coarse steps.
inline double ladder_difference(const PathProcess& fine, const PathProcess& coarse, int first_coarse_node = 0) {
    const int nf = fine.grid().n_steps, nc = coarse.grid().n_steps;
    if (nf % nc != 0 || fine.n_paths() < coarse.n_paths())
        throw InvalidArgument("ladder_difference: grids are not nested");
    const int f = nf / nc;
    const int P = coarse.n_paths();
    double s = 0.0;
    long long c = 0;
    for (int j = first_coarse_node; j <= nc; ++j) {
        const double* a = fine.node(j * f);
        const double* b = coarse.node(j);
        for (int p = 0; p < P; ++p) s += (a[p] - b[p]) * (a[p] - b[p]);
        c += P;
    }
    return std::sqrt(s / c);
}

// ---------------------------------------------------------------------------
// Dispatch
// ---------------------------------------------------------------------------

enum class SolveType { one, two, pathdep, fbsde, stepping };

inline SolveType parse_solve_type(const std::string& s) {
    if (s == "1") return SolveType::one;
    if (s == "2") return SolveType::two;
    if (s == "pathdep") return SolveType::pathdep;
    if (s == "fbsde") return SolveType::fbsde;
    if (s == "stepping") return SolveType::stepping;
    throw InvalidArgument("--type must be one of 1, 2, pathdep, fbsde, stepping (got '" + s + "')");
}

inline SolveType default_solve_type(const Scenario& sc) {
    switch (sc.kind) {
        case ScenarioKind::type1: return SolveType::one;
        case ScenarioKind::type2: return SolveType::two;
        case ScenarioKind::path_dependent: return SolveType::pathdep;
        case ScenarioKind::fbsde: return SolveType::fbsde;
    }
    return SolveType::one;
}

struct ScenarioRun {
    BsvieSolution solution;
    std::optional<FbsdeRun> fbsde;
    PathProcess psi;
};

inline ScenarioRun solve_scenario(const Scenario& sc, SolveType type, const BrownianEnsemble& ens,
                                  const SolverConfig& cfg) {
    if (std::abs(ens.grid().T - sc.T) > 1e-12)
        throw InvalidArgument("scenario '" + sc.id + "' lives on [0," + io::fmt(sc.T) + "]");
    ScenarioRun run;
    switch (type) {
        case SolveType::fbsde: {
            if (!sc.fbsde) throw InvalidArgument("scenario '" + sc.id + "' is not an FBSDE family");
            run.fbsde = solve_fbsde_via_bsvie(*sc.fbsde, ens, cfg);
            run.psi = run.fbsde->induced.free_term;
            run.solution = run.fbsde->bsvie;
            return run;
        }
        case SolveType::pathdep: {
            if (!sc.path_generator.eval && !sc.path_generator.eval_z)
                throw InvalidArgument("scenario '" + sc.id + "' has no path-dependent generator");
            run.psi = sc.psi(ens);
            run.solution = sc.path_generator.eval_z ? solve_path_dependent_with_z(run.psi, sc.path_generator, ens, cfg)
                                                    : solve_path_dependent(run.psi, sc.path_generator, ens, cfg);
            return run;
        }
        default: break;
    }
    if (!sc.generator.eval) throw InvalidArgument("scenario '" + sc.id + "' has no BSVIE generator for this --type");
    run.psi = sc.psi(ens);
    if (type == SolveType::one) run.solution = solve_type1(run.psi, sc.generator, ens, cfg);
    else if (type == SolveType::two) run.solution = solve_type2(run.psi, sc.generator, ens, cfg);
    else run.solution = solve_adapted_stepping(run.psi, sc.generator, ens, cfg);
    return run;
}

// Free terms psi~(t) = psi(t) + int_t^T g ds evaluated at a solution, for generators
// that do not involve z (the counterexample cases).
inline std::vector<std::vector<double>> free_terms_at(const Scenario& sc, const ScenarioRun& run,
                                                      const BrownianEnsemble& ens, int workers = 1) {
    const int n = ens.n_steps();
    const int P = ens.n_paths();
    if (sc.kind == ScenarioKind::path_dependent)
        return detail::path_free_terms(run.psi, sc.path_generator, run.solution.Y, ens, 0, n + 1, workers);
    if (sc.generator.uses_z || sc.generator.uses_zhat)
        throw InvalidArgument("free_terms_at: generator depends on Z");
    std::vector<std::vector<double>> out(n + 1);
    std::vector<double> gv(P);
    for (int i = 0; i <= n; ++i) {
        out[i].assign(run.psi.node(i), run.psi.node(i) + P);
        for (int k = i; k < n; ++k) {
            SliceArgs a;
            a.t_index = i;
            a.s_index = k;
            if (sc.generator.uses_y) a.y = run.solution.Y.node(k);
            sc.generator.eval(ens, a, gv.data());
            for (int p = 0; p < P; ++p) out[i][p] += gv[p] * ens.dt();
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Counterexample demonstration
// ---------------------------------------------------------------------------

struct DemoResult {
    CounterexampleReport report;
    double ladder_estimate = 0.0;  // best-fit-free BSVIE residual at half resolution
    bool t_dependent = false;
    bool residual_gap = false;
};

// Solves the BSVIE form of a counterexample, measures the t-dependence of Z and the
// irreducible residual of the best t-independent Z(s). The ladder estimate repeats the
// solve on the same paths with half the steps.
inline DemoResult demo_no_adapted_solution(const std::string& case_id, const BrownianEnsemble& ens,
                                           const SolverConfig& cfg, const io::KeyValueConfig& overrides = {}) {
    std::string id = case_id;
    if (id == "1.1") id = "example-1.1";
    if (id == "4.2") id = "example-4.2";
    if (id != "example-1.1" && id != "example-4.2")
        throw InvalidArgument("demo counterexample: --case must be 1.1 or 4.2");
    const Scenario sc = make_scenario(id, overrides);
    const int n = ens.n_steps();
    const int first = (id == "example-4.2") ? n / 2 : 0;
    if (id == "example-4.2" && n % 4 != 0) throw InvalidArgument("demo 4.2: steps must be divisible by 4");

    auto analyse = [&](const BrownianEnsemble& e, int first_row) {
        const ScenarioRun run = solve_scenario(sc, default_solve_type(sc), e, cfg);
        const auto terms = free_terms_at(sc, run, e, cfg.workers);
        return analyse_t_dependence(run.solution, terms, e, first_row);
    };
    DemoResult out;
    out.report = analyse(ens, first);
    out.report.case_id = id;
    if (n % 2 == 0) {
        const BrownianEnsemble coarse = coarsen(ens, 2);
        out.ladder_estimate = analyse(coarse, first / 2).bsvie_residual;
    }
    out.t_dependent = out.report.slope_t < -0.5;
    out.residual_gap = out.report.best_fit_residual > 2.0 * out.report.bsvie_residual;
    std::string verdict = out.t_dependent ? "Z(t,s) depends on t (fitted dZ/dt = " + io::fmt(out.report.slope_t) + ")"
                                          : "no clear t-dependence of Z detected";
    verdict += "; best t-independent Z(s) leaves residual " + io::fmt(out.report.best_fit_residual) +
               " versus BSVIE residual " + io::fmt(out.report.bsvie_residual) +
               (out.t_dependent && out.residual_gap ? ": no adapted BSDE solution" : "");
    out.report.verdict = verdict;
    return out;
}

}  // namespace bsvie
