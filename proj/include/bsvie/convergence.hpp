#pragma once

#include <chrono>
#include <cmath>
#include <string>
#include <vector>

#include "bsvie/catalog.hpp"

namespace bsvie {

struct Rung {
    int steps = 0;
    int paths = 0;
    int degree = 3;
};

struct RungResult {
    Rung rung;
    double error_Y = 0.0;
    double error_Z = 0.0;
    double seconds = 0.0;
    int iterations = 0;
};

struct ConvergenceTable {
    std::string scenario;
    std::string oracle;     // "exact" or "finest-rung"
    std::string axis;       // "steps" or "paths"
    std::vector<RungResult> rows;
    double order = 0.0;     // slope of log error against log axis value
    double r_squared = 0.0;
    bool fitted = false;
};

struct LogLogFit {
    double slope = 0.0;
    double intercept = 0.0;
    double r_squared = 0.0;
};

inline LogLogFit fit_loglog(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size() || x.size() < 2) throw InvalidArgument("fit_loglog: need at least two points");
    const double n = static_cast<double>(x.size());
    double sx = 0, sy = 0, sxx = 0, sxy = 0, syy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        if (!(x[i] > 0) || !(y[i] > 0)) throw InvalidArgument("fit_loglog: values must be positive");
        const double a = std::log(x[i]), b = std::log(y[i]);
        sx += a;
        sy += b;
        sxx += a * a;
        sxy += a * b;
        syy += b * b;
    }
    LogLogFit f;
    const double vx = sxx - sx * sx / n, vy = syy - sy * sy / n, cxy = sxy - sx * sy / n;
    f.slope = cxy / vx;
    f.intercept = (sy - f.slope * sx) / n;
    f.r_squared = vy > 0 ? cxy * cxy / (vx * vy) : 1.0;
    return f;
}

inline void validate_ladder(const std::vector<Rung>& ladder) {
    if (ladder.size() < 3) throw InvalidArgument("convergence_study: ladder needs at least three rungs");
    for (std::size_t i = 1; i < ladder.size(); ++i) {
        const Rung& a = ladder[i - 1];
        const Rung& b = ladder[i];
        const bool no_coarser = b.steps >= a.steps && b.paths >= a.paths && b.degree >= a.degree;
        const bool finer = b.steps > a.steps || b.paths > a.paths || b.degree > a.degree;
        if (!no_coarser || !finer) throw InvalidArgument("convergence_study: ladder must be strictly refining");
    }
}

// Runs the scenario on every rung. With a closed form the error is the RMSE against it on
// independent ensembles of the rung size; otherwise every rung is solved on a coarsening
// of the finest rung's paths and compared with the finest solution at shared nodes.
// With replications > 1 the whole study is repeated on independent seeds and each rung
// reports the root mean square of its errors, which estimates the expected error rather
// than one noisy draw of it.
inline ConvergenceTable convergence_study(const std::string& scenario_id, const std::vector<Rung>& ladder,
                                          std::uint64_t seed, const SolverConfig& base_cfg,
                                          const io::KeyValueConfig& overrides = {}, int replications = 1) {
    validate_ladder(ladder);
    if (replications < 1) throw InvalidArgument("convergence_study: replications must be positive");
    const Scenario sc = make_scenario(scenario_id, overrides);
    ConvergenceTable table;
    table.scenario = scenario_id;
    table.oracle = sc.exact_Y ? "exact" : "finest-rung";
    const bool steps_vary = ladder.front().steps != ladder.back().steps;
    table.axis = steps_vary ? "steps" : "paths";

    auto solve_on = [&](const BrownianEnsemble& ens, int degree) {
        SolverConfig cfg = base_cfg;
        cfg.basis.degree = degree;
        return solve_scenario(sc, default_solve_type(sc), ens, cfg);
    };

    table.rows.reserve(ladder.size());
    for (const Rung& r : ladder) table.rows.push_back(RungResult{r, 0.0, 0.0, 0.0, 0});
    for (int rep = 0; rep < replications; ++rep) {
        const std::uint64_t s = seed + 0x9E3779B97F4A7C15ull * static_cast<std::uint64_t>(rep);
        if (sc.exact_Y) {
            for (std::size_t q = 0; q < ladder.size(); ++q) {
                const Rung& r = ladder[q];
                const auto t0 = std::chrono::steady_clock::now();
                const BrownianEnsemble ens = simulate_brownian(make_grid(sc.T, r.steps), r.paths, s, base_cfg.workers);
                const ScenarioRun run = solve_on(ens, r.degree);
                const ExactErrors e = exact_errors(sc, run.solution, ens);
                RungResult& rr = table.rows[q];
                rr.error_Y += e.rmse_Y * e.rmse_Y;
                rr.error_Z += e.rmse_Z * e.rmse_Z;
                rr.iterations = std::max(rr.iterations, run.solution.iterations);
                rr.seconds += std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
            }
        } else {
            const Rung& top = ladder.back();
            const BrownianEnsemble fine = simulate_brownian(make_grid(sc.T, top.steps), top.paths, s, base_cfg.workers);
            const ScenarioRun ref = solve_on(fine, top.degree);
            for (std::size_t q = 0; q < ladder.size(); ++q) {
                const Rung& r = ladder[q];
                if (top.steps % r.steps != 0) throw InvalidArgument("convergence_study: step counts must divide the finest");
                const auto t0 = std::chrono::steady_clock::now();
                const BrownianEnsemble ens = subset_paths(coarsen(fine, top.steps / r.steps), r.paths);
                const ScenarioRun run = solve_on(ens, r.degree);
                const double d = ladder_difference(ref.solution.Y, run.solution.Y);
                RungResult& rr = table.rows[q];
                rr.error_Y += d * d;
                rr.iterations = std::max(rr.iterations, run.solution.iterations);
                rr.seconds += std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
            }
        }
    }
    for (RungResult& rr : table.rows) {
        rr.error_Y = std::sqrt(rr.error_Y / replications);
        rr.error_Z = std::sqrt(rr.error_Z / replications);
    }

    std::vector<double> xs, ys;
    for (const auto& row : table.rows) {
        if (!(row.error_Y > 0)) continue;
        xs.push_back(steps_vary ? row.rung.steps : row.rung.paths);
        ys.push_back(row.error_Y);
    }
    if (xs.size() >= 2) {
        const LogLogFit f = fit_loglog(xs, ys);
        table.order = f.slope;
        table.r_squared = f.r_squared;
        table.fitted = true;
    }
    return table;
}

}  // namespace bsvie
