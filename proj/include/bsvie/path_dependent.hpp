#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "bsvie/bsvie_solver.hpp"

namespace bsvie {

// Suffix view {Y(r) : r >= s} of a process, for generators that read the future path.
class PathSegment {
public:
    PathSegment(const PathProcess& parent, int start) : parent_(&parent), start_(start) {
        if (start < 0 || start > parent.grid().n_steps) throw InvalidArgument("PathSegment: start out of range");
    }
    int start() const { return start_; }
    int end() const { return parent_->grid().n_steps; }
    const double* node(int j) const {
        if (j < start_) throw InvalidArgument("PathSegment: node before the segment start");
        return parent_->node(j);
    }
    double at(int path, int j) const { return node(j)[path]; }
    double sup_norm(int path) const {
        double m = 0.0;
        for (int j = start_; j <= end(); ++j) m = std::max(m, std::abs(parent_->at(path, j)));
        return m;
    }
    const PathProcess& parent() const { return *parent_; }

private:
    const PathProcess* parent_;
    int start_;
};

// g(t_i, s_k, Y_{s_k}) or g(t_i, s_k, Y_{s_k}, z) evaluated across paths.
using SegmentEvaluator =
    std::function<void(const BrownianEnsemble&, int t_index, int s_index, const PathSegment&, double* out)>;
using SegmentZEvaluator = std::function<void(const BrownianEnsemble&, int t_index, int s_index, const PathSegment&,
                                             const double* z, double* out)>;

struct PathGeneratorSpec {
    std::string id;
    double L = 0.0;              // Lipschitz constant in the sup norm of the segment
    std::string rho = "linear";  // modulus of continuity, descriptive only
    std::string xi = "|W(T)|";   // random bound, descriptive only
    SegmentEvaluator eval;       // z-free form
    SegmentZEvaluator eval_z;    // form with z; requires the adaptedness condition
    bool adaptedness_condition = false;
};

inline int path_delta_steps(const PathGeneratorSpec& g, const TimeGrid& grid, int requested) {
    if (requested > 0) return std::min(requested, grid.n_steps);
    if (g.L <= 0.0) return grid.n_steps;
    return std::clamp(static_cast<int>(std::floor(0.5 / (g.L * grid.dt))), 1, grid.n_steps);
}

namespace detail {

inline double rel_change(const PathProcess& a, const PathProcess& b, int from, int to) {
    double d2 = 0.0, n2 = 0.0;
    for (int j = from; j < to; ++j) {
        const double* x = a.node(j);
        const double* y = b.node(j);
        for (int p = 0; p < a.n_paths(); ++p) {
            d2 += (x[p] - y[p]) * (x[p] - y[p]);
            n2 += x[p] * x[p];
        }
    }
    return n2 > 0 ? std::sqrt(d2 / n2) : std::sqrt(d2);
}

inline void finish_solution(BsvieSolution& sol, const SolverConfig& cfg, double rms_norm) {
    sol.tolerance = std::max(cfg.tol * rms_norm, sol.residual_rms());
}

inline double rms(const PathProcess& y) {
    double s = 0.0;
    for (double v : y.raw()) s += v * v;
    return std::sqrt(s / y.raw().size());
}

// Anticipating free terms psi~(t_i) = psi(t_i) + sum_{k>=i} g(t_i, s_k, y_{s_k}) dt for rows [from, to).
inline std::vector<std::vector<double>> path_free_terms(const PathProcess& psi, const PathGeneratorSpec& g,
                                                        const PathProcess& y, const BrownianEnsemble& ens, int from,
                                                        int to, int workers) {
    const int n = ens.n_steps();
    const int P = ens.n_paths();
    std::vector<std::vector<double>> out(to - from);
    parallel_for(static_cast<std::size_t>(to - from), workers, [&](std::size_t b, std::size_t e) {
        std::vector<double> gv(P);
        for (std::size_t r = b; r < e; ++r) {
            const int i = from + static_cast<int>(r);
            auto& acc = out[r];
            acc.assign(psi.node(i), psi.node(i) + P);
            if (!g.eval) continue;
            for (int k = i; k < n; ++k) {
                g.eval(ens, i, k, PathSegment(y, k), gv.data());
                for (int p = 0; p < P; ++p) acc[p] += gv[p] * ens.dt();
            }
        }
    });
    return out;
}

inline std::vector<NodeResidual> path_residual(const BsvieSolution& sol, const PathProcess& psi,
                                               const PathGeneratorSpec& g, const BrownianEnsemble& ens, bool with_z,
                                               int workers) {
    const int n = ens.n_steps();
    const int P = ens.n_paths();
    std::vector<NodeResidual> out(n + 1);
    parallel_for(static_cast<std::size_t>(n + 1), workers, [&](std::size_t b, std::size_t e) {
        std::vector<double> r(P), gv(P);
        for (std::size_t ii = b; ii < e; ++ii) {
            const int i = static_cast<int>(ii);
            for (int p = 0; p < P; ++p) r[p] = sol.Y.node(i)[p] - psi.node(i)[p];
            for (int k = i; k < n; ++k) {
                const double* z = sol.Z.slice(i, k);
                if (with_z) g.eval_z(ens, i, k, PathSegment(sol.Y, k), z, gv.data());
                else if (g.eval) g.eval(ens, i, k, PathSegment(sol.Y, k), gv.data());
                else std::fill(gv.begin(), gv.end(), 0.0);
                const double* dw = ens.dW_step(k);
                for (int p = 0; p < P; ++p) r[p] += -gv[p] * ens.dt() + z[p] * dw[p];
            }
            double ss = 0.0;
            for (int p = 0; p < P; ++p) ss += r[p] * r[p];
            out[i] = {i, std::sqrt(ss / P)};
        }
    });
    return out;
}

}  // namespace detail

// One application of the frozen-path map y -> Y: the BSVIE with generator g(t,s,y_s)
// solved on all rows. A fixed point of this map solves the path-dependent equation.
inline BsvieSolution frozen_path_step(const PathProcess& psi, const PathGeneratorSpec& g, const PathProcess& y,
                                      const BrownianEnsemble& ens, const SolverConfig& cfg) {
    const int n = ens.n_steps();
    const int P = ens.n_paths();
    BsvieSolution sol;
    sol.has_field = true;
    sol.beta_ladder = {cfg.beta};
    sol.Y = PathProcess(ens.grid(), P);
    sol.Z = make_triangle_field(ens.grid(), P);
    FamilyProblem fp;
    fp.end_node = n;
    fp.multi_step = true;
    fp.terminal = detail::path_free_terms(psi, g, y, ens, 0, n + 1, cfg.workers);
    for (int i = 0; i <= n; ++i) {
        fp.rows.push_back(i);
        fp.stop.push_back(i);
    }
    fp.zeta_sink = [&](int i, int k, const double* z) { std::copy(z, z + P, sol.Z.slice(i, k)); };
    auto eta = solve_family(fp, ens, cfg.basis, cfg.workers);
    for (int i = 0; i <= n; ++i) std::copy(eta[i].begin(), eta[i].end(), sol.Y.node(i));
    sol.iterations = 1;
    sol.converged = true;
    return sol;
}

// Windowed fixed point for Y(t) = psi(t) + int_t^T g(t,s,Y_s) ds - int_t^T Z(t,s) dW(s).
// Windows are processed right to left; inside a window the rows are iterated with the
// already-settled values on later nodes frozen, which is the leftward extension of the
// frozen region. The generator is evaluated pathwise on the stored iterate, so it is
// anticipating and enters as part of the free term.
inline BsvieSolution solve_path_dependent(const PathProcess& psi, const PathGeneratorSpec& g,
                                          const BrownianEnsemble& ens, const SolverConfig& cfg) {
    const TimeGrid& grid = ens.grid();
    const int n = grid.n_steps;
    const int P = ens.n_paths();
    if (psi.n_paths() != P || psi.grid().n_steps != n) throw InvalidArgument("solve_path_dependent: free term mismatch");
    if (!g.eval && g.eval_z) throw InvalidArgument("solve_path_dependent: generator has a z argument; use the with-z solver");
    const int delta = path_delta_steps(g, grid, cfg.delta_steps);
    if (g.L * delta * grid.dt >= 1.0)
        throw SolverDivergence("solve_path_dependent: L * window = " + std::to_string(g.L * delta * grid.dt) +
                               " >= 1; use smaller delta_steps");

    BsvieSolution sol;
    sol.beta_ladder = {cfg.beta};
    sol.log.push_back("delta_steps = " + std::to_string(delta) + " (L * window = " +
                      std::to_string(g.L * delta * grid.dt) + ")");
    PathProcess y(grid, P);
    sol.converged = true;

    for (int e = n + 1; e > 0;) {
        const int a = std::max(0, e - delta);
        bool ok = false;
        for (int it = 1; it <= cfg.max_picard; ++it) {
            const PathProcess prev = y;
            auto terms = detail::path_free_terms(psi, g, y, ens, a, e, cfg.workers);
            parallel_for(static_cast<std::size_t>(e - a), cfg.workers, [&](std::size_t b, std::size_t f) {
                for (std::size_t r = b; r < f; ++r) {
                    const int i = a + static_cast<int>(r);
                    if (i == n) std::copy(terms[r].begin(), terms[r].end(), y.node(i));
                    else NodeProjector(ens, i, cfg.basis).project(terms[r].data(), y.node(i));
                }
            });
            ++sol.iterations;
            const double d = detail::rel_change(y, prev, a, e);
            sol.picard_deltas.push_back({d});
            if (d <= cfg.tol || !g.eval) {
                ok = true;
                break;
            }
        }
        if (!ok) {
            sol.converged = false;
            sol.log.push_back("window [" + std::to_string(a) + "," + std::to_string(e) + ") hit max_picard");
        }
        e = a;
    }

    if (!cfg.store_field) {
        // The fixed point already holds Y; the Z field would only be needed for residuals.
        sol.Y = std::move(y);
        sol.has_field = false;
        detail::finish_solution(sol, cfg, detail::rms(sol.Y));
        return sol;
    }
    sol = [&] {
        BsvieSolution full = frozen_path_step(psi, g, y, ens, cfg);
        full.beta_ladder = sol.beta_ladder;
        full.picard_deltas = std::move(sol.picard_deltas);
        full.iterations = sol.iterations;
        full.converged = sol.converged;
        full.log = std::move(sol.log);
        return full;
    }();
    sol.residual = detail::path_residual(sol, psi, g, ens, false, cfg.workers);
    detail::finish_solution(sol, cfg, detail::rms(sol.Y));
    return sol;
}

// Checks that g(t, s, y_s, z) is F_s-measurable for adapted inputs by redrawing the
// increments after s. Generators that condition internally by regression change their
// fitted coefficients on the redrawn ensemble, so a slice that lies in the span of the
// node basis (zero adaptedness defect) is accepted as well.
inline bool check_path_adaptedness(const PathGeneratorSpec& g, const BrownianEnsemble& ens, int s_node) {
    const int P = ens.n_paths();
    auto probe = [&](const BrownianEnsemble& e, std::vector<double>& out) {
        PathProcess y(e.grid(), P);
        for (int j = 0; j <= e.n_steps(); ++j) std::copy(e.W_node(j), e.W_node(j) + P, y.node(j));
        std::vector<double> z(e.W_node(s_node), e.W_node(s_node) + P);
        out.assign(P, 0.0);
        g.eval_z(e, 0, s_node, PathSegment(y, s_node), z.data(), out.data());
    };
    std::vector<double> base, alt;
    probe(ens, base);
    probe(resample_after(ens, s_node, 0xADA9Dull), alt);
    double dev = 0.0;
    for (int p = 0; p < P; ++p) dev = std::max(dev, std::abs(base[p] - alt[p]));
    if (dev <= 1e-12) return true;
    return adaptedness_defect(base.data(), s_node, ens) <= 1e-8;
}

// Path-dependent equation with z under the adaptedness condition g(t,s,y_s,z) in F_s:
// the generator is adapted for frozen y, so z enters the recursion through the driver.
inline BsvieSolution solve_path_dependent_with_z(const PathProcess& psi, const PathGeneratorSpec& g,
                                                 const BrownianEnsemble& ens, const SolverConfig& cfg) {
    const TimeGrid& grid = ens.grid();
    const int n = grid.n_steps;
    const int P = ens.n_paths();
    if (!g.eval_z) {
        if (!g.eval) throw InvalidArgument("solve_path_dependent_with_z: generator has no evaluator");
        return solve_path_dependent(psi, g, ens, cfg);
    }
    if (!g.adaptedness_condition)
        throw Refused("solve_path_dependent_with_z: generator '" + g.id + "' does not declare the adaptedness condition");
    for (int s : {n / 4, n / 2, (3 * n) / 4})
        if (s > 0 && !check_path_adaptedness(g, ens, s))
            throw Refused("solve_path_dependent_with_z: generator '" + g.id +
                          "' changes when increments after s are redrawn; the adaptedness condition fails");
    const int delta = path_delta_steps(g, grid, cfg.delta_steps);
    if (g.L * delta * grid.dt >= 1.0)
        throw SolverDivergence("solve_path_dependent_with_z: L * window >= 1; use smaller delta_steps");

    BsvieSolution sol;
    sol.beta_ladder = {cfg.beta};
    sol.has_field = true;
    sol.Y = PathProcess(grid, P);
    sol.Z = make_triangle_field(grid, P);
    sol.converged = true;
    sol.log.push_back("delta_steps = " + std::to_string(delta));
    PathProcess& y = sol.Y;
    std::copy(psi.node(n), psi.node(n) + P, y.node(n));

    for (int e = n; e > 0;) {
        const int a = std::max(0, e - delta);
        bool ok = false;
        for (int it = 1; it <= cfg.max_picard; ++it) {
            const PathProcess prev = y;
            FamilyProblem fp;
            fp.end_node = n;
            for (int i = a; i < e; ++i) {
                fp.rows.push_back(i);
                fp.stop.push_back(i);
                fp.terminal.emplace_back(psi.node(i), psi.node(i) + P);
            }
            fp.driver = [&](const NodeProjector&, int i, int k, const double* zeta, double* out) {
                g.eval_z(ens, i, k, PathSegment(prev, k), zeta, out);
            };
            fp.zeta_sink = [&](int i, int k, const double* z) { std::copy(z, z + P, sol.Z.slice(i, k)); };
            auto eta = solve_family(fp, ens, cfg.basis, cfg.workers);
            for (int i = a; i < e; ++i) std::copy(eta[i - a].begin(), eta[i - a].end(), y.node(i));
            ++sol.iterations;
            const double d = detail::rel_change(y, prev, a, e);
            sol.picard_deltas.push_back({d});
            if (d <= cfg.tol) {
                ok = true;
                break;
            }
        }
        if (!ok) {
            sol.converged = false;
            sol.log.push_back("window [" + std::to_string(a) + "," + std::to_string(e) + ") hit max_picard");
        }
        e = a;
    }
    sol.residual = detail::path_residual(sol, psi, g, ens, true, cfg.workers);
    detail::finish_solution(sol, cfg, detail::rms(sol.Y));
    return sol;
}

// ---------------------------------------------------------------------------
// Anticipated BSDE on an extended grid [0, T + delta]:
//   Y(t) = eta(T) + int_t^T f~(s, Y(s), E_s[Y(s+delta)], Z(s), E_s[Z(s+delta)]) ds - int_t^T Z dW
// with Y = eta, Z = zeta on [T, T + delta].
// ---------------------------------------------------------------------------

using AnticipatedEvaluator = std::function<void(const BrownianEnsemble&, int k, const double* y, const double* ey_future,
                                                const double* z, const double* ez_future, double* out)>;

struct AnticipatedGenerator {
    std::string id;
    bool wrapped = true;  // future arguments are conditioned on F_s before f sees them
    double L = 0.0;
    AnticipatedEvaluator f;
};

struct AnticipatedSolution {
    PathProcess Y;  // nodes of the extended grid; [T, T+delta] holds eta
    PathProcess Z;  // step intervals of the extended grid; [T, T+delta) holds zeta
    int terminal_node = 0;
    int delta_steps = 0;
};

inline AnticipatedSolution solve_anticipated_bsde(const AnticipatedGenerator& gen, const PathProcess& eta,
                                                  const PathProcess& zeta, int delta_steps, const BrownianEnsemble& ens,
                                                  const SolverConfig& cfg) {
    if (!gen.wrapped)
        throw Refused("solve_anticipated_bsde: generator '" + gen.id +
                      "' reads Y(s+delta) or Z(s+delta) without conditioning on F_s. Such an equation need not have "
                      "an adapted solution (W(2) + int Y((s+1) ^ 2) ds is a counterexample on [1,2]); "
                      "supply the E_s-wrapped form.");
    const int N_ext = ens.n_steps();
    const int P = ens.n_paths();
    if (delta_steps < 1 || delta_steps >= N_ext) throw InvalidArgument("solve_anticipated_bsde: delta_steps out of range");
    if (eta.grid().n_steps != N_ext || zeta.grid().n_steps != N_ext || eta.n_paths() != P || zeta.n_paths() != P)
        throw InvalidArgument("solve_anticipated_bsde: terminal data must live on the extended grid");
    const int N = N_ext - delta_steps;
    const double dt = ens.dt();

    AnticipatedSolution out{PathProcess(ens.grid(), P), PathProcess(ens.grid(), P), N, delta_steps};
    for (int j = N; j <= N_ext; ++j) std::copy(eta.node(j), eta.node(j) + P, out.Y.node(j));
    for (int j = N; j < N_ext; ++j) std::copy(zeta.node(j), zeta.node(j) + P, out.Z.node(j));

    std::vector<double> prod(P), ey(P), ez(P), cond(P), y(P), fv(P);
    for (int k = N - 1; k >= 0; --k) {
        const NodeProjector proj(ens, k, cfg.basis);
        const double* next = out.Y.node(k + 1);
        const double* dw = ens.dW_step(k);
        proj.project(next, cond.data());
        for (int p = 0; p < P; ++p) prod[p] = (next[p] - cond[p]) * dw[p] / dt;
        proj.project(prod.data(), out.Z.node(k));
        proj.project(out.Y.node(k + delta_steps), ey.data());
        proj.project(out.Z.node(k + delta_steps), ez.data());
        y = cond;
        // Implicit in y: at most five fixed-point passes, contracting when L dt < 1.
        for (int pass = 0; pass < 5; ++pass) {
            gen.f(ens, k, y.data(), ey.data(), out.Z.node(k), ez.data(), fv.data());
            double change = 0.0, size = 0.0;
            for (int p = 0; p < P; ++p) {
                const double nv = cond[p] + fv[p] * dt;
                change = std::max(change, std::abs(nv - y[p]));
                size = std::max(size, std::abs(nv));
                y[p] = nv;
            }
            if (change <= 1e-14 * (1.0 + size)) break;
        }
        std::copy(y.begin(), y.end(), out.Y.node(k));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Demonstration that the equations above have no BSDE (t-independent Z) solution.
// ---------------------------------------------------------------------------

struct CounterexampleReport {
    std::string case_id;
    double T = 1.0;
    int first_row = 0;  // rows used for the fit (the [1,2] part for the path-dependent case)
    double intercept = 0.0;
    double slope_t = 0.0;  // fitted dZ/dt
    double slope_s = 0.0;  // fitted dZ/ds
    double best_fit_residual = 0.0;  // RMS equation residual of the best t-independent Z(s)
    double bsvie_residual = 0.0;     // RMS residual of the BSVIE solution on the same rows
    std::vector<double> zstar_mean;  // path-mean of the best t-independent Z(s_k)
    std::vector<double> row_residual;  // per row RMS of the best-fit residual
    std::string verdict;
};

// Least-squares fit of the path-mean of Z(t_i, s_k) on (1, t, s) over rows >= first_row,
// and the best t-independent Z*(s_k) = pathwise mean over admissible rows of Z(t_i, s_k),
// whose equation residual Y(t_i) - psi~(t_i) + sum_k Z*(s_k) dW_k cannot vanish.
inline CounterexampleReport analyse_t_dependence(const BsvieSolution& sol,
                                                 const std::vector<std::vector<double>>& free_terms,
                                                 const BrownianEnsemble& ens, int first_row) {
    const int n = ens.n_steps();
    const int P = ens.n_paths();
    const TimeGrid& grid = ens.grid();
    CounterexampleReport rep;
    rep.T = grid.T;
    rep.first_row = first_row;

    Eigen::Matrix3d A = Eigen::Matrix3d::Zero();
    Eigen::Vector3d b = Eigen::Vector3d::Zero();
    for (int i = first_row; i < n; ++i)
        for (int k = i; k < n; ++k) {
            const double* z = sol.Z.slice(i, k);
            double m = 0.0;
            for (int p = 0; p < P; ++p) m += z[p];
            m /= P;
            const Eigen::Vector3d x(1.0, grid.node(i), grid.node(k));
            A += x * x.transpose();
            b += x * m;
        }
    const Eigen::Vector3d c = A.ldlt().solve(b);
    rep.intercept = c(0);
    rep.slope_t = c(1);
    rep.slope_s = c(2);

    std::vector<std::vector<double>> zstar(n, std::vector<double>(P, 0.0));
    rep.zstar_mean.assign(n, 0.0);
    for (int k = first_row; k < n; ++k) {
        const int count = k - first_row + 1;
        for (int i = first_row; i <= k; ++i) {
            const double* z = sol.Z.slice(i, k);
            for (int p = 0; p < P; ++p) zstar[k][p] += z[p] / count;
        }
        for (int p = 0; p < P; ++p) rep.zstar_mean[k] += zstar[k][p] / P;
    }

    double fit2 = 0.0, sol2 = 0.0;
    int rows = 0;
    rep.row_residual.assign(n + 1, 0.0);
    for (int i = first_row; i < n; ++i) {
        std::vector<double> r(P), rb(P);
        for (int p = 0; p < P; ++p) r[p] = rb[p] = sol.Y.node(i)[p] - free_terms[i][p];
        for (int k = i; k < n; ++k) {
            const double* dw = ens.dW_step(k);
            const double* z = sol.Z.slice(i, k);
            for (int p = 0; p < P; ++p) {
                r[p] += zstar[k][p] * dw[p];
                rb[p] += z[p] * dw[p];
            }
        }
        double s1 = 0.0, s2 = 0.0;
        for (int p = 0; p < P; ++p) {
            s1 += r[p] * r[p];
            s2 += rb[p] * rb[p];
        }
        rep.row_residual[i] = std::sqrt(s1 / P);
        fit2 += s1 / P;
        sol2 += s2 / P;
        ++rows;
    }
    rep.best_fit_residual = rows ? std::sqrt(fit2 / rows) : 0.0;
    rep.bsvie_residual = rows ? std::sqrt(sol2 / rows) : 0.0;
    return rep;
}

}  // namespace bsvie
