#pragma once

#include <cmath>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "bsvie/bsvie_solver.hpp"

namespace bsvie {

// Family of coupled systems indexed by t:
//   X^t(s) = x^t + int_t^s b^t(r, Z^t(r)) dr
//   Y^t(s) = xi^t X^t(T) + int_s^T g^t(r, Z^t(r)) dr - int_s^T Z^t(r) dW(r)
// b and g are deterministic in (t, r) and may read W(r), which keeps them adapted.
using PerRowValue = std::function<void(const BrownianEnsemble&, int t_index, double* out)>;
using AdaptedCoefficient = std::function<double(double t, double r, double w_r, double z)>;

struct FbsdeSpec {
    std::string id;
    PerRowValue x;        // x^t, F_t-measurable
    PerRowValue xi;       // xi^t, F_T-measurable and bounded
    std::optional<double> xi_bound;
    AdaptedCoefficient b;  // empty means b = 0
    AdaptedCoefficient g;  // empty means g = 0
    double L_b = 0.0;
    double L_g = 0.0;
};

struct InducedBsvie {
    GeneratorSpec generator;
    PathProcess free_term;
    double xi_bz_T = 0.0;  // ||xi||_inf * L_b * T, the small-time quantity
};

inline InducedBsvie induced_bsvie_generator(const FbsdeSpec& spec, const BrownianEnsemble& ens) {
    if (!spec.xi_bound) throw InvalidArgument("induced_bsvie_generator: xi^t needs a declared sup bound");
    if (!spec.x || !spec.xi) throw InvalidArgument("induced_bsvie_generator: x^t and xi^t are required");
    const double xb = *spec.xi_bound;
    if (!(xb >= 0.0)) throw InvalidArgument("induced_bsvie_generator: bound must be nonnegative");
    const TimeGrid& grid = ens.grid();
    const int n = grid.n_steps;
    const int P = ens.n_paths();

    InducedBsvie out;
    out.free_term = PathProcess(grid, P);
    // xi^t for every row is kept for the generator; psi(t) = xi^t x^t.
    auto xi_rows = std::make_shared<std::vector<std::vector<double>>>(n + 1, std::vector<double>(P));
    std::vector<double> xv(P);
    for (int i = 0; i <= n; ++i) {
        spec.xi(ens, i, (*xi_rows)[i].data());
        spec.x(ens, i, xv.data());
        for (int p = 0; p < P; ++p) out.free_term.node(i)[p] = (*xi_rows)[i][p] * xv[p];
    }

    const bool has_b = static_cast<bool>(spec.b) && xb > 0.0;
    GeneratorSpec& g = out.generator;
    g.id = spec.id.empty() ? "fbsde-induced" : spec.id;
    g.uses_z = has_b || static_cast<bool>(spec.g);
    g.measurability = has_b ? Measurability::anticipating : Measurability::adapted;
    const AdaptedCoefficient b = has_b ? spec.b : AdaptedCoefficient{};
    const AdaptedCoefficient gt = spec.g;
    g.eval = [xi_rows, b, gt](const BrownianEnsemble& e, const SliceArgs& a, double* o) {
        const double t = e.grid().node(a.t_index);
        const double r = e.grid().node(a.s_index);
        const double* w = e.W_node(a.s_index);
        const double* xi = (*xi_rows)[a.t_index].data();
        for (int p = 0; p < e.n_paths(); ++p) {
            const double z = a.z ? a.z[p] : 0.0;
            double v = 0.0;
            if (b) v += xi[p] * b(t, r, w[p], z);
            if (gt) v += gt(t, r, w[p], z);
            o[p] = v;
        }
    };
    // (xi - E_s xi) b_z is the anticipating part: |xi - E_s xi| <= 2 ||xi||.
    const double lz0 = has_b ? 2.0 * xb * spec.L_b : 0.0;
    const double lz1 = (has_b ? xb * spec.L_b : 0.0) + spec.L_g;
    g.profile = LipschitzProfile::constants(grid.T, 0.0, lz0, 0.0, 0.0, lz1, 0.0);
    out.xi_bz_T = xb * spec.L_b * grid.T;
    return out;
}

struct FbsdeSolution {
    RandomField X;  // node_triangle: X^t(s_j), j >= i
    RandomField Y;  // node_triangle: Y^t(s_j)
    RandomField Z;  // triangle: Z^t(s_k) on step intervals
};

struct FbsdeRun {
    FbsdeSolution family;
    BsvieSolution bsvie;
    InducedBsvie induced;
    double margin = 0.0;
    double terminal_gap = 0.0;  // max |Y^t(T) - xi^t X^t(T)| over rows and paths
};

// Solves the anticipating BSVIE induced by the family, then rebuilds every member:
// X^t by forward quadrature of b^t(r, Z(t,r)) and
// Y^t(s) = E_s[ psi(t) + int_t^T g(t,r,Z(t,r)) dr ] - int_t^s g^t(r, Z(t,r)) dr.
inline FbsdeRun solve_fbsde_via_bsvie(const FbsdeSpec& spec, const BrownianEnsemble& ens, const SolverConfig& cfg) {
    const TimeGrid& grid = ens.grid();
    const int n = grid.n_steps;
    const int P = ens.n_paths();
    const double dt = grid.dt;
    FbsdeRun run;
    run.induced = induced_bsvie_generator(spec, ens);
    const auto cert = certify(run.induced.generator.profile);
    run.margin = cert.margin;
    if (!cert.certified)
        throw CertificateRejected("solve_fbsde_via_bsvie: small-time condition fails (margin " +
                                      std::to_string(cert.margin) + ", ||xi|| L_b T = " +
                                      std::to_string(run.induced.xi_bz_T) + ")",
                                  cert.margin);
    run.bsvie = solve_type1(run.induced.free_term, run.induced.generator, ens, cfg);
    const BsvieSolution& sol = run.bsvie;

    FbsdeSolution& fam = run.family;
    fam.X = RandomField(grid, P, FieldDomain::node_triangle);
    fam.Y = RandomField(grid, P, FieldDomain::node_triangle);
    fam.Z = sol.Z;

    std::vector<double> xv(P);
    // Per row: forward X, the running g^t integral, and the full accumulated value A.
    std::vector<std::vector<double>> acc(n + 1), run_g(n + 1);
    for (int i = 0; i <= n; ++i) {
        spec.x(ens, i, xv.data());
        double* X = fam.X.slice(i, i);
        std::copy(xv.begin(), xv.end(), X);
        acc[i].assign(run.induced.free_term.node(i), run.induced.free_term.node(i) + P);
        std::vector<double> gv(P);
        for (int k = i; k < n; ++k) {
            SliceArgs a;
            a.t_index = i;
            a.s_index = k;
            a.z = sol.Z.slice(i, k);
            run.induced.generator.eval(ens, a, gv.data());
            const double* w = ens.W_node(k);
            const double* Xk = fam.X.slice(i, k);
            double* Xn = fam.X.slice(i, k + 1);
            const double t = grid.node(i), r = grid.node(k);
            for (int p = 0; p < P; ++p) {
                acc[i][p] += gv[p] * dt;
                Xn[p] = Xk[p] + (spec.b ? spec.b(t, r, w[p], a.z[p]) : 0.0) * dt;
            }
        }
        run_g[i].assign(P, 0.0);
    }
    // Y^t at s_j: j == i uses the BSVIE value, j == n is the raw terminal, interior by regression.
    for (int j = 0; j <= n; ++j) {
        std::optional<NodeProjector> proj;
        if (j > 0 && j < n) proj.emplace(ens, j, cfg.basis);
        for (int i = 0; i <= j; ++i) {
            double* Yv = fam.Y.slice(i, j);
            if (j == i) {
                std::copy(sol.Y.node(i), sol.Y.node(i) + P, Yv);
            } else {
                if (j == n) std::copy(acc[i].begin(), acc[i].end(), Yv);
                else proj->project(acc[i].data(), Yv);
                for (int p = 0; p < P; ++p) Yv[p] -= run_g[i][p];
            }
            if (spec.g && j < n) {
                const double* w = ens.W_node(j);
                const double* z = sol.Z.slice(i, j);
                for (int p = 0; p < P; ++p) run_g[i][p] += spec.g(grid.node(i), grid.node(j), w[p], z[p]) * dt;
            }
        }
    }
    std::vector<double> xi(P);
    for (int i = 0; i <= n; ++i) {
        spec.xi(ens, i, xi.data());
        const double* Yt = fam.Y.slice(i, n);
        const double* Xt = fam.X.slice(i, n);
        for (int p = 0; p < P; ++p) run.terminal_gap = std::max(run.terminal_gap, std::abs(Yt[p] - xi[p] * Xt[p]));
    }
    return run;
}

// Stitches Y(t) = Y^t(t), Z(t,s) = Z^t(s). With the induced data the residual of the
// BSVIE is evaluated as well, which exposes families that are not mutually consistent.
inline BsvieSolution fbsde_to_bsvie(const FbsdeSolution& fam, const BrownianEnsemble& ens,
                                    const InducedBsvie* induced = nullptr) {
    const TimeGrid& g = ens.grid();
    if (fam.Y.grid().n_steps != g.n_steps || fam.Z.grid().n_steps != g.n_steps || fam.Y.n_paths() != ens.n_paths() ||
        fam.Z.n_paths() != ens.n_paths() || fam.Y.domain() != FieldDomain::node_triangle)
        throw InvalidArgument("fbsde_to_bsvie: family does not match the ensemble grid");
    BsvieSolution out;
    out.has_field = true;
    out.Y = PathProcess(g, ens.n_paths());
    for (int i = 0; i <= g.n_steps; ++i) {
        const double* y = fam.Y.slice(i, i);
        std::copy(y, y + ens.n_paths(), out.Y.node(i));
    }
    out.Z = fam.Z;
    out.converged = true;
    if (induced) out.residual = residual(out, induced->free_term, induced->generator, ens);
    return out;
}

}  // namespace bsvie
