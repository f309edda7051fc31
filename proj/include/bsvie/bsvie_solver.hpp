#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "bsvie/constants.hpp"
#include "bsvie/errors.hpp"
#include "bsvie/generator.hpp"
#include "bsvie/parallel.hpp"
#include "bsvie/regression.hpp"
#include "bsvie/stochastic_core.hpp"

namespace bsvie {

struct SolverConfig {
    double p = 2.0;
    double beta = 0.0;
    int max_picard = 50;
    double tol = 1e-4;
    int delta_steps = 0;  // 0 selects the window length from the Lipschitz metadata
    BasisConfig basis{};
    bool strict = true;        // refuse uncertified generators instead of warning
    bool multi_step = true;    // regress accumulated terminal values instead of chaining projections
    bool store_field = true;   // keep Z; may be disabled for Y-only studies of z-free generators
    int workers = 1;
};

struct NodeResidual {
    int node = 0;
    double rms = 0.0;
};

struct BsvieSolution {
    PathProcess Y;
    RandomField Z;
    bool has_field = false;

    std::vector<double> beta_ladder;
    std::vector<std::vector<double>> picard_deltas;  // [iteration][beta index]
    std::vector<double> picard_norms;                // norm of each iterate at the active beta
    int active_beta = 0;
    bool converged = false;
    int iterations = 0;
    std::vector<std::string> log;

    std::vector<NodeResidual> residual;
    std::vector<double> reconstruction;  // per node, filled for M-solutions
    double reconstruction_error = 0.0;   // pooled over nodes
    double tolerance = 0.0;

    std::optional<WellPosednessCertificate> certificate;

    double beta_used() const { return beta_ladder.empty() ? 0.0 : beta_ladder[active_beta]; }

    std::vector<double> history(int beta_index = -1) const {
        const int b = beta_index < 0 ? active_beta : beta_index;
        std::vector<double> h;
        for (const auto& d : picard_deltas) h.push_back(d[b]);
        return h;
    }

    // delta_{k+1} / delta_k for the active beta.
    std::vector<double> contraction_ratios(int beta_index = -1) const {
        const auto h = history(beta_index);
        std::vector<double> r;
        for (std::size_t k = 1; k < h.size(); ++k) r.push_back(h[k - 1] > 0 ? h[k] / h[k - 1] : 0.0);
        return r;
    }

    double residual_rms() const {
        if (residual.empty()) return 0.0;
        double s = 0.0;
        for (const auto& r : residual) s += r.rms * r.rms;
        return std::sqrt(s / residual.size());
    }
};

// ---------------------------------------------------------------------------
// Family kernel: backward recursions eta(t_i, .) for a set of rows sharing the same
// Brownian paths. The node basis only sees W(s_k), so an F_{t_i}-measurable free term
// must never pass through nested projections: it stays unconditioned in A and is
// regressed directly at each level. In the one-step form only the generator
// contributions are chained through the projections.
// ---------------------------------------------------------------------------

using FamilyDriver = std::function<void(const NodeProjector&, int t_index, int k, const double* zeta, double* out)>;
using FamilySink = std::function<void(int t_index, int k, const double* values)>;

struct FamilyProblem {
    int end_node = 0;
    std::vector<int> rows;                   // t indices
    std::vector<int> stop;                   // node at which eta is reported, <= end_node
    std::vector<std::vector<double>> terminal;  // per row; multi-step accumulates the driver into it
    std::vector<std::vector<double>> prior;  // optional per-row pathwise remainder carried over from a previous call
    FamilyDriver driver;                     // adapted part of the generator; empty means zero
    FamilySink zeta_sink;                    // receives zeta(t_i, s_k)
    FamilySink eta_sink;                     // receives eta(t_i, s_k) at every level (optional)
    bool multi_step = true;
    // Keep the accumulator and the pathwise remainder in terminal/prior after the stop,
    // so a later call can continue the recursion (multi-step only).
    bool keep_state = false;
};

inline std::vector<std::vector<double>> solve_family(FamilyProblem& fp, const BrownianEnsemble& ens,
                                                     const BasisConfig& basis, int workers) {
    const std::size_t R = fp.rows.size();
    const int P = ens.n_paths();
    const double dt = ens.dt();
    if (fp.stop.size() != R || fp.terminal.size() != R) throw InvalidArgument("solve_family: inconsistent rows");
    if (!fp.prior.empty() && fp.prior.size() != R) throw InvalidArgument("solve_family: prior has the wrong row count");
    if (fp.keep_state && !fp.multi_step) throw InvalidArgument("solve_family: keep_state needs the multi-step form");
    std::vector<std::vector<double>> eta(R);
    int min_stop = fp.end_node;
    for (std::size_t r = 0; r < R; ++r) {
        if (fp.stop[r] > fp.end_node) throw InvalidArgument("solve_family: stop beyond terminal node");
        min_stop = std::min(min_stop, fp.stop[r]);
        if (fp.eta_sink) fp.eta_sink(fp.rows[r], fp.end_node, fp.terminal[r].data());
        if (fp.stop[r] == fp.end_node) eta[r] = fp.terminal[r];
    }
    const bool need_zeta = static_cast<bool>(fp.zeta_sink) || static_cast<bool>(fp.driver);
    const bool chain = !fp.multi_step && static_cast<bool>(fp.driver);
    // M is the pathwise remainder eta_{k+1} minus the estimated martingale increments
    // sum_{j>k} zeta_j dW_j. Regressing (M - E_k[eta]) dW_k gives zeta_k with the same
    // conditional mean as eta dW_k, since each zeta_j dW_j is orthogonal to dW_k, and
    // with far less variance. Unlike a projected control it keeps the dependence of
    // the free term on the whole path.
    std::vector<std::vector<double>> M(R), C(R);
    const bool has_prior = !fp.prior.empty();
    for (std::size_t r = 0; r < R; ++r) {
        if (need_zeta) M[r] = has_prior ? fp.prior[r] : fp.terminal[r];
        if (chain) C[r].assign(P, 0.0);
    }
    if (fp.keep_state) fp.prior.resize(R);

    for (int k = fp.end_node - 1; k >= min_stop; --k) {
        std::vector<std::size_t> active;
        for (std::size_t r = 0; r < R; ++r)
            if (fp.stop[r] <= k) active.push_back(r);
        if (active.empty()) continue;
        const NodeProjector proj(ens, k, basis);
        const double* dw = ens.dW_step(k);

        parallel_for(active.size(), workers, [&](std::size_t b, std::size_t e) {
            std::vector<double> prod(P), zeta(P), gval(P, 0.0), cond(P), cchain;
            if (chain) cchain.resize(P);
            for (std::size_t a = b; a < e; ++a) {
                const std::size_t r = active[a];
                const int i = fp.rows[r];
                std::vector<double>& A = fp.terminal[r];
                const bool report = fp.stop[r] == k;
                // cond = E_k[eta_{k+1}], the free term regressed directly plus the chained part.
                proj.project(A.data(), cond.data());
                if (chain) {
                    proj.project(C[r].data(), cchain.data());
                    for (int p = 0; p < P; ++p) cond[p] += cchain[p];
                }
                if (need_zeta) {
                    std::vector<double>& m = M[r];
                    for (int p = 0; p < P; ++p) prod[p] = (m[p] - cond[p]) * dw[p] / dt;
                    proj.project(prod.data(), zeta.data());
                    if (fp.zeta_sink) fp.zeta_sink(i, k, zeta.data());
                    if (fp.driver) fp.driver(proj, i, k, zeta.data(), gval.data());
                    for (int p = 0; p < P; ++p) m[p] += gval[p] * dt - zeta[p] * dw[p];
                }
                if (fp.driver) {
                    if (fp.multi_step) {
                        for (int p = 0; p < P; ++p) A[p] += gval[p] * dt;
                    } else {
                        for (int p = 0; p < P; ++p) C[r][p] = cchain[p] + gval[p] * dt;
                    }
                }
                // eta(t_i, s_k) = E_k[eta_{k+1}] + g~ dt
                for (int p = 0; p < P; ++p) cond[p] += gval[p] * dt;
                if (fp.eta_sink) fp.eta_sink(i, k, cond.data());
                if (report) {
                    eta[r] = cond;
                    if (fp.keep_state) {
                        fp.prior[r] = need_zeta ? std::move(M[r]) : cond;
                    } else {
                        std::vector<double>().swap(A);
                        if (has_prior) std::vector<double>().swap(fp.prior[r]);
                    }
                    std::vector<double>().swap(M[r]);
                    if (chain) std::vector<double>().swap(C[r]);
                }
            }
        });
    }
    return eta;
}

// ---------------------------------------------------------------------------
// Parameterized BSDE for one t: one-step recursion from the free term at T.
// ---------------------------------------------------------------------------

struct ParameterizedBsde {
    PathProcess eta;   // nodes >= t
    PathProcess zeta;  // step intervals >= t
};

using SliceDriver = std::function<void(int k, const double* zeta, double* out)>;

inline ParameterizedBsde solve_parameterized_bsde(int t_node, const std::vector<double>& free_term,
                                                  const SliceDriver& g_slice, const BrownianEnsemble& ens,
                                                  const BasisConfig& basis) {
    if (t_node < 0 || t_node > ens.n_steps()) throw InvalidArgument("solve_parameterized_bsde: node out of range");
    if (static_cast<int>(free_term.size()) != ens.n_paths())
        throw InvalidArgument("solve_parameterized_bsde: free term size mismatch");
    ParameterizedBsde out{PathProcess(ens.grid(), ens.n_paths()), PathProcess(ens.grid(), ens.n_paths())};
    FamilyProblem fp;
    fp.end_node = ens.n_steps();
    fp.rows = {t_node};
    fp.stop = {t_node};
    fp.terminal = {free_term};
    fp.multi_step = false;
    if (g_slice)
        fp.driver = [&](const NodeProjector&, int, int k, const double* z, double* o) { g_slice(k, z, o); };
    fp.zeta_sink = [&](int, int k, const double* z) { std::copy(z, z + ens.n_paths(), out.zeta.node(k)); };
    fp.eta_sink = [&](int, int k, const double* v) { std::copy(v, v + ens.n_paths(), out.eta.node(k)); };
    solve_family(fp, ens, basis, 1);
    return out;
}

// ---------------------------------------------------------------------------
// Norms
// ---------------------------------------------------------------------------

// { E[ sum_i e^{beta p t_i} |dY_i|^p dt + sum_i e^{beta p t_i} (sum_{k>=i} |dZ_ik|^2 dt)^{p/2} dt ] }^{1/p}
inline double weighted_norm(const PathProcess& dY, const RandomField* dZ, double beta, double p) {
    if (!(p > 1.0)) throw InvalidArgument("weighted_norm: p must exceed 1");
    const TimeGrid& g = dY.grid();
    const int P = dY.n_paths();
    double total = 0.0;
    for (int i = 0; i < g.n_steps; ++i) {
        const double w = std::exp(beta * p * g.node(i));
        double acc = 0.0;
        const double* y = dY.node(i);
        std::vector<double> q(P, 0.0);
        if (dZ)
            for (int k = i; k < g.n_steps; ++k) {
                const double* z = dZ->slice(i, k);
                for (int s = 0; s < P; ++s) q[s] += z[s] * z[s] * g.dt;
            }
        for (int s = 0; s < P; ++s) acc += std::pow(std::abs(y[s]), p) + std::pow(q[s], p / 2.0);
        total += w * acc / P * g.dt;
    }
    return std::pow(total, 1.0 / p);
}

// Squared H^2 norms on the triangle and on the full square, as used by the
// norm-equivalence check for M-solutions.
struct SquareNorms {
    double triangle = 0.0;
    double square = 0.0;
};

inline SquareNorms h2_norms(const BsvieSolution& sol) {
    const TimeGrid& g = sol.Y.grid();
    const int P = sol.Y.n_paths();
    SquareNorms out;
    for (int i = 0; i < g.n_steps; ++i) {
        double y2 = 0.0, up = 0.0, lo = 0.0;
        for (int s = 0; s < P; ++s) y2 += sol.Y.node(i)[s] * sol.Y.node(i)[s];
        for (int k = 0; k < g.n_steps; ++k) {
            if (!sol.Z.valid(i, k)) continue;
            const double* z = sol.Z.slice(i, k);
            double acc = 0.0;
            for (int s = 0; s < P; ++s) acc += z[s] * z[s];
            (k >= i ? up : lo) += acc * g.dt;
        }
        out.triangle += (y2 + up) / P * g.dt;
        out.square += (y2 + up + lo) / P * g.dt;
    }
    return out;
}

// ---------------------------------------------------------------------------
// M-extension: Z(t_i, s_k) for k < i from the martingale representation of Y(t_i).
// ---------------------------------------------------------------------------

inline void m_extend_in_place(const PathProcess& Y, RandomField& Z, const BrownianEnsemble& ens,
                              const BasisConfig& basis, int workers) {
    Z.extend_to_square();
    const int n = ens.n_steps();
    const int P = ens.n_paths();
    const double dt = ens.dt();
    // Backward in k with M_i = Y_i - sum_{j>k} Z(i,j) dW_j; Z(i,k) regresses
    // (M_i - E_k[Y_i]) dW_k, which removes the bulk of Y_i from the regressand.
    PathProcess V = Y;
    for (int k = n - 1; k >= 0; --k) {
        const NodeProjector proj(ens, k, basis);
        const double* dw = ens.dW_step(k);
        const std::size_t count = static_cast<std::size_t>(n - k);  // rows i = k+1 .. n
        parallel_for(count, workers, [&](std::size_t b, std::size_t e) {
            std::vector<double> prod(P), cond(P);
            for (std::size_t a = b; a < e; ++a) {
                const int i = k + 1 + static_cast<int>(a);
                double* v = V.node(i);
                proj.project(Y.node(i), cond.data());
                for (int p = 0; p < P; ++p) prod[p] = (v[p] - cond[p]) * dw[p] / dt;
                double* zik = Z.slice(i, k);
                proj.project(prod.data(), zik);
                for (int p = 0; p < P; ++p) v[p] -= zik[p] * dw[p];
            }
        });
    }
}

inline void fill_reconstruction(BsvieSolution& sol, const BrownianEnsemble& ens) {
    const int n = ens.n_steps();
    const int P = ens.n_paths();
    sol.reconstruction.assign(n + 1, 0.0);
    double num = 0.0, den = 0.0;
    for (int i = 0; i <= n; ++i) {
        const double* y = sol.Y.node(i);
        double mean = 0.0, norm = 0.0;
        for (int p = 0; p < P; ++p) {
            mean += y[p];
            norm += y[p] * y[p];
        }
        mean /= P;
        std::vector<double> r(P);
        for (int p = 0; p < P; ++p) r[p] = y[p] - mean;
        for (int k = 0; k < i; ++k) {
            const double* z = sol.Z.slice(i, k);
            const double* dw = ens.dW_step(k);
            for (int p = 0; p < P; ++p) r[p] -= z[p] * dw[p];
        }
        double ss = 0.0;
        for (int p = 0; p < P; ++p) ss += r[p] * r[p];
        sol.reconstruction[i] = norm > 0 ? std::sqrt(ss / norm) : 0.0;
        num += ss;
        den += norm;
    }
    sol.reconstruction_error = den > 0 ? std::sqrt(num / den) : 0.0;
}

inline BsvieSolution m_extend(BsvieSolution sol, const BrownianEnsemble& ens, const BasisConfig& basis,
                              int workers = 1) {
    if (!sol.has_field) throw InvalidArgument("m_extend: solution carries no Z field");
    m_extend_in_place(sol.Y, sol.Z, ens, basis, workers);
    fill_reconstruction(sol, ens);
    return sol;
}

// ---------------------------------------------------------------------------
// Residual of Y(t) = psi(t) + sum_k g dt - sum_k Z dW, per node.
// ---------------------------------------------------------------------------

inline const double* zhat_slice(const RandomField& Z, int i, int k) {
    // Z(s_k, t_i) with s_k > t_i lives in row k, interval i. On the diagonal k == i the
    // value of the next row is used, so the stored diagonal entry is never consumed.
    const int row = std::max(k, i + 1);
    return Z.slice(row, i);
}

inline std::vector<NodeResidual> residual(const BsvieSolution& sol, const PathProcess& psi, const GeneratorSpec& g,
                                          const BrownianEnsemble& ens, int workers = 1) {
    if (!sol.has_field) throw InvalidArgument("residual: solution carries no Z field");
    const int n = ens.n_steps();
    const int P = ens.n_paths();
    std::vector<NodeResidual> out(n + 1);
    parallel_for(static_cast<std::size_t>(n + 1), workers, [&](std::size_t b, std::size_t e) {
        std::vector<double> r(P), gv(P);
        for (std::size_t ii = b; ii < e; ++ii) {
            const int i = static_cast<int>(ii);
            for (int p = 0; p < P; ++p) r[p] = sol.Y.node(i)[p] - psi.node(i)[p];
            for (int k = i; k < n; ++k) {
                SliceArgs a;
                a.t_index = i;
                a.s_index = k;
                if (g.uses_y) a.y = sol.Y.node(k);
                if (g.uses_z) a.z = sol.Z.slice(i, k);
                if (g.uses_zhat) a.zhat = zhat_slice(sol.Z, i, k);
                g.eval(ens, a, gv.data());
                const double* z = sol.Z.slice(i, k);
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

// ---------------------------------------------------------------------------
// Picard solver for Type-I and Type-II BSVIEs with possibly anticipating generators.
//
// Given the iterate (y, z), the anticipating remainder g0 and g1(., 0) are folded into
// the free term and the z-dependence of g1 is kept implicit:
//   psi~(t) = psi(t) + int_t^T [g0(t,s,y,z,zhat) + g1(t,s,y,0,zhat)] ds
//   g~(t,s,zeta) = g1(t,s,y,zeta,zhat) - g1(t,s,y,0,zhat)
// The family of parameterized BSDEs is then solved for all t at once.
// ---------------------------------------------------------------------------

namespace detail {

inline bool profile_complete(const LipschitzProfile& pr) {
    for (int i = 0; i < 2; ++i)
        if (!pr.Ly[i] || !pr.Lz[i] || !pr.Lzhat[i]) return false;
    return true;
}

inline void check_certificate(BsvieSolution& sol, const GeneratorSpec& g, const SolverConfig& cfg) {
    if (!profile_complete(g.profile)) {
        if (cfg.strict) throw InvalidArgument("generator '" + g.id + "' has no Lipschitz profile to certify");
        sol.log.push_back("warning: generator has no Lipschitz profile; certification skipped");
        return;
    }
    sol.certificate = certify(g.profile);
    if (!sol.certificate->certified) {
        if (cfg.strict)
            throw CertificateRejected("certificate rejected for '" + g.id + "': " + sol.certificate->reason,
                                      sol.certificate->margin);
        sol.log.push_back("warning: certificate rejected (" + sol.certificate->reason + "), continuing");
    }
}

inline std::vector<double> beta_ladder(double beta, double T) {
    std::vector<double> l{beta};
    for (double b : {1.0 / T, 4.0 / T})
        if (b > beta) l.push_back(b);
    return l;
}

// Streams the squared Z increments of one sweep into per-row accumulators.
struct SweepAccumulators {
    std::vector<std::vector<double>> dz2;  // [row][path] sum_k |Z_new - Z_old|^2 dt
    std::vector<std::vector<double>> z2;   // [row][path] sum_k |Z_new|^2 dt
    void reset(int rows, int P, bool with_z) {
        dz2.assign(rows, with_z ? std::vector<double>(P, 0.0) : std::vector<double>());
        z2.assign(rows, with_z ? std::vector<double>(P, 0.0) : std::vector<double>());
    }
};

inline double sweep_norm(const TimeGrid& g, int P, const PathProcess& Ya, const PathProcess* Yb,
                         const std::vector<std::vector<double>>& zacc, double beta, double pe) {
    double total = 0.0;
    for (int i = 0; i < g.n_steps; ++i) {
        const double w = std::exp(beta * pe * g.node(i));
        double acc = 0.0;
        const double* a = Ya.node(i);
        const double* b = Yb ? Yb->node(i) : nullptr;
        const bool hz = !zacc[i].empty();
        for (int s = 0; s < P; ++s) {
            const double dy = b ? a[s] - b[s] : a[s];
            acc += std::pow(std::abs(dy), pe) + (hz ? std::pow(zacc[i][s], pe / 2.0) : 0.0);
        }
        total += w * acc / P * g.dt;
    }
    return std::pow(total, 1.0 / pe);
}

}  // namespace detail

enum class BsvieType { one, two };

inline BsvieSolution solve_picard(const PathProcess& psi, const GeneratorSpec& g, const BrownianEnsemble& ens,
                                  const SolverConfig& cfg, BsvieType type) {
    const TimeGrid& grid = ens.grid();
    const int n = grid.n_steps;
    const int P = ens.n_paths();
    if (psi.n_paths() != P || psi.grid().n_steps != n) throw InvalidArgument("solve: free term does not match the ensemble");
    if (!(cfg.tol > 0.0)) throw InvalidArgument("solve: tol must be positive");
    if (cfg.max_picard < 1) throw InvalidArgument("solve: max_picard must be positive");
    if (type == BsvieType::one && g.uses_zhat)
        throw InvalidArgument("solve_type1: generator depends on Z(s,t); use the Type-II solver");
    if (type == BsvieType::two && cfg.p != 2.0) throw InvalidArgument("solve_type2: the coupled path runs at p = 2 only");
    if (!cfg.store_field && (g.uses_z || g.uses_zhat || type == BsvieType::two))
        throw InvalidArgument("solve: store_field=false requires a z-free Type-I generator");

    BsvieSolution sol;
    detail::check_certificate(sol, g, cfg);
    sol.beta_ladder = detail::beta_ladder(cfg.beta, grid.T);
    sol.has_field = cfg.store_field;
    sol.Y = PathProcess(grid, P);
    if (sol.has_field) sol.Z = type == BsvieType::two ? make_square_field(grid, P) : make_triangle_field(grid, P);

    const bool anticipating = g.measurability == Measurability::anticipating;
    const bool fold_z = anticipating && g.uses_z;  // g0(z) needs the regression split
    const double dt = grid.dt;

    // Lipschitz-in-z check of the explicit step (L_z dt < 1).
    if (g.uses_z && detail::profile_complete(g.profile)) {
        const double lz = g.profile.sup_value(*g.profile.Lz[0]) + g.profile.sup_value(*g.profile.Lz[1]);
        if (lz * dt >= 1.0) throw InvalidArgument("solve: L_z * dt >= 1; refine the grid");
    }

    detail::SweepAccumulators accum;
    PathProcess y_old(grid, P);

    for (int it = 1; it <= cfg.max_picard; ++it) {
        // Free term psi~ for every row, from the previous iterate.
        std::vector<std::vector<double>> terminal(n + 1);
        for (int i = 0; i <= n; ++i) terminal[i].assign(psi.node(i), psi.node(i) + P);
        for (int k = 0; k < n; ++k) {
            std::optional<NodeProjector> proj;
            if (fold_z) proj.emplace(ens, k, cfg.basis);
            parallel_for(static_cast<std::size_t>(k + 1), cfg.workers, [&](std::size_t b, std::size_t e) {
                std::vector<double> gv(P), g0v(P);
                for (std::size_t ii = b; ii < e; ++ii) {
                    const int i = static_cast<int>(ii);
                    SliceArgs a;
                    a.t_index = i;
                    a.s_index = k;
                    if (g.uses_y) a.y = y_old.node(k);
                    if (g.uses_zhat) a.zhat = zhat_slice(sol.Z, i, k);
                    SliceArgs a0 = a;
                    if (g.uses_z) a.z = sol.Z.slice(i, k);
                    g.eval(ens, a, gv.data());
                    if (fold_z) {
                        // g0(z) + g1(0) = g(z) - E_s[g(z) - g(0)]
                        g.eval(ens, a0, g0v.data());
                        for (int p = 0; p < P; ++p) g0v[p] = gv[p] - g0v[p];
                        proj->project(g0v.data(), g0v.data());
                        for (int p = 0; p < P; ++p) gv[p] -= g0v[p];
                    } else if (g.uses_z) {
                        // adapted generator: g0 = 0 and g1(0) = g(0)
                        g.eval(ens, a0, gv.data());
                    }
                    double* acc = terminal[i].data();
                    for (int p = 0; p < P; ++p) acc[p] += gv[p] * dt;
                }
            });
        }

        accum.reset(n + 1, P, sol.has_field);
        FamilyProblem fp;
        fp.end_node = n;
        fp.multi_step = cfg.multi_step;
        for (int i = 0; i <= n; ++i) {
            fp.rows.push_back(i);
            fp.stop.push_back(i);
        }
        fp.terminal = std::move(terminal);
        if (g.uses_z) {
            fp.driver = [&](const NodeProjector& proj, int i, int k, const double* zeta, double* out) {
                SliceArgs a;
                a.t_index = i;
                a.s_index = k;
                if (g.uses_y) a.y = y_old.node(k);
                if (g.uses_zhat) a.zhat = zhat_slice(sol.Z, i, k);
                std::vector<double> base(P);
                g.eval(ens, a, base.data());
                a.z = zeta;
                g.eval(ens, a, out);
                for (int p = 0; p < P; ++p) out[p] -= base[p];
                if (anticipating) proj.project(out, out);
            };
        }
        if (sol.has_field) {
            fp.zeta_sink = [&](int i, int k, const double* zeta) {
                double* dst = sol.Z.slice(i, k);
                double* dz = accum.dz2[i].data();
                double* z2 = accum.z2[i].data();
                for (int p = 0; p < P; ++p) {
                    const double d = zeta[p] - dst[p];
                    dz[p] += d * d * dt;
                    z2[p] += zeta[p] * zeta[p] * dt;
                    dst[p] = zeta[p];
                }
            };
        }
        auto eta = solve_family(fp, ens, cfg.basis, cfg.workers);
        for (int i = 0; i <= n; ++i) std::copy(eta[i].begin(), eta[i].end(), sol.Y.node(i));
        if (type == BsvieType::two) m_extend_in_place(sol.Y, sol.Z, ens, cfg.basis, cfg.workers);

        std::vector<double> deltas;
        for (double b : sol.beta_ladder)
            deltas.push_back(detail::sweep_norm(grid, P, sol.Y, &y_old, accum.dz2, b, cfg.p));
        const double norm = detail::sweep_norm(grid, P, sol.Y, nullptr, accum.z2, sol.beta_ladder[sol.active_beta], cfg.p);
        sol.picard_deltas.push_back(deltas);
        sol.picard_norms.push_back(norm);
        sol.iterations = it;
        y_old = sol.Y;

        const double d = deltas[sol.active_beta];
        if (d <= cfg.tol * norm || norm == 0.0) {
            sol.converged = true;
            break;
        }
        if (it >= 3) {
            const auto& prev = sol.picard_deltas[it - 2];
            if (d >= prev[sol.active_beta] && sol.active_beta + 1 < static_cast<int>(sol.beta_ladder.size())) {
                ++sol.active_beta;
                sol.log.push_back("no contraction observed at iteration " + std::to_string(it) +
                                  "; weighted norm escalated to beta = " + std::to_string(sol.beta_used()));
            }
        }
    }
    if (!sol.converged) sol.log.push_back("Picard iteration did not reach tol within max_picard sweeps");

    if (sol.has_field) {
        sol.residual = residual(sol, psi, g, ens, cfg.workers);
        if (type == BsvieType::two) fill_reconstruction(sol, ens);
    }
    double ynorm = 0.0;
    for (double v : sol.Y.raw()) ynorm += v * v;
    ynorm = std::sqrt(ynorm / sol.Y.raw().size());
    sol.tolerance = std::max(cfg.tol * ynorm, sol.residual_rms());
    return sol;
}

inline BsvieSolution solve_type1(const PathProcess& psi, const GeneratorSpec& g, const BrownianEnsemble& ens,
                                 const SolverConfig& cfg) {
    return solve_picard(psi, g, ens, cfg, BsvieType::one);
}

inline BsvieSolution solve_type2(const PathProcess& psi, const GeneratorSpec& g, const BrownianEnsemble& ens,
                                 const SolverConfig& cfg) {
    return solve_picard(psi, g, ens, cfg, BsvieType::two);
}

// ---------------------------------------------------------------------------
// Window-by-window solver for adapted generators: local fixed point on [T-delta, T],
// then the tail over [T-delta, T] becomes an F_{T-delta}-measurable free term for the
// earlier rows (stochastic Fredholm step), and so on leftward.
// ---------------------------------------------------------------------------

inline int auto_delta_steps(const GeneratorSpec& g, const TimeGrid& grid) {
    double L = 0.0;
    if (detail::profile_complete(g.profile))
        L = g.profile.sup_value(*g.profile.Ly[0]) + g.profile.sup_value(*g.profile.Ly[1]);
    if (L <= 0.0) return grid.n_steps;
    return std::clamp(static_cast<int>(std::floor(0.5 / (L * grid.dt))), 1, grid.n_steps);
}

inline BsvieSolution solve_adapted_stepping(const PathProcess& psi, const GeneratorSpec& g, const BrownianEnsemble& ens,
                                            const SolverConfig& cfg) {
    if (g.measurability != Measurability::adapted)
        throw Refused("solve_adapted_stepping: generator '" + g.id +
                      "' is anticipating. Conditioning the tail at T - delta does not make an F_T-measurable "
                      "generator term adapted, so the window recursion has no adapted free term; use solve_type1.");
    if (g.uses_zhat) throw InvalidArgument("solve_adapted_stepping: Type-I generators only");
    const TimeGrid& grid = ens.grid();
    const int n = grid.n_steps;
    const int P = ens.n_paths();
    {
        const auto rep = verify_adaptedness(g, ens, n / 2);
        if (!rep.adapted)
            throw Refused("solve_adapted_stepping: generator declared adapted fails the future-resampling check");
    }

    BsvieSolution sol;
    detail::check_certificate(sol, g, cfg);
    sol.beta_ladder = {cfg.beta};
    sol.has_field = true;
    sol.Y = PathProcess(grid, P);
    sol.Z = make_triangle_field(grid, P);
    const int delta = cfg.delta_steps > 0 ? std::min(cfg.delta_steps, n) : auto_delta_steps(g, grid);
    sol.log.push_back("delta_steps = " + std::to_string(delta));

    std::vector<std::vector<double>> current(n + 1);
    std::vector<std::vector<double>> prior(n + 1);
    for (int i = 0; i <= n; ++i) current[i].assign(psi.node(i), psi.node(i) + P);
    std::copy(psi.node(n), psi.node(n) + P, sol.Y.node(n));

    auto make_driver = [&](const PathProcess& ysrc) {
        return [&, ysrc_ptr = &ysrc](const NodeProjector&, int i, int k, const double* zeta, double* out) {
            SliceArgs a;
            a.t_index = i;
            a.s_index = k;
            if (g.uses_y) a.y = ysrc_ptr->node(k);
            if (g.uses_z) a.z = zeta;
            g.eval(ens, a, out);
        };
    };
    auto zeta_sink = [&](int i, int k, const double* zeta) { std::copy(zeta, zeta + P, sol.Z.slice(i, k)); };

    int total_iterations = 0;
    for (int e = n; e > 0;) {
        const int a = std::max(0, e - delta);
        // Local fixed point for rows in [a, e).
        PathProcess y_iter = sol.Y;
        double prev_delta = -1.0;
        bool ok = false;
        for (int it = 1; it <= cfg.max_picard; ++it) {
            FamilyProblem fp;
            fp.end_node = e;
            for (int i = a; i < e; ++i) {
                fp.rows.push_back(i);
                fp.stop.push_back(i);
                fp.terminal.push_back(current[i]);
                if (!prior[i].empty()) fp.prior.push_back(prior[i]);
            }
            fp.driver = make_driver(y_iter);
            fp.zeta_sink = zeta_sink;
            auto eta = solve_family(fp, ens, cfg.basis, cfg.workers);
            double d2 = 0.0, n2 = 0.0;
            for (int i = a; i < e; ++i) {
                const auto& v = eta[i - a];
                double* yi = y_iter.node(i);
                for (int p = 0; p < P; ++p) {
                    d2 += (v[p] - yi[p]) * (v[p] - yi[p]);
                    n2 += v[p] * v[p];
                    yi[p] = v[p];
                }
            }
            ++total_iterations;
            const double dlt = std::sqrt(d2), nrm = std::sqrt(n2);
            sol.picard_deltas.push_back({dlt / std::sqrt(static_cast<double>(P))});
            sol.picard_norms.push_back(nrm / std::sqrt(static_cast<double>(P)));
            if (dlt <= cfg.tol * nrm || nrm == 0.0 || !g.uses_y) {
                ok = true;
                break;
            }
            if (it >= 3 && prev_delta > 0 && dlt >= prev_delta)
                throw SolverDivergence("solve_adapted_stepping: window [" + std::to_string(a) + "," + std::to_string(e) +
                                       ") does not contract; use smaller delta_steps (now " + std::to_string(delta) + ")");
            prev_delta = dlt;
        }
        if (!ok) {
            sol.log.push_back("window [" + std::to_string(a) + "," + std::to_string(e) + ") hit max_picard");
            sol.converged = false;
        }
        for (int i = a; i < e; ++i) std::copy(y_iter.node(i), y_iter.node(i) + P, sol.Y.node(i));

        // Fredholm step: rows before the window absorb the tail over [a, e). Their
        // accumulators stay unconditioned because the node basis at a only sees W(a),
        // while the free term of row i also depends on the path up to t_i. The
        // conditioned value E_a[.] is kept alongside as the warm start for zeta.
        if (a > 0) {
            FamilyProblem fp;
            fp.end_node = e;
            fp.keep_state = true;
            for (int i = 0; i < a; ++i) {
                fp.rows.push_back(i);
                fp.stop.push_back(a);
                fp.terminal.push_back(std::move(current[i]));
                if (!prior[i].empty()) fp.prior.push_back(std::move(prior[i]));
            }
            fp.driver = make_driver(sol.Y);
            fp.zeta_sink = zeta_sink;
            solve_family(fp, ens, cfg.basis, cfg.workers);
            for (int i = 0; i < a; ++i) {
                current[i] = std::move(fp.terminal[i]);
                prior[i] = std::move(fp.prior[i]);
            }
        }
        e = a;
    }
    sol.iterations = total_iterations;
    sol.converged = true;
    for (const auto& s : sol.log)
        if (s.find("max_picard") != std::string::npos) sol.converged = false;
    sol.residual = residual(sol, psi, g, ens, cfg.workers);
    double ynorm = 0.0;
    for (double v : sol.Y.raw()) ynorm += v * v;
    ynorm = std::sqrt(ynorm / sol.Y.raw().size());
    sol.tolerance = std::max(cfg.tol * ynorm, sol.residual_rms());
    return sol;
}

}  // namespace bsvie
