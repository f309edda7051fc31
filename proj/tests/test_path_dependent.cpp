#include <gtest/gtest.h>

#include <cmath>

#include "bsvie/catalog.hpp"

using namespace bsvie;

namespace {

SolverConfig cfg_tol(double tol = 1e-8) {
    SolverConfig c;
    c.tol = tol;
    return c;
}

}  // namespace

TEST(PathSegment, GuardsThePast) {
    const TimeGrid g = make_grid(1.0, 10);
    PathProcess y(g, 3, 2.0);
    y.at(1, 10) = -7.0;
    PathSegment seg(y, 4);
    EXPECT_EQ(seg.start(), 4);
    EXPECT_EQ(seg.end(), 10);
    EXPECT_NO_THROW(seg.node(4));
    EXPECT_THROW(seg.node(3), InvalidArgument);
    EXPECT_EQ(seg.sup_norm(1), 7.0);
    EXPECT_THROW(PathSegment(y, 11), InvalidArgument);
}

TEST(PathDependent, ShiftedFutureValueExample) {
    const auto ens = simulate_brownian(make_grid(2.0, 20), 20000, 42);
    const Scenario sc = make_scenario("example-4.2");
    const auto run = solve_scenario(sc, SolveType::pathdep, ens, cfg_tol());
    EXPECT_TRUE(run.solution.converged);
    const auto late = exact_errors(sc, run.solution, ens, 10);
    EXPECT_LT(late.rmse_Y, 0.15);
    EXPECT_LT(late.rmse_Z, 0.15);
    const auto full = exact_errors(sc, run.solution, ens, 0);
    EXPECT_LT(full.rmse_Y, 0.25);
}

TEST(PathDependent, WindowTooWideDiverges) {
    const auto ens = simulate_brownian(make_grid(2.0, 20), 200, 42);
    const Scenario sc = make_scenario("example-4.2");
    SolverConfig c = cfg_tol();
    c.delta_steps = 10;  // L * window = 1
    EXPECT_THROW(solve_path_dependent(sc.psi(ens), sc.path_generator, ens, c), SolverDivergence);
    EXPECT_EQ(path_delta_steps(sc.path_generator, ens.grid(), 0), 5);
}

TEST(PathDependent, WithZMatchesTypeOneSolverOnLocalGenerator) {
    // g(t, s, Y_s, z) = -Y(s) reads only the segment head: the same equation as adapted-linear.
    const auto ens = simulate_brownian(make_grid(1.0, 20), 20000, 17);
    const Scenario ref = make_scenario("adapted-linear");
    PathGeneratorSpec g;
    g.id = "local";
    g.L = 1.0;
    g.adaptedness_condition = true;
    g.eval_z = [](const BrownianEnsemble& e, int, int k, const PathSegment& y, const double*, double* o) {
        const double* v = y.node(k);
        for (int p = 0; p < e.n_paths(); ++p) o[p] = -v[p];
    };
    const auto psi = ref.psi(ens);
    const auto pd = solve_path_dependent_with_z(psi, g, ens, cfg_tol());
    const auto t1 = solve_type1(psi, ref.generator, ens, cfg_tol());
    EXPECT_TRUE(pd.converged);
    double s = 0.0;
    for (std::size_t q = 0; q < pd.Y.raw().size(); ++q) s += std::pow(pd.Y.raw()[q] - t1.Y.raw()[q], 2);
    EXPECT_LT(std::sqrt(s / pd.Y.raw().size()), 0.01);
    EXPECT_LT(exact_errors(ref, pd, ens).rmse_Y, 0.05);
}

TEST(PathDependent, WithZRefusesUndeclaredOrAnticipatingGenerators) {
    const auto ens = simulate_brownian(make_grid(1.0, 20), 500, 17);
    PathProcess psi(ens.grid(), ens.n_paths());
    PathGeneratorSpec g;
    g.id = "peek";
    g.L = 1.0;
    g.eval_z = [](const BrownianEnsemble& e, int, int, const PathSegment& y, const double*, double* o) {
        const double* v = y.node(e.n_steps());
        std::copy(v, v + e.n_paths(), o);
    };
    EXPECT_THROW(solve_path_dependent_with_z(psi, g, ens, cfg_tol()), Refused);
    g.adaptedness_condition = true;  // declared but false: reads Y(T)
    EXPECT_THROW(solve_path_dependent_with_z(psi, g, ens, cfg_tol()), Refused);
}

TEST(PathDependent, ConditionedGeneratorPassesAdaptednessCheck) {
    const auto ens = simulate_brownian(make_grid(1.0, 20), 4000, 3);
    PathGeneratorSpec g;
    g.eval_z = [](const BrownianEnsemble& e, int, int k, const PathSegment& y, const double*, double* o) {
        // E_s[Y(T)] by regression is F_s-measurable although it reads the future path.
        NodeProjector(e, k, BasisConfig{}).project(y.node(e.n_steps()), o);
    };
    EXPECT_TRUE(check_path_adaptedness(g, ens, 10));
}

TEST(AnticipatedBsde, UnwrappedFormIsRefused) {
    const auto ens = simulate_brownian(make_grid(1.5, 15), 100, 1);
    AnticipatedGenerator gen;
    gen.id = "raw";
    gen.wrapped = false;
    PathProcess eta(ens.grid(), 100), zeta(ens.grid(), 100);
    EXPECT_THROW(solve_anticipated_bsde(gen, eta, zeta, 5, ens, cfg_tol()), Refused);
}

TEST(AnticipatedBsde, LinearFutureValueAgainstDeterministicRecursion) {
    // eta = W on [T, T+delta], f = a E_s[Y(s+delta)]. Then Y(s_k) = b_k W(s_k) with
    // b_k = b_{k+1} + a b_{k+d} dt and b = 1 on the extension.
    const double a = 0.8;
    const int N = 20, d = 5;
    const auto ens = simulate_brownian(make_grid(1.25, N + d), 30000, 6);
    const int P = ens.n_paths();
    PathProcess eta(ens.grid(), P), zeta(ens.grid(), P, 1.0);
    for (int j = 0; j <= N + d; ++j) std::copy(ens.W_node(j), ens.W_node(j) + P, eta.node(j));
    AnticipatedGenerator gen;
    gen.id = "linear";
    gen.L = a;
    gen.f = [a](const BrownianEnsemble& e, int, const double*, const double* ey, const double*, const double*,
                double* o) {
        for (int p = 0; p < e.n_paths(); ++p) o[p] = a * ey[p];
    };
    const auto sol = solve_anticipated_bsde(gen, eta, zeta, d, ens, cfg_tol());
    EXPECT_EQ(sol.terminal_node, N);
    std::vector<double> b(N + d + 1, 1.0);
    for (int k = N - 1; k >= 0; --k) b[k] = b[k + 1] + a * b[k + d] * ens.dt();
    for (int k : {0, 5, 12, 19}) {
        double ey = 0.0, ez = 0.0;
        for (int p = 0; p < P; ++p) {
            ey += std::pow(sol.Y.at(p, k) - b[k] * ens.W(p, k), 2);
            ez += std::pow(sol.Z.at(p, k) - b[k + 1], 2);
        }
        // Chained projections of a martingale accumulate sampling error: each level adds
        // variance m b^2 dt / P with m = 4 regressors.
        const double se = std::sqrt(4.0 * b[k] * b[k] * (ens.grid().node(N) - ens.grid().node(k)) / P);
        EXPECT_LT(std::sqrt(ey / P), 3.0 * se) << "node " << k;
        EXPECT_LT(std::sqrt(ez / P), 0.05) << "node " << k;
    }
    EXPECT_THROW(solve_anticipated_bsde(gen, eta, zeta, 0, ens, cfg_tol()), InvalidArgument);
}

TEST(Counterexample, TimeDependenceOfZIsDetected) {
    const auto ens = simulate_brownian(make_grid(1.0, 20), 20000, 11);
    const auto demo = demo_no_adapted_solution("1.1", ens, cfg_tol(1e-6));
    EXPECT_TRUE(demo.t_dependent);
    EXPECT_GE(demo.report.slope_t, -1.2);
    EXPECT_LE(demo.report.slope_t, -0.8);
    EXPECT_NEAR(demo.report.slope_s, 0.0, 0.2);
    EXPECT_GE(demo.report.best_fit_residual, 0.1);
    EXPECT_TRUE(demo.residual_gap);
    EXPECT_THROW(demo_no_adapted_solution("9.9", ens, cfg_tol()), InvalidArgument);
}
