#include <gtest/gtest.h>

#include <cmath>

#include "bsvie/regression.hpp"

using namespace bsvie;

namespace {

BrownianEnsemble ensemble(int paths = 50000, int steps = 20, std::uint64_t seed = 77) {
    return simulate_brownian(make_grid(1.0, steps), paths, seed);
}

std::vector<double> terminal_map(const BrownianEnsemble& e, double (*f)(double)) {
    std::vector<double> out(e.n_paths());
    const double* w = e.W_node(e.n_steps());
    for (int p = 0; p < e.n_paths(); ++p) out[p] = f(w[p]);
    return out;
}

double rms(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
    return std::sqrt(s / a.size());
}

// Standard error of a least-squares fit with m regressors: sqrt(m * mean(eps^2) / P).
double fit_standard_error(const std::vector<double>& y, const std::vector<double>& truth, int m) {
    double s = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) s += (y[i] - truth[i]) * (y[i] - truth[i]);
    return std::sqrt(m * s / y.size() / y.size());
}

}  // namespace

TEST(NodeProjector, ReproducesBasisFunctionsExactly) {
    const auto e = ensemble(5000);
    const int node = 8;
    NodeProjector proj(e, node, BasisConfig{3, 0.0});
    std::vector<double> y(e.n_paths());
    const double* w = e.W_node(node);
    for (int p = 0; p < e.n_paths(); ++p) y[p] = 2.0 - w[p] + 0.5 * w[p] * w[p] * w[p];
    const auto fit = proj.project(y);
    EXPECT_LT(rms(fit, y), 1e-9);
}

TEST(NodeProjector, ProjectionIsIdempotentAndMayAlias) {
    const auto e = ensemble(5000);
    // Without a ridge the fit is an orthogonal projection.
    NodeProjector proj(e, 10, BasisConfig{3, 0.0});
    auto y = terminal_map(e, [](double x) { return std::sin(3 * x); });
    const auto once = proj.project(y);
    const auto twice = proj.project(once);
    EXPECT_LT(rms(once, twice), 1e-10);
    proj.project(y.data(), y.data());
    EXPECT_LT(rms(once, y), 1e-14);
}

TEST(NodeProjector, NodeZeroIsTheSampleMean) {
    const auto e = ensemble(1000);
    NodeProjector proj(e, 0, BasisConfig{});
    EXPECT_EQ(proj.size(), 1);
    const auto y = terminal_map(e, [](double x) { return x * x; });
    double m = 0.0;
    for (double v : y) m += v;
    m /= y.size();
    for (double v : proj.project(y)) EXPECT_NEAR(v, m, 1e-12);
}

TEST(NodeProjector, WellConditionedHermiteDesign) {
    const auto e = ensemble(20000);
    for (int node : {1, 5, 19}) {
        NodeProjector proj(e, node, BasisConfig{3, 1e-8});
        EXPECT_LT(proj.condition_number(), 50.0) << "node " << node;
    }
}

TEST(NodeProjector, RejectsBadConfigurations) {
    const auto e = ensemble(100);
    EXPECT_THROW(NodeProjector(e, 3, BasisConfig{-1, 0.0}), InvalidArgument);
    EXPECT_THROW(NodeProjector(e, 3, BasisConfig{3, -1.0}), InvalidArgument);
    EXPECT_THROW(NodeProjector(e, 21, BasisConfig{}), InvalidArgument);
    // Far more basis functions than paths with no ridge is rank deficient.
    const auto tiny = ensemble(4);
    EXPECT_THROW(NodeProjector(tiny, 3, BasisConfig{8, 0.0}), NumericalFailure);
}

TEST(ConditionalExpectation, PolynomialPayoffsAgainstClosedForms) {
    const auto e = ensemble();
    const int k = 10;
    const double s = e.grid().node(k), T = 1.0;
    const auto sq = conditional_expectation(terminal_map(e, [](double x) { return x * x; }), k, BasisConfig{}, e);
    const auto cube = conditional_expectation(terminal_map(e, [](double x) { return x * x * x; }), k, BasisConfig{}, e);
    std::vector<double> sq_exact(e.n_paths()), cube_exact(e.n_paths());
    const double* w = e.W_node(k);
    for (int p = 0; p < e.n_paths(); ++p) {
        sq_exact[p] = w[p] * w[p] + (T - s);
        cube_exact[p] = w[p] * w[p] * w[p] + 3.0 * (T - s) * w[p];
    }
    // Both targets lie in the cubic span, so only sampling error remains.
    const auto y_sq = terminal_map(e, [](double x) { return x * x; });
    const auto y_cube = terminal_map(e, [](double x) { return x * x * x; });
    EXPECT_LT(rms(sq, sq_exact), 3.0 * fit_standard_error(y_sq, sq_exact, 4));
    EXPECT_LT(rms(cube, cube_exact), 3.0 * fit_standard_error(y_cube, cube_exact, 4));
}

TEST(ConditionalExpectation, SmoothPayoffWithinBasisError) {
    // E_s[sin W(T)] = sin(W(s)) exp(-(T-s)/2), approximated by a cubic in W(s).
    const auto e = ensemble();
    const int k = 15;
    const double s = e.grid().node(k);
    const auto ce = conditional_expectation(terminal_map(e, [](double x) { return std::sin(x); }), k, BasisConfig{}, e);
    std::vector<double> exact(e.n_paths());
    for (int p = 0; p < e.n_paths(); ++p) exact[p] = std::sin(e.W(p, k)) * std::exp(-(1.0 - s) / 2.0);
    EXPECT_LT(rms(ce, exact), 0.03);
}

TEST(MartingaleRepresentation, SquareOfTerminalValue) {
    // W(T)^2 = T + int 2 W(s) dW(s)
    const auto e = ensemble();
    const auto y = terminal_map(e, [](double x) { return x * x; });
    const auto z = martingale_representation(y, e.n_steps(), BasisConfig{}, e);
    double s = 0.0, noise = 0.0;
    for (int k = 0; k < e.n_steps(); ++k) {
        const double tk = e.grid().node(k);
        // Regressand noise around 2 W(t_k): variance 8 E[W^2] + 14 dt.
        noise += (k == 0 ? 1.0 : 4.0) * (8.0 * tk + 14.0 * e.dt()) / e.n_paths();
        for (int p = 0; p < e.n_paths(); ++p) {
            const double d = z.at(p, k) - 2.0 * e.W(p, k);
            s += d * d;
        }
    }
    const double se = std::sqrt(noise / e.n_steps());
    EXPECT_LT(std::sqrt(s / (e.n_steps() * e.n_paths())), 4.0 * se);
    // With the exact integrand the left-point sum misses sum (dW^2 - dt), whose
    // variance is 2 T dt, relative to ||W(T)^2|| = sqrt(3 T^2).
    const double discretization = std::sqrt(2.0 * e.dt() / 3.0);
    EXPECT_NEAR(reconstruction_error(y, z, e.n_steps(), e), discretization, 0.15 * discretization);
}

TEST(MartingaleRepresentation, IntermediateNodeAndReconstruction) {
    const auto e = ensemble();
    const int t = 12;
    std::vector<double> y(e.W_node(t), e.W_node(t) + e.n_paths());
    const auto z = martingale_representation(y, t, BasisConfig{}, e);
    // The regressand is dW^2 / dt, so each node carries sampling error of order sqrt(2 m / P).
    const double se = std::sqrt(2.0 * 4.0 / e.n_paths());
    for (int k = 0; k < t; ++k) {
        double s = 0.0;
        for (int p = 0; p < e.n_paths(); ++p) s += (z.at(p, k) - 1.0) * (z.at(p, k) - 1.0);
        EXPECT_LT(std::sqrt(s / e.n_paths()), 4.0 * se) << "node " << k;
    }
    for (int k = t; k <= e.n_steps(); ++k) EXPECT_EQ(z.at(0, k), 0.0);
    EXPECT_LT(reconstruction_error(y, z, t, e), 4.0 * se);
    EXPECT_THROW(martingale_representation(std::vector<double>(3), t, BasisConfig{}, e), InvalidArgument);
}

TEST(AdaptednessDefect, SeparatesAdaptedFromAnticipating) {
    const auto e = ensemble(5000);
    const int k = 8;
    std::vector<double> adapted(e.n_paths()), future(e.n_paths());
    for (int p = 0; p < e.n_paths(); ++p) {
        adapted[p] = std::pow(e.W(p, k), 3) - e.W(p, k);
        future[p] = e.W(p, e.n_steps());
    }
    EXPECT_LT(adaptedness_defect(adapted.data(), k, e), 1e-10);
    EXPECT_GT(adaptedness_defect(future.data(), k, e), 0.3);
}
