#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "bsvie/stochastic_core.hpp"

using namespace bsvie;

namespace {

double mean(const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 0.0) / v.size(); }

}  // namespace

TEST(TimeGrid, NodesAndSpacing) {
    const TimeGrid g = make_grid(2.0, 8);
    EXPECT_DOUBLE_EQ(g.dt, 0.25);
    EXPECT_EQ(g.n_nodes(), 9);
    EXPECT_DOUBLE_EQ(g.node(0), 0.0);
    EXPECT_DOUBLE_EQ(g.node(8), 2.0);
    EXPECT_DOUBLE_EQ(g.node(3), 0.75);
}

TEST(TimeGrid, RejectsBadInput) {
    EXPECT_THROW(make_grid(0.0, 10), InvalidArgument);
    EXPECT_THROW(make_grid(-1.0, 10), InvalidArgument);
    EXPECT_THROW(make_grid(1.0, 1), InvalidArgument);
    EXPECT_THROW(make_grid(std::nan(""), 10), InvalidArgument);
}

TEST(Brownian, SameSeedSameIncrementsAnyWorkerCount) {
    const TimeGrid g = make_grid(1.0, 10);
    const auto a = simulate_brownian(g, 500, 7, 1);
    const auto b = simulate_brownian(g, 500, 7, 4);
    for (int k = 0; k < 10; ++k)
        for (int p = 0; p < 500; ++p) ASSERT_EQ(a.dW(p, k), b.dW(p, k));
    const auto c = simulate_brownian(g, 500, 8, 1);
    EXPECT_NE(a.dW(0, 0), c.dW(0, 0));
}

TEST(Brownian, PathsIndependentOfEnsembleSize) {
    // Counter-based draws: path p is the same whether 100 or 1000 paths are simulated.
    const TimeGrid g = make_grid(1.0, 5);
    const auto small = simulate_brownian(g, 100, 3);
    const auto large = simulate_brownian(g, 1000, 3);
    for (int p = 0; p < 100; ++p)
        for (int k = 0; k < 5; ++k) ASSERT_EQ(small.dW(p, k), large.dW(p, k));
}

TEST(Brownian, CumulativeSumsMatchIncrements) {
    const auto e = simulate_brownian(make_grid(1.0, 20), 50, 11);
    for (int p = 0; p < 50; ++p) {
        double acc = 0.0;
        EXPECT_EQ(e.W(p, 0), 0.0);
        for (int k = 0; k < 20; ++k) {
            acc += e.dW(p, k);
            EXPECT_NEAR(e.W(p, k + 1), acc, 1e-14);
        }
    }
}

TEST(Brownian, IncrementMomentsMatchGaussianLaw) {
    const TimeGrid g = make_grid(1.0, 10);
    const int P = 200000;
    const auto e = simulate_brownian(g, P, 2024);
    double m1 = 0, m2 = 0, m4 = 0;
    for (int p = 0; p < P; ++p) {
        const double x = e.dW(p, 4);
        m1 += x;
        m2 += x * x;
        m4 += x * x * x * x;
    }
    m1 /= P;
    m2 /= P;
    m4 /= P;
    EXPECT_NEAR(m1, 0.0, 5.0 * std::sqrt(g.dt / P));
    EXPECT_NEAR(m2 / g.dt, 1.0, 0.02);
    EXPECT_NEAR(m4 / (g.dt * g.dt), 3.0, 0.1);
    // Independence across steps.
    double c = 0;
    for (int p = 0; p < P; ++p) c += e.dW(p, 2) * e.dW(p, 7);
    EXPECT_NEAR(c / P / g.dt, 0.0, 0.02);
}

TEST(Brownian, ResampleAfterKeepsThePast) {
    const auto e = simulate_brownian(make_grid(1.0, 10), 200, 5);
    const auto r = resample_after(e, 4, 99);
    int changed = 0;
    for (int p = 0; p < 200; ++p) {
        for (int k = 0; k < 4; ++k) ASSERT_EQ(e.dW(p, k), r.dW(p, k));
        for (int k = 4; k < 10; ++k) changed += e.dW(p, k) != r.dW(p, k);
        EXPECT_DOUBLE_EQ(e.W(p, 4), r.W(p, 4));
    }
    EXPECT_EQ(changed, 200 * 6);
}

TEST(Brownian, CoarsenSumsIncrements) {
    const auto e = simulate_brownian(make_grid(1.0, 12), 30, 1);
    const auto c = coarsen(e, 3);
    EXPECT_EQ(c.n_steps(), 4);
    EXPECT_DOUBLE_EQ(c.dt(), 0.25);
    for (int p = 0; p < 30; ++p)
        for (int j = 0; j <= 4; ++j) EXPECT_NEAR(c.W(p, j), e.W(p, 3 * j), 1e-14);
    EXPECT_THROW(coarsen(e, 5), InvalidArgument);
}

TEST(Brownian, SubsetKeepsLeadingPaths) {
    const auto e = simulate_brownian(make_grid(1.0, 6), 40, 1);
    const auto s = subset_paths(e, 10);
    EXPECT_EQ(s.n_paths(), 10);
    for (int p = 0; p < 10; ++p)
        for (int j = 0; j <= 6; ++j) EXPECT_EQ(s.W(p, j), e.W(p, j));
    EXPECT_THROW(subset_paths(e, 41), InvalidArgument);
}

TEST(RandomField, DomainsAndIndexing) {
    const TimeGrid g = make_grid(1.0, 4);
    RandomField tri = make_triangle_field(g, 3);
    EXPECT_TRUE(tri.valid(1, 1));
    EXPECT_TRUE(tri.valid(1, 3));
    EXPECT_FALSE(tri.valid(2, 1));
    EXPECT_FALSE(tri.valid(4, 4));  // intervals end at n-1
    EXPECT_THROW(tri.slice(2, 1), InvalidArgument);
    tri.at(2, 1, 3) = 5.0;
    EXPECT_EQ(tri.slice(1, 3)[2], 5.0);

    tri.extend_to_square();
    EXPECT_EQ(tri.domain(), FieldDomain::square);
    EXPECT_TRUE(tri.valid(3, 0));
    EXPECT_EQ(tri.at(0, 3, 0), 0.0);
    EXPECT_EQ(tri.at(2, 1, 3), 5.0);

    RandomField nodes(g, 2, FieldDomain::node_triangle);
    EXPECT_TRUE(nodes.valid(4, 4));
    EXPECT_FALSE(nodes.valid(3, 2));
    EXPECT_THROW(nodes.extend_to_square(), InvalidArgument);
}

TEST(Integrals, DeterministicIntegrandsHaveClosedForms) {
    const auto e = simulate_brownian(make_grid(1.0, 10), 100, 3);
    PathProcess one(e.grid(), e.n_paths(), 1.0);
    const auto leb = lebesgue_integral(one, e, 2, 7);
    const auto ito = ito_integral(one, e, 0, 10);
    for (int p = 0; p < 100; ++p) {
        EXPECT_NEAR(leb[p], 0.5, 1e-12);
        EXPECT_NEAR(ito[p], e.W(p, 10), 1e-12);
    }
    EXPECT_THROW(ito_integral(one, e, 5, 3), InvalidArgument);
    EXPECT_THROW(lebesgue_integral(one, e, 0, 11), InvalidArgument);
}

TEST(Integrals, ItoIsometryAndZeroMean) {
    // int W dW has mean 0 and second moment int s ds = T^2/2.
    const TimeGrid g = make_grid(1.0, 50);
    const auto e = simulate_brownian(g, 100000, 17);
    PathProcess w(g, e.n_paths());
    for (int j = 0; j <= g.n_steps; ++j) std::copy(e.W_node(j), e.W_node(j) + e.n_paths(), w.node(j));
    const auto I = ito_integral(w, e, 0, g.n_steps);
    std::vector<double> sq(I.size());
    for (std::size_t p = 0; p < I.size(); ++p) sq[p] = I[p] * I[p];
    EXPECT_NEAR(mean(I), 0.0, 0.01);
    // Left-point sum: E = sum_k s_k dt = T^2/2 - T dt/2.
    EXPECT_NEAR(mean(sq), 0.5 - 0.5 * g.dt, 0.015);
}

TEST(MomentRatio, PEqualsTwoIsIsometry) {
    const TimeGrid g = make_grid(1.0, 50);
    const auto e = simulate_brownian(g, 100000, 123);
    PathProcess z(g, e.n_paths());
    for (int j = 0; j <= g.n_steps; ++j)
        for (int p = 0; p < e.n_paths(); ++p) z.node(j)[p] = std::cos(e.W(p, j));
    const auto r = martingale_moment_ratio(z, e, 2.0);
    EXPECT_FALSE(r.degenerate);
    EXPECT_NEAR(r.ratio, 1.0, 0.03);
}

TEST(MomentRatio, ConstantIntegrandAtPFour) {
    // z = 1: E(int 1 ds)^2 / E W(T)^4 = T^2 / (3 T^2) = 1/3.
    const TimeGrid g = make_grid(1.0, 50);
    const auto e = simulate_brownian(g, 100000, 321);
    PathProcess z(g, e.n_paths(), 1.0);
    const auto r = martingale_moment_ratio(z, e, 4.0);
    EXPECT_NEAR(r.ratio, 1.0 / 3.0, 0.1 / 3.0);
}

TEST(MomentRatio, ZeroIntegrandIsDegenerate) {
    const auto e = simulate_brownian(make_grid(1.0, 5), 100, 1);
    PathProcess z(e.grid(), e.n_paths());
    EXPECT_TRUE(martingale_moment_ratio(z, e, 2.0).degenerate);
    EXPECT_THROW(martingale_moment_ratio(z, e, 1.0), InvalidArgument);
}
