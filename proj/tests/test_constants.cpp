#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "bsvie/constants.hpp"

using namespace bsvie;

namespace {

// Brute-force minimiser of [1 + 2 K~ N alpha] alpha^N over N = floor(K-bar)+1 .. limit.
struct BruteHat {
    long long N;
    double value;
};

BruteHat brute_hat(double K_tilde, double bar_K, long long limit) {
    BruteHat best{0, std::numeric_limits<double>::infinity()};
    for (long long N = static_cast<long long>(std::floor(bar_K)) + 1; N <= limit; ++N) {
        const double a = std::sqrt(double(N)) / (std::sqrt(double(N)) - std::sqrt(bar_K));
        const double v = (1.0 + 2.0 * K_tilde * N * a) * std::pow(a, double(N));
        if (v < best.value) best = {N, v};
    }
    return best;
}

}  // namespace

TEST(HatK, ZeroBarKGivesThree) {
    const HatK h = compute_hat_Kp(2.0, 1.0, 0.0);
    EXPECT_EQ(h.K_hat, 3.0);
    EXPECT_EQ(h.N, 1);
    EXPECT_EQ(h.alpha, 1.0);
}

TEST(HatK, AlphaAtFourAndOne) {
    EXPECT_EQ(alpha_of(4.0, 1.0), 2.0);
    EXPECT_EQ(alpha_of(9.0, 4.0), 3.0);
}

TEST(HatK, MatchesBruteForceScan) {
    for (double bar_K : {0.3, 1.0, 2.5, 7.0}) {
        for (double Kp : {1.0, 2.0}) {
            const double p = 2.0;
            const HatK h = compute_hat_Kp(p, Kp, bar_K);
            const BruteHat b = brute_hat(std::sqrt(Kp), bar_K, 2000);
            EXPECT_EQ(h.N, b.N) << "bar_K=" << bar_K;
            EXPECT_NEAR(h.K_hat / b.value, 1.0, 1e-10);
            EXPECT_GT(static_cast<double>(h.N), bar_K);
        }
    }
}

TEST(HatK, RejectsInvalidInputs) {
    EXPECT_THROW(compute_hat_Kp(1.0, 1.0, 0.0), InvalidArgument);
    EXPECT_THROW(compute_hat_Kp(2.0, 0.5, 0.0), InvalidArgument);
    EXPECT_THROW(compute_hat_Kp(2.0, 1.0, -1.0), InvalidArgument);
    EXPECT_THROW(compute_hat_Kp(2.0, 1.0, std::numeric_limits<double>::infinity()), InvalidArgument);
}

TEST(HatK, HugeBarKOverflowsToCertificationFailure) {
    EXPECT_THROW(compute_hat_Kp(2.0, 1.0, 1e6), CertificationFailure);
}

TEST(BarK, ConstantProfileClosedForm) {
    // 4 K~^2 sup_t int_t^T L^2 ds = 4 L^2 T for a constant L and K_2 = 1.
    for (double L : {0.0, 0.5, 2.0}) {
        const auto pr = LipschitzProfile::constants(1.5, 0, 0, 0, 0, L, 0);
        EXPECT_NEAR(compute_bar_K(pr), 4.0 * L * L * 1.5, 1e-10);
    }
}

TEST(BarK, TabulatedProfileIntegral) {
    // L(t,s) = s: sup_t int_t^T s^2 ds = T^3/3 at t = 0.
    const double T = 2.0;
    auto pr = LipschitzProfile::constants(T, 0, 0, 0, 0, 0, 0);
    pr.Lz[1] = ProfileFunction([](double, double s) { return s; });
    EXPECT_NEAR(compute_bar_K(pr), 4.0 * T * T * T / 3.0, 1e-4);
}

TEST(Profile, TabulatedBilinear) {
    const auto f = ProfileFunction::tabulated({0.0, 1.0}, {0.0, 1.0}, {0.0, 1.0, 2.0, 3.0});
    EXPECT_DOUBLE_EQ(f(0.0, 0.0), 0.0);
    EXPECT_DOUBLE_EQ(f(0.5, 0.5), 1.5);
    EXPECT_DOUBLE_EQ(f(2.0, 2.0), 3.0);  // clamped
    EXPECT_THROW(ProfileFunction::tabulated({0.0}, {0.0, 1.0}, {0.0, 1.0}), InvalidArgument);
}

TEST(Certify, AcceptsProfilesWithoutAnticipatingZDependence) {
    const auto c = certify(LipschitzProfile::constants(1.0, 0.5, 0.0, 0.0, 1.0, 0.7, 0.3));
    EXPECT_TRUE(c.certified);
    EXPECT_GT(c.margin, 0.0);
    EXPECT_DOUBLE_EQ(c.margin, 1.0);
}

TEST(Certify, RejectsLargeAnticipatingZDependence) {
    const auto c = certify(LipschitzProfile::constants(1.0, 0, 10.0, 0, 0, 0, 0));
    EXPECT_FALSE(c.certified);
    EXPECT_FALSE(c.k_condition);
    // K_hat = 3 so K_2^0 = 9, and sup int L_z^0^2 = 100.
    EXPECT_NEAR(c.margin, 1.0 - 9.0 * 100.0, 1e-6);
    EXPECT_FALSE(c.reason.empty());
}

TEST(Certify, SmallTimeConditionFlipsWithHorizon) {
    // L_z^0 = 0.2: margin 1 - 9 * 0.04 T is positive for T < 2.78.
    EXPECT_TRUE(certify(LipschitzProfile::constants(1.0, 0, 0.2, 0, 0, 0, 0)).certified);
    EXPECT_FALSE(certify(LipschitzProfile::constants(4.0, 0, 0.2, 0, 0, 0, 0)).certified);
}

TEST(Certify, HypothesisFollowsTransposedDependence) {
    EXPECT_TRUE(LipschitzProfile::constants(1, 0, 0, 0, 0, 0, 0).type_one());
    EXPECT_FALSE(LipschitzProfile::constants(1, 0, 0, 0, 0, 0, 0.1).type_one());
    const auto c1 = certify(LipschitzProfile::constants(1, 0, 0, 0, 0, 0, 0));
    const auto c2 = certify(LipschitzProfile::constants(1, 0, 0, 0, 0, 0, 0.1));
    EXPECT_NE(c1.hypothesis, c2.hypothesis);
}

TEST(Certify, PEqualsTwoRequiresUnitConstant) {
    auto pr = LipschitzProfile::constants(1, 0, 0, 0, 0, 0, 0);
    pr.K_p = 2.0;
    const auto c = certify(pr);
    EXPECT_FALSE(c.certified);
}

TEST(Certify, MissingComponentIsAnError) {
    LipschitzProfile pr;
    EXPECT_THROW(certify(pr), InvalidArgument);
}

TEST(Quadrature, OuterIntegralOfConstant) {
    // int_0^T ((T-t) c^q)^e dt with e = 1: c^q T^2 / 2.
    const auto f = ProfileFunction::constant(2.0);
    EXPECT_NEAR(quadrature::outer_power_integral(f, 1.0, 2.0, 1.0), 4.0 * 0.5, 1e-5);
    EXPECT_NEAR(quadrature::sup_slice_power(f, 3.0, 2.0), 12.0, 1e-9);
}
