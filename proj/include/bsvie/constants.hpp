#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "bsvie/errors.hpp"

namespace bsvie {

// Deterministic nonnegative function on the triangle {0 <= t <= s <= T}.
class ProfileFunction {
public:
    ProfileFunction() = default;
    explicit ProfileFunction(std::function<double(double, double)> f) : f_(std::move(f)) {}

    static ProfileFunction constant(double c) {
        return ProfileFunction([c](double, double) { return c; });
    }

    // Bilinear interpolation of values[i * s.size() + j] at (t[i], s[j]); clamps outside the table.
    static ProfileFunction tabulated(std::vector<double> t, std::vector<double> s, std::vector<double> values) {
        if (t.size() < 2 || s.size() < 2 || values.size() != t.size() * s.size())
            throw InvalidArgument("ProfileFunction::tabulated: inconsistent table");
        return ProfileFunction([t = std::move(t), s = std::move(s), v = std::move(values)](double tq, double sq) {
            auto locate = [](const std::vector<double>& x, double q, std::size_t& i, double& w) {
                q = std::clamp(q, x.front(), x.back());
                auto it = std::upper_bound(x.begin(), x.end(), q);
                i = std::min<std::size_t>(x.size() - 2, static_cast<std::size_t>(std::max<std::ptrdiff_t>(0, it - x.begin() - 1)));
                w = (q - x[i]) / (x[i + 1] - x[i]);
            };
            std::size_t i, j;
            double wt, ws;
            locate(t, tq, i, wt);
            locate(s, sq, j, ws);
            const std::size_t n = s.size();
            const double a = v[i * n + j] * (1 - ws) + v[i * n + j + 1] * ws;
            const double b = v[(i + 1) * n + j] * (1 - ws) + v[(i + 1) * n + j + 1] * ws;
            return a * (1 - wt) + b * wt;
        });
    }

    double operator()(double t, double s) const { return f_(t, s); }
    explicit operator bool() const { return static_cast<bool>(f_); }

private:
    std::function<double(double, double)> f_;
};

// Lipschitz metadata of a decomposed generator g = g_0 + g_1; index 0 is the
// anticipating remainder, index 1 the adapted part.
struct LipschitzProfile {
    double T = 1.0;
    double p = 2.0;
    double eps = 0.1;
    double K_p = 1.0;
    std::optional<ProfileFunction> L0[2];
    std::optional<ProfileFunction> Ly[2];
    std::optional<ProfileFunction> Lz[2];
    std::optional<ProfileFunction> Lzhat[2];

    static LipschitzProfile constants(double T, double ly0, double lz0, double lzh0, double ly1, double lz1,
                                      double lzh1, double p = 2.0) {
        LipschitzProfile out;
        out.T = T;
        out.p = p;
        out.Ly[0] = ProfileFunction::constant(ly0);
        out.Lz[0] = ProfileFunction::constant(lz0);
        out.Lzhat[0] = ProfileFunction::constant(lzh0);
        out.Ly[1] = ProfileFunction::constant(ly1);
        out.Lz[1] = ProfileFunction::constant(lz1);
        out.Lzhat[1] = ProfileFunction::constant(lzh1);
        return out;
    }

    bool type_one() const {
        // Type-I data carries no dependence on the transposed argument.
        for (int i = 0; i < 2; ++i)
            if (Lzhat[i] && sup_value(*Lzhat[i]) > 0.0) return false;
        return true;
    }

    double sup_value(const ProfileFunction& f) const {
        double m = 0.0;
        for (int a = 0; a <= 32; ++a)
            for (int b = a; b <= 32; ++b) m = std::max(m, f(T * a / 32.0, T * b / 32.0));
        return m;
    }
};

namespace quadrature {

inline constexpr int kRefinement = 512;

// Trapezoid rule for int_t^T h(s) ds on kRefinement points.
template <class H>
double slice_integral(double t, double T, H&& h) {
    if (t >= T) return 0.0;
    const int n = kRefinement - 1;
    const double ds = (T - t) / n;
    double acc = 0.5 * (h(t) + h(T));
    for (int j = 1; j < n; ++j) acc += h(t + j * ds);
    return acc * ds;
}

inline std::vector<double> t_nodes(double T) {
    std::vector<double> t(kRefinement);
    for (int i = 0; i < kRefinement; ++i) t[i] = T * i / (kRefinement - 1);
    return t;
}

// sup_t int_t^T f(t,s)^q ds
inline double sup_slice_power(const ProfileFunction& f, double T, double q) {
    double best = 0.0;
    for (double t : t_nodes(T))
        best = std::max(best, slice_integral(t, T, [&](double s) { return std::pow(f(t, s), q); }));
    return best;
}

// int_0^T ( int_t^T f(t,s)^q ds )^e dt by trapezoid in t.
inline double outer_power_integral(const ProfileFunction& f, double T, double q, double e) {
    const auto t = t_nodes(T);
    std::vector<double> inner(t.size());
    for (std::size_t i = 0; i < t.size(); ++i)
        inner[i] = std::pow(slice_integral(t[i], T, [&](double s) { return std::pow(f(t[i], s), q); }), e);
    double acc = 0.0;
    for (std::size_t i = 0; i + 1 < t.size(); ++i) acc += 0.5 * (inner[i] + inner[i + 1]) * (t[i + 1] - t[i]);
    return acc;
}

}  // namespace quadrature

inline void check_K_p(double p, double K_p) {
    if (!(p > 1.0)) throw InvalidArgument("profile: p must exceed 1");
    if (!(K_p >= 1.0) || !std::isfinite(K_p)) throw InvalidArgument("profile: K_p must be a finite constant >= 1");
}

// K-bar = 4 K~_p^2 sup_t int_t^T L_z^1(t,s)^2 ds.
inline double compute_bar_K(const LipschitzProfile& profile) {
    if (!profile.Lz[1]) throw InvalidArgument("compute_bar_K: missing L_z^1 profile");
    check_K_p(profile.p, profile.K_p);
    const double kt = std::pow(profile.K_p, 1.0 / profile.p);
    const double sup = quadrature::sup_slice_power(*profile.Lz[1], profile.T, 2.0);
    if (!std::isfinite(sup)) throw CertificationFailure("compute_bar_K: L_z^1 integral is not finite");
    return 4.0 * kt * kt * sup;
}

struct HatK {
    double K_hat = 1.0;
    long long N = 1;
    double alpha = 1.0;
    double log_K_hat = 0.0;
};

inline double alpha_of(double N, double bar_K) { return std::sqrt(N) / (std::sqrt(N) - std::sqrt(bar_K)); }

// Natural log of [1 + 2 K~ N alpha] alpha^N.
inline double log_hat_objective(double N, double K_tilde, double bar_K) {
    const double a = alpha_of(N, bar_K);
    return std::log1p(2.0 * K_tilde * N * a) + N * std::log(a);
}

// Minimizes the objective over integers N > K-bar by a forward scan that stops once
// 50 consecutive N fail to improve the running minimum.
inline HatK compute_hat_Kp(double p, double K_p, double bar_K) {
    check_K_p(p, K_p);
    if (!(bar_K >= 0.0) || !std::isfinite(bar_K)) throw InvalidArgument("compute_hat_Kp: K-bar must be finite and >= 0");
    const double kt = std::pow(K_p, 1.0 / p);
    const long long start = static_cast<long long>(std::floor(bar_K)) + 1;
    constexpr int kPatience = 50;
    constexpr long long kMaxScan = 50'000'000;

    long long best_N = start;
    double best = log_hat_objective(static_cast<double>(start), kt, bar_K);
    int misses = 0;
    for (long long N = start + 1; misses < kPatience; ++N) {
        if (N - start > kMaxScan) throw CertificationFailure("compute_hat_Kp: scan did not settle");
        const double v = log_hat_objective(static_cast<double>(N), kt, bar_K);
        if (v < best) {
            best = v;
            best_N = N;
            misses = 0;
        } else {
            ++misses;
        }
    }
    if (!std::isfinite(best) || best > 700.0)
        throw CertificationFailure("compute_hat_Kp: objective overflows (log K-hat = " + std::to_string(best) +
                                   ", K-bar = " + std::to_string(bar_K) + ")");
    // Evaluated directly rather than through exp(log) so exact cases such as K-bar = 0 stay exact.
    const double a = alpha_of(static_cast<double>(best_N), bar_K);
    const double direct = (1.0 + 2.0 * kt * static_cast<double>(best_N) * a) * std::pow(a, static_cast<double>(best_N));
    return {std::isfinite(direct) ? direct : std::exp(best), best_N, a, best};
}

struct WellPosednessCertificate {
    double p = 2.0;
    double K_p = 1.0;
    double K_tilde = 1.0;
    double bar_K = 0.0;
    long long N_p = 1;
    double alpha = 1.0;
    double K_hat = 3.0;
    double K_p0 = 9.0;
    double sup_int_Lz0_sq = 0.0;
    double sup_int_Lz1_sq = 0.0;
    double integral_3_3 = 0.0;       // exponent (p^2)(1+eps)/((p^2)-1), used for Type-II
    double integral_3_3_star = 0.0;  // exponent p(1+eps)/(p-1), used for Type-I
    bool finite_3_3 = true;
    bool finite_3_3_star = true;
    std::string hypothesis = "H3_p";
    bool k_condition = true;
    double margin = 1.0;
    bool certified = true;
    std::string reason;
};

inline WellPosednessCertificate certify(const LipschitzProfile& profile) {
    for (int i = 0; i < 2; ++i)
        if (!profile.Ly[i] || !profile.Lz[i] || !profile.Lzhat[i])
            throw InvalidArgument("certify: profile is missing an L_y, L_z or L_zhat component");
    if (!(profile.T > 0.0)) throw InvalidArgument("certify: horizon must be positive");
    check_K_p(profile.p, profile.K_p);
    if (!(profile.eps > 0.0)) throw InvalidArgument("certify: eps must be positive");

    WellPosednessCertificate c;
    c.p = profile.p;
    c.K_p = profile.K_p;
    c.K_tilde = std::pow(profile.K_p, 1.0 / profile.p);
    c.hypothesis = profile.type_one() ? "H3_p_prime" : "H3_p";

    const double T = profile.T, p = profile.p, eps = profile.eps;
    const double pm = std::min(p, 2.0);
    const double q = pm * (1.0 + eps) / (pm - 1.0);
    const double q_star = p * (1.0 + eps) / (p - 1.0);

    double i33 = 0.0, i33s = 0.0;
    for (int i = 0; i < 2; ++i) {
        const double sup_z = quadrature::sup_slice_power(*profile.Lz[i], T, 2.0);
        i33 += quadrature::outer_power_integral(*profile.Ly[i], T, q, pm - 1.0) + sup_z +
               quadrature::sup_slice_power(*profile.Lzhat[i], T, q);
        i33s += quadrature::outer_power_integral(*profile.Ly[i], T, q_star, p - 1.0) + sup_z;
        if (i == 0) c.sup_int_Lz0_sq = sup_z;
        if (i == 1) c.sup_int_Lz1_sq = sup_z;
    }
    c.integral_3_3 = i33;
    c.integral_3_3_star = i33s;
    c.finite_3_3 = std::isfinite(i33);
    c.finite_3_3_star = std::isfinite(i33s);

    if (p == 2.0 && profile.K_p != 1.0) {
        c.certified = false;
        c.k_condition = false;
        c.margin = -std::numeric_limits<double>::infinity();
        c.reason = "K_2 must equal 1 (the martingale moment inequality is an equality at p = 2)";
        return c;
    }

    c.bar_K = compute_bar_K(profile);
    const HatK hk = compute_hat_Kp(p, profile.K_p, c.bar_K);
    c.K_hat = hk.K_hat;
    c.N_p = hk.N;
    c.alpha = hk.alpha;
    c.K_p0 = std::pow(hk.K_hat, p);
    c.margin = 1.0 - c.K_p0 * std::pow(c.sup_int_Lz0_sq, p / 2.0);
    c.k_condition = c.margin > 0.0;

    const bool finite = (c.hypothesis == "H3_p_prime") ? c.finite_3_3_star : c.finite_3_3;
    c.certified = finite && c.k_condition;
    if (!finite) c.reason = "integrability condition of " + c.hypothesis + " fails";
    else if (!c.k_condition) c.reason = "size condition K_p^0 sup_t (int L_z^0^2)^{p/2} < 1 fails";
    return c;
}

}  // namespace bsvie
