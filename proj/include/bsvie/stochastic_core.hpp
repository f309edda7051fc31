#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <string>
#include <utility>
#include <vector>

#include "bsvie/errors.hpp"
#include "bsvie/parallel.hpp"

namespace bsvie {

// ---------------------------------------------------------------------------
// Time discretization
// ---------------------------------------------------------------------------

struct TimeGrid {
    double T = 1.0;
    int n_steps = 2;
    double dt = 0.5;

    double node(int j) const { return j == n_steps ? T : dt * j; }
    int n_nodes() const { return n_steps + 1; }
    std::vector<double> nodes() const {
        std::vector<double> out(n_nodes());
        for (int j = 0; j <= n_steps; ++j) out[j] = node(j);
        return out;
    }
};

inline TimeGrid make_grid(double T, int n_steps) {
    if (!(T > 0.0) || !std::isfinite(T)) throw InvalidArgument("make_grid: horizon must be positive");
    if (n_steps < 2) throw InvalidArgument("make_grid: need at least two steps");
    return TimeGrid{T, n_steps, T / n_steps};
}

// ---------------------------------------------------------------------------
// Counter-based Gaussian stream. Every (seed, path, index) triple maps to a fixed
// normal draw, so any subset of paths can be generated independently and in any order.
// ---------------------------------------------------------------------------

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
}

inline double to_unit_open(std::uint64_t bits) {
    // 53 random bits mapped into (0, 1).
    return (static_cast<double>(bits >> 11) + 0.5) * 0x1.0p-53;
}

inline std::uint64_t path_key(std::uint64_t seed, std::uint64_t path) {
    return splitmix64(splitmix64(seed) ^ (path * 0xD1B54A32D192ED03ull));
}

// Pair of independent standard normals for counter `c` on stream `key` (Box-Muller).
inline std::pair<double, double> normal_pair(std::uint64_t key, std::uint64_t c) {
    const double u1 = to_unit_open(splitmix64(key ^ (2 * c + 1) * 0x9FB21C651E98DF25ull));
    const double u2 = to_unit_open(splitmix64(key + (2 * c + 2) * 0xC2B2AE3D27D4EB4Full));
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 2.0 * std::numbers::pi * u2;
    return {r * std::cos(a), r * std::sin(a)};
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Brownian ensemble. Storage is step-major so that one time slice across all paths
// is contiguous; the logical view is W[path][node].
// ---------------------------------------------------------------------------

class BrownianEnsemble {
public:
    BrownianEnsemble() = default;
    BrownianEnsemble(TimeGrid grid, int n_paths, std::uint64_t seed)
        : grid_(grid), n_paths_(n_paths), seed_(seed),
          dW_(static_cast<std::size_t>(grid.n_steps) * n_paths, 0.0),
          W_(static_cast<std::size_t>(grid.n_steps + 1) * n_paths, 0.0) {}

    const TimeGrid& grid() const { return grid_; }
    int n_paths() const { return n_paths_; }
    int n_steps() const { return grid_.n_steps; }
    std::uint64_t seed() const { return seed_; }
    double dt() const { return grid_.dt; }

    double dW(int path, int step) const { return dW_[idx(step, path)]; }
    double W(int path, int node) const { return W_[idx(node, path)]; }
    const double* dW_step(int step) const { return dW_.data() + idx(step, 0); }
    const double* W_node(int node) const { return W_.data() + idx(node, 0); }

    double* mutable_dW_step(int step) { return dW_.data() + idx(step, 0); }

    // Rebuilds cumulative sums from increments. Called once after construction.
    void accumulate(int workers = 1) {
        parallel_for(static_cast<std::size_t>(n_paths_), workers, [&](std::size_t b, std::size_t e) {
            for (std::size_t p = b; p < e; ++p) {
                W_[p] = 0.0;
                double acc = 0.0;
                for (int k = 0; k < grid_.n_steps; ++k) {
                    acc += dW_[idx(k, static_cast<int>(p))];
                    W_[idx(k + 1, static_cast<int>(p))] = acc;
                }
            }
        });
    }

private:
    std::size_t idx(int row, int path) const {
        return static_cast<std::size_t>(row) * n_paths_ + static_cast<std::size_t>(path);
    }
    TimeGrid grid_{};
    int n_paths_ = 0;
    std::uint64_t seed_ = 0;
    std::vector<double> dW_;
    std::vector<double> W_;
};

namespace detail {

inline void fill_increments(BrownianEnsemble& ens, std::uint64_t seed, int from_step, int workers) {
    const int n = ens.n_steps();
    const double sd = std::sqrt(ens.dt());
    parallel_for(static_cast<std::size_t>(ens.n_paths()), workers, [&](std::size_t b, std::size_t e) {
        for (std::size_t p = b; p < e; ++p) {
            const std::uint64_t key = path_key(seed, p);
            for (int k = from_step; k < n; ++k) {
                const auto pair = normal_pair(key, static_cast<std::uint64_t>(k / 2));
                const double z = (k % 2 == 0) ? pair.first : pair.second;
                ens.mutable_dW_step(k)[p] = sd * z;
            }
        }
    });
}

}  // namespace detail

inline BrownianEnsemble simulate_brownian(const TimeGrid& grid, int n_paths, std::uint64_t seed, int workers = 1) {
    if (n_paths < 1) throw InvalidArgument("simulate_brownian: need at least one path");
    BrownianEnsemble ens(grid, n_paths, seed);
    detail::fill_increments(ens, seed, 0, workers);
    ens.accumulate(workers);
    return ens;
}

// Copy of `ens` whose increments on steps >= from_step are redrawn from another stream.
// Anything adapted to the filtration at node from_step is unchanged on the copy.
inline BrownianEnsemble resample_after(const BrownianEnsemble& ens, int from_step, std::uint64_t new_seed) {
    if (from_step < 0 || from_step > ens.n_steps()) throw InvalidArgument("resample_after: step out of range");
    BrownianEnsemble out = ens;
    detail::fill_increments(out, new_seed ^ 0xA5A5A5A5DEADBEEFull, from_step, 1);
    out.accumulate();
    return out;
}

// Aggregates increments in blocks of `factor` steps; the coarse ensemble lives on the
// same Brownian paths, which is what resolution ladders compare against.
inline BrownianEnsemble coarsen(const BrownianEnsemble& ens, int factor) {
    if (factor < 1 || ens.n_steps() % factor != 0) throw InvalidArgument("coarsen: factor must divide n_steps");
    const TimeGrid g = make_grid(ens.grid().T, ens.n_steps() / factor);
    BrownianEnsemble out(g, ens.n_paths(), ens.seed());
    for (int k = 0; k < g.n_steps; ++k) {
        double* dst = out.mutable_dW_step(k);
        for (int f = 0; f < factor; ++f) {
            const double* src = ens.dW_step(k * factor + f);
            for (int p = 0; p < ens.n_paths(); ++p) dst[p] += src[p];
        }
    }
    out.accumulate();
    return out;
}

// The first `count` paths of an ensemble (same draws, by the counter-based construction).
inline BrownianEnsemble subset_paths(const BrownianEnsemble& ens, int count) {
    if (count < 1 || count > ens.n_paths()) throw InvalidArgument("subset_paths: count out of range");
    BrownianEnsemble out(ens.grid(), count, ens.seed());
    for (int k = 0; k < ens.n_steps(); ++k) {
        const double* src = ens.dW_step(k);
        std::copy(src, src + count, out.mutable_dW_step(k));
    }
    out.accumulate();
    return out;
}

// ---------------------------------------------------------------------------
// One-parameter process X[path][node], node-major storage.
// ---------------------------------------------------------------------------

class PathProcess {
public:
    PathProcess() = default;
    PathProcess(const TimeGrid& grid, int n_paths, double fill = 0.0)
        : grid_(grid), n_paths_(n_paths), v_(static_cast<std::size_t>(grid.n_steps + 1) * n_paths, fill) {}

    const TimeGrid& grid() const { return grid_; }
    int n_paths() const { return n_paths_; }
    int n_nodes() const { return grid_.n_steps + 1; }

    double at(int path, int node) const { return v_[idx(node, path)]; }
    double& at(int path, int node) { return v_[idx(node, path)]; }
    const double* node(int j) const { return v_.data() + idx(j, 0); }
    double* node(int j) { return v_.data() + idx(j, 0); }
    const std::vector<double>& raw() const { return v_; }

private:
    std::size_t idx(int node, int path) const {
        if (node < 0 || node > grid_.n_steps) throw InvalidArgument("PathProcess: node out of range");
        return static_cast<std::size_t>(node) * n_paths_ + static_cast<std::size_t>(path);
    }
    TimeGrid grid_{};
    int n_paths_ = 0;
    std::vector<double> v_;
};

// ---------------------------------------------------------------------------
// Two-parameter random field Z[path][i][j].
//
// Row i is the time parameter t_i (0..n). Column j is the step interval
// [s_j, s_{j+1}) for interval domains, or the node s_j for the node domain.
//   triangle      : j >= i, j < n      (Z(t,s) for s > t, first interval starts at t_i)
//   square        : all 0 <= j < n     (M-solutions; j < i filled by the M-extension)
//   node_triangle : i <= j <= n        (per-t processes on [t, T], e.g. FBSDE families)
// Each (i, j) slice stores all paths contiguously.
// ---------------------------------------------------------------------------

enum class FieldDomain { triangle, square, node_triangle };

class RandomField {
public:
    RandomField() = default;
    RandomField(const TimeGrid& grid, int n_paths, FieldDomain domain)
        : grid_(grid), n_paths_(n_paths), domain_(domain) {
        const int rows = grid.n_steps + 1;
        slices_.resize(rows);
        for (int i = 0; i < rows; ++i) {
            slices_[i].resize(static_cast<std::size_t>(n_cols()));
            for (int j = 0; j < n_cols(); ++j)
                if (valid(i, j)) slices_[i][j].assign(n_paths, 0.0);
        }
    }

    const TimeGrid& grid() const { return grid_; }
    int n_paths() const { return n_paths_; }
    FieldDomain domain() const { return domain_; }
    int n_rows() const { return grid_.n_steps + 1; }
    int n_cols() const { return domain_ == FieldDomain::node_triangle ? grid_.n_steps + 1 : grid_.n_steps; }

    bool valid(int i, int j) const {
        if (i < 0 || i > grid_.n_steps || j < 0 || j >= n_cols()) return false;
        switch (domain_) {
            case FieldDomain::triangle: return j >= i;
            case FieldDomain::square: return true;
            case FieldDomain::node_triangle: return j >= i;
        }
        return false;
    }

    const double* slice(int i, int j) const { check(i, j); return slices_[i][j].data(); }
    double* slice(int i, int j) { check(i, j); return slices_[i][j].data(); }
    double at(int path, int i, int j) const { return slice(i, j)[path]; }
    double& at(int path, int i, int j) { return slice(i, j)[path]; }

    // Turns a triangle into a square by allocating the lower part (filled with zeros).
    void extend_to_square() {
        if (domain_ == FieldDomain::square) return;
        if (domain_ != FieldDomain::triangle) throw InvalidArgument("RandomField: only triangles extend to squares");
        domain_ = FieldDomain::square;
        for (int i = 0; i < n_rows(); ++i)
            for (int j = 0; j < std::min(i, n_cols()); ++j) slices_[i][j].assign(n_paths_, 0.0);
    }

    std::size_t stored_values() const {
        std::size_t total = 0;
        for (const auto& row : slices_)
            for (const auto& s : row) total += s.size();
        return total;
    }

private:
    void check(int i, int j) const {
        if (!valid(i, j))
            throw InvalidArgument("RandomField: index (" + std::to_string(i) + "," + std::to_string(j) +
                                  ") outside the field domain");
    }
    TimeGrid grid_{};
    int n_paths_ = 0;
    FieldDomain domain_ = FieldDomain::triangle;
    std::vector<std::vector<std::vector<double>>> slices_;
};

inline RandomField make_triangle_field(const TimeGrid& g, int n_paths) {
    return RandomField(g, n_paths, FieldDomain::triangle);
}
inline RandomField make_square_field(const TimeGrid& g, int n_paths) {
    return RandomField(g, n_paths, FieldDomain::square);
}

// ---------------------------------------------------------------------------
// Discrete integrals (left-point rule). `slice_at(k)` returns the integrand values on
// step k for all paths.
// ---------------------------------------------------------------------------

template <class SliceFn>
std::vector<double> ito_sum(const BrownianEnsemble& ens, int from, int to, SliceFn&& slice_at) {
    if (from > to) throw InvalidArgument("ito_integral: from > to");
    if (from < 0 || to > ens.n_steps()) throw InvalidArgument("ito_integral: node out of range");
    std::vector<double> out(ens.n_paths(), 0.0);
    for (int k = from; k < to; ++k) {
        const double* z = slice_at(k);
        const double* dw = ens.dW_step(k);
        for (int p = 0; p < ens.n_paths(); ++p) out[p] += z[p] * dw[p];
    }
    return out;
}

template <class SliceFn>
std::vector<double> lebesgue_sum(const BrownianEnsemble& ens, int from, int to, SliceFn&& slice_at) {
    if (from > to) throw InvalidArgument("lebesgue_integral: from > to");
    if (from < 0 || to > ens.n_steps()) throw InvalidArgument("lebesgue_integral: node out of range");
    std::vector<double> out(ens.n_paths(), 0.0);
    const double dt = ens.dt();
    for (int k = from; k < to; ++k) {
        const double* z = slice_at(k);
        for (int p = 0; p < ens.n_paths(); ++p) out[p] += z[p] * dt;
    }
    return out;
}

inline std::vector<double> ito_integral(const PathProcess& x, const BrownianEnsemble& ens, int from, int to) {
    return ito_sum(ens, from, to, [&](int k) { return x.node(k); });
}

// Integral of one row of a field, Z(t_i, .) over steps [from, to).
inline std::vector<double> ito_integral(const RandomField& z, int row, const BrownianEnsemble& ens, int from, int to) {
    return ito_sum(ens, from, to, [&](int k) { return z.slice(row, k); });
}

inline std::vector<double> lebesgue_integral(const PathProcess& x, const BrownianEnsemble& ens, int from, int to) {
    return lebesgue_sum(ens, from, to, [&](int k) { return x.node(k); });
}

inline std::vector<double> lebesgue_integral(const RandomField& z, int row, const BrownianEnsemble& ens, int from, int to) {
    return lebesgue_sum(ens, from, to, [&](int k) { return z.slice(row, k); });
}

struct MomentRatio {
    double ratio = 1.0;
    bool degenerate = false;
};

// Empirical E(int |z|^2 ds)^{p/2} / E|int z dW|^p over [0, T].
inline MomentRatio martingale_moment_ratio(const PathProcess& z, const BrownianEnsemble& ens, double p) {
    if (!(p > 1.0)) throw InvalidArgument("martingale_moment_ratio: p must exceed 1");
    const auto stoch = ito_integral(z, ens, 0, ens.n_steps());
    std::vector<double> quad(ens.n_paths(), 0.0);
    for (int k = 0; k < ens.n_steps(); ++k) {
        const double* zk = z.node(k);
        for (int q = 0; q < ens.n_paths(); ++q) quad[q] += zk[q] * zk[q] * ens.dt();
    }
    double num = 0.0, den = 0.0;
    for (int q = 0; q < ens.n_paths(); ++q) {
        num += std::pow(quad[q], p / 2.0);
        den += std::pow(std::abs(stoch[q]), p);
    }
    if (num == 0.0) return {1.0, true};
    if (den == 0.0) return {1.0, true};
    return {num / den, false};
}

}  // namespace bsvie
