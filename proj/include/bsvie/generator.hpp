#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "bsvie/constants.hpp"
#include "bsvie/regression.hpp"
#include "bsvie/stochastic_core.hpp"

namespace bsvie {

enum class Measurability { adapted, anticipating };

inline const char* to_string(Measurability m) { return m == Measurability::adapted ? "adapted" : "anticipating"; }

// Arguments of g(t_i, s_k, y, z, zhat) for one (t, s) pair across all paths.
// A null pointer stands for the zero argument.
struct SliceArgs {
    int t_index = 0;
    int s_index = 0;
    const double* y = nullptr;     // Y(s_k)
    const double* z = nullptr;     // Z(t_i, s_k)
    const double* zhat = nullptr;  // Z(s_k, t_i)
};

using SliceEvaluator = std::function<void(const BrownianEnsemble&, const SliceArgs&, double* out)>;

struct GeneratorSpec {
    std::string id;
    bool uses_y = false;
    bool uses_z = false;
    bool uses_zhat = false;
    Measurability measurability = Measurability::adapted;
    LipschitzProfile profile;
    SliceEvaluator eval;
    // Closed-form E_s[g] for catalogued analytic cases; empty otherwise.
    SliceEvaluator exact_g1;

    std::vector<double> evaluate(const BrownianEnsemble& ens, const SliceArgs& a) const {
        std::vector<double> out(ens.n_paths());
        eval(ens, a, out.data());
        return out;
    }
};

// a * g + b * h, evaluated pointwise.
inline GeneratorSpec linear_combination(double a, const GeneratorSpec& g, double b, const GeneratorSpec& h) {
    GeneratorSpec out;
    out.id = "combo";
    out.uses_y = g.uses_y || h.uses_y;
    out.uses_z = g.uses_z || h.uses_z;
    out.uses_zhat = g.uses_zhat || h.uses_zhat;
    out.measurability = (g.measurability == Measurability::adapted && h.measurability == Measurability::adapted)
                            ? Measurability::adapted
                            : Measurability::anticipating;
    out.eval = [a, b, g, h](const BrownianEnsemble& ens, const SliceArgs& s, double* o) {
        std::vector<double> tmp(ens.n_paths());
        g.eval(ens, s, o);
        h.eval(ens, s, tmp.data());
        for (int p = 0; p < ens.n_paths(); ++p) o[p] = a * o[p] + b * tmp[p];
    };
    return out;
}

// One decomposed slice: g1 = E_s[g] by regression at frozen arguments, g0 = g - g1.
struct DecomposedSlice {
    int node = 0;
    std::vector<double> g;
    std::vector<double> g1;
    std::vector<double> g0;
    Eigen::VectorXd coefficients;
};

class DecomposedGenerator {
public:
    DecomposedGenerator(GeneratorSpec g, const BrownianEnsemble& ens, BasisConfig basis)
        : g_(std::move(g)), ens_(&ens), basis_(basis) {}

    const GeneratorSpec& generator() const { return g_; }
    const BasisConfig& basis() const { return basis_; }

    DecomposedSlice slice(const SliceArgs& a) const {
        DecomposedSlice d;
        d.node = a.s_index;
        d.g = g_.evaluate(*ens_, a);
        NodeProjector proj(*ens_, a.s_index, basis_);
        d.coefficients = proj.coefficients(d.g.data());
        d.g1.resize(d.g.size());
        proj.evaluate(d.coefficients, d.g1.data());
        d.g0.resize(d.g.size());
        for (std::size_t p = 0; p < d.g.size(); ++p) d.g0[p] = d.g[p] - d.g1[p];
        return d;
    }

    // The fitted g1 of one slice as a generator in its own right: it reads W(s_k) only,
    // through the stored regression coefficients.
    GeneratorSpec adapted_part(const SliceArgs& a) const {
        const DecomposedSlice d = slice(a);
        const NodeProjector proj(*ens_, a.s_index, basis_);
        GeneratorSpec out;
        out.id = g_.id + ":g1";
        out.measurability = Measurability::adapted;
        const Eigen::VectorXd c = d.coefficients;
        const int node = a.s_index;
        out.eval = [c, node, proj](const BrownianEnsemble& ens, const SliceArgs&, double* o) {
            const double* w = ens.W_node(node);
            for (int p = 0; p < ens.n_paths(); ++p) o[p] = proj.features(w[p]).dot(c);
        };
        return out;
    }

private:
    GeneratorSpec g_;
    const BrownianEnsemble* ens_;
    BasisConfig basis_;
};

inline DecomposedGenerator decompose(const GeneratorSpec& g, const BrownianEnsemble& ens, const BasisConfig& basis) {
    return DecomposedGenerator(g, ens, basis);
}

struct AdaptednessReport {
    int node = 0;
    double max_deviation = 0.0;
    bool adapted = true;
};

// Re-evaluates g after redrawing every increment on steps >= s and reports the largest
// pathwise change. The frozen (y, z, zhat) arrays are shared by both evaluations.
inline AdaptednessReport verify_adaptedness(const GeneratorSpec& g, const BrownianEnsemble& ens, int s_node,
                                            SliceArgs args = {}, std::uint64_t resample_seed = 0x5EEDull,
                                            double threshold = 1e-12) {
    args.s_index = s_node;
    const auto base = g.evaluate(ens, args);
    const BrownianEnsemble alt = resample_after(ens, s_node, resample_seed);
    const auto other = g.evaluate(alt, args);
    AdaptednessReport r;
    r.node = s_node;
    for (std::size_t p = 0; p < base.size(); ++p) r.max_deviation = std::max(r.max_deviation, std::abs(base[p] - other[p]));
    r.adapted = r.max_deviation <= threshold;
    return r;
}

}  // namespace bsvie
