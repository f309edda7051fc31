#pragma once

#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <Eigen/Eigenvalues>
#include <Eigen/QR>

#include "bsvie/errors.hpp"
#include "bsvie/stochastic_core.hpp"

namespace bsvie {

// Polynomial basis in the Markov statistic W(s). At a fixed node s is a constant,
// so the s-direction contributes nothing beyond the intercept.
struct BasisConfig {
    int degree = 3;
    double ridge = 1e-8;
};

struct RegressionDiagnostic {
    int node = 0;
    double condition_number = 1.0;
    double residual_norm = 0.0;
};

// Least-squares projector onto span{He_m(W(s)/sqrt(s)) : m <= degree} at one grid node.
// Probabilists' Hermite polynomials of the standardized state keep the normal
// equations close to the identity, so a tiny ridge suffices.
class NodeProjector {
public:
    NodeProjector(const BrownianEnsemble& ens, int node, const BasisConfig& cfg)
        : node_(node), n_paths_(ens.n_paths()) {
        if (cfg.degree < 0) throw InvalidArgument("BasisConfig: degree must be nonnegative");
        if (cfg.ridge < 0) throw InvalidArgument("BasisConfig: ridge must be nonnegative");
        if (node < 0 || node > ens.n_steps()) throw InvalidArgument("NodeProjector: node out of range");
        const double s = ens.grid().node(node);
        m_ = (node == 0) ? 1 : cfg.degree + 1;
        scale_ = (node == 0) ? 1.0 : 1.0 / std::sqrt(s);
        B_.resize(n_paths_, m_);
        const double* w = ens.W_node(node);
        for (int p = 0; p < n_paths_; ++p) fill_row(w[p], p);

        Eigen::MatrixXd G(m_, m_);
        for (int a = 0; a < m_; ++a)
            for (int b = 0; b <= a; ++b) {
                G(a, b) = B_.col(a).dot(B_.col(b)) / n_paths_;
                G(b, a) = G(a, b);
            }
        // The intercept is left unpenalised so constants are reproduced exactly.
        for (int a = 1; a < m_; ++a) G(a, a) += cfg.ridge;
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(G, Eigen::EigenvaluesOnly);
        const double lo = eig.eigenvalues().minCoeff();
        const double hi = eig.eigenvalues().maxCoeff();
        cond_ = (lo > 0.0) ? hi / lo : std::numeric_limits<double>::infinity();
        if (!(cond_ < 1e13))
            throw NumericalFailure("regression design is rank deficient at node " + std::to_string(node) +
                                       " (condition number " + std::to_string(cond_) + ")",
                                   cond_);
        llt_.compute(G);
    }

    int node() const { return node_; }
    int size() const { return m_; }
    int n_paths() const { return n_paths_; }
    double condition_number() const { return cond_; }
    const Eigen::MatrixXd& design() const { return B_; }

    Eigen::VectorXd coefficients(const double* y) const {
        Eigen::Map<const Eigen::VectorXd> v(y, n_paths_);
        Eigen::VectorXd rhs(m_);
        for (int a = 0; a < m_; ++a) rhs(a) = B_.col(a).dot(v) / n_paths_;
        return llt_.solve(rhs);
    }

    void evaluate(const Eigen::VectorXd& c, double* out) const {
        Eigen::Map<Eigen::VectorXd> o(out, n_paths_);
        o = B_.col(0) * c(0);
        for (int a = 1; a < m_; ++a) o += B_.col(a) * c(a);
    }

    // Fitted values of the regression of y on the basis; `out` may alias `y`.
    void project(const double* y, double* out) const { evaluate(coefficients(y), out); }

    std::vector<double> project(const std::vector<double>& y) const {
        std::vector<double> out(y.size());
        project(y.data(), out.data());
        return out;
    }

    // Basis values at an arbitrary state, for evaluating stored coefficients elsewhere.
    Eigen::VectorXd features(double w) const {
        Eigen::VectorXd h(m_);
        const double x = w * scale_;
        h(0) = 1.0;
        if (m_ > 1) h(1) = x;
        for (int d = 2; d < m_; ++d) h(d) = x * h(d - 1) - (d - 1) * h(d - 2);
        return h;
    }

    RegressionDiagnostic diagnose(const double* y) const {
        std::vector<double> fit(n_paths_);
        project(y, fit.data());
        double ss = 0.0;
        for (int p = 0; p < n_paths_; ++p) ss += (y[p] - fit[p]) * (y[p] - fit[p]);
        return {node_, cond_, std::sqrt(ss / n_paths_)};
    }

private:
    void fill_row(double w, int p) {
        const double x = w * scale_;
        B_(p, 0) = 1.0;
        if (m_ > 1) B_(p, 1) = x;
        for (int d = 2; d < m_; ++d) B_(p, d) = x * B_(p, d - 1) - (d - 1) * B_(p, d - 2);
    }

    int node_ = 0;
    int n_paths_ = 0;
    int m_ = 1;
    double scale_ = 1.0;
    double cond_ = 1.0;
    Eigen::MatrixXd B_;
    Eigen::LLT<Eigen::MatrixXd> llt_;
};

// E_s[samples] evaluated per path, s = grid node `node`.
inline std::vector<double> conditional_expectation(const std::vector<double>& samples, int node,
                                                   const BasisConfig& basis, const BrownianEnsemble& ens) {
    if (static_cast<int>(samples.size()) != ens.n_paths())
        throw InvalidArgument("conditional_expectation: sample count does not match the ensemble");
    return NodeProjector(ens, node, basis).project(samples);
}

// Z(t, s_k) = E_{s_k}[y * dW_k] / dt for k < t_node; nodes >= t_node of the result are zero.
inline PathProcess martingale_representation(const std::vector<double>& y_at_t, int t_node, const BasisConfig& basis,
                                             const BrownianEnsemble& ens) {
    if (static_cast<int>(y_at_t.size()) != ens.n_paths())
        throw InvalidArgument("martingale_representation: sample count does not match the ensemble");
    if (t_node < 0 || t_node > ens.n_steps()) throw InvalidArgument("martingale_representation: node out of range");
    PathProcess z(ens.grid(), ens.n_paths());
    const int P = ens.n_paths();
    std::vector<double> prod(P), cond(P), m = y_at_t;
    // Walking backward, m = y - sum_{j>k} z_j dW_j. The regressand (m - E_k[y]) dW_k has
    // the same conditional mean as y dW_k, because every z_j dW_j with j > k is
    // orthogonal to dW_k, and much less noise.
    for (int k = t_node - 1; k >= 0; --k) {
        const NodeProjector proj(ens, k, basis);
        const double* dw = ens.dW_step(k);
        double* zk = z.node(k);
        proj.project(y_at_t.data(), cond.data());
        for (int p = 0; p < P; ++p) prod[p] = (m[p] - cond[p]) * dw[p] / ens.dt();
        proj.project(prod.data(), zk);
        for (int p = 0; p < P; ++p) m[p] -= zk[p] * dw[p];
    }
    return z;
}

// || y - E[y] - sum_{k<t} z_k dW_k ||_{L2} / ||y||_{L2}
inline double reconstruction_error(const std::vector<double>& y_at_t, const PathProcess& z, int t_node,
                                   const BrownianEnsemble& ens) {
    const int P = ens.n_paths();
    double mean = 0.0, norm = 0.0;
    for (int p = 0; p < P; ++p) {
        mean += y_at_t[p];
        norm += y_at_t[p] * y_at_t[p];
    }
    mean /= P;
    if (norm == 0.0) return 0.0;
    std::vector<double> r(P);
    for (int p = 0; p < P; ++p) r[p] = y_at_t[p] - mean;
    for (int k = 0; k < t_node; ++k) {
        const double* zk = z.node(k);
        const double* dw = ens.dW_step(k);
        for (int p = 0; p < P; ++p) r[p] -= zk[p] * dw[p];
    }
    double ss = 0.0;
    for (int p = 0; p < P; ++p) ss += r[p] * r[p];
    return std::sqrt(ss / norm);
}

// Relative distance of a slice from the span of the node basis (plain QR, no ridge).
// Zero up to round-off means the slice is a function of W(s) alone, hence adapted.
inline double adaptedness_defect(const double* slice, int node, const BrownianEnsemble& ens, int degree = 3) {
    const int P = ens.n_paths();
    NodeProjector proj(ens, node, BasisConfig{degree, 1e-8});
    Eigen::Map<const Eigen::VectorXd> v(slice, P);
    const double vn = v.norm();
    if (vn == 0.0) return 0.0;
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(proj.design());
    const Eigen::VectorXd c = qr.solve(v);
    return (proj.design() * c - v).norm() / vn;
}

}  // namespace bsvie
