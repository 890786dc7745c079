#include "fcurve/linalg.hpp"

#include "fcurve/error.hpp"

#include <cmath>
#include <numbers>

namespace fcurve {

SymmetricEigen symmetric_eigen(const Eigen::MatrixXd& m) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(m);
    if (solver.info() != Eigen::Success) {
        throw NumericError("symmetric eigen-decomposition did not converge");
    }
    // Eigen returns ascending order.
    const Eigen::Index n = m.rows();
    SymmetricEigen out{Eigen::VectorXd(n), Eigen::MatrixXd(n, n)};
    for (Eigen::Index i = 0; i < n; ++i) {
        out.values(i) = solver.eigenvalues()(n - 1 - i);
        out.vectors.col(i) = solver.eigenvectors().col(n - 1 - i);
    }
    return out;
}

MatrixRoots spd_roots(const Eigen::MatrixXd& m) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(m);
    if (solver.info() != Eigen::Success || solver.eigenvalues().minCoeff() <= 0.0) {
        throw NumericError("matrix is not symmetric positive-definite");
    }
    const auto& v = solver.eigenvectors();
    const Eigen::VectorXd ev = solver.eigenvalues();
    MatrixRoots roots;
    roots.sqrt = v * ev.cwiseSqrt().asDiagonal() * v.transpose();
    roots.inv_sqrt = v * ev.cwiseSqrt().cwiseInverse().asDiagonal() * v.transpose();
    roots.log_det = ev.array().log().sum();
    return roots;
}

GaussRule gauss_legendre(int n) {
    if (n < 1) throw ConfigError("Gauss-Legendre rule needs at least one node");
    GaussRule rule;
    rule.nodes.resize(static_cast<std::size_t>(n));
    rule.weights.resize(static_cast<std::size_t>(n));
    for (int i = 0; i < (n + 1) / 2; ++i) {
        // Chebyshev-type starting guess, then Newton on P_n.
        double x = std::cos(std::numbers::pi * (i + 0.75) / (n + 0.5));
        double dp = 0.0;
        for (int iter = 0; iter < 100; ++iter) {
            double p0 = 1.0;
            double p1 = x;
            for (int k = 2; k <= n; ++k) {
                const double pk = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
                p0 = p1;
                p1 = pk;
            }
            dp = n * (x * p1 - p0) / (x * x - 1.0);
            const double dx = p1 / dp;
            x -= dx;
            if (std::abs(dx) < 1e-16) break;
        }
        const double w = 2.0 / ((1.0 - x * x) * dp * dp);
        const auto lo = static_cast<std::size_t>(i);
        const auto hi = static_cast<std::size_t>(n - 1 - i);
        rule.nodes[lo] = -x;
        rule.nodes[hi] = x;
        rule.weights[lo] = w;
        rule.weights[hi] = w;
    }
    return rule;
}

std::size_t Rng::index(std::size_t n) {
    if (n == 0) throw ConfigError("Rng::index on an empty range");
    return static_cast<std::size_t>(uniform() * static_cast<double>(n)) % n;
}

double Rng::normal() {
    if (has_spare_) {
        has_spare_ = false;
        return spare_;
    }
    double u = 0.0;
    double v = 0.0;
    double s = 0.0;
    do {
        u = 2.0 * uniform() - 1.0;
        v = 2.0 * uniform() - 1.0;
        s = u * u + v * v;
    } while (s >= 1.0 || s == 0.0);
    const double f = std::sqrt(-2.0 * std::log(s) / s);
    spare_ = v * f;
    has_spare_ = true;
    return u * f;
}

}  // namespace fcurve
