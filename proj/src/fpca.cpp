#include "fcurve/fpca.hpp"

#include "fcurve/error.hpp"
#include "fcurve/linalg.hpp"

#include <cmath>

namespace fcurve {

FpcaResult fpca(const FunctionalDataset& data) {
    data.validate();
    const auto n = static_cast<Eigen::Index>(data.size());
    if (n < 2) throw DataError("FPCA needs at least two curves");
    const BSplineBasis& basis = data.basis;
    const Eigen::Index p = basis.size();

    MatrixRoots roots;
    try {
        roots = spd_roots(basis.gram());
    } catch (const NumericError& e) {
        throw NumericError(std::string("Gram matrix factorization failed: ") + e.what());
    }

    FpcaResult out;
    out.mean_coeffs = data.coefficients.colwise().mean().transpose();
    const Eigen::MatrixXd centered = data.coefficients.rowwise() - out.mean_coeffs.transpose();
    const Eigen::MatrixXd z = centered * roots.sqrt;  // working coordinates, L2 geometry
    Eigen::MatrixXd cov = (z.transpose() * z) / static_cast<double>(n - 1);
    cov = 0.5 * (cov + cov.transpose());
    const SymmetricEigen eig = symmetric_eigen(cov);

    out.eigenvalues = eig.values.cwiseMax(0.0);
    out.harmonics = roots.inv_sqrt * eig.vectors;
    for (Eigen::Index l = 0; l < p; ++l) {
        auto phi = out.harmonics.col(l);
        const double integral = basis.integrals().dot(phi);
        bool flip = false;
        if (std::abs(integral) > 1e-12) {
            flip = integral < 0.0;
        } else {
            double peak = 0.0;
            const Eigen::VectorXd col = phi;
            for (double t : data.grid) {
                const double v = basis.evaluate(col, t);
                if (std::abs(v) > std::abs(peak)) peak = v;
            }
            flip = peak < 0.0;
        }
        if (flip) phi = -phi;
    }
    out.scores = centered * basis.gram() * out.harmonics;

    const double total = out.eigenvalues.sum();
    out.varprop = total > 0.0 ? Eigen::VectorXd(out.eigenvalues / total) : Eigen::VectorXd::Zero(p);
    return out;
}

Eigen::MatrixXd scores(const FpcaResult& result, int q) {
    if (q < 1 || q > result.components()) throw ConfigError("q out of range [1, p]");
    return result.scores.leftCols(q);
}

Eigen::VectorXd project(const FpcaResult& result, const BSplineBasis& basis, const Eigen::VectorXd& coeffs) {
    if (coeffs.size() != basis.size() || basis.size() != result.mean_coeffs.size()) {
        throw ConfigError("coefficient vector does not match the FPCA basis");
    }
    return result.harmonics.transpose() * basis.gram() * (coeffs - result.mean_coeffs);
}

Eigen::VectorXd reconstruct(const FpcaResult& result, std::span<const double> score_row, int q) {
    if (q < 0 || q > result.components()) throw ConfigError("q out of range [0, p]");
    if (static_cast<int>(score_row.size()) < q) throw ConfigError("score row shorter than q");
    Eigen::VectorXd x = result.mean_coeffs;
    for (int l = 0; l < q; ++l) x += score_row[static_cast<std::size_t>(l)] * result.harmonics.col(l);
    return x;
}

EffectCurves harmonic_effect(const FpcaResult& result, int l, double multiple) {
    if (l < 1 || l > result.components()) throw ConfigError("component index out of range");
    const Eigen::VectorXd delta = multiple * std::sqrt(result.eigenvalues(l - 1)) * result.harmonics.col(l - 1);
    return {result.mean_coeffs + delta, result.mean_coeffs - delta};
}

double l2_norm(const BSplineBasis& basis, const Eigen::VectorXd& coeffs) {
    return std::sqrt(std::max(0.0, coeffs.dot(basis.gram() * coeffs)));
}

}  // namespace fcurve
