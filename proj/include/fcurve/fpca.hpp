#pragma once

#include "fcurve/basis.hpp"
#include "fcurve/smooth.hpp"

#include <Eigen/Dense>

#include <span>
#include <utility>

namespace fcurve {

/// Functional PCA in coefficient space under the L2 (Gram) metric.
///
/// Harmonics are stored as coefficient vectors on the dataset basis and are
/// orthonormal in L2 (phi_l' W phi_m = delta_lm). Signs are fixed so that each
/// harmonic has positive integral; when the integral vanishes, the value of
/// largest magnitude on the observation grid is made positive.
struct FpcaResult {
    Eigen::VectorXd mean_coeffs;
    Eigen::VectorXd eigenvalues;  // non-increasing, clipped at 0
    Eigen::MatrixXd harmonics;    // p x p, column l = phi_l
    Eigen::MatrixXd scores;       // n x p
    Eigen::VectorXd varprop;      // sums to 1 unless total variance is 0 (then all 0)

    int components() const noexcept { return static_cast<int>(eigenvalues.size()); }
};

FpcaResult fpca(const FunctionalDataset& data);

/// First q score columns.
Eigen::MatrixXd scores(const FpcaResult& result, int q);

/// Scores of an arbitrary curve (coefficient vector on the same basis).
Eigen::VectorXd project(const FpcaResult& result, const BSplineBasis& basis, const Eigen::VectorXd& coeffs);

/// mean + sum_{l<q} score_row[l] * phi_l. Requires score_row.size() >= q.
Eigen::VectorXd reconstruct(const FpcaResult& result, std::span<const double> score_row, int q);

struct EffectCurves {
    Eigen::VectorXd plus;
    Eigen::VectorXd minus;
};

/// mean +/- multiple * sqrt(lambda_l) * phi_l, with l 1-based.
EffectCurves harmonic_effect(const FpcaResult& result, int l, double multiple = 2.0);

/// L2 norm of a curve given by coefficients.
double l2_norm(const BSplineBasis& basis, const Eigen::VectorXd& coeffs);

}  // namespace fcurve
