#pragma once

#include "fcurve/smooth.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace fcurve {

/// Covariance parameterizations of the subspace mixture. Group k has
/// covariance Q_k diag(a_k1..a_kd) Q_k' + b_k (I - Q_k Q_k'); the second
/// variant shares one noise level b across groups.
enum class FlmVariant { akj_bk_qk_dk, akj_b_qk_dk };

std::string_view to_string(FlmVariant v);
FlmVariant parse_flm_variant(std::string_view text);

enum class FlmInit { kmeans, random };

std::string_view to_string(FlmInit v);
FlmInit parse_flm_init(std::string_view text);

struct FlmConfig {
    int K = 1;
    FlmVariant variant = FlmVariant::akj_b_qk_dk;
    double scree_threshold = 0.2;
    int max_iter = 200;
    double tol = 1e-6;  // absolute change of the log-likelihood
    std::uint64_t seed = 1;
    FlmInit init = FlmInit::kmeans;
    int kmeans_restarts = 10;

    void validate() const;
};

struct FlmGroup {
    double prior = 0.0;
    int d = 1;
    Eigen::VectorXd a;          // d subspace variances
    double b = 0.0;             // noise variance outside the subspace
    Eigen::VectorXd mean;       // working coordinates
    Eigen::MatrixXd subspace;   // p x d, orthonormal columns, working coordinates
    Eigen::VectorXd mean_coeffs;      // basis coefficients
    Eigen::MatrixXd subspace_coeffs;  // basis coefficients, unit L2 norm columns
    double total_variance = 0.0;      // trace of the group covariance

    /// Share of the group variance carried by its d subspace directions.
    double explained_share() const;
};

struct FlmModel {
    FlmVariant variant = FlmVariant::akj_b_qk_dk;
    int p = 0;
    std::vector<FlmGroup> groups;
    Eigen::MatrixXd posteriors;  // n x K, rows sum to 1
    std::vector<int> labels;     // MAP labels 1..K
    std::vector<double> loglik_trace;
    double loglik = 0.0;
    int iterations = 0;
    bool converged = false;
    std::uint64_t seed = 0;

    int K() const noexcept { return static_cast<int>(groups.size()); }
    std::vector<int> dims() const;
};

/// Intrinsic dimension from a non-increasing eigenvalue sequence: the
/// largest j whose drop lambda_j - lambda_{j+1} is at least `threshold`
/// times the largest drop. Always >= 1.
int cattell_scree(std::span<const double> eigenvalues, double threshold);

/// Free parameters: (K-1) + K p + sum d_k (p - (d_k+1)/2) + sum d_k + noise terms.
long long n_params(int K, int p, std::span<const int> dims, FlmVariant variant);

/// EM on points already expressed in an orthonormal metric. `log_jacobian`
/// is added once per observation to the reported log-likelihood.
FlmModel em_fit_points(const Eigen::MatrixXd& points, const FlmConfig& config,
                       std::span<const int> initial_labels = {}, double log_jacobian = 0.0);

/// EM on basis coefficients mapped through W^{1/2}, so that the working
/// geometry is the L2 geometry of the curves. The likelihood is reported as
/// a density on the coefficients.
FlmModel em_fit(const FunctionalDataset& data, const FlmConfig& config,
                std::span<const int> initial_labels = {});

struct ModelScore {
    int K = 0;
    FlmVariant variant = FlmVariant::akj_b_qk_dk;
    std::uint64_t seed = 0;
    bool ok = false;
    double loglik = 0.0;
    long long n_params = 0;
    double bic = 0.0;  // loglik - n_params/2 * ln(n); larger is better
    std::vector<int> dims;
    std::string diagnostic;
};

ModelScore bic(const FlmModel& model, std::size_t n);

struct ModelSelection {
    FlmModel best;
    std::vector<ModelScore> scores;
};

/// Fits every (K, variant, seed) combination and keeps the largest BIC;
/// ties go to smaller K, then fewer parameters.
ModelSelection select_model(const FunctionalDataset& data, std::span<const int> K_range,
                            std::span<const FlmVariant> variants, std::span<const std::uint64_t> seeds,
                            const FlmConfig& base = {});

struct GroupEffect {
    Eigen::VectorXd plus;
    Eigen::VectorXd minus;
    Eigen::VectorXd mean;
};

/// Group mean +/- multiple * sqrt(a_kj) times the j-th subspace function (k, j 1-based).
GroupEffect cluster_effects(const FlmModel& model, int k, int j, double multiple = 2.0);

}  // namespace fcurve
