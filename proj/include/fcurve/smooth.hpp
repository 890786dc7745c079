#pragma once

#include "fcurve/basis.hpp"
#include "fcurve/ingest.hpp"

#include <Eigen/Dense>

#include <istream>
#include <ostream>
#include <span>
#include <vector>

namespace fcurve {

/// Result of one penalized least-squares fit.
struct SmoothFit {
    Eigen::VectorXd coefficients;
    double lambda = 0.0;
    double df = 0.0;   // trace of the hat matrix
    double sse = 0.0;
    double gcv = 0.0;  // +inf when undefined (df >= N)
    std::size_t n_obs = 0;
};

/// Generalized cross-validation score N * sse / (N - df)^2.
/// Throws NumericError when df >= N.
double gcv_score(const SmoothFit& fit, std::size_t n_obs);

/// Penalized smoother for one basis and one observation grid. Minimizes
/// |y - B g|^2 + lambda * g' R g, i.e. g = (B'B + lambda R)^-1 B'y.
class PenalizedSmoother {
public:
    PenalizedSmoother(BSplineBasis basis, std::vector<double> ages);

    /// Factorized normal equations for one lambda, reusable across curves.
    class System {
    public:
        double lambda() const noexcept { return lambda_; }
        double df() const noexcept { return df_; }

    private:
        friend class PenalizedSmoother;
        double lambda_ = 0.0;
        double df_ = 0.0;
        Eigen::VectorXd scale_;
        Eigen::LLT<Eigen::MatrixXd> llt_;
    };

    /// Throws RankError if B'B + lambda R is numerically singular.
    System prepare(double lambda) const;
    SmoothFit fit(const System& system, std::span<const double> y) const;
    SmoothFit fit(std::span<const double> y, double lambda) const { return fit(prepare(lambda), y); }

    const BSplineBasis& basis() const noexcept { return basis_; }
    const std::vector<double>& ages() const noexcept { return ages_; }
    const Eigen::MatrixXd& design() const noexcept { return design_; }

private:
    BSplineBasis basis_;
    std::vector<double> ages_;
    Eigen::MatrixXd design_;
    // Normal equations are solved in the eigenbasis U of the penalty, with
    // diagonal scaling so the system stays well conditioned as lambda grows.
    Eigen::MatrixXd rotation_;      // U
    Eigen::VectorXd penalty_eig_;   // eigenvalues of R, null space set to 0
    Eigen::MatrixXd design_rot_;    // B U
    Eigen::MatrixXd cross_rot_;     // U'B'BU
};

SmoothFit fit_penalized(std::span<const double> y, std::span<const double> ages,
                        const BSplineBasis& basis, double lambda);

/// 33 points log-spaced on [1e-6, 1e2].
std::vector<double> default_lambda_grid();

/// Log-spaced grid of `count` points on [lo, hi].
std::vector<double> log_grid(double lo, double hi, int count);

struct LambdaSelection {
    double lambda = 0.0;
    std::size_t best = 0;
    std::vector<SmoothFit> fits;  // one per grid point, in grid order
};

/// GCV minimizer over the grid; ties go to the larger lambda.
LambdaSelection select_lambda(std::span<const double> y, std::span<const double> ages,
                              const BSplineBasis& basis, std::span<const double> grid);
LambdaSelection select_lambda(const PenalizedSmoother& smoother, std::span<const double> y,
                              std::span<const double> grid);

enum class LambdaMode { common, per_curve };

LambdaMode parse_lambda_mode(std::string_view text);
std::string_view to_string(LambdaMode mode);

/// Curves expressed as coefficient vectors on a shared basis.
struct FunctionalDataset {
    BSplineBasis basis;
    Eigen::MatrixXd coefficients;  // n x p
    std::vector<CurveKey> keys;
    std::vector<double> lambdas;
    std::vector<double> grid;

    std::size_t size() const noexcept { return keys.size(); }
    /// Throws DataError on shape mismatches, duplicate keys or non-finite coefficients.
    void validate() const;
    FunctionalDataset select(std::span<const std::size_t> rows) const;
    FunctionalDataset subset(Sex sex) const;
    /// Curve i evaluated on `ts`.
    std::vector<double> evaluate(std::size_t i, std::span<const double> ts) const;
};

/// Smooths every panel curve on the integer-age grid.
FunctionalDataset smooth_panel(const CurvePanel& panel, const BSplineBasis& basis, LambdaMode mode,
                               std::span<const double> grid);

/// Little-endian binary container with the basis spec embedded as JSON.
void write_dataset(std::ostream& out, const FunctionalDataset& data);
FunctionalDataset read_dataset(std::istream& in);

}  // namespace fcurve
