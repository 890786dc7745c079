#pragma once

#include <Eigen/Dense>
#include <json.hpp>

#include <span>
#include <string>
#include <vector>

namespace fcurve {

/// Lower and upper bound of the age domain, in years.
inline constexpr double kAgeMin = 0.0;
inline constexpr double kAgeMax = 110.0;

enum class KnotVariant { uniform111, nonuniform31, custom };

/// Break-point layout of a spline basis over the age domain.
struct KnotScheme {
    KnotVariant variant = KnotVariant::nonuniform31;
    std::vector<double> custom_knots;

    static KnotScheme uniform111() { return {KnotVariant::uniform111, {}}; }
    static KnotScheme nonuniform31() { return {KnotVariant::nonuniform31, {}}; }
    static KnotScheme custom(std::vector<double> knots) {
        return {KnotVariant::custom, std::move(knots)};
    }

    /// Distinct break points, boundaries included.
    std::vector<double> knots() const;
};

/// Clamped B-spline basis of a given order (4 = cubic) on a break sequence.
///
/// With L break points and order m the basis has p = (L - 2) + m functions.
/// The Gram matrix W and the roughness penalty R (integrated products of
/// second derivatives) are assembled once at construction by Gauss-Legendre
/// quadrature on each knot interval, which is exact for piecewise polynomials.
/// Instances are immutable.
class BSplineBasis {
public:
    BSplineBasis(std::vector<double> knots, int order);

    int order() const noexcept { return order_; }
    int size() const noexcept { return size_; }
    const std::vector<double>& knots() const noexcept { return knots_; }
    double lower() const noexcept { return knots_.front(); }
    double upper() const noexcept { return knots_.back(); }

    /// Values (or derivatives) of all p basis functions at t.
    Eigen::VectorXd eval(double t, int derivative = 0) const;

    /// Non-zero values at t written to `out` (length order()); returns the
    /// index of the first basis function they belong to.
    int eval_local(double t, int derivative, std::span<double> out) const;

    /// N x p matrix of basis values (or derivatives) at the given points.
    Eigen::MatrixXd design(std::span<const double> ts, int derivative = 0) const;

    /// Value of the curve sum_j coeffs[j] psi_j at t.
    double evaluate(const Eigen::VectorXd& coeffs, double t, int derivative = 0) const;

    /// Integrals of each basis function over the domain.
    const Eigen::VectorXd& integrals() const noexcept { return integrals_; }
    const Eigen::MatrixXd& gram() const noexcept { return gram_; }
    /// Throws ConfigError for order < 3, where second derivatives are not square integrable.
    const Eigen::MatrixXd& penalty() const;

    nlohmann::json to_json() const;
    static BSplineBasis from_json(const nlohmann::json& j);

    friend bool operator==(const BSplineBasis& a, const BSplineBasis& b) {
        return a.order_ == b.order_ && a.knots_ == b.knots_;
    }

private:
    int find_span(double t) const;
    Eigen::MatrixXd integrate_products(int derivative) const;

    std::vector<double> knots_;
    std::vector<double> extended_;  // knots_ with boundary multiplicity = order
    int order_;
    int size_;
    Eigen::VectorXd integrals_;
    Eigen::MatrixXd gram_;
    Eigen::MatrixXd penalty_;
};

BSplineBasis make_basis(const KnotScheme& scheme, int order);

inline Eigen::VectorXd eval_basis(const BSplineBasis& basis, double t, int derivative = 0) {
    return basis.eval(t, derivative);
}
inline const Eigen::MatrixXd& gram_matrix(const BSplineBasis& basis) { return basis.gram(); }
inline const Eigen::MatrixXd& penalty_matrix(const BSplineBasis& basis) { return basis.penalty(); }

/// Reads a basis config: either {"order": m, "knots": [...]} or
/// {"order": m, "scheme": "uniform111" | "nonuniform31"}.
BSplineBasis basis_from_config(const nlohmann::json& j);

/// Integer ages 0..110, the observation grid of 1x1 life tables.
std::vector<double> age_grid();

}  // namespace fcurve
