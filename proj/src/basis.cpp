#include "fcurve/basis.hpp"

#include "fcurve/error.hpp"
#include "fcurve/linalg.hpp"

#include <algorithm>
#include <array>
#include <cmath>

namespace fcurve {

std::vector<double> KnotScheme::knots() const {
    std::vector<double> out;
    switch (variant) {
    case KnotVariant::uniform111:
        for (int a = 0; a <= 110; ++a) out.push_back(a);
        break;
    case KnotVariant::nonuniform31:
        // quarterly on [0, 2], five-yearly from 7 to 107, closing at 110
        for (int q = 0; q <= 8; ++q) out.push_back(0.25 * q);
        for (int a = 7; a <= 107; a += 5) out.push_back(a);
        out.push_back(kAgeMax);
        break;
    case KnotVariant::custom:
        out = custom_knots;
        for (double k : out) {
            if (!(k >= kAgeMin && k <= kAgeMax)) {
                throw ConfigError("custom knot " + std::to_string(k) + " outside [0, 110]");
            }
        }
        break;
    }
    return out;
}

BSplineBasis::BSplineBasis(std::vector<double> knots, int order)
    : knots_(std::move(knots)), order_(order) {
    if (order_ < 2) throw ConfigError("B-spline order must be at least 2");
    if (knots_.size() < 2) throw ConfigError("a B-spline basis needs at least 2 knots");
    for (double k : knots_) {
        if (!std::isfinite(k)) throw ConfigError("knots must be finite");
    }
    for (std::size_t i = 1; i < knots_.size(); ++i) {
        if (knots_[i] < knots_[i - 1]) {
            throw ConfigError("knot vector is decreasing at position " + std::to_string(i));
        }
    }
    if (!(knots_.back() > knots_.front())) throw ConfigError("knot vector spans an empty domain");
    for (std::size_t i = 1; i + 1 < knots_.size(); ++i) {
        if (knots_[i] == knots_.front() || knots_[i] == knots_.back()) {
            throw ConfigError("interior knots must lie strictly inside the domain");
        }
        const auto mult = std::count(knots_.begin() + 1, knots_.end() - 1, knots_[i]);
        if (mult >= order_) throw ConfigError("interior knot multiplicity must be below the order");
    }

    const int interior = static_cast<int>(knots_.size()) - 2;
    size_ = interior + order_;
    extended_.reserve(static_cast<std::size_t>(size_ + order_));
    extended_.insert(extended_.end(), static_cast<std::size_t>(order_), knots_.front());
    extended_.insert(extended_.end(), knots_.begin() + 1, knots_.end() - 1);
    extended_.insert(extended_.end(), static_cast<std::size_t>(order_), knots_.back());

    gram_ = integrate_products(0);
    if (order_ >= 3) penalty_ = integrate_products(2);

    integrals_ = Eigen::VectorXd::Zero(size_);
    const GaussRule rule = gauss_legendre(order_ + 1);
    std::vector<double> local(static_cast<std::size_t>(order_));
    for (std::size_t s = 0; s + 1 < knots_.size(); ++s) {
        const double a = knots_[s];
        const double b = knots_[s + 1];
        if (b <= a) continue;
        const double half = 0.5 * (b - a);
        for (std::size_t g = 0; g < rule.nodes.size(); ++g) {
            const double t = a + half * (rule.nodes[g] + 1.0);
            const int first = eval_local(t, 0, local);
            for (int r = 0; r < order_; ++r) integrals_(first + r) += half * rule.weights[g] * local[r];
        }
    }
}

const Eigen::MatrixXd& BSplineBasis::penalty() const {
    if (order_ < 3) throw ConfigError("roughness penalty requires order >= 3");
    return penalty_;
}

int BSplineBasis::find_span(double t) const {
    const int deg = order_ - 1;
    if (t >= upper()) return size_ - 1;
    // last index i in [deg, size_-1] with extended_[i] <= t
    const auto begin = extended_.begin() + deg;
    const auto end = extended_.begin() + size_;
    const auto it = std::upper_bound(begin, end, t);
    return static_cast<int>(it - extended_.begin()) - 1;
}

int BSplineBasis::eval_local(double t, int derivative, std::span<double> out) const {
    if (!(t >= lower() && t <= upper())) {
        throw DomainError("evaluation point " + std::to_string(t) + " outside [" +
                          std::to_string(lower()) + ", " + std::to_string(upper()) + "]");
    }
    if (derivative < 0 || derivative > order_ - 1) {
        throw ConfigError("derivative order must be in [0, order - 1]");
    }
    if (static_cast<int>(out.size()) < order_) throw ConfigError("output span too short");

    // Cox-de Boor triangle with derivatives (Piegl & Tiller, DersBasisFuns).
    const int deg = order_ - 1;
    const int span = find_span(t);
    constexpr int kMax = 16;
    if (order_ > kMax) throw ConfigError("B-spline order above 16 is not supported");
    std::array<std::array<double, kMax>, kMax> ndu{};
    std::array<double, kMax> left{};
    std::array<double, kMax> right{};
    ndu[0][0] = 1.0;
    for (int j = 1; j <= deg; ++j) {
        left[j] = t - extended_[span + 1 - j];
        right[j] = extended_[span + j] - t;
        double saved = 0.0;
        for (int r = 0; r < j; ++r) {
            ndu[j][r] = right[r + 1] + left[j - r];
            const double tmp = ndu[r][j - 1] / ndu[j][r];
            ndu[r][j] = saved + right[r + 1] * tmp;
            saved = left[j - r] * tmp;
        }
        ndu[j][j] = saved;
    }
    if (derivative == 0) {
        for (int j = 0; j <= deg; ++j) out[j] = ndu[j][deg];
        return span - deg;
    }

    std::array<std::array<double, kMax>, 2> a{};
    for (int r = 0; r <= deg; ++r) {
        int s1 = 0;
        int s2 = 1;
        a[0].fill(0.0);
        a[1].fill(0.0);
        a[0][0] = 1.0;
        double value = 0.0;
        for (int k = 1; k <= derivative; ++k) {
            value = 0.0;
            const int rk = r - k;
            const int pk = deg - k;
            if (r >= k) {
                a[s2][0] = a[s1][0] / ndu[pk + 1][rk];
                value = a[s2][0] * ndu[rk][pk];
            }
            const int j1 = rk >= -1 ? 1 : -rk;
            const int j2 = (r - 1 <= pk) ? k - 1 : deg - r;
            for (int j = j1; j <= j2; ++j) {
                a[s2][j] = (a[s1][j] - a[s1][j - 1]) / ndu[pk + 1][rk + j];
                value += a[s2][j] * ndu[rk + j][pk];
            }
            if (r <= pk) {
                a[s2][k] = -a[s1][k - 1] / ndu[pk + 1][r];
                value += a[s2][k] * ndu[r][pk];
            }
            std::swap(s1, s2);
        }
        out[r] = value;
    }
    double factor = deg;
    for (int k = 1; k < derivative; ++k) factor *= (deg - k);
    for (int j = 0; j <= deg; ++j) out[j] *= factor;
    return span - deg;
}

Eigen::VectorXd BSplineBasis::eval(double t, int derivative) const {
    std::array<double, 16> local{};
    const int first = eval_local(t, derivative, std::span<double>(local.data(), static_cast<std::size_t>(order_)));
    Eigen::VectorXd v = Eigen::VectorXd::Zero(size_);
    for (int r = 0; r < order_; ++r) v(first + r) = local[static_cast<std::size_t>(r)];
    return v;
}

Eigen::MatrixXd BSplineBasis::design(std::span<const double> ts, int derivative) const {
    Eigen::MatrixXd b = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(ts.size()), size_);
    std::array<double, 16> local{};
    for (std::size_t i = 0; i < ts.size(); ++i) {
        const int first = eval_local(ts[i], derivative, std::span<double>(local.data(), static_cast<std::size_t>(order_)));
        for (int r = 0; r < order_; ++r) b(static_cast<Eigen::Index>(i), first + r) = local[static_cast<std::size_t>(r)];
    }
    return b;
}

double BSplineBasis::evaluate(const Eigen::VectorXd& coeffs, double t, int derivative) const {
    if (coeffs.size() != size_) throw ConfigError("coefficient vector does not match basis size");
    std::array<double, 16> local{};
    const int first = eval_local(t, derivative, std::span<double>(local.data(), static_cast<std::size_t>(order_)));
    double s = 0.0;
    for (int r = 0; r < order_; ++r) s += coeffs(first + r) * local[static_cast<std::size_t>(r)];
    return s;
}

Eigen::MatrixXd BSplineBasis::integrate_products(int derivative) const {
    Eigen::MatrixXd m = Eigen::MatrixXd::Zero(size_, size_);
    const GaussRule rule = gauss_legendre(order_ + 1);
    std::vector<double> local(static_cast<std::size_t>(order_));
    for (std::size_t s = 0; s + 1 < knots_.size(); ++s) {
        const double a = knots_[s];
        const double b = knots_[s + 1];
        if (b <= a) continue;
        const double half = 0.5 * (b - a);
        for (std::size_t g = 0; g < rule.nodes.size(); ++g) {
            const double t = a + half * (rule.nodes[g] + 1.0);
            const int first = eval_local(t, derivative, local);
            const double w = half * rule.weights[g];
            for (int r = 0; r < order_; ++r) {
                for (int c = 0; c < order_; ++c) {
                    m(first + r, first + c) += w * local[static_cast<std::size_t>(r)] * local[static_cast<std::size_t>(c)];
                }
            }
        }
    }
    // exact symmetry
    return 0.5 * (m + m.transpose());
}

nlohmann::json BSplineBasis::to_json() const {
    return nlohmann::json{{"order", order_}, {"knots", knots_}};
}

BSplineBasis BSplineBasis::from_json(const nlohmann::json& j) {
    try {
        return BSplineBasis(j.at("knots").get<std::vector<double>>(), j.at("order").get<int>());
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("invalid basis spec: ") + e.what());
    }
}

BSplineBasis make_basis(const KnotScheme& scheme, int order) {
    return BSplineBasis(scheme.knots(), order);
}

BSplineBasis basis_from_config(const nlohmann::json& j) {
    if (!j.is_object()) throw ConfigError("basis config must be a JSON object");
    const int order = j.value("order", 4);
    if (j.contains("knots")) return BSplineBasis::from_json(nlohmann::json{{"order", order}, {"knots", j.at("knots")}});
    const std::string scheme = j.value("scheme", std::string("nonuniform31"));
    if (scheme == "nonuniform31") return make_basis(KnotScheme::nonuniform31(), order);
    if (scheme == "uniform111") return make_basis(KnotScheme::uniform111(), order);
    throw ConfigError("unknown knot scheme '" + scheme + "'");
}

std::vector<double> age_grid() {
    std::vector<double> ages(111);
    for (int a = 0; a <= 110; ++a) ages[static_cast<std::size_t>(a)] = a;
    return ages;
}

}  // namespace fcurve
