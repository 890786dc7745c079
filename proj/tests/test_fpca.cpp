#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "fcurve/error.hpp"
#include "fcurve/fpca.hpp"
#include "oracles.hpp"
#include "synthetic.hpp"

#include <numeric>
#include <random>

using namespace fcurve;

namespace {

const BSplineBasis& basis31() {
    static const BSplineBasis b = make_basis(KnotScheme::nonuniform31(), 4);
    return b;
}

// 50 noisy death curves smoothed per curve on the integer ages.
const FunctionalDataset& smoothed() {
    static const FunctionalDataset d = [] {
        const auto& b = basis31();
        const auto c = synth::noisy_curves(b, 50, 3e-4, 41);
        CurvePanel p;
        p.years = {1960, 2009};
        p.countries = {"AAA"};
        for (Eigen::Index i = 0; i < c.noisy.rows(); ++i) {
            MortalityCurve m{"AAA", 1960 + static_cast<int>(i), Sex::male, {}, 1.0};
            for (Eigen::Index j = 0; j < c.noisy.cols(); ++j) m.values.push_back(c.noisy(i, j));
            p.curves.push_back(m);
        }
        return smooth_panel(p, b, LambdaMode::per_curve, default_lambda_grid());
    }();
    return d;
}

const FpcaResult& result() {
    static const FpcaResult r = fpca(smoothed());
    return r;
}

// Rows: curves evaluated on `points` equally spaced ages, by naive recursion.
Eigen::MatrixXd dense_values(const BSplineBasis& b, const Eigen::MatrixXd& coeffs, int points) {
    const auto u = oracle::full_knots(b);
    Eigen::MatrixXd B(points, b.size());
    for (int i = 0; i < points; ++i)
        B.row(i) = oracle::basis_values(b, u, 110.0 * i / (points - 1)).transpose();
    return coeffs * B.transpose();
}

double l2_sq(const BSplineBasis& b, const Eigen::VectorXd& g) { return g.dot(b.gram() * g); }

}  // namespace

TEST_CASE("identical curves have zero variance") {
    const auto& b = basis31();
    const Eigen::VectorXd g = synth::project(b, [](double t) { return synth::death_shape(t, 75, 10, 0.03); });
    Eigen::MatrixXd coeffs(4, b.size());
    coeffs.rowwise() = g.transpose();
    const auto r = fpca(synth::dataset(b, coeffs));
    CHECK(r.eigenvalues.cwiseAbs().maxCoeff() == doctest::Approx(0.0));
    CHECK((r.mean_coeffs - g).cwiseAbs().maxCoeff() < 1e-12);
    CHECK(r.varprop.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("eigenvalues match a dense-grid PCA of the smoothed curves") {
    const auto& d = smoothed();
    const auto& r = result();
    const int N = 2001;
    const Eigen::MatrixXd X = dense_values(d.basis, d.coefficients, N);
    const Eigen::MatrixXd Xc = X.rowwise() - X.colwise().mean();
    const Eigen::VectorXd w = oracle::simpson_weights(N, 0.0, 110.0);
    // dual form: nonzero spectrum of Xc diag(w) Xc' / (n - 1)
    const Eigen::MatrixXd G = Xc * w.asDiagonal() * Xc.transpose() / (Xc.rows() - 1.0);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(G);
    const Eigen::VectorXd ref = es.eigenvalues().reverse();
    for (int l = 0; l < 5; ++l) CHECK(std::abs(r.eigenvalues(l) - ref(l)) <= 1e-4 * ref(l));
}

TEST_CASE("scores equal dense quadrature of centered curve times harmonic") {
    const auto& d = smoothed();
    const auto& r = result();
    // spacing 0.005 puts every knot on an even node
    const int N = 22001;
    const Eigen::MatrixXd X = dense_values(d.basis, d.coefficients, N);
    const Eigen::RowVectorXd mean = dense_values(d.basis, r.mean_coeffs.transpose(), N);
    const Eigen::MatrixXd phi = dense_values(d.basis, r.harmonics.leftCols(5).transpose(), N);
    const Eigen::VectorXd w = oracle::simpson_weights(N, 0.0, 110.0);
    for (Eigen::Index i = 0; i < X.rows(); ++i) {
        const Eigen::RowVectorXd centered = X.row(i) - mean;
        for (int l = 0; l < 5; ++l) {
            const double q = (centered.array() * phi.row(l).array() * w.transpose().array()).sum();
            CHECK(std::abs(r.scores(i, l) - q) < 1e-6);
        }
    }
}

TEST_CASE("result invariants") {
    const auto& d = smoothed();
    const auto& r = result();
    const Eigen::Index p = d.basis.size();
    for (Eigen::Index l = 1; l < p; ++l) CHECK(r.eigenvalues(l) <= r.eigenvalues(l - 1));
    CHECK(r.eigenvalues.minCoeff() >= 0.0);
    const Eigen::MatrixXd I = r.harmonics.transpose() * d.basis.gram() * r.harmonics;
    CHECK((I - Eigen::MatrixXd::Identity(p, p)).cwiseAbs().maxCoeff() < 1e-8);
    CHECK(r.varprop.sum() == doctest::Approx(1.0).epsilon(1e-12));
    const double n = static_cast<double>(d.size());
    for (Eigen::Index l = 0; l < p; ++l) {
        const Eigen::VectorXd c = r.scores.col(l);
        CHECK(std::abs(c.mean()) < 1e-8);
        if (r.eigenvalues(l) > 1e-12 * r.eigenvalues(0)) {
            const double var = c.squaredNorm() / (n - 1.0);
            CHECK(std::abs(var - r.eigenvalues(l)) <= 1e-6 * r.eigenvalues(l));
        }
    }
    // score covariance is diagonal
    const Eigen::MatrixXd C = r.scores.leftCols(6).transpose() * r.scores.leftCols(6) / (n - 1.0);
    for (int a = 0; a < 6; ++a)
        for (int b = 0; b < 6; ++b)
            if (a != b) CHECK(std::abs(C(a, b)) < 1e-8 * r.eigenvalues(0));
}

TEST_CASE("trace identity") {
    const auto& d = smoothed();
    const auto& r = result();
    double total = 0.0;
    for (Eigen::Index i = 0; i < d.coefficients.rows(); ++i)
        total += l2_sq(d.basis, d.coefficients.row(i).transpose() - r.mean_coeffs);
    total /= static_cast<double>(d.size()) - 1.0;
    CHECK(r.eigenvalues.sum() == doctest::Approx(total).epsilon(1e-8));
}

TEST_CASE("sign convention: positive integral") {
    const auto& d = smoothed();
    const auto& r = result();
    for (int l = 0; l < r.components(); ++l) {
        const double integral = d.basis.integrals().dot(r.harmonics.col(l));
        if (std::abs(integral) > 1e-12) CHECK(integral > 0.0);
    }
}

TEST_CASE("reconstruction") {
    const auto& d = smoothed();
    const auto& r = result();
    const int p = r.components();
    for (Eigen::Index i = 0; i < d.coefficients.rows(); i += 7) {
        const Eigen::VectorXd x = d.coefficients.row(i).transpose();
        std::vector<double> s(static_cast<std::size_t>(p));
        for (int l = 0; l < p; ++l) s[static_cast<std::size_t>(l)] = r.scores(i, l);
        CHECK(std::sqrt(l2_sq(d.basis, reconstruct(r, s, p) - x)) < 1e-8);
        CHECK(reconstruct(r, s, 0) == r.mean_coeffs);
        double prev = std::numeric_limits<double>::infinity();
        for (int q = 0; q <= p; ++q) {
            const double err = std::sqrt(l2_sq(d.basis, reconstruct(r, s, q) - x));
            CHECK(err <= prev + 1e-12);
            prev = err;
        }
    }
    CHECK_THROWS_AS(reconstruct(r, std::vector<double>(2, 0.0), 3), ConfigError);
}

TEST_CASE("the mean curve has zero scores") {
    const auto& d = smoothed();
    const auto& r = result();
    CHECK(project(r, d.basis, r.mean_coeffs).cwiseAbs().maxCoeff() < 1e-12);
    const Eigen::VectorXd x = d.coefficients.row(3).transpose();
    CHECK((project(r, d.basis, x) - r.scores.row(3).transpose()).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("scores accessor") {
    const auto& r = result();
    CHECK(scores(r, 2) == r.scores.leftCols(2));
    CHECK(scores(r, r.components()) == r.scores);
    CHECK_THROWS_AS(scores(r, 0), ConfigError);
    CHECK_THROWS_AS(scores(r, r.components() + 1), ConfigError);
}

TEST_CASE("harmonic effects") {
    const auto& r = result();
    const auto e = harmonic_effect(r, 1, 2.0);
    const Eigen::VectorXd half = (e.plus - e.minus) / 2.0;
    CHECK((half - 2.0 * std::sqrt(r.eigenvalues(0)) * r.harmonics.col(0)).cwiseAbs().maxCoeff() < 1e-15);
    const auto z = harmonic_effect(r, 2, 0.0);
    CHECK(z.plus == r.mean_coeffs);
    CHECK(z.minus == r.mean_coeffs);
    CHECK_THROWS_AS(harmonic_effect(r, 0), ConfigError);

    const auto& b = basis31();
    Eigen::MatrixXd same(3, b.size());
    same.setConstant(0.01);
    const auto flat = fpca(synth::dataset(b, same));
    const auto fe = harmonic_effect(flat, 1);
    CHECK(fe.plus == flat.mean_coeffs);
    CHECK(fe.minus == flat.mean_coeffs);
}

TEST_CASE("permuting curves permutes score rows only") {
    const auto& d = smoothed();
    const auto& r = result();
    std::vector<std::size_t> perm(d.size());
    std::iota(perm.begin(), perm.end(), 0);
    std::mt19937_64 rng(8);
    std::shuffle(perm.begin(), perm.end(), rng);
    const auto s = fpca(d.select(perm));
    CHECK((s.eigenvalues - r.eigenvalues).cwiseAbs().maxCoeff() < 1e-12 * r.eigenvalues(0));
    for (int l = 0; l < 5; ++l) {
        CHECK((s.harmonics.col(l) - r.harmonics.col(l)).cwiseAbs().maxCoeff() < 1e-8);
        for (std::size_t i = 0; i < perm.size(); ++i)
            CHECK(std::abs(s.scores(static_cast<Eigen::Index>(i), l) -
                           r.scores(static_cast<Eigen::Index>(perm[i]), l)) < 1e-10);
    }
}

TEST_CASE("errors and norms") {
    const auto& b = basis31();
    CHECK_THROWS_AS(fpca(synth::dataset(b, Eigen::MatrixXd::Ones(1, b.size()))), DataError);
    const Eigen::VectorXd one = Eigen::VectorXd::Ones(b.size());
    CHECK(l2_norm(b, one) == doctest::Approx(std::sqrt(110.0)).epsilon(1e-12));
    CHECK_THROWS_AS(project(result(), b, Eigen::VectorXd::Ones(3)), ConfigError);
}
