#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "fcurve/error.hpp"
#include "fcurve/smooth.hpp"
#include "oracles.hpp"
#include "synthetic.hpp"

#include <random>
#include <sstream>

using namespace fcurve;

namespace {

const BSplineBasis& basis31() {
    static const BSplineBasis b = make_basis(KnotScheme::nonuniform31(), 4);
    return b;
}

std::vector<double> fine_ages() {
    std::vector<double> t;
    for (int i = 0; i <= 2200; ++i) t.push_back(0.05 * i);
    return t;
}

std::vector<double> to_vec(const Eigen::VectorXd& v) { return {v.data(), v.data() + v.size()}; }

// Hat matrix built independently with a full-pivot LU.
Eigen::MatrixXd hat(const Eigen::MatrixXd& B, const Eigen::MatrixXd& R, double lambda) {
    const Eigen::MatrixXd A = B.transpose() * B + lambda * R;
    return B * Eigen::FullPivLU<Eigen::MatrixXd>(A).solve(B.transpose());
}

CurvePanel panel_from(const Eigen::MatrixXd& values) {
    CurvePanel p;
    p.years = {1960, 1960 + static_cast<int>(values.rows()) - 1};
    p.countries = {"AAA"};
    for (Eigen::Index i = 0; i < values.rows(); ++i) {
        MortalityCurve c{"AAA", 1960 + static_cast<int>(i), Sex::male, {}, 1.0};
        for (Eigen::Index j = 0; j < values.cols(); ++j) c.values.push_back(values(i, j));
        p.curves.push_back(c);
    }
    return p;
}

}  // namespace

TEST_CASE("exact representation at lambda 0") {
    const auto& b = basis31();
    std::mt19937_64 rng(11);
    const Eigen::VectorXd g = synth::gaussian(b.size(), 1, rng).col(0);
    const auto ages = fine_ages();
    const Eigen::VectorXd y = b.design(ages) * g;
    const SmoothFit f = fit_penalized(to_vec(y), ages, b, 0.0);
    CHECK(f.sse < 1e-18);
    CHECK((f.coefficients - g).cwiseAbs().maxCoeff() < 1e-8);
}

TEST_CASE("residuals are orthogonal to the design at lambda 0") {
    const auto& b = basis31();
    const auto ages = fine_ages();
    std::mt19937_64 rng(5);
    const Eigen::VectorXd y = synth::gaussian(static_cast<Eigen::Index>(ages.size()), 1, rng).col(0);
    const SmoothFit f = fit_penalized(to_vec(y), ages, b, 0.0);
    const Eigen::MatrixXd B = b.design(ages);
    CHECK((B.transpose() * (y - B * f.coefficients)).cwiseAbs().maxCoeff() < 1e-8);
}

TEST_CASE("rank deficient design at lambda 0") {
    // no integer age falls inside the support of the second and third basis functions
    const auto y = std::vector<double>(111, 1.0);
    CHECK_THROWS_AS(fit_penalized(y, age_grid(), basis31(), 0.0), RankError);
    CHECK_NOTHROW(fit_penalized(y, age_grid(), basis31(), 1e-6));
}

TEST_CASE("huge lambda gives the least-squares line") {
    const auto& b = basis31();
    const auto ages = age_grid();
    const auto c = synth::noisy_curves(b, 1, 1e-3, 2);
    const Eigen::VectorXd y = c.noisy.row(0).transpose();
    const SmoothFit f = fit_penalized(to_vec(y), ages, b, 1e12);
    Eigen::MatrixXd X(111, 2);
    for (int i = 0; i < 111; ++i) X.row(i) << 1.0, ages[static_cast<std::size_t>(i)];
    const Eigen::VectorXd line = X * X.colPivHouseholderQr().solve(y);
    const Eigen::VectorXd fitted = b.design(ages) * f.coefficients;
    CHECK((fitted - line).cwiseAbs().maxCoeff() < 1e-6 * y.cwiseAbs().maxCoeff());
    CHECK(f.df == doctest::Approx(2.0).epsilon(1e-4));
}

TEST_CASE("closed form matches direct minimization of the penalized criterion") {
    const auto& b = basis31();
    const auto ages = age_grid();
    const Eigen::MatrixXd B = b.design(ages);
    const Eigen::MatrixXd& R = b.penalty();
    const auto c = synth::noisy_curves(b, 5, 2e-4, 9);
    const oracle::FiniteDifferenceNewton newton(0.5);
    for (double lambda : {1e-4, 1e-2, 1.0}) {
        const Eigen::VectorXd y0 = c.noisy.row(0).transpose();
        const auto psse0 = [&](const Eigen::VectorXd& g) {
            return (y0 - B * g).squaredNorm() + lambda * g.dot(R * g);
        };
        const Eigen::MatrixXd H = newton.hessian(psse0, Eigen::VectorXd::Zero(b.size()));
        for (Eigen::Index i = 0; i < c.noisy.rows(); ++i) {
            const Eigen::VectorXd y = c.noisy.row(i).transpose();
            const auto psse = [&](const Eigen::VectorXd& g) {
                return (y - B * g).squaredNorm() + lambda * g.dot(R * g);
            };
            const Eigen::VectorXd ref = newton.minimize(psse, Eigen::VectorXd::Zero(b.size()), H);
            const SmoothFit f = fit_penalized(to_vec(y), ages, b, lambda);
            CHECK((f.coefficients - ref).cwiseAbs().maxCoeff() < 1e-6);
        }
    }
}

TEST_CASE("gcv score arithmetic") {
    SmoothFit f;
    f.sse = 0.0;
    f.df = 5.0;
    CHECK(gcv_score(f, 111) == 0.0);
    f.sse = 1.0;
    f.df = 11.0;
    CHECK(gcv_score(f, 111) == doctest::Approx(0.0111).epsilon(1e-14));
    f.df = 111.0;
    CHECK_THROWS_AS(gcv_score(f, 111), NumericError);
}

TEST_CASE("fit invariants") {
    const auto& b = basis31();
    const auto c = synth::noisy_curves(b, 1, 1e-3, 4);
    const auto y = to_vec(c.noisy.row(0).transpose());
    double prev = std::numeric_limits<double>::infinity();
    for (double lambda : default_lambda_grid()) {
        const SmoothFit f = fit_penalized(y, age_grid(), b, lambda);
        CHECK(f.df > 2.0 - 1e-8);
        CHECK(f.df <= b.size() + 1e-8);
        CHECK(f.df <= prev + 1e-10);
        CHECK(f.sse >= 0.0);
        CHECK(f.gcv >= 0.0);
        prev = f.df;
    }
}

TEST_CASE("df equals the trace of an independently built hat matrix") {
    const auto& b = basis31();
    const Eigen::MatrixXd B = b.design(age_grid());
    for (double lambda : {1e-6, 1e-3, 1.0, 100.0}) {
        const SmoothFit f = fit_penalized(std::vector<double>(111, 0.0), age_grid(), b, lambda);
        CHECK(f.df == doctest::Approx(hat(B, b.penalty(), lambda).trace()).epsilon(1e-9));
    }
}

TEST_CASE("default lambda grid") {
    const auto g = default_lambda_grid();
    REQUIRE(g.size() == 33);
    CHECK(g.front() == doctest::Approx(1e-6).epsilon(1e-12));
    CHECK(g.back() == doctest::Approx(1e2).epsilon(1e-12));
    for (std::size_t i = 1; i < g.size(); ++i) CHECK(g[i] / g[i - 1] == doctest::Approx(std::pow(10.0, 0.25)));
    CHECK_THROWS_AS(log_grid(0.0, 1.0, 3), ConfigError);
}

TEST_CASE("single point grid returns that point") {
    const auto c = synth::noisy_curves(basis31(), 1, 1e-3, 1);
    const std::vector<double> grid{0.37};
    const auto sel = select_lambda(to_vec(c.noisy.row(0).transpose()), age_grid(), basis31(), grid);
    CHECK(sel.lambda == 0.37);
    CHECK(sel.fits.size() == 1);
    CHECK_THROWS_AS(select_lambda(to_vec(c.noisy.row(0).transpose()), age_grid(), basis31(), {}), ConfigError);
}

TEST_CASE("selected lambda is the exhaustive GCV argmin") {
    const auto& b = basis31();
    const Eigen::MatrixXd B = b.design(age_grid());
    const auto grid = default_lambda_grid();
    std::vector<Eigen::MatrixXd> hats;
    for (double l : grid) hats.push_back(hat(B, b.penalty(), l));
    const auto c = synth::noisy_curves(b, 10, 5e-4, 17);
    for (Eigen::Index i = 0; i < c.noisy.rows(); ++i) {
        const Eigen::VectorXd y = c.noisy.row(i).transpose();
        std::size_t arg = 0;
        double best = std::numeric_limits<double>::infinity();
        for (std::size_t g = 0; g < grid.size(); ++g) {
            const double sse = (y - hats[g] * y).squaredNorm();
            const double df = hats[g].trace();
            const double v = 111.0 * sse / std::pow(111.0 - df, 2);
            if (v <= best) {
                best = v;
                arg = g;
            }
        }
        const auto sel = select_lambda(to_vec(y), age_grid(), b, grid);
        CHECK(sel.best == arg);
        CHECK(sel.lambda == grid[arg]);
    }
}

TEST_CASE("equal GCV prefers the larger lambda") {
    const std::vector<double> zero(111, 0.0);
    std::vector<double> grid{1e-3, 10.0, 1e-1};
    const auto sel = select_lambda(zero, age_grid(), basis31(), grid);
    CHECK(sel.lambda == 10.0);
}

TEST_CASE("GCV choice is near the integrated-squared-error optimum") {
    // summed over 50 curves; single-curve GCV picks scatter by a few grid steps
    const auto& b = basis31();
    const Eigen::MatrixXd& W = b.gram();
    const auto grid = default_lambda_grid();
    const PenalizedSmoother sm(b, age_grid());
    for (std::uint64_t seed : {1u, 2u, 3u}) {
        for (double sigma : {2e-4, 1e-3}) {
            std::mt19937_64 rng(seed);
            std::uniform_real_distribution<double> mode(60, 85), spread(3, 8);
            std::normal_distribution<double> noise(0.0, sigma);
            std::vector<double> gcv(grid.size()), ise(grid.size());
            for (int i = 0; i < 50; ++i) {
                const double m = mode(rng), s = spread(rng);
                const Eigen::VectorXd truth =
                    synth::project(b, [&](double t) { return synth::death_shape(t, m, s, 0.0); });
                Eigen::VectorXd y = sm.design() * truth;
                for (auto& v : y) v += noise(rng);
                const auto sel = select_lambda(sm, to_vec(y), grid);
                for (std::size_t g = 0; g < grid.size(); ++g) {
                    const Eigen::VectorXd e = sel.fits[g].coefficients - truth;
                    gcv[g] += sel.fits[g].gcv;
                    ise[g] += e.dot(W * e);
                }
            }
            const auto chosen = std::min_element(gcv.begin(), gcv.end()) - gcv.begin();
            const auto best = std::min_element(ise.begin(), ise.end()) - ise.begin();
            CHECK(std::abs(chosen - best) <= 1);
        }
    }
}

TEST_CASE("smooth_panel modes") {
    const auto& b = basis31();
    const auto grid = default_lambda_grid();
    const auto c = synth::noisy_curves(b, 6, 5e-4, 31);

    SUBCASE("one curve: both modes agree") {
        const auto p = panel_from(c.noisy.topRows(1));
        const auto a = smooth_panel(p, b, LambdaMode::common, grid);
        const auto q = smooth_panel(p, b, LambdaMode::per_curve, grid);
        CHECK(a.lambdas == q.lambdas);
        CHECK(a.coefficients == q.coefficients);
    }
    SUBCASE("identical curves give identical rows") {
        Eigen::MatrixXd v(2, 111);
        v.row(0) = c.noisy.row(0);
        v.row(1) = c.noisy.row(0);
        for (auto mode : {LambdaMode::common, LambdaMode::per_curve}) {
            const auto d = smooth_panel(panel_from(v), b, mode, grid);
            CHECK(d.coefficients.row(0) == d.coefficients.row(1));
        }
    }
    SUBCASE("per-curve matches select_lambda") {
        const auto d = smooth_panel(panel_from(c.noisy), b, LambdaMode::per_curve, grid);
        for (Eigen::Index i = 0; i < c.noisy.rows(); ++i) {
            const auto sel = select_lambda(to_vec(c.noisy.row(i).transpose()), age_grid(), b, grid);
            CHECK(d.lambdas[static_cast<std::size_t>(i)] == sel.lambda);
        }
        CHECK(d.keys[2] == CurveKey{"AAA", 1962, Sex::male});
    }
    SUBCASE("common lambda minimizes the summed GCV") {
        const auto d = smooth_panel(panel_from(c.noisy), b, LambdaMode::common, grid);
        const Eigen::MatrixXd B = b.design(age_grid());
        double best = std::numeric_limits<double>::infinity();
        double arg = 0.0;
        for (double l : grid) {
            const Eigen::MatrixXd H = hat(B, b.penalty(), l);
            const double df = H.trace();
            double total = 0.0;
            for (Eigen::Index i = 0; i < c.noisy.rows(); ++i) {
                const Eigen::VectorXd y = c.noisy.row(i).transpose();
                total += 111.0 * (y - H * y).squaredNorm() / std::pow(111.0 - df, 2);
            }
            if (total <= best) {
                best = total;
                arg = l;
            }
        }
        for (double l : d.lambdas) CHECK(l == arg);
    }
    SUBCASE("reproducible bit for bit") {
        const auto a = smooth_panel(panel_from(c.noisy), b, LambdaMode::per_curve, grid);
        const auto q = smooth_panel(panel_from(c.noisy), b, LambdaMode::per_curve, grid);
        CHECK(a.coefficients == q.coefficients);
        CHECK(a.lambdas == q.lambdas);
    }
    SUBCASE("empty panel") { CHECK_THROWS_AS(smooth_panel(CurvePanel{}, b, LambdaMode::common, grid), DataError); }
}

TEST_CASE("lambda mode names") {
    CHECK(parse_lambda_mode("common") == LambdaMode::common);
    CHECK(parse_lambda_mode("per-curve") == LambdaMode::per_curve);
    CHECK(to_string(LambdaMode::per_curve) == "per-curve");
    CHECK_THROWS_AS(parse_lambda_mode("both"), ConfigError);
}

TEST_CASE("dataset validation, selection and binary round trip") {
    const auto& b = basis31();
    auto [d, labels] = synth::three_groups(b, 4, 3);
    CHECK_NOTHROW(d.validate());
    d.keys[1] = d.keys[0];
    CHECK_THROWS_AS(d.validate(), DataError);
    d.keys[1] = synth::keys(12)[1];
    d.coefficients(0, 0) = std::nan("");
    CHECK_THROWS_AS(d.validate(), DataError);
    d.coefficients(0, 0) = 0.5;

    const std::vector<std::size_t> rows{3, 0};
    const auto s = d.select(rows);
    CHECK(s.size() == 2);
    CHECK(s.keys[0] == d.keys[3]);
    CHECK(s.coefficients.row(1) == d.coefficients.row(0));
    CHECK(d.subset(Sex::female).size() == 0);

    std::stringstream io;
    write_dataset(io, d);
    const auto r = read_dataset(io);
    CHECK(r.basis == d.basis);
    CHECK(r.coefficients == d.coefficients);
    CHECK(r.keys == d.keys);
    CHECK(r.lambdas == d.lambdas);
    CHECK(r.grid == d.grid);

    std::stringstream junk("not a dataset");
    CHECK_THROWS_AS(read_dataset(junk), DataError);
    std::string bytes = io.str();
    std::stringstream cut(bytes.substr(0, bytes.size() / 2));
    CHECK_THROWS_AS(read_dataset(cut), DataError);
}

TEST_CASE("evaluate a dataset curve") {
    const auto& b = basis31();
    auto [d, labels] = synth::three_groups(b, 1, 3);
    const std::vector<double> ts{0.0, 50.0, 110.0};
    const auto v = d.evaluate(1, ts);
    for (std::size_t k = 0; k < ts.size(); ++k)
        CHECK(v[k] == doctest::Approx(b.evaluate(d.coefficients.row(1).transpose(), ts[k])));
}
