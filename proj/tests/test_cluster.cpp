#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "fcurve/cluster.hpp"
#include "fcurve/error.hpp"
#include "oracles.hpp"
#include "synthetic.hpp"

#include <map>
#include <numeric>
#include <random>
#include <set>

using namespace fcurve;

namespace {

const BSplineBasis& basis31() {
    static const BSplineBasis b = make_basis(KnotScheme::nonuniform31(), 4);
    return b;
}

Eigen::MatrixXd blobs(int per, double sigma, std::uint64_t seed, std::vector<int>& truth) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> n01;
    const Eigen::Matrix<double, 3, 2> centers{{0.0, 0.0}, {1.5, 0.0}, {0.0, 1.2}};
    Eigen::MatrixXd x(3 * per, 2);
    truth.clear();
    for (int i = 0; i < 3 * per; ++i) {
        const int g = i % 3;
        x.row(i) = centers.row(g) + sigma * Eigen::RowVector2d(n01(rng), n01(rng));
        truth.push_back(g + 1);
    }
    return x;
}

double total_ss(const Eigen::MatrixXd& x) { return (x.rowwise() - x.colwise().mean()).squaredNorm(); }

double inertia(const Eigen::MatrixXd& x, const std::vector<int>& labels) {
    std::map<int, std::vector<Eigen::Index>> groups;
    for (std::size_t i = 0; i < labels.size(); ++i) groups[labels[i]].push_back(static_cast<Eigen::Index>(i));
    double s = 0.0;
    for (const auto& [k, rows] : groups) s += total_ss(x(rows, Eigen::all));
    return s;
}

Eigen::MatrixXd euclidean(const Eigen::MatrixXd& x) {
    Eigen::MatrixXd d(x.rows(), x.rows());
    for (Eigen::Index i = 0; i < x.rows(); ++i)
        for (Eigen::Index j = 0; j < x.rows(); ++j) d(i, j) = i == j ? 0.0 : (x.row(i) - x.row(j)).norm();
    return d;
}

// Agglomeration by brute force: every step scans all cluster pairs and
// evaluates the linkage from the member points.
std::vector<int> naive_agglomerate(const Eigen::MatrixXd& x, Linkage linkage, int K) {
    std::vector<std::vector<Eigen::Index>> clusters;
    for (Eigen::Index i = 0; i < x.rows(); ++i) clusters.push_back({i});
    const auto cost = [&](const std::vector<Eigen::Index>& a, const std::vector<Eigen::Index>& b) {
        if (linkage == Linkage::ward) {
            const Eigen::RowVectorXd ca = x(a, Eigen::all).colwise().mean();
            const Eigen::RowVectorXd cb = x(b, Eigen::all).colwise().mean();
            const double na = static_cast<double>(a.size()), nb = static_cast<double>(b.size());
            return 2.0 * na * nb / (na + nb) * (ca - cb).squaredNorm();
        }
        double worst = 0.0, sum = 0.0;
        for (auto i : a)
            for (auto j : b) {
                const double d = (x.row(i) - x.row(j)).norm();
                worst = std::max(worst, d);
                sum += d;
            }
        return linkage == Linkage::complete ? worst : sum / static_cast<double>(a.size() * b.size());
    };
    while (static_cast<int>(clusters.size()) > K) {
        std::size_t ba = 0, bb = 1;
        double best = std::numeric_limits<double>::infinity();
        for (std::size_t a = 0; a < clusters.size(); ++a)
            for (std::size_t b = a + 1; b < clusters.size(); ++b) {
                const double c = cost(clusters[a], clusters[b]);
                if (c < best) {
                    best = c;
                    ba = a;
                    bb = b;
                }
            }
        clusters[ba].insert(clusters[ba].end(), clusters[bb].begin(), clusters[bb].end());
        clusters.erase(clusters.begin() + static_cast<std::ptrdiff_t>(bb));
    }
    std::vector<int> labels(static_cast<std::size_t>(x.rows()));
    for (std::size_t k = 0; k < clusters.size(); ++k)
        for (auto i : clusters[k]) labels[static_cast<std::size_t>(i)] = static_cast<int>(k) + 1;
    return labels;
}

void check_partition(const Partition& p, std::size_t n) {
    REQUIRE(p.labels.size() == n);
    CHECK(static_cast<int>(p.sizes.size()) == p.K);
    CHECK(std::accumulate(p.sizes.begin(), p.sizes.end(), std::size_t{0}) == n);
    for (int s : p.sizes) CHECK(s > 0);
    for (int l : p.labels) CHECK((l >= 1 && l <= p.K));
}

}  // namespace

TEST_CASE("k-means with K = 1 and K = n") {
    std::vector<int> truth;
    const Eigen::MatrixXd x = blobs(5, 0.3, 1, truth);
    const Partition one = kmeans(x, 1, 7);
    check_partition(one, 15);
    CHECK(one.K == 1);
    CHECK(one.criterion == doctest::Approx(total_ss(x)).epsilon(1e-12));
    const Partition all = kmeans(x, 15, 7);
    check_partition(all, 15);
    CHECK(all.criterion == 0.0);
    CHECK(std::set<int>(all.labels.begin(), all.labels.end()).size() == 15);
}

TEST_CASE("well separated blobs are recovered exactly") {
    std::vector<int> truth;
    const Eigen::MatrixXd x = blobs(40, 0.05, 3, truth);
    const Partition p = kmeans(x, 3, 1);
    check_partition(p, x.rows());
    CHECK(adjusted_rand_index(p.labels, truth) == 1.0);
    CHECK(p.criterion == doctest::Approx(inertia(x, truth)).epsilon(1e-12));
}

TEST_CASE("k-means inertia is non-increasing within the retained run") {
    std::vector<int> truth;
    const Eigen::MatrixXd x = blobs(60, 0.6, 5, truth);
    const Partition p = kmeans(x, 4, 2);
    REQUIRE(!p.trace.empty());
    for (std::size_t i = 1; i < p.trace.size(); ++i) CHECK(p.trace[i] <= p.trace[i - 1] * (1 + 1e-12));
    CHECK(p.criterion == doctest::Approx(inertia(x, p.labels)).epsilon(1e-10));
}

TEST_CASE("k-means determinism and errors") {
    std::vector<int> truth;
    const Eigen::MatrixXd x = blobs(30, 0.5, 9, truth);
    CHECK(kmeans(x, 3, 11).labels == kmeans(x, 3, 11).labels);
    CHECK_THROWS_AS(kmeans(x, 91, 1), ConfigError);
    CHECK_THROWS_AS(kmeans(x, 0, 1), ConfigError);
    Eigen::MatrixXd bad = x;
    bad(0, 0) = std::nan("");
    CHECK_THROWS_AS(kmeans(bad, 2, 1), DataError);
}

TEST_CASE("k-means labels are invariant under uniform rescaling") {
    std::vector<int> truth;
    const Eigen::MatrixXd x = blobs(30, 0.5, 13, truth);
    const Partition a = kmeans(x, 3, 4);
    for (double c : {1e-3, 0.5, 250.0}) {
        const Partition b = kmeans(c * x, 3, 4);
        const auto m = match_labels(a.labels, b.labels, 3);
        std::vector<int> mapped;
        for (int l : b.labels) mapped.push_back(m[static_cast<std::size_t>(l - 1)]);
        CHECK(mapped == a.labels);
    }
}

TEST_CASE("two-stage on identical curves collapses to one cluster") {
    const auto& b = basis31();
    const Eigen::VectorXd g = synth::project(b, [](double t) { return synth::death_shape(t, 75, 10, 0.03); });
    Eigen::MatrixXd coeffs(6, b.size());
    coeffs.rowwise() = g.transpose();
    const auto d = synth::dataset(b, coeffs);
    for (std::uint64_t seed : {1u, 2u, 3u}) {
        const Partition p = two_stage(d, {Feature::coefficients, 0}, 3, seed);
        check_partition(p, 6);
        CHECK(p.K == 1);
    }
}

TEST_CASE("two-stage on full scores equals k-means under the L2 metric") {
    const auto& b = basis31();
    auto [d, truth] = synth::three_groups(b, 15, 21);
    // independent W^{1/2} from the quadrature oracle
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(oracle::exact_inner(b, 0));
    const Eigen::MatrixXd root = es.eigenvectors() * es.eigenvalues().cwiseSqrt().asDiagonal() *
                                 es.eigenvectors().transpose();
    const Eigen::MatrixXd l2_points = d.coefficients * root;
    const int p = b.size();
    const Partition s = two_stage(d, {Feature::fpca_scores, p}, 3, 5);
    const Partition w = kmeans(l2_points, 3, 5);
    CHECK(adjusted_rand_index(s.labels, w.labels) == 1.0);
    CHECK(adjusted_rand_index(s.labels, truth) == 1.0);
    // the same labels give the same inertia in both geometries
    CHECK(s.criterion == doctest::Approx(inertia(l2_points, s.labels)).epsilon(1e-8));
    std::vector<int> other(s.labels);
    std::rotate(other.begin(), other.begin() + 4, other.end());
    const FpcaResult r = fpca(d);
    CHECK(inertia(r.scores, other) == doctest::Approx(inertia(l2_points, other)).epsilon(1e-8));
}

TEST_CASE("semimetric") {
    const auto& b = basis31();
    auto [d, truth] = synth::three_groups(b, 5, 2);
    const FpcaResult r = fpca(d);
    CHECK(semimetric_fpca(r, 4, 4, 3) == 0.0);

    FpcaResult toy;
    toy.eigenvalues = Eigen::VectorXd::Ones(2);
    toy.scores = Eigen::MatrixXd{{3.0, 9.0}, {-1.0, 2.0}};
    CHECK(semimetric_fpca(toy, 0, 1, 1) == 4.0);

    const Eigen::MatrixXd W = oracle::exact_inner(b, 0);
    const int p = b.size();
    for (std::size_t i = 0; i < d.size(); ++i)
        for (std::size_t j = 0; j < d.size(); ++j) {
            const Eigen::VectorXd diff = d.coefficients.row(static_cast<Eigen::Index>(i)).transpose() -
                                         d.coefficients.row(static_cast<Eigen::Index>(j)).transpose();
            const double ref = std::sqrt(std::max(0.0, diff.dot(W * diff)));
            CHECK(std::abs(semimetric_fpca(r, i, j, p) - ref) < 1e-8);
        }
    CHECK_THROWS_AS(semimetric_fpca(r, 0, d.size(), 2), ConfigError);
    CHECK_THROWS_AS(semimetric_fpca(r, 0, 1, p + 1), ConfigError);
}

TEST_CASE("semimetric matrix is a metric on score vectors") {
    const auto& b = basis31();
    auto [d, truth] = synth::three_groups(b, 6, 4);
    const FpcaResult r = fpca(d);
    const DistanceMatrix m = semimetric_matrix(r, 4);
    const auto n = m.size();
    for (std::size_t i = 0; i < n; ++i) {
        CHECK(m(i, i) == 0.0);
        for (std::size_t j = 0; j < n; ++j) {
            CHECK(m(i, j) == m(j, i));
            CHECK(m(i, j) == doctest::Approx(semimetric_fpca(r, i, j, 4)).epsilon(1e-14));
            for (std::size_t k = 0; k < n; ++k) CHECK(m(i, k) <= m(i, j) + m(j, k) + 1e-15);
        }
    }
}

TEST_CASE("distance matrix validation") {
    CHECK_THROWS_AS(DistanceMatrix(Eigen::MatrixXd{{0.0, 1.0}, {2.0, 0.0}}), ConfigError);
    CHECK_THROWS_AS(DistanceMatrix(Eigen::MatrixXd{{1.0, 1.0}, {1.0, 0.0}}), ConfigError);
    CHECK_THROWS_AS(DistanceMatrix(Eigen::MatrixXd{{0.0, -1.0}, {-1.0, 0.0}}), ConfigError);
    CHECK_THROWS_AS(DistanceMatrix(Eigen::MatrixXd(2, 3)), ConfigError);
}

TEST_CASE("hierarchical: two far pairs under every linkage") {
    const Eigen::MatrixXd x{{0.0, 0.0}, {10.0, 0.0}, {0.1, 0.0}, {10.2, 0.0}};
    const DistanceMatrix d(euclidean(x));
    for (auto l : {Linkage::ward, Linkage::complete, Linkage::average}) {
        const Partition p = hierarchical(d, l, 2);
        check_partition(p, 4);
        CHECK(p.labels == std::vector<int>{1, 2, 1, 2});
        const Partition s = hierarchical(d, l, 4);
        CHECK(s.labels == std::vector<int>{1, 2, 3, 4});
    }
    CHECK_THROWS_AS(hierarchical(d, Linkage::ward, 5), ConfigError);
}

TEST_CASE("hierarchical matches brute-force agglomeration") {
    std::mt19937_64 rng(17);
    for (int trial = 0; trial < 5; ++trial) {
        const Eigen::MatrixXd x = synth::gaussian(30, 3, rng);
        const DistanceMatrix d(euclidean(x));
        for (auto l : {Linkage::ward, Linkage::complete, Linkage::average}) {
            for (int K : {2, 3, 5, 8}) {
                const Partition p = hierarchical(d, l, K);
                check_partition(p, 30);
                CHECK(adjusted_rand_index(p.labels, naive_agglomerate(x, l, K)) == 1.0);
            }
        }
    }
}

TEST_CASE("hierarchical ties go to the lowest index pair") {
    // equilateral-ish: every pair at distance 1
    Eigen::MatrixXd eq = Eigen::MatrixXd::Ones(4, 4);
    eq.diagonal().setZero();
    const Partition p = hierarchical(DistanceMatrix(eq), Linkage::complete, 3);
    CHECK(p.labels == std::vector<int>{1, 1, 2, 3});
}

TEST_CASE("hierarchical is invariant to row permutation") {
    std::mt19937_64 rng(29);
    const Eigen::MatrixXd x = synth::gaussian(25, 2, rng);
    std::vector<Eigen::Index> perm(25);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    const Eigen::MatrixXd y = x(perm, Eigen::all);
    for (auto l : {Linkage::ward, Linkage::complete, Linkage::average}) {
        const Partition a = hierarchical(DistanceMatrix(euclidean(x)), l, 4);
        const Partition b = hierarchical(DistanceMatrix(euclidean(y)), l, 4);
        std::vector<int> back(25);
        for (std::size_t i = 0; i < perm.size(); ++i) back[static_cast<std::size_t>(perm[i])] = b.labels[i];
        CHECK(adjusted_rand_index(a.labels, back) == 1.0);
    }
}

TEST_CASE("adjusted Rand index") {
    const std::vector<int> a{1, 1, 2, 2};
    CHECK(adjusted_rand_index(a, a) == 1.0);
    CHECK(adjusted_rand_index(a, std::vector<int>{2, 2, 1, 1}) == 1.0);
    CHECK(adjusted_rand_index(a, std::vector<int>{1, 1, 1, 2}) == doctest::Approx(0.0));
    // contingency {{2,1},{0,3}}: index 4, expected 6*7/15, max 6.5
    CHECK(adjusted_rand_index(std::vector<int>{1, 1, 1, 2, 2, 2}, std::vector<int>{1, 1, 2, 2, 2, 2}) ==
          doctest::Approx((4.0 - 42.0 / 15.0) / (6.5 - 42.0 / 15.0)));
    CHECK_THROWS_AS(adjusted_rand_index(a, std::vector<int>{1}), ConfigError);
}

TEST_CASE("label matching") {
    const std::vector<int> a{1, 1, 2, 2, 3, 3, 3};
    const std::vector<int> b{3, 3, 1, 1, 2, 2, 2};
    CHECK(match_labels(a, b, 3) == std::vector<int>{2, 3, 1});
    CHECK_THROWS_AS(match_labels(a, std::vector<int>{1, 2, 3, 4, 1, 2, 3}, 3), ConfigError);
}

TEST_CASE("canonical partition and shares") {
    const std::vector<int> raw{7, 7, 3, 9, 3};
    const Partition p = canonical_partition(raw);
    CHECK(p.labels == std::vector<int>{1, 1, 2, 3, 2});
    CHECK(p.K == 3);
    CHECK(p.sizes == std::vector<int>{2, 2, 1});
    const auto s = p.shares();
    CHECK(s == std::vector<double>{0.4, 0.4, 0.2});
}

TEST_CASE("linkage names") {
    CHECK(parse_linkage("ward") == Linkage::ward);
    CHECK(parse_linkage("average") == Linkage::average);
    CHECK(to_string(Linkage::complete) == "complete");
    CHECK_THROWS_AS(parse_linkage("single"), ConfigError);
}
