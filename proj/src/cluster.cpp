#include "fcurve/cluster.hpp"

#include "fcurve/error.hpp"
#include "fcurve/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>

namespace fcurve {

std::vector<double> Partition::shares() const {
    std::vector<double> out;
    const double n = static_cast<double>(labels.size());
    for (int s : sizes) out.push_back(n > 0 ? s / n : 0.0);
    return out;
}

Partition canonical_partition(std::span<const int> labels) {
    Partition p;
    std::map<int, int> remap;
    p.labels.reserve(labels.size());
    for (int l : labels) {
        auto [it, inserted] = remap.try_emplace(l, static_cast<int>(remap.size()) + 1);
        if (inserted) p.sizes.push_back(0);
        p.labels.push_back(it->second);
        ++p.sizes[static_cast<std::size_t>(it->second - 1)];
    }
    p.K = static_cast<int>(remap.size());
    return p;
}

namespace {

struct KMeansRun {
    std::vector<int> assign;
    double inertia = std::numeric_limits<double>::infinity();
    std::vector<double> trace;
};

Eigen::MatrixXd plus_plus_seed(const Eigen::MatrixXd& x, int K, Rng& rng) {
    const Eigen::Index n = x.rows();
    Eigen::MatrixXd centers(K, x.cols());
    centers.row(0) = x.row(static_cast<Eigen::Index>(rng.index(static_cast<std::size_t>(n))));
    Eigen::VectorXd d2 = (x.rowwise() - centers.row(0)).rowwise().squaredNorm();
    for (int c = 1; c < K; ++c) {
        const double total = d2.sum();
        Eigen::Index pick = 0;
        if (total > 0.0) {
            const double u = rng.uniform() * total;
            double acc = 0.0;
            pick = n - 1;
            for (Eigen::Index i = 0; i < n; ++i) {
                acc += d2(i);
                if (u < acc && d2(i) > 0.0) {
                    pick = i;
                    break;
                }
            }
        } else {
            pick = static_cast<Eigen::Index>(rng.index(static_cast<std::size_t>(n)));
        }
        centers.row(c) = x.row(pick);
        d2 = d2.cwiseMin((x.rowwise() - centers.row(c)).rowwise().squaredNorm());
    }
    return centers;
}

KMeansRun lloyd(const Eigen::MatrixXd& x, Eigen::MatrixXd centers, const KMeansOptions& opts) {
    const Eigen::Index n = x.rows();
    const int K = static_cast<int>(centers.rows());
    KMeansRun run;
    run.assign.assign(static_cast<std::size_t>(n), -1);
    Eigen::VectorXd dist(n);
    double previous = std::numeric_limits<double>::infinity();

    for (int iter = 0; iter < opts.max_iter; ++iter) {
        bool changed = false;
        double inertia = 0.0;
        for (Eigen::Index i = 0; i < n; ++i) {
            int best = 0;
            double bd = std::numeric_limits<double>::infinity();
            for (int c = 0; c < K; ++c) {
                const double d = (x.row(i) - centers.row(c)).squaredNorm();
                if (d < bd) {
                    bd = d;
                    best = c;
                }
            }
            dist(i) = bd;
            inertia += bd;
            if (run.assign[static_cast<std::size_t>(i)] != best) {
                run.assign[static_cast<std::size_t>(i)] = best;
                changed = true;
            }
        }
        run.trace.push_back(inertia);
        run.inertia = inertia;

        // centroid update
        Eigen::MatrixXd sums = Eigen::MatrixXd::Zero(K, x.cols());
        std::vector<int> counts(static_cast<std::size_t>(K), 0);
        for (Eigen::Index i = 0; i < n; ++i) {
            const int c = run.assign[static_cast<std::size_t>(i)];
            sums.row(c) += x.row(i);
            ++counts[static_cast<std::size_t>(c)];
        }
        bool reseeded = false;
        for (int c = 0; c < K; ++c) {
            if (counts[static_cast<std::size_t>(c)] > 0) {
                centers.row(c) = sums.row(c) / counts[static_cast<std::size_t>(c)];
                continue;
            }
            // Empty cluster: move the centroid onto the farthest point, if any point is off-centre.
            Eigen::Index far = 0;
            const double fd = dist.maxCoeff(&far);
            if (fd > 0.0) {
                centers.row(c) = x.row(far);
                dist(far) = 0.0;
                reseeded = true;
            }
        }
        const bool small_gain = std::isfinite(previous) && previous - inertia <= opts.tol * std::max(previous, 1e-300);
        if ((!changed || small_gain) && !reseeded) break;
        previous = inertia;
    }
    return run;
}

}  // namespace

Partition kmeans(const Eigen::MatrixXd& points, int K, std::uint64_t seed, const KMeansOptions& opts) {
    const Eigen::Index n = points.rows();
    if (points.cols() < 1 || n < 1) throw ConfigError("k-means needs a non-empty point matrix");
    if (K < 1 || K > n) throw ConfigError("k-means K must be in [1, n]");
    if (!points.allFinite()) throw DataError("k-means points must be finite");
    if (opts.restarts < 1 || opts.max_iter < 1) throw ConfigError("invalid k-means options");

    Rng rng(seed);
    KMeansRun best;
    for (int r = 0; r < opts.restarts; ++r) {
        Rng child(rng.next());
        KMeansRun run = lloyd(points, plus_plus_seed(points, K, child), opts);
        if (run.inertia < best.inertia) best = std::move(run);
    }
    Partition p = canonical_partition(best.assign);
    p.criterion = best.inertia;
    p.trace = std::move(best.trace);
    return p;
}

Partition two_stage(const FunctionalDataset& data, FeatureSpec feature, int K, std::uint64_t seed,
                    const KMeansOptions& opts) {
    data.validate();
    if (feature.kind == Feature::coefficients) return kmeans(data.coefficients, K, seed, opts);
    const FpcaResult result = fpca(data);
    return kmeans(scores(result, feature.q), K, seed, opts);
}

double semimetric_fpca(const FpcaResult& result, std::size_t i, std::size_t j, int q) {
    const auto n = static_cast<std::size_t>(result.scores.rows());
    if (i >= n || j >= n) throw ConfigError("curve index out of range");
    if (q < 1 || q > result.components()) throw ConfigError("q out of range [1, p]");
    return (result.scores.row(static_cast<Eigen::Index>(i)).head(q) -
            result.scores.row(static_cast<Eigen::Index>(j)).head(q))
        .norm();
}

DistanceMatrix::DistanceMatrix(Eigen::MatrixXd d) : d_(std::move(d)) {
    if (d_.rows() != d_.cols() || d_.rows() < 1) throw ConfigError("distance matrix must be square and non-empty");
    for (Eigen::Index i = 0; i < d_.rows(); ++i) {
        if (d_(i, i) != 0.0) throw ConfigError("distance matrix diagonal must be zero");
        for (Eigen::Index j = 0; j < i; ++j) {
            if (!(d_(i, j) >= 0.0) || d_(i, j) != d_(j, i)) {
                throw ConfigError("distance matrix must be symmetric and non-negative");
            }
        }
    }
}

DistanceMatrix semimetric_matrix(const FpcaResult& result, int q) {
    if (q < 1 || q > result.components()) throw ConfigError("q out of range [1, p]");
    const Eigen::MatrixXd s = result.scores.leftCols(q);
    const Eigen::Index n = s.rows();
    Eigen::MatrixXd d = Eigen::MatrixXd::Zero(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = i + 1; j < n; ++j) {
            d(i, j) = d(j, i) = (s.row(i) - s.row(j)).norm();
        }
    }
    return DistanceMatrix(std::move(d));
}

Linkage parse_linkage(std::string_view text) {
    if (text == "ward") return Linkage::ward;
    if (text == "complete") return Linkage::complete;
    if (text == "average") return Linkage::average;
    throw ConfigError("unknown linkage '" + std::string(text) + "'");
}

std::string_view to_string(Linkage linkage) {
    switch (linkage) {
    case Linkage::ward: return "ward";
    case Linkage::complete: return "complete";
    case Linkage::average: return "average";
    }
    return "ward";
}

Partition hierarchical(const DistanceMatrix& dist, Linkage linkage, int K) {
    const auto n = static_cast<Eigen::Index>(dist.size());
    if (K < 1 || K > n) throw ConfigError("hierarchical K must be in [1, n]");

    // Ward works on squared distances; the reported height is their square root.
    Eigen::MatrixXd d = dist.matrix();
    if (linkage == Linkage::ward) d = d.cwiseProduct(d);

    std::vector<bool> active(static_cast<std::size_t>(n), true);
    std::vector<double> size(static_cast<std::size_t>(n), 1.0);
    std::vector<int> owner(static_cast<std::size_t>(n));
    std::iota(owner.begin(), owner.end(), 0);
    std::vector<Eigen::Index> nn(static_cast<std::size_t>(n), -1);
    std::vector<double> nnd(static_cast<std::size_t>(n), std::numeric_limits<double>::infinity());

    const auto refresh = [&](Eigen::Index i) {
        nn[static_cast<std::size_t>(i)] = -1;
        nnd[static_cast<std::size_t>(i)] = std::numeric_limits<double>::infinity();
        for (Eigen::Index j = i + 1; j < n; ++j) {
            if (active[static_cast<std::size_t>(j)] && d(i, j) < nnd[static_cast<std::size_t>(i)]) {
                nnd[static_cast<std::size_t>(i)] = d(i, j);
                nn[static_cast<std::size_t>(i)] = j;
            }
        }
    };
    for (Eigen::Index i = 0; i < n; ++i) refresh(i);

    double height = 0.0;
    for (Eigen::Index merges = 0; merges < n - K; ++merges) {
        Eigen::Index a = -1;
        double best = std::numeric_limits<double>::infinity();
        for (Eigen::Index i = 0; i < n; ++i) {
            if (active[static_cast<std::size_t>(i)] && nn[static_cast<std::size_t>(i)] >= 0 &&
                nnd[static_cast<std::size_t>(i)] < best) {
                best = nnd[static_cast<std::size_t>(i)];
                a = i;
            }
        }
        const Eigen::Index b = nn[static_cast<std::size_t>(a)];
        height = linkage == Linkage::ward ? std::sqrt(best) : best;

        const double na = size[static_cast<std::size_t>(a)];
        const double nb = size[static_cast<std::size_t>(b)];
        const double dab = d(a, b);
        for (Eigen::Index k = 0; k < n; ++k) {
            if (!active[static_cast<std::size_t>(k)] || k == a || k == b) continue;
            const double nk = size[static_cast<std::size_t>(k)];
            double v = 0.0;
            switch (linkage) {
            case Linkage::ward:
                v = ((na + nk) * d(k, a) + (nb + nk) * d(k, b) - nk * dab) / (na + nb + nk);
                break;
            case Linkage::complete:
                v = std::max(d(k, a), d(k, b));
                break;
            case Linkage::average:
                v = (na * d(k, a) + nb * d(k, b)) / (na + nb);
                break;
            }
            d(k, a) = d(a, k) = v;
        }
        active[static_cast<std::size_t>(b)] = false;
        size[static_cast<std::size_t>(a)] = na + nb;
        for (auto& o : owner) {
            if (o == b) o = static_cast<int>(a);
        }

        refresh(a);
        for (Eigen::Index k = 0; k < b; ++k) {
            if (!active[static_cast<std::size_t>(k)] || k == a) continue;
            const Eigen::Index cur = nn[static_cast<std::size_t>(k)];
            if (cur == a || cur == b) {
                refresh(k);
            } else if (k < a && (d(k, a) < nnd[static_cast<std::size_t>(k)] ||
                                 (d(k, a) == nnd[static_cast<std::size_t>(k)] && a < cur))) {
                nnd[static_cast<std::size_t>(k)] = d(k, a);
                nn[static_cast<std::size_t>(k)] = a;
            }
        }
    }

    Partition p = canonical_partition(owner);
    p.criterion = height;
    return p;
}

double adjusted_rand_index(std::span<const int> a, std::span<const int> b) {
    if (a.size() != b.size()) throw ConfigError("labelings differ in length");
    const std::size_t n = a.size();
    if (n < 2) return 1.0;
    std::map<std::pair<int, int>, double> joint;
    std::map<int, double> ra;
    std::map<int, double> rb;
    for (std::size_t i = 0; i < n; ++i) {
        joint[{a[i], b[i]}] += 1.0;
        ra[a[i]] += 1.0;
        rb[b[i]] += 1.0;
    }
    const auto c2 = [](double x) { return x * (x - 1.0) / 2.0; };
    double index = 0.0;
    for (const auto& [k, v] : joint) index += c2(v);
    double sa = 0.0;
    double sb = 0.0;
    for (const auto& [k, v] : ra) sa += c2(v);
    for (const auto& [k, v] : rb) sb += c2(v);
    const double expected = sa * sb / c2(static_cast<double>(n));
    const double max_index = 0.5 * (sa + sb);
    if (max_index == expected) return 1.0;
    return (index - expected) / (max_index - expected);
}

std::vector<int> match_labels(std::span<const int> a, std::span<const int> b, int K) {
    if (a.size() != b.size()) throw ConfigError("labelings differ in length");
    if (K < 1) throw ConfigError("K must be positive");
    // overlap[bk][ak]
    std::vector<std::vector<int>> overlap(static_cast<std::size_t>(K), std::vector<int>(static_cast<std::size_t>(K), 0));
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (a[i] < 1 || a[i] > K || b[i] < 1 || b[i] > K) throw ConfigError("label outside 1..K");
        ++overlap[static_cast<std::size_t>(b[i] - 1)][static_cast<std::size_t>(a[i] - 1)];
    }
    std::vector<int> perm(static_cast<std::size_t>(K));
    std::iota(perm.begin(), perm.end(), 1);
    if (K <= 8) {
        std::vector<int> best = perm;
        int best_score = -1;
        do {
            int score = 0;
            for (int k = 0; k < K; ++k) score += overlap[static_cast<std::size_t>(k)][static_cast<std::size_t>(perm[static_cast<std::size_t>(k)] - 1)];
            if (score > best_score) {
                best_score = score;
                best = perm;
            }
        } while (std::next_permutation(perm.begin(), perm.end()));
        return best;
    }
    std::vector<bool> used_a(static_cast<std::size_t>(K), false);
    std::vector<bool> used_b(static_cast<std::size_t>(K), false);
    for (int step = 0; step < K; ++step) {
        int bi = -1;
        int ai = -1;
        int bv = -1;
        for (int bk = 0; bk < K; ++bk) {
            if (used_b[static_cast<std::size_t>(bk)]) continue;
            for (int ak = 0; ak < K; ++ak) {
                if (used_a[static_cast<std::size_t>(ak)]) continue;
                if (overlap[static_cast<std::size_t>(bk)][static_cast<std::size_t>(ak)] > bv) {
                    bv = overlap[static_cast<std::size_t>(bk)][static_cast<std::size_t>(ak)];
                    bi = bk;
                    ai = ak;
                }
            }
        }
        used_a[static_cast<std::size_t>(ai)] = used_b[static_cast<std::size_t>(bi)] = true;
        perm[static_cast<std::size_t>(bi)] = ai + 1;
    }
    return perm;
}

}  // namespace fcurve
