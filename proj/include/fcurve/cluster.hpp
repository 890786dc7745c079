#pragma once

#include "fcurve/fpca.hpp"
#include "fcurve/smooth.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

namespace fcurve {

/// Hard partition with labels 1..K and no empty cluster.
struct Partition {
    std::vector<int> labels;
    int K = 0;
    std::vector<int> sizes;
    /// k-means: within-cluster sum of squares; hierarchical: height of the last merge.
    double criterion = 0.0;
    /// k-means only: inertia after each Lloyd iteration of the retained run.
    std::vector<double> trace;

    /// Label frequencies in [0, 1].
    std::vector<double> shares() const;
};

/// Relabels so that labels appear in order 1, 2, ... along the index; fills sizes.
Partition canonical_partition(std::span<const int> labels);

struct KMeansOptions {
    int restarts = 50;
    int max_iter = 300;
    double tol = 1e-9;  // relative inertia decrease
};

/// Lloyd's algorithm with k-means++ seeding; best of `restarts` runs.
Partition kmeans(const Eigen::MatrixXd& points, int K, std::uint64_t seed, const KMeansOptions& opts = {});

enum class Feature { coefficients, fpca_scores };

struct FeatureSpec {
    Feature kind = Feature::coefficients;
    int q = 0;  // number of score columns for fpca_scores
};

Partition two_stage(const FunctionalDataset& data, FeatureSpec feature, int K, std::uint64_t seed,
                    const KMeansOptions& opts = {});

/// Euclidean distance between the first q score vectors of curves i and j.
double semimetric_fpca(const FpcaResult& result, std::size_t i, std::size_t j, int q);

class DistanceMatrix {
public:
    /// Validates symmetry, zero diagonal and non-negativity.
    explicit DistanceMatrix(Eigen::MatrixXd d);

    std::size_t size() const noexcept { return static_cast<std::size_t>(d_.rows()); }
    double operator()(std::size_t i, std::size_t j) const {
        return d_(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
    }
    const Eigen::MatrixXd& matrix() const noexcept { return d_; }

private:
    Eigen::MatrixXd d_;
};

DistanceMatrix semimetric_matrix(const FpcaResult& result, int q);

enum class Linkage { ward, complete, average };

Linkage parse_linkage(std::string_view text);
std::string_view to_string(Linkage linkage);

/// Agglomerative clustering cut at K clusters. The closest pair merges
/// first; ties go to the lowest (i, j) index pair.
Partition hierarchical(const DistanceMatrix& dist, Linkage linkage, int K);

/// Adjusted Rand index between two labelings of the same items.
double adjusted_rand_index(std::span<const int> a, std::span<const int> b);

/// Permutation of b's labels maximizing agreement with a: result[k-1] is the
/// a-label matched to b-label k. Exhaustive for K <= 8, greedy otherwise.
std::vector<int> match_labels(std::span<const int> a, std::span<const int> b, int K);

}  // namespace fcurve
