#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <random>
#include <vector>

namespace fcurve {

/// Eigen-decomposition of a symmetric matrix with eigenvalues sorted in
/// non-increasing order (columns of `vectors` follow the same order).
struct SymmetricEigen {
    Eigen::VectorXd values;
    Eigen::MatrixXd vectors;
};

SymmetricEigen symmetric_eigen(const Eigen::MatrixXd& m);

/// Square root and inverse square root of a symmetric positive-definite matrix.
struct MatrixRoots {
    Eigen::MatrixXd sqrt;
    Eigen::MatrixXd inv_sqrt;
    double log_det = 0.0;
};

MatrixRoots spd_roots(const Eigen::MatrixXd& m);

/// Gauss-Legendre nodes and weights on [-1, 1].
struct GaussRule {
    std::vector<double> nodes;
    std::vector<double> weights;
};

GaussRule gauss_legendre(int n);

/// Seeded random source. The distributions are implemented here rather than
/// taken from <random> so streams are identical across standard libraries.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next() { return engine_(); }
    /// Uniform on [0, 1).
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
    /// Uniform integer on [0, n).
    std::size_t index(std::size_t n);
    double normal();

private:
    std::mt19937_64 engine_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace fcurve
