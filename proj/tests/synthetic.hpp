#pragma once

// Synthetic inputs with known ground truth.

#include "fcurve/basis.hpp"
#include "fcurve/ingest.hpp"
#include "fcurve/linalg.hpp"
#include "fcurve/smooth.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <cstdio>
#include <random>
#include <sstream>
#include <string>
#include <vector>

namespace synth {

inline Eigen::MatrixXd gaussian(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng) {
    std::normal_distribution<double> n01;
    Eigen::MatrixXd m(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i)
        for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = n01(rng);
    return m;
}

/// Least-squares coefficients of f on a fine grid, i.e. a curve in the basis span close to f.
template <class F>
Eigen::VectorXd project(const fcurve::BSplineBasis& b, F&& f) {
    std::vector<double> t;
    for (int i = 0; i <= 2200; ++i) t.push_back(b.lower() + (b.upper() - b.lower()) * i / 2200.0);
    const Eigen::MatrixXd B = b.design(t);
    Eigen::VectorXd y(static_cast<Eigen::Index>(t.size()));
    for (std::size_t i = 0; i < t.size(); ++i) y(static_cast<Eigen::Index>(i)) = f(t[i]);
    return B.colPivHouseholderQr().solve(y);
}

/// Age-at-death shaped density: infant spike plus a modal bump at `mode`.
inline double death_shape(double t, double mode, double spread, double infant) {
    const double bump = std::exp(-0.5 * std::pow((t - mode) / spread, 2)) / (spread * std::sqrt(2 * M_PI));
    return infant * std::exp(-3.0 * t) * 3.0 + (1.0 - infant) * bump;
}

struct NoisyCurves {
    std::vector<double> ages;
    Eigen::MatrixXd truth;  // n x p
    Eigen::MatrixXd clean;  // n x N
    Eigen::MatrixXd noisy;  // n x N
};

/// Death-like curves with random mode, spread and infant share; Gaussian noise.
inline NoisyCurves noisy_curves(const fcurve::BSplineBasis& b, int n, double sigma, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> mode(65, 85), spread(8, 14), infant(0.01, 0.08);
    std::normal_distribution<double> noise(0.0, sigma);
    NoisyCurves c;
    c.ages = fcurve::age_grid();
    const Eigen::MatrixXd B = b.design(c.ages);
    c.truth.resize(n, b.size());
    for (int i = 0; i < n; ++i) {
        const double m = mode(rng), s = spread(rng), f = infant(rng);
        c.truth.row(i) = project(b, [&](double t) { return death_shape(t, m, s, f); }).transpose();
    }
    c.clean = c.truth * B.transpose();
    c.noisy = c.clean;
    for (Eigen::Index i = 0; i < c.noisy.rows(); ++i)
        for (Eigen::Index j = 0; j < c.noisy.cols(); ++j) c.noisy(i, j) += noise(rng);
    return c;
}

inline std::vector<fcurve::CurveKey> keys(int n, fcurve::Sex sex = fcurve::Sex::male, int per_country = 51) {
    std::vector<fcurve::CurveKey> k;
    for (int i = 0; i < n; ++i) {
        char code[16];
        std::snprintf(code, sizeof code, "C%02d", i / per_country);
        k.push_back({code, 1960 + i % per_country, sex});
    }
    return k;
}

inline fcurve::FunctionalDataset dataset(const fcurve::BSplineBasis& b, const Eigen::MatrixXd& coeffs,
                                         fcurve::Sex sex = fcurve::Sex::male) {
    fcurve::FunctionalDataset d{b, coeffs, keys(static_cast<int>(coeffs.rows()), sex),
                                std::vector<double>(static_cast<std::size_t>(coeffs.rows()), 1e-3),
                                fcurve::age_grid()};
    return d;
}

/// `per` curves around each of three distinct death shapes; labels 1..3 in blocks.
inline std::pair<fcurve::FunctionalDataset, std::vector<int>> three_groups(const fcurve::BSplineBasis& b, int per,
                                                                           std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> jitter(0.0, 0.3);
    const double modes[3] = {60.0, 72.0, 84.0};
    Eigen::MatrixXd coeffs(3 * per, b.size());
    std::vector<int> labels;
    for (int g = 0; g < 3; ++g) {
        for (int i = 0; i < per; ++i) {
            const double m = modes[g] + jitter(rng);
            const double s = 9.0 + 0.2 * jitter(rng);
            coeffs.row(g * per + i) = project(b, [&](double t) { return death_shape(t, m, s, 0.03); }).transpose();
            labels.push_back(g + 1);
        }
    }
    return {dataset(b, coeffs), labels};
}

struct FlmSample {
    Eigen::MatrixXd x;  // n x p, working (orthonormal) coordinates
    std::vector<int> labels;
};

/// Draws from the subspace mixture: x = mu_k + Q_k diag(sqrt a_k) z + sqrt(b) (I - Q_k Q_k') e.
inline FlmSample flm_sample(int n, int p, const std::vector<std::vector<double>>& a, double b, double mean_scale,
                            std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    const int K = static_cast<int>(a.size());
    std::vector<Eigen::VectorXd> mu;
    std::vector<Eigen::MatrixXd> Q;
    for (int k = 0; k < K; ++k) {
        mu.push_back(mean_scale * gaussian(p, 1, rng).col(0));
        const auto d = static_cast<Eigen::Index>(a[static_cast<std::size_t>(k)].size());
        Eigen::HouseholderQR<Eigen::MatrixXd> qr(gaussian(p, d, rng));
        Q.push_back(qr.householderQ() * Eigen::MatrixXd::Identity(p, d));
    }
    FlmSample s;
    s.x.resize(n, p);
    for (int i = 0; i < n; ++i) {
        const int k = i % K;
        const auto& ak = a[static_cast<std::size_t>(k)];
        const auto& q = Q[static_cast<std::size_t>(k)];
        Eigen::VectorXd z = gaussian(static_cast<Eigen::Index>(ak.size()), 1, rng).col(0);
        for (std::size_t j = 0; j < ak.size(); ++j) z(static_cast<Eigen::Index>(j)) *= std::sqrt(ak[j]);
        Eigen::VectorXd e = std::sqrt(b) * gaussian(p, 1, rng).col(0);
        e -= q * (q.transpose() * e);
        s.x.row(i) = (mu[static_cast<std::size_t>(k)] + q * z + e).transpose();
        s.labels.push_back(k + 1);
    }
    return s;
}

/// Dataset whose W^{1/2}-mapped coefficients equal `working`.
inline fcurve::FunctionalDataset from_working(const fcurve::BSplineBasis& b, const Eigen::MatrixXd& working) {
    const fcurve::MatrixRoots r = fcurve::spd_roots(b.gram());
    return dataset(b, working * r.inv_sqrt);
}

/// HMD-style period life table text (title, blank line, column header, rows).
inline std::string life_table(const std::string& country, fcurve::Sex sex, int first, int last, double mode_shift = 0.0) {
    std::ostringstream o;
    o << country << ", Life tables (period 1x1), " << (sex == fcurve::Sex::male ? "Males" : "Females")
      << "\tLast modified: 01 Jan 2020;  Methods Protocol: v6 (2017)\n\n";
    o << "   Year          Age             mx       qx    ax      lx      dx      Lx       Tx     ex\n";
    for (int y = first; y <= last; ++y) {
        const double mode = 70.0 + 0.2 * (y - first) + mode_shift + (sex == fcurve::Sex::female ? 5.0 : 0.0);
        std::vector<double> dx(111);
        double total = 0.0;
        for (int a = 0; a <= 110; ++a) total += dx[static_cast<std::size_t>(a)] = death_shape(a, mode, 10.0, 0.04);
        double lx = 100000.0;
        for (int a = 0; a <= 110; ++a) {
            const double d = std::round(100000.0 * dx[static_cast<std::size_t>(a)] / total);
            char row[160];
            std::snprintf(row, sizeof row, "%7d %12s %14.5f %8.5f %5.2f %7.0f %7.0f %7.0f %8.0f %6.2f\n", y,
                          a == 110 ? "110+" : std::to_string(a).c_str(), 0.01, 0.01, 0.5, lx, d, lx, lx * 10, 50.0);
            o << row;
            lx = std::max(0.0, lx - d);
        }
    }
    return o.str();
}

}  // namespace synth
