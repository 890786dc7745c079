#include "fcurve/flm.hpp"

#include "fcurve/cluster.hpp"
#include "fcurve/error.hpp"
#include "fcurve/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <optional>

namespace fcurve {

std::string_view to_string(FlmVariant v) {
    return v == FlmVariant::akj_b_qk_dk ? "akj-b-qk-dk" : "akj-bk-qk-dk";
}

FlmVariant parse_flm_variant(std::string_view text) {
    if (text == "akj-b-qk-dk" || text == "AkjBQkDk") return FlmVariant::akj_b_qk_dk;
    if (text == "akj-bk-qk-dk" || text == "AkjBkQkDk") return FlmVariant::akj_bk_qk_dk;
    throw ConfigError("unknown FLM variant '" + std::string(text) + "'");
}

std::string_view to_string(FlmInit v) { return v == FlmInit::kmeans ? "kmeans" : "random"; }

FlmInit parse_flm_init(std::string_view text) {
    if (text == "kmeans") return FlmInit::kmeans;
    if (text == "random") return FlmInit::random;
    throw ConfigError("unknown FLM init '" + std::string(text) + "'");
}

void FlmConfig::validate() const {
    if (K < 1) throw ConfigError("FLM K must be >= 1");
    if (!(scree_threshold > 0.0 && scree_threshold < 1.0)) throw ConfigError("scree threshold must be in (0, 1)");
    if (!(tol > 0.0)) throw ConfigError("EM tolerance must be positive");
    if (max_iter < 1) throw ConfigError("EM max_iter must be >= 1");
    if (kmeans_restarts < 1) throw ConfigError("k-means restarts must be >= 1");
}

double FlmGroup::explained_share() const { return total_variance > 0.0 ? a.sum() / total_variance : 0.0; }

std::vector<int> FlmModel::dims() const {
    std::vector<int> d;
    for (const auto& g : groups) d.push_back(g.d);
    return d;
}

int cattell_scree(std::span<const double> eigenvalues, double threshold) {
    if (eigenvalues.size() < 2) return 1;
    double max_drop = 0.0;
    for (std::size_t j = 0; j + 1 < eigenvalues.size(); ++j) {
        max_drop = std::max(max_drop, eigenvalues[j] - eigenvalues[j + 1]);
    }
    if (!(max_drop > 0.0)) return 1;
    int d = 1;
    for (std::size_t j = 0; j + 1 < eigenvalues.size(); ++j) {
        if (eigenvalues[j] - eigenvalues[j + 1] >= threshold * max_drop) d = static_cast<int>(j) + 1;
    }
    return d;
}

long long n_params(int K, int p, std::span<const int> dims, FlmVariant variant) {
    if (K < 1 || p < 1 || dims.size() != static_cast<std::size_t>(K)) throw ConfigError("invalid model shape");
    long long nu = (K - 1) + static_cast<long long>(K) * p;
    for (int d : dims) {
        if (d < 1 || d >= p) throw ConfigError("intrinsic dimension must be in [1, p-1]");
        // d (p - (d+1)/2) orientation parameters of Q_k plus d variances a_kj
        nu += static_cast<long long>(d) * p - static_cast<long long>(d) * (d + 1) / 2;
        nu += d;
    }
    nu += variant == FlmVariant::akj_b_qk_dk ? 1 : K;
    return nu;
}

namespace {

constexpr double kNoiseFloor = 1e-10;
constexpr double kSignalMargin = 1e-12;

/// Sufficient statistics of one group under the current posteriors.
struct GroupStats {
    double weight = 0.0;  // n_k
    Eigen::VectorXd mean;
    Eigen::VectorXd eigenvalues;  // non-increasing
    Eigen::MatrixXd eigenvectors;
    double trace = 0.0;
    int scree_d = 1;
    int max_d = 1;
};

struct Params {
    std::vector<FlmGroup> groups;
};

double log_density(const FlmGroup& g, const Eigen::VectorXd& x) {
    const Eigen::VectorXd r = x - g.mean;
    const Eigen::VectorXd proj = g.subspace.transpose() * r;
    const double p = static_cast<double>(r.size());
    const double rr = r.squaredNorm();
    const double inside = proj.squaredNorm();
    const double outside = std::max(0.0, rr - inside);
    double quad = outside / g.b;
    double logdet = (p - g.d) * std::log(g.b);
    for (int j = 0; j < g.d; ++j) {
        quad += proj(j) * proj(j) / g.a(j);
        logdet += std::log(g.a(j));
    }
    return -0.5 * (quad + logdet + p * std::log(2.0 * std::numbers::pi));
}

/// n x K matrix of log pi_k + log phi_k(x_i).
Eigen::MatrixXd joint_log(const Eigen::MatrixXd& x, const Params& params) {
    const Eigen::Index n = x.rows();
    const auto K = static_cast<Eigen::Index>(params.groups.size());
    Eigen::MatrixXd out(n, K);
    for (Eigen::Index k = 0; k < K; ++k) {
        const FlmGroup& g = params.groups[static_cast<std::size_t>(k)];
        const double lp = std::log(g.prior);
        for (Eigen::Index i = 0; i < n; ++i) out(i, k) = lp + log_density(g, x.row(i).transpose());
    }
    return out;
}

/// Expected complete-data log-likelihood sum_i sum_k t_ik (log pi_k + log phi_k).
double expected_complete(const Eigen::MatrixXd& x, const Eigen::MatrixXd& t, const Params& params) {
    return t.cwiseProduct(joint_log(x, params)).sum();
}

std::vector<GroupStats> group_stats(const Eigen::MatrixXd& x, const Eigen::MatrixXd& t, double threshold,
                                    int iteration) {
    const Eigen::Index n = x.rows();
    const Eigen::Index p = x.cols();
    const auto K = static_cast<int>(t.cols());
    std::vector<GroupStats> stats(static_cast<std::size_t>(K));
    for (int k = 0; k < K; ++k) {
        GroupStats& s = stats[static_cast<std::size_t>(k)];
        const auto w = t.col(k);
        s.weight = w.sum();
        if (s.weight / static_cast<double>(n) < 1.0 / (10.0 * static_cast<double>(n))) {
            throw DegenerateComponentError(iteration, k + 1,
                                           "mixing proportion " + std::to_string(s.weight / n) +
                                               " below 1/(10n)");
        }
        s.mean = (x.transpose() * w) / s.weight;
        const Eigen::MatrixXd c = x.rowwise() - s.mean.transpose();
        Eigen::MatrixXd cov = (c.transpose() * w.asDiagonal() * c) / s.weight;
        cov = 0.5 * (cov + cov.transpose());
        const SymmetricEigen eig = symmetric_eigen(cov);
        s.eigenvalues = eig.values.cwiseMax(0.0);
        s.eigenvectors = eig.vectors;
        s.trace = cov.trace();
        const int by_count = std::max(1, static_cast<int>(std::floor(s.weight + 1e-9)) - 1);
        s.max_d = std::max(1, std::min(static_cast<int>(p) - 1, by_count));
        const std::vector<double> ev(s.eigenvalues.data(), s.eigenvalues.data() + s.eigenvalues.size());
        s.scree_d = std::min(cattell_scree(ev, threshold), s.max_d);
    }
    return stats;
}

Params build_params(const std::vector<GroupStats>& stats, std::span<const int> dims, FlmVariant variant,
                    double n_total) {
    const auto K = stats.size();
    const Eigen::Index p = stats.front().mean.size();
    std::vector<double> residual(K);
    for (std::size_t k = 0; k < K; ++k) {
        const int d = dims[k];
        residual[k] = std::max(0.0, stats[k].eigenvalues.tail(p - d).sum());
    }
    double common_b = 0.0;
    if (variant == FlmVariant::akj_b_qk_dk) {
        double num = 0.0;
        double den = 0.0;
        for (std::size_t k = 0; k < K; ++k) {
            num += stats[k].weight * residual[k];
            den += stats[k].weight * static_cast<double>(p - dims[k]);
        }
        common_b = std::max(kNoiseFloor, num / den);
    }
    Params params;
    for (std::size_t k = 0; k < K; ++k) {
        const GroupStats& s = stats[k];
        FlmGroup g;
        g.d = dims[k];
        g.prior = s.weight / n_total;
        g.mean = s.mean;
        g.b = variant == FlmVariant::akj_b_qk_dk
                  ? common_b
                  : std::max(kNoiseFloor, residual[k] / static_cast<double>(p - g.d));
        g.a = s.eigenvalues.head(g.d).cwiseMax(g.b + kSignalMargin);
        g.subspace = s.eigenvectors.leftCols(g.d);
        g.total_variance = s.trace;
        params.groups.push_back(std::move(g));
    }
    return params;
}

std::vector<int> initial_partition(const Eigen::MatrixXd& x, const FlmConfig& cfg) {
    const auto n = static_cast<std::size_t>(x.rows());
    if (cfg.init == FlmInit::kmeans) {
        KMeansOptions opts;
        opts.restarts = cfg.kmeans_restarts;
        return kmeans(x, cfg.K, cfg.seed, opts).labels;
    }
    Rng rng(cfg.seed);
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.index(i)]);
    std::vector<int> labels(n);
    for (std::size_t r = 0; r < n; ++r) {
        labels[order[r]] = r < static_cast<std::size_t>(cfg.K) ? static_cast<int>(r) + 1
                                                               : static_cast<int>(rng.index(static_cast<std::size_t>(cfg.K))) + 1;
    }
    return labels;
}

}  // namespace

FlmModel em_fit_points(const Eigen::MatrixXd& x, const FlmConfig& cfg, std::span<const int> initial_labels,
                       double log_jacobian) {
    cfg.validate();
    const Eigen::Index n = x.rows();
    const Eigen::Index p = x.cols();
    if (n <= cfg.K) throw ConfigError("FLM needs more curves than clusters");
    if (p < 2) throw ConfigError("FLM needs at least two coordinates");
    if (!x.allFinite()) throw DataError("FLM input must be finite");

    std::vector<int> labels(initial_labels.begin(), initial_labels.end());
    if (labels.empty()) labels = initial_partition(x, cfg);
    if (labels.size() != static_cast<std::size_t>(n)) throw ConfigError("initial labels do not match data");
    Eigen::MatrixXd t = Eigen::MatrixXd::Zero(n, cfg.K);
    for (Eigen::Index i = 0; i < n; ++i) {
        const int l = labels[static_cast<std::size_t>(i)];
        if (l < 1 || l > cfg.K) throw ConfigError("initial label outside 1..K");
        t(i, l - 1) = 1.0;
    }

    const double n_total = static_cast<double>(n);
    const auto scree_dims = [](const std::vector<GroupStats>& stats) {
        std::vector<int> d;
        for (const auto& s : stats) d.push_back(s.scree_d);
        return d;
    };

    std::vector<GroupStats> stats = group_stats(x, t, cfg.scree_threshold, 0);
    std::vector<int> dims = scree_dims(stats);
    Params params = build_params(stats, dims, cfg.variant, n_total);

    FlmModel model;
    model.variant = cfg.variant;
    model.p = static_cast<int>(p);
    model.seed = cfg.seed;

    for (int iter = 1; iter <= cfg.max_iter; ++iter) {
        // E-step
        const Eigen::MatrixXd jl = joint_log(x, params);
        double loglik = 0.0;
        for (Eigen::Index i = 0; i < n; ++i) {
            const double m = jl.row(i).maxCoeff();
            const Eigen::ArrayXd e = (jl.row(i).array() - m).exp();
            const double s = e.sum();
            loglik += m + std::log(s);
            t.row(i) = (e / s).matrix().transpose();
        }
        if (!std::isfinite(loglik)) throw NumericError("non-finite log-likelihood at EM iteration " + std::to_string(iter));
        loglik += n_total * log_jacobian;
        model.iterations = iter;
        if (!model.loglik_trace.empty()) {
            const double prev = model.loglik_trace.back();
            if (loglik < prev - 1e-8 * std::max(1.0, std::abs(prev))) {
                throw NumericError("EM log-likelihood decreased at iteration " + std::to_string(iter));
            }
            model.loglik_trace.push_back(loglik);
            if (std::abs(loglik - prev) < cfg.tol) {
                model.converged = true;
                break;
            }
        } else {
            model.loglik_trace.push_back(loglik);
        }
        if (iter == cfg.max_iter) break;

        // M-step. Intrinsic dimensions follow the scree test unless the move
        // would lower the expected complete-data log-likelihood below that of
        // the current parameters, in which case the current dimensions are kept.
        stats = group_stats(x, t, cfg.scree_threshold, iter);
        const std::vector<int> proposed = scree_dims(stats);
        Params candidate = build_params(stats, proposed, cfg.variant, n_total);
        if (proposed != dims) {
            const double q_old = expected_complete(x, t, params);
            if (expected_complete(x, t, candidate) < q_old) {
                std::vector<int> kept = dims;
                for (std::size_t k = 0; k < kept.size(); ++k) kept[k] = std::min(kept[k], stats[k].max_d);
                Params fallback = build_params(stats, kept, cfg.variant, n_total);
                if (expected_complete(x, t, fallback) >= q_old) {
                    candidate = std::move(fallback);
                    dims = kept;
                } else {
                    candidate = params;
                }
            } else {
                dims = proposed;
            }
        }
        params = std::move(candidate);
    }

    model.loglik = model.loglik_trace.back();
    model.posteriors = t;
    model.labels.resize(static_cast<std::size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i) {
        Eigen::Index k = 0;
        t.row(i).maxCoeff(&k);
        model.labels[static_cast<std::size_t>(i)] = static_cast<int>(k) + 1;
    }
    model.groups = std::move(params.groups);
    for (auto& g : model.groups) {
        g.mean_coeffs = g.mean;
        g.subspace_coeffs = g.subspace;
    }
    return model;
}

FlmModel em_fit(const FunctionalDataset& data, const FlmConfig& config, std::span<const int> initial_labels) {
    data.validate();
    const MatrixRoots roots = spd_roots(data.basis.gram());
    const Eigen::MatrixXd working = data.coefficients * roots.sqrt;
    // density of gamma = density of W^{1/2} gamma times |W|^{1/2}
    FlmModel model = em_fit_points(working, config, initial_labels, 0.5 * roots.log_det);
    for (auto& g : model.groups) {
        g.mean_coeffs = roots.inv_sqrt * g.mean;
        g.subspace_coeffs = roots.inv_sqrt * g.subspace;
    }
    return model;
}

ModelScore bic(const FlmModel& model, std::size_t n) {
    if (n < 1) throw ConfigError("BIC needs n >= 1");
    ModelScore s;
    s.K = model.K();
    s.variant = model.variant;
    s.seed = model.seed;
    s.ok = true;
    s.loglik = model.loglik;
    s.dims = model.dims();
    s.n_params = n_params(model.K(), model.p, s.dims, model.variant);
    s.bic = s.loglik - 0.5 * static_cast<double>(s.n_params) * std::log(static_cast<double>(n));
    return s;
}

ModelSelection select_model(const FunctionalDataset& data, std::span<const int> K_range,
                            std::span<const FlmVariant> variants, std::span<const std::uint64_t> seeds,
                            const FlmConfig& base) {
    if (K_range.empty() || variants.empty() || seeds.empty()) throw ConfigError("model selection ranges must be non-empty");
    std::vector<ModelScore> scores;
    std::optional<FlmModel> best;
    std::size_t best_index = 0;
    for (int K : K_range) {
        for (FlmVariant v : variants) {
            for (std::uint64_t seed : seeds) {
                FlmConfig cfg = base;
                cfg.K = K;
                cfg.variant = v;
                cfg.seed = seed;
                try {
                    FlmModel m = em_fit(data, cfg);
                    ModelScore s = bic(m, data.size());
                    const bool wins = !best || s.bic > scores[best_index].bic ||
                                      (s.bic == scores[best_index].bic &&
                                       (s.K < scores[best_index].K ||
                                        (s.K == scores[best_index].K && s.n_params < scores[best_index].n_params)));
                    scores.push_back(std::move(s));
                    if (wins) {
                        best = std::move(m);
                        best_index = scores.size() - 1;
                    }
                } catch (const NumericError& e) {
                    ModelScore s;
                    s.K = K;
                    s.variant = v;
                    s.seed = seed;
                    s.ok = false;
                    s.diagnostic = e.what();
                    scores.push_back(std::move(s));
                }
            }
        }
    }
    if (!best) {
        std::string msg = "all FLM fits failed:";
        for (const auto& s : scores) {
            msg += "\n  K=" + std::to_string(s.K) + " " + std::string(to_string(s.variant)) + " seed=" +
                   std::to_string(s.seed) + ": " + s.diagnostic;
        }
        throw NumericError(msg);
    }
    return {std::move(*best), std::move(scores)};
}

GroupEffect cluster_effects(const FlmModel& model, int k, int j, double multiple) {
    if (k < 1 || k > model.K()) throw ConfigError("cluster index out of range");
    const FlmGroup& g = model.groups[static_cast<std::size_t>(k - 1)];
    if (j < 1 || j > g.d) throw ConfigError("subspace index out of range");
    const Eigen::VectorXd delta = multiple * std::sqrt(g.a(j - 1)) * g.subspace_coeffs.col(j - 1);
    return {g.mean_coeffs + delta, g.mean_coeffs - delta, g.mean_coeffs};
}

}  // namespace fcurve
