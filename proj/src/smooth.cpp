#include "fcurve/smooth.hpp"

#include "fcurve/error.hpp"

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <limits>
#include <set>

namespace fcurve {

double gcv_score(const SmoothFit& fit, std::size_t n_obs) {
    const double n = static_cast<double>(n_obs);
    if (!(fit.df < n)) {
        throw NumericError("GCV undefined: df " + std::to_string(fit.df) + " >= N " + std::to_string(n_obs));
    }
    const double denom = n - fit.df;
    return n * fit.sse / (denom * denom);
}

PenalizedSmoother::PenalizedSmoother(BSplineBasis basis, std::vector<double> ages)
    : basis_(std::move(basis)), ages_(std::move(ages)) {
    if (static_cast<int>(ages_.size()) < basis_.order()) {
        throw ConfigError("need at least `order` observations to smooth");
    }
    design_ = basis_.design(ages_);
    const Eigen::Index p = basis_.size();
    if (basis_.order() >= 3) {
        const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(basis_.penalty());
        rotation_ = es.eigenvectors();
        penalty_eig_ = es.eigenvalues();
        const double cut = 1e-10 * penalty_eig_.cwiseAbs().maxCoeff();
        for (auto& v : penalty_eig_) v = v < cut ? 0.0 : v;
    } else {
        rotation_ = Eigen::MatrixXd::Identity(p, p);
        penalty_eig_ = Eigen::VectorXd::Zero(p);
    }
    design_rot_ = design_ * rotation_;
    cross_rot_ = design_rot_.transpose() * design_rot_;
}

PenalizedSmoother::System PenalizedSmoother::prepare(double lambda) const {
    if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw ConfigError("lambda must be finite and >= 0");
    if (lambda > 0.0 && basis_.order() < 3) throw ConfigError("roughness penalty needs order >= 3");
    System sys;
    sys.lambda_ = lambda;
    sys.scale_ = (1.0 + lambda * penalty_eig_.array()).rsqrt().matrix();
    const auto D = sys.scale_.asDiagonal();
    const Eigen::MatrixXd cross = D * cross_rot_ * D;
    Eigen::MatrixXd lhs = cross;
    lhs.diagonal() += (lambda * penalty_eig_.array() * sys.scale_.array().square()).matrix();
    sys.llt_.compute(lhs);
    const double eps = std::numeric_limits<double>::epsilon();
    const bool deficient = sys.llt_.rcond() < eps * static_cast<double>(lhs.rows());
    if (sys.llt_.info() != Eigen::Success || deficient) {
        throw RankError("normal equations are singular at lambda = " + std::to_string(lambda));
    }
    // df = trace(B (B'B + lambda R)^-1 B'), evaluated in the scaled eigenbasis
    sys.df_ = sys.llt_.solve(cross).trace();
    return sys;
}

SmoothFit PenalizedSmoother::fit(const System& system, std::span<const double> y) const {
    if (y.size() != ages_.size()) throw ConfigError("observation vector does not match the age grid");
    const Eigen::Map<const Eigen::VectorXd> obs(y.data(), static_cast<Eigen::Index>(y.size()));
    SmoothFit out;
    out.lambda = system.lambda_;
    out.df = system.df_;
    out.n_obs = y.size();
    const auto D = system.scale_.asDiagonal();
    const Eigen::VectorXd z = system.llt_.solve(D * (design_rot_.transpose() * obs));
    out.coefficients = rotation_ * (D * z);
    out.sse = (obs - design_ * out.coefficients).squaredNorm();
    out.gcv = out.df < static_cast<double>(out.n_obs) ? gcv_score(out, out.n_obs)
                                                      : std::numeric_limits<double>::infinity();
    return out;
}

SmoothFit fit_penalized(std::span<const double> y, std::span<const double> ages, const BSplineBasis& basis,
                        double lambda) {
    const PenalizedSmoother smoother(basis, std::vector<double>(ages.begin(), ages.end()));
    return smoother.fit(y, lambda);
}

std::vector<double> log_grid(double lo, double hi, int count) {
    if (!(lo > 0.0) || !(hi >= lo) || count < 1) throw ConfigError("invalid log grid");
    std::vector<double> g(static_cast<std::size_t>(count));
    const double a = std::log10(lo);
    const double b = std::log10(hi);
    for (int i = 0; i < count; ++i) {
        g[static_cast<std::size_t>(i)] = count == 1 ? lo : std::pow(10.0, a + (b - a) * i / (count - 1));
    }
    return g;
}

std::vector<double> default_lambda_grid() { return log_grid(1e-6, 1e2, 33); }

namespace {

bool better(double gcv, double lambda, double best_gcv, double best_lambda) {
    return gcv < best_gcv || (gcv == best_gcv && lambda > best_lambda);
}

}  // namespace

LambdaSelection select_lambda(const PenalizedSmoother& smoother, std::span<const double> y,
                              std::span<const double> grid) {
    if (grid.empty()) throw ConfigError("empty lambda grid");
    LambdaSelection sel;
    double best_gcv = std::numeric_limits<double>::infinity();
    bool found = false;
    for (std::size_t g = 0; g < grid.size(); ++g) {
        SmoothFit fit;
        try {
            fit = smoother.fit(y, grid[g]);
        } catch (const RankError&) {
            fit.lambda = grid[g];
            fit.n_obs = y.size();
            fit.gcv = std::numeric_limits<double>::infinity();
        }
        if (std::isfinite(fit.gcv) && (!found || better(fit.gcv, fit.lambda, best_gcv, sel.lambda))) {
            best_gcv = fit.gcv;
            sel.lambda = fit.lambda;
            sel.best = g;
            found = true;
        }
        sel.fits.push_back(std::move(fit));
    }
    if (!found) throw NumericError("GCV is undefined at every grid point");
    return sel;
}

LambdaSelection select_lambda(std::span<const double> y, std::span<const double> ages, const BSplineBasis& basis,
                              std::span<const double> grid) {
    const PenalizedSmoother smoother(basis, std::vector<double>(ages.begin(), ages.end()));
    return select_lambda(smoother, y, grid);
}

LambdaMode parse_lambda_mode(std::string_view text) {
    if (text == "common") return LambdaMode::common;
    if (text == "per-curve" || text == "per_curve") return LambdaMode::per_curve;
    throw ConfigError("unknown lambda mode '" + std::string(text) + "'");
}

std::string_view to_string(LambdaMode mode) { return mode == LambdaMode::common ? "common" : "per-curve"; }

void FunctionalDataset::validate() const {
    const auto n = static_cast<Eigen::Index>(keys.size());
    if (n < 1) throw DataError("dataset is empty");
    if (coefficients.rows() != n || coefficients.cols() != basis.size()) {
        throw DataError("coefficient matrix shape does not match keys and basis");
    }
    if (lambdas.size() != keys.size()) throw DataError("lambda count does not match curve count");
    if (!coefficients.allFinite()) throw DataError("non-finite coefficients");
    std::set<CurveKey> seen(keys.begin(), keys.end());
    if (seen.size() != keys.size()) throw DataError("duplicate curve keys in dataset");
}

FunctionalDataset FunctionalDataset::select(std::span<const std::size_t> rows) const {
    FunctionalDataset out{basis, Eigen::MatrixXd(static_cast<Eigen::Index>(rows.size()), basis.size()), {}, {}, grid};
    for (std::size_t r = 0; r < rows.size(); ++r) {
        if (rows[r] >= size()) throw ConfigError("row index out of range");
        out.coefficients.row(static_cast<Eigen::Index>(r)) = coefficients.row(static_cast<Eigen::Index>(rows[r]));
        out.keys.push_back(keys[rows[r]]);
        out.lambdas.push_back(lambdas[rows[r]]);
    }
    return out;
}

FunctionalDataset FunctionalDataset::subset(Sex sex) const {
    std::vector<std::size_t> rows;
    for (std::size_t i = 0; i < keys.size(); ++i) {
        if (keys[i].sex == sex) rows.push_back(i);
    }
    return select(rows);
}

std::vector<double> FunctionalDataset::evaluate(std::size_t i, std::span<const double> ts) const {
    const Eigen::VectorXd c = coefficients.row(static_cast<Eigen::Index>(i)).transpose();
    std::vector<double> out;
    out.reserve(ts.size());
    for (double t : ts) out.push_back(basis.evaluate(c, t));
    return out;
}

FunctionalDataset smooth_panel(const CurvePanel& panel, const BSplineBasis& basis, LambdaMode mode,
                               std::span<const double> grid) {
    if (panel.curves.empty()) throw DataError("cannot smooth an empty panel");
    if (grid.empty()) throw ConfigError("empty lambda grid");
    const PenalizedSmoother smoother(basis, age_grid());
    const std::size_t n = panel.curves.size();

    std::vector<SmoothFit> best(n);
    std::vector<bool> have(n, false);
    double common_best = std::numeric_limits<double>::infinity();
    double common_lambda = 0.0;
    bool common_found = false;

    for (double lambda : grid) {
        PenalizedSmoother::System sys;
        try {
            sys = smoother.prepare(lambda);
        } catch (const RankError&) {
            continue;
        }
        if (!(sys.df() < static_cast<double>(smoother.ages().size()))) continue;
        if (mode == LambdaMode::per_curve) {
            for (std::size_t i = 0; i < n; ++i) {
                SmoothFit fit = smoother.fit(sys, panel.curves[i].values);
                if (!have[i] || better(fit.gcv, fit.lambda, best[i].gcv, best[i].lambda)) {
                    best[i] = std::move(fit);
                    have[i] = true;
                }
            }
        } else {
            std::vector<SmoothFit> fits(n);
            double total = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                fits[i] = smoother.fit(sys, panel.curves[i].values);
                total += fits[i].gcv;
            }
            if (!common_found || better(total, lambda, common_best, common_lambda)) {
                common_best = total;
                common_lambda = lambda;
                common_found = true;
                best = std::move(fits);
                std::fill(have.begin(), have.end(), true);
            }
        }
    }
    for (std::size_t i = 0; i < n; ++i) {
        if (!have[i]) throw NumericError("no lambda in the grid gives a defined GCV score");
    }

    FunctionalDataset data{basis, Eigen::MatrixXd(static_cast<Eigen::Index>(n), basis.size()), {}, {}, age_grid()};
    data.keys.reserve(n);
    data.lambdas.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        data.coefficients.row(static_cast<Eigen::Index>(i)) = best[i].coefficients.transpose();
        data.keys.push_back(panel.curves[i].key());
        data.lambdas.push_back(best[i].lambda);
    }
    data.validate();
    return data;
}

namespace {

static_assert(std::endian::native == std::endian::little, "dataset files are little-endian");

constexpr char kMagic[4] = {'F', 'C', 'D', 'S'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void put(std::ostream& out, T v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& in) {
    T v{};
    if (!in.read(reinterpret_cast<char*>(&v), sizeof(T))) throw DataError("truncated dataset file");
    return v;
}

void put_string(std::ostream& out, const std::string& s) {
    put<std::uint64_t>(out, s.size());
    out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string get_string(std::istream& in, std::uint64_t limit) {
    const auto len = get<std::uint64_t>(in);
    if (len > limit) throw DataError("corrupt dataset file (string length)");
    std::string s(len, '\0');
    if (!in.read(s.data(), static_cast<std::streamsize>(len))) throw DataError("truncated dataset file");
    return s;
}

}  // namespace

void write_dataset(std::ostream& out, const FunctionalDataset& data) {
    data.validate();
    out.write(kMagic, 4);
    put<std::uint32_t>(out, kVersion);
    put_string(out, data.basis.to_json().dump());
    put<std::uint64_t>(out, data.size());
    put<std::uint64_t>(out, static_cast<std::uint64_t>(data.basis.size()));
    put<std::uint64_t>(out, data.grid.size());
    for (double t : data.grid) put<double>(out, t);
    for (std::size_t i = 0; i < data.size(); ++i) {
        put_string(out, data.keys[i].country);
        put<std::int32_t>(out, data.keys[i].year);
        put<std::uint8_t>(out, data.keys[i].sex == Sex::male ? 0 : 1);
        put<double>(out, data.lambdas[i]);
        for (Eigen::Index j = 0; j < data.coefficients.cols(); ++j) {
            put<double>(out, data.coefficients(static_cast<Eigen::Index>(i), j));
        }
    }
    if (!out) throw DataError("failed to write dataset");
}

FunctionalDataset read_dataset(std::istream& in) {
    char magic[4];
    if (!in.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0) throw DataError("not a dataset file");
    if (get<std::uint32_t>(in) != kVersion) throw DataError("unsupported dataset version");
    nlohmann::json spec;
    try {
        spec = nlohmann::json::parse(get_string(in, 1u << 20));
    } catch (const nlohmann::json::parse_error& e) {
        throw DataError(std::string("corrupt basis spec: ") + e.what());
    }
    BSplineBasis basis = BSplineBasis::from_json(spec);
    const auto n = get<std::uint64_t>(in);
    const auto p = get<std::uint64_t>(in);
    const auto n_grid = get<std::uint64_t>(in);
    if (p != static_cast<std::uint64_t>(basis.size())) throw DataError("basis size mismatch in dataset file");
    if (n > (1u << 26) || n_grid > (1u << 20)) throw DataError("corrupt dataset file (sizes)");
    FunctionalDataset data{std::move(basis), Eigen::MatrixXd(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(p)),
                           {}, {}, {}};
    data.grid.resize(n_grid);
    for (auto& t : data.grid) t = get<double>(in);
    for (std::uint64_t i = 0; i < n; ++i) {
        CurveKey key;
        key.country = get_string(in, 256);
        key.year = get<std::int32_t>(in);
        const auto sex = get<std::uint8_t>(in);
        if (sex > 1) throw DataError("corrupt dataset file (sex)");
        key.sex = sex == 0 ? Sex::male : Sex::female;
        data.keys.push_back(std::move(key));
        data.lambdas.push_back(get<double>(in));
        for (std::uint64_t j = 0; j < p; ++j) {
            data.coefficients(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = get<double>(in);
        }
    }
    data.validate();
    return data;
}

}  // namespace fcurve
