#include "fcurve/cli.hpp"

#include "fcurve/basis.hpp"
#include "fcurve/cluster.hpp"
#include "fcurve/error.hpp"
#include "fcurve/flm.hpp"
#include "fcurve/fpca.hpp"
#include "fcurve/ingest.hpp"
#include "fcurve/smooth.hpp"
#include "fcurve/text.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <iostream>
#include <sstream>

namespace fcurve {

namespace fs = std::filesystem;
using nlohmann::json;

std::vector<int> parse_int_list(const std::string& text) {
    std::vector<int> out;
    const auto bad = [&] { return ConfigError("bad integer list '" + text + "'"); };
    if (const auto dots = text.find(".."); dots != std::string::npos) {
        const auto lo = text::parse_int(text.substr(0, dots));
        const auto hi = text::parse_int(text.substr(dots + 2));
        if (!lo || !hi || *lo > *hi) throw bad();
        for (long long k = *lo; k <= *hi; ++k) out.push_back(static_cast<int>(k));
        return out;
    }
    for (auto part : text::split(text, ',')) {
        const auto v = text::parse_int(text::trim(part));
        if (!v) throw bad();
        out.push_back(static_cast<int>(*v));
    }
    return out;
}

std::vector<double> parse_lambda_grid(const std::string& text) {
    const auto bad = [&] { return ConfigError("bad lambda grid '" + text + "'"); };
    const auto parts = text::split(text, ':');
    if (parts.size() == 3) {
        const auto lo = text::parse_double(parts[0]);
        const auto hi = text::parse_double(parts[1]);
        const auto n = text::parse_int(parts[2]);
        if (!lo || !hi || !n || !(*lo > 0.0) || !(*hi >= *lo) || *n < 1) throw bad();
        return log_grid(*lo, *hi, static_cast<int>(*n));
    }
    std::vector<double> out;
    for (auto part : text::split(text, ',')) {
        const auto v = text::parse_double(text::trim(part));
        if (!v || !(*v > 0.0)) throw bad();
        out.push_back(*v);
    }
    return out;
}

namespace {

std::string now_utc() {
    const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

std::string absolute(const std::string& p) { return fs::absolute(p).lexically_normal().string(); }

void ensure_dir(const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw ConfigError("cannot create directory " + dir.string() + ": " + ec.message());
}

template <class T>
T get(const json& cfg, const char* key) {
    try {
        return cfg.at(key).get<T>();
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config field '") + key + "': " + e.what());
    }
}

std::vector<Sex> sexes_of(const std::string& text, const FunctionalDataset* data = nullptr) {
    if (text == "male") return {Sex::male};
    if (text == "female") return {Sex::female};
    if (text != "all" && text != "both") throw ConfigError("sex must be male, female or all");
    std::vector<Sex> out;
    for (Sex s : {Sex::male, Sex::female}) {
        if (!data || std::any_of(data->keys.begin(), data->keys.end(), [&](const CurveKey& k) { return k.sex == s; })) {
            out.push_back(s);
        }
    }
    return out;
}

FunctionalDataset load_dataset(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open dataset " + path);
    return read_dataset(in);
}

template <class F>
void write_stream(const fs::path& path, F&& fill) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ConfigError("cannot write " + path.string());
    fill(out);
    if (!out) throw ConfigError("write failed for " + path.string());
}

std::string pct(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f%%", 100.0 * v);
    return buf;
}

RunManifest make_manifest(const std::string& command, const json& config, std::vector<std::string> input_paths) {
    RunManifest m;
    m.command = command;
    m.config = config;
    m.created_at = now_utc();
    for (const auto& p : input_paths) m.inputs.push_back({p, file_sha256(p)});
    return m;
}

void save_manifest(const RunManifest& m, const fs::path& path) { write_text(path, m.to_json().dump(2) + "\n"); }

// ---- panel ----

RunManifest run_panel(const json& cfg, std::ostream& log) {
    const fs::path data_dir = get<std::string>(cfg, "data_dir");
    const auto countries = get<std::vector<std::string>>(cfg, "countries");
    const auto years = get<std::vector<int>>(cfg, "years");
    if (years.size() != 2 || years[0] > years[1]) throw ConfigError("years must be [first, last]");
    if (countries.empty()) throw ConfigError("no countries selected");
    const fs::path output = get<std::string>(cfg, "output");

    std::vector<std::string> inputs;
    CurvePanel panel;
    bool first = true;
    for (Sex sex : sexes_of(get<std::string>(cfg, "sex"))) {
        const RowsByCountry rows = load_life_tables(data_dir, countries, sex);
        for (const auto& c : countries) inputs.push_back(life_table_path(data_dir, c, sex).string());
        CurvePanel p = build_panel(rows, countries, {years[0], years[1]}, sex);
        panel = first ? std::move(p) : merge_panels(panel, p);
        first = false;
    }
    RunManifest m = make_manifest("panel", cfg, inputs);
    std::ostringstream body;
    body << "# run " << m.run_id() << '\n';
    write_panel_csv(body, panel);
    write_text(output, body.str());
    save_manifest(m, output.string() + ".manifest.json");
    log << "panel: " << panel.curves.size() << " curves, " << panel.countries.size() << " countries -> "
        << output.string() << '\n';
    return m;
}

// ---- smooth ----

RunManifest run_smooth(const json& cfg, std::ostream& log) {
    const BSplineBasis basis = basis_from_config(cfg.at("basis"));
    const LambdaMode mode = parse_lambda_mode(get<std::string>(cfg, "mode"));
    const auto grid = get<std::vector<double>>(cfg, "lambda_grid");
    if (grid.empty()) throw ConfigError("empty lambda grid");
    const std::string input = get<std::string>(cfg, "input");
    const fs::path output = get<std::string>(cfg, "output");

    std::ifstream in(input, std::ios::binary);
    if (!in) throw DataError("cannot open panel " + input);
    const CurvePanel panel = read_panel_csv(in);
    const FunctionalDataset data = smooth_panel(panel, basis, mode, grid);
    RunManifest m = make_manifest("smooth", cfg, {input});
    write_stream(output, [&](std::ostream& o) { write_dataset(o, data); });
    save_manifest(m, output.string() + ".manifest.json");
    const auto [lo, hi] = std::minmax_element(data.lambdas.begin(), data.lambdas.end());
    log << "smooth: " << data.size() << " curves, p=" << basis.size() << ", lambda "
        << (*lo == *hi ? text::format_double(*lo) : text::format_double(*lo) + ".." + text::format_double(*hi))
        << " -> " << output.string() << '\n';
    return m;
}

// ---- fpca ----

RunManifest run_fpca(const json& cfg, std::ostream& log) {
    const std::string input = get<std::string>(cfg, "input");
    const fs::path out = get<std::string>(cfg, "out");
    const int effects = get<int>(cfg, "effects");
    const auto countries = get<std::vector<std::string>>(cfg, "trajectory_countries");
    ensure_dir(out);
    const FunctionalDataset data = load_dataset(input);
    RunManifest m = make_manifest("fpca", cfg, {input});
    const std::string id = m.run_id();

    // one run per sex, or a single pooled run
    std::vector<std::pair<std::string, FunctionalDataset>> runs;
    if (cfg.value("pool", false)) {
        runs.emplace_back("pooled", data);
    } else {
        for (Sex sex : sexes_of(get<std::string>(cfg, "sex"), &data)) runs.emplace_back(to_string(sex), data.subset(sex));
    }
    for (const auto& [tag, sub] : runs) {
        const FpcaResult res = fpca(sub);
        write_text(out / ("fpca_" + tag + ".json"), fpca_report(res, sub.size(), id).dump(2) + "\n");
        write_stream(out / ("scores_" + tag + ".csv"), [&](std::ostream& o) { write_scores_csv(o, res.scores, sub.keys, id); });
        for (int l = 1; l <= std::min(effects, res.components()); ++l) {
            const EffectCurves e = harmonic_effect(res, l);
            PlotSpec spec;
            spec.title = tag + " component " + std::to_string(l) + " (" + pct(res.varprop(l - 1)) + ")";
            spec.y_label = "d(x)";
            spec.run_id = id;
            write_text(out / ("effect_" + tag + "_" + std::to_string(l) + ".svg"),
                       render_effect_plot(spec, sub.basis, res.mean_coeffs, e.plus, e.minus));
        }
        const bool one_sex = std::all_of(sub.keys.begin(), sub.keys.end(),
                                         [&](const CurveKey& k) { return k.sex == sub.keys.front().sex; });
        if (res.components() >= 2 && one_sex) {
            PlotSpec spec;
            spec.title = tag + " score trajectories";
            spec.x_label = "score 1";
            spec.y_label = "score 2";
            spec.run_id = id;
            write_text(out / ("trajectories_" + tag + ".svg"), trajectory_plot(res.scores, sub.keys, spec, countries));
        }
        log << "fpca " << tag << ": n=" << sub.size() << " varprop";
        for (int l = 0; l < std::min(4, res.components()); ++l) log << ' ' << pct(res.varprop(l));
        if (res.components() >= 2) log << " (first two " << pct(res.varprop(0) + res.varprop(1)) << ")";
        log << '\n';
    }
    save_manifest(m, out / "manifest.json");
    return m;
}

// ---- shared cluster outputs ----

void write_cluster_outputs(const fs::path& out, const std::string& tag, const FunctionalDataset& sub,
                           const Partition& part, const CountryConfig& grouping, const std::string& id,
                           std::ostream& log) {
    write_stream(out / ("partition_" + tag + ".csv"), [&](std::ostream& o) { write_partition_csv(o, part, sub.keys, id); });
    const CompositionGrid grid = composition_grid(part, sub.keys, grouping);
    write_stream(out / ("composition_" + tag + ".csv"), [&](std::ostream& o) { write_composition_csv(o, grid, id); });
    write_text(out / ("composition_" + tag + ".svg"), render_composition_svg(grid, tag + " cluster composition", id));

    std::vector<Series> means;
    for (int k = 1; k <= part.K; ++k) {
        Eigen::VectorXd sum = Eigen::VectorXd::Zero(sub.coefficients.cols());
        int count = 0;
        for (std::size_t i = 0; i < part.labels.size(); ++i) {
            if (part.labels[i] != k) continue;
            sum += sub.coefficients.row(static_cast<Eigen::Index>(i)).transpose();
            ++count;
        }
        if (count == 0) continue;
        static const char* const colors[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
                                             "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};
        means.push_back(curve_series(sub.basis, sum / count, "cluster " + std::to_string(k),
                                     colors[static_cast<std::size_t>(k - 1) % std::size(colors)]));
    }
    PlotSpec spec;
    spec.title = tag + " cluster mean curves";
    spec.y_label = "d(x)";
    spec.run_id = id;
    write_text(out / ("cluster_means_" + tag + ".svg"), render_svg(spec, means));

    log << "  shares";
    for (double s : grid.shares) log << ' ' << pct(s);
    log << '\n';
}

// ---- cluster ----

RunManifest run_cluster(const json& cfg, std::ostream& log) {
    const std::string input = get<std::string>(cfg, "input");
    const fs::path out = get<std::string>(cfg, "out");
    const std::string method = get<std::string>(cfg, "method");
    const int K = get<int>(cfg, "K");
    const int q = get<int>(cfg, "q");
    const auto seed = get<std::uint64_t>(cfg, "seed");
    KMeansOptions opts;
    opts.restarts = get<int>(cfg, "restarts");
    const CountryConfig grouping = CountryConfig::from_json(cfg.at("grouping"));
    if (method != "twostage" && method != "distance") throw ConfigError("method must be twostage or distance");
    ensure_dir(out);
    const FunctionalDataset data = load_dataset(input);
    RunManifest m = make_manifest("cluster", cfg, {input});
    const std::string id = m.run_id();

    for (Sex sex : sexes_of(get<std::string>(cfg, "sex"), &data)) {
        const std::string tag(to_string(sex));
        const FunctionalDataset sub = data.subset(sex);
        Partition part;
        if (method == "twostage") {
            const std::string feature = get<std::string>(cfg, "feature");
            FeatureSpec fs_;
            if (feature == "coefficients") {
                fs_.kind = Feature::coefficients;
            } else if (feature == "scores") {
                fs_.kind = Feature::fpca_scores;
                fs_.q = q;
            } else {
                throw ConfigError("feature must be coefficients or scores");
            }
            part = two_stage(sub, fs_, K, seed, opts);
        } else {
            const FpcaResult res = fpca(sub);
            part = hierarchical(semimetric_matrix(res, q), parse_linkage(get<std::string>(cfg, "linkage")), K);
        }
        log << "cluster " << tag << ": " << method << " K=" << part.K << '\n';
        write_cluster_outputs(out, tag, sub, part, grouping, id, log);
    }
    save_manifest(m, out / "manifest.json");
    return m;
}

// ---- flm ----

RunManifest run_flm(const json& cfg, std::ostream& log) {
    const std::string input = get<std::string>(cfg, "input");
    const fs::path out = get<std::string>(cfg, "out");
    const auto Ks = get<std::vector<int>>(cfg, "K");
    std::vector<FlmVariant> variants;
    for (const auto& v : get<std::vector<std::string>>(cfg, "variants")) variants.push_back(parse_flm_variant(v));
    const auto seeds = get<std::vector<std::uint64_t>>(cfg, "seeds");
    FlmConfig base;
    base.scree_threshold = get<double>(cfg, "threshold");
    base.init = parse_flm_init(get<std::string>(cfg, "init"));
    base.max_iter = get<int>(cfg, "max_iter");
    base.tol = get<double>(cfg, "tol");
    const CountryConfig grouping = CountryConfig::from_json(cfg.at("grouping"));
    ensure_dir(out);
    const FunctionalDataset data = load_dataset(input);
    RunManifest m = make_manifest("flm", cfg, {input});
    const std::string id = m.run_id();

    for (Sex sex : sexes_of(get<std::string>(cfg, "sex"), &data)) {
        const std::string tag(to_string(sex));
        const FunctionalDataset sub = data.subset(sex);
        const ModelSelection sel = select_model(sub, Ks, variants, seeds, base);
        const FlmModel& best = sel.best;
        const ModelScore score = bic(best, sub.size());

        write_stream(out / ("bic_" + tag + ".csv"), [&](std::ostream& o) { write_bic_csv(o, sel.scores, id); });
        write_text(out / ("model_" + tag + ".json"), flm_report(best, score, id).dump(2) + "\n");

        // best BIC per K over seeds and variants
        std::vector<double> per_k;
        for (int K : Ks) {
            double b = -std::numeric_limits<double>::infinity();
            for (const auto& s : sel.scores) {
                if (s.ok && s.K == K) b = std::max(b, s.bic);
            }
            per_k.push_back(b);
        }
        log << "flm " << tag << ": best K=" << best.K() << " " << to_string(best.variant) << " seed=" << best.seed
            << " bic=" << text::format_double(score.bic) << " n_params=" << score.n_params << "\n  BIC local maxima at K =";
        for (auto i : local_maxima(per_k)) log << ' ' << Ks[i];
        log << '\n';
        for (std::size_t k = 0; k < best.groups.size(); ++k) {
            const FlmGroup& g = best.groups[k];
            char buf[128];
            std::snprintf(buf, sizeof buf, "  cluster %zu: pi=%.4f d=%d b=%.6g (x1e4 %.4g) explained=%s\n", k + 1,
                          g.prior, g.d, g.b, g.b * 1e4, pct(g.explained_share()).c_str());
            log << buf;
            const GroupEffect e = cluster_effects(best, static_cast<int>(k) + 1, 1);
            PlotSpec spec;
            spec.title = tag + " cluster " + std::to_string(k + 1) + " first subspace direction";
            spec.y_label = "d(x)";
            spec.run_id = id;
            write_text(out / ("effects_" + tag + "_k" + std::to_string(k + 1) + ".svg"),
                       render_effect_plot(spec, sub.basis, e.mean, e.plus, e.minus));
        }
        write_cluster_outputs(out, tag, sub, partition_from_labels(best.labels, best.K()), grouping, id, log);
    }
    save_manifest(m, out / "manifest.json");
    return m;
}

json retarget(const std::string& command, json cfg, const fs::path& out_dir) {
    if (out_dir.empty()) return cfg;
    if (command == "panel" || command == "smooth") {
        ensure_dir(out_dir);
        cfg["output"] = (out_dir / fs::path(get<std::string>(cfg, "output")).filename()).string();
    } else {
        cfg["out"] = out_dir.string();
    }
    return cfg;
}

CountryConfig load_grouping(const std::string& path) {
    if (path.empty()) return CountryConfig::defaults();
    try {
        return CountryConfig::from_json(json::parse(read_text(path)));
    } catch (const json::parse_error& e) {
        throw ConfigError("cannot parse " + path + ": " + e.what());
    }
}

json load_basis(const std::string& spec) {
    if (spec == "nonuniform31" || spec == "uniform111") return {{"order", 4}, {"scheme", spec}};
    json j;
    try {
        j = json::parse(read_text(spec));
    } catch (const json::parse_error& e) {
        throw ConfigError("cannot parse " + spec + ": " + e.what());
    } catch (const DataError& e) {
        throw ConfigError(e.what());
    }
    // validate now; the manifest carries the parsed spec itself
    try {
        return basis_from_config(j).to_json();
    } catch (const json::exception& e) {
        throw ConfigError(std::string("invalid basis config: ") + e.what());
    }
}

}  // namespace

RunManifest execute(const std::string& command, const json& config, std::ostream& log, const fs::path& out_override) {
    const json cfg = retarget(command, config, out_override);
    if (command == "panel") return run_panel(cfg, log);
    if (command == "smooth") return run_smooth(cfg, log);
    if (command == "fpca") return run_fpca(cfg, log);
    if (command == "cluster") return run_cluster(cfg, log);
    if (command == "flm") return run_flm(cfg, log);
    throw ConfigError("unknown command '" + command + "'");
}

RunManifest replay(const RunManifest& manifest, const fs::path& out_dir, std::ostream& log) {
    for (const auto& in : manifest.inputs) {
        if (!fs::exists(in.path)) throw DataError("input " + in.path + " is missing");
        if (file_sha256(in.path) != in.sha256) throw DataError("input " + in.path + " changed since the recorded run");
    }
    log << "replaying " << manifest.command << " run " << manifest.run_id() << '\n';
    RunManifest again = execute(manifest.command, manifest.config, log, out_dir);
    write_text(out_dir / "report.json", json{{"source_run", manifest.run_id()},
                                             {"run", again.run_id()},
                                             {"command", manifest.command},
                                             {"version", kVersion}}
                                                .dump(2) +
                                            "\n");
    return again;
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Functional clustering of mortality curves", "fcurve"};
    app.require_subcommand(1);
    app.set_version_flag("--version", std::string(kVersion));

    // panel
    std::string data_dir;
    if (const char* env = std::getenv("FCURVE_DATA_DIR")) data_dir = env;
    std::string countries;
    std::string years = "1960:2010";
    std::string panel_sex = "both";
    std::string panel_out = "panel.csv";
    std::string grouping_path;
    auto* panel = app.add_subcommand("panel", "Build a d(x) panel from life tables");
    panel->add_option("--data-dir", data_dir, "Life table directory (default $FCURVE_DATA_DIR)");
    panel->add_option("--countries", countries, "Comma list of codes, 'all', or empty for the configured set");
    panel->add_option("--years", years, "first:last")->capture_default_str();
    panel->add_option("--sex", panel_sex, "male|female|both")->capture_default_str();
    panel->add_option("--output,-o", panel_out, "Panel CSV")->capture_default_str();
    panel->add_option("--countries-config", grouping_path, "Country areas JSON");

    // smooth
    std::string basis_spec = "nonuniform31";
    std::string mode = "common";
    std::string grid_spec = "1e-6:1e2:33";
    std::string smooth_in;
    std::string smooth_out = "dataset.bin";
    auto* smooth = app.add_subcommand("smooth", "Penalized B-spline smoothing");
    smooth->add_option("--basis", basis_spec, "Basis JSON file, or nonuniform31|uniform111")->capture_default_str();
    smooth->add_option("--mode", mode, "common|per-curve")->capture_default_str();
    smooth->add_option("--lambda-grid", grid_spec, "lo:hi:count or comma list")->capture_default_str();
    smooth->add_option("--input,-i", smooth_in, "Panel CSV")->required();
    smooth->add_option("--output,-o", smooth_out, "Dataset file")->capture_default_str();

    // fpca
    std::string fpca_in;
    std::string fpca_out = "fpca";
    std::string fpca_sex = "all";
    int effects = 2;
    std::string traj_countries;
    bool pool = false;
    auto* fp = app.add_subcommand("fpca", "Functional principal components");
    fp->add_option("--input,-i", fpca_in, "Dataset file")->required();
    fp->add_option("--out", fpca_out, "Output directory")->capture_default_str();
    fp->add_option("--sex", fpca_sex, "male|female|all")->capture_default_str();
    fp->add_option("--effects", effects, "Effect plots for the first components")->capture_default_str();
    fp->add_option("--trajectory-countries", traj_countries, "Comma list; empty for all");
    fp->add_flag("--pool", pool, "One FPCA over both sexes");

    // cluster
    std::string cl_in;
    std::string cl_out = "cluster";
    std::string cl_sex = "all";
    std::string method = "twostage";
    std::string feature = "coefficients";
    int cl_K = 0;
    int cl_q = 4;
    std::string linkage = "ward";
    std::uint64_t cl_seed = 1;
    int restarts = 50;
    auto* cl = app.add_subcommand("cluster", "Two-stage or distance-based clustering");
    cl->add_option("--input,-i", cl_in, "Dataset file")->required();
    cl->add_option("--out", cl_out, "Output directory")->capture_default_str();
    cl->add_option("--sex", cl_sex, "male|female|all")->capture_default_str();
    cl->add_option("--method", method, "twostage|distance")->capture_default_str();
    cl->add_option("--feature", feature, "coefficients|scores (twostage)")->capture_default_str();
    cl->add_option("--K", cl_K, "Number of clusters")->required();
    cl->add_option("--q", cl_q, "Score components")->capture_default_str();
    cl->add_option("--linkage", linkage, "ward|complete|average (distance)")->capture_default_str();
    cl->add_option("--seed", cl_seed, "k-means seed")->capture_default_str();
    cl->add_option("--restarts", restarts, "k-means restarts")->capture_default_str();
    cl->add_option("--countries-config", grouping_path, "Country areas JSON");

    // flm
    std::string flm_in;
    std::string flm_out = "flm";
    std::string flm_sex = "all";
    std::string flm_K = "2..9";
    std::string variant = "akj-b-qk-dk";
    double threshold = 0.2;
    std::string init = "kmeans";
    std::string seeds = "1";
    int max_iter = 200;
    double tol = 1e-6;
    auto* flm = app.add_subcommand("flm", "Model-based clustering with BIC selection");
    flm->add_option("--input,-i", flm_in, "Dataset file")->required();
    flm->add_option("--out", flm_out, "Output directory")->capture_default_str();
    flm->add_option("--sex", flm_sex, "male|female|all")->capture_default_str();
    flm->add_option("--K", flm_K, "Range a..b or comma list")->capture_default_str();
    flm->add_option("--variant", variant, "akj-b-qk-dk|akj-bk-qk-dk, comma list allowed")->capture_default_str();
    flm->add_option("--threshold", threshold, "Scree threshold")->capture_default_str();
    flm->add_option("--init", init, "kmeans|random")->capture_default_str();
    flm->add_option("--seeds", seeds, "Comma list")->capture_default_str();
    flm->add_option("--max-iter", max_iter, "EM iterations")->capture_default_str();
    flm->add_option("--tol", tol, "EM log-likelihood tolerance")->capture_default_str();
    flm->add_option("--countries-config", grouping_path, "Country areas JSON");

    // report
    std::string manifest_path;
    std::string report_out = "report";
    auto* rep = app.add_subcommand("report", "Re-run a recorded manifest into a directory");
    rep->add_option("--run", manifest_path, "manifest.json")->required();
    rep->add_option("--out", report_out, "Output directory")->capture_default_str();

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        try {
            app.parse(reversed);
        } catch (const CLI::CallForHelp&) {
            out << app.help();
            return 0;
        } catch (const CLI::CallForAllHelp&) {
            out << app.help("", CLI::AppFormatMode::All);
            return 0;
        } catch (const CLI::CallForVersion&) {
            out << kVersion << '\n';
            return 0;
        } catch (const CLI::ParseError& e) {
            err << "error: " << e.what() << '\n';
            return static_cast<int>(ExitCode::config);
        }

        const auto split_list = [](const std::string& s) {
            std::vector<std::string> v;
            for (auto p : text::split(s, ',')) {
                if (!text::trim(p).empty()) v.emplace_back(text::trim(p));
            }
            return v;
        };

        if (panel->parsed()) {
            if (data_dir.empty()) throw ConfigError("no data directory: pass --data-dir or set FCURVE_DATA_DIR");
            const CountryConfig grouping = load_grouping(grouping_path);
            std::vector<std::string> codes;
            if (countries.empty()) {
                codes = grouping.codes();
            } else if (countries == "all") {
                codes = discover_countries(data_dir, panel_sex == "female" ? Sex::female : Sex::male, grouping.excluded);
            } else {
                codes = split_list(countries);
            }
            const auto yr = text::split(years, ':');
            const auto y0 = yr.size() == 2 ? text::parse_int(yr[0]) : std::nullopt;
            const auto y1 = yr.size() == 2 ? text::parse_int(yr[1]) : std::nullopt;
            if (!y0 || !y1) throw ConfigError("--years must be first:last");
            sexes_of(panel_sex);
            execute("panel",
                    {{"data_dir", absolute(data_dir)},
                     {"countries", codes},
                     {"years", {*y0, *y1}},
                     {"sex", panel_sex},
                     {"output", absolute(panel_out)}},
                    out);
        } else if (smooth->parsed()) {
            parse_lambda_mode(mode);
            execute("smooth",
                    {{"basis", load_basis(basis_spec)},
                     {"mode", mode},
                     {"lambda_grid", parse_lambda_grid(grid_spec)},
                     {"input", absolute(smooth_in)},
                     {"output", absolute(smooth_out)}},
                    out);
        } else if (fp->parsed()) {
            execute("fpca",
                    {{"input", absolute(fpca_in)},
                     {"out", absolute(fpca_out)},
                     {"sex", fpca_sex},
                     {"effects", effects},
                     {"pool", pool},
                     {"trajectory_countries", split_list(traj_countries)}},
                    out);
        } else if (cl->parsed()) {
            execute("cluster",
                    {{"input", absolute(cl_in)},
                     {"out", absolute(cl_out)},
                     {"sex", cl_sex},
                     {"method", method},
                     {"feature", feature},
                     {"K", cl_K},
                     {"q", cl_q},
                     {"linkage", linkage},
                     {"seed", cl_seed},
                     {"restarts", restarts},
                     {"grouping", load_grouping(grouping_path).to_json()}},
                    out);
        } else if (flm->parsed()) {
            std::vector<std::uint64_t> seed_list;
            for (int s : parse_int_list(seeds)) {
                if (s < 0) throw ConfigError("seeds must be non-negative");
                seed_list.push_back(static_cast<std::uint64_t>(s));
            }
            execute("flm",
                    {{"input", absolute(flm_in)},
                     {"out", absolute(flm_out)},
                     {"sex", flm_sex},
                     {"K", parse_int_list(flm_K)},
                     {"variants", split_list(variant)},
                     {"threshold", threshold},
                     {"init", init},
                     {"seeds", seed_list},
                     {"max_iter", max_iter},
                     {"tol", tol},
                     {"grouping", load_grouping(grouping_path).to_json()}},
                    out);
        } else if (rep->parsed()) {
            json j;
            try {
                j = json::parse(read_text(manifest_path));
            } catch (const json::parse_error& e) {
                throw ConfigError("cannot parse manifest: " + std::string(e.what()));
            }
            const fs::path dir = absolute(report_out);
            ensure_dir(dir);
            replay(RunManifest::from_json(j), dir, out);
        }
        return 0;
    } catch (const Error& e) {
        err << "error: " << e.what() << '\n';
        return static_cast<int>(e.exit_code());
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return static_cast<int>(ExitCode::numeric);
    }
}

int run_cli(int argc, const char* const* argv) {
    std::vector<std::string> args;
    for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
    return run_cli(args, std::cout, std::cerr);
}

}  // namespace fcurve
