#include "fcurve/report.hpp"

#include "fcurve/error.hpp"
#include "fcurve/text.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <limits>
#include <set>
#include <sstream>

namespace fcurve {

using nlohmann::json;

namespace {

json matrix_json(const Eigen::MatrixXd& m) {
    json rows = json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        json row = json::array();
        for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
        rows.push_back(std::move(row));
    }
    return rows;
}

json vector_json(const Eigen::VectorXd& v) {
    json a = json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v(i));
    return a;
}

Eigen::VectorXd json_vector(const json& j) {
    Eigen::VectorXd v(static_cast<Eigen::Index>(j.size()));
    for (std::size_t i = 0; i < j.size(); ++i) v(static_cast<Eigen::Index>(i)) = j[i].get<double>();
    return v;
}

Eigen::MatrixXd json_matrix(const json& j) {
    const auto rows = static_cast<Eigen::Index>(j.size());
    const auto cols = rows > 0 ? static_cast<Eigen::Index>(j[0].size()) : 0;
    Eigen::MatrixXd m(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i) {
        const json& row = j[static_cast<std::size_t>(i)];
        if (static_cast<Eigen::Index>(row.size()) != cols) throw DataError("ragged matrix in report");
        for (Eigen::Index c = 0; c < cols; ++c) m(i, c) = row[static_cast<std::size_t>(c)].get<double>();
    }
    return m;
}

std::string xml_escape(std::string_view s) {
    std::string out;
    for (char c : s) {
        switch (c) {
        case '&': out += "&amp;"; break;
        case '<': out += "&lt;"; break;
        case '>': out += "&gt;"; break;
        case '"': out += "&quot;"; break;
        default: out += c;
        }
    }
    return out;
}

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", v);
    return buf;
}

std::string tick_label(double v, double step) {
    if (std::abs(v) < step * 1e-9) v = 0.0;
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6g", v);
    return buf;
}

double nice_step(double range, int target) {
    const double raw = range / target;
    const double mag = std::pow(10.0, std::floor(std::log10(raw)));
    const double f = raw / mag;
    const double nice = f < 1.5 ? 1.0 : f < 3.0 ? 2.0 : f < 7.0 ? 5.0 : 10.0;
    return nice * mag;
}

// Data CSV lines; '#' comments and blank lines dropped.
std::vector<std::string> data_lines(std::istream& in) {
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (text::trim(line).empty() || line.front() == '#') continue;
        lines.push_back(line);
    }
    return lines;
}

CurveKey parse_key(const std::vector<std::string_view>& f, std::size_t line) {
    const auto year = text::parse_int(f[1]);
    if (!year) throw ParseError(line, "bad year '" + std::string(f[1]) + "'");
    return {std::string(f[0]), static_cast<int>(*year), parse_sex(f[2])};
}

void run_comment(std::ostream& out, const std::string& run_id) { out << "# run " << run_id << '\n'; }

void key_prefix(std::ostream& out, const CurveKey& k) {
    out << k.country << ',' << k.year << ',' << to_string(k.sex);
}

struct Annotation {
    double x = 0.0;
    double y = 0.0;
    std::string text;
};

const char* const kPalette[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
                                "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};

std::string palette(std::size_t i) { return kPalette[i % std::size(kPalette)]; }

std::string render(const PlotSpec& spec, std::span<const Series> series, std::span<const Annotation> notes) {
    const bool legend = spec.legend && !series.empty();
    const double left = 70.0;
    const double right = legend ? 140.0 : 20.0;
    const double top = 40.0;
    const double bottom = 50.0;
    const double w = spec.width;
    const double h = spec.height;
    const double pw = w - left - right;
    const double ph = h - top - bottom;
    if (pw <= 0.0 || ph <= 0.0) throw ConfigError("plot area too small");

    double x0 = std::numeric_limits<double>::infinity();
    double x1 = -x0;
    double y0 = x0;
    double y1 = -x0;
    for (const auto& s : series) {
        if (s.x.size() != s.y.size()) throw ConfigError("series '" + s.label + "' has mismatched x and y");
        for (std::size_t i = 0; i < s.x.size(); ++i) {
            if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) continue;
            x0 = std::min(x0, s.x[i]);
            x1 = std::max(x1, s.x[i]);
            y0 = std::min(y0, s.y[i]);
            y1 = std::max(y1, s.y[i]);
        }
    }
    if (!(x0 <= x1)) {
        x0 = 0.0;
        x1 = 1.0;
    }
    if (!(y0 <= y1)) {
        y0 = 0.0;
        y1 = 1.0;
    }
    const auto widen = [](double& lo, double& hi) {
        if (hi - lo > 0.0) return;
        const double pad = lo == 0.0 ? 1.0 : 0.05 * std::abs(lo);
        lo -= pad;
        hi += pad;
    };
    widen(x0, x1);
    widen(y0, y1);
    const double xs = nice_step(x1 - x0, 6);
    const double ys = nice_step(y1 - y0, 5);
    x0 = std::floor(x0 / xs) * xs;
    x1 = std::ceil(x1 / xs) * xs;
    y0 = std::floor(y0 / ys) * ys;
    y1 = std::ceil(y1 / ys) * ys;
    const auto px = [&](double x) { return left + (x - x0) / (x1 - x0) * pw; };
    const auto py = [&](double y) { return top + ph - (y - y0) / (y1 - y0) * ph; };

    std::ostringstream o;
    o << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
    o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << spec.width << "\" height=\"" << spec.height
      << "\" viewBox=\"0 0 " << spec.width << ' ' << spec.height << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
    o << "<!-- run " << xml_escape(spec.run_id) << " -->\n";
    o << "<metadata>run " << xml_escape(spec.run_id) << "</metadata>\n";
    o << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    if (!spec.title.empty()) {
        o << "<text class=\"title\" x=\"" << fmt(w / 2) << "\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">"
          << xml_escape(spec.title) << "</text>\n";
    }
    o << "<g class=\"axes\" stroke=\"black\" stroke-width=\"1\">\n";
    o << "<line x1=\"" << fmt(left) << "\" y1=\"" << fmt(top + ph) << "\" x2=\"" << fmt(left + pw) << "\" y2=\""
      << fmt(top + ph) << "\"/>\n";
    o << "<line x1=\"" << fmt(left) << "\" y1=\"" << fmt(top) << "\" x2=\"" << fmt(left) << "\" y2=\""
      << fmt(top + ph) << "\"/>\n";
    o << "</g>\n<g class=\"ticks\">\n";
    for (int i = 0; x0 + i * xs <= x1 + xs * 1e-9; ++i) {
        const double v = x0 + i * xs;
        o << "<line x1=\"" << fmt(px(v)) << "\" y1=\"" << fmt(top + ph) << "\" x2=\"" << fmt(px(v)) << "\" y2=\""
          << fmt(top + ph + 5) << "\" stroke=\"black\"/>";
        o << "<text x=\"" << fmt(px(v)) << "\" y=\"" << fmt(top + ph + 18) << "\" text-anchor=\"middle\">"
          << tick_label(v, xs) << "</text>\n";
    }
    for (int i = 0; y0 + i * ys <= y1 + ys * 1e-9; ++i) {
        const double v = y0 + i * ys;
        o << "<line x1=\"" << fmt(left - 5) << "\" y1=\"" << fmt(py(v)) << "\" x2=\"" << fmt(left) << "\" y2=\""
          << fmt(py(v)) << "\" stroke=\"black\"/>";
        o << "<text x=\"" << fmt(left - 8) << "\" y=\"" << fmt(py(v) + 4) << "\" text-anchor=\"end\">"
          << tick_label(v, ys) << "</text>\n";
    }
    o << "</g>\n";
    o << "<text class=\"xlabel\" x=\"" << fmt(left + pw / 2) << "\" y=\"" << fmt(h - 10)
      << "\" text-anchor=\"middle\">" << xml_escape(spec.x_label) << "</text>\n";
    o << "<text class=\"ylabel\" x=\"15\" y=\"" << fmt(top + ph / 2) << "\" text-anchor=\"middle\" transform=\"rotate(-90 15 "
      << fmt(top + ph / 2) << ")\">" << xml_escape(spec.y_label) << "</text>\n";

    for (const auto& s : series) {
        o << "<polyline class=\"series\" data-label=\"" << xml_escape(s.label) << "\" fill=\"none\" stroke=\""
          << xml_escape(s.color) << "\" stroke-width=\"" << fmt(s.width) << '"';
        if (s.dashed) o << " stroke-dasharray=\"6 4\"";
        o << " points=\"";
        bool first = true;
        for (std::size_t i = 0; i < s.x.size(); ++i) {
            if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) continue;
            if (!first) o << ' ';
            first = false;
            o << fmt(px(s.x[i])) << ',' << fmt(py(s.y[i]));
        }
        o << "\"/>\n";
        if (s.markers) {
            for (std::size_t i = 0; i < s.x.size(); ++i) {
                if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) continue;
                o << "<circle class=\"point\" cx=\"" << fmt(px(s.x[i])) << "\" cy=\"" << fmt(py(s.y[i]))
                  << "\" r=\"2.5\" fill=\"" << xml_escape(s.color) << "\"/>\n";
            }
        }
    }
    for (const auto& a : notes) {
        o << "<text class=\"note\" x=\"" << fmt(px(a.x) + 4) << "\" y=\"" << fmt(py(a.y) - 4) << "\" font-size=\"9\">"
          << xml_escape(a.text) << "</text>\n";
    }
    if (legend) {
        o << "<g class=\"legend\">\n";
        const double lx = left + pw + 15;
        for (std::size_t i = 0; i < series.size(); ++i) {
            const double ly = top + 10 + 16.0 * static_cast<double>(i);
            o << "<line x1=\"" << fmt(lx) << "\" y1=\"" << fmt(ly) << "\" x2=\"" << fmt(lx + 20) << "\" y2=\""
              << fmt(ly) << "\" stroke=\"" << xml_escape(series[i].color) << "\" stroke-width=\"2\"";
            if (series[i].dashed) o << " stroke-dasharray=\"6 4\"";
            o << "/><text class=\"legend-label\" x=\"" << fmt(lx + 26) << "\" y=\"" << fmt(ly + 4) << "\">"
              << xml_escape(series[i].label) << "</text>\n";
        }
        o << "</g>\n";
    }
    o << "</svg>\n";
    return o.str();
}

std::string csv_quote(std::string s) {
    std::replace(s.begin(), s.end(), '\n', ' ');
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    return out + '"';
}

// Splits one CSV line honoring double quotes.
std::vector<std::string> csv_fields(std::string_view line) {
    std::vector<std::string> out(1);
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (quoted) {
            if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
                out.back() += '"';
                ++i;
            } else if (c == '"') {
                quoted = false;
            } else {
                out.back() += c;
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            out.emplace_back();
        } else {
            out.back() += c;
        }
    }
    return out;
}

}  // namespace

std::string RunManifest::run_id() const {
    json j;
    j["command"] = command;
    j["config"] = config;
    // where results land does not change them
    if (j["config"].is_object()) {
        j["config"].erase("out");
        j["config"].erase("output");
    }
    j["version"] = version;
    json in = json::array();
    for (const auto& i : inputs) in.push_back({{"path", i.path}, {"sha256", i.sha256}});
    j["inputs"] = std::move(in);
    return text::sha256_hex(j.dump()).substr(0, 16);
}

json RunManifest::to_json() const {
    json j;
    j["command"] = command;
    j["config"] = config;
    j["version"] = version;
    j["created_at"] = created_at;
    json in = json::array();
    for (const auto& i : inputs) in.push_back({{"path", i.path}, {"sha256", i.sha256}});
    j["inputs"] = std::move(in);
    j["run_id"] = run_id();
    return j;
}

RunManifest RunManifest::from_json(const json& j) {
    try {
        RunManifest m;
        m.command = j.at("command").get<std::string>();
        m.config = j.at("config");
        m.version = j.at("version").get<std::string>();
        m.created_at = j.value("created_at", std::string());
        for (const auto& i : j.at("inputs")) {
            m.inputs.push_back({i.at("path").get<std::string>(), i.at("sha256").get<std::string>()});
        }
        if (j.contains("run_id") && j["run_id"].get<std::string>() != m.run_id()) {
            throw ConfigError("manifest run_id does not match its contents");
        }
        return m;
    } catch (const json::exception& e) {
        throw ConfigError(std::string("malformed manifest: ") + e.what());
    }
}

std::string file_sha256(const std::filesystem::path& path) { return text::sha256_hex(read_text(path)); }

Partition partition_from_labels(std::span<const int> labels, int K) {
    if (K < 1) throw ConfigError("K must be positive");
    Partition p;
    p.K = K;
    p.sizes.assign(static_cast<std::size_t>(K), 0);
    for (int l : labels) {
        if (l < 1 || l > K) throw DataError("label " + std::to_string(l) + " outside 1.." + std::to_string(K));
        ++p.sizes[static_cast<std::size_t>(l - 1)];
    }
    p.labels.assign(labels.begin(), labels.end());
    return p;
}

CompositionGrid composition_grid(const Partition& partition, std::span<const CurveKey> keys,
                                 const CountryConfig& grouping) {
    if (partition.labels.size() != keys.size()) {
        throw DataError("partition has " + std::to_string(partition.labels.size()) + " labels for " +
                        std::to_string(keys.size()) + " curves");
    }
    CompositionGrid grid;
    grid.K = partition.K;
    std::set<int> years;
    std::set<std::string> countries;
    for (const auto& k : keys) {
        if (k.sex != keys.front().sex) throw DataError("composition grid needs curves of a single sex");
        years.insert(k.year);
        countries.insert(k.country);
    }
    // contiguous columns so gaps in coverage stay visible
    if (!years.empty()) {
        for (int y = *years.begin(); y <= *years.rbegin(); ++y) grid.years.push_back(y);
    }

    // Areas in configured order, then unlisted countries under "Other".
    std::vector<std::pair<std::string, std::string>> order;
    std::set<std::string> placed;
    for (const auto& area : grouping.areas) {
        for (const auto& c : area.codes) {
            if (countries.count(c) && placed.insert(c).second) order.emplace_back(area.name, c);
        }
    }
    for (const auto& c : countries) {
        if (!placed.count(c)) order.emplace_back("Other", c);
    }
    std::map<std::string, std::size_t> row_of;
    for (const auto& [area, c] : order) {
        row_of[c] = grid.rows.size();
        grid.rows.push_back({area, c, std::vector<int>(grid.years.size(), 0)});
    }
    std::vector<int> counts(static_cast<std::size_t>(std::max(grid.K, 0)), 0);
    for (std::size_t i = 0; i < keys.size(); ++i) {
        const int label = partition.labels[i];
        if (label < 1 || label > grid.K) throw DataError("label outside 1..K");
        const auto col = static_cast<std::size_t>(keys[i].year - grid.years.front());
        int& cell = grid.rows[row_of.at(keys[i].country)].labels[col];
        if (cell != 0) {
            throw DataError("duplicate curve " + keys[i].country + " " + std::to_string(keys[i].year));
        }
        cell = label;
        ++counts[static_cast<std::size_t>(label - 1)];
    }
    for (int c : counts) grid.shares.push_back(keys.empty() ? 0.0 : c / static_cast<double>(keys.size()));
    return grid;
}

CompositionGrid composition_grid(const Partition& partition, const CurvePanel& panel,
                                 const CountryConfig& grouping) {
    std::vector<CurveKey> keys;
    keys.reserve(panel.curves.size());
    for (const auto& c : panel.curves) keys.push_back(c.key());
    return composition_grid(partition, keys, grouping);
}

void write_composition_csv(std::ostream& out, const CompositionGrid& grid, const std::string& run_id) {
    run_comment(out, run_id);
    out << "# shares";
    for (std::size_t k = 0; k < grid.shares.size(); ++k) out << ' ' << k + 1 << '=' << text::format_double(grid.shares[k]);
    out << '\n';
    out << "area,country";
    for (int y : grid.years) out << ',' << y;
    out << '\n';
    for (const auto& r : grid.rows) {
        out << r.area << ',' << r.country;
        for (int l : r.labels) {
            out << ',';
            if (l != 0) out << l;
        }
        out << '\n';
    }
}

std::string render_composition_svg(const CompositionGrid& grid, const std::string& title, const std::string& run_id) {
    const double cell = 12.0;
    const double left = 170.0;
    const double top = 50.0;
    const double legend_h = 30.0;
    const double w = left + cell * static_cast<double>(grid.years.size()) + 20.0;
    const double h = top + cell * static_cast<double>(grid.rows.size()) + 40.0 + legend_h;
    std::ostringstream o;
    o << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
    o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << fmt(w) << "\" height=\"" << fmt(h) << "\" viewBox=\"0 0 "
      << fmt(w) << ' ' << fmt(h) << "\" font-family=\"sans-serif\" font-size=\"9\">\n";
    o << "<!-- run " << xml_escape(run_id) << " -->\n";
    o << "<metadata>run " << xml_escape(run_id) << "</metadata>\n";
    o << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    o << "<text class=\"title\" x=\"" << fmt(w / 2) << "\" y=\"20\" text-anchor=\"middle\" font-size=\"13\">"
      << xml_escape(title) << "</text>\n";
    for (std::size_t c = 0; c < grid.years.size(); ++c) {
        if (grid.years[c] % 10 != 0) continue;
        o << "<text x=\"" << fmt(left + cell * static_cast<double>(c)) << "\" y=\"" << fmt(top - 6) << "\">"
          << grid.years[c] << "</text>\n";
    }
    std::string area;
    for (std::size_t r = 0; r < grid.rows.size(); ++r) {
        const auto& row = grid.rows[r];
        const double y = top + cell * static_cast<double>(r);
        if (row.area != area) {
            area = row.area;
            o << "<text class=\"area\" x=\"4\" y=\"" << fmt(y + 9) << "\" font-weight=\"bold\">" << xml_escape(area)
              << "</text>\n";
        }
        o << "<text x=\"" << fmt(left - 6) << "\" y=\"" << fmt(y + 9) << "\" text-anchor=\"end\">"
          << xml_escape(row.country) << "</text>\n";
        for (std::size_t c = 0; c < row.labels.size(); ++c) {
            const int l = row.labels[c];
            if (l == 0) continue;
            o << "<rect class=\"cell\" data-label=\"" << l << "\" x=\"" << fmt(left + cell * static_cast<double>(c))
              << "\" y=\"" << fmt(y) << "\" width=\"" << fmt(cell - 1) << "\" height=\"" << fmt(cell - 1)
              << "\" fill=\"" << palette(static_cast<std::size_t>(l - 1)) << "\"/>\n";
        }
    }
    const double ly = top + cell * static_cast<double>(grid.rows.size()) + 25.0;
    for (std::size_t k = 0; k < grid.shares.size(); ++k) {
        const double lx = left + 80.0 * static_cast<double>(k);
        o << "<rect x=\"" << fmt(lx) << "\" y=\"" << fmt(ly - 9) << "\" width=\"10\" height=\"10\" fill=\"" << palette(k)
          << "\"/><text x=\"" << fmt(lx + 14) << "\" y=\"" << fmt(ly) << "\">" << k + 1 << ": "
          << fmt(100.0 * grid.shares[k]) << "%</text>\n";
    }
    o << "</svg>\n";
    return o.str();
}

std::string render_svg(const PlotSpec& spec, std::span<const Series> series) { return render(spec, series, {}); }

void plot_curves(const PlotSpec& spec, std::span<const Series> series, const std::filesystem::path& path) {
    write_text(path, render_svg(spec, series));
}

Series curve_series(const BSplineBasis& basis, const Eigen::VectorXd& coeffs, std::string label, std::string color,
                    int points) {
    if (points < 2) throw ConfigError("need at least two sample points");
    Series s;
    s.label = std::move(label);
    s.color = std::move(color);
    for (int i = 0; i < points; ++i) {
        const double t = basis.lower() + (basis.upper() - basis.lower()) * i / (points - 1);
        s.x.push_back(t);
        s.y.push_back(basis.evaluate(coeffs, t));
    }
    return s;
}

std::string render_effect_plot(const PlotSpec& spec, const BSplineBasis& basis, const Eigen::VectorXd& mean,
                               const Eigen::VectorXd& plus, const Eigen::VectorXd& minus) {
    std::vector<Series> s;
    s.push_back(curve_series(basis, plus, "+", "#d62728"));
    s.push_back(curve_series(basis, minus, "−", "#1f77b4"));
    Series m = curve_series(basis, mean, "mean", "#000000");
    m.dashed = true;
    s.push_back(std::move(m));
    return render_svg(spec, s);
}

std::map<std::string, std::vector<TrajectoryPoint>> decade_trajectories(const Eigen::MatrixXd& scores,
                                                                         std::span<const CurveKey> keys) {
    if (scores.cols() < 2) throw DataError("trajectories need at least two score columns");
    if (static_cast<std::size_t>(scores.rows()) != keys.size()) throw DataError("scores and keys are not aligned");
    std::map<std::string, std::vector<TrajectoryPoint>> out;
    for (std::size_t i = 0; i < keys.size(); ++i) {
        if (keys[i].sex != keys.front().sex) throw DataError("trajectories need curves of a single sex");
        if (keys[i].year % 10 != 0) continue;
        const auto r = static_cast<Eigen::Index>(i);
        out[keys[i].country].push_back({keys[i].year, scores(r, 0), scores(r, 1)});
    }
    for (auto& [c, pts] : out) {
        std::sort(pts.begin(), pts.end(), [](const auto& a, const auto& b) { return a.year < b.year; });
    }
    return out;
}

std::string trajectory_plot(const Eigen::MatrixXd& scores, std::span<const CurveKey> keys, const PlotSpec& spec,
                            std::span<const std::string> countries) {
    const auto traj = decade_trajectories(scores, keys);
    std::vector<Series> series;
    std::vector<Annotation> notes;
    for (const auto& [country, pts] : traj) {
        if (!countries.empty() && std::find(countries.begin(), countries.end(), country) == countries.end()) continue;
        Series s;
        s.label = country;
        s.color = palette(series.size());
        s.markers = true;
        for (const auto& p : pts) {
            s.x.push_back(p.x);
            s.y.push_back(p.y);
            notes.push_back({p.x, p.y, std::to_string(p.year)});
        }
        series.push_back(std::move(s));
    }
    return render(spec, series, notes);
}

void write_partition_csv(std::ostream& out, const Partition& partition, std::span<const CurveKey> keys,
                         const std::string& run_id) {
    if (partition.labels.size() != keys.size()) throw DataError("partition and keys are not aligned");
    run_comment(out, run_id);
    out << "country,year,sex,cluster\n";
    for (std::size_t i = 0; i < keys.size(); ++i) {
        key_prefix(out, keys[i]);
        out << ',' << partition.labels[i] << '\n';
    }
}

PartitionTable read_partition_csv(std::istream& in) {
    const auto lines = data_lines(in);
    if (lines.empty() || lines.front() != "country,year,sex,cluster") throw ParseError(1, "expected partition header");
    PartitionTable t;
    for (std::size_t i = 1; i < lines.size(); ++i) {
        const auto f = text::split(lines[i], ',');
        if (f.size() != 4) throw ParseError(i + 1, "expected 4 fields");
        t.keys.push_back(parse_key(f, i + 1));
        const auto l = text::parse_int(f[3]);
        if (!l || *l < 1) throw ParseError(i + 1, "bad cluster label");
        t.labels.push_back(static_cast<int>(*l));
    }
    return t;
}

void write_scores_csv(std::ostream& out, const Eigen::MatrixXd& scores, std::span<const CurveKey> keys,
                      const std::string& run_id) {
    if (static_cast<std::size_t>(scores.rows()) != keys.size()) throw DataError("scores and keys are not aligned");
    run_comment(out, run_id);
    out << "country,year,sex";
    for (Eigen::Index j = 0; j < scores.cols(); ++j) out << ",s" << j + 1;
    out << '\n';
    for (std::size_t i = 0; i < keys.size(); ++i) {
        key_prefix(out, keys[i]);
        for (Eigen::Index j = 0; j < scores.cols(); ++j) {
            out << ',' << text::format_double(scores(static_cast<Eigen::Index>(i), j));
        }
        out << '\n';
    }
}

ScoreTable read_scores_csv(std::istream& in) {
    const auto lines = data_lines(in);
    if (lines.empty()) throw ParseError(1, "empty scores file");
    const auto header = text::split(lines.front(), ',');
    if (header.size() < 3 || header[0] != "country" || header[1] != "year" || header[2] != "sex") {
        throw ParseError(1, "expected scores header");
    }
    const auto q = static_cast<Eigen::Index>(header.size() - 3);
    ScoreTable t;
    t.scores.resize(static_cast<Eigen::Index>(lines.size() - 1), q);
    for (std::size_t i = 1; i < lines.size(); ++i) {
        const auto f = text::split(lines[i], ',');
        if (f.size() != header.size()) throw ParseError(i + 1, "expected " + std::to_string(header.size()) + " fields");
        t.keys.push_back(parse_key(f, i + 1));
        for (Eigen::Index j = 0; j < q; ++j) {
            const auto v = text::parse_double(f[static_cast<std::size_t>(j) + 3]);
            if (!v) throw ParseError(i + 1, "bad score value");
            t.scores(static_cast<Eigen::Index>(i - 1), j) = *v;
        }
    }
    return t;
}

void write_bic_csv(std::ostream& out, std::span<const ModelScore> scores, const std::string& run_id) {
    run_comment(out, run_id);
    out << "K,variant,seed,ok,loglik,n_params,bic,dims,diagnostic\n";
    for (const auto& s : scores) {
        std::string dims;
        for (std::size_t i = 0; i < s.dims.size(); ++i) dims += (i ? ";" : "") + std::to_string(s.dims[i]);
        out << s.K << ',' << to_string(s.variant) << ',' << s.seed << ',' << (s.ok ? 1 : 0) << ','
            << text::format_double(s.loglik) << ',' << s.n_params << ',' << text::format_double(s.bic) << ',' << dims
            << ',' << csv_quote(s.diagnostic) << '\n';
    }
}

std::vector<ModelScore> read_bic_csv(std::istream& in) {
    const auto lines = data_lines(in);
    if (lines.empty() || lines.front() != "K,variant,seed,ok,loglik,n_params,bic,dims,diagnostic") {
        throw ParseError(1, "expected BIC header");
    }
    std::vector<ModelScore> out;
    for (std::size_t i = 1; i < lines.size(); ++i) {
        const auto f = csv_fields(lines[i]);
        if (f.size() != 9) throw ParseError(i + 1, "expected 9 fields");
        ModelScore s;
        const auto K = text::parse_int(f[0]);
        const auto seed = text::parse_int(f[2]);
        const auto ll = text::parse_double(f[4]);
        const auto np = text::parse_int(f[5]);
        const auto b = text::parse_double(f[6]);
        if (!K || !seed || !ll || !np || !b || (f[3] != "0" && f[3] != "1")) throw ParseError(i + 1, "bad BIC row");
        s.K = static_cast<int>(*K);
        s.variant = parse_flm_variant(f[1]);
        s.seed = static_cast<std::uint64_t>(*seed);
        s.ok = f[3] == "1";
        s.loglik = *ll;
        s.n_params = *np;
        s.bic = *b;
        if (!f[7].empty()) {
            for (auto d : text::split(f[7], ';')) {
                const auto v = text::parse_int(d);
                if (!v) throw ParseError(i + 1, "bad dims");
                s.dims.push_back(static_cast<int>(*v));
            }
        }
        s.diagnostic = f[8];
        out.push_back(std::move(s));
    }
    return out;
}

json fpca_report(const FpcaResult& result, std::size_t n, const std::string& run_id) {
    json j;
    j["run"] = run_id;
    j["n"] = n;
    j["p"] = result.components();
    j["eigenvalues"] = vector_json(result.eigenvalues);
    j["varprop"] = vector_json(result.varprop);
    json cum = json::array();
    double acc = 0.0;
    for (Eigen::Index i = 0; i < result.varprop.size(); ++i) cum.push_back(acc += result.varprop(i));
    j["cumulative"] = std::move(cum);
    j["mean_coeffs"] = vector_json(result.mean_coeffs);
    j["harmonics"] = matrix_json(result.harmonics);
    return j;
}

FpcaResult fpca_from_report(const json& j) {
    try {
        FpcaResult r;
        r.eigenvalues = json_vector(j.at("eigenvalues"));
        r.varprop = json_vector(j.at("varprop"));
        r.mean_coeffs = json_vector(j.at("mean_coeffs"));
        r.harmonics = json_matrix(j.at("harmonics"));
        return r;
    } catch (const json::exception& e) {
        throw DataError(std::string("malformed FPCA report: ") + e.what());
    }
}

json flm_report(const FlmModel& model, const ModelScore& score, const std::string& run_id) {
    json j;
    j["run"] = run_id;
    j["K"] = model.K();
    j["p"] = model.p;
    j["variant"] = std::string(to_string(model.variant));
    j["seed"] = model.seed;
    j["loglik"] = model.loglik;
    j["bic"] = score.bic;
    j["n_params"] = score.n_params;
    j["iterations"] = model.iterations;
    j["converged"] = model.converged;
    j["loglik_trace"] = model.loglik_trace;
    json groups = json::array();
    json table = json::array();
    for (std::size_t k = 0; k < model.groups.size(); ++k) {
        const FlmGroup& g = model.groups[k];
        json gj;
        gj["prior"] = g.prior;
        gj["d"] = g.d;
        gj["a"] = vector_json(g.a);
        gj["a_x1e4"] = vector_json(g.a * 1e4);
        gj["b"] = g.b;
        gj["b_x1e4"] = g.b * 1e4;
        gj["explained_share"] = g.explained_share();
        gj["total_variance"] = g.total_variance;
        gj["mean"] = vector_json(g.mean);
        gj["subspace"] = matrix_json(g.subspace);
        gj["mean_coeffs"] = vector_json(g.mean_coeffs);
        gj["subspace_coeffs"] = matrix_json(g.subspace_coeffs);
        groups.push_back(std::move(gj));

        char buf[64];
        std::string line = "cluster " + std::to_string(k + 1);
        std::snprintf(buf, sizeof buf, "  pi=%.4f  d=%d  a(x1e4)=", g.prior, g.d);
        line += buf;
        for (Eigen::Index i = 0; i < g.a.size(); ++i) {
            std::snprintf(buf, sizeof buf, "%s%.2f", i ? " " : "", g.a(i) * 1e4);
            line += buf;
        }
        std::snprintf(buf, sizeof buf, "  b=%.6g (x1e4: %.4g)", g.b, g.b * 1e4);
        line += buf;
        table.push_back(line);
    }
    j["groups"] = std::move(groups);
    j["table"] = std::move(table);
    return j;
}

FlmModel flm_from_report(const json& j) {
    try {
        FlmModel m;
        m.variant = parse_flm_variant(j.at("variant").get<std::string>());
        m.p = j.at("p").get<int>();
        m.seed = j.at("seed").get<std::uint64_t>();
        m.loglik = j.at("loglik").get<double>();
        m.iterations = j.at("iterations").get<int>();
        m.converged = j.at("converged").get<bool>();
        m.loglik_trace = j.at("loglik_trace").get<std::vector<double>>();
        for (const auto& gj : j.at("groups")) {
            FlmGroup g;
            g.prior = gj.at("prior").get<double>();
            g.d = gj.at("d").get<int>();
            g.a = json_vector(gj.at("a"));
            g.b = gj.at("b").get<double>();
            g.total_variance = gj.at("total_variance").get<double>();
            g.mean = json_vector(gj.at("mean"));
            g.subspace = json_matrix(gj.at("subspace"));
            g.mean_coeffs = json_vector(gj.at("mean_coeffs"));
            g.subspace_coeffs = json_matrix(gj.at("subspace_coeffs"));
            m.groups.push_back(std::move(g));
        }
        return m;
    } catch (const json::exception& e) {
        throw DataError(std::string("malformed FLM report: ") + e.what());
    }
}

std::vector<std::size_t> local_maxima(std::span<const double> values) {
    const auto v = [&](std::size_t i) {
        return std::isfinite(values[i]) ? values[i] : -std::numeric_limits<double>::infinity();
    };
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (!std::isfinite(values[i])) continue;
        const bool left = i == 0 || v(i) > v(i - 1);
        const bool right = i + 1 == values.size() || v(i) > v(i + 1);
        if (left && right) out.push_back(i);
    }
    return out;
}

void write_text(const std::filesystem::path& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ConfigError("cannot write " + path.string());
    out << content;
    if (!out) throw ConfigError("write failed for " + path.string());
}

std::string read_text(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot read " + path.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace fcurve
