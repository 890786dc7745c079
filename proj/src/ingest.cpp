#include "fcurve/ingest.hpp"

#include "fcurve/error.hpp"
#include "fcurve/text.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

namespace fcurve {

std::string_view to_string(Sex sex) { return sex == Sex::male ? "male" : "female"; }

Sex parse_sex(std::string_view text) {
    if (text == "male" || text == "m") return Sex::male;
    if (text == "female" || text == "f") return Sex::female;
    throw ConfigError("unknown sex '" + std::string(text) + "'");
}

std::string_view life_table_stem(Sex sex) { return sex == Sex::male ? "mltper_1x1" : "fltper_1x1"; }

namespace {

constexpr std::size_t kColumns = 10;

std::optional<double> cell(std::string_view tok, std::size_t line, const char* name) {
    if (tok == ".") return std::nullopt;
    const auto v = text::parse_double(tok);
    if (!v) throw ParseError(line, std::string("invalid ") + name + " value '" + std::string(tok) + "'");
    return v;
}

bool is_numeric_start(std::string_view tok) {
    return !tok.empty() && (std::isdigit(static_cast<unsigned char>(tok.front())) != 0);
}

}  // namespace

std::vector<LifeTableRow> parse_life_table(std::istream& in, Sex sex) {
    std::vector<LifeTableRow> rows;
    std::string line;
    std::size_t line_no = 0;
    std::size_t headers = 0;
    int block_year = 0;
    int expected_age = 0;

    const auto close_block = [&](std::size_t at) {
        if (!rows.empty() && expected_age != kAgeCount) {
            throw ParseError(at, "year " + std::to_string(block_year) + " has " +
                                     std::to_string(expected_age) + " ages, expected " +
                                     std::to_string(kAgeCount));
        }
    };

    while (std::getline(in, line)) {
        ++line_no;
        const auto toks = text::tokens(line);
        if (toks.empty()) continue;
        if (rows.empty() && !is_numeric_start(toks.front())) {
            // Title line may name the sex; reject an obviously mismatched table.
            if (headers == 0) {
                const bool says_female = line.find("Females") != std::string::npos;
                const bool says_male = !says_female && line.find("Males") != std::string::npos;
                if ((sex == Sex::male && says_female) || (sex == Sex::female && says_male)) {
                    throw ParseError(line_no, "table title does not match requested sex");
                }
            }
            ++headers;
            if (headers > 2) throw ParseError(line_no, "unexpected header line");
            continue;
        }
        if (toks.size() != kColumns) {
            throw ParseError(line_no, "expected " + std::to_string(kColumns) + " columns, found " +
                                          std::to_string(toks.size()));
        }
        const auto year = text::parse_int(toks[0]);
        if (!year) throw ParseError(line_no, "invalid year '" + std::string(toks[0]) + "'");
        std::string_view age_tok = toks[1];
        if (age_tok.ends_with('+')) age_tok.remove_suffix(1);
        const auto age = text::parse_int(age_tok);
        if (!age || *age < 0 || *age >= kAgeCount) {
            throw ParseError(line_no, "invalid age '" + std::string(toks[1]) + "'");
        }

        if (rows.empty() || *year != block_year) {
            if (!rows.empty() && *year < block_year) throw ParseError(line_no, "years out of order");
            close_block(line_no);
            block_year = static_cast<int>(*year);
            expected_age = 0;
        }
        if (*age != expected_age) {
            throw ParseError(line_no, "non-monotone age " + std::to_string(*age) + " in year " +
                                          std::to_string(block_year) + ", expected " +
                                          std::to_string(expected_age));
        }
        ++expected_age;

        LifeTableRow row;
        row.year = static_cast<int>(*year);
        row.age = static_cast<int>(*age);
        row.mx = cell(toks[2], line_no, "mx");
        row.qx = cell(toks[3], line_no, "qx");
        row.ax = cell(toks[4], line_no, "ax");
        row.lx = cell(toks[5], line_no, "lx");
        row.dx = cell(toks[6], line_no, "dx");
        row.Lx = cell(toks[7], line_no, "Lx");
        row.Tx = cell(toks[8], line_no, "Tx");
        row.ex = cell(toks[9], line_no, "ex");
        if (row.dx && *row.dx < 0.0) throw ParseError(line_no, "negative dx");
        rows.push_back(row);
    }
    close_block(line_no);
    return rows;
}

std::vector<LifeTableRow> read_life_table(const std::filesystem::path& path, Sex sex) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open life table " + path.string());
    try {
        return parse_life_table(in, sex);
    } catch (const ParseError& e) {
        throw ParseError(e.line(), path.filename().string() + ": " + e.detail());
    }
}

void CurvePanel::validate() const {
    std::set<CurveKey> seen;
    for (const auto& c : curves) {
        if (!seen.insert(c.key()).second) {
            throw DataError("duplicate curve " + c.country + " " + std::to_string(c.year) + " " +
                            std::string(to_string(c.sex)));
        }
        if (!years.contains(c.year)) {
            throw DataError("curve year " + std::to_string(c.year) + " outside panel range");
        }
        if (c.values.size() != static_cast<std::size_t>(kAgeCount)) {
            throw DataError("curve " + c.country + " " + std::to_string(c.year) + " has wrong length");
        }
    }
}

CurvePanel build_panel(const RowsByCountry& rows, const std::vector<std::string>& countries,
                       YearRange years, Sex sex) {
    if (years.last < years.first) throw ConfigError("empty year range");
    if (countries.empty()) throw ConfigError("no countries requested");

    CurvePanel panel;
    panel.years = years;
    panel.countries = countries;
    std::sort(panel.countries.begin(), panel.countries.end());
    panel.countries.erase(std::unique(panel.countries.begin(), panel.countries.end()), panel.countries.end());

    std::vector<std::string> gaps;
    for (const auto& code : panel.countries) {
        const auto it = rows.find(code);
        std::map<int, std::vector<double>> by_year;
        if (it != rows.end()) {
            for (const auto& r : it->second) {
                if (!years.contains(r.year)) continue;
                auto& v = by_year[r.year];
                if (v.empty()) v.assign(kAgeCount, std::nan(""));
                if (!r.dx) {
                    throw DataError("missing dx for " + code + " " + std::to_string(r.year) + " age " +
                                    std::to_string(r.age));
                }
                v[static_cast<std::size_t>(r.age)] = *r.dx;
            }
        }
        for (int y = years.first; y <= years.last; ++y) {
            const auto yit = by_year.find(y);
            if (yit == by_year.end()) {
                gaps.push_back(code + ":" + std::to_string(y));
                continue;
            }
            MortalityCurve curve;
            curve.country = code;
            curve.year = y;
            curve.sex = sex;
            curve.values = yit->second;
            for (double v : curve.values) {
                if (std::isnan(v)) throw DataError("incomplete age block for " + code + " " + std::to_string(y));
            }
            const double total = std::accumulate(curve.values.begin(), curve.values.end(), 0.0);
            if (!(total > 0.0)) {
                throw DataError("degenerate curve (all-zero dx) for " + code + " " + std::to_string(y));
            }
            for (double& v : curve.values) v /= total;
            curve.radix = total;
            panel.curves.push_back(std::move(curve));
        }
    }
    if (!gaps.empty()) {
        std::string msg = "panel coverage gaps (" + std::to_string(gaps.size()) + "):";
        for (std::size_t i = 0; i < gaps.size() && i < 20; ++i) msg += " " + gaps[i];
        if (gaps.size() > 20) msg += " ...";
        throw DataError(msg);
    }
    return panel;
}

CurvePanel merge_panels(const CurvePanel& a, const CurvePanel& b) {
    CurvePanel out;
    out.curves = a.curves;
    out.curves.insert(out.curves.end(), b.curves.begin(), b.curves.end());
    std::sort(out.curves.begin(), out.curves.end(),
              [](const MortalityCurve& x, const MortalityCurve& y) { return x.key() < y.key(); });
    std::set<std::string> codes(a.countries.begin(), a.countries.end());
    codes.insert(b.countries.begin(), b.countries.end());
    out.countries.assign(codes.begin(), codes.end());
    if (a.curves.empty()) {
        out.years = b.years;
    } else if (b.curves.empty()) {
        out.years = a.years;
    } else {
        out.years = {std::min(a.years.first, b.years.first), std::max(a.years.last, b.years.last)};
    }
    out.validate();
    return out;
}

void write_panel_csv(std::ostream& out, const CurvePanel& panel) {
    out << "country,year,sex,age,value\n";
    for (const auto& c : panel.curves) {
        for (std::size_t a = 0; a < c.values.size(); ++a) {
            out << c.country << ',' << c.year << ',' << to_string(c.sex) << ',' << a << ','
                << text::format_double(c.values[a]) << '\n';
        }
    }
}

CurvePanel read_panel_csv(std::istream& in) {
    std::string line;
    std::size_t line_no = 0;
    // leading '#' lines carry run metadata
    do {
        if (!std::getline(in, line)) throw DataError("empty panel CSV");
        ++line_no;
    } while (!line.empty() && line.front() == '#');
    if (text::trim(line) != "country,year,sex,age,value") {
        throw ParseError(line_no, "unexpected panel CSV header");
    }
    CurvePanel panel;
    std::set<std::string> codes;
    MortalityCurve* current = nullptr;
    while (std::getline(in, line)) {
        ++line_no;
        if (text::trim(line).empty()) continue;
        const auto f = text::split(text::trim(line), ',');
        if (f.size() != 5) throw ParseError(line_no, "expected 5 fields");
        const auto year = text::parse_int(f[1]);
        const auto age = text::parse_int(f[3]);
        const auto value = text::parse_double(f[4]);
        if (!year || !age || !value) throw ParseError(line_no, "invalid number");
        Sex sex;
        try {
            sex = parse_sex(f[2]);
        } catch (const ConfigError&) {
            throw ParseError(line_no, "invalid sex");
        }
        const CurveKey key{std::string(f[0]), static_cast<int>(*year), sex};
        if (current == nullptr || current->key() != key) {
            if (current != nullptr && current->values.size() != static_cast<std::size_t>(kAgeCount)) {
                throw ParseError(line_no, "curve interrupted before age 110");
            }
            if (*age != 0) throw ParseError(line_no, "curve must start at age 0");
            panel.curves.push_back(MortalityCurve{key.country, key.year, key.sex, {}, 1.0});
            current = &panel.curves.back();
            codes.insert(key.country);
        }
        if (*age != static_cast<long long>(current->values.size())) {
            throw ParseError(line_no, "ages out of order");
        }
        current->values.push_back(*value);
    }
    if (current != nullptr && current->values.size() != static_cast<std::size_t>(kAgeCount)) {
        throw ParseError(line_no, "curve interrupted before age 110");
    }
    if (panel.curves.empty()) throw DataError("panel CSV contains no curves");
    panel.countries.assign(codes.begin(), codes.end());
    const auto [lo, hi] = std::minmax_element(panel.curves.begin(), panel.curves.end(),
                                              [](const auto& x, const auto& y) { return x.year < y.year; });
    panel.years = {lo->year, hi->year};
    panel.validate();
    return panel;
}

CountryConfig CountryConfig::defaults() {
    CountryConfig c;
    c.areas = {
        {"North EU", {"DNK", "FIN", "NOR", "SWE"}},
        {"West EU", {"AUT", "BEL", "CHE", "DEUTE", "DEUTW", "FRATNP", "IRL", "NLD", "GBR_NP"}},
        {"South EU", {"ITA", "PRT", "ESP"}},
        {"Center EU", {"BGR", "CZE", "HUN", "POL", "SVK"}},
        {"East EU", {"BLR", "EST", "LVA", "LTU", "RUS", "UKR"}},
        {"Extra-EU", {"AUS", "CAN", "JPN", "NZL_NP", "USA"}},
    };
    // Short series or small populations; DEUTNP is replaced by the East/West split.
    c.excluded = {"CHL", "HRV", "GRC", "ISR", "SVN", "KOR", "TWN", "LUX", "ISL", "DEUTNP"};
    c.names = {
        {"DNK", "Denmark"},        {"FIN", "Finland"},      {"NOR", "Norway"},
        {"SWE", "Sweden"},         {"AUT", "Austria"},      {"BEL", "Belgium"},
        {"CHE", "Switzerland"},    {"DEUTE", "East Germany"}, {"DEUTW", "West Germany"},
        {"FRATNP", "France"},      {"IRL", "Ireland"},      {"NLD", "Netherlands"},
        {"GBR_NP", "United Kingdom"}, {"ITA", "Italy"},     {"PRT", "Portugal"},
        {"ESP", "Spain"},          {"BGR", "Bulgaria"},     {"CZE", "Czech Republic"},
        {"HUN", "Hungary"},        {"POL", "Poland"},       {"SVK", "Slovakia"},
        {"BLR", "Belarus"},        {"EST", "Estonia"},      {"LVA", "Latvia"},
        {"LTU", "Lithuania"},      {"RUS", "Russia"},       {"UKR", "Ukraine"},
        {"AUS", "Australia"},      {"CAN", "Canada"},       {"JPN", "Japan"},
        {"NZL_NP", "New Zealand"}, {"USA", "United States"},
    };
    return c;
}

CountryConfig CountryConfig::from_json(const nlohmann::json& j) {
    try {
        CountryConfig c;
        for (const auto& a : j.at("areas")) {
            c.areas.push_back({a.at("name").get<std::string>(), a.at("codes").get<std::vector<std::string>>()});
        }
        if (j.contains("excluded")) c.excluded = j.at("excluded").get<std::vector<std::string>>();
        if (j.contains("names")) c.names = j.at("names").get<std::map<std::string, std::string>>();
        return c;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("invalid country config: ") + e.what());
    }
}

nlohmann::json CountryConfig::to_json() const {
    nlohmann::json areas_json = nlohmann::json::array();
    for (const auto& a : areas) areas_json.push_back({{"name", a.name}, {"codes", a.codes}});
    return {{"areas", areas_json}, {"excluded", excluded}, {"names", names}};
}

std::vector<std::string> CountryConfig::codes() const {
    std::vector<std::string> out;
    for (const auto& a : areas) out.insert(out.end(), a.codes.begin(), a.codes.end());
    return out;
}

std::string CountryConfig::area_of(const std::string& code) const {
    for (const auto& a : areas) {
        if (std::find(a.codes.begin(), a.codes.end(), code) != a.codes.end()) return a.name;
    }
    return "Other";
}

std::filesystem::path life_table_path(const std::filesystem::path& data_dir, const std::string& code, Sex sex) {
    return data_dir / (code + "." + std::string(life_table_stem(sex)) + ".txt");
}

RowsByCountry load_life_tables(const std::filesystem::path& data_dir, const std::vector<std::string>& codes, Sex sex) {
    RowsByCountry rows;
    for (const auto& code : codes) rows[code] = read_life_table(life_table_path(data_dir, code, sex), sex);
    return rows;
}

std::vector<std::string> discover_countries(const std::filesystem::path& data_dir, Sex sex,
                                            const std::vector<std::string>& excluded) {
    if (!std::filesystem::is_directory(data_dir)) throw DataError("not a directory: " + data_dir.string());
    const std::string suffix = "." + std::string(life_table_stem(sex)) + ".txt";
    std::vector<std::string> out;
    for (const auto& entry : std::filesystem::directory_iterator(data_dir)) {
        const std::string name = entry.path().filename().string();
        if (name.size() <= suffix.size() || !name.ends_with(suffix)) continue;
        const std::string code = name.substr(0, name.size() - suffix.size());
        if (std::find(excluded.begin(), excluded.end(), code) == excluded.end()) out.push_back(code);
    }
    std::sort(out.begin(), out.end());
    return out;
}

}  // namespace fcurve
