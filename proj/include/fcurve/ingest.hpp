#pragma once

#include <json.hpp>

#include <compare>
#include <filesystem>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

namespace fcurve {

enum class Sex { male, female };

std::string_view to_string(Sex sex);
/// Accepts "male"/"female" (also "m"/"f").
Sex parse_sex(std::string_view text);
/// HMD table stem: "mltper_1x1" or "fltper_1x1".
std::string_view life_table_stem(Sex sex);

/// Number of single-year ages 0..110+ in a 1x1 life table.
inline constexpr int kAgeCount = 111;

/// One row of a period life table. Missing cells ("." in HMD files) are empty.
struct LifeTableRow {
    int year = 0;
    int age = 0;
    std::optional<double> mx, qx, ax, lx, dx, Lx, Tx, ex;
};

/// Parses an HMD period 1x1 life table (title line, column header line,
/// then Year Age mx qx ax lx dx Lx Tx ex). Blank lines are ignored.
std::vector<LifeTableRow> parse_life_table(std::istream& in, Sex sex);
std::vector<LifeTableRow> read_life_table(const std::filesystem::path& path, Sex sex);

struct CurveKey {
    std::string country;
    int year = 0;
    Sex sex = Sex::male;

    auto operator<=>(const CurveKey&) const = default;
    bool operator==(const CurveKey&) const = default;
};

/// Age-at-death distribution d_x of one country, year and sex.
struct MortalityCurve {
    std::string country;
    int year = 0;
    Sex sex = Sex::male;
    std::vector<double> values;  // kAgeCount entries, normalized to unit sum
    double radix = 1.0;          // sum of the raw d_x before normalization

    CurveKey key() const { return {country, year, sex}; }
};

struct YearRange {
    int first = 0;
    int last = 0;

    bool contains(int y) const { return y >= first && y <= last; }
    int count() const { return last - first + 1; }
};

struct CurvePanel {
    std::vector<MortalityCurve> curves;
    std::vector<std::string> countries;  // sorted, unique
    YearRange years;

    /// Throws DataError on duplicate keys or curves outside the year range.
    void validate() const;
};

using RowsByCountry = std::map<std::string, std::vector<LifeTableRow>>;

/// Assembles normalized curves for every (country, year) in the request,
/// ordered by (country, year).
CurvePanel build_panel(const RowsByCountry& rows, const std::vector<std::string>& countries,
                       YearRange years, Sex sex);

/// Union of two panels (e.g. both sexes); curves ordered by (country, year, sex).
CurvePanel merge_panels(const CurvePanel& a, const CurvePanel& b);

/// Long CSV `country,year,sex,age,value`, one row per age.
void write_panel_csv(std::ostream& out, const CurvePanel& panel);
CurvePanel read_panel_csv(std::istream& in);

/// Country selection and area grouping. Defaults to the 32-country panel
/// (Germany split into East and West) grouped by European area.
struct CountryConfig {
    struct Area {
        std::string name;
        std::vector<std::string> codes;
    };
    std::vector<Area> areas;
    std::vector<std::string> excluded;
    std::map<std::string, std::string> names;

    static CountryConfig defaults();
    static CountryConfig from_json(const nlohmann::json& j);
    nlohmann::json to_json() const;

    /// All codes in area order.
    std::vector<std::string> codes() const;
    /// Area of a code, or "Other" when unlisted.
    std::string area_of(const std::string& code) const;
};

std::filesystem::path life_table_path(const std::filesystem::path& data_dir,
                                      const std::string& code, Sex sex);

/// Reads `<data_dir>/<CODE>.<stem>.txt` for each code.
RowsByCountry load_life_tables(const std::filesystem::path& data_dir,
                               const std::vector<std::string>& codes, Sex sex);

/// Country codes with a table for `sex` in `data_dir`, minus `excluded`, sorted.
std::vector<std::string> discover_countries(const std::filesystem::path& data_dir, Sex sex,
                                            const std::vector<std::string>& excluded);

}  // namespace fcurve
