#pragma once

#include "fcurve/cluster.hpp"
#include "fcurve/flm.hpp"
#include "fcurve/fpca.hpp"
#include "fcurve/ingest.hpp"
#include "fcurve/smooth.hpp"

#include <json.hpp>

#include <filesystem>
#include <map>
#include <istream>
#include <ostream>
#include <span>
#include <string>
#include <vector>

namespace fcurve {

inline constexpr const char* kVersion = "0.3.0";

/// Configuration and input fingerprints of one CLI run.
struct RunManifest {
    struct Input {
        std::string path;
        std::string sha256;
    };
    std::string command;
    nlohmann::json config = nlohmann::json::object();
    std::vector<Input> inputs;
    std::string version = kVersion;
    std::string created_at;  // informational, excluded from run_id

    /// Short hash of command, config, inputs and version. Output locations are not hashed.
    std::string run_id() const;
    nlohmann::json to_json() const;
    static RunManifest from_json(const nlohmann::json& j);
};

std::string file_sha256(const std::filesystem::path& path);

/// Country x year grid of cluster labels, rows grouped by area.
struct CompositionGrid {
    struct Row {
        std::string area;
        std::string country;
        std::vector<int> labels;  // one per year from first to last; 0 when the cell is absent
    };
    std::vector<int> years;
    std::vector<Row> rows;
    int K = 0;
    std::vector<double> shares;  // label frequencies
};

/// `keys` must be aligned with the partition labels and hold one sex only.
CompositionGrid composition_grid(const Partition& partition, std::span<const CurveKey> keys,
                                 const CountryConfig& grouping);
CompositionGrid composition_grid(const Partition& partition, const CurvePanel& panel,
                                 const CountryConfig& grouping);

void write_composition_csv(std::ostream& out, const CompositionGrid& grid, const std::string& run_id);
std::string render_composition_svg(const CompositionGrid& grid, const std::string& title, const std::string& run_id);

struct Series {
    std::string label;
    std::vector<double> x;
    std::vector<double> y;
    std::string color = "#1f77b4";
    bool dashed = false;
    double width = 1.5;
    bool markers = false;
};

struct PlotSpec {
    std::string title;
    std::string x_label = "age";
    std::string y_label;
    std::string run_id;
    int width = 720;
    int height = 480;
    bool legend = true;
};

/// Deterministic SVG line plot; an empty series list gives axes only.
std::string render_svg(const PlotSpec& spec, std::span<const Series> series);
void plot_curves(const PlotSpec& spec, std::span<const Series> series, const std::filesystem::path& path);

/// A coefficient vector sampled on `points` evenly spaced ages.
Series curve_series(const BSplineBasis& basis, const Eigen::VectorXd& coeffs, std::string label,
                    std::string color, int points = 221);

/// Mean curve (dashed) with "+" and "−" effect curves.
std::string render_effect_plot(const PlotSpec& spec, const BSplineBasis& basis, const Eigen::VectorXd& mean,
                               const Eigen::VectorXd& plus, const Eigen::VectorXd& minus);

struct TrajectoryPoint {
    int year = 0;
    double x = 0.0;
    double y = 0.0;
};

/// Per-country first-two-score points at years divisible by 10, ordered by year.
std::map<std::string, std::vector<TrajectoryPoint>> decade_trajectories(const Eigen::MatrixXd& scores,
                                                                         std::span<const CurveKey> keys);

/// Score-plane trajectories of each country through its decadal points.
std::string trajectory_plot(const Eigen::MatrixXd& scores, std::span<const CurveKey> keys, const PlotSpec& spec,
                            std::span<const std::string> countries = {});

// Tabular outputs. Every file starts with a "# run <id>" line; readers skip '#' lines.
void write_partition_csv(std::ostream& out, const Partition& partition, std::span<const CurveKey> keys,
                         const std::string& run_id);
struct PartitionTable {
    std::vector<CurveKey> keys;
    std::vector<int> labels;
};
PartitionTable read_partition_csv(std::istream& in);

void write_scores_csv(std::ostream& out, const Eigen::MatrixXd& scores, std::span<const CurveKey> keys,
                      const std::string& run_id);
struct ScoreTable {
    std::vector<CurveKey> keys;
    Eigen::MatrixXd scores;
};
ScoreTable read_scores_csv(std::istream& in);

void write_bic_csv(std::ostream& out, std::span<const ModelScore> scores, const std::string& run_id);
std::vector<ModelScore> read_bic_csv(std::istream& in);

/// Eigenvalues, variance shares, mean and harmonics; scores go to the scores CSV.
nlohmann::json fpca_report(const FpcaResult& result, std::size_t n, const std::string& run_id);
FpcaResult fpca_from_report(const nlohmann::json& j);

/// Group parameters with a_kj also scaled by 1e4, and b both raw and scaled.
nlohmann::json flm_report(const FlmModel& model, const ModelScore& score, const std::string& run_id);
FlmModel flm_from_report(const nlohmann::json& j);

/// Keeps the labels as given (1..K, possibly with empty clusters).
Partition partition_from_labels(std::span<const int> labels, int K);

/// Indices of strict local maxima of a BIC sequence (endpoints compare with their single neighbour).
std::vector<std::size_t> local_maxima(std::span<const double> values);

void write_text(const std::filesystem::path& path, const std::string& content);
std::string read_text(const std::filesystem::path& path);

}  // namespace fcurve
