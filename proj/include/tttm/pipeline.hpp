#pragma once

#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "tttm/graphnet.hpp"
#include "tttm/multiscore.hpp"
#include "tttm/preprocess.hpp"
#include "tttm/uniscore.hpp"

namespace tttm {

// Exit-code contract shared by the CLI.
enum ExitCode { exit_ok = 0, exit_usage = 1, exit_empty = 2, exit_numeric = 3 };

struct EmptyResultError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct StageError : std::runtime_error {
    StageError(std::string stage, const std::string& what, int code)
        : std::runtime_error(stage + ": " + what), stage(std::move(stage)), code(code) {}
    std::string stage;
    int code;
};

struct RunConfig {
    std::string input;
    std::string pm_log_path;
    std::string method = "dbscan";  // dbscan, wd, pd, mtadgat, gdn
    int tau = 10;
    double alpha = 0.05;
    double lambda = 1.0;
    bool detrend_enabled = true;
    bool mk_one_sided = false;
    UniConfig uni;
    GnnHyperParams gnn;
    double tau_g = 0.9;
    EmaxConvention e_max = EmaxConvention::observed;
    std::string out = "report";
    std::string period;

    bool is_multivariate() const { return method == "mtadgat" || method == "gdn" || method == "mtad_gat"; }
};

// Reads known keys; unknown keys are ignored.
RunConfig config_from_json(const nlohmann::json& j, RunConfig base = {});
nlohmann::json config_to_json(const RunConfig& c);

FleetDataset preprocess_fleet(const FleetDataset& fleet, const RunConfig& cfg, bool detrend, nlohmann::json* meta);

// Scores each before/after-PM ordinal separately and combines by point count.
ScoreReport score_segmented(const FleetDataset& fleet, UniMethod method, const RunConfig& cfg, nlohmann::json* meta);

struct MultiRun {
    TrainResult training;
    std::vector<ToolGraph> graphs;
    MultiScoreReport report;
    EmaxResult e_max;
};

MultiRun run_multivariate(const FleetDataset& normalized, const RunConfig& cfg);

// ingest, filter, PM split, detrend (skipped for pd), normalize, score, write.
nlohmann::json run_pipeline(const RunConfig& cfg);

// Report bundle I/O
void write_matrix_csv(const std::string& path, const std::vector<std::string>& labels, const Matrix& m);
Matrix read_matrix_csv(const std::string& path, std::vector<std::string>* labels);
void write_tool_scores(const std::string& path, const std::vector<std::string>& tools, const std::vector<double>& s);
std::pair<std::vector<std::string>, std::vector<double>> read_tool_scores(const std::string& path);
void write_sensor_scores(const std::string& path, const SensorScores& s);
SensorScores read_sensor_scores(const std::string& path);
void write_json(const std::string& path, const nlohmann::json& j);

void write_score_report(const std::string& dir, const ScoreReport& r, const nlohmann::json& meta);
void write_multi_report(const std::string& dir, const MultiScoreReport& r, const nlohmann::json& meta);

struct TrendSeries {
    std::string entity;
    std::vector<std::string> periods;
    std::vector<double> scores;  // NaN marks a gap
};

struct TrendOutput {
    std::vector<TrendSeries> tools;
    std::vector<TrendSeries> sensors;  // normalized per series
    std::string peak_period;
    std::vector<std::string> drilldown;  // top-k sensors for the peak period
};

TrendOutput trend_report(const std::vector<std::string>& report_dirs, const std::vector<std::string>& labels,
                         const std::string& out_dir, int top_k = 4);

// Minimal line chart as standalone SVG.
std::string svg_line_chart(const std::string& title, const std::vector<std::string>& xlabels,
                           const std::vector<TrendSeries>& series, const std::string& ylabel);

}  // namespace tttm
