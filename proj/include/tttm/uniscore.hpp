#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "tttm/fleet.hpp"

namespace tttm {

enum class UniMethod { dbscan, wd, pd };
UniMethod parse_uni_method(const std::string& s);
std::string to_string(UniMethod m);

enum class PairwiseMode { pair_specific, literal };
enum class DbscanToolMode { per_tool, literal };

struct KneeResult {
    double eps = 0.0;
    bool degenerate = false;
};

KneeResult knee_epsilon(const Vector& points, int p_min);

struct ClusterLabels {
    std::vector<int> labels;  // -1 noise
    double eps = 0.0;
    int min_pts = 2;
    int n_clusters = 0;
};

ClusterLabels dbscan_cluster(const Vector& points, double eps, int min_pts);

struct ReferenceCluster {
    int id = -1;
    double centroid = 0.0;
};

// Throws std::runtime_error when every point is noise.
ReferenceCluster reference_cluster(const Vector& points, const ClusterLabels& labels);

struct DbscanSensorResult {
    double score = 0.0;
    double centroid = 0.0;
    double eps = 0.0;
    std::vector<std::string> tools;
    std::vector<double> per_tool_rms;
    std::vector<std::string> flags;
};

DbscanSensorResult dbscan_sensor_score(const std::vector<SensorSeries>& slice, int p_min = 2);

double wasserstein1(const Vector& a, const Vector& b);

Vector periodogram(const Vector& series, int pad_to);

// Least-squares spectrum on the same bin grid as periodogram(); times are
// expressed in units of the median spacing.
Vector lomb_scargle(const Vector& series, const std::vector<double>& times, int pad_to);

bool is_irregular(const std::vector<std::int64_t>& ts, double gap_factor = 3.0);

double pd_distance(const SensorSeries& a, const SensorSeries& b, double gap_factor = 3.0);

struct SensorScores {
    UniMethod method = UniMethod::dbscan;
    std::vector<std::string> sensors;
    std::vector<double> scores;
    std::vector<std::vector<std::string>> flags;
};

// Per-sensor tool-pair distances: pair[s](q1, q2), NaN where a tool lacks s.
struct PairDistances {
    std::vector<std::string> tools;
    std::vector<std::string> sensors;
    std::vector<Matrix> pair;
};

struct ScoreReport {
    UniMethod method = UniMethod::dbscan;
    SensorScores sensor_scores;
    std::optional<Matrix> pairwise;  // absent for dbscan
    std::vector<std::string> tools;
    std::vector<double> tool_scores;  // NaN when undefined
    // tools x sensor_scores.sensors: the tool's own deviation on each sensor, NaN when absent
    Matrix tool_sensor;
    std::map<std::string, std::string> meta;
};

struct UniConfig {
    int p_min = 2;
    PairwiseMode pairwise_mode = PairwiseMode::pair_specific;
    DbscanToolMode dbscan_tool_mode = DbscanToolMode::per_tool;
    double gap_factor = 3.0;
};

std::pair<SensorScores, PairDistances> wd_sensor_scores(const FleetDataset& fleet);
std::pair<SensorScores, PairDistances> pd_sensor_scores(const FleetDataset& fleet, double gap_factor = 3.0);

Matrix pairwise_tool_matrix(const PairDistances& d, const SensorScores& s, PairwiseMode mode);

std::vector<double> aggregate_pairwise(const Matrix& pairwise);
std::vector<double> aggregate_sensor_scores(const FleetDataset& fleet, const SensorScores& s);

ScoreReport score_fleet(const FleetDataset& fleet, UniMethod method, const UniConfig& cfg = {});

}  // namespace tttm
