#pragma once

#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace tttm {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

struct ParseError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ShapeError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct NotFoundError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// One tool's summary data: rows are sensors, columns are runs.
struct TsumMatrix {
    std::string tool;
    std::vector<std::string> sensors;
    Matrix values;
    std::vector<std::int64_t> timestamps;
    std::vector<std::string> run_ids;

    int n_sensors() const { return static_cast<int>(sensors.size()); }
    int n_points() const { return static_cast<int>(timestamps.size()); }
    int sensor_index(const std::string& s) const;  // -1 when absent
};

struct FleetDataset {
    std::vector<TsumMatrix> tools;
    std::map<std::string, std::vector<std::int64_t>> pm_logs;

    int n_tools() const { return static_cast<int>(tools.size()); }
    const TsumMatrix* find(const std::string& tool) const;
};

struct TraceBlock {
    std::string tool;
    std::string run;
    std::vector<std::string> sensors;
    Matrix samples;
    std::int64_t end_time = 0;
};

enum class Statistic { mean, median, stdev, max, min, range };

Statistic parse_statistic(const std::string& name);
std::string to_string(Statistic s);

struct SensorSeries {
    std::string tool;
    Vector values;
    std::vector<std::int64_t> timestamps;
};

FleetDataset load_tsum(const std::string& path);
FleetDataset parse_tsum(std::istream& in);
void write_tsum(const FleetDataset& fleet, std::ostream& out);
void save_tsum(const FleetDataset& fleet, const std::string& path);

std::map<std::string, std::vector<std::int64_t>> load_pm_log(const std::string& path);
void save_pm_log(const std::map<std::string, std::vector<std::int64_t>>& logs, const std::string& path);

// Trace CSV carries no clock, so blocks get the run ordinal as end time unless
// a run-time table is supplied.
std::vector<TraceBlock> load_traces(const std::string& path);

TsumMatrix tst_encode(const std::vector<TraceBlock>& traces, Statistic stat);
double apply_statistic(const Vector& row, Statistic stat);

std::vector<std::string> union_sensors(const FleetDataset& fleet);
std::vector<SensorSeries> sensor_slice(const FleetDataset& fleet, const std::string& sensor);

// Formats with 6 significant digits; shared by every writer.
std::string fmt6(double v);

}  // namespace tttm
