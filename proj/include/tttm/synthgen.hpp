#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "tttm/fleet.hpp"

namespace tttm {

enum class DeviationKind { mean_shift, variance_inflation, extra_mode, linear_trend, poly_trend };
DeviationKind parse_deviation(const std::string& s);
std::string to_string(DeviationKind k);

// Magnitudes are in units of the sensor's baseline stdev, except
// variance_inflation where the magnitude multiplies the variance.
struct DeviationSpec {
    std::string tool;
    std::vector<std::string> sensors;
    DeviationKind kind = DeviationKind::mean_shift;
    double magnitude = 1.0;
};

struct CorrelationBlock {
    std::vector<std::string> sensors;
    double rho = 0.0;
};

struct SensorBaseline {
    double mean = 0.0;
    double stdev = 1.0;
};

struct PmEvent {
    std::string tool;
    std::int64_t timestamp = 0;
    double shift = 0.0;  // level step for every sensor, in stdev units
};

struct MissingSpan {
    std::string tool;
    std::int64_t start = 0;  // inclusive
    std::int64_t end = 0;    // exclusive
};

struct SynthSpec {
    int q_tools = 2;
    int n_sensors = 1;
    std::vector<int> points_per_tool{100};  // one entry applies to every tool
    std::vector<SensorBaseline> baseline;    // empty: drawn from the seed
    std::vector<DeviationSpec> deviations;
    std::vector<CorrelationBlock> correlation_blocks;
    std::vector<PmEvent> pm_events;
    std::vector<MissingSpan> missing_spans;
    std::map<std::string, std::vector<std::string>> missing_sensors;
    // Sparse stray excursions replacing a point by +-U(lo, hi) stdevs.
    double outlier_rate = 0.0;
    double outlier_lo = 6.0;
    double outlier_hi = 8.0;
    std::int64_t start_time = 1700000000;
    std::int64_t duration = 30LL * 24 * 3600;
    std::uint64_t seed = 0;

    void validate() const;
    int points_for(int q) const;
};

void to_json(nlohmann::json& j, const SynthSpec& s);
void from_json(const nlohmann::json& j, SynthSpec& s);

struct TruthLabel {
    std::string tool;
    std::string sensor;
    DeviationKind kind;
    double magnitude;
};

struct GroundTruth {
    std::vector<TruthLabel> labels;
    std::vector<SensorBaseline> baseline;
};

nlohmann::json truth_to_json(const GroundTruth& t);

std::string tool_name(int q);
std::string sensor_name(int s);

std::pair<FleetDataset, GroundTruth> generate_fleet(const SynthSpec& spec);

SynthSpec paper_scale_preset();
// Same structure with point counts divided by 10.
SynthSpec desk_scale(const SynthSpec& spec);

}  // namespace tttm
