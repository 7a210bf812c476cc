#pragma once

#include <map>
#include <string>
#include <vector>

#include "tttm/graphnet.hpp"
#include "tttm/uniscore.hpp"

namespace tttm {

// NaN when either input is constant.
double spearman(const std::vector<double>& x, const std::vector<double>& y);
std::vector<double> fractional_ranks(const std::vector<double>& x);

double cross_tool_variance(const FleetDataset& fleet, const std::string& sensor);

// Gaussian KDE with absolute bandwidth on a 512-point grid; counts local
// maxima above 5% of the global maximum.
int mode_count_values(const Vector& values, double bandwidth);
int mode_count(const FleetDataset& fleet, const std::string& sensor, double bandwidth);

struct CorrelationTable {
    std::vector<std::string> rows;  // statistics
    std::vector<std::string> cols;  // methods
    Matrix values;
};

CorrelationTable correlation_report(const std::vector<SensorScores>& methods, const FleetDataset& fleet,
                                    double bandwidth = 0.6);

struct SweepRow {
    double tau_g = 0.0;
    double max_score = 0.0;
    double min_score = 0.0;
    double std_score = 0.0;
};

enum class McMode { retrain, extract };

// Off-diagonal upper-triangle max, min and population stdev.
SweepRow pairwise_stats(const Matrix& unnormalized, double tau_g);

// retrain: run r trains with seed + r. extract: the given model, attention
// dropout resampled per run during extraction.
std::vector<SweepRow> tau_sweep(const FleetDataset& fleet, const ModelParams& model, const std::vector<double>& taus,
                                int n_mc, McMode mode = McMode::retrain);

double cross_method_correlation(const std::vector<double>& multi, const std::vector<double>& uni);
double cross_method_pairwise(const Matrix& multi, const Matrix& uni);

}  // namespace tttm
