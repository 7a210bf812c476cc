#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "tttm/fleet.hpp"

namespace tttm {

struct InsufficientDataError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

enum class Trend { up, down, none };
std::string to_string(Trend t);

struct MkResult {
    long long z_prime = 0;
    double z_stat = 0.0;
    double alpha = 0.05;
    Trend trend = Trend::none;
    bool reject_h0 = false;
};

struct TrendModel {
    int degree = 1;
    Vector coefficients;  // standardized-feature weights, length = degree
    Vector feature_mean;
    Vector feature_scale;
    double bias = 0.0;  // fitted value at index 0
    double intercept = 0.0;
    double r2 = 0.0;
    double lambda = 1.0;

    double predict(double j) const;
};

enum class Phase { before_pm, after_pm };

struct PmSegment {
    std::string tool;
    std::int64_t start;  // inclusive
    std::int64_t end;    // exclusive
    Phase phase;
    int ordinal;  // 0 before the first PM, k after the k-th
};

struct SegmentFragment {
    PmSegment segment;
    TsumMatrix data;
};

FleetDataset filter_sparse(const FleetDataset& fleet, int tau);

// Segments per tool in tool order, then time order.
std::vector<SegmentFragment> split_by_pm(const FleetDataset& fleet);

MkResult mann_kendall(const Vector& series, double alpha, bool one_sided = false);

std::pair<Vector, TrendModel> detrend(const Vector& series, double lambda);

struct DetrendLog {
    std::string tool;
    std::string sensor;
    MkResult mk;
    int degree = 0;
    bool altered = false;
    std::string warning;
};

FleetDataset detrend_fleet(const FleetDataset& fleet, double alpha, double lambda, bool one_sided = false,
                           std::vector<DetrendLog>* log = nullptr);

struct NormalizeInfo {
    std::vector<std::string> sensors;
    std::vector<double> lo, hi;
    std::vector<std::string> degenerate;
};

FleetDataset minmax_normalize(const FleetDataset& fleet, NormalizeInfo* info = nullptr);

}  // namespace tttm
