#pragma once

#include <string>
#include <vector>

#include "tttm/graphnet.hpp"

namespace tttm {

enum class EmaxConvention { observed, complete };
EmaxConvention parse_emax(const std::string& s);
std::string to_string(EmaxConvention c);

struct EmaxResult {
    double e_max = 0.0;
    bool fallback = false;
};

// Unnormalized double sum of |A1 - A2| over the union of both sensor sets.
double graph_difference(const ToolGraph& a, const ToolGraph& b);
double graph_edit_distance(const ToolGraph& a, const ToolGraph& b, double e_max);

EmaxResult compute_e_max(const std::vector<ToolGraph>& graphs, EmaxConvention c);

struct MultiScoreReport {
    double tau_g = 0.0;
    double e_max = 0.0;
    std::vector<std::string> tools;
    Matrix pairwise;
    Matrix unnormalized;
    std::vector<double> tool_scores;
    std::vector<std::string> flags;
};

MultiScoreReport multivariate_scores(const std::vector<ToolGraph>& graphs, double e_max);

}  // namespace tttm
