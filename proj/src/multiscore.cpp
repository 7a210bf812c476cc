#include "tttm/multiscore.hpp"

#include <algorithm>
#include <cmath>
#include <set>

namespace tttm {

EmaxConvention parse_emax(const std::string& s) {
    if (s == "observed") return EmaxConvention::observed;
    if (s == "complete") return EmaxConvention::complete;
    throw std::invalid_argument("unknown e_max convention: " + s);
}

std::string to_string(EmaxConvention c) { return c == EmaxConvention::complete ? "complete" : "observed"; }

namespace {

// Row/column positions of g's sensors inside the union list; -1 when absent.
std::vector<int> positions(const std::vector<std::string>& uni, const ToolGraph& g) {
    std::vector<int> pos;
    for (const auto& s : uni) {
        auto it = std::find(g.sensors.begin(), g.sensors.end(), s);
        pos.push_back(it == g.sensors.end() ? -1 : static_cast<int>(it - g.sensors.begin()));
    }
    return pos;
}

}  // namespace

double graph_difference(const ToolGraph& a, const ToolGraph& b) {
    if (a.adjacency.rows() != static_cast<Eigen::Index>(a.sensors.size()) ||
        b.adjacency.rows() != static_cast<Eigen::Index>(b.sensors.size()))
        throw std::invalid_argument("adjacency does not match its sensor list");
    if (a.sensors == b.sensors) return (a.adjacency - b.adjacency).cwiseAbs().sum();
    std::set<std::string> u(a.sensors.begin(), a.sensors.end());
    u.insert(b.sensors.begin(), b.sensors.end());
    std::vector<std::string> uni(u.begin(), u.end());
    auto pa = positions(uni, a), pb = positions(uni, b);
    double total = 0.0;
    for (size_t i = 0; i < uni.size(); ++i)
        for (size_t j = 0; j < uni.size(); ++j) {
            double x = pa[i] >= 0 && pa[j] >= 0 ? a.adjacency(pa[i], pa[j]) : 0.0;
            double y = pb[i] >= 0 && pb[j] >= 0 ? b.adjacency(pb[i], pb[j]) : 0.0;
            total += std::abs(x - y);
        }
    return total;
}

double graph_edit_distance(const ToolGraph& a, const ToolGraph& b, double e_max) {
    if (!(e_max > 0)) throw std::invalid_argument("e_max must be > 0");
    return graph_difference(a, b) / e_max;
}

EmaxResult compute_e_max(const std::vector<ToolGraph>& graphs, EmaxConvention c) {
    if (graphs.empty()) throw std::invalid_argument("compute_e_max needs at least one graph");
    std::set<std::string> u;
    for (const auto& g : graphs) u.insert(g.sensors.begin(), g.sensors.end());
    const double n = static_cast<double>(u.size());
    const double complete = n * (n - 1);
    if (c == EmaxConvention::complete) return {complete, false};
    double best = 0.0;
    for (const auto& g : graphs) best = std::max(best, g.adjacency.sum());
    if (best > 0) return {best, false};
    return {complete, true};
}

MultiScoreReport multivariate_scores(const std::vector<ToolGraph>& graphs, double e_max) {
    if (graphs.size() < 2) throw std::invalid_argument("multivariate scoring needs at least 2 graphs");
    if (!(e_max > 0)) throw std::invalid_argument("e_max must be > 0");
    MultiScoreReport r;
    r.e_max = e_max;
    const auto Q = static_cast<Eigen::Index>(graphs.size());
    r.unnormalized = Matrix::Zero(Q, Q);
    for (Eigen::Index i = 0; i < Q; ++i) {
        r.tools.push_back(graphs[i].tool);
        for (Eigen::Index j = i + 1; j < Q; ++j)
            r.unnormalized(i, j) = r.unnormalized(j, i) = graph_difference(graphs[i], graphs[j]);
    }
    r.pairwise = r.unnormalized / e_max;
    for (Eigen::Index i = 0; i < Q; ++i) r.tool_scores.push_back(r.pairwise.row(i).sum() / static_cast<double>(Q));
    return r;
}

}  // namespace tttm
