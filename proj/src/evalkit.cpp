#include "tttm/evalkit.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "tttm/multiscore.hpp"

namespace tttm {

namespace {
double nan() { return std::numeric_limits<double>::quiet_NaN(); }
}  // namespace

std::vector<double> fractional_ranks(const std::vector<double>& x) {
    std::vector<size_t> idx(x.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), [&](size_t a, size_t b) { return x[a] < x[b]; });
    std::vector<double> r(x.size());
    for (size_t i = 0; i < idx.size();) {
        size_t k = i;
        while (k < idx.size() && x[idx[k]] == x[idx[i]]) ++k;
        double avg = 0.5 * static_cast<double>(i + k - 1) + 1.0;
        for (size_t m = i; m < k; ++m) r[idx[m]] = avg;
        i = k;
    }
    return r;
}

double spearman(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size() || x.size() < 2) throw std::invalid_argument("spearman needs equal lengths >= 2");
    auto rx = fractional_ranks(x), ry = fractional_ranks(y);
    const double n = static_cast<double>(x.size());
    double mx = std::accumulate(rx.begin(), rx.end(), 0.0) / n;
    double my = std::accumulate(ry.begin(), ry.end(), 0.0) / n;
    double sxy = 0, sxx = 0, syy = 0;
    for (size_t i = 0; i < rx.size(); ++i) {
        sxy += (rx[i] - mx) * (ry[i] - my);
        sxx += (rx[i] - mx) * (rx[i] - mx);
        syy += (ry[i] - my) * (ry[i] - my);
    }
    if (sxx == 0 || syy == 0) return nan();
    return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

namespace {

Vector pooled(const FleetDataset& fleet, const std::string& sensor) {
    auto slice = sensor_slice(fleet, sensor);
    Eigen::Index n = 0;
    for (const auto& s : slice) n += s.values.size();
    Vector all(n);
    Eigen::Index off = 0;
    for (const auto& s : slice) {
        all.segment(off, s.values.size()) = s.values;
        off += s.values.size();
    }
    return all;
}

}  // namespace

double cross_tool_variance(const FleetDataset& fleet, const std::string& sensor) {
    Vector all = pooled(fleet, sensor);
    if (all.size() < 2) return nan();
    return (all.array() - all.mean()).square().mean();
}

int mode_count_values(const Vector& x, double bandwidth) {
    if (x.size() < 10) throw std::invalid_argument("mode_count needs at least 10 points");
    if (!(bandwidth > 0)) throw std::invalid_argument("bandwidth must be > 0");
    const double lo = x.minCoeff(), hi = x.maxCoeff();
    if (hi == lo) return 1;
    constexpr int G = 512;
    const double a = lo - 3 * bandwidth, b = hi + 3 * bandwidth;
    std::vector<double> dens(G, 0.0);
    for (int g = 0; g < G; ++g) {
        double t = a + (b - a) * g / (G - 1);
        double s = 0.0;
        for (Eigen::Index i = 0; i < x.size(); ++i) {
            double u = (t - x[i]) / bandwidth;
            s += std::exp(-0.5 * u * u);
        }
        dens[g] = s;
    }
    double top = *std::max_element(dens.begin(), dens.end());
    int modes = 0;
    for (int g = 1; g + 1 < G; ++g)
        if (dens[g] > dens[g - 1] && dens[g] >= dens[g + 1] && dens[g] > 0.05 * top) ++modes;
    return std::max(modes, 1);
}

int mode_count(const FleetDataset& fleet, const std::string& sensor, double bandwidth) {
    return mode_count_values(pooled(fleet, sensor), bandwidth);
}

CorrelationTable correlation_report(const std::vector<SensorScores>& methods, const FleetDataset& fleet,
                                    double bandwidth) {
    CorrelationTable t;
    t.rows = {"variance", "modes"};
    auto sensors = union_sensors(fleet);
    if (sensors.size() < 3) throw std::invalid_argument("correlation_report needs at least 3 sensors");
    std::vector<double> var, modes;
    for (const auto& s : sensors) {
        var.push_back(cross_tool_variance(fleet, s));
        double m = nan();
        try {
            m = mode_count(fleet, s, bandwidth);
        } catch (const std::invalid_argument&) {
        }
        modes.push_back(m);
    }
    t.values = Matrix::Constant(2, static_cast<Eigen::Index>(methods.size()), nan());
    for (size_t c = 0; c < methods.size(); ++c) {
        t.cols.push_back(to_string(methods[c].method));
        for (int r = 0; r < 2; ++r) {
            const auto& stat = r == 0 ? var : modes;
            std::vector<double> a, b;
            for (size_t k = 0; k < sensors.size(); ++k) {
                auto it = std::find(methods[c].sensors.begin(), methods[c].sensors.end(), sensors[k]);
                if (it == methods[c].sensors.end() || std::isnan(stat[k])) continue;
                double sc = methods[c].scores[static_cast<size_t>(it - methods[c].sensors.begin())];
                if (std::isnan(sc)) continue;
                a.push_back(sc);
                b.push_back(stat[k]);
            }
            if (a.size() >= 2) t.values(r, static_cast<Eigen::Index>(c)) = spearman(a, b);
        }
    }
    return t;
}

SweepRow pairwise_stats(const Matrix& u, double tau_g) {
    std::vector<double> v;
    for (Eigen::Index i = 0; i < u.rows(); ++i)
        for (Eigen::Index j = i + 1; j < u.cols(); ++j) v.push_back(u(i, j));
    SweepRow r;
    r.tau_g = tau_g;
    if (v.empty()) return r;
    r.max_score = *std::max_element(v.begin(), v.end());
    r.min_score = *std::min_element(v.begin(), v.end());
    double m = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
    double ss = 0.0;
    for (double x : v) ss += (x - m) * (x - m);
    r.std_score = std::sqrt(ss / static_cast<double>(v.size()));
    return r;
}

std::vector<SweepRow> tau_sweep(const FleetDataset& fleet, const ModelParams& model, const std::vector<double>& taus,
                                int n_mc, McMode mode) {
    if (n_mc < 1) throw std::invalid_argument("n_mc must be >= 1");
    std::vector<SweepRow> acc(taus.size());
    for (size_t k = 0; k < taus.size(); ++k) acc[k].tau_g = taus[k];
    for (int r = 0; r < n_mc; ++r) {
        ModelParams m = model;
        std::optional<std::uint64_t> dropout_seed;
        if (mode == McMode::retrain) {
            GnnHyperParams h = model.hyper;
            h.seed = model.hyper.seed + static_cast<std::uint64_t>(r);
            m = train(fleet, h).params;
        } else {
            dropout_seed = model.hyper.seed + static_cast<std::uint64_t>(r);
        }
        // graphs[k][q]
        std::vector<std::vector<ToolGraph>> graphs(taus.size());
        for (const auto& t : fleet.tools) {
            std::vector<std::int64_t> pm;
            if (auto it = fleet.pm_logs.find(t.tool); it != fleet.pm_logs.end()) pm = it->second;
            auto gs = extract_graphs(t, m, taus, pm, dropout_seed);
            for (size_t k = 0; k < taus.size(); ++k) graphs[k].push_back(gs[k]);
        }
        for (size_t k = 0; k < taus.size(); ++k) {
            const auto Q = static_cast<Eigen::Index>(graphs[k].size());
            Matrix u = Matrix::Zero(Q, Q);
            for (Eigen::Index i = 0; i < Q; ++i)
                for (Eigen::Index j = i + 1; j < Q; ++j) u(i, j) = u(j, i) = graph_difference(graphs[k][i], graphs[k][j]);
            auto s = pairwise_stats(u, taus[k]);
            acc[k].max_score += s.max_score / n_mc;
            acc[k].min_score += s.min_score / n_mc;
            acc[k].std_score += s.std_score / n_mc;
        }
    }
    return acc;
}

double cross_method_correlation(const std::vector<double>& multi, const std::vector<double>& uni) {
    if (multi.size() != uni.size()) throw std::invalid_argument("tool score vectors differ in length");
    if (multi.size() < 3) return nan();
    return spearman(multi, uni);
}

double cross_method_pairwise(const Matrix& multi, const Matrix& uni) {
    if (multi.rows() != uni.rows() || multi.cols() != uni.cols()) throw std::invalid_argument("pairwise shape mismatch");
    if (multi.rows() < 3) return nan();
    std::vector<double> a, b;
    for (Eigen::Index i = 0; i < multi.rows(); ++i)
        for (Eigen::Index j = i + 1; j < multi.cols(); ++j) {
            if (std::isnan(multi(i, j)) || std::isnan(uni(i, j))) continue;
            a.push_back(multi(i, j));
            b.push_back(uni(i, j));
        }
    if (a.size() < 2) return nan();
    return spearman(a, b);
}

}  // namespace tttm
