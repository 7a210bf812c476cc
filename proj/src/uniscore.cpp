#include "tttm/uniscore.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <numeric>

#include <fftw3.h>

namespace tttm {

UniMethod parse_uni_method(const std::string& s) {
    if (s == "dbscan") return UniMethod::dbscan;
    if (s == "wd") return UniMethod::wd;
    if (s == "pd") return UniMethod::pd;
    throw std::invalid_argument("unknown univariate method: " + s);
}

std::string to_string(UniMethod m) {
    switch (m) {
        case UniMethod::dbscan: return "dbscan";
        case UniMethod::wd: return "wd";
        case UniMethod::pd: return "pd";
    }
    return "dbscan";
}

namespace {

std::vector<double> sorted_copy(const Vector& v) {
    std::vector<double> s(v.data(), v.data() + v.size());
    std::sort(s.begin(), s.end());
    return s;
}

double nan() { return std::numeric_limits<double>::quiet_NaN(); }

}  // namespace

KneeResult knee_epsilon(const Vector& points, int p_min) {
    const auto n = static_cast<int>(points.size());
    if (p_min < 1) throw std::invalid_argument("p_min must be >= 1");
    if (n <= p_min) throw std::invalid_argument("knee_epsilon needs more than p_min points");
    auto xs = sorted_copy(points);

    // k-th nearest other point on the line: merge outward from each position.
    std::vector<double> d(n);
    for (int i = 0; i < n; ++i) {
        int lo = i - 1, hi = i + 1;
        double cur = 0.0;
        for (int c = 0; c < p_min; ++c) {
            double dl = lo >= 0 ? xs[i] - xs[lo] : std::numeric_limits<double>::infinity();
            double dh = hi < n ? xs[hi] - xs[i] : std::numeric_limits<double>::infinity();
            if (dl <= dh) {
                cur = dl;
                --lo;
            } else {
                cur = dh;
                ++hi;
            }
        }
        d[i] = cur;
    }
    std::sort(d.begin(), d.end());

    const double x1 = n - 1, y0 = d.front(), y1 = d.back();
    int best = 0;
    double best_dist = -1.0;
    for (int i = 0; i < n; ++i) {
        double dist = std::abs((y1 - y0) * i - x1 * (d[i] - y0));
        if (dist > best_dist) {
            best_dist = dist;
            best = i;
        }
    }
    KneeResult r{d[best], false};
    if (r.eps <= 0) {
        auto it = std::find_if(d.begin(), d.end(), [](double v) { return v > 0; });
        if (it != d.end()) {
            r.eps = *it;
        } else {
            r.eps = std::numeric_limits<double>::epsilon();
            r.degenerate = true;
        }
    }
    return r;
}

ClusterLabels dbscan_cluster(const Vector& points, double eps, int min_pts) {
    if (!(eps > 0)) throw std::invalid_argument("eps must be > 0");
    if (min_pts < 1) throw std::invalid_argument("min_pts must be >= 1");
    const auto n = static_cast<int>(points.size());
    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return points[a] < points[b]; });
    std::vector<double> xs(n);
    for (int i = 0; i < n; ++i) xs[i] = points[order[i]];

    std::vector<char> core(n, 0);
    for (int i = 0; i < n; ++i) {
        auto lo = std::lower_bound(xs.begin(), xs.end(), xs[i] - eps);
        auto hi = std::upper_bound(xs.begin(), xs.end(), xs[i] + eps);
        core[i] = (hi - lo) >= min_pts;
    }

    // On the line, cores chain into one cluster exactly when consecutive cores lie within eps.
    std::vector<int> lab(n, -1);
    int cid = -1, prev = -1;
    std::vector<int> cores;
    for (int i = 0; i < n; ++i) {
        if (!core[i]) continue;
        if (prev < 0 || xs[i] - xs[prev] > eps) ++cid;
        lab[i] = cid;
        prev = i;
        cores.push_back(i);
    }
    // Border points join the nearest core in reach; ties go to the smaller value.
    for (int i = 0; i < n; ++i) {
        if (core[i] || cores.empty()) continue;
        auto p = std::lower_bound(cores.begin(), cores.end(), i) - cores.begin();
        double best = std::numeric_limits<double>::infinity();
        int pick = -1;
        for (auto c : {p - 1, p}) {
            if (c < 0 || c >= static_cast<long>(cores.size())) continue;
            double dd = std::abs(xs[cores[c]] - xs[i]);
            if (dd <= eps && dd < best) {
                best = dd;
                pick = cores[c];
            }
        }
        if (pick >= 0) lab[i] = lab[pick];
    }

    ClusterLabels out;
    out.labels.assign(n, -1);
    for (int i = 0; i < n; ++i) out.labels[order[i]] = lab[i];
    out.eps = eps;
    out.min_pts = min_pts;
    out.n_clusters = cid + 1;
    return out;
}

ReferenceCluster reference_cluster(const Vector& points, const ClusterLabels& labels) {
    if (labels.n_clusters == 0) throw std::runtime_error("no reference cluster: every point is noise");
    std::vector<int> count(labels.n_clusters, 0);
    std::vector<double> sum(labels.n_clusters, 0.0);
    for (size_t i = 0; i < labels.labels.size(); ++i) {
        int l = labels.labels[i];
        if (l < 0) continue;
        ++count[l];
        sum[l] += points[static_cast<Eigen::Index>(i)];
    }
    // Cluster ids follow value order, so the first maximum has the smaller centroid.
    int best = static_cast<int>(std::max_element(count.begin(), count.end()) - count.begin());
    return {best, sum[best] / count[best]};
}

DbscanSensorResult dbscan_sensor_score(const std::vector<SensorSeries>& slice, int p_min) {
    DbscanSensorResult r;
    Eigen::Index total = 0;
    for (const auto& s : slice) total += s.values.size();
    Vector all(total);
    Eigen::Index off = 0;
    for (const auto& s : slice) {
        all.segment(off, s.values.size()) = s.values;
        off += s.values.size();
    }
    if (slice.size() < 2) r.flags.push_back("single_tool");
    if (total <= p_min) {
        r.flags.push_back("insufficient_data");
        for (const auto& s : slice) {
            r.tools.push_back(s.tool);
            r.per_tool_rms.push_back(0.0);
        }
        return r;
    }
    auto knee = knee_epsilon(all, p_min);
    if (knee.degenerate) r.flags.push_back("degenerate_eps");
    r.eps = knee.eps;
    auto labels = dbscan_cluster(all, knee.eps, p_min);
    if (labels.n_clusters > 0) {
        r.centroid = reference_cluster(all, labels).centroid;
    } else {
        r.flags.push_back("no_reference_cluster");
        r.centroid = all.mean();
    }
    for (const auto& s : slice) {
        double rms = s.values.size() ? std::sqrt((s.values.array() - r.centroid).square().mean()) : 0.0;
        r.tools.push_back(s.tool);
        r.per_tool_rms.push_back(rms);
        r.score = std::max(r.score, rms);
    }
    if (slice.size() < 2) r.score = 0.0;
    return r;
}

double wasserstein1(const Vector& a, const Vector& b) {
    if (a.size() == 0 || b.size() == 0) throw std::invalid_argument("wasserstein1 needs non-empty samples");
    auto x = sorted_copy(a);
    auto y = sorted_copy(b);
    const double na = static_cast<double>(x.size()), nb = static_cast<double>(y.size());
    // Integral of |F - G| over the merged support.
    size_t i = 0, j = 0;
    double prev = std::min(x[0], y[0]);
    double total = 0.0;
    while (i < x.size() || j < y.size()) {
        double next;
        if (j >= y.size() || (i < x.size() && x[i] <= y[j]))
            next = x[i];
        else
            next = y[j];
        total += std::abs(i / na - j / nb) * (next - prev);
        while (i < x.size() && x[i] == next) ++i;
        while (j < y.size() && y[j] == next) ++j;
        prev = next;
    }
    return total;
}

Vector periodogram(const Vector& series, int pad_to) {
    const auto n = static_cast<int>(series.size());
    if (n < 2) throw std::invalid_argument("periodogram needs at least 2 points");
    if (pad_to < n) throw std::invalid_argument("pad_to must be >= series length");
    std::vector<double> in(pad_to, 0.0);
    std::copy(series.data(), series.data() + n, in.begin());
    const int m = pad_to / 2 + 1;
    std::vector<std::complex<double>> out(m);
    fftw_plan plan = fftw_plan_dft_r2c_1d(pad_to, in.data(), reinterpret_cast<fftw_complex*>(out.data()), FFTW_ESTIMATE);
    fftw_execute(plan);
    fftw_destroy_plan(plan);
    Vector p(m);
    for (int k = 0; k < m; ++k) p[k] = std::norm(out[k]) / pad_to;
    return p;
}

Vector lomb_scargle(const Vector& series, const std::vector<double>& t, int pad_to) {
    const auto n = static_cast<int>(series.size());
    if (n < 2) throw std::invalid_argument("lomb_scargle needs at least 2 points");
    if (static_cast<int>(t.size()) != n) throw std::invalid_argument("time vector length mismatch");
    if (pad_to < n) throw std::invalid_argument("pad_to must be >= series length");
    const int m = pad_to / 2 + 1;
    Vector p(m);
    const double tiny = 1e-12 * n;
    for (int k = 0; k < m; ++k) {
        double w = 2.0 * M_PI * k / pad_to;
        if (k == 0) {
            double s = series.sum();
            p[k] = s * s / n;
            continue;
        }
        double s2 = 0, c2 = 0;
        for (int i = 0; i < n; ++i) {
            s2 += std::sin(2 * w * t[i]);
            c2 += std::cos(2 * w * t[i]);
        }
        double tau = std::atan2(s2, c2) / (2 * w);
        double yc = 0, ys = 0, cc = 0, ss = 0;
        for (int i = 0; i < n; ++i) {
            double c = std::cos(w * (t[i] - tau)), s = std::sin(w * (t[i] - tau));
            yc += series[i] * c;
            ys += series[i] * s;
            cc += c * c;
            ss += s * s;
        }
        double a = cc > tiny ? yc * yc / cc : 0.0;
        double b = ss > tiny ? ys * ys / ss : 0.0;
        // Both quadratures present: halve, matching |DFT|^2/n on a regular grid.
        p[k] = (cc > tiny && ss > tiny) ? 0.5 * (a + b) : a + b;
    }
    return p * (static_cast<double>(n) / pad_to);
}

bool is_irregular(const std::vector<std::int64_t>& ts, double gap_factor) {
    if (ts.size() < 3) return false;
    std::vector<double> gaps;
    for (size_t i = 1; i < ts.size(); ++i) gaps.push_back(static_cast<double>(ts[i] - ts[i - 1]));
    auto g = gaps;
    std::nth_element(g.begin(), g.begin() + g.size() / 2, g.end());
    double med = g[g.size() / 2];
    if (med <= 0) return false;
    return *std::max_element(gaps.begin(), gaps.end()) > gap_factor * med;
}

namespace {

std::vector<double> scaled_times(const std::vector<std::int64_t>& ts) {
    std::vector<double> gaps;
    for (size_t i = 1; i < ts.size(); ++i) gaps.push_back(static_cast<double>(ts[i] - ts[i - 1]));
    double med = 1.0;
    if (!gaps.empty()) {
        std::nth_element(gaps.begin(), gaps.begin() + gaps.size() / 2, gaps.end());
        med = gaps[gaps.size() / 2] > 0 ? gaps[gaps.size() / 2] : 1.0;
    }
    std::vector<double> t;
    for (auto v : ts) t.push_back(static_cast<double>(v - ts.front()) / med);
    return t;
}

}  // namespace

double pd_distance(const SensorSeries& a, const SensorSeries& b, double gap_factor) {
    const int pad = static_cast<int>(std::max(a.values.size(), b.values.size()));
    bool ls = is_irregular(a.timestamps, gap_factor) || is_irregular(b.timestamps, gap_factor);
    Vector pa = ls ? lomb_scargle(a.values, scaled_times(a.timestamps), pad) : periodogram(a.values, pad);
    Vector pb = ls ? lomb_scargle(b.values, scaled_times(b.timestamps), pad) : periodogram(b.values, pad);
    return (pa - pb).norm();
}

namespace {

template <class Fn>
std::pair<SensorScores, PairDistances> pairwise_scores(const FleetDataset& fleet, UniMethod method, Fn fn) {
    SensorScores s;
    s.method = method;
    PairDistances d;
    for (const auto& t : fleet.tools) d.tools.push_back(t.tool);
    d.sensors = union_sensors(fleet);
    s.sensors = d.sensors;
    const auto Q = static_cast<Eigen::Index>(fleet.tools.size());
    for (const auto& sensor : d.sensors) {
        Matrix m = Matrix::Constant(Q, Q, nan());
        std::vector<int> rows(Q, -1);
        int owners = 0;
        for (Eigen::Index q = 0; q < Q; ++q) {
            rows[q] = fleet.tools[q].sensor_index(sensor);
            if (rows[q] >= 0) {
                ++owners;
                m(q, q) = 0.0;
            }
        }
        double best = 0.0;
        std::vector<std::string> flags;
        for (Eigen::Index q1 = 0; q1 < Q; ++q1) {
            if (rows[q1] < 0) continue;
            for (Eigen::Index q2 = q1 + 1; q2 < Q; ++q2) {
                if (rows[q2] < 0) continue;
                const auto& t1 = fleet.tools[q1];
                const auto& t2 = fleet.tools[q2];
                SensorSeries a{t1.tool, t1.values.row(rows[q1]).transpose(), t1.timestamps};
                SensorSeries b{t2.tool, t2.values.row(rows[q2]).transpose(), t2.timestamps};
                double v = fn(a, b);
                m(q1, q2) = m(q2, q1) = v;
                best = std::max(best, v);
            }
        }
        if (owners < 2) flags.push_back("single_tool");
        d.pair.push_back(m);
        s.scores.push_back(owners < 2 ? 0.0 : best);
        s.flags.push_back(flags);
    }
    return {s, d};
}

}  // namespace

std::pair<SensorScores, PairDistances> wd_sensor_scores(const FleetDataset& fleet) {
    return pairwise_scores(fleet, UniMethod::wd, [](const SensorSeries& a, const SensorSeries& b) {
        if (a.values.size() == 0 || b.values.size() == 0) return 0.0;
        return wasserstein1(a.values, b.values);
    });
}

std::pair<SensorScores, PairDistances> pd_sensor_scores(const FleetDataset& fleet, double gap_factor) {
    return pairwise_scores(fleet, UniMethod::pd, [gap_factor](const SensorSeries& a, const SensorSeries& b) {
        if (a.values.size() < 2 || b.values.size() < 2) return 0.0;
        return pd_distance(a, b, gap_factor);
    });
}

Matrix pairwise_tool_matrix(const PairDistances& d, const SensorScores& s, PairwiseMode mode) {
    const auto Q = static_cast<Eigen::Index>(d.tools.size());
    Matrix out = Matrix::Constant(Q, Q, nan());
    for (Eigen::Index q1 = 0; q1 < Q; ++q1) {
        for (Eigen::Index q2 = 0; q2 < Q; ++q2) {
            if (q1 == q2 && mode == PairwiseMode::pair_specific) {
                out(q1, q2) = 0.0;
                continue;
            }
            double sum = 0.0;
            int shared = 0;
            for (size_t k = 0; k < d.sensors.size(); ++k) {
                const Matrix& m = d.pair[k];
                // A tool owns the sensor exactly when its diagonal entry is defined.
                if (std::isnan(m(q1, q1)) || std::isnan(m(q2, q2))) continue;
                sum += mode == PairwiseMode::pair_specific ? m(q1, q2) : s.scores[k];
                ++shared;
            }
            if (shared > 0) out(q1, q2) = sum / shared;
        }
    }
    return out;
}

std::vector<double> aggregate_pairwise(const Matrix& pairwise) {
    std::vector<double> out;
    for (Eigen::Index q = 0; q < pairwise.rows(); ++q) {
        double sum = 0.0;
        int n = 0;
        for (Eigen::Index k = 0; k < pairwise.cols(); ++k) {
            if (std::isnan(pairwise(q, k))) continue;
            sum += pairwise(q, k);
            ++n;
        }
        out.push_back(n ? sum / n : nan());
    }
    return out;
}

std::vector<double> aggregate_sensor_scores(const FleetDataset& fleet, const SensorScores& s) {
    std::vector<double> out;
    for (const auto& t : fleet.tools) {
        double sum = 0.0;
        int n = 0;
        for (size_t k = 0; k < s.sensors.size(); ++k) {
            if (t.sensor_index(s.sensors[k]) < 0) continue;
            sum += s.scores[k];
            ++n;
        }
        out.push_back(n ? sum / n : nan());
    }
    return out;
}

ScoreReport score_fleet(const FleetDataset& fleet, UniMethod method, const UniConfig& cfg) {
    ScoreReport r;
    r.method = method;
    for (const auto& t : fleet.tools) r.tools.push_back(t.tool);
    if (method == UniMethod::dbscan) {
        SensorScores s;
        s.method = method;
        s.sensors = union_sensors(fleet);
        // tool -> sum of its own RMS deviations, for the per-tool aggregation
        std::vector<double> own(fleet.tools.size(), 0.0);
        std::vector<int> own_n(fleet.tools.size(), 0);
        r.tool_sensor = Matrix::Constant(static_cast<Eigen::Index>(fleet.tools.size()),
                                         static_cast<Eigen::Index>(s.sensors.size()), nan());
        for (const auto& sensor : s.sensors) {
            const auto col = static_cast<Eigen::Index>(s.scores.size());
            auto res = dbscan_sensor_score(sensor_slice(fleet, sensor), cfg.p_min);
            s.scores.push_back(res.score);
            s.flags.push_back(res.flags);
            for (size_t k = 0; k < res.tools.size(); ++k) {
                for (size_t q = 0; q < fleet.tools.size(); ++q) {
                    if (fleet.tools[q].tool != res.tools[k]) continue;
                    own[q] += res.per_tool_rms[k];
                    ++own_n[q];
                    r.tool_sensor(static_cast<Eigen::Index>(q), col) = res.per_tool_rms[k];
                }
            }
        }
        if (cfg.dbscan_tool_mode == DbscanToolMode::literal) {
            r.tool_scores = aggregate_sensor_scores(fleet, s);
        } else {
            for (size_t q = 0; q < own.size(); ++q) r.tool_scores.push_back(own_n[q] ? own[q] / own_n[q] : nan());
        }
        r.meta["dbscan_tool_mode"] = cfg.dbscan_tool_mode == DbscanToolMode::literal ? "literal" : "per_tool";
        r.sensor_scores = s;
    } else {
        auto [s, d] = method == UniMethod::wd ? wd_sensor_scores(fleet) : pd_sensor_scores(fleet, cfg.gap_factor);
        r.sensor_scores = s;
        r.pairwise = pairwise_tool_matrix(d, s, cfg.pairwise_mode);
        r.tool_scores = aggregate_pairwise(*r.pairwise);
        // mean distance to the other owners
        const auto Q = static_cast<Eigen::Index>(fleet.tools.size());
        r.tool_sensor = Matrix::Constant(Q, static_cast<Eigen::Index>(s.sensors.size()), nan());
        for (size_t k = 0; k < s.sensors.size(); ++k) {
            const Matrix& m = d.pair[k];
            for (Eigen::Index q = 0; q < Q; ++q) {
                if (std::isnan(m(q, q))) continue;
                double sum = 0.0;
                int n = 0;
                for (Eigen::Index o = 0; o < Q; ++o) {
                    if (o == q || std::isnan(m(o, o))) continue;
                    sum += m(q, o);
                    ++n;
                }
                r.tool_sensor(q, static_cast<Eigen::Index>(k)) = n ? sum / n : 0.0;
            }
        }
        r.meta["pairwise_mode"] = cfg.pairwise_mode == PairwiseMode::literal ? "literal" : "pair_specific";
    }
    r.meta["method"] = to_string(method);
    return r;
}

}  // namespace tttm
