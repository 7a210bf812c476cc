#include "tttm/preprocess.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

#include <boost/math/distributions/normal.hpp>
#include <fmt/format.h>

namespace tttm {

std::string to_string(Trend t) {
    switch (t) {
        case Trend::up: return "up";
        case Trend::down: return "down";
        case Trend::none: return "none";
    }
    return "none";
}

FleetDataset filter_sparse(const FleetDataset& fleet, int tau) {
    if (tau < 1) throw std::invalid_argument("tau must be >= 1");
    FleetDataset out;
    out.pm_logs = fleet.pm_logs;
    for (const auto& t : fleet.tools)
        if (t.n_points() >= tau) out.tools.push_back(t);
    return out;
}

namespace {

TsumMatrix columns(const TsumMatrix& t, int from, int to) {
    TsumMatrix f;
    f.tool = t.tool;
    f.sensors = t.sensors;
    f.values = t.values.middleCols(from, to - from);
    f.timestamps.assign(t.timestamps.begin() + from, t.timestamps.begin() + to);
    f.run_ids.assign(t.run_ids.begin() + from, t.run_ids.begin() + to);
    return f;
}

}  // namespace

std::vector<SegmentFragment> split_by_pm(const FleetDataset& fleet) {
    constexpr auto lo = std::numeric_limits<std::int64_t>::min();
    constexpr auto hi = std::numeric_limits<std::int64_t>::max();
    std::vector<SegmentFragment> out;
    for (const auto& t : fleet.tools) {
        std::vector<std::int64_t> cuts;
        if (auto it = fleet.pm_logs.find(t.tool); it != fleet.pm_logs.end()) cuts = it->second;
        if (!std::is_sorted(cuts.begin(), cuts.end())) throw std::invalid_argument("PM log for " + t.tool + " not sorted");
        std::int64_t start = lo;
        int col = 0;
        for (size_t k = 0; k <= cuts.size(); ++k) {
            std::int64_t end = k < cuts.size() ? cuts[k] : hi;
            int stop = col;
            while (stop < t.n_points() && t.timestamps[stop] < end) ++stop;
            // A run stamped exactly at the PM time belongs to the after-PM segment.
            PmSegment seg{t.tool, start, end, k == 0 ? Phase::before_pm : Phase::after_pm, static_cast<int>(k)};
            out.push_back({seg, columns(t, col, stop)});
            col = stop;
            start = end;
        }
    }
    return out;
}

MkResult mann_kendall(const Vector& x, double alpha, bool one_sided) {
    const auto n = x.size();
    if (n < 3) throw InsufficientDataError("Mann-Kendall needs at least 3 points");
    if (!(alpha > 0 && alpha < 1)) throw std::invalid_argument("alpha must be in (0,1)");
    MkResult r;
    r.alpha = alpha;
    long long s = 0;
    for (Eigen::Index j1 = 1; j1 < n; ++j1)
        for (Eigen::Index j2 = 0; j2 < j1; ++j2) {
            double d = x[j1] - x[j2];
            s += (d > 0) - (d < 0);
        }
    r.z_prime = s;

    std::vector<double> v(x.data(), x.data() + n);
    std::sort(v.begin(), v.end());
    double ties = 0.0;
    for (size_t i = 0; i < v.size();) {
        size_t k = i;
        while (k < v.size() && v[k] == v[i]) ++k;
        double t = static_cast<double>(k - i);
        ties += t * (t - 1) * (2 * t + 5);
        i = k;
    }
    double nn = static_cast<double>(n);
    double var = (nn * (nn - 1) * (2 * nn + 5) - ties) / 18.0;
    if (s == 0 || var <= 0) {
        r.z_stat = 0.0;
    } else if (s > 0) {
        r.z_stat = (static_cast<double>(s) - 1) / std::sqrt(var);
    } else {
        r.z_stat = (static_cast<double>(s) + 1) / std::sqrt(var);
    }
    boost::math::normal_distribution<double> nd;
    if (one_sided) {
        double crit = boost::math::quantile(nd, 1 - alpha);
        r.reject_h0 = r.z_stat >= crit;
        r.trend = r.reject_h0 ? Trend::up : Trend::none;
    } else {
        double crit = boost::math::quantile(nd, 1 - alpha / 2);
        r.reject_h0 = std::abs(r.z_stat) >= crit;
        r.trend = !r.reject_h0 ? Trend::none : (r.z_stat > 0 ? Trend::up : Trend::down);
    }
    return r;
}

double TrendModel::predict(double j) const {
    double y = intercept;
    double p = 1.0;
    for (int d = 0; d < degree; ++d) {
        p *= j;
        y += coefficients[d] * (p - feature_mean[d]) / feature_scale[d];
    }
    return y;
}

namespace {

TrendModel fit_ridge(const Vector& y, int degree, double lambda) {
    const auto n = y.size();
    Matrix X(n, degree);
    for (Eigen::Index j = 0; j < n; ++j) {
        double p = 1.0;
        for (int d = 0; d < degree; ++d) {
            p *= static_cast<double>(j);
            X(j, d) = p;
        }
    }
    TrendModel m;
    m.degree = degree;
    m.lambda = lambda;
    m.feature_mean = X.colwise().mean().transpose();
    m.feature_scale.resize(degree);
    for (int d = 0; d < degree; ++d) {
        X.col(d).array() -= m.feature_mean[d];
        double s = std::sqrt(X.col(d).squaredNorm() / static_cast<double>(n));
        m.feature_scale[d] = s > 0 ? s : 1.0;
        X.col(d) /= m.feature_scale[d];
    }
    // Centered features make the unpenalized intercept the sample mean.
    m.intercept = y.mean();
    Vector yc = y.array() - m.intercept;
    Matrix A(n + degree, degree);
    A.topRows(n) = X;
    A.bottomRows(degree) = std::sqrt(lambda) * Matrix::Identity(degree, degree);
    Vector b = Vector::Zero(n + degree);
    b.head(n) = yc;
    Eigen::ColPivHouseholderQR<Matrix> qr(A);
    if (lambda == 0.0 && qr.rank() < degree) throw std::runtime_error("singular normal equations: regularization required");
    m.coefficients = qr.solve(b);
    double ss_tot = yc.squaredNorm();
    double ss_res = (yc - X * m.coefficients).squaredNorm();
    m.r2 = ss_tot > 0 ? 1.0 - ss_res / ss_tot : 1.0;
    m.bias = m.predict(0.0);
    return m;
}

}  // namespace

std::pair<Vector, TrendModel> detrend(const Vector& series, double lambda) {
    if (series.size() < 4) throw InsufficientDataError("detrend needs at least 4 points");
    if (lambda < 0) throw std::invalid_argument("lambda must be >= 0");
    TrendModel best;
    bool have = false;
    for (int d = 1; d <= 3; ++d) {
        auto m = fit_ridge(series, d, lambda);
        if (!have || m.r2 > best.r2) {
            best = m;
            have = true;
        }
    }
    Vector out(series.size());
    for (Eigen::Index j = 0; j < series.size(); ++j)
        out[j] = series[j] - best.predict(static_cast<double>(j)) + best.bias;
    return {out, best};
}

FleetDataset detrend_fleet(const FleetDataset& fleet, double alpha, double lambda, bool one_sided,
                           std::vector<DetrendLog>* log) {
    FleetDataset out = fleet;
    for (auto& t : out.tools) {
        for (int i = 0; i < t.n_sensors(); ++i) {
            DetrendLog entry{t.tool, t.sensors[i], {}, 0, false, ""};
            Vector row = t.values.row(i).transpose();
            try {
                entry.mk = mann_kendall(row, alpha, one_sided);
                if (entry.mk.reject_h0) {
                    auto [y, model] = detrend(row, lambda);
                    t.values.row(i) = y.transpose();
                    entry.degree = model.degree;
                    entry.altered = true;
                }
            } catch (const InsufficientDataError& e) {
                entry.warning = e.what();
            }
            if (log) log->push_back(entry);
        }
    }
    return out;
}

FleetDataset minmax_normalize(const FleetDataset& fleet, NormalizeInfo* info) {
    FleetDataset out = fleet;
    auto sensors = union_sensors(fleet);
    NormalizeInfo local;
    local.sensors = sensors;
    for (const auto& s : sensors) {
        double lo = std::numeric_limits<double>::infinity();
        double hi = -lo;
        for (const auto& t : fleet.tools) {
            int i = t.sensor_index(s);
            if (i < 0 || t.n_points() == 0) continue;
            lo = std::min(lo, t.values.row(i).minCoeff());
            hi = std::max(hi, t.values.row(i).maxCoeff());
        }
        bool degenerate = !(hi > lo);
        if (degenerate) local.degenerate.push_back(s);
        local.lo.push_back(lo);
        local.hi.push_back(hi);
        for (auto& t : out.tools) {
            int i = t.sensor_index(s);
            if (i < 0) continue;
            if (degenerate)
                t.values.row(i).setZero();
            else
                t.values.row(i) = (t.values.row(i).array() - lo) / (hi - lo);
        }
    }
    if (info) *info = local;
    return out;
}

}  // namespace tttm
