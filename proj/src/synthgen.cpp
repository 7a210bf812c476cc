#include "tttm/synthgen.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <set>

#include <fmt/format.h>

namespace tttm {

using nlohmann::json;

DeviationKind parse_deviation(const std::string& s) {
    if (s == "mean_shift") return DeviationKind::mean_shift;
    if (s == "variance_inflation") return DeviationKind::variance_inflation;
    if (s == "extra_mode") return DeviationKind::extra_mode;
    if (s == "linear_trend") return DeviationKind::linear_trend;
    if (s == "poly_trend") return DeviationKind::poly_trend;
    throw std::invalid_argument("unknown deviation kind: " + s);
}

std::string to_string(DeviationKind k) {
    switch (k) {
        case DeviationKind::mean_shift: return "mean_shift";
        case DeviationKind::variance_inflation: return "variance_inflation";
        case DeviationKind::extra_mode: return "extra_mode";
        case DeviationKind::linear_trend: return "linear_trend";
        case DeviationKind::poly_trend: return "poly_trend";
    }
    return "mean_shift";
}

std::string tool_name(int q) { return fmt::format("T{:02d}", q + 1); }
std::string sensor_name(int s) { return fmt::format("S{:02d}", s + 1); }

int SynthSpec::points_for(int q) const {
    if (points_per_tool.empty()) return 0;
    if (points_per_tool.size() == 1) return points_per_tool[0];
    return points_per_tool.at(static_cast<size_t>(q));
}

void SynthSpec::validate() const {
    if (q_tools < 2) throw std::invalid_argument("q_tools must be >= 2");
    if (n_sensors < 1) throw std::invalid_argument("n_sensors must be >= 1");
    if (points_per_tool.size() != 1 && static_cast<int>(points_per_tool.size()) != q_tools)
        throw std::invalid_argument("points_per_tool needs 1 or q_tools entries");
    for (int p : points_per_tool)
        if (p < 0) throw std::invalid_argument("points_per_tool must be >= 0");
    if (!baseline.empty() && static_cast<int>(baseline.size()) != n_sensors)
        throw std::invalid_argument("baseline needs one entry per sensor");
    for (const auto& b : baseline)
        if (b.stdev < 0) throw std::invalid_argument("baseline stdev must be >= 0");
    std::set<std::string> tools, sensors;
    for (int q = 0; q < q_tools; ++q) tools.insert(tool_name(q));
    for (int s = 0; s < n_sensors; ++s) sensors.insert(sensor_name(s));
    for (const auto& d : deviations) {
        if (!tools.count(d.tool)) throw std::invalid_argument("deviation targets unknown tool " + d.tool);
        if (!(d.magnitude > 0)) throw std::invalid_argument("deviation magnitude must be > 0");
        for (const auto& s : d.sensors)
            if (!sensors.count(s)) throw std::invalid_argument("deviation targets unknown sensor " + s);
    }
    for (const auto& b : correlation_blocks) {
        if (!(b.rho >= 0 && b.rho < 1)) throw std::invalid_argument("block rho must be in [0,1)");
        for (const auto& s : b.sensors)
            if (!sensors.count(s)) throw std::invalid_argument("block names unknown sensor " + s);
    }
    for (const auto& e : pm_events)
        if (!tools.count(e.tool)) throw std::invalid_argument("PM event for unknown tool " + e.tool);
    if (!(outlier_rate >= 0 && outlier_rate <= 1)) throw std::invalid_argument("outlier_rate must be in [0,1]");
    if (duration <= 0) throw std::invalid_argument("duration must be > 0");
    for (int q = 0; q < q_tools; ++q) {
        int p = points_for(q);
        if (p == 0) continue;
        std::int64_t first = start_time, last = start_time + (duration * (p - 1)) / p;
        for (const auto& m : missing_spans)
            if (m.tool == tool_name(q) && m.start <= first && m.end > last)
                throw std::invalid_argument("missing span removes every point of " + m.tool);
    }
    for (const auto& [tool, drop] : missing_sensors) {
        if (!tools.count(tool)) throw std::invalid_argument("missing_sensors names unknown tool " + tool);
        if (static_cast<int>(drop.size()) >= n_sensors) throw std::invalid_argument("tool " + tool + " would have no sensors");
    }
}

void to_json(json& j, const SynthSpec& s) {
    j = json::object();
    j["q_tools"] = s.q_tools;
    j["n_sensors"] = s.n_sensors;
    j["points_per_tool"] = s.points_per_tool;
    json b = json::array();
    for (const auto& x : s.baseline) b.push_back({{"mean", x.mean}, {"stdev", x.stdev}});
    j["baseline"] = b;
    json d = json::array();
    for (const auto& x : s.deviations)
        d.push_back({{"tool", x.tool}, {"sensors", x.sensors}, {"kind", to_string(x.kind)}, {"magnitude", x.magnitude}});
    j["deviations"] = d;
    json c = json::array();
    for (const auto& x : s.correlation_blocks) c.push_back({{"sensors", x.sensors}, {"rho", x.rho}});
    j["correlation_blocks"] = c;
    json p = json::array();
    for (const auto& x : s.pm_events) p.push_back({{"tool", x.tool}, {"timestamp", x.timestamp}, {"shift", x.shift}});
    j["pm_events"] = p;
    json m = json::array();
    for (const auto& x : s.missing_spans) m.push_back({{"tool", x.tool}, {"start", x.start}, {"end", x.end}});
    j["missing_spans"] = m;
    j["missing_sensors"] = s.missing_sensors;
    j["outlier_rate"] = s.outlier_rate;
    j["outlier_lo"] = s.outlier_lo;
    j["outlier_hi"] = s.outlier_hi;
    j["start_time"] = s.start_time;
    j["duration"] = s.duration;
    j["seed"] = s.seed;
}

void from_json(const json& j, SynthSpec& s) {
    s = SynthSpec{};
    auto opt = [&j](const char* k, auto& v) {
        if (j.contains(k)) j.at(k).get_to(v);
    };
    opt("q_tools", s.q_tools);
    opt("n_sensors", s.n_sensors);
    if (j.contains("points_per_tool")) {
        const auto& p = j.at("points_per_tool");
        s.points_per_tool = p.is_array() ? p.get<std::vector<int>>() : std::vector<int>{p.get<int>()};
    }
    if (j.contains("baseline"))
        for (const auto& x : j.at("baseline")) s.baseline.push_back({x.at("mean").get<double>(), x.at("stdev").get<double>()});
    if (j.contains("deviations"))
        for (const auto& x : j.at("deviations")) {
            DeviationSpec d;
            d.tool = x.at("tool").get<std::string>();
            d.sensors = x.at("sensors").get<std::vector<std::string>>();
            d.kind = parse_deviation(x.at("kind").get<std::string>());
            d.magnitude = x.at("magnitude").get<double>();
            s.deviations.push_back(d);
        }
    if (j.contains("correlation_blocks"))
        for (const auto& x : j.at("correlation_blocks"))
            s.correlation_blocks.push_back({x.at("sensors").get<std::vector<std::string>>(), x.at("rho").get<double>()});
    if (j.contains("pm_events"))
        for (const auto& x : j.at("pm_events"))
            s.pm_events.push_back({x.at("tool").get<std::string>(), x.at("timestamp").get<std::int64_t>(),
                                   x.value("shift", 0.0)});
    if (j.contains("missing_spans"))
        for (const auto& x : j.at("missing_spans"))
            s.missing_spans.push_back(
                {x.at("tool").get<std::string>(), x.at("start").get<std::int64_t>(), x.at("end").get<std::int64_t>()});
    opt("missing_sensors", s.missing_sensors);
    opt("outlier_rate", s.outlier_rate);
    opt("outlier_lo", s.outlier_lo);
    opt("outlier_hi", s.outlier_hi);
    opt("start_time", s.start_time);
    opt("duration", s.duration);
    opt("seed", s.seed);
}

json truth_to_json(const GroundTruth& t) {
    json labels = json::array();
    for (const auto& l : t.labels)
        labels.push_back({{"tool", l.tool}, {"sensor", l.sensor}, {"kind", to_string(l.kind)}, {"magnitude", l.magnitude}});
    json base = json::array();
    for (const auto& b : t.baseline) base.push_back({{"mean", b.mean}, {"stdev", b.stdev}});
    return {{"labels", labels}, {"baseline", base}};
}

std::pair<FleetDataset, GroundTruth> generate_fleet(const SynthSpec& spec) {
    spec.validate();
    const int N = spec.n_sensors;
    GroundTruth truth;
    truth.baseline = spec.baseline;
    if (truth.baseline.empty()) {
        std::seed_seq ss{static_cast<std::uint32_t>(spec.seed), static_cast<std::uint32_t>(spec.seed >> 32), 0xBA5Eu};
        std::mt19937_64 rng(ss);
        std::uniform_real_distribution<double> mu(-5.0, 5.0), sd(0.5, 2.0);
        for (int s = 0; s < N; ++s) {
            double m = mu(rng);
            truth.baseline.push_back({m, sd(rng)});
        }
    }
    std::map<std::string, int> sidx;
    for (int s = 0; s < N; ++s) sidx[sensor_name(s)] = s;
    std::vector<int> block_of(N, -1);
    for (size_t b = 0; b < spec.correlation_blocks.size(); ++b)
        for (const auto& s : spec.correlation_blocks[b].sensors) block_of[sidx[s]] = static_cast<int>(b);

    FleetDataset fleet;
    for (int q = 0; q < spec.q_tools; ++q) {
        const std::string tool = tool_name(q);
        const int p = spec.points_for(q);
        // Per-tool stream: tools can be generated independently.
        std::seed_seq ss{static_cast<std::uint32_t>(spec.seed), static_cast<std::uint32_t>(spec.seed >> 32),
                         static_cast<std::uint32_t>(q + 1)};
        std::mt19937_64 rng(ss);
        std::normal_distribution<double> gauss(0.0, 1.0);

        Matrix z(N, p);
        Matrix common(static_cast<Eigen::Index>(spec.correlation_blocks.size()), p);
        for (Eigen::Index j = 0; j < p; ++j) {
            for (Eigen::Index b = 0; b < common.rows(); ++b) common(b, j) = gauss(rng);
            for (int s = 0; s < N; ++s) {
                double e = gauss(rng);
                if (block_of[s] >= 0) {
                    double rho = spec.correlation_blocks[block_of[s]].rho;
                    e = std::sqrt(rho) * common(block_of[s], j) + std::sqrt(1 - rho) * e;
                }
                z(s, j) = e;
            }
        }
        // Inflation first so later shifts are not scaled.
        for (int pass = 0; pass < 2; ++pass)
            for (const auto& d : spec.deviations) {
                if (d.tool != tool) continue;
                bool infl = d.kind == DeviationKind::variance_inflation;
                if ((pass == 0) != infl) continue;
                for (const auto& sn : d.sensors) {
                    int s = sidx[sn];
                    // Extra-mode membership is a fair coin per point, drawn on its own stream so
                    // the second mode carries no temporal structure.
                    std::seed_seq ms{static_cast<std::uint32_t>(spec.seed), static_cast<std::uint32_t>(spec.seed >> 32),
                                     static_cast<std::uint32_t>(q + 1), static_cast<std::uint32_t>(s + 1), 0x6d6fu};
                    std::mt19937_64 mode_rng(ms);
                    std::bernoulli_distribution coin(0.5);
                    for (Eigen::Index j = 0; j < p; ++j) {
                        double u = p > 1 ? static_cast<double>(j) / (p - 1) : 0.0;
                        switch (d.kind) {
                            case DeviationKind::variance_inflation: z(s, j) *= std::sqrt(d.magnitude); break;
                            case DeviationKind::mean_shift: z(s, j) += d.magnitude; break;
                            case DeviationKind::extra_mode:
                                if (coin(mode_rng)) z(s, j) += d.magnitude;
                                break;
                            case DeviationKind::linear_trend: z(s, j) += d.magnitude * u; break;
                            case DeviationKind::poly_trend: z(s, j) += d.magnitude * u * u; break;
                        }
                    }
                    truth.labels.push_back({tool, sn, d.kind, d.magnitude});
                }
            }
        if (spec.outlier_rate > 0) {
            std::uniform_real_distribution<double> unit(0.0, 1.0), mag(spec.outlier_lo, spec.outlier_hi);
            for (Eigen::Index j = 0; j < p; ++j)
                for (int s = 0; s < N; ++s)
                    if (unit(rng) < spec.outlier_rate) z(s, j) = (unit(rng) < 0.5 ? -1.0 : 1.0) * mag(rng);
        }

        TsumMatrix t;
        t.tool = tool;
        std::vector<std::int64_t> ts(p);
        for (int j = 0; j < p; ++j) ts[j] = spec.start_time + (spec.duration * j) / std::max(p, 1);
        std::vector<double> step(p, 0.0);
        for (const auto& e : spec.pm_events)
            if (e.tool == tool) {
                fleet.pm_logs[tool].push_back(e.timestamp);
                for (int j = 0; j < p; ++j)
                    if (ts[j] >= e.timestamp) step[j] += e.shift;
            }
        if (auto it = fleet.pm_logs.find(tool); it != fleet.pm_logs.end()) std::sort(it->second.begin(), it->second.end());

        std::vector<int> keep_cols;
        for (int j = 0; j < p; ++j) {
            bool gone = false;
            for (const auto& m : spec.missing_spans)
                if (m.tool == tool && ts[j] >= m.start && ts[j] < m.end) gone = true;
            if (!gone) keep_cols.push_back(j);
        }
        std::vector<int> keep_rows;
        const auto ms = spec.missing_sensors.find(tool);
        for (int s = 0; s < N; ++s) {
            if (ms != spec.missing_sensors.end() &&
                std::find(ms->second.begin(), ms->second.end(), sensor_name(s)) != ms->second.end())
                continue;
            keep_rows.push_back(s);
            t.sensors.push_back(sensor_name(s));
        }
        t.values.resize(static_cast<Eigen::Index>(keep_rows.size()), static_cast<Eigen::Index>(keep_cols.size()));
        for (size_t c = 0; c < keep_cols.size(); ++c) {
            int j = keep_cols[c];
            t.timestamps.push_back(ts[j]);
            t.run_ids.push_back(fmt::format("{}-R{:04d}", tool, j + 1));
            for (size_t r = 0; r < keep_rows.size(); ++r) {
                int s = keep_rows[r];
                const auto& b = truth.baseline[s];
                t.values(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = b.mean + b.stdev * (z(s, j) + step[j]);
            }
        }
        fleet.tools.push_back(std::move(t));
    }
    return {fleet, truth};
}

SynthSpec paper_scale_preset() {
    SynthSpec s;
    s.q_tools = 9;
    s.n_sensors = 24;
    // 2,419 runs over one month spread across the nine tools.
    s.points_per_tool.clear();
    for (int q = 0; q < 9; ++q) s.points_per_tool.push_back(2419 / 9 + (q < 2419 % 9 ? 1 : 0));
    return s;
}

SynthSpec desk_scale(const SynthSpec& spec) {
    SynthSpec s = spec;
    for (auto& p : s.points_per_tool) p /= 10;
    return s;
}

}  // namespace tttm
