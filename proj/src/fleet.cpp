#include "tttm/fleet.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>
#include <tuple>

#include <fmt/format.h>

namespace tttm {

namespace {

std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            out.push_back(cur);
            cur.clear();
        } else if (c != '\r') {
            cur.push_back(c);
        }
    }
    out.push_back(cur);
    for (auto& s : out) {
        auto b = s.find_first_not_of(" \t");
        auto e = s.find_last_not_of(" \t");
        s = b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
    }
    return out;
}

std::int64_t parse_int(const std::string& s, int line) {
    try {
        size_t pos = 0;
        long long v = std::stoll(s, &pos);
        if (pos != s.size()) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw ParseError(fmt::format("line {}: bad integer '{}'", line, s));
    }
}

double parse_double(const std::string& s, int line) {
    try {
        size_t pos = 0;
        double v = std::stod(s, &pos);
        if (pos != s.size() || !std::isfinite(v)) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw ParseError(fmt::format("line {}: bad value '{}'", line, s));
    }
}

void check_header(const std::string& line, const std::vector<std::string>& want) {
    auto got = split_csv(line);
    if (got != want) {
        std::string w;
        for (size_t i = 0; i < want.size(); ++i) w += (i ? "," : "") + want[i];
        throw ParseError(fmt::format("line 1: expected header '{}'", w));
    }
}

}  // namespace

int TsumMatrix::sensor_index(const std::string& s) const {
    auto it = std::lower_bound(sensors.begin(), sensors.end(), s);
    if (it == sensors.end() || *it != s) return -1;
    return static_cast<int>(it - sensors.begin());
}

const TsumMatrix* FleetDataset::find(const std::string& tool) const {
    for (const auto& t : tools)
        if (t.tool == tool) return &t;
    return nullptr;
}

Statistic parse_statistic(const std::string& name) {
    if (name == "mean") return Statistic::mean;
    if (name == "median") return Statistic::median;
    if (name == "stdev") return Statistic::stdev;
    if (name == "max") return Statistic::max;
    if (name == "min") return Statistic::min;
    if (name == "range") return Statistic::range;
    throw std::invalid_argument("unknown statistic: " + name);
}

std::string to_string(Statistic s) {
    switch (s) {
        case Statistic::mean: return "mean";
        case Statistic::median: return "median";
        case Statistic::stdev: return "stdev";
        case Statistic::max: return "max";
        case Statistic::min: return "min";
        case Statistic::range: return "range";
    }
    return "mean";
}

FleetDataset parse_tsum(std::istream& in) {
    std::string line;
    if (!std::getline(in, line)) return {};
    check_header(line, {"tool_id", "sensor_id", "run_id", "timestamp", "value"});

    // tool -> timestamp -> (run id, sensor -> value)
    struct Column {
        std::string run;
        std::map<std::string, double> vals;
    };
    std::map<std::string, std::map<std::int64_t, Column>> rows;
    std::map<std::string, std::set<std::string>> sensors;
    int ln = 1;
    while (std::getline(in, line)) {
        ++ln;
        if (line.empty() || line == "\r") continue;
        auto f = split_csv(line);
        if (f.size() != 5) throw ParseError(fmt::format("line {}: expected 5 fields, got {}", ln, f.size()));
        if (f[0].empty() || f[1].empty()) throw ParseError(fmt::format("line {}: empty tool or sensor id", ln));
        auto ts = parse_int(f[3], ln);
        double v = parse_double(f[4], ln);
        auto& col = rows[f[0]][ts];
        if (col.vals.empty()) {
            col.run = f[2];
        } else if (col.run != f[2]) {
            throw ParseError(fmt::format("line {}: run id '{}' conflicts with '{}' at the same timestamp", ln, f[2], col.run));
        }
        if (!col.vals.emplace(f[1], v).second)
            throw ParseError(fmt::format("line {}: duplicate key ({}, {}, {})", ln, f[0], f[1], ts));
        sensors[f[0]].insert(f[1]);
    }

    FleetDataset fleet;
    for (auto& [tool, cols] : rows) {
        TsumMatrix t;
        t.tool = tool;
        t.sensors.assign(sensors[tool].begin(), sensors[tool].end());
        // A timestamp missing some sensor is dropped whole: missing data is absent columns.
        std::vector<const std::pair<const std::int64_t, Column>*> keep;
        for (const auto& kv : cols)
            if (kv.second.vals.size() == t.sensors.size()) keep.push_back(&kv);
        t.values.resize(t.n_sensors(), static_cast<Eigen::Index>(keep.size()));
        for (size_t j = 0; j < keep.size(); ++j) {
            t.timestamps.push_back(keep[j]->first);
            t.run_ids.push_back(keep[j]->second.run);
            int i = 0;
            for (const auto& [s, v] : keep[j]->second.vals) t.values(i++, static_cast<Eigen::Index>(j)) = v;
        }
        fleet.tools.push_back(std::move(t));
    }
    return fleet;
}

FleetDataset load_tsum(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw NotFoundError("cannot open " + path);
    return parse_tsum(in);
}

void write_tsum(const FleetDataset& fleet, std::ostream& out) {
    out << "tool_id,sensor_id,run_id,timestamp,value\n";
    for (const auto& t : fleet.tools)
        for (int j = 0; j < t.n_points(); ++j)
            for (int i = 0; i < t.n_sensors(); ++i)
                out << t.tool << ',' << t.sensors[i] << ',' << t.run_ids[j] << ',' << t.timestamps[j] << ','
                    << fmt6(t.values(i, j)) << '\n';
}

void save_tsum(const FleetDataset& fleet, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw NotFoundError("cannot write " + path);
    write_tsum(fleet, out);
}

std::map<std::string, std::vector<std::int64_t>> load_pm_log(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw NotFoundError("cannot open " + path);
    std::string line;
    std::map<std::string, std::vector<std::int64_t>> logs;
    if (!std::getline(in, line)) return logs;
    check_header(line, {"tool_id", "timestamp"});
    int ln = 1;
    while (std::getline(in, line)) {
        ++ln;
        if (line.empty() || line == "\r") continue;
        auto f = split_csv(line);
        if (f.size() != 2) throw ParseError(fmt::format("line {}: expected 2 fields", ln));
        logs[f[0]].push_back(parse_int(f[1], ln));
    }
    for (auto& [k, v] : logs) std::sort(v.begin(), v.end());
    return logs;
}

void save_pm_log(const std::map<std::string, std::vector<std::int64_t>>& logs, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw NotFoundError("cannot write " + path);
    out << "tool_id,timestamp\n";
    for (const auto& [tool, ts] : logs)
        for (auto t : ts) out << tool << ',' << t << '\n';
}

std::vector<TraceBlock> load_traces(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw NotFoundError("cannot open " + path);
    std::string line;
    if (!std::getline(in, line)) return {};
    check_header(line, {"tool_id", "sensor_id", "run_id", "sample_index", "value"});
    // (tool, run) -> sensor -> sample -> value
    std::map<std::pair<std::string, std::string>, std::map<std::string, std::map<std::int64_t, double>>> acc;
    std::vector<std::pair<std::string, std::string>> order;
    int ln = 1;
    while (std::getline(in, line)) {
        ++ln;
        if (line.empty() || line == "\r") continue;
        auto f = split_csv(line);
        if (f.size() != 5) throw ParseError(fmt::format("line {}: expected 5 fields, got {}", ln, f.size()));
        auto key = std::make_pair(f[0], f[2]);
        if (!acc.count(key)) order.push_back(key);
        auto& row = acc[key][f[1]];
        if (!row.emplace(parse_int(f[3], ln), parse_double(f[4], ln)).second)
            throw ParseError(fmt::format("line {}: duplicate sample index", ln));
    }
    std::vector<TraceBlock> out;
    std::map<std::string, std::int64_t> ordinal;
    for (const auto& key : order) {
        const auto& per = acc[key];
        TraceBlock b;
        b.tool = key.first;
        b.run = key.second;
        size_t len = 0;
        for (const auto& [s, row] : per) {
            b.sensors.push_back(s);
            len = std::max(len, row.size());
        }
        b.samples = Matrix::Constant(static_cast<Eigen::Index>(b.sensors.size()), static_cast<Eigen::Index>(len),
                                     std::nan(""));
        int i = 0;
        for (const auto& [s, row] : per) {
            if (row.size() != len) throw ShapeError("run " + b.run + ": ragged sample counts across sensors");
            int j = 0;
            for (const auto& [idx, v] : row) b.samples(i, j++) = v;
            ++i;
        }
        b.end_time = ordinal[b.tool]++;
        out.push_back(std::move(b));
    }
    return out;
}

double apply_statistic(const Vector& row, Statistic stat) {
    const auto n = row.size();
    if (n == 0) throw ShapeError("empty trace row");
    switch (stat) {
        case Statistic::mean: return row.mean();
        case Statistic::median: {
            std::vector<double> v(row.data(), row.data() + n);
            std::sort(v.begin(), v.end());
            return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
        }
        case Statistic::stdev: {
            double m = row.mean();
            return std::sqrt((row.array() - m).square().mean());
        }
        case Statistic::max: return row.maxCoeff();
        case Statistic::min: return row.minCoeff();
        case Statistic::range: return row.maxCoeff() - row.minCoeff();
    }
    return 0.0;
}

TsumMatrix tst_encode(const std::vector<TraceBlock>& traces, Statistic stat) {
    TsumMatrix t;
    if (traces.empty()) return t;
    t.tool = traces.front().tool;
    t.sensors = traces.front().sensors;
    std::vector<size_t> perm(t.sensors.size());
    std::iota(perm.begin(), perm.end(), 0);
    std::sort(perm.begin(), perm.end(), [&](size_t a, size_t b) { return t.sensors[a] < t.sensors[b]; });
    std::vector<std::string> sorted;
    for (auto p : perm) sorted.push_back(t.sensors[p]);

    std::vector<const TraceBlock*> blocks;
    for (const auto& b : traces) {
        if (b.tool != t.tool) throw ShapeError("traces span more than one tool");
        if (b.sensors != traces.front().sensors) throw ShapeError("run " + b.run + ": sensor set differs");
        if (b.samples.rows() != static_cast<Eigen::Index>(b.sensors.size()))
            throw ShapeError("run " + b.run + ": sensor count mismatch");
        blocks.push_back(&b);
    }
    std::stable_sort(blocks.begin(), blocks.end(),
                     [](const TraceBlock* a, const TraceBlock* b) { return a->end_time < b->end_time; });
    t.values.resize(static_cast<Eigen::Index>(sorted.size()), static_cast<Eigen::Index>(blocks.size()));
    for (size_t j = 0; j < blocks.size(); ++j) {
        for (size_t i = 0; i < perm.size(); ++i)
            t.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
                apply_statistic(blocks[j]->samples.row(static_cast<Eigen::Index>(perm[i])).transpose(), stat);
        t.timestamps.push_back(blocks[j]->end_time);
        t.run_ids.push_back(blocks[j]->run);
    }
    t.sensors = sorted;
    return t;
}

std::vector<std::string> union_sensors(const FleetDataset& fleet) {
    std::set<std::string> s;
    for (const auto& t : fleet.tools) s.insert(t.sensors.begin(), t.sensors.end());
    return {s.begin(), s.end()};
}

std::vector<SensorSeries> sensor_slice(const FleetDataset& fleet, const std::string& sensor) {
    std::vector<SensorSeries> out;
    bool known = false;
    for (const auto& t : fleet.tools) {
        int i = t.sensor_index(sensor);
        if (i < 0) continue;
        known = true;
        out.push_back({t.tool, t.values.row(i).transpose(), t.timestamps});
    }
    if (!known) throw NotFoundError("unknown sensor " + sensor);
    return out;
}

std::string fmt6(double v) {
    if (std::isnan(v)) return "nan";
    if (v == 0.0) return "0";
    return fmt::format("{:.6g}", v);
}

}  // namespace tttm
