#include "tttm/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <set>
#include <sstream>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

namespace tttm {

using json = nlohmann::json;
namespace fs = std::filesystem;

namespace {

double nan() { return std::numeric_limits<double>::quiet_NaN(); }

// JSON numbers carry the same 6 significant digits as the CSV writers.
json num(double v) {
    if (!std::isfinite(v)) return nullptr;
    return std::stod(fmt6(v));
}

template <class F>
auto stage(const char* name, F&& fn) -> decltype(fn()) {
    try {
        return fn();
    } catch (const StageError&) {
        throw;
    } catch (const EmptyResultError& e) {
        throw StageError(name, e.what(), exit_empty);
    } catch (const NumericError& e) {
        throw StageError(name, e.what(), exit_numeric);
    } catch (const std::exception& e) {
        throw StageError(name, e.what(), exit_usage);
    }
}

std::ofstream open_out(const std::string& path) {
    if (auto parent = fs::path(path).parent_path(); !parent.empty()) fs::create_directories(parent);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path);
    return out;
}

std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) f.push_back(cell);
    if (!line.empty() && line.back() == ',') f.emplace_back();
    return f;
}

double parse_num(const std::string& s, const std::string& path) {
    if (s == "nan" || s.empty()) return nan();
    try {
        size_t used = 0;
        double v = std::stod(s, &used);
        if (used != s.size()) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw ParseError(path + ": bad number '" + s + "'");
    }
}

std::string join(const std::vector<std::string>& v, char sep) {
    std::string out;
    for (size_t i = 0; i < v.size(); ++i) {
        if (i) out += sep;
        out += v[i];
    }
    return out;
}

std::string strip_cr(std::string s) {
    if (!s.empty() && s.back() == '\r') s.pop_back();
    return s;
}

int fragment_points(const TsumMatrix& t, const std::string& sensor) {
    return t.sensor_index(sensor) >= 0 ? t.n_points() : 0;
}

// Detrends every PM fragment on its own, keeping fragment order.
std::vector<SegmentFragment> detrend_fragments(std::vector<SegmentFragment> frags, const RunConfig& cfg,
                                               json* meta) {
    FleetDataset tmp;
    for (const auto& f : frags) tmp.tools.push_back(f.data);
    std::vector<DetrendLog> log;
    auto out = detrend_fleet(tmp, cfg.alpha, cfg.lambda, cfg.mk_one_sided, &log);
    for (size_t i = 0; i < frags.size(); ++i) frags[i].data.values = out.tools[i].values;
    if (meta) {
        int altered = 0, warned = 0;
        json deg = json::object();
        for (const auto& e : log) {
            if (e.altered) {
                ++altered;
                deg[std::to_string(e.degree)] = deg.value(std::to_string(e.degree), 0) + 1;
            }
            if (!e.warning.empty()) ++warned;
        }
        (*meta)["detrend"] = {{"status", "applied"}, {"series", log.size()}, {"altered", altered},
                              {"insufficient", warned}, {"degrees", deg}};
    }
    return frags;
}

FleetDataset reassemble(const std::vector<SegmentFragment>& frags, const FleetDataset& shape) {
    FleetDataset out;
    out.pm_logs = shape.pm_logs;
    for (const auto& t : shape.tools) {
        TsumMatrix m = t;
        Eigen::Index col = 0;
        for (const auto& f : frags) {
            if (f.segment.tool != t.tool) continue;
            const auto n = static_cast<Eigen::Index>(f.data.n_points());
            if (n) m.values.middleCols(col, n) = f.data.values;
            col += n;
        }
        out.tools.push_back(std::move(m));
    }
    return out;
}

Matrix divide(const Matrix& acc, const Matrix& weight) {
    Matrix out = acc;
    for (Eigen::Index i = 0; i < acc.rows(); ++i)
        for (Eigen::Index j = 0; j < acc.cols(); ++j) out(i, j) = weight(i, j) > 0 ? acc(i, j) / weight(i, j) : nan();
    return out;
}

json matrix_json(const Matrix& m) {
    json rows = json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        json r = json::array();
        for (Eigen::Index j = 0; j < m.cols(); ++j) r.push_back(num(m(i, j)));
        rows.push_back(r);
    }
    return rows;
}

}  // namespace

RunConfig config_from_json(const json& j, RunConfig c) {
    auto opt = [&j](const char* k, auto& v) {
        if (j.contains(k) && !j.at(k).is_null()) j.at(k).get_to(v);
    };
    opt("input", c.input);
    opt("pm_log_path", c.pm_log_path);
    opt("method", c.method);
    opt("tau", c.tau);
    opt("alpha", c.alpha);
    opt("lambda", c.lambda);
    opt("detrend_enabled", c.detrend_enabled);
    opt("mk_one_sided", c.mk_one_sided);
    opt("p_min", c.uni.p_min);
    opt("gap_factor", c.uni.gap_factor);
    opt("tau_g", c.tau_g);
    opt("out", c.out);
    opt("period", c.period);
    if (j.contains("pairwise_mode")) {
        auto s = j.at("pairwise_mode").get<std::string>();
        if (s != "pair_specific" && s != "literal") throw std::invalid_argument("unknown pairwise_mode: " + s);
        c.uni.pairwise_mode = s == "literal" ? PairwiseMode::literal : PairwiseMode::pair_specific;
    }
    if (j.contains("dbscan_tool_mode")) {
        auto s = j.at("dbscan_tool_mode").get<std::string>();
        if (s != "per_tool" && s != "literal") throw std::invalid_argument("unknown dbscan_tool_mode: " + s);
        c.uni.dbscan_tool_mode = s == "literal" ? DbscanToolMode::literal : DbscanToolMode::per_tool;
    }
    if (j.contains("e_max")) c.e_max = parse_emax(j.at("e_max").get<std::string>());
    static const std::set<std::string> methods{"dbscan", "wd", "pd", "mtadgat", "mtad_gat", "gdn"};
    if (!methods.count(c.method)) throw std::invalid_argument("unknown method: " + c.method);
    if (c.is_multivariate()) {
        auto seed = c.gnn.seed;
        Arch a = parse_arch(c.method);
        if (c.gnn.arch != a) c.gnn = GnnHyperParams::defaults_for(a);
        c.gnn.seed = seed;
    }
    if (j.contains("gnn")) {
        json g = j.at("gnn");
        if (c.is_multivariate()) g.erase("arch");
        from_json(g, c.gnn);
    }
    if (c.tau < 1) throw std::invalid_argument("tau must be >= 1");
    if (!(c.tau_g > 0 && c.tau_g <= 1)) throw std::invalid_argument("tau_g must be in (0,1]");
    return c;
}

json config_to_json(const RunConfig& c) {
    json g;
    to_json(g, c.gnn);
    json j{{"input", c.input},
           {"pm_log_path", c.pm_log_path},
           {"method", c.method},
           {"tau", c.tau},
           {"alpha", num(c.alpha)},
           {"lambda", num(c.lambda)},
           {"detrend_enabled", c.detrend_enabled},
           {"mk_one_sided", c.mk_one_sided},
           {"p_min", c.uni.p_min},
           {"gap_factor", num(c.uni.gap_factor)},
           {"pairwise_mode", c.uni.pairwise_mode == PairwiseMode::literal ? "literal" : "pair_specific"},
           {"dbscan_tool_mode", c.uni.dbscan_tool_mode == DbscanToolMode::literal ? "literal" : "per_tool"},
           {"tau_g", num(c.tau_g)},
           {"e_max", to_string(c.e_max)},
           {"period", c.period}};
    if (c.is_multivariate()) j["gnn"] = g;
    return j;
}

FleetDataset preprocess_fleet(const FleetDataset& fleet, const RunConfig& cfg, bool detrend, json* meta) {
    auto frags = split_by_pm(fleet);
    if (detrend && cfg.detrend_enabled) {
        frags = detrend_fragments(std::move(frags), cfg, meta);
    } else if (meta) {
        (*meta)["detrend"] = {{"status", cfg.detrend_enabled ? "bypassed" : "disabled"}};
    }
    NormalizeInfo info;
    auto out = minmax_normalize(reassemble(frags, fleet), &info);
    if (meta) (*meta)["normalize"] = {{"sensors", info.sensors.size()}, {"degenerate", info.degenerate}};
    return out;
}

ScoreReport score_segmented(const FleetDataset& fleet, UniMethod method, const RunConfig& cfg, json* meta) {
    auto frags = split_by_pm(fleet);
    const bool detrend = method != UniMethod::pd && cfg.detrend_enabled;
    if (detrend) {
        frags = detrend_fragments(std::move(frags), cfg, meta);
    } else if (meta) {
        (*meta)["detrend"] = {{"status", method == UniMethod::pd ? "bypassed" : "disabled"}};
    }

    std::map<int, FleetDataset> groups;
    for (auto& f : frags) {
        if (f.data.n_points() == 0) continue;
        groups[f.segment.ordinal].tools.push_back(f.data);
    }

    const auto sensors = union_sensors(fleet);
    const auto Q = static_cast<Eigen::Index>(fleet.tools.size());
    const auto N = static_cast<Eigen::Index>(sensors.size());
    auto tool_pos = [&](const std::string& t) {
        for (Eigen::Index q = 0; q < Q; ++q)
            if (fleet.tools[q].tool == t) return q;
        return Eigen::Index{-1};
    };
    auto sensor_pos = [&](const std::string& s) {
        return static_cast<Eigen::Index>(std::lower_bound(sensors.begin(), sensors.end(), s) - sensors.begin());
    };

    Matrix s_acc = Matrix::Zero(1, N), s_w = Matrix::Zero(1, N);
    Matrix t_acc = Matrix::Zero(1, Q), t_w = Matrix::Zero(1, Q);
    Matrix p_acc = Matrix::Zero(Q, Q), p_w = Matrix::Zero(Q, Q);
    Matrix ts_acc = Matrix::Zero(Q, N), ts_w = Matrix::Zero(Q, N);
    std::vector<std::set<std::string>> flags(static_cast<size_t>(N));
    json seg_meta = json::array();
    std::map<std::string, std::string> last_meta;
    int scored = 0;

    for (auto& [ordinal, g] : groups) {
        NormalizeInfo info;
        FleetDataset norm = minmax_normalize(g, &info);
        json gm{{"ordinal", ordinal}, {"tools", g.tools.size()}};
        if (g.tools.size() < 2) {
            gm["skipped"] = "fewer than 2 tools";
            seg_meta.push_back(gm);
            continue;
        }
        ScoreReport r = score_fleet(norm, method, cfg.uni);
        last_meta = r.meta;
        ++scored;
        std::vector<Eigen::Index> qpos;
        for (const auto& t : g.tools) qpos.push_back(tool_pos(t.tool));

        for (size_t k = 0; k < r.sensor_scores.sensors.size(); ++k) {
            const auto& s = r.sensor_scores.sensors[k];
            auto c = sensor_pos(s);
            double w = 0;
            for (const auto& t : g.tools) w += fragment_points(t, s);
            if (double v = r.sensor_scores.scores[k]; !std::isnan(v) && w > 0) {
                s_acc(0, c) += w * v;
                s_w(0, c) += w;
            }
            for (const auto& f : r.sensor_scores.flags[k]) flags[static_cast<size_t>(c)].insert(f);
            for (size_t i = 0; i < g.tools.size(); ++i) {
                double v = r.tool_sensor(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k));
                double wi = fragment_points(g.tools[i], s);
                if (std::isnan(v) || wi <= 0) continue;
                ts_acc(qpos[i], c) += wi * v;
                ts_w(qpos[i], c) += wi;
            }
        }
        for (size_t i = 0; i < g.tools.size(); ++i) {
            double v = r.tool_scores[i];
            double w = g.tools[i].n_points();
            if (std::isnan(v) || w <= 0) continue;
            t_acc(0, qpos[i]) += w * v;
            t_w(0, qpos[i]) += w;
            if (!r.pairwise) continue;
            for (size_t k = 0; k < g.tools.size(); ++k) {
                double pv = (*r.pairwise)(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k));
                double pw = w + g.tools[k].n_points();
                if (std::isnan(pv)) continue;
                p_acc(qpos[i], qpos[k]) += pw * pv;
                p_w(qpos[i], qpos[k]) += pw;
            }
        }
        seg_meta.push_back(gm);
    }
    if (scored == 0) throw EmptyResultError("no PM segment holds at least 2 tools");

    ScoreReport out;
    out.method = method;
    out.meta = last_meta;
    for (const auto& t : fleet.tools) out.tools.push_back(t.tool);
    out.sensor_scores.method = method;
    out.sensor_scores.sensors = sensors;
    Matrix s = divide(s_acc, s_w), t = divide(t_acc, t_w);
    for (Eigen::Index c = 0; c < N; ++c) {
        out.sensor_scores.scores.push_back(s(0, c));
        out.sensor_scores.flags.emplace_back(flags[static_cast<size_t>(c)].begin(), flags[static_cast<size_t>(c)].end());
    }
    for (Eigen::Index q = 0; q < Q; ++q) out.tool_scores.push_back(t(0, q));
    out.tool_sensor = divide(ts_acc, ts_w);
    if (method != UniMethod::dbscan) {
        Matrix p = divide(p_acc, p_w);
        if (cfg.uni.pairwise_mode == PairwiseMode::pair_specific)
            for (Eigen::Index q = 0; q < Q; ++q) p(q, q) = 0.0;
        out.pairwise = p;
    }
    if (meta) {
        (*meta)["segments"] = seg_meta;
        (*meta)["segment_groups_scored"] = scored;
    }
    return out;
}

MultiRun run_multivariate(const FleetDataset& normalized, const RunConfig& cfg) {
    MultiRun r;
    r.training = train(normalized, cfg.gnn);
    for (const auto& t : normalized.tools) {
        std::vector<std::int64_t> pm;
        if (auto it = normalized.pm_logs.find(t.tool); it != normalized.pm_logs.end()) pm = it->second;
        r.graphs.push_back(extract_graph(t, r.training.params, cfg.tau_g, pm));
    }
    r.e_max = compute_e_max(r.graphs, cfg.e_max);
    r.report = multivariate_scores(r.graphs, r.e_max.e_max);
    r.report.tau_g = cfg.tau_g;
    if (r.e_max.fallback) r.report.flags.push_back("e_max_fallback_complete");
    for (const auto& g : r.graphs)
        for (const auto& f : g.flags) r.report.flags.push_back(g.tool + ":" + f);
    return r;
}

json run_pipeline(const RunConfig& cfg) {
    json report;
    report["config"] = config_to_json(cfg);
    json stages = json::object();

    FleetDataset fleet = stage("ingest", [&] {
        if (cfg.input.empty()) throw std::invalid_argument("no input path");
        auto f = load_tsum(cfg.input);
        if (!cfg.pm_log_path.empty()) f.pm_logs = load_pm_log(cfg.pm_log_path);
        return f;
    });
    stages["ingest"] = {{"tools", fleet.n_tools()}};
    spdlog::info("ingest: {} tools", fleet.n_tools());

    fleet = stage("filter", [&] {
        auto f = filter_sparse(fleet, cfg.tau);
        if (f.tools.empty()) throw EmptyResultError("no tools after sparsity filter");
        return f;
    });
    stages["filter"] = {{"tau", cfg.tau}, {"tools", fleet.n_tools()}};
    json tool_list = json::array();
    for (const auto& t : fleet.tools) tool_list.push_back(t.tool);
    report["tools"] = tool_list;

    int pm_events = 0;
    for (const auto& [tool, ev] : fleet.pm_logs) pm_events += static_cast<int>(ev.size());
    stages["pm_split"] = {{"events", pm_events}};

    if (!cfg.is_multivariate()) {
        UniMethod m = parse_uni_method(cfg.method);
        json meta = json::object();
        ScoreReport r = stage("score", [&] { return score_segmented(fleet, m, cfg, &meta); });
        stages["detrend"] = meta["detrend"];
        stages["normalize"] = {{"scope", "per PM segment group"}};
        stages["score"] = {{"method", to_string(m)}, {"segments", meta["segments"]}};
        for (const auto& [k, v] : r.meta) stages["score"][k] = v;
        report["stages"] = stages;
        stage("write", [&] {
            write_score_report(cfg.out, r, report);
            return 0;
        });
        return report;
    }

    json meta = json::object();
    FleetDataset norm = stage("preprocess", [&] { return preprocess_fleet(fleet, cfg, true, &meta); });
    stages["detrend"] = meta["detrend"];
    stages["normalize"] = meta["normalize"];
    MultiRun run = stage("score", [&] { return run_multivariate(norm, cfg); });
    json loss = json::array();
    if (!run.training.loss_trace.empty()) {
        loss.push_back(num(run.training.loss_trace.front()));
        loss.push_back(num(run.training.loss_trace.back()));
    }
    stages["train"] = {{"arch", to_string(cfg.gnn.arch)},
                       {"windows", run.training.windows},
                       {"discarded_gap", run.training.discarded_gap},
                       {"loss_first_last", loss}};
    stages["score"] = {{"e_max_fallback", run.e_max.fallback}};
    report["stages"] = stages;
    stage("write", [&] {
        write_multi_report(cfg.out, run.report, report);
        fs::create_directories(fs::path(cfg.out) / "graphs");
        for (const auto& g : run.graphs) write_graph_csv(g, (fs::path(cfg.out) / "graphs" / (g.tool + ".csv")).string());
        return 0;
    });
    return report;
}

void write_json(const std::string& path, const json& j) {
    auto out = open_out(path);
    out << j.dump(2) << '\n';
}

void write_matrix_csv(const std::string& path, const std::vector<std::string>& labels, const Matrix& m) {
    auto out = open_out(path);
    out << "tool_id";
    for (const auto& l : labels) out << ',' << l;
    out << '\n';
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        out << labels[static_cast<size_t>(i)];
        for (Eigen::Index j = 0; j < m.cols(); ++j) out << ',' << fmt6(m(i, j));
        out << '\n';
    }
}

Matrix read_matrix_csv(const std::string& path, std::vector<std::string>* labels) {
    std::ifstream in(path);
    if (!in) throw NotFoundError("cannot open " + path);
    std::string line;
    if (!std::getline(in, line)) throw ParseError(path + ": empty file");
    auto head = split_csv(strip_cr(line));
    if (head.empty() || head[0] != "tool_id") throw ParseError(path + ": bad header");
    std::vector<std::string> names(head.begin() + 1, head.end());
    const auto n = static_cast<Eigen::Index>(names.size());
    Matrix m(n, n);
    Eigen::Index r = 0;
    while (std::getline(in, line)) {
        line = strip_cr(line);
        if (line.empty()) continue;
        auto f = split_csv(line);
        if (r >= n || static_cast<Eigen::Index>(f.size()) != n + 1 || f[0] != names[static_cast<size_t>(r)])
            throw ParseError(fmt::format("{}: malformed row {}", path, r + 2));
        for (Eigen::Index c = 0; c < n; ++c) m(r, c) = parse_num(f[static_cast<size_t>(c + 1)], path);
        ++r;
    }
    if (r != n) throw ParseError(path + ": matrix is not square");
    if (labels) *labels = names;
    return m;
}

void write_tool_scores(const std::string& path, const std::vector<std::string>& tools, const std::vector<double>& s) {
    auto out = open_out(path);
    out << "tool_id,score\n";
    for (size_t i = 0; i < tools.size(); ++i) out << tools[i] << ',' << fmt6(s[i]) << '\n';
}

std::pair<std::vector<std::string>, std::vector<double>> read_tool_scores(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw NotFoundError("cannot open " + path);
    std::string line;
    if (!std::getline(in, line) || strip_cr(line) != "tool_id,score") throw ParseError(path + ": bad header");
    std::pair<std::vector<std::string>, std::vector<double>> out;
    int ln = 1;
    while (std::getline(in, line)) {
        ++ln;
        line = strip_cr(line);
        if (line.empty()) continue;
        auto f = split_csv(line);
        if (f.size() != 2) throw ParseError(fmt::format("{}: malformed row {}", path, ln));
        out.first.push_back(f[0]);
        out.second.push_back(parse_num(f[1], path));
    }
    return out;
}

void write_sensor_scores(const std::string& path, const SensorScores& s) {
    auto out = open_out(path);
    out << "sensor_id,score,flags\n";
    for (size_t i = 0; i < s.sensors.size(); ++i)
        out << s.sensors[i] << ',' << fmt6(s.scores[i]) << ',' << join(s.flags[i], ';') << '\n';
}

SensorScores read_sensor_scores(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw NotFoundError("cannot open " + path);
    std::string line;
    if (!std::getline(in, line) || strip_cr(line) != "sensor_id,score,flags") throw ParseError(path + ": bad header");
    SensorScores s;
    int ln = 1;
    while (std::getline(in, line)) {
        ++ln;
        line = strip_cr(line);
        if (line.empty()) continue;
        auto f = split_csv(line);
        if (f.size() != 3) throw ParseError(fmt::format("{}: malformed row {}", path, ln));
        s.sensors.push_back(f[0]);
        s.scores.push_back(parse_num(f[1], path));
        std::vector<std::string> fl;
        std::stringstream ss(f[2]);
        std::string x;
        while (std::getline(ss, x, ';'))
            if (!x.empty()) fl.push_back(x);
        s.flags.push_back(fl);
    }
    // method is recorded in report.json next to the file
    if (auto meta = fs::path(path).parent_path() / "report.json"; fs::exists(meta)) {
        std::ifstream mj(meta);
        auto j = json::parse(mj, nullptr, false);
        if (!j.is_discarded() && j.contains("method")) s.method = parse_uni_method(j["method"].get<std::string>());
    }
    return s;
}

namespace {

void write_tool_sensor(const std::string& path, const std::vector<std::string>& tools,
                       const std::vector<std::string>& sensors, const Matrix& m) {
    auto out = open_out(path);
    out << "tool_id,sensor_id,score\n";
    for (Eigen::Index q = 0; q < m.rows(); ++q)
        for (Eigen::Index k = 0; k < m.cols(); ++k) {
            if (std::isnan(m(q, k))) continue;
            out << tools[static_cast<size_t>(q)] << ',' << sensors[static_cast<size_t>(k)] << ',' << fmt6(m(q, k))
                << '\n';
        }
}

std::map<std::pair<std::string, std::string>, double> read_tool_sensor(const std::string& path) {
    std::map<std::pair<std::string, std::string>, double> out;
    std::ifstream in(path);
    if (!in) return out;
    std::string line;
    std::getline(in, line);
    while (std::getline(in, line)) {
        auto f = split_csv(strip_cr(line));
        if (f.size() != 3) continue;
        out[{f[0], f[1]}] = parse_num(f[2], path);
    }
    return out;
}

}  // namespace

void write_score_report(const std::string& dir, const ScoreReport& r, const json& meta) {
    fs::create_directories(dir);
    const fs::path d(dir);
    write_sensor_scores((d / "sensor_scores.csv").string(), r.sensor_scores);
    write_tool_scores((d / "tool_scores.csv").string(), r.tools, r.tool_scores);
    if (r.pairwise) write_matrix_csv((d / "pairwise.csv").string(), r.tools, *r.pairwise);
    if (r.tool_sensor.size())
        write_tool_sensor((d / "tool_sensor_scores.csv").string(), r.tools, r.sensor_scores.sensors, r.tool_sensor);
    json j = meta;
    j["method"] = to_string(r.method);
    json ts = json::object();
    for (size_t i = 0; i < r.tools.size(); ++i) ts[r.tools[i]] = num(r.tool_scores[i]);
    j["tool_scores"] = ts;
    write_json((d / "report.json").string(), j);
}

void write_multi_report(const std::string& dir, const MultiScoreReport& r, const json& meta) {
    fs::create_directories(dir);
    const fs::path d(dir);
    write_tool_scores((d / "tool_scores.csv").string(), r.tools, r.tool_scores);
    write_matrix_csv((d / "pairwise.csv").string(), r.tools, r.pairwise);
    write_matrix_csv((d / "unnormalized.csv").string(), r.tools, r.unnormalized);
    json j = meta;
    if (!j.contains("method")) j["method"] = "multivariate";
    j["tau_g"] = num(r.tau_g);
    j["e_max"] = num(r.e_max);
    j["flags"] = r.flags;
    json ts = json::object();
    for (size_t i = 0; i < r.tools.size(); ++i) ts[r.tools[i]] = num(r.tool_scores[i]);
    j["tool_scores"] = ts;
    j["pairwise"] = matrix_json(r.pairwise);
    write_json((d / "report.json").string(), j);
}

std::string svg_line_chart(const std::string& title, const std::vector<std::string>& xlabels,
                           const std::vector<TrendSeries>& series, const std::string& ylabel) {
    static const char* palette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd",
                                    "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};
    constexpr double W = 720, H = 400, L = 70, R = 150, T = 40, B = 60;
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (const auto& s : series)
        for (double v : s.scores)
            if (std::isfinite(v)) {
                lo = std::min(lo, v);
                hi = std::max(hi, v);
            }
    if (!std::isfinite(lo)) lo = 0, hi = 1;
    if (hi - lo < 1e-12) lo -= 0.5, hi += 0.5;
    const auto nx = xlabels.size();
    auto X = [&](size_t i) { return L + (nx > 1 ? (W - L - R) * static_cast<double>(i) / (nx - 1) : (W - L - R) / 2); };
    auto Y = [&](double v) { return T + (H - T - B) * (1 - (v - lo) / (hi - lo)); };
    auto esc = [](const std::string& s) {
        std::string o;
        for (char c : s) {
            if (c == '<') o += "&lt;";
            else if (c == '>') o += "&gt;";
            else if (c == '&') o += "&amp;";
            else o += c;
        }
        return o;
    };

    std::string o = fmt::format(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{}\" height=\"{}\" viewBox=\"0 0 {} {}\" "
        "font-family=\"sans-serif\" font-size=\"12\">\n",
        W, H, W, H);
    o += fmt::format("<rect width=\"{}\" height=\"{}\" fill=\"white\"/>\n", W, H);
    o += fmt::format("<text x=\"{}\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">{}</text>\n", W / 2, esc(title));
    o += fmt::format("<line x1=\"{0}\" y1=\"{1}\" x2=\"{0}\" y2=\"{2}\" stroke=\"black\"/>\n", L, T, H - B);
    o += fmt::format("<line x1=\"{0}\" y1=\"{1}\" x2=\"{2}\" y2=\"{1}\" stroke=\"black\"/>\n", L, H - B, W - R);
    for (int k = 0; k <= 4; ++k) {
        double v = lo + (hi - lo) * k / 4.0;
        o += fmt::format("<text x=\"{}\" y=\"{:.1f}\" text-anchor=\"end\">{}</text>\n", L - 6, Y(v) + 4, fmt6(v));
        o += fmt::format("<line x1=\"{}\" y1=\"{:.1f}\" x2=\"{}\" y2=\"{:.1f}\" stroke=\"#dddddd\"/>\n", L, Y(v), W - R,
                         Y(v));
    }
    for (size_t i = 0; i < nx; ++i)
        o += fmt::format("<text x=\"{:.1f}\" y=\"{}\" text-anchor=\"middle\">{}</text>\n", X(i), H - B + 18,
                         esc(xlabels[i]));
    o += fmt::format("<text x=\"16\" y=\"{}\" transform=\"rotate(-90 16 {})\" text-anchor=\"middle\">{}</text>\n",
                     (H - B + T) / 2, (H - B + T) / 2, esc(ylabel));
    for (size_t k = 0; k < series.size(); ++k) {
        const char* col = palette[k % std::size(palette)];
        const auto& s = series[k];
        std::string pts;
        auto flush = [&] {
            if (!pts.empty())
                o += fmt::format("<polyline fill=\"none\" stroke=\"{}\" stroke-width=\"2\" points=\"{}\"/>\n", col, pts);
            pts.clear();
        };
        for (size_t i = 0; i < s.scores.size() && i < nx; ++i) {
            if (!std::isfinite(s.scores[i])) {
                flush();
                continue;
            }
            if (!pts.empty()) pts += ' ';
            pts += fmt::format("{:.1f},{:.1f}", X(i), Y(s.scores[i]));
            o += fmt::format("<circle cx=\"{:.1f}\" cy=\"{:.1f}\" r=\"3\" fill=\"{}\"/>\n", X(i), Y(s.scores[i]), col);
        }
        flush();
        double ly = T + 16.0 * static_cast<double>(k);
        o += fmt::format("<line x1=\"{}\" y1=\"{:.1f}\" x2=\"{}\" y2=\"{:.1f}\" stroke=\"{}\" stroke-width=\"2\"/>\n",
                         W - R + 10, ly, W - R + 30, ly, col);
        o += fmt::format("<text x=\"{}\" y=\"{:.1f}\">{}</text>\n", W - R + 36, ly + 4, esc(s.entity));
    }
    o += "</svg>\n";
    return o;
}

TrendOutput trend_report(const std::vector<std::string>& dirs, const std::vector<std::string>& labels,
                         const std::string& out_dir, int top_k) {
    if (dirs.size() < 2) throw std::invalid_argument("trend_report needs at least 2 periods");
    if (labels.size() != dirs.size()) throw std::invalid_argument("one label per report directory");
    if (std::set<std::string>(labels.begin(), labels.end()).size() != labels.size())
        throw std::invalid_argument("period labels must be unique");
    if (top_k < 1) throw std::invalid_argument("top_k must be >= 1");

    const size_t P = dirs.size();
    std::vector<std::map<std::string, double>> tool_scores(P);
    std::vector<std::map<std::pair<std::string, std::string>, double>> ts(P);
    std::set<std::string> tools;
    for (size_t p = 0; p < P; ++p) {
        auto [names, vals] = read_tool_scores((fs::path(dirs[p]) / "tool_scores.csv").string());
        for (size_t i = 0; i < names.size(); ++i) {
            tool_scores[p][names[i]] = vals[i];
            tools.insert(names[i]);
        }
        ts[p] = read_tool_sensor((fs::path(dirs[p]) / "tool_sensor_scores.csv").string());
    }

    TrendOutput out;
    for (const auto& t : tools) {
        TrendSeries s{t, labels, {}};
        for (size_t p = 0; p < P; ++p) {
            auto it = tool_scores[p].find(t);
            s.scores.push_back(it == tool_scores[p].end() ? nan() : it->second);
        }
        out.tools.push_back(s);
    }

    // peak (period, tool): the largest tool score, earliest period and first tool on ties
    double best = -std::numeric_limits<double>::infinity();
    size_t peak_p = 0;
    std::string peak_tool;
    for (size_t p = 0; p < P; ++p)
        for (const auto& s : out.tools)
            if (std::isfinite(s.scores[p]) && s.scores[p] > best) {
                best = s.scores[p];
                peak_p = p;
                peak_tool = s.entity;
            }
    out.peak_period = labels[peak_p];

    std::set<std::pair<std::string, std::string>> pairs;
    for (const auto& m : ts)
        for (const auto& [k, v] : m) pairs.insert(k);
    for (const auto& [tool, sensor] : pairs) {
        TrendSeries s{tool + "/" + sensor, labels, {}};
        for (size_t p = 0; p < P; ++p) {
            auto it = ts[p].find({tool, sensor});
            s.scores.push_back(it == ts[p].end() ? nan() : it->second);
        }
        double lo = std::numeric_limits<double>::infinity(), hi = -lo;
        for (double v : s.scores)
            if (std::isfinite(v)) lo = std::min(lo, v), hi = std::max(hi, v);
        for (double& v : s.scores)
            if (std::isfinite(v)) v = hi > lo ? (v - lo) / (hi - lo) : 0.0;
        out.sensors.push_back(s);
    }

    std::vector<std::pair<double, std::string>> ranked;
    for (const auto& [k, v] : ts[peak_p])
        if (k.first == peak_tool && std::isfinite(v)) ranked.emplace_back(v, k.second);
    std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
    for (size_t i = 0; i < ranked.size() && static_cast<int>(i) < top_k; ++i) out.drilldown.push_back(ranked[i].second);

    fs::create_directories(out_dir);
    const fs::path d(out_dir);
    {
        auto f = open_out((d / "tool_trend.csv").string());
        f << "tool_id";
        for (const auto& l : labels) f << ',' << l;
        f << '\n';
        for (const auto& s : out.tools) {
            f << s.entity;
            for (double v : s.scores) f << ',' << fmt6(v);
            f << '\n';
        }
    }
    {
        auto f = open_out((d / "sensor_trend.csv").string());
        f << "tool_id,sensor_id";
        for (const auto& l : labels) f << ',' << l;
        f << '\n';
        for (const auto& s : out.sensors) {
            auto slash = s.entity.find('/');
            f << s.entity.substr(0, slash) << ',' << s.entity.substr(slash + 1);
            for (double v : s.scores) f << ',' << fmt6(v);
            f << '\n';
        }
    }
    for (const auto& s : out.tools) {
        auto f = open_out((d / ("trend_" + s.entity + ".svg")).string());
        f << svg_line_chart("Tool score trend: " + s.entity, labels, {s}, "tool score");
    }
    {
        auto f = open_out((d / "trend_all_tools.svg").string());
        f << svg_line_chart("Tool score trend", labels, out.tools, "tool score");
    }
    std::vector<TrendSeries> drill;
    for (const auto& sensor : out.drilldown)
        for (const auto& s : out.sensors)
            if (s.entity == peak_tool + "/" + sensor) drill.push_back(s);
    {
        auto f = open_out((d / "drilldown.svg").string());
        f << svg_line_chart(fmt::format("Top sensors for {} in {}", peak_tool, out.peak_period), labels, drill,
                            "normalized sensor score");
    }
    json j{{"periods", labels},
           {"peak_period", out.peak_period},
           {"peak_tool", peak_tool},
           {"peak_score", num(best)},
           {"drilldown", out.drilldown}};
    write_json((d / "trend.json").string(), j);
    return out;
}

}  // namespace tttm
