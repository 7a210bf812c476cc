// Acceptance harness: one PASS/FAIL line per criterion. Pass criterion numbers
// as arguments to run a subset.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <fmt/core.h>
#include <spdlog/spdlog.h>

#include "oracles.hpp"
#include "test_util.hpp"
#include "tttm/evalkit.hpp"
#include "tttm/multiscore.hpp"
#include "tttm/pipeline.hpp"
#include "tttm/synthgen.hpp"

using namespace tttm;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

double mean(const std::vector<double>& v) {
    return v.empty() ? std::nan("") : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double median(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

Vector random_vec(std::mt19937_64& rng, int n, bool ties) {
    std::normal_distribution<double> nd;
    Vector v(n);
    for (int i = 0; i < n; ++i) v[i] = ties ? std::round(nd(rng) * 4) / 4 : nd(rng);
    return v;
}

// Runs the univariate scoring path on an in-memory fleet, as the pipeline does.
ScoreReport uni_scores(const FleetDataset& fleet, UniMethod m) {
    RunConfig cfg;
    cfg.method = to_string(m);
    return score_segmented(fleet, m, cfg, nullptr);
}

// ---------------------------------------------------------------------------

Outcome c1_wasserstein() {
    auto t0 = Clock::now();
    std::mt19937_64 rng(101);
    std::uniform_int_distribution<int> size(1, 8);
    double worst = 0.0;
    for (int trial = 0; trial < 500; ++trial) {
        Vector a = random_vec(rng, size(rng), trial % 3 == 0);
        Vector b = random_vec(rng, size(rng), trial % 3 == 0);
        std::vector<double> va(a.data(), a.data() + a.size()), vb(b.data(), b.data() + b.size());
        worst = std::max(worst, std::abs(wasserstein1(a, b) - oracle::w1_assignment(va, vb)));
    }
    double secs = seconds_since(t0);
    return {worst <= 1e-9 && secs < 10.0, fmt::format("500 pairs, max abs error {:.3g}, {:.2f} s", worst, secs)};
}

Outcome c2_dbscan() {
    std::mt19937_64 rng(202);
    std::uniform_int_distribution<int> size(1, 60), pts(1, 5);
    std::uniform_real_distribution<double> eps(0.02, 0.6);
    int match = 0;
    for (int trial = 0; trial < 200; ++trial) {
        int n = size(rng);
        Vector x = random_vec(rng, n, trial % 2 == 0);
        if (trial % 4 == 1) x.head(n / 2).array() += 5.0;
        double e = eps(rng);
        int m = pts(rng);
        auto got = dbscan_cluster(x, e, m);
        auto want = oracle::dbscan_reachability(std::vector<double>(x.data(), x.data() + n), e, m);
        match += oracle::same_partition(got.labels, want);
    }
    return {match == 200, fmt::format("{}/200 datasets match the reachability oracle", match)};
}

Outcome c3_mann_kendall() {
    std::mt19937_64 rng(303);
    std::normal_distribution<double> nd;
    int reject = 0;
    const int runs = 10000;
    for (int r = 0; r < runs; ++r) {
        Vector x(30);
        for (int i = 0; i < 30; ++i) x[i] = nd(rng);
        reject += mann_kendall(x, 0.05).reject_h0;
    }
    double rate = static_cast<double>(reject) / runs;
    int mono = 0;
    std::exponential_distribution<double> step(1.0);
    for (int r = 0; r < 200; ++r) {
        Vector x(30);
        double v = nd(rng);
        for (int i = 0; i < 30; ++i) x[i] = (v += step(rng));
        if (r % 2) x = -x;
        mono += mann_kendall(x, 0.05).reject_h0;
    }
    return {rate >= 0.03 && rate <= 0.07 && mono == 200,
            fmt::format("iid rejection {:.2f}%, monotone rejection {}/200", 100 * rate, mono)};
}

Outcome c4_detrend() {
    std::mt19937_64 rng(404);
    std::uniform_real_distribution<double> coef(-2.0, 2.0);
    std::uniform_int_distribution<int> len(20, 300);
    double worst = 0.0;
    for (int deg = 1; deg <= 3; ++deg)
        for (int trial = 0; trial < 50; ++trial) {
            int n = len(rng);
            std::vector<double> c(static_cast<size_t>(deg) + 1);
            for (auto& v : c) v = coef(rng);
            if (std::abs(c.back()) < 0.2) c.back() = 0.2;
            Vector y(n);
            for (int j = 0; j < n; ++j) {
                double u = static_cast<double>(j) / n, s = 0, p = 1;
                for (double a : c) {
                    s += a * p;
                    p *= u;
                }
                y[j] = 5.0 * s;
            }
            auto [r, model] = detrend(y, 1e-8);
            double vin = (y.array() - y.mean()).square().mean();
            double vout = (r.array() - r.mean()).square().mean();
            worst = std::max(worst, vout / vin);
        }
    return {worst < 1e-10, fmt::format("150 polynomials, worst residual/input variance {:.3g}", worst)};
}

// Mean shift 0-4 sigma on even sensors, variance inflation 1-4x on odd ones, one random tool each.
SynthSpec sweep_spec(std::uint64_t seed) {
    SynthSpec s = paper_scale_preset();
    s.seed = seed;
    std::mt19937_64 rng(seed * 7919 + 1);
    std::uniform_int_distribution<int> tool(0, s.q_tools - 1);
    for (int k = 0; k < s.n_sensors; ++k) {
        double frac = static_cast<double>(k / 2) / (s.n_sensors / 2 - 1);
        DeviationSpec d;
        d.tool = tool_name(tool(rng));
        d.sensors = {sensor_name(k)};
        if (k % 2 == 0) {
            d.kind = DeviationKind::mean_shift;
            d.magnitude = 4.0 * frac;
        } else {
            d.kind = DeviationKind::variance_inflation;
            d.magnitude = 1.0 + 3.0 * frac;
        }
        if (d.kind == DeviationKind::mean_shift ? d.magnitude > 0 : d.magnitude > 1) s.deviations.push_back(d);
    }
    return s;
}

SynthSpec modes_spec(std::uint64_t seed) {
    SynthSpec s = paper_scale_preset();
    s.seed = seed;
    std::mt19937_64 rng(seed * 104729 + 3);
    std::uniform_int_distribution<int> tool(0, s.q_tools - 1);
    for (int k = 0; k < s.n_sensors; ++k) {
        double mag = 4.0 * k / (s.n_sensors - 1);
        if (mag > 0) s.deviations.push_back({tool_name(tool(rng)), {sensor_name(k)}, DeviationKind::extra_mode, mag});
    }
    return s;
}

constexpr double kModeBandwidth = 0.02;

Outcome c5_correlation() {
    auto t0 = Clock::now();
    const UniMethod methods[] = {UniMethod::dbscan, UniMethod::wd, UniMethod::pd};
    std::map<UniMethod, std::vector<double>> rho_var, rho_modes;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        auto [fleet, truth] = generate_fleet(sweep_spec(500 + seed));
        auto norm = minmax_normalize(fleet);
        auto sensors = union_sensors(norm);
        std::vector<double> var;
        for (const auto& s : sensors) var.push_back(cross_tool_variance(norm, s));
        for (auto m : methods) rho_var[m].push_back(spearman(uni_scores(fleet, m).sensor_scores.scores, var));

        auto [mf, mt] = generate_fleet(modes_spec(900 + seed));
        auto mnorm = minmax_normalize(mf);
        std::vector<double> modes;
        for (const auto& s : sensors) modes.push_back(mode_count(mnorm, s, kModeBandwidth));
        for (auto m : {UniMethod::dbscan, UniMethod::wd}) {
            double r = spearman(uni_scores(mf, m).sensor_scores.scores, modes);
            if (std::isfinite(r)) rho_modes[m].push_back(r);
        }
    }
    double db = mean(rho_var[UniMethod::dbscan]), wd = mean(rho_var[UniMethod::wd]), pd = mean(rho_var[UniMethod::pd]);
    double mdb = mean(rho_modes[UniMethod::dbscan]), mwd = mean(rho_modes[UniMethod::wd]);
    double secs = seconds_since(t0);
    bool ok = db >= 0.85 && wd >= 0.85 && pd > 0 && pd < std::min(db, wd) && mdb >= 0.3 && mwd >= 0.3 && secs < 300;
    return {ok, fmt::format("variance rho dbscan {:.3f} wd {:.3f} pd {:.3f}; modes rho dbscan {:.3f} wd {:.3f} "
                            "(B_w {}); {:.1f} s",
                            db, wd, pd, mdb, mwd, kModeBandwidth, secs)};
}

Outcome c6_baseline() {
    const UniMethod methods[] = {UniMethod::dbscan, UniMethod::wd, UniMethod::pd};
    bool ok = true;
    std::string detail;
    for (auto m : methods) {
        double worst_ratio = 0.0, clean_max = 0.0, dev_min = std::numeric_limits<double>::infinity();
        for (std::uint64_t seed = 0; seed < 10; ++seed) {
            SynthSpec s = paper_scale_preset();
            s.seed = 600 + seed;
            auto [clean, t0] = generate_fleet(s);
            auto r = uni_scores(clean, m);
            double med = median(r.tool_scores);
            double mx = *std::max_element(r.tool_scores.begin(), r.tool_scores.end());
            worst_ratio = std::max(worst_ratio, mx / med);
            for (double v : r.sensor_scores.scores) clean_max = std::max(clean_max, v);
            for (auto kind : {DeviationKind::mean_shift, DeviationKind::extra_mode}) {
                SynthSpec d = s;
                d.deviations = {{tool_name(static_cast<int>(seed % 9)), {sensor_name(static_cast<int>(seed % 24))}, kind, 3.0}};
                auto rd = uni_scores(generate_fleet(d).first, m);
                dev_min = std::min(dev_min, rd.sensor_scores.scores[seed % 24]);
            }
        }
        bool pass = worst_ratio < 2.0 && clean_max < dev_min;
        ok = ok && pass;
        detail += fmt::format("{}: max/median {:.2f}, clean max {:.4g} < deviated min {:.4g}{}; ", to_string(m),
                              worst_ratio, clean_max, dev_min, pass ? "" : " (fails)");
    }
    detail.resize(detail.size() - 2);
    return {ok, detail};
}

Outcome c7_gradients() {
    std::mt19937_64 rng(707);
    std::uniform_int_distribution<int> nsens(1, 4), zdim(2, 6), hdim(2, 6);
    std::normal_distribution<double> nd;
    double worst = 0.0;
    int models = 0;
    for (Arch a : {Arch::mtad_gat, Arch::gdn})
        for (int trial = 0; trial < 20; ++trial) {
            int n = nsens(rng);
            GnnHyperParams h = GnnHyperParams::defaults_for(a);
            h.window = 5;
            h.kernel = 3;
            h.embed_dim = zdim(rng);
            h.gru_units = hdim(rng);
            h.head_units = hdim(rng);
            h.dropout = 0.0;
            h.seed = static_cast<std::uint64_t>(trial) + 1000 * static_cast<std::uint64_t>(a == Arch::gdn);
            std::vector<std::string> sensors;
            for (int i = 0; i < n; ++i) sensors.push_back("s" + std::to_string(i));
            ModelParams p = init_params(sensors, h);
            std::vector<WindowBatch> batch;
            for (int b = 0; b < 3; ++b) {
                WindowBatch w;
                w.values = testing::random_matrix(rng, n, 5);
                for (int i = 0; i < n; ++i) w.rows.push_back(i);
                w.has_next = true;
                w.next = testing::random_matrix(rng, n, 1).col(0);
                batch.push_back(w);
            }
            auto [l, grads] = loss_and_grad(batch, p);
            const double eps = 1e-6;
            for (size_t k = 0; k < p.values.size(); ++k) {
                Matrix fd(p.values[k].rows(), p.values[k].cols());
                for (Eigen::Index i = 0; i < fd.size(); ++i) {
                    double keep = p.values[k](i);
                    p.values[k](i) = keep + eps;
                    double up = loss(batch, p);
                    p.values[k](i) = keep - eps;
                    double dn = loss(batch, p);
                    p.values[k](i) = keep;
                    fd(i) = (up - dn) / (2 * eps);
                }
                double denom = std::max(grads[k].norm() + fd.norm(), 1e-8);
                worst = std::max(worst, (grads[k] - fd).norm() / denom);
            }
            ++models;
        }
    return {worst < 1e-4, fmt::format("{} models (20 per architecture), worst relative error {:.3g}", models, worst)};
}

Outcome c8_graph_metric() {
    std::mt19937_64 rng(808);
    std::uniform_int_distribution<int> nsens(2, 7), den(1, 12);
    std::bernoulli_distribution keep(0.8);
    auto random_graph = [&]() {
        ToolGraph g;
        g.tool = "T";
        int n = nsens(rng);
        for (int i = 0; i < n; ++i)
            if (keep(rng)) g.sensors.push_back("s" + std::to_string(i));
        const auto m = static_cast<Eigen::Index>(g.sensors.size());
        g.adjacency = Matrix::Zero(m, m);
        int w = den(rng);
        std::uniform_int_distribution<int> cnt(0, w);
        for (Eigen::Index i = 0; i < m; ++i)
            for (Eigen::Index j = i + 1; j < m; ++j) g.adjacency(i, j) = g.adjacency(j, i) = cnt(rng) / double(w);
        return g;
    };
    int sym = 0, self = 0, tri = 0;
    std::uniform_real_distribution<double> emax(1.0, 40.0);
    for (int t = 0; t < 1000; ++t) {
        ToolGraph a = random_graph(), b = random_graph(), c = random_graph();
        double e = emax(rng);
        double ab = graph_edit_distance(a, b, e), ba = graph_edit_distance(b, a, e);
        double bc = graph_edit_distance(b, c, e), ac = graph_edit_distance(a, c, e);
        sym += ab == ba;
        self += graph_edit_distance(a, a, e) == 0.0 && graph_edit_distance(b, b, e) == 0.0;
        tri += ac <= ab + bc + 1e-12;
    }
    return {sym == 1000 && self == 1000 && tri == 1000,
            fmt::format("symmetry {}/1000, self-distance {}/1000, triangle {}/1000", sym, self, tri)};
}

FleetDataset desk_fleet(std::uint64_t seed) {
    SynthSpec s;
    s.q_tools = 4;
    s.n_sensors = 8;
    s.points_per_tool = {210};
    s.seed = seed;
    s.correlation_blocks = {{{"S01", "S02", "S03"}, 0.8}, {{"S05", "S06"}, 0.6}};
    s.deviations = {{"T02", {"S04"}, DeviationKind::mean_shift, 2.0},
                    {"T03", {"S07"}, DeviationKind::variance_inflation, 3.0}};
    return minmax_normalize(generate_fleet(s).first);
}

Outcome c9_tau_sweep() {
    auto t0 = Clock::now();
    auto fleet = desk_fleet(909);
    GnnHyperParams h = GnnHyperParams::defaults_for(Arch::mtad_gat);
    h.seed = 9;
    auto model = train(fleet, h).params;
    std::vector<double> taus{0.5, 0.8, 0.9, 0.95, 0.98, 1.0};
    auto rows = tau_sweep(fleet, model, taus, 20, McMode::retrain);
    bool mono = true;
    std::string table;
    for (size_t k = 0; k < rows.size(); ++k) {
        if (k > 0) mono = mono && rows[k].max_score <= rows[k - 1].max_score && rows[k].std_score <= rows[k - 1].std_score;
        table += fmt::format(" {}:({:.2f},{:.2f},{:.2f})", rows[k].tau_g, rows[k].max_score, rows[k].min_score,
                             rows[k].std_score);
    }
    double secs = seconds_since(t0);
    return {mono && secs < 900,
            fmt::format("tau:(max,min,std) over 20 retrains, {} epochs each:{}; {:.0f} s", h.epochs, table, secs)};
}

Outcome c10_agreement() {
    auto t0 = Clock::now();
    int positive = 0, both_first = 0;
    std::vector<double> rhos;
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        SynthSpec s;
        s.q_tools = 6;
        s.n_sensors = 8;
        s.points_per_tool = {140};
        s.seed = 1000 + seed;
        s.correlation_blocks = {{{"S01", "S02", "S03"}, 0.8}};
        const std::string deviant = tool_name(static_cast<int>(seed % 6));
        s.deviations = {{deviant, {"S01", "S02", "S03"}, DeviationKind::mean_shift, 3.0}};
        auto [raw, truth] = generate_fleet(s);

        auto uni = uni_scores(raw, UniMethod::dbscan);
        RunConfig cfg = config_from_json({{"method", "mtadgat"}});
        cfg.gnn.seed = seed;
        FleetDataset norm = preprocess_fleet(raw, cfg, true, nullptr);
        auto run = run_multivariate(norm, cfg);
        double rho = cross_method_correlation(run.report.tool_scores, uni.tool_scores);
        rhos.push_back(rho);
        positive += rho > 0;
        auto top = [](const std::vector<std::string>& tools, const std::vector<double>& v) {
            return tools[static_cast<size_t>(std::max_element(v.begin(), v.end()) - v.begin())];
        };
        both_first += top(run.report.tools, run.report.tool_scores) == deviant && top(uni.tools, uni.tool_scores) == deviant;
    }
    std::string list;
    for (double r : rhos) list += fmt::format(" {:.2f}", r);
    return {positive == 10 && both_first >= 8,
            fmt::format("rho > 0 in {}/10 (rho:{}), deviant first by both in {}/10; {:.0f} s", positive, list, both_first,
                        seconds_since(t0))};
}

Outcome c11_heterogeneity() {
    testing::TempDir dir("accept11");
    SynthSpec s;
    s.q_tools = 4;
    s.n_sensors = 8;
    s.points_per_tool = {120};
    s.seed = 1111;
    s.missing_sensors["T02"] = {"S06", "S07", "S08"};
    s.missing_sensors["T03"] = {"S08"};
    s.missing_sensors["T04"] = {"S08"};
    auto [fleet, truth] = generate_fleet(s);
    save_tsum(fleet, dir.file("tsum.csv"));
    std::vector<std::string> problems;
    for (const char* m : {"dbscan", "wd", "pd", "gdn", "mtadgat"}) {
        RunConfig c = config_from_json({{"method", m}});
        c.gnn.epochs = 20;
        c.input = dir.file("tsum.csv");
        c.out = dir.file(m);
        try {
            run_pipeline(c);
        } catch (const std::exception& e) {
            problems.push_back(fmt::format("{} failed: {}", m, e.what()));
        }
    }
    // S08 exists only on T01: flagged single-tool with score 0.
    try {
        auto ss = read_sensor_scores(dir.file("wd/sensor_scores.csv"));
        auto it = std::find(ss.sensors.begin(), ss.sensors.end(), "S08");
        size_t k = static_cast<size_t>(it - ss.sensors.begin());
        if (it == ss.sensors.end() || ss.scores[k] != 0.0 ||
            std::find(ss.flags[k].begin(), ss.flags[k].end(), "single_tool") == ss.flags[k].end())
            problems.push_back("S08 not flagged single_tool with score 0");
    } catch (const std::exception& e) {
        problems.push_back(e.what());
    }
    // Union-aligned distance against a direct sum over the sensor union.
    try {
        auto a = read_graph_csv(dir.file("gdn/graphs/T01.csv"), "T01");
        auto b = read_graph_csv(dir.file("gdn/graphs/T02.csv"), "T02");
        if (b.sensors.size() != 5) problems.push_back("T02 graph should hold 5 sensors");
        std::set<std::string> u(a.sensors.begin(), a.sensors.end());
        u.insert(b.sensors.begin(), b.sensors.end());
        auto at = [](const ToolGraph& g, const std::string& x, const std::string& y) {
            auto i = std::find(g.sensors.begin(), g.sensors.end(), x), j = std::find(g.sensors.begin(), g.sensors.end(), y);
            if (i == g.sensors.end() || j == g.sensors.end()) return 0.0;
            return g.adjacency(i - g.sensors.begin(), j - g.sensors.begin());
        };
        double direct = 0.0;
        for (const auto& x : u)
            for (const auto& y : u) direct += std::abs(at(a, x, y) - at(b, x, y));
        double got = graph_difference(a, b);
        if (std::abs(got - direct) > 1e-12) problems.push_back(fmt::format("union distance {} vs {}", got, direct));
        std::vector<std::string> labels;
        read_matrix_csv(dir.file("gdn/pairwise.csv"), &labels);
        if (labels.size() != 4) problems.push_back("multivariate pairwise should cover 4 tools");
    } catch (const std::exception& e) {
        problems.push_back(e.what());
    }
    std::string detail = "5 methods ran; single-tool flag and union-aligned distance verified";
    if (!problems.empty()) {
        detail.clear();
        for (const auto& p : problems) detail += p + "; ";
    }
    return {problems.empty(), detail};
}

std::map<std::string, std::string> snapshot(const fs::path& root) {
    std::map<std::string, std::string> m;
    if (fs::is_regular_file(root)) {
        m[root.filename().string()] = testing::read_file(root.string());
        return m;
    }
    for (const auto& e : fs::recursive_directory_iterator(root))
        if (e.is_regular_file()) m[fs::relative(e.path(), root).string()] = testing::read_file(e.path().string());
    return m;
}

Outcome c12_determinism() {
    testing::TempDir dir("accept12");
    auto p = [&](const std::string& n) { return dir.file(n); };
    const std::string cli = TTTM_CLI_PATH;

    // Inputs shared by both runs.
    SynthSpec s;
    s.q_tools = 4;
    s.n_sensors = 5;
    s.points_per_tool = {120};
    s.correlation_blocks = {{{"S01", "S02"}, 0.7}};
    s.deviations = {{"T03", {"S04"}, DeviationKind::mean_shift, 2.0}};
    s.pm_events = {{"T01", s.start_time + s.duration / 2, 1.0}, {"T02", s.start_time + s.duration / 2, 1.0}};
    testing::write_file(p("spec.json"), nlohmann::json(s).dump());
    {
        std::ostringstream tr;
        tr << "tool_id,sensor_id,run_id,sample_index,value\n";
        std::mt19937_64 rng(12);
        std::normal_distribution<double> nd;
        for (int q = 0; q < 3; ++q)
            for (int r = 0; r < 4; ++r)
                for (int k = 0; k < 2; ++k)
                    for (int i = 0; i < 6; ++i)
                        tr << "T" << q << ",S" << k << ",R" << r << ',' << i << ',' << fmt6(nd(rng)) << '\n';
        testing::write_file(p("traces.csv"), tr.str());
    }
    testing::write_file(p("hyper.json"), R"({"epochs": 5, "embed_dim": 8, "gru_units": 8, "head_units": 8, "batch": 8})");
    testing::write_file(p("run.json"), fmt::format(R"({{"method": "gdn", "input": "{}", "pm_log_path": "{}", "out": "{}",
        "gnn": {{"epochs": 4, "embed_dim": 8, "head_units": 8, "batch": 8}}}})",
                                                   p("fleet.csv"), p("pm.csv"), p("run_out")));

    struct Cmd {
        std::string name, args, output;
    };
    std::vector<Cmd> cmds{
        {"synth", "synth --spec " + p("spec.json") + " --out " + p("fleet.csv") + " --pm " + p("pm.csv") + " --truth " +
                      p("truth.json") + " --seed 5",
         p("fleet.csv")},
        {"ingest", "ingest --input " + p("fleet.csv") + " --pm " + p("pm.csv") + " --out " + p("ingest"), p("ingest")},
        {"encode", "encode --input " + p("traces.csv") + " --stat median --out " + p("encoded.csv"), p("encoded.csv")},
        {"score-uni dbscan", "score-uni --method dbscan --input " + p("fleet.csv") + " --pm " + p("pm.csv") + " --out " + p("dbscan"), p("dbscan")},
        {"score-uni wd", "score-uni --method wd --input " + p("fleet.csv") + " --pm " + p("pm.csv") + " --out " + p("wd"), p("wd")},
        {"score-uni pd", "score-uni --method pd --input " + p("fleet.csv") + " --pm " + p("pm.csv") + " --out " + p("pd"), p("pd")},
        {"train-gnn", "train-gnn --arch mtadgat --input " + p("fleet.csv") + " --pm " + p("pm.csv") + " --hyper " +
                          p("hyper.json") + " --out " + p("model.bin") + " --seed 3",
         p("model.bin")},
        {"extract-graphs", "extract-graphs --model " + p("model.bin") + " --input " + p("fleet.csv") + " --pm " + p("pm.csv") +
                               " --tau-g 0.9 --out " + p("graphs"),
         p("graphs")},
        {"score-multi", "score-multi --graphs " + p("graphs") + " --tau-g 0.9 --out " + p("multi"), p("multi")},
        {"eval corr", "eval corr --scores " + p("dbscan") + " --scores " + p("wd") + " --scores " + p("pd") + " --input " +
                          p("fleet.csv") + " --pm " + p("pm.csv") + " --bandwidth 0.1 --out " + p("corr"),
         p("corr")},
        {"eval sweep", "eval sweep --model " + p("model.bin") + " --input " + p("fleet.csv") + " --pm " + p("pm.csv") +
                           " --tau 0.5,0.9,1.0 --mc 2 --mc-mode retrain --out " + p("sweep.csv") + " --seed 4",
         p("sweep.csv")},
        {"eval cross", "eval cross --multi " + p("multi") + " --uni " + p("dbscan") + " " + p("wd") + " --out " + p("cross.csv"),
         p("cross.csv")},
        {"report trend", "report trend --reports " + p("dbscan") + " " + p("wd") + " --labels m1 m2 --out " + p("trend"), p("trend")},
        {"run", "run --config " + p("run.json"), p("run_out")},
    };
    std::vector<std::string> bad;
    for (const auto& c : cmds) {
        std::map<std::string, std::string> first;
        for (int rep = 0; rep < 2; ++rep) {
            if (rep == 1) fs::remove_all(c.output);
            int rc = std::system((cli + " " + c.args + " > /dev/null 2>&1").c_str());
            if (rc != 0) {
                bad.push_back(c.name + " exit " + std::to_string(rc));
                break;
            }
            if (c.name == "train-gnn") {
                auto snap = snapshot(c.output);
                snap["loss.csv"] = testing::read_file(c.output + ".loss.csv");
                if (rep == 0) first = snap;
                else if (snap != first) bad.push_back(c.name);
                continue;
            }
            if (rep == 0) first = snapshot(c.output);
            else if (snapshot(c.output) != first) bad.push_back(c.name);
        }
    }
    std::string detail = fmt::format("{} commands run twice, outputs byte-identical", cmds.size());
    if (!bad.empty()) {
        detail = "differs or failed:";
        for (const auto& b : bad) detail += " [" + b + "]";
    }
    return {bad.empty(), detail};
}

}  // namespace

int main(int argc, char** argv) {
    spdlog::set_level(spdlog::level::warn);
    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
        {"wasserstein oracle equivalence", c1_wasserstein},
        {"dbscan oracle equivalence", c2_dbscan},
        {"mann-kendall calibration", c3_mann_kendall},
        {"detrend exactness", c4_detrend},
        {"variance and mode correlation ordering", c5_correlation},
        {"zero-deviation baseline", c6_baseline},
        {"gnn gradient check", c7_gradients},
        {"graph metric axioms", c8_graph_metric},
        {"threshold sweep monotone trend", c9_tau_sweep},
        {"multivariate vs dbscan agreement", c10_agreement},
        {"heterogeneous fleet", c11_heterogeneity},
        {"cli determinism", c12_determinism},
    };
    std::set<int> only;
    for (int i = 1; i < argc; ++i) only.insert(std::atoi(argv[i]));
    int failed = 0;
    for (size_t k = 0; k < criteria.size(); ++k) {
        int id = static_cast<int>(k) + 1;
        if (!only.empty() && !only.count(id)) continue;
        Outcome o;
        try {
            o = criteria[k].second();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        failed += !o.pass;
        std::cout << (o.pass ? "PASS" : "FAIL") << " criterion " << id << " (" << criteria[k].first << "): " << o.detail
                  << std::endl;
    }
    return failed ? 1 : 0;
}
