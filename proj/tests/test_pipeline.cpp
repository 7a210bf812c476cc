#include <gtest/gtest.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>

#include "test_util.hpp"
#include "tttm/pipeline.hpp"
#include "tttm/synthgen.hpp"

using namespace tttm;
using tttm::testing::read_file;
using tttm::testing::TempDir;
namespace fs = std::filesystem;

namespace {

SynthSpec small_spec(std::uint64_t seed) {
    SynthSpec s;
    s.q_tools = 4;
    s.n_sensors = 5;
    s.points_per_tool = {60};
    s.seed = seed;
    return s;
}

std::string write_fleet(const TempDir& d, const SynthSpec& s, const std::string& name = "tsum.csv") {
    auto [f, t] = generate_fleet(s);
    save_tsum(f, d.file(name));
    if (!f.pm_logs.empty()) save_pm_log(f.pm_logs, d.file("pm_" + name));
    return d.file(name);
}

RunConfig cfg_for(const std::string& input, const std::string& method, const std::string& out) {
    RunConfig c = config_from_json({{"method", method}});
    c.input = input;
    c.out = out;
    return c;
}

int run_cli(const std::string& args) {
    int rc = std::system((std::string(TTTM_CLI_PATH) + " " + args + " > /dev/null 2>&1").c_str());
    return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

std::map<std::string, std::string> dir_bytes(const fs::path& root) {
    std::map<std::string, std::string> m;
    for (const auto& e : fs::recursive_directory_iterator(root))
        if (e.is_regular_file()) m[fs::relative(e.path(), root).string()] = read_file(e.path().string());
    return m;
}

}  // namespace

TEST(Config, JsonRoundTrip) {
    nlohmann::json j{{"method", "wd"}, {"tau", 5}, {"alpha", 0.01}, {"lambda", 0.5}, {"tau_g", 0.8},
                     {"pairwise_mode", "literal"}, {"e_max", "complete"}, {"period", "2024-03"}};
    auto c = config_from_json(j);
    EXPECT_EQ(c.method, "wd");
    EXPECT_EQ(c.tau, 5);
    EXPECT_EQ(c.e_max, EmaxConvention::complete);
    auto back = config_from_json(config_to_json(c));
    EXPECT_EQ(config_to_json(back).dump(), config_to_json(c).dump());
}

TEST(Config, GnnDefaultsFollowMethod) {
    auto g = config_from_json({{"method", "gdn"}, {"gnn", {{"epochs", 3}}}});
    EXPECT_EQ(g.gnn.arch, Arch::gdn);
    EXPECT_EQ(g.gnn.embed_dim, 128);
    EXPECT_EQ(g.gnn.epochs, 3);
    EXPECT_TRUE(g.is_multivariate());
}

TEST(Config, Rejects) {
    EXPECT_ANY_THROW(config_from_json({{"method", "kmeans"}}));
    EXPECT_ANY_THROW(config_from_json({{"tau", 0}}));
    EXPECT_ANY_THROW(config_from_json({{"tau_g", 1.5}}));
}

TEST(Pipeline, PdBypassesDetrend) {
    TempDir d("pd");
    auto in = write_fleet(d, small_spec(1));
    auto rep = run_pipeline(cfg_for(in, "pd", d.file("out")));
    EXPECT_EQ(rep["stages"]["detrend"]["status"], "bypassed");
    auto disk = nlohmann::json::parse(read_file(d.file("out/report.json")));
    EXPECT_EQ(disk["stages"]["detrend"]["status"], "bypassed");
    auto wd = run_pipeline(cfg_for(in, "wd", d.file("wd")));
    EXPECT_NE(wd["stages"]["detrend"]["status"], "bypassed");
}

TEST(Pipeline, EmptyAfterFilter) {
    TempDir d("empty");
    auto in = write_fleet(d, small_spec(2));
    auto c = cfg_for(in, "dbscan", d.file("out"));
    c.tau = 1000;
    try {
        run_pipeline(c);
        FAIL() << "expected a stage error";
    } catch (const StageError& e) {
        EXPECT_EQ(e.code, exit_empty);
        EXPECT_EQ(e.stage, "filter");
        EXPECT_NE(std::string(e.what()).find("no tools after sparsity filter"), std::string::npos);
    }
    EXPECT_EQ(run_cli("score-uni --method dbscan --input " + in + " --out " + d.file("cli") + " --config " +
                      [&] {
                          tttm::testing::write_file(d.file("c.json"), R"({"tau": 1000})");
                          return d.file("c.json");
                      }()),
              2);
}

TEST(Pipeline, MissingInputIsUsageError) {
    TempDir d("missing");
    try {
        run_pipeline(cfg_for(d.file("nope.csv"), "wd", d.file("out")));
        FAIL();
    } catch (const StageError& e) {
        EXPECT_EQ(e.code, exit_usage);
        EXPECT_EQ(e.stage, "ingest");
    }
    EXPECT_EQ(run_cli("score-uni --method wd --input " + d.file("nope.csv") + " --out " + d.file("o")), 1);
    EXPECT_EQ(run_cli("no-such-command"), 1);
}

TEST(Pipeline, ReportJsonByteIdentical) {
    TempDir d("det");
    auto in = write_fleet(d, small_spec(3));
    for (const char* m : {"dbscan", "wd", "pd"}) {
        run_pipeline(cfg_for(in, m, d.file(std::string(m) + "_a")));
        run_pipeline(cfg_for(in, m, d.file(std::string(m) + "_b")));
        EXPECT_EQ(dir_bytes(d.file(std::string(m) + "_a")), dir_bytes(d.file(std::string(m) + "_b"))) << m;
        EXPECT_EQ(read_file(d.file(std::string(m) + "_a/report.json")).find("timestamp"), std::string::npos);
    }
}

TEST(Pipeline, BundleRoundTrips) {
    TempDir d("bundle");
    auto in = write_fleet(d, small_spec(4));
    for (const char* m : {"dbscan", "wd"}) {
        auto dir = d.file(m);
        run_pipeline(cfg_for(in, m, dir));
        auto [tools, scores] = read_tool_scores(dir + "/tool_scores.csv");
        EXPECT_EQ(tools.size(), 4u);
        auto ss = read_sensor_scores(dir + "/sensor_scores.csv");
        EXPECT_EQ(ss.sensors.size(), 5u);
        EXPECT_EQ(to_string(ss.method), m);
        auto rep = nlohmann::json::parse(read_file(dir + "/report.json"));
        EXPECT_EQ(rep["tools"].size(), 4u);
        if (std::string(m) == "wd") {
            std::vector<std::string> labels;
            Matrix pw = read_matrix_csv(dir + "/pairwise.csv", &labels);
            EXPECT_EQ(labels, tools);
            EXPECT_EQ(pw, pw.transpose());
        }
    }
}

TEST(Pipeline, MatrixAndScoresCsvRoundTrip) {
    TempDir d("csv");
    Matrix m(2, 2);
    m << 0, 0.123457, 0.123457, 0;
    write_matrix_csv(d.file("m.csv"), {"A", "B"}, m);
    std::vector<std::string> labels;
    EXPECT_EQ(read_matrix_csv(d.file("m.csv"), &labels), m);
    EXPECT_EQ(labels, (std::vector<std::string>{"A", "B"}));

    write_tool_scores(d.file("t.csv"), {"A", "B"}, {0.5, std::nan("")});
    auto [t, s] = read_tool_scores(d.file("t.csv"));
    EXPECT_EQ(t, (std::vector<std::string>{"A", "B"}));
    EXPECT_EQ(s[0], 0.5);
    EXPECT_TRUE(std::isnan(s[1]));
    tttm::testing::write_file(d.file("bad.csv"), "x,y\n1,2\n");
    EXPECT_ANY_THROW(read_matrix_csv(d.file("bad.csv"), nullptr));
}

TEST(Pipeline, Multivariate) {
    TempDir d("multi");
    auto s = small_spec(5);
    s.points_per_tool = {120};
    s.correlation_blocks = {{{"S01", "S02", "S03"}, 0.8}};
    auto in = write_fleet(d, s);
    auto c = config_from_json({{"method", "gdn"},
                               {"gnn", {{"epochs", 2}, {"embed_dim", 8}, {"head_units", 8}, {"batch", 8}}}});
    c.input = in;
    c.out = d.file("out");
    auto rep = run_pipeline(c);
    EXPECT_EQ(rep["stages"]["train"]["arch"], "gdn");
    std::vector<std::string> labels;
    Matrix pw = read_matrix_csv(d.file("out/pairwise.csv"), &labels);
    EXPECT_EQ(labels.size(), 4u);
    EXPECT_TRUE(pw.diagonal().isZero());
    for (const auto& l : labels) {
        auto g = read_graph_csv(d.file("out/graphs/" + l + ".csv"), l);
        EXPECT_EQ(g.sensors.size(), 5u);
    }
    c.out = d.file("again");
    run_pipeline(c);
    EXPECT_EQ(dir_bytes(d.file("out")), dir_bytes(d.file("again")));
}

TEST(Pipeline, PmSegmentsScoredSeparately) {
    TempDir d("pm");
    auto s = small_spec(6);
    s.points_per_tool = {100};
    for (int q = 0; q < 4; ++q) s.pm_events.push_back({tool_name(q), s.start_time + s.duration / 2, 4.0});
    auto in = write_fleet(d, s);
    auto c = cfg_for(in, "wd", d.file("out"));
    c.pm_log_path = d.file("pm_tsum.csv");
    auto rep = run_pipeline(c);
    EXPECT_EQ(rep["stages"]["pm_split"]["events"], 4);
    // A common PM step must not read as a tool difference.
    auto [tools, scores] = read_tool_scores(d.file("out/tool_scores.csv"));
    auto c2 = cfg_for(in, "wd", d.file("nopm"));
    run_pipeline(c2);
    auto [t2, s2] = read_tool_scores(d.file("nopm/tool_scores.csv"));
    double with = 0, without = 0;
    for (size_t i = 0; i < scores.size(); ++i) with += scores[i], without += s2[i];
    EXPECT_LE(with, without * 1.5);
}

class TrendReport : public ::testing::Test {
protected:
    TempDir d{"trend"};
    std::vector<std::string> dirs, labels{"2024-01", "2024-02", "2024-03"};

    void build(bool inject) {
        for (int p = 0; p < 3; ++p) {
            auto s = small_spec(inject ? 20 + static_cast<std::uint64_t>(p) : 20);
            s.q_tools = 3;
            s.n_sensors = 6;
            s.points_per_tool = {80};
            if (inject && p == 1) s.deviations = {{"T02", {"S04"}, DeviationKind::mean_shift, 4.0}};
            auto in = write_fleet(d, s, "p" + std::to_string(p) + ".csv");
            auto out = d.file("rep" + std::to_string(p));
            run_pipeline(cfg_for(in, "dbscan", out));
            dirs.push_back(out);
        }
    }
};

TEST_F(TrendReport, InjectedSensorLeadsDrilldown) {
    build(true);
    auto t = trend_report(dirs, labels, d.file("trend"));
    ASSERT_EQ(t.tools.size(), 3u);
    for (const auto& s : t.tools) EXPECT_EQ(s.scores.size(), 3u);
    EXPECT_EQ(t.peak_period, "2024-02");
    ASSERT_FALSE(t.drilldown.empty());
    EXPECT_LE(t.drilldown.size(), 4u);
    EXPECT_EQ(t.drilldown.front(), "S04");
    for (const char* f : {"tool_trend.csv", "sensor_trend.csv", "trend_T01.svg", "trend_all_tools.svg",
                          "drilldown.svg", "trend.json"})
        EXPECT_TRUE(fs::exists(d.file(std::string("trend/") + f))) << f;
    auto j = nlohmann::json::parse(read_file(d.file("trend/trend.json")));
    EXPECT_EQ(j["peak_tool"], "T02");
    for (const auto& s : t.sensors)
        for (double v : s.scores)
            if (std::isfinite(v)) EXPECT_TRUE(v >= 0 && v <= 1);
}

TEST_F(TrendReport, IdenticalPeriodsAreFlat) {
    build(false);
    auto t = trend_report(dirs, labels, d.file("trend"));
    for (const auto& s : t.tools) {
        EXPECT_EQ(s.scores[0], s.scores[1]);
        EXPECT_EQ(s.scores[1], s.scores[2]);
    }
    for (const auto& s : t.sensors)
        for (double v : s.scores) EXPECT_EQ(v, 0.0);
}

TEST_F(TrendReport, UnionOfToolsMarksGaps) {
    build(false);
    auto s = small_spec(30);
    s.q_tools = 4;
    s.n_sensors = 6;
    s.points_per_tool = {80};
    auto in = write_fleet(d, s, "p3.csv");
    run_pipeline(cfg_for(in, "dbscan", d.file("rep3")));
    dirs.push_back(d.file("rep3"));
    labels.push_back("2024-04");
    auto t = trend_report(dirs, labels, d.file("trend"));
    ASSERT_EQ(t.tools.size(), 4u);
    EXPECT_TRUE(std::isnan(t.tools[3].scores[0]));
    EXPECT_FALSE(std::isnan(t.tools[3].scores[3]));
    EXPECT_THROW(trend_report({dirs[0]}, {"x"}, d.file("t2")), std::invalid_argument);
    EXPECT_THROW(trend_report({dirs[0], dirs[1]}, {"x", "x"}, d.file("t2")), std::invalid_argument);
}

TEST(Svg, WellFormed) {
    TrendSeries s{"T1", {"a", "b"}, {0.1, std::nan("")}};
    auto svg = svg_line_chart("t <1>", {"a", "b"}, {s}, "y");
    EXPECT_EQ(svg.rfind("<svg", 0), 0u);
    EXPECT_NE(svg.find("</svg>"), std::string::npos);
    EXPECT_NE(svg.find("t &lt;1&gt;"), std::string::npos);
}
