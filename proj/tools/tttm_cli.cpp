#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "tttm/evalkit.hpp"
#include "tttm/pipeline.hpp"
#include "tttm/synthgen.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace tttm;

namespace {

json read_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw NotFoundError("cannot open " + path);
    try {
        return json::parse(in);
    } catch (const json::parse_error& e) {
        throw ParseError(path + ": " + e.what());
    }
}

std::vector<double> parse_list(const std::string& s) {
    std::vector<double> out;
    std::stringstream ss(s);
    std::string x;
    while (std::getline(ss, x, ',')) out.push_back(std::stod(x));
    return out;
}

struct Globals {
    std::string config;
    long long seed = -1;
    std::string log_level = "warn";
};

RunConfig base_config(const Globals& g) {
    RunConfig c;
    if (!g.config.empty()) c = config_from_json(read_json_file(g.config));
    if (g.seed >= 0) c.gnn.seed = static_cast<std::uint64_t>(g.seed);
    return c;
}

FleetDataset load_fleet(const std::string& input, const std::string& pm) {
    auto f = load_tsum(input);
    if (!pm.empty()) f.pm_logs = load_pm_log(pm);
    return f;
}

// Filter, detrend and normalize as the multivariate pipeline does.
FleetDataset prepared(const RunConfig& cfg, const std::string& input, const std::string& pm) {
    auto fleet = filter_sparse(load_fleet(input, pm), cfg.tau);
    if (fleet.tools.empty()) throw EmptyResultError("no tools after sparsity filter");
    return preprocess_fleet(fleet, cfg, true, nullptr);
}

void write_text(const std::string& path, const std::string& text) {
    if (auto p = fs::path(path).parent_path(); !p.empty()) fs::create_directories(p);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << text;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Tool-to-tool matching difference scores"};
    app.require_subcommand(1);
    app.fallthrough();  // global flags may follow the subcommand
    Globals g;
    app.add_option("--config", g.config, "JSON run configuration");
    app.add_option("--seed", g.seed, "Seed for stochastic stages");
    app.add_option("--log-level", g.log_level, "trace, debug, info, warn, error, off");

    std::string input, pm, out, method = "dbscan", arch = "mtadgat", hyper, model, graphs_dir, stat = "mean";
    std::string spec_path, truth, preset, e_max = "observed", taus = "0.5,0.8,0.9,0.95,0.98,1.0", mc_mode = "retrain";
    std::string traces, multi_dir;
    std::vector<std::string> scores_dirs, reports, labels;
    double tau_g = 0.9, bandwidth = 0.6;
    int n_mc = 100, top_k = 4;

    auto* ingest = app.add_subcommand("ingest", "Validate a T-SUM CSV and write its canonical form");
    ingest->add_option("--input", input)->required();
    ingest->add_option("--pm", pm);
    ingest->add_option("--out", out)->required();

    auto* encode = app.add_subcommand("encode", "Encode trace CSV into T-SUM rows");
    encode->add_option("--input", traces)->required();
    encode->add_option("--stat", stat, "mean, median, stdev, max, min, range");
    encode->add_option("--out", out)->required();

    auto* synth = app.add_subcommand("synth", "Generate a synthetic fleet");
    synth->add_option("--spec", spec_path);
    synth->add_option("--preset", preset, "paper or desk")->check(CLI::IsMember({"paper", "desk"}));
    synth->add_option("--out", out)->required();
    synth->add_option("--pm", pm);
    synth->add_option("--truth", truth);

    auto* score_uni = app.add_subcommand("score-uni", "Univariate scoring pipeline");
    score_uni->add_option("--method", method)->check(CLI::IsMember({"dbscan", "wd", "pd"}));
    score_uni->add_option("--input", input)->required();
    score_uni->add_option("--pm", pm);
    score_uni->add_option("--out", out)->required();

    auto* train_gnn = app.add_subcommand("train-gnn", "Train the multivariate graph model");
    train_gnn->add_option("--arch", arch)->check(CLI::IsMember({"mtadgat", "mtad_gat", "gdn"}));
    train_gnn->add_option("--input", input)->required();
    train_gnn->add_option("--pm", pm);
    train_gnn->add_option("--hyper", hyper);
    train_gnn->add_option("--out", out)->required();

    auto* extract = app.add_subcommand("extract-graphs", "Write one averaged adjacency CSV per tool");
    extract->add_option("--model", model)->required();
    extract->add_option("--input", input)->required();
    extract->add_option("--pm", pm);
    extract->add_option("--tau-g", tau_g);
    extract->add_option("--out", out)->required();

    auto* score_multi = app.add_subcommand("score-multi", "Multivariate scores from extracted graphs");
    score_multi->add_option("--graphs", graphs_dir)->required();
    score_multi->add_option("--tau-g", tau_g, "threshold the graphs were extracted with");
    score_multi->add_option("--e-max", e_max)->check(CLI::IsMember({"observed", "complete"}));
    score_multi->add_option("--out", out)->required();

    auto* eval = app.add_subcommand("eval", "Evaluation tables");
    eval->require_subcommand(1);
    auto* corr = eval->add_subcommand("corr", "Score vs variance and mode count correlations");
    corr->add_option("--scores", scores_dirs, "report directories, one per method")->required();
    corr->add_option("--input", input)->required();
    corr->add_option("--pm", pm);
    corr->add_option("--bandwidth", bandwidth);
    corr->add_option("--out", out)->required();
    auto* sweep = eval->add_subcommand("sweep", "Threshold sweep of unnormalized pairwise scores");
    sweep->add_option("--model", model)->required();
    sweep->add_option("--input", input)->required();
    sweep->add_option("--pm", pm);
    sweep->add_option("--tau", taus);
    sweep->add_option("--mc", n_mc);
    sweep->add_option("--mc-mode", mc_mode)->check(CLI::IsMember({"retrain", "extract"}));
    sweep->add_option("--out", out)->required();
    auto* cross = eval->add_subcommand("cross", "Multivariate vs univariate correlation");
    cross->add_option("--multi", multi_dir)->required();
    std::vector<std::string> uni_dirs;
    cross->add_option("--uni", uni_dirs, "univariate report directories")->required();
    cross->add_option("--out", out)->required();

    auto* report = app.add_subcommand("report", "Reporting");
    report->require_subcommand(1);
    auto* trend = report->add_subcommand("trend", "Score trends across periods");
    trend->add_option("--reports", reports, "report directories in period order")->required();
    trend->add_option("--labels", labels, "period labels; defaults to directory names");
    trend->add_option("--top-k", top_k);
    trend->add_option("--out", out)->required();

    auto* run = app.add_subcommand("run", "Full pipeline from --config");
    run->add_option("--input", input);
    run->add_option("--pm", pm);
    run->add_option("--out", out);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int rc = app.exit(e);
        return rc == 0 ? exit_ok : exit_usage;
    }

    auto logger = spdlog::stderr_color_st("tttm");
    spdlog::set_default_logger(logger);
    spdlog::set_level(spdlog::level::from_str(g.log_level));

    try {
        if (*ingest) {
            auto fleet = load_fleet(input, pm);
            fs::create_directories(out);
            save_tsum(fleet, (fs::path(out) / "tsum.csv").string());
            if (!fleet.pm_logs.empty()) save_pm_log(fleet.pm_logs, (fs::path(out) / "pm.csv").string());
            json summary = json::array();
            for (const auto& t : fleet.tools)
                summary.push_back({{"tool", t.tool}, {"sensors", t.n_sensors()}, {"points", t.n_points()}});
            std::ofstream((fs::path(out) / "summary.json").string()) << summary.dump(2) << '\n';
        } else if (*encode) {
            auto blocks = load_traces(traces);
            std::map<std::string, std::vector<TraceBlock>> by_tool;
            for (auto& b : blocks) by_tool[b.tool].push_back(std::move(b));
            FleetDataset fleet;
            for (auto& [tool, bs] : by_tool) fleet.tools.push_back(tst_encode(bs, parse_statistic(stat)));
            save_tsum(fleet, out);
        } else if (*synth) {
            SynthSpec spec;
            if (!spec_path.empty()) spec = read_json_file(spec_path).get<SynthSpec>();
            if (preset == "paper") spec = paper_scale_preset();
            if (preset == "desk") spec = desk_scale(paper_scale_preset());
            if (g.seed >= 0) spec.seed = static_cast<std::uint64_t>(g.seed);
            auto [fleet, gt] = generate_fleet(spec);
            save_tsum(fleet, out);
            if (!pm.empty()) save_pm_log(fleet.pm_logs, pm);
            if (!truth.empty()) write_text(truth, truth_to_json(gt).dump(2) + "\n");
        } else if (*score_uni) {
            RunConfig c = base_config(g);
            c.method = method;
            c.input = input;
            if (!pm.empty()) c.pm_log_path = pm;
            c.out = out;
            run_pipeline(c);
        } else if (*train_gnn) {
            RunConfig c = base_config(g);
            c.gnn = GnnHyperParams::defaults_for(parse_arch(arch));
            if (!hyper.empty()) {
                json h = read_json_file(hyper);
                h.erase("arch");
                from_json(h, c.gnn);
            } else if (!g.config.empty()) {
                json j = read_json_file(g.config);
                if (j.contains("gnn")) {
                    json h = j["gnn"];
                    h.erase("arch");
                    from_json(h, c.gnn);
                }
            }
            if (g.seed >= 0) c.gnn.seed = static_cast<std::uint64_t>(g.seed);
            auto fleet = prepared(c, input, pm);
            auto res = train(fleet, c.gnn);
            save_model(res.params, out);
            std::ostringstream loss;
            loss << "epoch,loss\n";
            for (size_t e = 0; e < res.loss_trace.size(); ++e) loss << e + 1 << ',' << fmt6(res.loss_trace[e]) << '\n';
            write_text(out + ".loss.csv", loss.str());
            spdlog::info("trained on {} windows", res.windows);
        } else if (*extract) {
            RunConfig c = base_config(g);
            auto p = load_model(model);
            auto fleet = prepared(c, input, pm);
            fs::create_directories(out);
            for (const auto& t : fleet.tools) {
                std::vector<std::int64_t> ev;
                if (auto it = fleet.pm_logs.find(t.tool); it != fleet.pm_logs.end()) ev = it->second;
                auto graph = extract_graph(t, p, tau_g, ev);
                for (const auto& f : graph.flags) spdlog::warn("{}: {}", t.tool, f);
                write_graph_csv(graph, (fs::path(out) / (t.tool + ".csv")).string());
            }
        } else if (*score_multi) {
            std::vector<fs::path> files;
            for (const auto& e : fs::directory_iterator(graphs_dir))
                if (e.path().extension() == ".csv") files.push_back(e.path());
            std::sort(files.begin(), files.end());
            std::vector<ToolGraph> graphs;
            for (const auto& f : files) graphs.push_back(read_graph_csv(f.string(), f.stem().string()));
            if (graphs.size() < 2) throw EmptyResultError("fewer than 2 tool graphs in " + graphs_dir);
            auto em = compute_e_max(graphs, parse_emax(e_max));
            auto r = multivariate_scores(graphs, em.e_max);
            r.tau_g = tau_g;
            if (em.fallback) r.flags.push_back("e_max_fallback_complete");
            json meta{{"method", "multivariate"}, {"e_max_convention", e_max}, {"graphs", graphs_dir}};
            write_multi_report(out, r, meta);
        } else if (*corr) {
            RunConfig c = base_config(g);
            auto fleet = prepared(c, input, pm);
            std::vector<SensorScores> methods;
            for (const auto& d : scores_dirs) methods.push_back(read_sensor_scores((fs::path(d) / "sensor_scores.csv").string()));
            auto t = correlation_report(methods, fleet, bandwidth);
            std::ostringstream csv;
            csv << "statistic";
            for (const auto& col : t.cols) csv << ',' << col;
            csv << '\n';
            for (size_t r = 0; r < t.rows.size(); ++r) {
                csv << t.rows[r];
                for (Eigen::Index k = 0; k < t.values.cols(); ++k) csv << ',' << fmt6(t.values(static_cast<Eigen::Index>(r), k));
                csv << '\n';
            }
            write_text((fs::path(out) / "correlation.csv").string(), csv.str());
        } else if (*sweep) {
            RunConfig c = base_config(g);
            auto p = load_model(model);
            if (g.seed >= 0) p.hyper.seed = static_cast<std::uint64_t>(g.seed);
            auto fleet = prepared(c, input, pm);
            auto rows = tau_sweep(fleet, p, parse_list(taus), n_mc, mc_mode == "extract" ? McMode::extract : McMode::retrain);
            std::ostringstream csv;
            csv << "tau_g,max_score,min_score,std_score\n";
            for (const auto& r : rows)
                csv << fmt6(r.tau_g) << ',' << fmt6(r.max_score) << ',' << fmt6(r.min_score) << ',' << fmt6(r.std_score)
                    << '\n';
            write_text(out, csv.str());
        } else if (*cross) {
            auto [mt, ms] = read_tool_scores((fs::path(multi_dir) / "tool_scores.csv").string());
            std::vector<std::string> mlabels;
            Matrix mp = read_matrix_csv((fs::path(multi_dir) / "pairwise.csv").string(), &mlabels);
            std::ostringstream csv;
            csv << "comparison,level,rho\n";
            for (const auto& d : uni_dirs) {
                auto [ut, us] = read_tool_scores((fs::path(d) / "tool_scores.csv").string());
                if (ut != mt) throw std::invalid_argument("tool sets differ between " + multi_dir + " and " + d);
                std::string name = read_json_file((fs::path(d) / "report.json").string()).value("method", d);
                csv << name << ",tool," << fmt6(cross_method_correlation(ms, us)) << '\n';
                if (fs::exists(fs::path(d) / "pairwise.csv")) {
                    Matrix up = read_matrix_csv((fs::path(d) / "pairwise.csv").string(), nullptr);
                    csv << name << ",pairwise," << fmt6(cross_method_pairwise(mp, up)) << '\n';
                }
            }
            write_text(out, csv.str());
        } else if (*trend) {
            if (labels.empty())
                for (const auto& r : reports) labels.push_back(fs::path(r).filename().string());
            auto t = trend_report(reports, labels, out, top_k);
            spdlog::info("peak period {}", t.peak_period);
        } else if (*run) {
            if (g.config.empty()) throw std::invalid_argument("run needs --config");
            RunConfig c = base_config(g);
            if (!input.empty()) c.input = input;
            if (!pm.empty()) c.pm_log_path = pm;
            if (!out.empty()) c.out = out;
            run_pipeline(c);
        }
    } catch (const StageError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return e.code;
    } catch (const EmptyResultError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return exit_empty;
    } catch (const NumericError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return exit_numeric;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return exit_usage;
    }
    return exit_ok;
}
