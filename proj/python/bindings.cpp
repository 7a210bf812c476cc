#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

#include "tttm/evalkit.hpp"
#include "tttm/multiscore.hpp"
#include "tttm/pipeline.hpp"
#include "tttm/synthgen.hpp"

namespace py = pybind11;
using namespace tttm;

namespace {

// Tools as {name: (sensors, timestamps, values)}.
py::dict fleet_to_dict(const FleetDataset& f) {
    py::dict out;
    for (const auto& t : f.tools) out[py::str(t.tool)] = py::make_tuple(t.sensors, t.timestamps, t.values);
    return out;
}

ToolGraph make_graph(const std::vector<std::string>& sensors, const Matrix& adjacency) {
    if (adjacency.rows() != static_cast<Eigen::Index>(sensors.size()) || adjacency.cols() != adjacency.rows())
        throw std::invalid_argument("adjacency must be square and match the sensor list");
    ToolGraph g;
    g.sensors = sensors;
    g.adjacency = adjacency;
    return g;
}

py::dict report_to_dict(const ScoreReport& r) {
    py::dict d;
    d["method"] = to_string(r.method);
    d["sensors"] = r.sensor_scores.sensors;
    d["sensor_scores"] = r.sensor_scores.scores;
    d["flags"] = r.sensor_scores.flags;
    d["tools"] = r.tools;
    d["tool_scores"] = r.tool_scores;
    if (r.pairwise) d["pairwise"] = *r.pairwise;
    return d;
}

}  // namespace

PYBIND11_MODULE(_tttm, m) {
    m.doc() = "Tool-to-tool matching scores";

    m.def("wasserstein1", &wasserstein1, py::arg("a"), py::arg("b"));
    m.def(
        "dbscan", [](const Vector& x, double eps, int min_pts) { return dbscan_cluster(x, eps, min_pts).labels; },
        py::arg("points"), py::arg("eps"), py::arg("min_pts"), "Cluster labels, -1 for noise.");
    m.def(
        "knee_epsilon", [](const Vector& x, int p_min) { return knee_epsilon(x, p_min).eps; }, py::arg("points"),
        py::arg("p_min") = 2);
    m.def(
        "mann_kendall",
        [](const Vector& x, double alpha, bool one_sided) {
            auto r = mann_kendall(x, alpha, one_sided);
            py::dict d;
            d["s"] = r.z_prime;
            d["z"] = r.z_stat;
            d["trend"] = to_string(r.trend);
            d["reject"] = r.reject_h0;
            return d;
        },
        py::arg("series"), py::arg("alpha") = 0.05, py::arg("one_sided") = false);
    m.def(
        "detrend",
        [](const Vector& x, double lambda) {
            auto [r, model] = detrend(x, lambda);
            return py::make_tuple(r, model.degree);
        },
        py::arg("series"), py::arg("lambda_") = 1.0, "Residual and the chosen polynomial degree.");
    m.def("periodogram", &periodogram, py::arg("series"), py::arg("pad_to"));
    m.def("spearman", &spearman, py::arg("x"), py::arg("y"));

    m.def(
        "graph_edit_distance",
        [](const std::vector<std::string>& sa, const Matrix& a, const std::vector<std::string>& sb, const Matrix& b,
           double e_max) { return graph_edit_distance(make_graph(sa, a), make_graph(sb, b), e_max); },
        py::arg("sensors_a"), py::arg("adjacency_a"), py::arg("sensors_b"), py::arg("adjacency_b"), py::arg("e_max"));

    m.def(
        "load_tsum", [](const std::string& path) { return fleet_to_dict(load_tsum(path)); }, py::arg("path"));
    m.def(
        "synth_json",
        [](const std::string& spec_json) {
            SynthSpec s = nlohmann::json::parse(spec_json).get<SynthSpec>();
            auto [fleet, truth] = generate_fleet(s);
            std::ostringstream csv;
            write_tsum(fleet, csv);
            return py::make_tuple(csv.str(), truth_to_json(truth).dump());
        },
        py::arg("spec_json"), "T-SUM CSV text and ground-truth JSON for a generator spec.");
    m.def(
        "score",
        [](const std::string& path, const std::string& method, const std::string& pm_path) {
            FleetDataset f = load_tsum(path);
            if (!pm_path.empty()) f.pm_logs = load_pm_log(pm_path);
            RunConfig cfg;
            cfg.method = method;
            return report_to_dict(score_segmented(f, parse_uni_method(method), cfg, nullptr));
        },
        py::arg("path"), py::arg("method") = "dbscan", py::arg("pm_path") = "");
    m.def(
        "run_pipeline_json",
        [](const std::string& config_json) {
            RunConfig cfg = config_from_json(nlohmann::json::parse(config_json));
            py::gil_scoped_release release;
            return run_pipeline(cfg).dump();
        },
        py::arg("config_json"));
}
