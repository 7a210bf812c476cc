#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "tttm/fleet.hpp"
#include "tttm/tape.hpp"

namespace tttm {

struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

enum class Arch { mtad_gat, gdn };
Arch parse_arch(const std::string& s);  // accepts mtad_gat, mtadgat, gdn
std::string to_string(Arch a);

struct GnnHyperParams {
    int window = 7;
    int kernel = 3;
    double dropout = 0.2;
    double learn_rate = 1e-3;
    int gru_layers = 1;
    int gru_units = 50;
    int embed_dim = 50;
    int head_units = 50;
    double leaky_slope = 0.2;
    int epochs = 1000;
    int batch = 16;
    Arch arch = Arch::mtad_gat;
    std::uint64_t seed = 0;
    // Largest allowed timestamp jump inside a window; 0 means 3x the tool's median spacing.
    double gap_limit = 0.0;
    // Cosine similarity on node features centered across the window's sensors.
    bool center_features = true;

    void validate() const;
    static GnnHyperParams defaults_for(Arch a);
};

void to_json(nlohmann::json& j, const GnnHyperParams& h);
void from_json(const nlohmann::json& j, GnnHyperParams& h);

struct ModelParams {
    GnnHyperParams hyper;
    std::vector<std::string> sensors;  // node order shared by every tool
    std::vector<std::string> names;
    std::vector<Matrix> values;

    const Matrix& get(const std::string& name) const;
    Matrix& get(const std::string& name);
    size_t count() const;  // scalar parameter count
};

ModelParams init_params(const std::vector<std::string>& sensors, const GnnHyperParams& hyper);

struct WindowBatch {
    std::string tool;
    int index = 0;
    Matrix values;           // n x window, rows follow `rows`
    std::vector<int> rows;   // positions in the model sensor list
    bool has_next = false;
    Vector next;             // successor column, same row order
};

struct SliceResult {
    std::vector<WindowBatch> windows;
    int dropped_points = 0;
    int discarded_gap = 0;
    bool too_short = false;
};

SliceResult window_slice(const TsumMatrix& tool, int window, const std::vector<std::string>& model_sensors = {},
                         double gap_limit = 0.0, const std::vector<std::int64_t>& pm_events = {});

Matrix conv_features(const WindowBatch& win, const ModelParams& p);

struct GatOutput {
    Matrix H;
    Matrix attention;
};

GatOutput gat_forward(const Matrix& F, const ModelParams& p);

struct ForwardOutput {
    Vector forecast;       // model sensor order
    Matrix reconstruction; // model sensors x window
    Matrix H;              // window rows x embed
};

ForwardOutput model_forward(const WindowBatch& win, const ModelParams& p);

// Mean over windows of forecast MSE plus reconstruction MSE.
double loss(const std::vector<WindowBatch>& batch, const ModelParams& p);

// Loss and gradient per parameter (same order as p.values); dropout off.
std::pair<double, std::vector<Matrix>> loss_and_grad(const std::vector<WindowBatch>& batch, const ModelParams& p);

struct TrainResult {
    ModelParams params;
    std::vector<double> loss_trace;
    int windows = 0;
    int discarded_gap = 0;
};

TrainResult train(const FleetDataset& fleet, const GnnHyperParams& hyper);

struct ToolGraph {
    std::string tool;
    std::vector<std::string> sensors;
    Matrix adjacency;
    int window_count = 0;
    std::vector<std::string> flags;
};

// Pairwise cosine similarity of node feature rows, optionally centered across
// rows first; zero diagonal, zero where a row has no direction.
Matrix node_similarity(const Matrix& H, bool center, bool* zero_feature = nullptr);

ToolGraph extract_graph(const TsumMatrix& tool, const ModelParams& p, double tau_g,
                        const std::vector<std::int64_t>& pm_events = {});

// One graph per threshold from a single pass over the windows. A dropout seed
// turns on attention dropout during extraction.
std::vector<ToolGraph> extract_graphs(const TsumMatrix& tool, const ModelParams& p, const std::vector<double>& taus,
                                      const std::vector<std::int64_t>& pm_events = {},
                                      std::optional<std::uint64_t> dropout_seed = std::nullopt);

void save_model(const ModelParams& p, const std::string& path);
ModelParams load_model(const std::string& path);

void write_graph_csv(const ToolGraph& g, const std::string& path);
ToolGraph read_graph_csv(const std::string& path, const std::string& tool);

}  // namespace tttm
