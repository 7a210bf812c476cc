#include "tttm/graphnet.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <numeric>
#include <random>
#include <sstream>

#include <fmt/format.h>

namespace tttm {

using nlohmann::json;
namespace ad = tttm::ad;

Arch parse_arch(const std::string& s) {
    if (s == "mtad_gat" || s == "mtadgat") return Arch::mtad_gat;
    if (s == "gdn") return Arch::gdn;
    throw std::invalid_argument("unknown architecture: " + s);
}

std::string to_string(Arch a) { return a == Arch::gdn ? "gdn" : "mtad_gat"; }

void GnnHyperParams::validate() const {
    if (!(window > kernel && kernel >= 1)) throw std::invalid_argument("need window > kernel >= 1");
    if (kernel % 2 == 0) throw std::invalid_argument("kernel must be odd");
    if (!(dropout >= 0 && dropout < 1)) throw std::invalid_argument("dropout must be in [0,1)");
    if (!(learn_rate > 0)) throw std::invalid_argument("learn_rate must be > 0");
    if (embed_dim < 1 || gru_units < 1 || gru_layers < 1 || head_units < 1) throw std::invalid_argument("sizes must be >= 1");
    if (epochs < 0 || batch < 1) throw std::invalid_argument("epochs >= 0 and batch >= 1 required");
}

GnnHyperParams GnnHyperParams::defaults_for(Arch a) {
    GnnHyperParams h;
    h.arch = a;
    h.embed_dim = a == Arch::gdn ? 128 : 50;
    return h;
}

void to_json(json& j, const GnnHyperParams& h) {
    j = json{{"window", h.window},         {"kernel", h.kernel},           {"dropout", h.dropout},
             {"learn_rate", h.learn_rate}, {"gru_layers", h.gru_layers},   {"gru_units", h.gru_units},
             {"embed_dim", h.embed_dim},   {"head_units", h.head_units},   {"leaky_slope", h.leaky_slope},
             {"epochs", h.epochs},         {"batch", h.batch},             {"arch", to_string(h.arch)},
             {"seed", h.seed},             {"gap_limit", h.gap_limit},     {"center_features", h.center_features}};
}

void from_json(const json& j, GnnHyperParams& h) {
    if (j.contains("arch")) h = GnnHyperParams::defaults_for(parse_arch(j.at("arch").get<std::string>()));
    auto opt = [&j](const char* k, auto& v) {
        if (j.contains(k)) j.at(k).get_to(v);
    };
    opt("window", h.window);
    opt("kernel", h.kernel);
    opt("dropout", h.dropout);
    opt("learn_rate", h.learn_rate);
    opt("gru_layers", h.gru_layers);
    opt("gru_units", h.gru_units);
    opt("embed_dim", h.embed_dim);
    opt("head_units", h.head_units);
    opt("leaky_slope", h.leaky_slope);
    opt("epochs", h.epochs);
    opt("batch", h.batch);
    opt("seed", h.seed);
    opt("gap_limit", h.gap_limit);
    opt("center_features", h.center_features);
}

const Matrix& ModelParams::get(const std::string& name) const {
    for (size_t i = 0; i < names.size(); ++i)
        if (names[i] == name) return values[i];
    throw NotFoundError("no parameter " + name);
}

Matrix& ModelParams::get(const std::string& name) {
    return const_cast<Matrix&>(static_cast<const ModelParams&>(*this).get(name));
}

size_t ModelParams::count() const {
    size_t n = 0;
    for (const auto& v : values) n += static_cast<size_t>(v.size());
    return n;
}

namespace {

struct Shape {
    std::string name;
    Eigen::Index rows, cols, fan_in;
};

std::vector<Shape> param_shapes(int N, const GnnHyperParams& h) {
    const Eigen::Index z = h.embed_dim, w = h.window, H = h.gru_units, U = h.head_units;
    std::vector<Shape> s;
    if (h.arch == Arch::mtad_gat) {
        s.push_back({"conv", h.kernel, 1, h.kernel});
        s.push_back({"W", z, w, w});
        s.push_back({"a", 2 * z, 1, 2 * z});
        for (int l = 0; l < h.gru_layers; ++l) {
            Eigen::Index in = l == 0 ? 2 * N : H;
            for (const char* g : {"z", "r", "n"}) {
                s.push_back({fmt::format("gru{}.W{}", l, g), H, in, H});
                s.push_back({fmt::format("gru{}.U{}", l, g), H, H, H});
                s.push_back({fmt::format("gru{}.b{}", l, g), H, 1, H});
            }
        }
        s.push_back({"fc1.W", U, H, H});
        s.push_back({"fc1.b", U, 1, H});
        s.push_back({"fc2.W", N, U, U});
        s.push_back({"fc2.b", N, 1, U});
        s.push_back({"rc1.W", U, H, H});
        s.push_back({"rc1.b", U, 1, H});
        s.push_back({"rc2.W", N * w, U, U});
        s.push_back({"rc2.b", N * w, 1, U});
    } else {
        s.push_back({"W", z, w, w});
        s.push_back({"a", 2 * z, 1, 2 * z});
        // Embeddings have no input; fan_in 1 gives the [-1, 1] range.
        s.push_back({"V", N, z, 1});
        s.push_back({"g1.W", z, U, z});
        s.push_back({"g1.b", 1, U, z});
        s.push_back({"g2.W", U, 1, U});
        s.push_back({"g2.b", 1, 1, U});
    }
    return s;
}

}  // namespace

ModelParams init_params(const std::vector<std::string>& sensors, const GnnHyperParams& hyper) {
    hyper.validate();
    ModelParams p;
    p.hyper = hyper;
    p.sensors = sensors;
    std::mt19937_64 rng(hyper.seed);
    for (const auto& s : param_shapes(static_cast<int>(sensors.size()), hyper)) {
        double b = 1.0 / std::sqrt(static_cast<double>(s.fan_in));
        std::uniform_real_distribution<double> u(-b, b);
        Matrix m(s.rows, s.cols);
        for (Eigen::Index j = 0; j < m.cols(); ++j)
            for (Eigen::Index i = 0; i < m.rows(); ++i) m(i, j) = u(rng);
        p.names.push_back(s.name);
        p.values.push_back(std::move(m));
    }
    return p;
}

SliceResult window_slice(const TsumMatrix& tool, int window, const std::vector<std::string>& model_sensors,
                         double gap_limit, const std::vector<std::int64_t>& pm_events) {
    if (window < 2) throw std::invalid_argument("window must be >= 2");
    SliceResult r;
    const int p = tool.n_points();
    if (p < window) {
        r.too_short = true;
        r.dropped_points = p;
        return r;
    }
    std::vector<int> rows, src;
    if (model_sensors.empty()) {
        for (int i = 0; i < tool.n_sensors(); ++i) {
            rows.push_back(i);
            src.push_back(i);
        }
    } else {
        for (int i = 0; i < tool.n_sensors(); ++i) {
            auto it = std::find(model_sensors.begin(), model_sensors.end(), tool.sensors[i]);
            if (it == model_sensors.end()) continue;
            rows.push_back(static_cast<int>(it - model_sensors.begin()));
            src.push_back(i);
        }
    }
    if (gap_limit <= 0 && p >= 2) {
        std::vector<double> gaps;
        for (int j = 1; j < p; ++j) gaps.push_back(static_cast<double>(tool.timestamps[j] - tool.timestamps[j - 1]));
        std::nth_element(gaps.begin(), gaps.begin() + gaps.size() / 2, gaps.end());
        gap_limit = 3.0 * std::max(gaps[gaps.size() / 2], 1.0);
    }
    // True when columns j-1 and j may sit in one window.
    auto joined = [&](int j) {
        if (static_cast<double>(tool.timestamps[j] - tool.timestamps[j - 1]) > gap_limit) return false;
        for (auto e : pm_events)
            if (tool.timestamps[j - 1] < e && e <= tool.timestamps[j]) return false;
        return true;
    };
    const int nw = p / window;
    r.dropped_points = p - nw * window;
    for (int w = 0; w < nw; ++w) {
        const int c0 = w * window;
        bool ok = true;
        for (int j = c0 + 1; j < c0 + window; ++j) ok = ok && joined(j);
        if (!ok) {
            ++r.discarded_gap;
            continue;
        }
        WindowBatch b;
        b.tool = tool.tool;
        b.index = w;
        b.rows = rows;
        b.values.resize(static_cast<Eigen::Index>(src.size()), window);
        for (size_t i = 0; i < src.size(); ++i) b.values.row(static_cast<Eigen::Index>(i)) = tool.values.block(src[i], c0, 1, window);
        const int nx = c0 + window;
        if (nx < p && joined(nx)) {
            b.has_next = true;
            b.next.resize(static_cast<Eigen::Index>(src.size()));
            for (size_t i = 0; i < src.size(); ++i) b.next[static_cast<Eigen::Index>(i)] = tool.values(src[i], nx);
        }
        r.windows.push_back(std::move(b));
    }
    return r;
}

namespace {

struct Vars {
    std::map<std::string, ad::Var> v;
    const ad::Var& operator[](const std::string& k) const { return v.at(k); }
};

Vars bind(ad::Tape& tape, const ModelParams& p, bool trainable) {
    Vars out;
    for (size_t i = 0; i < p.names.size(); ++i)
        out.v.emplace(p.names[i], trainable ? tape.leaf(p.values[i]) : tape.constant(p.values[i]));
    return out;
}

Matrix scatter_matrix(const std::vector<int>& rows, Eigen::Index N) {
    Matrix S = Matrix::Zero(N, static_cast<Eigen::Index>(rows.size()));
    for (size_t i = 0; i < rows.size(); ++i) S(rows[i], static_cast<Eigen::Index>(i)) = 1.0;
    return S;
}

bool full_rows(const std::vector<int>& rows, Eigen::Index N) {
    if (static_cast<Eigen::Index>(rows.size()) != N) return false;
    for (size_t i = 0; i < rows.size(); ++i)
        if (rows[i] != static_cast<int>(i)) return false;
    return true;
}

struct GatVars {
    ad::Var H, alpha;
};

// G = F W^T; attention over j != i on (G + extra); H = tanh(alpha G).
GatVars gat(ad::Tape& /*tape*/, ad::Var F, const ad::Var* extra, const Vars& pv, const GnnHyperParams& h,
            std::mt19937_64* dropout_rng) {
    const Eigen::Index n = F.rows(), z = h.embed_dim;
    ad::Var G = ad::matmul(F, ad::transpose(pv["W"]));
    ad::Var Qin = extra ? ad::add(G, *extra) : G;
    ad::Var s1 = ad::matmul(Qin, ad::rows(pv["a"], 0, z));
    ad::Var s2 = ad::matmul(Qin, ad::rows(pv["a"], z, z));
    ad::Var E = ad::leaky_relu(ad::outer_sum(s1, s2), h.leaky_slope);
    Matrix mask = Matrix::Ones(n, n) - Matrix::Identity(n, n);
    ad::Var alpha = ad::masked_softmax(E, mask);
    if (dropout_rng && h.dropout > 0) {
        std::bernoulli_distribution keep(1.0 - h.dropout);
        Matrix m(n, n);
        for (Eigen::Index j = 0; j < n; ++j)
            for (Eigen::Index i = 0; i < n; ++i) m(i, j) = keep(*dropout_rng) ? 1.0 / (1.0 - h.dropout) : 0.0;
        alpha = ad::cmul_const(alpha, m);
    }
    return {ad::tanh(ad::matmul(alpha, G)), alpha};
}

struct BatchGraph {
    ad::Var loss;
    ad::Var forecast;  // N x B
    ad::Var recon;     // N*w x B (mtad) or unset
    std::vector<ad::Var> H;
    std::vector<ad::Var> alpha;
};

BatchGraph build(ad::Tape& tape, const std::vector<WindowBatch>& batch, const ModelParams& p, const Vars& pv,
                 std::mt19937_64* dropout_rng) {
    const auto& h = p.hyper;
    const Eigen::Index N = static_cast<Eigen::Index>(p.sensors.size());
    const Eigen::Index w = h.window;
    const Eigen::Index B = static_cast<Eigen::Index>(batch.size());
    BatchGraph out;

    Matrix Y = Matrix::Zero(N, B), Wf = Matrix::Zero(N, B);
    for (Eigen::Index b = 0; b < B; ++b) {
        const auto& win = batch[b];
        if (win.values.cols() != w) throw std::invalid_argument("window length does not match the model");
        if (!win.has_next || win.rows.empty()) continue;
        for (size_t i = 0; i < win.rows.size(); ++i) {
            Y(win.rows[i], b) = win.next[static_cast<Eigen::Index>(i)];
            Wf(win.rows[i], b) = 1.0 / (static_cast<double>(win.rows.size()) * B);
        }
    }

    if (h.arch == Arch::mtad_gat) {
        std::vector<ad::Var> inputs;
        Matrix R = Matrix::Zero(N * w, B), Wr = Matrix::Zero(N * w, B);
        for (Eigen::Index b = 0; b < B; ++b) {
            const auto& win = batch[b];
            ad::Var X = tape.constant(win.values);
            ad::Var F = ad::conv1d_edge(X, pv["conv"]);
            auto g = gat(tape, F, nullptr, pv, h, dropout_rng);
            out.H.push_back(g.H);
            out.alpha.push_back(g.alpha);
            ad::Var U = ad::tanh(ad::matmul(g.alpha, F));
            Matrix Xfull;
            if (full_rows(win.rows, N)) {
                Xfull = win.values;
            } else {
                Matrix S = scatter_matrix(win.rows, N);
                Xfull = S * win.values;
                U = ad::matmul(tape.constant(S), U);
            }
            inputs.push_back(ad::vcat(tape.constant(Xfull), U));
            for (size_t i = 0; i < win.rows.size(); ++i)
                for (Eigen::Index t = 0; t < w; ++t) {
                    R(win.rows[i] + N * t, b) = win.values(static_cast<Eigen::Index>(i), t);
                    Wr(win.rows[i] + N * t, b) = 1.0 / (static_cast<double>(win.rows.size()) * w * B);
                }
        }
        ad::Var all = ad::hcat(inputs);  // 2N x B*w, window-major
        std::vector<ad::Var> seq;
        for (Eigen::Index t = 0; t < w; ++t) {
            Matrix sel = Matrix::Zero(B * w, B);
            for (Eigen::Index b = 0; b < B; ++b) sel(b * w + t, b) = 1.0;
            seq.push_back(ad::matmul(all, tape.constant(sel)));
        }
        ad::Var hstate = tape.constant(Matrix::Zero(h.gru_units, B));
        for (int l = 0; l < h.gru_layers; ++l) {
            auto P = [&](const char* g) { return pv[fmt::format("gru{}.{}", l, g)]; };
            ad::Var hs = tape.constant(Matrix::Zero(h.gru_units, B));
            std::vector<ad::Var> outs;
            for (const auto& x : seq) {
                ad::Var zg = ad::sigmoid(ad::add_col_bcast(ad::add(ad::matmul(P("Wz"), x), ad::matmul(P("Uz"), hs)), P("bz")));
                ad::Var rg = ad::sigmoid(ad::add_col_bcast(ad::add(ad::matmul(P("Wr"), x), ad::matmul(P("Ur"), hs)), P("br")));
                ad::Var ng = ad::tanh(ad::add_col_bcast(
                    ad::add(ad::matmul(P("Wn"), x), ad::cmul(rg, ad::matmul(P("Un"), hs))), P("bn")));
                hs = ad::add(ng, ad::cmul(zg, ad::sub(hs, ng)));
                outs.push_back(hs);
            }
            seq = outs;
            hstate = hs;
        }
        auto head = [&](const char* a, const char* b) {
            ad::Var hid = ad::relu(ad::add_col_bcast(ad::matmul(pv[fmt::format("{}.W", a)], hstate), pv[fmt::format("{}.b", a)]));
            return ad::add_col_bcast(ad::matmul(pv[fmt::format("{}.W", b)], hid), pv[fmt::format("{}.b", b)]);
        };
        out.forecast = head("fc1", "fc2");
        out.recon = head("rc1", "rc2");
        out.loss = ad::add(ad::weighted_sse(out.forecast, Y, Wf), ad::weighted_sse(out.recon, R, Wr));
    } else {
        std::vector<ad::Var> cols;
        for (Eigen::Index b = 0; b < B; ++b) {
            const auto& win = batch[b];
            ad::Var X = tape.constant(win.values);
            bool full = full_rows(win.rows, N);
            Matrix S = full ? Matrix() : scatter_matrix(win.rows, N);
            ad::Var V = full ? pv["V"] : ad::matmul(tape.constant(S.transpose()), pv["V"]);
            auto g = gat(tape, X, &V, pv, h, dropout_rng);
            out.H.push_back(g.H);
            out.alpha.push_back(g.alpha);
            ad::Var hid = ad::relu(ad::add_row_bcast(ad::matmul(ad::cmul(V, g.H), pv["g1.W"]), pv["g1.b"]));
            ad::Var y = ad::add_row_bcast(ad::matmul(hid, pv["g2.W"]), pv["g2.b"]);
            if (!full) y = ad::matmul(tape.constant(S), y);
            cols.push_back(y);
        }
        out.forecast = ad::hcat(cols);
        out.loss = ad::weighted_sse(out.forecast, Y, Wf);
    }
    return out;
}

}  // namespace

Matrix conv_features(const WindowBatch& win, const ModelParams& p) {
    if (p.hyper.arch != Arch::mtad_gat) return win.values;
    ad::Tape tape;
    return ad::conv1d_edge(tape.constant(win.values), tape.constant(p.get("conv"))).value();
}

GatOutput gat_forward(const Matrix& F, const ModelParams& p) {
    ad::Tape tape;
    Vars pv = bind(tape, p, false);
    auto g = gat(tape, tape.constant(F), nullptr, pv, p.hyper, nullptr);
    return {g.H.value(), g.alpha.value()};
}

ForwardOutput model_forward(const WindowBatch& win, const ModelParams& p) {
    ad::Tape tape;
    Vars pv = bind(tape, p, false);
    auto g = build(tape, {win}, p, pv, nullptr);
    ForwardOutput o;
    o.forecast = g.forecast.value().col(0);
    const Eigen::Index N = static_cast<Eigen::Index>(p.sensors.size()), w = p.hyper.window;
    if (p.hyper.arch == Arch::mtad_gat) {
        o.reconstruction = Eigen::Map<const Matrix>(g.recon.value().data(), N, w);
    } else {
        o.reconstruction = Matrix::Zero(N, w);
        for (size_t i = 0; i < win.rows.size(); ++i) o.reconstruction.row(win.rows[i]) = win.values.row(static_cast<Eigen::Index>(i));
    }
    o.H = g.H.front().value();
    return o;
}

double loss(const std::vector<WindowBatch>& batch, const ModelParams& p) {
    ad::Tape tape;
    Vars pv = bind(tape, p, false);
    return build(tape, batch, p, pv, nullptr).loss.value()(0, 0);
}

std::pair<double, std::vector<Matrix>> loss_and_grad(const std::vector<WindowBatch>& batch, const ModelParams& p) {
    ad::Tape tape;
    Vars pv = bind(tape, p, true);
    auto g = build(tape, batch, p, pv, nullptr);
    tape.backward(g.loss);
    std::vector<Matrix> grads;
    for (const auto& name : p.names) {
        const auto& gr = pv[name].grad();
        grads.push_back(gr.size() ? gr : Matrix::Zero(p.get(name).rows(), p.get(name).cols()));
    }
    return {g.loss.value()(0, 0), grads};
}

TrainResult train(const FleetDataset& fleet, const GnnHyperParams& hyper) {
    hyper.validate();
    TrainResult r;
    auto sensors = union_sensors(fleet);
    r.params = init_params(sensors, hyper);
    std::vector<WindowBatch> wins;
    for (const auto& t : fleet.tools) {
        std::vector<std::int64_t> pm;
        if (auto it = fleet.pm_logs.find(t.tool); it != fleet.pm_logs.end()) pm = it->second;
        auto s = window_slice(t, hyper.window, sensors, hyper.gap_limit, pm);
        r.discarded_gap += s.discarded_gap;
        for (auto& w : s.windows) wins.push_back(std::move(w));
    }
    r.windows = static_cast<int>(wins.size());
    if (static_cast<int>(wins.size()) < hyper.batch)
        throw std::invalid_argument(fmt::format("{} windows available, batch size {} needs more", wins.size(), hyper.batch));

    // Shuffling and dropout draw from separate streams so either can change alone.
    std::mt19937_64 shuffle_rng(hyper.seed ^ 0x5851f42d4c957f2dULL);
    std::mt19937_64 dropout_rng(hyper.seed ^ 0x14057b7ef767814fULL);
    std::vector<size_t> order(wins.size());
    auto& P = r.params;
    for (int ep = 0; ep < hyper.epochs; ++ep) {
        std::iota(order.begin(), order.end(), 0);
        std::shuffle(order.begin(), order.end(), shuffle_rng);
        double total = 0.0;
        for (size_t s = 0; s < order.size(); s += static_cast<size_t>(hyper.batch)) {
            std::vector<WindowBatch> batch;
            for (size_t k = s; k < std::min(order.size(), s + static_cast<size_t>(hyper.batch)); ++k)
                batch.push_back(wins[order[k]]);
            ad::Tape tape;
            Vars pv = bind(tape, P, true);
            auto g = build(tape, batch, P, pv, &dropout_rng);
            double l = g.loss.value()(0, 0);
            if (!std::isfinite(l))
                throw NumericError(fmt::format("training diverged: loss {} at epoch {}, batch starting {}", l, ep, s));
            tape.backward(g.loss);
            for (size_t i = 0; i < P.names.size(); ++i) {
                const auto& gr = pv[P.names[i]].grad();
                if (gr.size()) P.values[i] -= hyper.learn_rate * gr;
            }
            total += l * static_cast<double>(batch.size());
        }
        r.loss_trace.push_back(total / static_cast<double>(wins.size()));
    }
    return r;
}

std::vector<ToolGraph> extract_graphs(const TsumMatrix& tool, const ModelParams& p, const std::vector<double>& taus,
                                      const std::vector<std::int64_t>& pm_events,
                                      std::optional<std::uint64_t> dropout_seed) {
    for (double t : taus)
        if (!(t > 0 && t <= 1)) throw std::invalid_argument("tau_g must lie in (0, 1]");
    auto slice = window_slice(tool, p.hyper.window, p.sensors, p.hyper.gap_limit, pm_events);
    std::vector<std::string> sensors;
    std::vector<std::string> flags;
    for (const auto& s : tool.sensors) {
        if (std::find(p.sensors.begin(), p.sensors.end(), s) != p.sensors.end())
            sensors.push_back(s);
        else
            flags.push_back("unknown_sensor:" + s);
    }
    const Eigen::Index n = static_cast<Eigen::Index>(sensors.size());
    std::vector<Matrix> acc(taus.size(), Matrix::Zero(n, n));
    bool zero_feature = false;
    std::mt19937_64 drop(dropout_seed.value_or(0));
    for (const auto& win : slice.windows) {
        ad::Tape tape;
        Vars pv = bind(tape, p, false);
        auto g = build(tape, {win}, p, pv, dropout_seed ? &drop : nullptr);
        Matrix C = node_similarity(g.H.front().value(), p.hyper.center_features, &zero_feature);
        for (size_t k = 0; k < taus.size(); ++k)
            for (Eigen::Index i = 0; i < n; ++i)
                for (Eigen::Index j = 0; j < n; ++j)
                    if (i != j && C(i, j) >= taus[k]) acc[k](i, j) += 1.0;
    }
    if (zero_feature) flags.push_back("zero_node_feature");
    if (slice.windows.empty()) flags.push_back("no_windows");
    std::vector<ToolGraph> out;
    for (size_t k = 0; k < taus.size(); ++k) {
        ToolGraph g;
        g.tool = tool.tool;
        g.sensors = sensors;
        g.window_count = static_cast<int>(slice.windows.size());
        g.adjacency = g.window_count ? Matrix(acc[k] / g.window_count) : acc[k];
        // Cosine is symmetric only up to rounding; keep the matrix exactly symmetric.
        g.adjacency = 0.5 * (g.adjacency + g.adjacency.transpose()).eval();
        g.flags = flags;
        out.push_back(std::move(g));
    }
    return out;
}

Matrix node_similarity(const Matrix& raw, bool center, bool* zero_feature) {
    const Eigen::Index n = raw.rows();
    Matrix H = raw;
    if (center && n > 0) H.rowwise() -= H.colwise().mean();
    Vector norms = H.rowwise().norm();
    Matrix C = Matrix::Zero(n, n);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < n; ++j) {
            if (i == j) continue;
            // Equal non-zero features are parallel whether or not centering erased them.
            if (raw.row(i) == raw.row(j) && raw.row(i).squaredNorm() > 0) {
                C(i, j) = 1.0;
                continue;
            }
            if (norms[i] == 0 || norms[j] == 0) {
                if (zero_feature) *zero_feature = true;
                continue;
            }
            C(i, j) = H.row(i).dot(H.row(j)) / (norms[i] * norms[j]);
        }
    return C;
}

ToolGraph extract_graph(const TsumMatrix& tool, const ModelParams& p, double tau_g,
                        const std::vector<std::int64_t>& pm_events) {
    return extract_graphs(tool, p, {tau_g}, pm_events).front();
}

namespace {
constexpr char kMagic[8] = {'T', 'T', 'T', 'M', 'G', 'N', 'N', '\0'};
constexpr std::uint32_t kVersion = 1;
}  // namespace

void save_model(const ModelParams& p, const std::string& path) {
    json meta;
    meta["hyper"] = p.hyper;
    meta["sensors"] = p.sensors;
    json shapes = json::array();
    for (size_t i = 0; i < p.names.size(); ++i)
        shapes.push_back({{"name", p.names[i]}, {"rows", p.values[i].rows()}, {"cols", p.values[i].cols()}});
    meta["params"] = shapes;
    std::string text = meta.dump();
    std::ofstream out(path, std::ios::binary);
    if (!out) throw NotFoundError("cannot write " + path);
    out.write(kMagic, sizeof kMagic);
    std::uint32_t v = kVersion, len = static_cast<std::uint32_t>(text.size());
    out.write(reinterpret_cast<const char*>(&v), sizeof v);
    out.write(reinterpret_cast<const char*>(&len), sizeof len);
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    for (const auto& m : p.values)
        out.write(reinterpret_cast<const char*>(m.data()), static_cast<std::streamsize>(m.size() * sizeof(double)));
}

ModelParams load_model(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw NotFoundError("cannot open " + path);
    char magic[8];
    in.read(magic, sizeof magic);
    if (!in || std::memcmp(magic, kMagic, sizeof magic) != 0) throw ParseError(path + ": not a model file");
    std::uint32_t v = 0, len = 0;
    in.read(reinterpret_cast<char*>(&v), sizeof v);
    in.read(reinterpret_cast<char*>(&len), sizeof len);
    if (v != kVersion) throw ParseError(fmt::format("{}: unsupported model version {}", path, v));
    std::string text(len, '\0');
    in.read(text.data(), len);
    auto meta = json::parse(text);
    ModelParams p;
    p.hyper = meta.at("hyper").get<GnnHyperParams>();
    p.sensors = meta.at("sensors").get<std::vector<std::string>>();
    for (const auto& s : meta.at("params")) {
        Matrix m(s.at("rows").get<Eigen::Index>(), s.at("cols").get<Eigen::Index>());
        in.read(reinterpret_cast<char*>(m.data()), static_cast<std::streamsize>(m.size() * sizeof(double)));
        p.names.push_back(s.at("name").get<std::string>());
        p.values.push_back(std::move(m));
    }
    if (!in) throw ParseError(path + ": truncated model file");
    return p;
}

void write_graph_csv(const ToolGraph& g, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw NotFoundError("cannot write " + path);
    out << "sensor_id";
    for (const auto& s : g.sensors) out << ',' << s;
    out << '\n';
    for (size_t i = 0; i < g.sensors.size(); ++i) {
        out << g.sensors[i];
        for (size_t j = 0; j < g.sensors.size(); ++j)
            out << ',' << fmt6(g.adjacency(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)));
        out << '\n';
    }
}

ToolGraph read_graph_csv(const std::string& path, const std::string& tool) {
    std::ifstream in(path);
    if (!in) throw NotFoundError("cannot open " + path);
    ToolGraph g;
    g.tool = tool;
    std::string line;
    if (!std::getline(in, line)) throw ParseError(path + ": empty graph file");
    std::stringstream hs(line);
    std::string cell;
    std::getline(hs, cell, ',');
    while (std::getline(hs, cell, ',')) g.sensors.push_back(cell);
    const auto n = static_cast<Eigen::Index>(g.sensors.size());
    g.adjacency = Matrix::Zero(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        if (!std::getline(in, line)) throw ParseError(path + ": missing rows");
        std::stringstream ls(line);
        std::getline(ls, cell, ',');
        if (cell != g.sensors[i]) throw ParseError(path + ": row label mismatch");
        for (Eigen::Index j = 0; j < n; ++j) {
            if (!std::getline(ls, cell, ',')) throw ParseError(path + ": short row");
            g.adjacency(i, j) = std::stod(cell);
        }
    }
    return g;
}

}  // namespace tttm
