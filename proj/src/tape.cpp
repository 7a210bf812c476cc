#include "tttm/tape.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace tttm::ad {

const Matrix& Var::value() const { return tape->value(id); }
const Matrix& Var::grad() const { return tape->grad(id); }

Var Tape::leaf(const Matrix& v) {
    nodes_.push_back({v, Matrix(), true, {}, nullptr});
    return {this, static_cast<int>(nodes_.size()) - 1};
}

Var Tape::constant(const Matrix& v) {
    nodes_.push_back({v, Matrix(), false, {}, nullptr});
    return {this, static_cast<int>(nodes_.size()) - 1};
}

Var Tape::push(Matrix v, std::vector<int> inputs, std::function<void(Tape&, int)> back) {
    bool needs = false;
    for (int i : inputs) needs = needs || nodes_[i].needs_grad;
    nodes_.push_back({std::move(v), Matrix(), needs, std::move(inputs), needs ? std::move(back) : nullptr});
    return {this, static_cast<int>(nodes_.size()) - 1};
}

void Tape::accumulate(int id, const Matrix& g) {
    auto& n = nodes_[id];
    if (!n.needs_grad) return;
    if (n.grad.size() == 0)
        n.grad = g;
    else
        n.grad += g;
}

void Tape::backward(Var root, double seed) {
    if (root.value().size() != 1) throw std::invalid_argument("backward needs a scalar root");
    accumulate(root.id, Matrix::Constant(1, 1, seed));
    for (int id = root.id; id >= 0; --id) {
        auto& n = nodes_[id];
        if (!n.back || n.grad.size() == 0) continue;
        n.back(*this, id);
    }
}

namespace {

void check_same(Var a, Var b, const char* op) {
    if (a.rows() != b.rows() || a.cols() != b.cols())
        throw std::invalid_argument(std::string(op) + ": shape mismatch");
}

}  // namespace

Var matmul(Var a, Var b) {
    if (a.cols() != b.rows()) throw std::invalid_argument("matmul: shape mismatch");
    Tape& t = *a.tape;
    return t.push(a.value() * b.value(), {a.id, b.id}, [a, b](Tape& t, int self) {
        const Matrix& g = t.grad(self);
        if (t.needs(a.id)) t.accumulate(a.id, g * b.value().transpose());
        if (t.needs(b.id)) t.accumulate(b.id, a.value().transpose() * g);
    });
}

Var transpose(Var a) {
    return a.tape->push(a.value().transpose(), {a.id},
                        [a](Tape& t, int self) { t.accumulate(a.id, t.grad(self).transpose()); });
}

Var add(Var a, Var b) {
    check_same(a, b, "add");
    return a.tape->push(a.value() + b.value(), {a.id, b.id}, [a, b](Tape& t, int self) {
        t.accumulate(a.id, t.grad(self));
        t.accumulate(b.id, t.grad(self));
    });
}

Var sub(Var a, Var b) {
    check_same(a, b, "sub");
    return a.tape->push(a.value() - b.value(), {a.id, b.id}, [a, b](Tape& t, int self) {
        t.accumulate(a.id, t.grad(self));
        if (t.needs(b.id)) t.accumulate(b.id, -t.grad(self));
    });
}

Var cmul(Var a, Var b) {
    check_same(a, b, "cmul");
    return a.tape->push(a.value().cwiseProduct(b.value()), {a.id, b.id}, [a, b](Tape& t, int self) {
        const Matrix& g = t.grad(self);
        if (t.needs(a.id)) t.accumulate(a.id, g.cwiseProduct(b.value()));
        if (t.needs(b.id)) t.accumulate(b.id, g.cwiseProduct(a.value()));
    });
}

Var scale(Var a, double s) {
    return a.tape->push(a.value() * s, {a.id}, [a, s](Tape& t, int self) { t.accumulate(a.id, t.grad(self) * s); });
}

Var add_col_bcast(Var a, Var col) {
    if (col.cols() != 1 || col.rows() != a.rows()) throw std::invalid_argument("add_col_bcast: shape mismatch");
    Matrix v = a.value().colwise() + col.value().col(0);
    return a.tape->push(std::move(v), {a.id, col.id}, [a, col](Tape& t, int self) {
        t.accumulate(a.id, t.grad(self));
        if (t.needs(col.id)) t.accumulate(col.id, t.grad(self).rowwise().sum());
    });
}

Var add_row_bcast(Var a, Var row) {
    if (row.rows() != 1 || row.cols() != a.cols()) throw std::invalid_argument("add_row_bcast: shape mismatch");
    Matrix v = a.value().rowwise() + row.value().row(0);
    return a.tape->push(std::move(v), {a.id, row.id}, [a, row](Tape& t, int self) {
        t.accumulate(a.id, t.grad(self));
        if (t.needs(row.id)) t.accumulate(row.id, t.grad(self).colwise().sum());
    });
}

Var outer_sum(Var u, Var v) {
    if (u.cols() != 1 || v.cols() != 1) throw std::invalid_argument("outer_sum: column vectors expected");
    Matrix o = u.value().replicate(1, v.rows()) + v.value().transpose().replicate(u.rows(), 1);
    return u.tape->push(std::move(o), {u.id, v.id}, [u, v](Tape& t, int self) {
        const Matrix& g = t.grad(self);
        if (t.needs(u.id)) t.accumulate(u.id, g.rowwise().sum());
        if (t.needs(v.id)) t.accumulate(v.id, g.colwise().sum().transpose());
    });
}

Var tanh(Var a) {
    Matrix y = a.value().array().tanh().matrix();
    return a.tape->push(y, {a.id}, [a](Tape& t, int self) {
        const Matrix& y = t.value(self);
        t.accumulate(a.id, t.grad(self).cwiseProduct((1.0 - y.array().square()).matrix()));
    });
}

Var sigmoid(Var a) {
    Matrix y = (1.0 / (1.0 + (-a.value().array()).exp())).matrix();
    return a.tape->push(y, {a.id}, [a](Tape& t, int self) {
        const Matrix& y = t.value(self);
        t.accumulate(a.id, t.grad(self).cwiseProduct((y.array() * (1.0 - y.array())).matrix()));
    });
}

Var relu(Var a) {
    Matrix y = a.value().cwiseMax(0.0);
    return a.tape->push(y, {a.id}, [a](Tape& t, int self) {
        Matrix mask = (a.value().array() > 0).cast<double>().matrix();
        t.accumulate(a.id, t.grad(self).cwiseProduct(mask));
    });
}

Var leaky_relu(Var a, double slope) {
    Matrix y = a.value().unaryExpr([slope](double x) { return x > 0 ? x : slope * x; });
    return a.tape->push(y, {a.id}, [a, slope](Tape& t, int self) {
        Matrix d = a.value().unaryExpr([slope](double x) { return x > 0 ? 1.0 : slope; });
        t.accumulate(a.id, t.grad(self).cwiseProduct(d));
    });
}

Var masked_softmax(Var a, const Matrix& mask) {
    if (mask.rows() != a.rows() || mask.cols() != a.cols()) throw std::invalid_argument("masked_softmax: mask shape");
    const Matrix& x = a.value();
    Matrix y = Matrix::Zero(x.rows(), x.cols());
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
        double mx = -std::numeric_limits<double>::infinity();
        for (Eigen::Index j = 0; j < x.cols(); ++j)
            if (mask(i, j) > 0) mx = std::max(mx, x(i, j));
        if (!std::isfinite(mx)) continue;
        double z = 0.0;
        for (Eigen::Index j = 0; j < x.cols(); ++j)
            if (mask(i, j) > 0) z += (y(i, j) = std::exp(x(i, j) - mx));
        y.row(i) /= z;
    }
    return a.tape->push(y, {a.id}, [a](Tape& t, int self) {
        const Matrix& y = t.value(self);
        const Matrix& g = t.grad(self);
        Matrix gy = g.cwiseProduct(y);
        Eigen::VectorXd dot = gy.rowwise().sum();
        t.accumulate(a.id, gy - y.cwiseProduct(dot.replicate(1, y.cols())));
    });
}

Var cmul_const(Var a, const Matrix& m) {
    if (m.rows() != a.rows() || m.cols() != a.cols()) throw std::invalid_argument("cmul_const: shape mismatch");
    return a.tape->push(a.value().cwiseProduct(m), {a.id},
                        [a, m](Tape& t, int self) { t.accumulate(a.id, t.grad(self).cwiseProduct(m)); });
}

Var conv1d_edge(Var x, Var kernel) {
    const Eigen::Index k = kernel.value().size();
    if (k % 2 == 0) throw std::invalid_argument("conv1d_edge: kernel size must be odd");
    const Eigen::Index w = x.cols(), c = k / 2;
    auto src = [w, c](Eigen::Index col, Eigen::Index tap) {
        return std::clamp<Eigen::Index>(col + tap - c, 0, w - 1);
    };
    const Matrix& xv = x.value();
    const Matrix& kv = kernel.value();
    Matrix y = Matrix::Zero(xv.rows(), w);
    for (Eigen::Index j = 0; j < w; ++j)
        for (Eigen::Index m = 0; m < k; ++m) y.col(j) += kv(m) * xv.col(src(j, m));
    return x.tape->push(y, {x.id, kernel.id}, [x, kernel, src, w, k](Tape& t, int self) {
        const Matrix& g = t.grad(self);
        const Matrix& xv = x.value();
        const Matrix& kv = kernel.value();
        if (t.needs(x.id)) {
            Matrix gx = Matrix::Zero(xv.rows(), w);
            for (Eigen::Index j = 0; j < w; ++j)
                for (Eigen::Index m = 0; m < k; ++m) gx.col(src(j, m)) += kv(m) * g.col(j);
            t.accumulate(x.id, gx);
        }
        if (t.needs(kernel.id)) {
            Matrix gk = Matrix::Zero(kv.rows(), kv.cols());
            for (Eigen::Index j = 0; j < w; ++j)
                for (Eigen::Index m = 0; m < k; ++m) gk(m) += g.col(j).dot(xv.col(src(j, m)));
            t.accumulate(kernel.id, gk);
        }
    });
}

Var rows(Var a, Eigen::Index start, Eigen::Index len) {
    if (start < 0 || start + len > a.rows()) throw std::invalid_argument("rows: out of range");
    return a.tape->push(a.value().middleRows(start, len), {a.id}, [a, start, len](Tape& t, int self) {
        Matrix g = Matrix::Zero(a.rows(), a.cols());
        g.middleRows(start, len) = t.grad(self);
        t.accumulate(a.id, g);
    });
}

Var vcat(Var a, Var b) {
    if (a.cols() != b.cols()) throw std::invalid_argument("vcat: column mismatch");
    Matrix v(a.rows() + b.rows(), a.cols());
    v << a.value(), b.value();
    return a.tape->push(std::move(v), {a.id, b.id}, [a, b](Tape& t, int self) {
        const Matrix& g = t.grad(self);
        if (t.needs(a.id)) t.accumulate(a.id, g.topRows(a.rows()));
        if (t.needs(b.id)) t.accumulate(b.id, g.bottomRows(b.rows()));
    });
}

Var hcat(const std::vector<Var>& parts) {
    if (parts.empty()) throw std::invalid_argument("hcat: empty");
    Eigen::Index r = parts.front().rows(), c = 0;
    std::vector<int> ids;
    for (const auto& p : parts) {
        if (p.rows() != r) throw std::invalid_argument("hcat: row mismatch");
        c += p.cols();
        ids.push_back(p.id);
    }
    Matrix v(r, c);
    Eigen::Index off = 0;
    for (const auto& p : parts) {
        v.middleCols(off, p.cols()) = p.value();
        off += p.cols();
    }
    return parts.front().tape->push(std::move(v), ids, [parts](Tape& t, int self) {
        const Matrix& g = t.grad(self);
        Eigen::Index off = 0;
        for (const auto& p : parts) {
            if (t.needs(p.id)) t.accumulate(p.id, g.middleCols(off, p.cols()));
            off += p.cols();
        }
    });
}

Var weighted_sse(Var a, const Matrix& target, const Matrix& weights) {
    if (target.rows() != a.rows() || target.cols() != a.cols() || weights.rows() != a.rows() ||
        weights.cols() != a.cols())
        throw std::invalid_argument("weighted_sse: shape mismatch");
    Matrix diff = a.value() - target;
    double v = weights.cwiseProduct(diff.cwiseProduct(diff)).sum();
    return a.tape->push(Matrix::Constant(1, 1, v), {a.id}, [a, target, weights](Tape& t, int self) {
        double g = t.grad(self)(0, 0);
        t.accumulate(a.id, 2.0 * g * weights.cwiseProduct(a.value() - target));
    });
}

}  // namespace tttm::ad
