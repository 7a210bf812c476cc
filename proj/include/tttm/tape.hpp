#pragma once

#include <functional>
#include <vector>

#include <Eigen/Dense>

// Matrix-level reverse-mode differentiation. Every op records its output and a
// closure that pushes the output adjoint back to its inputs.
namespace tttm::ad {

using Matrix = Eigen::MatrixXd;

class Tape;

struct Var {
    Tape* tape = nullptr;
    int id = -1;

    const Matrix& value() const;
    const Matrix& grad() const;
    Eigen::Index rows() const { return value().rows(); }
    Eigen::Index cols() const { return value().cols(); }
};

class Tape {
public:
    Var leaf(const Matrix& v);      // receives a gradient
    Var constant(const Matrix& v);  // never does

    void backward(Var root, double seed = 1.0);

    const Matrix& value(int id) const { return nodes_[id].value; }
    const Matrix& grad(int id) const { return nodes_[id].grad; }
    size_t size() const { return nodes_.size(); }

    // Internal: register an op output.
    Var push(Matrix v, std::vector<int> inputs, std::function<void(Tape&, int)> back);
    bool needs(int id) const { return nodes_[id].needs_grad; }
    void accumulate(int id, const Matrix& g);

private:
    struct Node {
        Matrix value;
        Matrix grad;
        bool needs_grad = false;
        std::vector<int> inputs;
        std::function<void(Tape&, int)> back;
    };
    std::vector<Node> nodes_;
};

Var matmul(Var a, Var b);
Var transpose(Var a);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var cmul(Var a, Var b);
Var scale(Var a, double s);
Var add_col_bcast(Var a, Var col);  // a (n x m) + col (n x 1) on every column
Var add_row_bcast(Var a, Var row);  // a (n x m) + row (1 x m) on every row
Var outer_sum(Var u, Var v);        // (i, j) -> u_i + v_j, both column vectors
Var tanh(Var a);
Var sigmoid(Var a);
Var relu(Var a);
Var leaky_relu(Var a, double slope);
// Row-wise softmax restricted to entries where mask is 1; an empty row maps to zeros.
Var masked_softmax(Var a, const Matrix& mask);
Var cmul_const(Var a, const Matrix& m);
// Same-length temporal convolution of each row with an odd kernel, edge-replicated.
Var conv1d_edge(Var x, Var kernel);
Var rows(Var a, Eigen::Index start, Eigen::Index len);
Var vcat(Var a, Var b);
Var hcat(const std::vector<Var>& parts);
// sum of w .* (a - t)^2 as a 1 x 1 value
Var weighted_sse(Var a, const Matrix& target, const Matrix& weights);

}  // namespace tttm::ad
