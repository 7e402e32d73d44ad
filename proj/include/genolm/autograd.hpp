#ifndef GENOLM_AUTOGRAD_HPP
#define GENOLM_AUTOGRAD_HPP

#include <algorithm>
#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "genolm/rng.hpp"

namespace genolm {

/// Dense row-major matrix of doubles. All forward/backward arithmetic runs
/// in double precision; float32 rounding happens only at the parameter store
/// so checkpoints round-trip bit-exactly.
struct Matrix {
    int rows = 0;
    int cols = 0;
    std::vector<double> data;

    Matrix() = default;
    Matrix(int r, int c) : rows(r), cols(c), data(static_cast<std::size_t>(r) * c, 0.0) {}

    double& at(int i, int j) { return data[static_cast<std::size_t>(i) * cols + j]; }
    double at(int i, int j) const { return data[static_cast<std::size_t>(i) * cols + j]; }
    double* row(int i) { return data.data() + static_cast<std::size_t>(i) * cols; }
    const double* row(int i) const { return data.data() + static_cast<std::size_t>(i) * cols; }
    std::size_t size() const { return data.size(); }
    bool same_shape(const Matrix& o) const { return rows == o.rows && cols == o.cols; }
};

/// Snap every entry to its nearest float32-representable value.
void round_to_float32(Matrix& m);

/// Named trainable tensor. `grad` accumulates across graphs until the
/// optimizer consumes and clears it. Non-trainable parameters participate in
/// the forward pass as constants.
struct Parameter {
    std::string name;
    Matrix value;
    Matrix grad;
    bool trainable = true;

    Parameter() = default;
    Parameter(std::string n, int r, int c) : name(std::move(n)), value(r, c), grad(r, c) {}
    void zero_grad() { std::fill(grad.data.begin(), grad.data.end(), 0.0); }
};

/// Reverse-mode tape. Nodes are created in topological order by
/// construction; backward() walks the tape in reverse, accumulating
/// gradients lazily (nodes that never receive an upstream gradient are
/// skipped). Parameter leaves write their gradients directly into
/// Parameter::grad, so one optimizer step can consume contributions from
/// any number of graphs.
class Graph {
public:
    using NodeId = int;

    NodeId leaf(Parameter& p);
    NodeId constant(Matrix m);

    const Matrix& value(NodeId id) const { return nodes_[static_cast<std::size_t>(id)].value; }
    /// Gradient of a node after backward(); zeros if the node was never
    /// reached. Intended for tests.
    Matrix grad_of(NodeId id) const;

    NodeId matmul(NodeId a, NodeId b);     // A·B
    NodeId matmul_nt(NodeId a, NodeId b);  // A·Bᵀ (B stored row-major as out×in)
    NodeId add(NodeId a, NodeId b);
    NodeId add_rowvec(NodeId a, NodeId v);  // v is 1×n, broadcast over rows
    NodeId mul(NodeId a, NodeId b);
    NodeId scale(NodeId a, double s);
    NodeId sigmoid(NodeId a);
    NodeId tanh_op(NodeId a);
    NodeId relu(NodeId a);
    NodeId swish(NodeId a);  // x · sigmoid(x)
    NodeId layer_norm(NodeId x, NodeId gamma, NodeId beta, double eps = 1e-5);
    /// Row-wise softmax; columns with key_valid[j] == false get probability
    /// zero and receive no gradient.
    NodeId softmax_rows_masked(NodeId scores, const std::vector<bool>& key_valid);
    /// Rotary rotation of consecutive column pairs; the angle for row m and
    /// pair p is (m + position_offset) · base^(-2p/cols).
    NodeId rope(NodeId x, double base, int position_offset = 0);
    NodeId slice_cols(NodeId x, int start, int len);
    NodeId concat_cols(const std::vector<NodeId>& parts);
    NodeId gather_rows(NodeId x, std::vector<int> indices);
    NodeId mean_rows_masked(NodeId x, const std::vector<bool>& keep);
    NodeId max_over_rows(NodeId x);  // global max pool per column, 1×cols
    NodeId dropout(NodeId x, double rate, Rng& rng);
    /// Valid 1-d convolution over a base-index sequence (A=0..T=3, anything
    /// negative is a zero column). weights is filters×(kernel_width·4),
    /// bias 1×filters; output (T-kernel_width+1)×filters.
    NodeId conv1d_onehot(const std::vector<int>& base_indices, NodeId weights, NodeId bias,
                         int kernel_width);
    /// Single-layer LSTM over a base-index sequence, returning the final
    /// hidden state (1×H). Gate order in the stacked tensors is input,
    /// forget, cell, output: w_input 4H×4, w_recur 4H×H, bias 1×4H.
    /// Backpropagation through time runs inside the node.
    NodeId lstm_final_state(const std::vector<int>& base_indices, NodeId w_input, NodeId w_recur,
                            NodeId bias);
    /// Sum over rows of softmax cross-entropy against integer targets; 1×1.
    NodeId cross_entropy_sum(NodeId logits, std::vector<int> targets);

    void backward(NodeId loss);
    std::size_t num_nodes() const { return nodes_.size(); }

private:
    struct Node {
        Matrix value;
        Matrix* external_grad = nullptr;       // parameter leaves
        std::unique_ptr<Matrix> own_grad;      // interior nodes, lazily allocated
        bool needs_grad = false;
        std::function<void()> backprop;
    };

    std::vector<Node> nodes_;

    NodeId push(Matrix value, bool needs_grad);
    bool needs(NodeId id) const { return nodes_[static_cast<std::size_t>(id)].needs_grad; }
    bool grad_present(NodeId id) const;
    Matrix& grad_ref(NodeId id);  // allocates zeros on first touch
};

/// Adam with bias correction. After every step the parameters (and moments)
/// are rounded to the float32 grid, matching the checkpoint representation.
class Adam {
public:
    Adam(std::vector<Parameter*> params, double learning_rate, double beta1 = 0.9,
         double beta2 = 0.999, double epsilon = 1e-8);

    void set_learning_rate(double lr) { learning_rate_ = lr; }
    double learning_rate() const { return learning_rate_; }
    void step();  // applies grads, rounds, and zeroes grads
    std::int64_t step_count() const { return step_count_; }

    const std::vector<Parameter*>& params() const { return params_; }
    std::vector<Matrix>& first_moments() { return m_; }
    std::vector<Matrix>& second_moments() { return v_; }
    void set_step_count(std::int64_t t) { step_count_ = t; }

private:
    std::vector<Parameter*> params_;
    std::vector<Matrix> m_;
    std::vector<Matrix> v_;
    double learning_rate_;
    double beta1_, beta2_, epsilon_;
    std::int64_t step_count_ = 0;
};

}  // namespace genolm

#endif
