// SPDX-License-Identifier: Apache-2.0
//
// Dense-network substrate: layers with plain forward passes, a reverse-mode
// gradient tape over batched matrix operations, Adam updates, and the two
// stochastic relaxations (gumbel-softmax, gaussian reparameterization) the
// generative models are built from. 64-bit floats throughout; all randomness
// flows through explicit seeds.

#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

#include "lostrace/rng.hpp"

namespace lostrace::nn {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

enum class Activation : std::uint8_t { identity, relu, tanh_fn, sigmoid, softmax_groups };

struct DenseLayer {
    Matrix weights; // out x in
    Vector bias;    // out
    Activation activation = Activation::identity;
    std::vector<Eigen::Index> groups; // softmax group sizes; must sum to out
};

using Network = std::vector<DenseLayer>;

// Seeded He/Xavier-style initialization; bias starts at zero.
DenseLayer make_layer(Eigen::Index in, Eigen::Index out, Activation activation, Rng& rng,
                      std::vector<Eigen::Index> groups = {});

std::size_t parameter_count(const Network& network);

// Plain inference paths (no gradients).
Vector forward(const Network& network, const Vector& input);
Matrix forward_batch(const Network& network, const Matrix& rows); // rows: batch x in

// Row-wise grouped softmax, log-sum-exp stabilized.
Matrix softmax_groups_batch(const Matrix& logits, const std::vector<Eigen::Index>& groups);

// One-hot at the argmax of each group (ties break toward the lower index).
Matrix hard_one_hot_groups(const Matrix& activations, const std::vector<Eigen::Index>& groups);

// Relaxed one-hot draw per categorical group: softmax((logits + gumbel)/tau).
Matrix gumbel_softmax_batch(const Matrix& logits, const std::vector<Eigen::Index>& groups,
                            double temperature, Rng& rng);
Vector gumbel_softmax(const Vector& logits, const std::vector<Eigen::Index>& groups,
                      double temperature, std::uint64_t seed);

// mu + exp(log_var / 2) * standard-normal draw, element-wise.
Vector gaussian_reparameterize(const Vector& mu, const Vector& log_var, Rng& rng);
Vector gaussian_reparameterize(const Vector& mu, const Vector& log_var, std::uint64_t seed);

// ----------------------------------------------------------------------
// Reverse-mode tape. Nodes are matrices; ops record enough to push exact
// gradients from a 1x1 loss node back to every `variable` leaf. Nodes only
// reachable from `constant` leaves are skipped during the backward sweep.
// ----------------------------------------------------------------------
class Tape {
  public:
    using NodeId = std::int32_t;

    NodeId constant(Matrix value);
    NodeId variable(Matrix value);

    NodeId matmul(NodeId a, NodeId b);    // (m x k) * (k x n)
    NodeId matmul_nt(NodeId a, NodeId b); // (m x k) * (n x k)^T -> m x n
    NodeId add(NodeId a, NodeId b);
    NodeId sub(NodeId a, NodeId b);
    NodeId mul(NodeId a, NodeId b); // element-wise
    NodeId add_row(NodeId a, NodeId row); // broadcast a 1 x n row over a's rows
    NodeId scale(NodeId a, double factor);
    NodeId add_scalar(NodeId a, double addend);
    NodeId relu(NodeId a);
    NodeId tanh_fn(NodeId a);
    NodeId sigmoid(NodeId a);
    NodeId exp_fn(NodeId a);
    NodeId softplus(NodeId a);
    NodeId group_softmax(NodeId a, const std::vector<Eigen::Index>& groups);
    NodeId group_log_softmax(NodeId a, const std::vector<Eigen::Index>& groups);
    // Straight-through hard sample: value is the one-hot argmax per group,
    // backward passes the gradient through unchanged (estimator, not the
    // exact derivative of the forward value).
    NodeId straight_through_hard(NodeId a, const std::vector<Eigen::Index>& groups);
    NodeId concat_cols(NodeId a, NodeId b);
    NodeId slice_cols(NodeId a, Eigen::Index begin, Eigen::Index len);
    NodeId row_sum(NodeId a);  // b x n -> b x 1
    NodeId sum_all(NodeId a);  // -> 1 x 1
    NodeId mean_all(NodeId a); // -> 1 x 1

    const Matrix& value(NodeId id) const;
    bool requires_grad(NodeId id) const;

    // Reverse sweep from a 1x1 loss node; gradients accumulate on every
    // reachable differentiable node. Throws when the node is not on the tape
    // or not scalar.
    void backward(NodeId loss);

    // Gradient of the last backward() loss w.r.t. this node.
    const Matrix& grad(NodeId id) const;

    std::size_t size() const { return nodes_.size(); }

  private:
    enum class Op : std::uint8_t {
        constant, variable, matmul, matmul_nt, add, sub, mul, add_row, scale, add_scalar,
        relu, tanh_fn, sigmoid, exp_fn, softplus, group_softmax, group_log_softmax,
        straight_through, concat_cols, slice_cols, row_sum, sum_all, mean_all,
    };

    struct Node {
        Op op;
        NodeId a = -1, b = -1;
        Matrix value;
        Matrix grad;
        bool requires_grad = false;
        bool grad_ready = false;
        double scalar = 0.0;
        Eigen::Index i0 = 0, i1 = 0; // slice begin / length
        std::vector<Eigen::Index> groups;
    };

    NodeId push(Node node);
    const Node& at(NodeId id) const;
    Matrix& grad_buffer(NodeId id);
    void accumulate(NodeId id, const Matrix& delta);

    std::vector<Node> nodes_;
    bool swept_ = false;
};

// ----------------------------------------------------------------------
// Adam state for one parameter tensor. Moments are lazily sized on the
// first step; step_count drives the bias correction.
// ----------------------------------------------------------------------
struct AdamState {
    double lr = 2e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    long step_count = 0;
    Matrix first_moment;
    Matrix second_moment;
};

// Standard bias-corrected Adam update in place. Throws "non-finite gradient"
// when grads contain NaN or infinity.
void adam_step(AdamState& state, Eigen::Ref<Matrix> params, const Matrix& grads);

// ----------------------------------------------------------------------
// Tape helpers for whole networks.
// ----------------------------------------------------------------------
struct TapedLayer {
    Tape::NodeId weights = -1; // out x in
    Tape::NodeId bias = -1;    // 1 x out
};

// Registers every layer's parameters as differentiable variables
// (trainable = true) or frozen constants (trainable = false).
std::vector<TapedLayer> tape_network(Tape& tape, const Network& network, bool trainable = true);

// Applies the network to a (batch x in) node using the taped parameters.
Tape::NodeId apply_network(Tape& tape, const Network& network,
                           const std::vector<TapedLayer>& params, Tape::NodeId input);

} // namespace lostrace::nn
