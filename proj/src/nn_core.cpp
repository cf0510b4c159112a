// SPDX-License-Identifier: Apache-2.0

#include "lostrace/nn_core.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace lostrace::nn {

namespace {

std::string shape_of(const Matrix& m) {
    return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
}

void check_groups(const std::vector<Eigen::Index>& groups, Eigen::Index width) {
    if (groups.empty())
        throw std::invalid_argument("softmax groups must not be empty");
    Eigen::Index total = 0;
    for (Eigen::Index g : groups) {
        if (g <= 0)
            throw std::invalid_argument("softmax group sizes must be positive");
        total += g;
    }
    if (total != width)
        throw std::invalid_argument("softmax groups sum to " + std::to_string(total) +
                                    ", expected " + std::to_string(width));
}

double stable_softplus(double x) {
    return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

Matrix apply_activation(const Matrix& pre, Activation activation,
                        const std::vector<Eigen::Index>& groups) {
    switch (activation) {
    case Activation::identity:
        return pre;
    case Activation::relu:
        return pre.cwiseMax(0.0);
    case Activation::tanh_fn:
        return pre.array().tanh().matrix();
    case Activation::sigmoid:
        return (1.0 / (1.0 + (-pre.array()).exp())).matrix();
    case Activation::softmax_groups:
        return softmax_groups_batch(pre, groups);
    }
    throw std::logic_error("unhandled activation");
}

} // namespace

DenseLayer make_layer(Eigen::Index in, Eigen::Index out, Activation activation, Rng& rng,
                      std::vector<Eigen::Index> groups) {
    if (in <= 0 || out <= 0)
        throw std::invalid_argument("layer dimensions must be positive");
    DenseLayer layer;
    layer.activation = activation;
    if (activation == Activation::softmax_groups)
        check_groups(groups, out);
    layer.groups = std::move(groups);
    const double std_dev = activation == Activation::relu
                               ? std::sqrt(2.0 / static_cast<double>(in))
                               : std::sqrt(1.0 / static_cast<double>(in));
    layer.weights.resize(out, in);
    for (Eigen::Index r = 0; r < out; ++r)
        for (Eigen::Index c = 0; c < in; ++c)
            layer.weights(r, c) = std_dev * rng.normal();
    layer.bias = Vector::Zero(out);
    return layer;
}

std::size_t parameter_count(const Network& network) {
    std::size_t count = 0;
    for (const DenseLayer& layer : network)
        count += static_cast<std::size_t>(layer.weights.size() + layer.bias.size());
    return count;
}

Matrix forward_batch(const Network& network, const Matrix& rows) {
    Matrix x = rows;
    for (std::size_t i = 0; i < network.size(); ++i) {
        const DenseLayer& layer = network[i];
        if (x.cols() != layer.weights.cols())
            throw std::invalid_argument("dense layer " + std::to_string(i) +
                                        ": input width " + std::to_string(x.cols()) +
                                        ", expected " + std::to_string(layer.weights.cols()));
        Matrix pre = x * layer.weights.transpose();
        pre.rowwise() += layer.bias.transpose();
        x = apply_activation(pre, layer.activation, layer.groups);
    }
    return x;
}

Vector forward(const Network& network, const Vector& input) {
    Matrix row = input.transpose();
    return forward_batch(network, row).row(0).transpose();
}

Matrix softmax_groups_batch(const Matrix& logits, const std::vector<Eigen::Index>& groups) {
    check_groups(groups, logits.cols());
    Matrix out(logits.rows(), logits.cols());
    for (Eigen::Index r = 0; r < logits.rows(); ++r) {
        Eigen::Index offset = 0;
        for (Eigen::Index g : groups) {
            const auto block = logits.row(r).segment(offset, g);
            const double peak = block.maxCoeff();
            Eigen::ArrayXd e = (block.array() - peak).exp();
            out.row(r).segment(offset, g) = (e / e.sum()).matrix();
            offset += g;
        }
    }
    return out;
}

Matrix hard_one_hot_groups(const Matrix& activations, const std::vector<Eigen::Index>& groups) {
    check_groups(groups, activations.cols());
    Matrix out = Matrix::Zero(activations.rows(), activations.cols());
    for (Eigen::Index r = 0; r < activations.rows(); ++r) {
        Eigen::Index offset = 0;
        for (Eigen::Index g : groups) {
            Eigen::Index best = 0;
            activations.row(r).segment(offset, g).maxCoeff(&best);
            out(r, offset + best) = 1.0;
            offset += g;
        }
    }
    return out;
}

Matrix gumbel_softmax_batch(const Matrix& logits, const std::vector<Eigen::Index>& groups,
                            double temperature, Rng& rng) {
    if (!(temperature > 0.0))
        throw std::invalid_argument("temperature must be positive");
    Matrix perturbed(logits.rows(), logits.cols());
    for (Eigen::Index r = 0; r < logits.rows(); ++r)
        for (Eigen::Index c = 0; c < logits.cols(); ++c)
            perturbed(r, c) = (logits(r, c) + rng.gumbel()) / temperature;
    return softmax_groups_batch(perturbed, groups);
}

Vector gumbel_softmax(const Vector& logits, const std::vector<Eigen::Index>& groups,
                      double temperature, std::uint64_t seed) {
    Rng rng(seed);
    return gumbel_softmax_batch(logits.transpose(), groups, temperature, rng).row(0).transpose();
}

Vector gaussian_reparameterize(const Vector& mu, const Vector& log_var, Rng& rng) {
    if (mu.size() != log_var.size())
        throw std::invalid_argument("mu has " + std::to_string(mu.size()) +
                                    " entries, log_var has " + std::to_string(log_var.size()));
    Vector out(mu.size());
    for (Eigen::Index i = 0; i < mu.size(); ++i)
        out[i] = mu[i] + std::exp(0.5 * log_var[i]) * rng.normal();
    return out;
}

Vector gaussian_reparameterize(const Vector& mu, const Vector& log_var, std::uint64_t seed) {
    Rng rng(seed);
    return gaussian_reparameterize(mu, log_var, rng);
}

// ---------------------------------------------------------------------
// Tape
// ---------------------------------------------------------------------

Tape::NodeId Tape::push(Node node) {
    nodes_.push_back(std::move(node));
    return static_cast<NodeId>(nodes_.size() - 1);
}

const Tape::Node& Tape::at(NodeId id) const {
    if (id < 0 || static_cast<std::size_t>(id) >= nodes_.size())
        throw std::invalid_argument("node " + std::to_string(id) + " is not on the tape");
    return nodes_[static_cast<std::size_t>(id)];
}

Tape::NodeId Tape::constant(Matrix value) {
    Node node;
    node.op = Op::constant;
    node.value = std::move(value);
    return push(std::move(node));
}

Tape::NodeId Tape::variable(Matrix value) {
    Node node;
    node.op = Op::variable;
    node.value = std::move(value);
    node.requires_grad = true;
    return push(std::move(node));
}

namespace {
void check_binary_shapes(const char* op, const Matrix& a, const Matrix& b) {
    if (a.rows() != b.rows() || a.cols() != b.cols())
        throw std::invalid_argument(std::string(op) + ": shape mismatch, " +
                                    std::to_string(a.rows()) + "x" + std::to_string(a.cols()) +
                                    " vs " + std::to_string(b.rows()) + "x" +
                                    std::to_string(b.cols()));
}
} // namespace

Tape::NodeId Tape::matmul(NodeId a, NodeId b) {
    const Node& na = at(a);
    const Node& nb = at(b);
    if (na.value.cols() != nb.value.rows())
        throw std::invalid_argument("matmul: inner dimensions " + shape_of(na.value) + " vs " +
                                    shape_of(nb.value));
    Node node;
    node.op = Op::matmul;
    node.a = a;
    node.b = b;
    node.requires_grad = na.requires_grad || nb.requires_grad;
    node.value.noalias() = na.value * nb.value;
    return push(std::move(node));
}

Tape::NodeId Tape::matmul_nt(NodeId a, NodeId b) {
    const Node& na = at(a);
    const Node& nb = at(b);
    if (na.value.cols() != nb.value.cols())
        throw std::invalid_argument("matmul_nt: inner dimensions " + shape_of(na.value) +
                                    " vs " + shape_of(nb.value) + "^T");
    Node node;
    node.op = Op::matmul_nt;
    node.a = a;
    node.b = b;
    node.requires_grad = na.requires_grad || nb.requires_grad;
    node.value.noalias() = na.value * nb.value.transpose();
    return push(std::move(node));
}

Tape::NodeId Tape::add(NodeId a, NodeId b) {
    const Node& na = at(a);
    const Node& nb = at(b);
    check_binary_shapes("add", na.value, nb.value);
    Node node;
    node.op = Op::add;
    node.a = a;
    node.b = b;
    node.requires_grad = na.requires_grad || nb.requires_grad;
    node.value = na.value + nb.value;
    return push(std::move(node));
}

Tape::NodeId Tape::sub(NodeId a, NodeId b) {
    const Node& na = at(a);
    const Node& nb = at(b);
    check_binary_shapes("sub", na.value, nb.value);
    Node node;
    node.op = Op::sub;
    node.a = a;
    node.b = b;
    node.requires_grad = na.requires_grad || nb.requires_grad;
    node.value = na.value - nb.value;
    return push(std::move(node));
}

Tape::NodeId Tape::mul(NodeId a, NodeId b) {
    const Node& na = at(a);
    const Node& nb = at(b);
    check_binary_shapes("mul", na.value, nb.value);
    Node node;
    node.op = Op::mul;
    node.a = a;
    node.b = b;
    node.requires_grad = na.requires_grad || nb.requires_grad;
    node.value = na.value.cwiseProduct(nb.value);
    return push(std::move(node));
}

Tape::NodeId Tape::add_row(NodeId a, NodeId row) {
    const Node& na = at(a);
    const Node& nr = at(row);
    if (nr.value.rows() != 1 || nr.value.cols() != na.value.cols())
        throw std::invalid_argument("add_row: row is " + shape_of(nr.value) + ", expected 1x" +
                                    std::to_string(na.value.cols()));
    Node node;
    node.op = Op::add_row;
    node.a = a;
    node.b = row;
    node.requires_grad = na.requires_grad || nr.requires_grad;
    node.value = na.value.rowwise() + nr.value.row(0);
    return push(std::move(node));
}

Tape::NodeId Tape::scale(NodeId a, double factor) {
    const Node& na = at(a);
    Node node;
    node.op = Op::scale;
    node.a = a;
    node.scalar = factor;
    node.requires_grad = na.requires_grad;
    node.value = na.value * factor;
    return push(std::move(node));
}

Tape::NodeId Tape::add_scalar(NodeId a, double addend) {
    const Node& na = at(a);
    Node node;
    node.op = Op::add_scalar;
    node.a = a;
    node.scalar = addend;
    node.requires_grad = na.requires_grad;
    node.value = na.value.array() + addend;
    return push(std::move(node));
}

Tape::NodeId Tape::relu(NodeId a) {
    const Node& na = at(a);
    Node node;
    node.op = Op::relu;
    node.a = a;
    node.requires_grad = na.requires_grad;
    node.value = na.value.cwiseMax(0.0);
    return push(std::move(node));
}

Tape::NodeId Tape::tanh_fn(NodeId a) {
    const Node& na = at(a);
    Node node;
    node.op = Op::tanh_fn;
    node.a = a;
    node.requires_grad = na.requires_grad;
    node.value = na.value.array().tanh().matrix();
    return push(std::move(node));
}

Tape::NodeId Tape::sigmoid(NodeId a) {
    const Node& na = at(a);
    Node node;
    node.op = Op::sigmoid;
    node.a = a;
    node.requires_grad = na.requires_grad;
    node.value = (1.0 / (1.0 + (-na.value.array()).exp())).matrix();
    return push(std::move(node));
}

Tape::NodeId Tape::exp_fn(NodeId a) {
    const Node& na = at(a);
    Node node;
    node.op = Op::exp_fn;
    node.a = a;
    node.requires_grad = na.requires_grad;
    node.value = na.value.array().exp().matrix();
    return push(std::move(node));
}

Tape::NodeId Tape::softplus(NodeId a) {
    const Node& na = at(a);
    Node node;
    node.op = Op::softplus;
    node.a = a;
    node.requires_grad = na.requires_grad;
    node.value = na.value.unaryExpr([](double x) { return stable_softplus(x); });
    return push(std::move(node));
}

Tape::NodeId Tape::group_softmax(NodeId a, const std::vector<Eigen::Index>& groups) {
    const Node& na = at(a);
    Node node;
    node.op = Op::group_softmax;
    node.a = a;
    node.groups = groups;
    node.requires_grad = na.requires_grad;
    node.value = softmax_groups_batch(na.value, groups);
    return push(std::move(node));
}

Tape::NodeId Tape::group_log_softmax(NodeId a, const std::vector<Eigen::Index>& groups) {
    const Node& na = at(a);
    check_groups(groups, na.value.cols());
    Node node;
    node.op = Op::group_log_softmax;
    node.a = a;
    node.groups = groups;
    node.requires_grad = na.requires_grad;
    node.value.resize(na.value.rows(), na.value.cols());
    for (Eigen::Index r = 0; r < na.value.rows(); ++r) {
        Eigen::Index offset = 0;
        for (Eigen::Index g : groups) {
            const auto block = na.value.row(r).segment(offset, g);
            const double peak = block.maxCoeff();
            const double lse = peak + std::log((block.array() - peak).exp().sum());
            node.value.row(r).segment(offset, g) = (block.array() - lse).matrix();
            offset += g;
        }
    }
    return push(std::move(node));
}

Tape::NodeId Tape::straight_through_hard(NodeId a, const std::vector<Eigen::Index>& groups) {
    const Node& na = at(a);
    Node node;
    node.op = Op::straight_through;
    node.a = a;
    node.groups = groups;
    node.requires_grad = na.requires_grad;
    node.value = hard_one_hot_groups(na.value, groups);
    return push(std::move(node));
}

Tape::NodeId Tape::concat_cols(NodeId a, NodeId b) {
    const Node& na = at(a);
    const Node& nb = at(b);
    if (na.value.rows() != nb.value.rows())
        throw std::invalid_argument("concat_cols: row counts " + shape_of(na.value) + " vs " +
                                    shape_of(nb.value));
    Node node;
    node.op = Op::concat_cols;
    node.a = a;
    node.b = b;
    node.requires_grad = na.requires_grad || nb.requires_grad;
    node.value.resize(na.value.rows(), na.value.cols() + nb.value.cols());
    node.value.leftCols(na.value.cols()) = na.value;
    node.value.rightCols(nb.value.cols()) = nb.value;
    return push(std::move(node));
}

Tape::NodeId Tape::slice_cols(NodeId a, Eigen::Index begin, Eigen::Index len) {
    const Node& na = at(a);
    if (begin < 0 || len < 0 || begin + len > na.value.cols())
        throw std::invalid_argument("slice_cols: [" + std::to_string(begin) + ", " +
                                    std::to_string(begin + len) + ") out of " +
                                    std::to_string(na.value.cols()) + " columns");
    Node node;
    node.op = Op::slice_cols;
    node.a = a;
    node.i0 = begin;
    node.i1 = len;
    node.requires_grad = na.requires_grad;
    node.value = na.value.middleCols(begin, len);
    return push(std::move(node));
}

Tape::NodeId Tape::row_sum(NodeId a) {
    const Node& na = at(a);
    Node node;
    node.op = Op::row_sum;
    node.a = a;
    node.requires_grad = na.requires_grad;
    node.value = na.value.rowwise().sum();
    return push(std::move(node));
}

Tape::NodeId Tape::sum_all(NodeId a) {
    const Node& na = at(a);
    Node node;
    node.op = Op::sum_all;
    node.a = a;
    node.requires_grad = na.requires_grad;
    node.value = Matrix::Constant(1, 1, na.value.sum());
    return push(std::move(node));
}

Tape::NodeId Tape::mean_all(NodeId a) {
    const Node& na = at(a);
    if (na.value.size() == 0)
        throw std::invalid_argument("mean_all of an empty node");
    Node node;
    node.op = Op::mean_all;
    node.a = a;
    node.requires_grad = na.requires_grad;
    node.value = Matrix::Constant(1, 1, na.value.mean());
    return push(std::move(node));
}

const Matrix& Tape::value(NodeId id) const { return at(id).value; }

bool Tape::requires_grad(NodeId id) const { return at(id).requires_grad; }

Matrix& Tape::grad_buffer(NodeId id) {
    Node& node = nodes_[static_cast<std::size_t>(id)];
    if (!node.grad_ready) {
        node.grad = Matrix::Zero(node.value.rows(), node.value.cols());
        node.grad_ready = true;
    }
    return node.grad;
}

void Tape::accumulate(NodeId id, const Matrix& delta) {
    if (!nodes_[static_cast<std::size_t>(id)].requires_grad)
        return;
    grad_buffer(id) += delta;
}

void Tape::backward(NodeId loss) {
    const Node& loss_node = at(loss);
    if (loss_node.value.rows() != 1 || loss_node.value.cols() != 1)
        throw std::invalid_argument("backward requires a 1x1 loss node, got " +
                                    shape_of(loss_node.value));
    if (!loss_node.requires_grad)
        throw std::invalid_argument("loss does not depend on any variable");

    for (Node& node : nodes_) {
        node.grad_ready = false;
    }
    swept_ = true;
    grad_buffer(loss) = Matrix::Constant(1, 1, 1.0);

    for (NodeId id = loss; id >= 0; --id) {
        Node& node = nodes_[static_cast<std::size_t>(id)];
        if (!node.requires_grad || !node.grad_ready)
            continue;
        const Matrix& g = node.grad;
        switch (node.op) {
        case Op::constant:
        case Op::variable:
            break;
        case Op::matmul: {
            const Node& na = nodes_[static_cast<std::size_t>(node.a)];
            const Node& nb = nodes_[static_cast<std::size_t>(node.b)];
            if (na.requires_grad)
                grad_buffer(node.a).noalias() += g * nb.value.transpose();
            if (nb.requires_grad)
                grad_buffer(node.b).noalias() += na.value.transpose() * g;
            break;
        }
        case Op::matmul_nt: {
            const Node& na = nodes_[static_cast<std::size_t>(node.a)];
            const Node& nb = nodes_[static_cast<std::size_t>(node.b)];
            if (na.requires_grad)
                grad_buffer(node.a).noalias() += g * nb.value;
            if (nb.requires_grad)
                grad_buffer(node.b).noalias() += g.transpose() * na.value;
            break;
        }
        case Op::add:
            accumulate(node.a, g);
            accumulate(node.b, g);
            break;
        case Op::sub:
            accumulate(node.a, g);
            accumulate(node.b, -g);
            break;
        case Op::mul: {
            const Node& na = nodes_[static_cast<std::size_t>(node.a)];
            const Node& nb = nodes_[static_cast<std::size_t>(node.b)];
            if (na.requires_grad)
                grad_buffer(node.a) += g.cwiseProduct(nb.value);
            if (nb.requires_grad)
                grad_buffer(node.b) += g.cwiseProduct(na.value);
            break;
        }
        case Op::add_row:
            accumulate(node.a, g);
            if (nodes_[static_cast<std::size_t>(node.b)].requires_grad)
                grad_buffer(node.b) += g.colwise().sum();
            break;
        case Op::scale:
            accumulate(node.a, g * node.scalar);
            break;
        case Op::add_scalar:
            accumulate(node.a, g);
            break;
        case Op::relu: {
            const Node& na = nodes_[static_cast<std::size_t>(node.a)];
            if (na.requires_grad)
                grad_buffer(node.a) +=
                    g.cwiseProduct((na.value.array() > 0.0).cast<double>().matrix());
            break;
        }
        case Op::tanh_fn:
            accumulate(node.a,
                       g.cwiseProduct((1.0 - node.value.array().square()).matrix()));
            break;
        case Op::sigmoid:
            accumulate(node.a, g.cwiseProduct(
                                   (node.value.array() * (1.0 - node.value.array())).matrix()));
            break;
        case Op::exp_fn:
            accumulate(node.a, g.cwiseProduct(node.value));
            break;
        case Op::softplus: {
            const Node& na = nodes_[static_cast<std::size_t>(node.a)];
            if (na.requires_grad)
                grad_buffer(node.a) += g.cwiseProduct(
                    (1.0 / (1.0 + (-na.value.array()).exp())).matrix());
            break;
        }
        case Op::group_softmax: {
            if (!nodes_[static_cast<std::size_t>(node.a)].requires_grad)
                break;
            Matrix& ga = grad_buffer(node.a);
            for (Eigen::Index r = 0; r < node.value.rows(); ++r) {
                Eigen::Index offset = 0;
                for (Eigen::Index gsize : node.groups) {
                    const auto y = node.value.row(r).segment(offset, gsize);
                    const auto gy = g.row(r).segment(offset, gsize);
                    const double dot = y.dot(gy);
                    ga.row(r).segment(offset, gsize) +=
                        (y.array() * (gy.array() - dot)).matrix();
                    offset += gsize;
                }
            }
            break;
        }
        case Op::group_log_softmax: {
            if (!nodes_[static_cast<std::size_t>(node.a)].requires_grad)
                break;
            Matrix& ga = grad_buffer(node.a);
            for (Eigen::Index r = 0; r < node.value.rows(); ++r) {
                Eigen::Index offset = 0;
                for (Eigen::Index gsize : node.groups) {
                    const auto y = node.value.row(r).segment(offset, gsize); // log softmax
                    const auto gy = g.row(r).segment(offset, gsize);
                    const double total = gy.sum();
                    ga.row(r).segment(offset, gsize) +=
                        (gy.array() - y.array().exp() * total).matrix();
                    offset += gsize;
                }
            }
            break;
        }
        case Op::straight_through:
            accumulate(node.a, g);
            break;
        case Op::concat_cols: {
            const Node& na = nodes_[static_cast<std::size_t>(node.a)];
            const Node& nb = nodes_[static_cast<std::size_t>(node.b)];
            if (na.requires_grad)
                grad_buffer(node.a) += g.leftCols(na.value.cols());
            if (nb.requires_grad)
                grad_buffer(node.b) += g.rightCols(nb.value.cols());
            break;
        }
        case Op::slice_cols:
            if (nodes_[static_cast<std::size_t>(node.a)].requires_grad)
                grad_buffer(node.a).middleCols(node.i0, node.i1) += g;
            break;
        case Op::row_sum:
            if (nodes_[static_cast<std::size_t>(node.a)].requires_grad) {
                const Node& na = nodes_[static_cast<std::size_t>(node.a)];
                grad_buffer(node.a) += g.replicate(1, na.value.cols());
            }
            break;
        case Op::sum_all:
            if (nodes_[static_cast<std::size_t>(node.a)].requires_grad) {
                const Node& na = nodes_[static_cast<std::size_t>(node.a)];
                grad_buffer(node.a).array() += g(0, 0);
                (void)na;
            }
            break;
        case Op::mean_all:
            if (nodes_[static_cast<std::size_t>(node.a)].requires_grad) {
                const Node& na = nodes_[static_cast<std::size_t>(node.a)];
                grad_buffer(node.a).array() +=
                    g(0, 0) / static_cast<double>(na.value.size());
            }
            break;
        }
    }
}

const Matrix& Tape::grad(NodeId id) const {
    const Node& node = at(id);
    if (!swept_)
        throw std::logic_error("backward() has not been run");
    if (!node.requires_grad)
        throw std::logic_error("node " + std::to_string(id) + " does not require gradients");
    if (!node.grad_ready)
        throw std::logic_error("node " + std::to_string(id) +
                               " is not reachable from the loss");
    return node.grad;
}

// ---------------------------------------------------------------------
// Adam
// ---------------------------------------------------------------------

void adam_step(AdamState& state, Eigen::Ref<Matrix> params, const Matrix& grads) {
    if (params.rows() != grads.rows() || params.cols() != grads.cols())
        throw std::invalid_argument("adam_step: parameter shape " + shape_of(params) +
                                    ", gradient shape " + shape_of(grads));
    if (!grads.allFinite())
        throw std::runtime_error("non-finite gradient");
    if (!(state.lr > 0.0))
        throw std::invalid_argument("learning rate must be positive");
    if (state.first_moment.size() == 0) {
        state.first_moment = Matrix::Zero(params.rows(), params.cols());
        state.second_moment = Matrix::Zero(params.rows(), params.cols());
    }
    state.step_count += 1;
    state.first_moment = state.beta1 * state.first_moment + (1.0 - state.beta1) * grads;
    state.second_moment = state.beta2 * state.second_moment +
                          (1.0 - state.beta2) * grads.cwiseProduct(grads);
    const double c1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step_count));
    const double c2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step_count));
    params.array() -= state.lr * (state.first_moment.array() / c1) /
                      ((state.second_moment.array() / c2).sqrt() + state.eps);
}

// ---------------------------------------------------------------------
// Network-on-tape helpers
// ---------------------------------------------------------------------

std::vector<TapedLayer> tape_network(Tape& tape, const Network& network, bool trainable) {
    std::vector<TapedLayer> out;
    out.reserve(network.size());
    for (const DenseLayer& layer : network) {
        TapedLayer tl;
        if (trainable) {
            tl.weights = tape.variable(layer.weights);
            tl.bias = tape.variable(layer.bias.transpose());
        } else {
            tl.weights = tape.constant(layer.weights);
            tl.bias = tape.constant(layer.bias.transpose());
        }
        out.push_back(tl);
    }
    return out;
}

Tape::NodeId apply_network(Tape& tape, const Network& network,
                           const std::vector<TapedLayer>& params, Tape::NodeId input) {
    if (network.size() != params.size())
        throw std::invalid_argument("taped parameter count does not match network depth");
    Tape::NodeId x = input;
    for (std::size_t i = 0; i < network.size(); ++i) {
        x = tape.add_row(tape.matmul_nt(x, params[i].weights), params[i].bias);
        switch (network[i].activation) {
        case Activation::identity:
            break;
        case Activation::relu:
            x = tape.relu(x);
            break;
        case Activation::tanh_fn:
            x = tape.tanh_fn(x);
            break;
        case Activation::sigmoid:
            x = tape.sigmoid(x);
            break;
        case Activation::softmax_groups:
            x = tape.group_softmax(x, network[i].groups);
            break;
        }
    }
    return x;
}

} // namespace lostrace::nn
