// SPDX-License-Identifier: Apache-2.0
//
// Randomized gradient checks: tape gradients against central finite
// differences of a hand-rolled, tape-free loss recomputation. Shared by the
// unit suite and the acceptance runner.

#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include "lostrace/nn_core.hpp"
#include "lostrace/rng.hpp"

namespace lostrace::gradcheck {

using nn::Matrix;

enum class LossKind : int {
    logistic = 0,   // mean softplus(-score), GAN-style
    vae_elbo = 1,   // grouped cross-entropy + gaussian KL
    gumbel = 2,     // weighted gumbel-softmax output
    op_soup = 3,    // slice/concat/reduction ops on a raw variable
};

struct CheckCase {
    LossKind kind = LossKind::logistic;
    nn::Network net_a;
    nn::Network net_b; // decoder for vae_elbo
    Matrix input;
    Matrix eps;     // reparameterization noise (vae_elbo)
    Matrix targets; // one-hot targets (vae_elbo)
    Matrix gumbel;  // gumbel noise (gumbel)
    Matrix weights; // output weighting (gumbel)
    double temperature = 0.2;
    std::vector<Eigen::Index> groups;
};

inline std::vector<double> flatten(const std::vector<const nn::Network*>& nets,
                                   const Matrix* extra = nullptr) {
    std::vector<double> flat;
    for (const nn::Network* net : nets)
        for (const nn::DenseLayer& layer : *net) {
            for (Eigen::Index r = 0; r < layer.weights.rows(); ++r)
                for (Eigen::Index c = 0; c < layer.weights.cols(); ++c)
                    flat.push_back(layer.weights(r, c));
            for (Eigen::Index i = 0; i < layer.bias.size(); ++i)
                flat.push_back(layer.bias[i]);
        }
    if (extra != nullptr)
        for (Eigen::Index r = 0; r < extra->rows(); ++r)
            for (Eigen::Index c = 0; c < extra->cols(); ++c)
                flat.push_back((*extra)(r, c));
    return flat;
}

inline std::size_t scatter(std::vector<nn::Network*> nets, const std::vector<double>& flat,
                           Matrix* extra = nullptr) {
    std::size_t k = 0;
    for (nn::Network* net : nets)
        for (nn::DenseLayer& layer : *net) {
            for (Eigen::Index r = 0; r < layer.weights.rows(); ++r)
                for (Eigen::Index c = 0; c < layer.weights.cols(); ++c)
                    layer.weights(r, c) = flat[k++];
            for (Eigen::Index i = 0; i < layer.bias.size(); ++i)
                layer.bias[i] = flat[k++];
        }
    if (extra != nullptr)
        for (Eigen::Index r = 0; r < extra->rows(); ++r)
            for (Eigen::Index c = 0; c < extra->cols(); ++c)
                (*extra)(r, c) = flat[k++];
    return k;
}

// Hand-rolled dense forward, scalar loops only.
inline Matrix plain_forward(const nn::Network& net, const Matrix& rows) {
    Matrix x = rows;
    for (const nn::DenseLayer& layer : net) {
        Matrix pre(x.rows(), layer.weights.rows());
        for (Eigen::Index r = 0; r < x.rows(); ++r)
            for (Eigen::Index o = 0; o < layer.weights.rows(); ++o) {
                double acc = layer.bias[o];
                for (Eigen::Index i = 0; i < x.cols(); ++i)
                    acc += x(r, i) * layer.weights(o, i);
                pre(r, o) = acc;
            }
        switch (layer.activation) {
        case nn::Activation::identity:
            break;
        case nn::Activation::relu:
            for (Eigen::Index r = 0; r < pre.rows(); ++r)
                for (Eigen::Index c = 0; c < pre.cols(); ++c)
                    pre(r, c) = pre(r, c) > 0.0 ? pre(r, c) : 0.0;
            break;
        case nn::Activation::tanh_fn:
            for (Eigen::Index r = 0; r < pre.rows(); ++r)
                for (Eigen::Index c = 0; c < pre.cols(); ++c)
                    pre(r, c) = std::tanh(pre(r, c));
            break;
        case nn::Activation::sigmoid:
            for (Eigen::Index r = 0; r < pre.rows(); ++r)
                for (Eigen::Index c = 0; c < pre.cols(); ++c)
                    pre(r, c) = 1.0 / (1.0 + std::exp(-pre(r, c)));
            break;
        case nn::Activation::softmax_groups:
            throw std::logic_error("softmax hidden layers are exercised via the loss paths");
        }
        x = pre;
    }
    return x;
}

inline void plain_group_log_softmax(const Matrix& logits,
                                    const std::vector<Eigen::Index>& groups, Matrix& out) {
    out.resize(logits.rows(), logits.cols());
    for (Eigen::Index r = 0; r < logits.rows(); ++r) {
        Eigen::Index offset = 0;
        for (Eigen::Index g : groups) {
            double peak = logits(r, offset);
            for (Eigen::Index i = 1; i < g; ++i)
                peak = std::max(peak, logits(r, offset + i));
            double sum = 0.0;
            for (Eigen::Index i = 0; i < g; ++i)
                sum += std::exp(logits(r, offset + i) - peak);
            const double lse = peak + std::log(sum);
            for (Eigen::Index i = 0; i < g; ++i)
                out(r, offset + i) = logits(r, offset + i) - lse;
            offset += g;
        }
    }
}

// Tape-free loss evaluation at a flat parameter vector.
inline double plain_loss(const CheckCase& check, const std::vector<double>& flat) {
    CheckCase local = check;
    Matrix x_var = check.input;
    switch (check.kind) {
    case LossKind::logistic: {
        scatter({&local.net_a}, flat);
        const Matrix out = plain_forward(local.net_a, check.input);
        double loss = 0.0;
        for (Eigen::Index r = 0; r < out.rows(); ++r) {
            const double v = -out(r, 0);
            loss += v > 0.0 ? v + std::log1p(std::exp(-v)) : std::log1p(std::exp(v));
        }
        return loss / static_cast<double>(out.rows());
    }
    case LossKind::vae_elbo: {
        scatter({&local.net_a, &local.net_b}, flat);
        const Matrix enc = plain_forward(local.net_a, check.input);
        const Eigen::Index latent = enc.cols() / 2;
        Matrix z(enc.rows(), latent);
        double kl = 0.0;
        for (Eigen::Index r = 0; r < enc.rows(); ++r)
            for (Eigen::Index j = 0; j < latent; ++j) {
                const double mu = enc(r, j);
                const double lv = enc(r, latent + j);
                z(r, j) = mu + std::exp(0.5 * lv) * check.eps(r, j);
                kl += 0.5 * (mu * mu + std::exp(lv) - lv - 1.0);
            }
        const Matrix logits = plain_forward(local.net_b, z);
        Matrix ls;
        plain_group_log_softmax(logits, check.groups, ls);
        double ce = 0.0;
        for (Eigen::Index r = 0; r < ls.rows(); ++r)
            for (Eigen::Index c = 0; c < ls.cols(); ++c)
                ce -= check.targets(r, c) * ls(r, c);
        const double inv_b = 1.0 / static_cast<double>(check.input.rows());
        return (ce + kl) * inv_b;
    }
    case LossKind::gumbel: {
        scatter({&local.net_a}, flat);
        const Matrix logits = plain_forward(local.net_a, check.input);
        Matrix scaled(logits.rows(), logits.cols());
        for (Eigen::Index r = 0; r < logits.rows(); ++r)
            for (Eigen::Index c = 0; c < logits.cols(); ++c)
                scaled(r, c) = (logits(r, c) + check.gumbel(r, c)) / check.temperature;
        Matrix ls;
        plain_group_log_softmax(scaled, check.groups, ls);
        double loss = 0.0;
        for (Eigen::Index r = 0; r < ls.rows(); ++r)
            for (Eigen::Index c = 0; c < ls.cols(); ++c)
                loss += std::exp(ls(r, c)) * check.weights(r, c);
        return loss / static_cast<double>(ls.rows());
    }
    case LossKind::op_soup: {
        scatter({}, flat, &x_var);
        const Eigen::Index half = x_var.cols() / 2;
        Matrix y(x_var.rows(), x_var.cols());
        y.leftCols(x_var.cols() - half) = x_var.rightCols(x_var.cols() - half);
        y.rightCols(half) = x_var.leftCols(half);
        double acc = 0.0;
        for (Eigen::Index r = 0; r < y.rows(); ++r) {
            double row = 0.0;
            for (Eigen::Index c = 0; c < y.cols(); ++c)
                row += y(r, c) * y(r, c) - (0.5 * y(r, c) + 1.0);
            acc += row;
        }
        acc /= static_cast<double>(y.rows());
        double tanh_sum = 0.0;
        for (Eigen::Index r = 0; r < x_var.rows(); ++r)
            for (Eigen::Index c = 0; c < x_var.cols(); ++c)
                tanh_sum += std::tanh(x_var(r, c));
        return acc + 0.25 * tanh_sum;
    }
    }
    throw std::logic_error("unhandled loss kind");
}

struct TapeResult {
    std::vector<double> grads; // same order as flatten()
    double loss = 0.0;
};

// Loss on the tape, gradients in flatten() order.
inline TapeResult tape_gradients(const CheckCase& check) {
    nn::Tape tape;
    TapeResult result;
    auto collect = [&](const std::vector<nn::TapedLayer>& taped) {
        for (const nn::TapedLayer& tl : taped) {
            const Matrix& gw = tape.grad(tl.weights);
            for (Eigen::Index r = 0; r < gw.rows(); ++r)
                for (Eigen::Index c = 0; c < gw.cols(); ++c)
                    result.grads.push_back(gw(r, c));
            const Matrix& gb = tape.grad(tl.bias);
            for (Eigen::Index c = 0; c < gb.cols(); ++c)
                result.grads.push_back(gb(0, c));
        }
    };

    switch (check.kind) {
    case LossKind::logistic: {
        const auto params = nn::tape_network(tape, check.net_a, true);
        const auto out = nn::apply_network(tape, check.net_a, params, tape.constant(check.input));
        const auto loss = tape.mean_all(tape.softplus(tape.scale(out, -1.0)));
        result.loss = tape.value(loss)(0, 0);
        tape.backward(loss);
        collect(params);
        return result;
    }
    case LossKind::vae_elbo: {
        const auto enc_params = nn::tape_network(tape, check.net_a, true);
        const auto dec_params = nn::tape_network(tape, check.net_b, true);
        const auto enc =
            nn::apply_network(tape, check.net_a, enc_params, tape.constant(check.input));
        const Eigen::Index latent = tape.value(enc).cols() / 2;
        const auto mu = tape.slice_cols(enc, 0, latent);
        const auto lv = tape.slice_cols(enc, latent, latent);
        const auto z =
            tape.add(mu, tape.mul(tape.exp_fn(tape.scale(lv, 0.5)), tape.constant(check.eps)));
        const auto logits = nn::apply_network(tape, check.net_b, dec_params, z);
        const auto ls = tape.group_log_softmax(logits, check.groups);
        const double inv_b = 1.0 / static_cast<double>(check.input.rows());
        const auto ce =
            tape.scale(tape.sum_all(tape.mul(tape.constant(check.targets), ls)), -inv_b);
        const auto kl = tape.scale(
            tape.sum_all(tape.add(tape.sub(tape.exp_fn(lv), lv),
                                  tape.add_scalar(tape.mul(mu, mu), -1.0))),
            0.5 * inv_b);
        const auto loss = tape.add(ce, kl);
        result.loss = tape.value(loss)(0, 0);
        tape.backward(loss);
        collect(enc_params);
        collect(dec_params);
        return result;
    }
    case LossKind::gumbel: {
        const auto params = nn::tape_network(tape, check.net_a, true);
        const auto logits =
            nn::apply_network(tape, check.net_a, params, tape.constant(check.input));
        const auto soft = tape.group_softmax(
            tape.scale(tape.add(logits, tape.constant(check.gumbel)), 1.0 / check.temperature),
            check.groups);
        const auto loss = tape.scale(
            tape.sum_all(tape.mul(soft, tape.constant(check.weights))),
            1.0 / static_cast<double>(check.input.rows()));
        result.loss = tape.value(loss)(0, 0);
        tape.backward(loss);
        collect(params);
        return result;
    }
    case LossKind::op_soup: {
        const auto x = tape.variable(check.input);
        const Eigen::Index half = check.input.cols() / 2;
        const auto y = tape.concat_cols(
            tape.slice_cols(x, half, check.input.cols() - half), tape.slice_cols(x, 0, half));
        const auto quad =
            tape.sub(tape.mul(y, y), tape.add_scalar(tape.scale(y, 0.5), 1.0));
        const auto part_a = tape.mean_all(tape.row_sum(quad));
        const auto part_b = tape.scale(tape.sum_all(tape.tanh_fn(x)), 0.25);
        const auto loss = tape.add(part_a, part_b);
        result.loss = tape.value(loss)(0, 0);
        tape.backward(loss);
        const Matrix& gx = tape.grad(x);
        for (Eigen::Index r = 0; r < gx.rows(); ++r)
            for (Eigen::Index c = 0; c < gx.cols(); ++c)
                result.grads.push_back(gx(r, c));
        return result;
    }
    }
    throw std::logic_error("unhandled loss kind");
}

// mean_all(row_sum(x)) of a b x n matrix is sum/b, not sum/(b*n): the plain
// evaluation above matches (acc is divided by rows only).

inline nn::Network random_net(Rng& rng, Eigen::Index in, Eigen::Index out,
                              Eigen::Index max_width, bool scalar_out) {
    const int hidden_layers = static_cast<int>(rng.uniform_index(3)); // 0..2
    nn::Network net;
    Eigen::Index prev = in;
    for (int l = 0; l < hidden_layers; ++l) {
        const Eigen::Index width = 1 + static_cast<Eigen::Index>(rng.uniform_index(
                                           static_cast<std::size_t>(max_width)));
        const std::array<nn::Activation, 3> acts = {nn::Activation::relu,
                                                    nn::Activation::tanh_fn,
                                                    nn::Activation::sigmoid};
        net.push_back(nn::make_layer(prev, width, acts[rng.uniform_index(3)], rng));
        prev = width;
    }
    net.push_back(nn::make_layer(prev, out, nn::Activation::identity, rng));
    (void)scalar_out;
    return net;
}

// Keep relu inputs away from the kink so the finite-difference stencil stays
// on one side of it.
inline bool relu_margins_ok(const nn::Network& net, const Matrix& input, double margin) {
    Matrix x = input;
    for (const nn::DenseLayer& layer : net) {
        Matrix pre = x * layer.weights.transpose();
        pre.rowwise() += layer.bias.transpose();
        if (layer.activation == nn::Activation::relu)
            for (Eigen::Index r = 0; r < pre.rows(); ++r)
                for (Eigen::Index c = 0; c < pre.cols(); ++c)
                    if (std::abs(pre(r, c)) < margin)
                        return false;
        x = pre;
        switch (layer.activation) {
        case nn::Activation::identity:
            break;
        case nn::Activation::relu:
            x = x.cwiseMax(0.0);
            break;
        case nn::Activation::tanh_fn:
            x = x.array().tanh().matrix();
            break;
        case nn::Activation::sigmoid:
            x = (1.0 / (1.0 + (-x.array()).exp())).matrix();
            break;
        case nn::Activation::softmax_groups:
            break;
        }
    }
    return true;
}

inline Matrix random_matrix(Rng& rng, Eigen::Index rows, Eigen::Index cols, double scale) {
    Matrix m(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r)
        for (Eigen::Index c = 0; c < cols; ++c)
            m(r, c) = scale * rng.normal();
    return m;
}

inline CheckCase make_case(LossKind kind, Rng& rng) {
    for (int attempt = 0; attempt < 100; ++attempt) {
        CheckCase check;
        check.kind = kind;
        const Eigen::Index batch = 1 + static_cast<Eigen::Index>(rng.uniform_index(6));
        switch (kind) {
        case LossKind::logistic: {
            const Eigen::Index in = 1 + static_cast<Eigen::Index>(rng.uniform_index(8));
            check.net_a = random_net(rng, in, 1, 16, true);
            check.input = random_matrix(rng, batch, in, 1.0);
            break;
        }
        case LossKind::vae_elbo: {
            const Eigen::Index groups_n = 1 + static_cast<Eigen::Index>(rng.uniform_index(3));
            Eigen::Index width = 0;
            for (Eigen::Index i = 0; i < groups_n; ++i) {
                const Eigen::Index g = 2 + static_cast<Eigen::Index>(rng.uniform_index(2));
                check.groups.push_back(g);
                width += g;
            }
            const Eigen::Index latent = 1 + static_cast<Eigen::Index>(rng.uniform_index(4));
            check.net_a = random_net(rng, width, 2 * latent, 12, false);
            check.net_b = random_net(rng, latent, width, 12, false);
            check.targets = Matrix::Zero(batch, width);
            for (Eigen::Index r = 0; r < batch; ++r) {
                Eigen::Index offset = 0;
                for (Eigen::Index g : check.groups) {
                    check.targets(r, offset + static_cast<Eigen::Index>(
                                          rng.uniform_index(static_cast<std::size_t>(g)))) = 1.0;
                    offset += g;
                }
            }
            check.input = check.targets; // one-hot rows in, like the real training path
            check.eps = random_matrix(rng, batch, latent, 1.0);
            break;
        }
        case LossKind::gumbel: {
            const Eigen::Index groups_n = 1 + static_cast<Eigen::Index>(rng.uniform_index(3));
            Eigen::Index width = 0;
            for (Eigen::Index i = 0; i < groups_n; ++i) {
                const Eigen::Index g = 2 + static_cast<Eigen::Index>(rng.uniform_index(2));
                check.groups.push_back(g);
                width += g;
            }
            const Eigen::Index in = 1 + static_cast<Eigen::Index>(rng.uniform_index(6));
            check.net_a = random_net(rng, in, width, 12, false);
            check.input = random_matrix(rng, batch, in, 1.0);
            check.gumbel = random_matrix(rng, batch, width, 1.0);
            check.weights = random_matrix(rng, batch, width, 1.0);
            check.temperature = 0.4 + rng.uniform01();
            break;
        }
        case LossKind::op_soup: {
            const Eigen::Index cols = 2 + static_cast<Eigen::Index>(rng.uniform_index(7));
            check.input = random_matrix(rng, batch, cols, 1.0);
            return check; // no relu to guard
        }
        }
        bool ok = relu_margins_ok(check.net_a, check.input, 1e-3);
        if (ok && kind == LossKind::vae_elbo) {
            // decoder margins depend on z; approximate with the forward pass
            const Matrix enc = plain_forward(check.net_a, check.input);
            const Eigen::Index latent = enc.cols() / 2;
            Matrix z(enc.rows(), latent);
            for (Eigen::Index r = 0; r < enc.rows(); ++r)
                for (Eigen::Index j = 0; j < latent; ++j)
                    z(r, j) = enc(r, j) + std::exp(0.5 * enc(r, latent + j)) * check.eps(r, j);
            ok = relu_margins_ok(check.net_b, z, 1e-3);
        }
        if (ok)
            return check;
    }
    throw std::runtime_error("could not build a gradcheck case clear of relu kinks");
}

struct GradCheckOutcome {
    std::size_t parameters = 0;
    double max_error = 0.0; // mixed absolute/relative
};

inline GradCheckOutcome run_case(const CheckCase& check) {
    const TapeResult tape = tape_gradients(check);
    std::vector<double> flat;
    Matrix input_copy = check.input;
    switch (check.kind) {
    case LossKind::logistic:
    case LossKind::gumbel:
        flat = flatten({&check.net_a});
        break;
    case LossKind::vae_elbo:
        flat = flatten({&check.net_a, &check.net_b});
        break;
    case LossKind::op_soup:
        flat = flatten({}, &input_copy);
        break;
    }
    if (flat.size() != tape.grads.size())
        throw std::logic_error("gradient vector length mismatch");

    const double h = 1e-4;
    GradCheckOutcome outcome;
    outcome.parameters = flat.size();
    for (std::size_t i = 0; i < flat.size(); ++i) {
        std::vector<double> plus = flat, minus = flat;
        plus[i] += h;
        minus[i] -= h;
        const double fd = (plain_loss(check, plus) - plain_loss(check, minus)) / (2.0 * h);
        const double ad = tape.grads[i];
        const double denom = std::max({std::abs(fd), std::abs(ad), 1e-3});
        const double err = std::abs(fd - ad) / denom;
        outcome.max_error = std::max(outcome.max_error, err);
    }
    return outcome;
}

} // namespace lostrace::gradcheck
