// SPDX-License-Identifier: Apache-2.0

#include "lostrace/gen_models.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace lostrace::gen {

using channel::ChannelState;
using channel::TraceDataset;
using nn::Matrix;
using nn::Tape;

namespace {

// substream tags for the per-run RNG
enum Stream : std::uint64_t {
    stream_init = 0x100,
    stream_train = 0x101,
    stream_track = 0x102,
    stream_holdout = 0x103,
};

constexpr std::size_t k_gan_hidden = 256;
constexpr std::size_t k_vae_hidden = 128;

void check_config(const TrainingConfig& config) {
    if (config.epochs == 0)
        throw std::invalid_argument("epochs must be positive");
    if (config.batch_size == 0)
        throw std::invalid_argument("batch size must be positive");
    if (!(config.learning_rate > 0.0))
        throw std::invalid_argument("learning rate must be positive");
}

void check_dataset(const TraceDataset& data) {
    channel::validate(data);
    if (data.rows == 0 || data.angles.empty())
        throw std::invalid_argument("training dataset is empty");
}

// Adam slot per parameter tensor of a network.
struct NetworkOptimizer {
    std::vector<nn::AdamState> weight_states;
    std::vector<nn::AdamState> bias_states;

    NetworkOptimizer(const nn::Network& network, double lr) {
        weight_states.resize(network.size());
        bias_states.resize(network.size());
        for (auto& s : weight_states)
            s.lr = lr;
        for (auto& s : bias_states)
            s.lr = lr;
    }

    void apply(nn::Network& network, const Tape& tape, const std::vector<nn::TapedLayer>& taped) {
        for (std::size_t l = 0; l < network.size(); ++l) {
            nn::adam_step(weight_states[l], network[l].weights, tape.grad(taped[l].weights));
            Matrix bias = network[l].bias.transpose();
            nn::adam_step(bias_states[l], bias, tape.grad(taped[l].bias));
            network[l].bias = bias.transpose();
        }
    }
};

struct TrainSplit {
    std::vector<std::uint32_t> train_rows;
    std::vector<std::uint32_t> eval_rows; // empty unless tracking with enough data
};

TrainSplit split_rows(const TraceDataset& data, const TrainingConfig& config) {
    TrainSplit split;
    std::vector<std::uint32_t> order(data.rows);
    for (std::size_t i = 0; i < data.rows; ++i)
        order[i] = static_cast<std::uint32_t>(i);
    if (!config.track_angle.has_value()) {
        split.train_rows = std::move(order);
        return split;
    }
    const std::size_t held = std::min<std::size_t>(5000, data.rows / 10);
    if (held == 0) {
        split.train_rows = std::move(order);
        return split;
    }
    Rng rng = Rng::substream(config.seed, stream_holdout);
    rng.shuffle(order.begin(), order.end());
    split.eval_rows.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(held));
    split.train_rows.assign(order.begin() + static_cast<std::ptrdiff_t>(held), order.end());
    return split;
}

std::size_t track_column(const TraceDataset& data, int angle) {
    for (std::size_t c = 0; c < data.angles.size(); ++c)
        if (data.angles[c] == angle)
            return c;
    throw std::invalid_argument("track angle " + std::to_string(angle) +
                                " is not a column of the training dataset");
}

metrics::EmpiricalDistribution reference_distribution(const TraceDataset& data,
                                                      const TrainSplit& split,
                                                      std::size_t column) {
    const std::vector<std::uint32_t>& rows =
        split.eval_rows.empty() ? split.train_rows : split.eval_rows;
    std::vector<ChannelState> values;
    values.reserve(rows.size());
    for (std::uint32_t r : rows)
        values.push_back(data.columns[column][r]);
    return metrics::empirical(values);
}

Matrix gather_rows(const Matrix& encoded, const std::vector<std::uint32_t>& rows,
                   std::size_t begin, std::size_t count) {
    Matrix out(static_cast<Eigen::Index>(count), encoded.cols());
    for (std::size_t i = 0; i < count; ++i)
        out.row(static_cast<Eigen::Index>(i)) =
            encoded.row(static_cast<Eigen::Index>(rows[begin + i]));
    return out;
}

// Synthetic rows from a generator network; conditions drawn per row as
// (uniform column, category by its training frequency), so the synthetic
// marginals reproduce the per-column distributions the conditionals encode.
// The hard row is the argmax of the gumbel-perturbed logits: the generator
// parameterizes per-column categorical distributions that the relaxation
// realizes during training, and argmax over logits + gumbel draws from
// exactly that distribution. Plain argmax of the raw logits would collapse
// every column to its per-(noise, condition) mode.
TraceDataset sample_gan_rows(const nn::Network& generator, std::size_t noise_dim,
                             const TableEncoding& encoding,
                             const std::vector<double>& category_freq, std::size_t n,
                             Rng& rng) {
    const std::size_t ncols = encoding.angles.size();
    const Eigen::Index width = encoding.width();
    const std::vector<Eigen::Index> groups = encoding.groups();
    Matrix decoded(static_cast<Eigen::Index>(n), width);
    const std::size_t chunk = 8192;
    for (std::size_t begin = 0; begin < n; begin += chunk) {
        const std::size_t count = std::min(chunk, n - begin);
        Matrix input(static_cast<Eigen::Index>(count),
                     static_cast<Eigen::Index>(noise_dim) + width);
        input.setZero();
        Matrix gumbel(static_cast<Eigen::Index>(count), width);
        // all draws happen row-major here so the output is independent of
        // the chunk size
        for (std::size_t i = 0; i < count; ++i) {
            const Eigen::Index r = static_cast<Eigen::Index>(i);
            const std::size_t col = rng.uniform_index(ncols);
            const std::size_t cat = rng.uniform01() < category_freq[col] ? 0 : 1;
            input(r, static_cast<Eigen::Index>(noise_dim + 2 * col + cat)) = 1.0;
            for (std::size_t d = 0; d < noise_dim; ++d)
                input(r, static_cast<Eigen::Index>(d)) = rng.normal();
            for (Eigen::Index c = 0; c < width; ++c)
                gumbel(r, c) = rng.gumbel();
        }
        decoded.middleRows(static_cast<Eigen::Index>(begin), static_cast<Eigen::Index>(count)) =
            nn::forward_batch(generator, input) + gumbel;
    }
    if (n == 0)
        decoded.resize(0, width);
    return encoding.decode(decoded);
}

TraceDataset sample_vae_rows(const nn::Network& decoder, std::size_t latent_dim,
                             const TableEncoding& encoding, std::size_t n, Rng& rng) {
    const Eigen::Index width = encoding.width();
    Matrix decoded(static_cast<Eigen::Index>(n), width);
    const std::size_t chunk = 8192;
    for (std::size_t begin = 0; begin < n; begin += chunk) {
        const std::size_t count = std::min(chunk, n - begin);
        Matrix latents(static_cast<Eigen::Index>(count), static_cast<Eigen::Index>(latent_dim));
        for (std::size_t i = 0; i < count; ++i)
            for (std::size_t d = 0; d < latent_dim; ++d)
                latents(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(d)) =
                    rng.normal();
        decoded.middleRows(static_cast<Eigen::Index>(begin), static_cast<Eigen::Index>(count)) =
            nn::forward_batch(decoder, latents);
    }
    if (n == 0)
        decoded.resize(0, width);
    return encoding.decode(decoded);
}

metrics::MetricCurvePoint curve_point(std::size_t epoch,
                                      const metrics::EmpiricalDistribution& reference,
                                      const TraceDataset& synthetic, std::size_t column) {
    const metrics::EmpiricalDistribution q = metrics::empirical(synthetic.columns[column]);
    metrics::MetricCurvePoint point;
    point.epoch = epoch;
    point.kl = metrics::kl_divergence(reference, q);
    point.wasserstein = metrics::wasserstein(reference, q);
    return point;
}

} // namespace

std::vector<Eigen::Index> TableEncoding::groups() const {
    return std::vector<Eigen::Index>(angles.size(), 2);
}

Matrix TableEncoding::encode(const TraceDataset& dataset) const {
    if (dataset.angles != angles)
        throw std::invalid_argument("dataset columns do not match the encoding");
    Matrix out = Matrix::Zero(static_cast<Eigen::Index>(dataset.rows), width());
    for (std::size_t c = 0; c < angles.size(); ++c)
        for (std::size_t r = 0; r < dataset.rows; ++r)
            out(static_cast<Eigen::Index>(r),
                static_cast<Eigen::Index>(2 * c + category_index(dataset.columns[c][r]))) = 1.0;
    return out;
}

TraceDataset TableEncoding::decode(const Matrix& activations) const {
    if (activations.cols() != width())
        throw std::invalid_argument("activation width " + std::to_string(activations.cols()) +
                                    " does not match encoding width " +
                                    std::to_string(width()));
    TraceDataset dataset;
    dataset.angles = angles;
    dataset.rows = static_cast<std::size_t>(activations.rows());
    dataset.columns.assign(angles.size(), {});
    for (std::size_t c = 0; c < angles.size(); ++c) {
        std::vector<ChannelState>& column = dataset.columns[c];
        column.reserve(dataset.rows);
        const Eigen::Index base = static_cast<Eigen::Index>(2 * c);
        for (Eigen::Index r = 0; r < activations.rows(); ++r) {
            const bool plus = activations(r, base) >= activations(r, base + 1);
            column.push_back(plus ? ChannelState::los : ChannelState::nlos);
        }
    }
    return dataset;
}

// ---------------------------------------------------------------------
// GAN training
// ---------------------------------------------------------------------

GanTrainResult train_gan(const TraceDataset& data, const TrainingConfig& config) {
    check_dataset(data);
    check_config(config);

    GanTrainResult result;
    GanModel& model = result.model;
    model.encoding.angles = data.angles;
    model.config = config;

    const std::size_t ncols = data.angles.size();
    const Eigen::Index width = model.encoding.width();
    const std::vector<Eigen::Index> groups = model.encoding.groups();
    const double tau = model.gumbel_tau;

    const TrainSplit split = split_rows(data, config);
    const Matrix encoded = model.encoding.encode(data);

    // Per-(column, category) row pools over the training rows; conditions are
    // drawn uniformly over the nonempty pools.
    std::vector<std::vector<std::uint32_t>> pools(2 * ncols);
    for (std::uint32_t r : split.train_rows)
        for (std::size_t c = 0; c < ncols; ++c)
            pools[2 * c + TableEncoding::category_index(data.columns[c][r])].push_back(r);
    std::vector<std::size_t> candidate_pairs;
    for (std::size_t p = 0; p < pools.size(); ++p)
        if (!pools[p].empty())
            candidate_pairs.push_back(p);

    model.category_freq.assign(ncols, 0.0);
    for (std::size_t c = 0; c < ncols; ++c)
        model.category_freq[c] = static_cast<double>(pools[2 * c].size()) /
                                 static_cast<double>(split.train_rows.size());

    Rng init_rng = Rng::substream(config.seed, stream_init);
    const Eigen::Index gen_in = static_cast<Eigen::Index>(model.noise_dim) + width;
    model.generator = {
        nn::make_layer(gen_in, k_gan_hidden, nn::Activation::relu, init_rng),
        nn::make_layer(k_gan_hidden, k_gan_hidden, nn::Activation::relu, init_rng),
        nn::make_layer(k_gan_hidden, width, nn::Activation::identity, init_rng),
    };
    model.discriminator = {
        nn::make_layer(2 * width, k_gan_hidden, nn::Activation::relu, init_rng),
        nn::make_layer(k_gan_hidden, k_gan_hidden, nn::Activation::relu, init_rng),
        nn::make_layer(k_gan_hidden, 1, nn::Activation::identity, init_rng),
    };

    NetworkOptimizer gen_opt(model.generator, config.learning_rate);
    NetworkOptimizer dis_opt(model.discriminator, config.learning_rate);

    Rng rng = Rng::substream(config.seed, stream_train);
    Rng track_rng = Rng::substream(config.seed, stream_track);

    std::optional<std::size_t> track_col;
    metrics::EmpiricalDistribution reference;
    if (config.track_angle.has_value()) {
        track_col = track_column(data, *config.track_angle);
        reference = reference_distribution(data, split, *track_col);
        result.curve = metrics::MetricCurve{*config.track_angle, {}};
    }

    const std::size_t n_train = split.train_rows.size();
    const std::size_t batches =
        (n_train + config.batch_size - 1) / config.batch_size;

    auto draw_conditions = [&](std::size_t bs, std::vector<std::size_t>& pairs, Matrix& cond) {
        pairs.resize(bs);
        cond = Matrix::Zero(static_cast<Eigen::Index>(bs), width);
        for (std::size_t i = 0; i < bs; ++i) {
            pairs[i] = candidate_pairs[rng.uniform_index(candidate_pairs.size())];
            cond(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(pairs[i])) = 1.0;
        }
    };

    for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
        double loss_d_sum = 0.0, loss_g_sum = 0.0;
        std::vector<double> category_counts(static_cast<std::size_t>(width), 0.0);
        std::size_t generated_rows = 0;

        for (std::size_t batch = 0; batch < batches; ++batch) {
            const std::size_t bs =
                std::min(config.batch_size, n_train - batch * config.batch_size);

            // --- discriminator step ---
            std::vector<std::size_t> pairs_d;
            Matrix cond_d;
            draw_conditions(bs, pairs_d, cond_d);
            Matrix real(static_cast<Eigen::Index>(bs), width);
            for (std::size_t i = 0; i < bs; ++i) {
                const std::vector<std::uint32_t>& pool = pools[pairs_d[i]];
                real.row(static_cast<Eigen::Index>(i)) =
                    encoded.row(static_cast<Eigen::Index>(pool[rng.uniform_index(pool.size())]));
            }
            Matrix noise_d(static_cast<Eigen::Index>(bs),
                           static_cast<Eigen::Index>(model.noise_dim));
            for (Eigen::Index r = 0; r < noise_d.rows(); ++r)
                for (Eigen::Index c = 0; c < noise_d.cols(); ++c)
                    noise_d(r, c) = rng.normal();
            Matrix gen_in_d(static_cast<Eigen::Index>(bs), gen_in);
            gen_in_d.leftCols(noise_d.cols()) = noise_d;
            gen_in_d.rightCols(width) = cond_d;
            const Matrix fake_logits = nn::forward_batch(model.generator, gen_in_d);
            // hard one-hot presentation: the discriminator must separate
            // real and fake by content, not by the relaxation's softness
            const Matrix fake_hard = nn::hard_one_hot_groups(
                nn::gumbel_softmax_batch(fake_logits, groups, tau, rng), groups);

            {
                Tape tape;
                const auto d_params = nn::tape_network(tape, model.discriminator, true);
                Matrix xr(static_cast<Eigen::Index>(bs), 2 * width);
                xr.leftCols(width) = real;
                xr.rightCols(width) = cond_d;
                Matrix xf(static_cast<Eigen::Index>(bs), 2 * width);
                xf.leftCols(width) = fake_hard;
                xf.rightCols(width) = cond_d;
                const auto d_real =
                    nn::apply_network(tape, model.discriminator, d_params, tape.constant(xr));
                const auto d_fake =
                    nn::apply_network(tape, model.discriminator, d_params, tape.constant(xf));
                const double inv_bs = 1.0 / static_cast<double>(bs);
                const auto loss = tape.add(
                    tape.scale(tape.sum_all(tape.softplus(tape.scale(d_real, -1.0))), inv_bs),
                    tape.scale(tape.sum_all(tape.softplus(d_fake)), inv_bs));
                const double loss_value = tape.value(loss)(0, 0);
                if (!std::isfinite(loss_value))
                    throw std::runtime_error("non-finite loss at epoch " +
                                             std::to_string(epoch) + ", batch " +
                                             std::to_string(batch));
                loss_d_sum += loss_value * static_cast<double>(bs);
                tape.backward(loss);
                dis_opt.apply(model.discriminator, tape, d_params);
            }

            // --- generator step ---
            std::vector<std::size_t> pairs_g;
            Matrix cond_g;
            draw_conditions(bs, pairs_g, cond_g);
            Matrix noise_g(static_cast<Eigen::Index>(bs),
                           static_cast<Eigen::Index>(model.noise_dim));
            for (Eigen::Index r = 0; r < noise_g.rows(); ++r)
                for (Eigen::Index c = 0; c < noise_g.cols(); ++c)
                    noise_g(r, c) = rng.normal();
            Matrix gumbel_noise(static_cast<Eigen::Index>(bs), width);
            for (Eigen::Index r = 0; r < gumbel_noise.rows(); ++r)
                for (Eigen::Index c = 0; c < gumbel_noise.cols(); ++c)
                    gumbel_noise(r, c) = rng.gumbel();
            Matrix mask = Matrix::Zero(static_cast<Eigen::Index>(bs), width);
            for (std::size_t i = 0; i < bs; ++i)
                mask(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(pairs_g[i])) = 1.0;

            {
                Tape tape;
                const auto g_params = nn::tape_network(tape, model.generator, true);
                Matrix input(static_cast<Eigen::Index>(bs), gen_in);
                input.leftCols(noise_g.cols()) = noise_g;
                input.rightCols(width) = cond_g;
                const auto logits =
                    nn::apply_network(tape, model.generator, g_params, tape.constant(input));
                const auto soft = tape.group_softmax(
                    tape.scale(tape.add(logits, tape.constant(gumbel_noise)), 1.0 / tau),
                    groups);
                const auto hard = tape.straight_through_hard(soft, groups);
                const auto d_input = tape.concat_cols(hard, tape.constant(cond_g));
                const auto d_params = nn::tape_network(tape, model.discriminator, false);
                const auto d_fake =
                    nn::apply_network(tape, model.discriminator, d_params, d_input);
                const double inv_bs = 1.0 / static_cast<double>(bs);
                const auto adversarial =
                    tape.scale(tape.sum_all(tape.softplus(tape.scale(d_fake, -1.0))), inv_bs);
                const auto log_probs = tape.group_log_softmax(logits, groups);
                const auto condition_ce = tape.scale(
                    tape.sum_all(tape.mul(tape.constant(mask), log_probs)), -inv_bs);
                const auto loss = tape.add(adversarial, condition_ce);
                const double loss_value = tape.value(loss)(0, 0);
                if (!std::isfinite(loss_value))
                    throw std::runtime_error("non-finite loss at epoch " +
                                             std::to_string(epoch) + ", batch " +
                                             std::to_string(batch));
                loss_g_sum += loss_value * static_cast<double>(bs);
                tape.backward(loss);
                gen_opt.apply(model.generator, tape, g_params);

                const Matrix& soft_value = tape.value(soft);
                for (Eigen::Index r = 0; r < soft_value.rows(); ++r)
                    for (std::size_t c = 0; c < ncols; ++c) {
                        const Eigen::Index base = static_cast<Eigen::Index>(2 * c);
                        const std::size_t hit =
                            soft_value(r, base) >= soft_value(r, base + 1) ? 0 : 1;
                        category_counts[2 * c + hit] += 1.0;
                    }
                generated_rows += bs;
            }
        }

        result.epoch_loss_d.push_back(loss_d_sum / static_cast<double>(n_train));
        result.epoch_loss_g.push_back(loss_g_sum / static_cast<double>(n_train));
        for (double& count : category_counts)
            count /= static_cast<double>(generated_rows);
        result.epoch_category_freq.push_back(std::move(category_counts));

        if (track_col.has_value()) {
            const std::size_t eval_n =
                split.eval_rows.empty() ? std::min<std::size_t>(n_train, 5000)
                                        : split.eval_rows.size();
            const TraceDataset synthetic =
                sample_gan_rows(model.generator, model.noise_dim, model.encoding,
                                model.category_freq, eval_n, track_rng);
            result.curve->points.push_back(
                curve_point(epoch, reference, synthetic, *track_col));
        }
    }

    return result;
}

// ---------------------------------------------------------------------
// VAE training
// ---------------------------------------------------------------------

VaeTrainResult train_vae(const TraceDataset& data, const TrainingConfig& config) {
    check_dataset(data);
    check_config(config);

    VaeTrainResult result;
    VaeModel& model = result.model;
    model.encoding.angles = data.angles;
    model.config = config;

    const Eigen::Index width = model.encoding.width();
    const Eigen::Index latent = static_cast<Eigen::Index>(model.latent_dim);
    const std::vector<Eigen::Index> groups = model.encoding.groups();

    const TrainSplit split = split_rows(data, config);
    const Matrix encoded = model.encoding.encode(data);

    Rng init_rng = Rng::substream(config.seed, stream_init);
    model.encoder = {
        nn::make_layer(width, k_vae_hidden, nn::Activation::relu, init_rng),
        nn::make_layer(k_vae_hidden, k_vae_hidden, nn::Activation::relu, init_rng),
        nn::make_layer(k_vae_hidden, 2 * latent, nn::Activation::identity, init_rng),
    };
    // Tight initial posteriors (sigma ~ e^{-1.5}) so the eight distinct rows
    // separate in latent space while the regularizer is still warming up.
    model.encoder.back().bias.tail(latent).setConstant(-3.0);
    model.decoder = {
        nn::make_layer(latent, k_vae_hidden, nn::Activation::relu, init_rng),
        nn::make_layer(k_vae_hidden, k_vae_hidden, nn::Activation::relu, init_rng),
        nn::make_layer(k_vae_hidden, width, nn::Activation::identity, init_rng),
    };

    NetworkOptimizer enc_opt(model.encoder, config.learning_rate);
    NetworkOptimizer dec_opt(model.decoder, config.learning_rate);

    Rng rng = Rng::substream(config.seed, stream_train);
    Rng track_rng = Rng::substream(config.seed, stream_track);

    std::optional<std::size_t> track_col;
    metrics::EmpiricalDistribution reference;
    if (config.track_angle.has_value()) {
        track_col = track_column(data, *config.track_angle);
        reference = reference_distribution(data, split, *track_col);
        result.curve = metrics::MetricCurve{*config.track_angle, {}};
    }

    std::vector<std::uint32_t> order = split.train_rows;
    const std::size_t n_train = order.size();
    const std::size_t batches = (n_train + config.batch_size - 1) / config.batch_size;

    // The regularizer ramps in over the first 30% of updates. This objective
    // has two equal-loss optima - latent clusters with exact reconstruction,
    // and a flattened encoder whose decoder just emits the column marginals -
    // and starting at full strength reliably lands in the flattened one,
    // where hard-argmax samples lose every minority category. The final 70%
    // of training minimizes the stated objective unmodified.
    const std::size_t total_steps = config.epochs * batches;
    const std::size_t warmup_steps = std::max<std::size_t>(1, (total_steps * 3) / 10);
    std::size_t global_step = 0;

    for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
        rng.shuffle(order.begin(), order.end());
        double loss_sum = 0.0;

        for (std::size_t batch = 0; batch < batches; ++batch) {
            const std::size_t begin = batch * config.batch_size;
            const std::size_t bs = std::min(config.batch_size, n_train - begin);
            const Matrix x = gather_rows(encoded, order, begin, bs);
            Matrix eps(static_cast<Eigen::Index>(bs), latent);
            for (Eigen::Index r = 0; r < eps.rows(); ++r)
                for (Eigen::Index c = 0; c < eps.cols(); ++c)
                    eps(r, c) = rng.normal();

            Tape tape;
            const auto enc_params = nn::tape_network(tape, model.encoder, true);
            const auto dec_params = nn::tape_network(tape, model.decoder, true);
            const auto x_node = tape.constant(x);
            const auto enc_out = nn::apply_network(tape, model.encoder, enc_params, x_node);
            const auto mu = tape.slice_cols(enc_out, 0, latent);
            const auto log_var = tape.slice_cols(enc_out, latent, latent);
            const auto z = tape.add(
                mu, tape.mul(tape.exp_fn(tape.scale(log_var, 0.5)), tape.constant(eps)));
            const auto logits = nn::apply_network(tape, model.decoder, dec_params, z);
            const auto log_probs = tape.group_log_softmax(logits, groups);
            const double inv_bs = 1.0 / static_cast<double>(bs);
            const auto reconstruction =
                tape.scale(tape.sum_all(tape.mul(x_node, log_probs)), -inv_bs);
            // 0.5 * sum(mu^2 + sigma^2 - log sigma^2 - 1)
            const auto kl_term = tape.scale(
                tape.sum_all(tape.add(tape.sub(tape.exp_fn(log_var), log_var),
                                      tape.add_scalar(tape.mul(mu, mu), -1.0))),
                0.5 * inv_bs);
            const auto loss = tape.add(reconstruction, kl_term);
            const double loss_value = tape.value(loss)(0, 0);
            if (!std::isfinite(loss_value))
                throw std::runtime_error("non-finite loss at epoch " + std::to_string(epoch) +
                                         ", batch " + std::to_string(batch));
            loss_sum += loss_value * static_cast<double>(bs);
            tape.backward(loss);
            enc_opt.apply(model.encoder, tape, enc_params);
            dec_opt.apply(model.decoder, tape, dec_params);
        }

        result.epoch_loss.push_back(loss_sum / static_cast<double>(n_train));

        if (track_col.has_value()) {
            const std::size_t eval_n =
                split.eval_rows.empty() ? std::min<std::size_t>(n_train, 5000)
                                        : split.eval_rows.size();
            const TraceDataset synthetic = sample_vae_rows(model.decoder, model.latent_dim,
                                                           model.encoding, eval_n, track_rng);
            result.curve->points.push_back(
                curve_point(epoch, reference, synthetic, *track_col));
        }
    }

    return result;
}

// ---------------------------------------------------------------------
// Sampling
// ---------------------------------------------------------------------

TraceDataset sample(const GanModel& model, std::size_t n, std::uint64_t seed) {
    Rng rng(seed);
    TraceDataset out = sample_gan_rows(model.generator, model.noise_dim, model.encoding,
                                       model.category_freq, n, rng);
    out.seed = seed;
    return out;
}

TraceDataset sample(const VaeModel& model, std::size_t n, std::uint64_t seed) {
    Rng rng(seed);
    TraceDataset out = sample_vae_rows(model.decoder, model.latent_dim, model.encoding, n, rng);
    out.seed = seed;
    return out;
}

TraceDataset sample_conditioned(const GanModel& model, std::size_t column, int category,
                                std::size_t n, std::uint64_t seed) {
    if (column >= model.encoding.angles.size())
        throw std::invalid_argument("condition column out of range");
    const std::size_t cat_index =
        TableEncoding::category_index(channel::state_from_value(category));
    Rng rng(seed);
    const Eigen::Index width = model.encoding.width();
    Matrix input(static_cast<Eigen::Index>(n),
                 static_cast<Eigen::Index>(model.noise_dim) + width);
    input.setZero();
    Matrix gumbel(static_cast<Eigen::Index>(n), width);
    for (Eigen::Index r = 0; r < input.rows(); ++r) {
        input(r, static_cast<Eigen::Index>(model.noise_dim + 2 * column + cat_index)) = 1.0;
        for (std::size_t d = 0; d < model.noise_dim; ++d)
            input(r, static_cast<Eigen::Index>(d)) = rng.normal();
        for (Eigen::Index c = 0; c < width; ++c)
            gumbel(r, c) = rng.gumbel();
    }
    Matrix decoded = nn::forward_batch(model.generator, input) + gumbel;
    if (n == 0)
        decoded.resize(0, width);
    TraceDataset out = model.encoding.decode(decoded);
    out.seed = seed;
    return out;
}

nn::Matrix decode_probabilities(const VaeModel& model, const Matrix& latents) {
    return nn::softmax_groups_batch(nn::forward_batch(model.decoder, latents),
                                    model.encoding.groups());
}

std::string family_name(const Model& model) {
    return std::holds_alternative<GanModel>(model) ? "gan" : "vae";
}

TraceDataset sample(const Model& model, std::size_t n, std::uint64_t seed) {
    if (const GanModel* gan = std::get_if<GanModel>(&model))
        return sample(*gan, n, seed);
    return sample(std::get<VaeModel>(model), n, seed);
}

// ---------------------------------------------------------------------
// Model container (layout in docs/model_format.md)
// ---------------------------------------------------------------------

namespace {

constexpr char k_magic[8] = {'L', 'T', 'K', 'M', 'O', 'D', 'L', '\n'};
constexpr std::uint32_t k_format_version = 1;

const char* activation_name(nn::Activation a) {
    switch (a) {
    case nn::Activation::identity:
        return "identity";
    case nn::Activation::relu:
        return "relu";
    case nn::Activation::tanh_fn:
        return "tanh";
    case nn::Activation::sigmoid:
        return "sigmoid";
    case nn::Activation::softmax_groups:
        return "softmax_groups";
    }
    throw std::logic_error("unhandled activation");
}

nn::Activation activation_from_name(const std::string& name) {
    if (name == "identity")
        return nn::Activation::identity;
    if (name == "relu")
        return nn::Activation::relu;
    if (name == "tanh")
        return nn::Activation::tanh_fn;
    if (name == "sigmoid")
        return nn::Activation::sigmoid;
    if (name == "softmax_groups")
        return nn::Activation::softmax_groups;
    throw std::runtime_error("corrupt model header: unknown activation '" + name + "'");
}

nlohmann::json network_spec(const nn::Network& network) {
    nlohmann::json layers = nlohmann::json::array();
    for (const nn::DenseLayer& layer : network) {
        nlohmann::json spec;
        spec["in"] = layer.weights.cols();
        spec["out"] = layer.weights.rows();
        spec["activation"] = activation_name(layer.activation);
        spec["groups"] = layer.groups;
        layers.push_back(std::move(spec));
    }
    return layers;
}

nn::Network network_from_spec(const nlohmann::json& layers) {
    nn::Network network;
    for (const nlohmann::json& spec : layers) {
        nn::DenseLayer layer;
        const Eigen::Index in = spec.at("in").get<Eigen::Index>();
        const Eigen::Index out = spec.at("out").get<Eigen::Index>();
        layer.weights = Matrix::Zero(out, in);
        layer.bias = nn::Vector::Zero(out);
        layer.activation = activation_from_name(spec.at("activation").get<std::string>());
        layer.groups = spec.at("groups").get<std::vector<Eigen::Index>>();
        network.push_back(std::move(layer));
    }
    return network;
}

void append_weights(std::vector<double>& flat, const nn::Network& network) {
    for (const nn::DenseLayer& layer : network) {
        for (Eigen::Index r = 0; r < layer.weights.rows(); ++r)
            for (Eigen::Index c = 0; c < layer.weights.cols(); ++c)
                flat.push_back(layer.weights(r, c));
        for (Eigen::Index i = 0; i < layer.bias.size(); ++i)
            flat.push_back(layer.bias[i]);
    }
}

std::size_t consume_weights(nn::Network& network, const std::vector<double>& flat,
                            std::size_t offset) {
    for (nn::DenseLayer& layer : network) {
        for (Eigen::Index r = 0; r < layer.weights.rows(); ++r)
            for (Eigen::Index c = 0; c < layer.weights.cols(); ++c)
                layer.weights(r, c) = flat[offset++];
        for (Eigen::Index i = 0; i < layer.bias.size(); ++i)
            layer.bias[i] = flat[offset++];
    }
    return offset;
}

nlohmann::json config_to_json(const TrainingConfig& config) {
    nlohmann::json j;
    j["epochs"] = config.epochs;
    j["batch_size"] = config.batch_size;
    j["learning_rate"] = config.learning_rate;
    j["seed"] = config.seed;
    if (config.track_angle.has_value())
        j["track_angle"] = *config.track_angle;
    else
        j["track_angle"] = nullptr;
    return j;
}

TrainingConfig config_from_json(const nlohmann::json& j) {
    TrainingConfig config;
    config.epochs = j.at("epochs").get<std::size_t>();
    config.batch_size = j.at("batch_size").get<std::size_t>();
    config.learning_rate = j.at("learning_rate").get<double>();
    config.seed = j.at("seed").get<std::uint64_t>();
    if (!j.at("track_angle").is_null())
        config.track_angle = j.at("track_angle").get<int>();
    return config;
}

void write_container(const nlohmann::json& header, const std::vector<double>& weights,
                     const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw std::runtime_error("cannot open " + path.string() + " for writing");
    out.write(k_magic, sizeof(k_magic));
    const std::uint32_t version = k_format_version;
    out.write(reinterpret_cast<const char*>(&version), sizeof(version));
    const std::string json_text = header.dump();
    const std::uint64_t json_len = json_text.size();
    out.write(reinterpret_cast<const char*>(&json_len), sizeof(json_len));
    out.write(json_text.data(), static_cast<std::streamsize>(json_text.size()));
    out.write(reinterpret_cast<const char*>(weights.data()),
              static_cast<std::streamsize>(weights.size() * sizeof(double)));
    if (!out)
        throw std::runtime_error("failed writing " + path.string());
}

} // namespace

void save_model(const GanModel& model, const std::filesystem::path& path) {
    nlohmann::json header;
    header["format"] = "lostrace-model";
    header["family"] = "gan";
    header["angles"] = model.encoding.angles;
    header["noise_dim"] = model.noise_dim;
    header["gumbel_tau"] = model.gumbel_tau;
    header["category_freq"] = model.category_freq;
    header["config"] = config_to_json(model.config);
    header["networks"]["generator"] = network_spec(model.generator);
    header["networks"]["discriminator"] = network_spec(model.discriminator);
    std::vector<double> weights;
    weights.reserve(nn::parameter_count(model.generator) +
                    nn::parameter_count(model.discriminator));
    append_weights(weights, model.generator);
    append_weights(weights, model.discriminator);
    header["weight_count"] = weights.size();
    write_container(header, weights, path);
}

void save_model(const VaeModel& model, const std::filesystem::path& path) {
    nlohmann::json header;
    header["format"] = "lostrace-model";
    header["family"] = "vae";
    header["angles"] = model.encoding.angles;
    header["latent_dim"] = model.latent_dim;
    header["config"] = config_to_json(model.config);
    header["networks"]["encoder"] = network_spec(model.encoder);
    header["networks"]["decoder"] = network_spec(model.decoder);
    std::vector<double> weights;
    weights.reserve(nn::parameter_count(model.encoder) + nn::parameter_count(model.decoder));
    append_weights(weights, model.encoder);
    append_weights(weights, model.decoder);
    header["weight_count"] = weights.size();
    write_container(header, weights, path);
}

void save_model(const Model& model, const std::filesystem::path& path) {
    if (const GanModel* gan = std::get_if<GanModel>(&model))
        save_model(*gan, path);
    else
        save_model(std::get<VaeModel>(model), path);
}

Model load_model(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw std::runtime_error("cannot open " + path.string());

    char magic[sizeof(k_magic)];
    in.read(magic, sizeof(magic));
    if (in.gcount() != sizeof(magic) || std::memcmp(magic, k_magic, sizeof(magic)) != 0)
        throw std::runtime_error("unrecognized model file");

    std::uint32_t version = 0;
    in.read(reinterpret_cast<char*>(&version), sizeof(version));
    if (in.gcount() != sizeof(version))
        throw std::runtime_error("truncated model file");
    if (version != k_format_version)
        throw std::runtime_error("unsupported model file version " + std::to_string(version) +
                                 "; this build reads version " +
                                 std::to_string(k_format_version));

    std::uint64_t json_len = 0;
    in.read(reinterpret_cast<char*>(&json_len), sizeof(json_len));
    if (in.gcount() != sizeof(json_len))
        throw std::runtime_error("truncated model file");
    std::string json_text(json_len, '\0');
    in.read(json_text.data(), static_cast<std::streamsize>(json_len));
    if (static_cast<std::uint64_t>(in.gcount()) != json_len)
        throw std::runtime_error("truncated model file");

    nlohmann::json header;
    try {
        header = nlohmann::json::parse(json_text);
    } catch (const nlohmann::json::exception& e) {
        throw std::runtime_error(std::string("corrupt model header: ") + e.what());
    }

    const std::string family = header.at("family").get<std::string>();
    if (family != "gan" && family != "vae")
        throw std::runtime_error("unknown model family '" + family + "'");

    const std::size_t weight_count = header.at("weight_count").get<std::size_t>();
    std::vector<double> weights(weight_count);
    in.read(reinterpret_cast<char*>(weights.data()),
            static_cast<std::streamsize>(weight_count * sizeof(double)));
    if (static_cast<std::size_t>(in.gcount()) != weight_count * sizeof(double))
        throw std::runtime_error("truncated model file");
    in.peek();
    if (!in.eof())
        throw std::runtime_error("trailing bytes after model payload");

    if (family == "gan") {
        GanModel model;
        model.encoding.angles = header.at("angles").get<std::vector<int>>();
        model.noise_dim = header.at("noise_dim").get<std::size_t>();
        model.gumbel_tau = header.at("gumbel_tau").get<double>();
        model.category_freq = header.at("category_freq").get<std::vector<double>>();
        model.config = config_from_json(header.at("config"));
        model.generator = network_from_spec(header.at("networks").at("generator"));
        model.discriminator = network_from_spec(header.at("networks").at("discriminator"));
        if (nn::parameter_count(model.generator) + nn::parameter_count(model.discriminator) !=
            weights.size())
            throw std::runtime_error("corrupt model header: weight count mismatch");
        const std::size_t offset = consume_weights(model.generator, weights, 0);
        consume_weights(model.discriminator, weights, offset);
        return model;
    }

    VaeModel model;
    model.encoding.angles = header.at("angles").get<std::vector<int>>();
    model.latent_dim = header.at("latent_dim").get<std::size_t>();
    model.config = config_from_json(header.at("config"));
    model.encoder = network_from_spec(header.at("networks").at("encoder"));
    model.decoder = network_from_spec(header.at("networks").at("decoder"));
    if (nn::parameter_count(model.encoder) + nn::parameter_count(model.decoder) !=
        weights.size())
        throw std::runtime_error("corrupt model header: weight count mismatch");
    const std::size_t offset = consume_weights(model.encoder, weights, 0);
    consume_weights(model.decoder, weights, offset);
    return model;
}

} // namespace lostrace::gen
