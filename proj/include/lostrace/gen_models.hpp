// SPDX-License-Identifier: Apache-2.0
//
// The two generative model families over state tables: a conditional tabular
// GAN and a tabular VAE. Covers one-hot table encoding, the training loops,
// synthetic-data sampling, and the self-describing model container.

#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "lostrace/channel_markov.hpp"
#include "lostrace/metrics.hpp"
#include "lostrace/nn_core.hpp"

namespace lostrace::gen {

// Row codec: each column becomes a one-hot block over the fixed category
// list [+1, -1], so the encoded width is 2 x column count. Decoding takes
// the argmax per block, which maps soft activations back to hard states.
struct TableEncoding {
    std::vector<int> angles;

    static constexpr std::array<int, 2> categories{+1, -1};

    Eigen::Index width() const { return static_cast<Eigen::Index>(2 * angles.size()); }
    std::vector<Eigen::Index> groups() const;

    static std::size_t category_index(channel::ChannelState state) {
        return state == channel::ChannelState::los ? 0 : 1;
    }

    nn::Matrix encode(const channel::TraceDataset& dataset) const;
    channel::TraceDataset decode(const nn::Matrix& activations) const;
};

struct TrainingConfig {
    std::size_t epochs = 100;
    std::size_t batch_size = 50;
    double learning_rate = 2e-4;
    std::uint64_t seed = 0;
    std::optional<int> track_angle; // per-epoch KL/Wasserstein curve when set
};

struct GanModel {
    nn::Network generator;     // (noise ++ condition) -> per-column category logits
    nn::Network discriminator; // (encoded row ++ condition) -> realness logit
    std::size_t noise_dim = 128;
    double gumbel_tau = 0.2;
    TableEncoding encoding;
    std::vector<double> category_freq; // training share of +1 per column
    TrainingConfig config;
};

struct VaeModel {
    nn::Network encoder; // encoded row -> (mu ++ log_var)
    nn::Network decoder; // latent -> per-column category logits
    std::size_t latent_dim = 16;
    TableEncoding encoding;
    TrainingConfig config;
};

struct GanTrainResult {
    GanModel model;
    std::optional<metrics::MetricCurve> curve;
    std::vector<double> epoch_loss_d;
    std::vector<double> epoch_loss_g;
    // Generator argmax share per (column, category) block each epoch;
    // mode-collapse surveillance.
    std::vector<std::vector<double>> epoch_category_freq;
};

struct VaeTrainResult {
    VaeModel model;
    std::optional<metrics::MetricCurve> curve;
    std::vector<double> epoch_loss;
};

// Alternating discriminator/generator updates per batch with per-slot
// condition sampling; deterministic given config.seed.
GanTrainResult train_gan(const channel::TraceDataset& data, const TrainingConfig& config);

// Reconstruction cross-entropy plus the closed-form Gaussian KL term.
VaeTrainResult train_vae(const channel::TraceDataset& data, const TrainingConfig& config);

channel::TraceDataset sample(const GanModel& model, std::size_t n, std::uint64_t seed);
channel::TraceDataset sample(const VaeModel& model, std::size_t n, std::uint64_t seed);

// Generator output with the condition vector pinned to (column, category);
// exercises the conditioning contract directly.
channel::TraceDataset sample_conditioned(const GanModel& model, std::size_t column,
                                         int category, std::size_t n, std::uint64_t seed);

// Decoder probabilities for given latents, per-column groups summing to 1.
nn::Matrix decode_probabilities(const VaeModel& model, const nn::Matrix& latents);

using Model = std::variant<GanModel, VaeModel>;

std::string family_name(const Model& model);
channel::TraceDataset sample(const Model& model, std::size_t n, std::uint64_t seed);

// Single self-describing binary container; weights round-trip bit-exactly.
// Layout documented in docs/model_format.md.
void save_model(const Model& model, const std::filesystem::path& path);
void save_model(const GanModel& model, const std::filesystem::path& path);
void save_model(const VaeModel& model, const std::filesystem::path& path);
Model load_model(const std::filesystem::path& path);

} // namespace lostrace::gen
