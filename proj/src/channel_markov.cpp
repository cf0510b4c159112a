// SPDX-License-Identifier: Apache-2.0

#include "lostrace/channel_markov.hpp"

#include <cmath>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>

namespace lostrace::channel {

ChannelState state_from_value(int value) {
    if (value == 1)
        return ChannelState::los;
    if (value == -1)
        return ChannelState::nlos;
    throw std::invalid_argument("channel state must be +1 or -1, got " + std::to_string(value));
}

void validate(const ElevationParams& params) {
    if (!(params.g >= 0.0 && params.g <= 1.0))
        throw std::invalid_argument("transition probability g outside [0,1]: " +
                                    std::to_string(params.g));
    if (!(params.b >= 0.0 && params.b <= 1.0))
        throw std::invalid_argument("transition probability b outside [0,1]: " +
                                    std::to_string(params.b));
    if (params.sigma_g < 0.0 || params.sigma_b < 0.0)
        throw std::invalid_argument("lognormal scale must be nonnegative");
    if (params.durmin_g < 0.0 || params.durmin_b < 0.0)
        throw std::invalid_argument("minimum state length must be nonnegative");
}

void validate(const TraceDataset& dataset) {
    if (dataset.columns.size() != dataset.angles.size())
        throw std::invalid_argument("dataset has " + std::to_string(dataset.columns.size()) +
                                    " columns but " + std::to_string(dataset.angles.size()) +
                                    " angles");
    std::set<int> seen;
    for (int angle : dataset.angles)
        if (!seen.insert(angle).second)
            throw std::invalid_argument("duplicate angle column " + std::to_string(angle));
    for (std::size_t c = 0; c < dataset.columns.size(); ++c)
        if (dataset.columns[c].size() != dataset.rows)
            throw std::invalid_argument("column " + std::to_string(c) + " has " +
                                        std::to_string(dataset.columns[c].size()) +
                                        " rows, expected " + std::to_string(dataset.rows));
}

std::vector<ElevationParams> builtin_table() {
    // Dense urban environment at 2.2 GHz. Columns: mu_{G,B} and sigma_{G,B}
    // in ln(m), dur_{minG,B} in m, then g = P(B->G) and b = P(G->B) per step.
    return {
        {20, 2.0042, 3.6890, 1.2049, 0.9796, 3.9889, 10.3114, 0.00014310, 0.00047466},
        {30, 2.7332, 2.7582, 1.1030, 1.2210, 7.3174, 5.7276, 0.00024460, 0.00027570},
        {45, 3.0639, 2.9108, 1.6980, 1.2602, 10.0, 6.0, 0.00020318, 0.00007556},
        {60, 2.8135, 2.0211, 1.9595, 0.6568, 10.0, 1.9126, 0.00105161, 0.00010797},
        {70, 4.2919, 2.1012, 2.4703, 1.0341, 118.3312, 4.8569, 0.00052923, 2.76683e-6},
    };
}

ElevationParams builtin_params(int angle_deg) {
    for (const ElevationParams& row : builtin_table())
        if (row.angle_deg == angle_deg)
            return row;
    throw std::invalid_argument("unknown elevation angle " + std::to_string(angle_deg) +
                                " (built-in angles: 20, 30, 45, 60, 70)");
}

TransitionMatrix transition_matrix(const ElevationParams& params) {
    validate(params);
    TransitionMatrix m;
    m.p_stay_los = 1.0 - params.b;
    m.p_los_to_nlos = params.b;
    m.p_nlos_to_los = params.g;
    m.p_stay_nlos = 1.0 - params.g;
    return m;
}

double stationary_los_probability(const ElevationParams& params) {
    validate(params);
    const double total = params.g + params.b;
    if (total <= 0.0)
        throw std::runtime_error("degenerate chain: no unique stationary distribution");
    return params.g / total;
}

std::vector<ChannelState> generate_trace(const ElevationParams& params, std::size_t n,
                                         std::uint64_t seed,
                                         std::optional<ChannelState> initial) {
    validate(params);
    std::vector<ChannelState> trace;
    if (n == 0)
        return trace;
    trace.reserve(n);

    Rng rng(seed);
    ChannelState state;
    if (initial.has_value()) {
        state = *initial;
    } else {
        if (params.g + params.b <= 0.0)
            throw std::invalid_argument(
                "degenerate chain (g = b = 0) requires an explicit initial state");
        state = rng.uniform01() < stationary_los_probability(params) ? ChannelState::los
                                                                     : ChannelState::nlos;
    }
    trace.push_back(state);
    for (std::size_t i = 1; i < n; ++i) {
        const double u = rng.uniform01();
        if (state == ChannelState::los)
            state = u < params.b ? ChannelState::nlos : ChannelState::los;
        else
            state = u < params.g ? ChannelState::los : ChannelState::nlos;
        trace.push_back(state);
    }
    return trace;
}

namespace {

std::vector<ElevationParams> lookup_all(const std::vector<int>& angles) {
    std::vector<ElevationParams> out;
    out.reserve(angles.size());
    for (int angle : angles)
        out.push_back(builtin_params(angle));
    return out;
}

TraceDataset make_dataset_shell(const std::vector<ElevationParams>& params, std::size_t n,
                                std::uint64_t seed) {
    TraceDataset dataset;
    dataset.rows = n;
    dataset.seed = seed;
    std::set<int> seen;
    for (const ElevationParams& p : params) {
        validate(p);
        if (!seen.insert(p.angle_deg).second)
            throw std::invalid_argument("duplicate angle column " + std::to_string(p.angle_deg));
        dataset.angles.push_back(p.angle_deg);
    }
    dataset.columns.resize(params.size());
    return dataset;
}

} // namespace

TraceDataset generate_dataset(const std::vector<ElevationParams>& params, std::size_t n,
                              std::uint64_t seed) {
    TraceDataset dataset = make_dataset_shell(params, n, seed);
    for (std::size_t c = 0; c < params.size(); ++c)
        dataset.columns[c] = generate_trace(params[c], n, substream_seed(seed, c));
    return dataset;
}

TraceDataset generate_dataset(const std::vector<int>& angles, std::size_t n, std::uint64_t seed) {
    return generate_dataset(lookup_all(angles), n, seed);
}

TraceDataset generate_stationary_dataset(const std::vector<ElevationParams>& params,
                                         std::size_t n, std::uint64_t seed) {
    TraceDataset dataset = make_dataset_shell(params, n, seed);
    for (std::size_t c = 0; c < params.size(); ++c) {
        const double p_los = stationary_los_probability(params[c]);
        Rng rng = Rng::substream(seed, c);
        std::vector<ChannelState>& column = dataset.columns[c];
        column.reserve(n);
        for (std::size_t r = 0; r < n; ++r)
            column.push_back(rng.uniform01() < p_los ? ChannelState::los : ChannelState::nlos);
    }
    return dataset;
}

TraceDataset generate_stationary_dataset(const std::vector<int>& angles, std::size_t n,
                                         std::uint64_t seed) {
    return generate_stationary_dataset(lookup_all(angles), n, seed);
}

double derive_transition_prob(double mu, double sigma, double step_m) {
    if (!(step_m > 0.0))
        throw std::invalid_argument("step length must be positive");
    if (sigma < 0.0)
        throw std::invalid_argument("lognormal scale must be nonnegative");
    const double mean_length = std::exp(mu + 0.5 * sigma * sigma);
    return std::min(1.0, step_m / mean_length);
}

} // namespace lostrace::channel
