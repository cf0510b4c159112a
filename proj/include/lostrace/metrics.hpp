// SPDX-License-Identifier: Apache-2.0
//
// Distribution-distance metrics over per-column empirical distributions and
// the repeated-evaluation harness that reports per-(angle, metric) mean and
// population variance.

#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "lostrace/channel_markov.hpp"

namespace lostrace::metrics {

// Discrete distribution on a small ordered support. The toolkit's canonical
// support is {-1, +1}; the metric functions themselves are generic.
struct EmpiricalDistribution {
    std::vector<double> support; // strictly increasing
    std::vector<double> pmf;     // nonnegative, sums to 1
    std::size_t sample_count = 0;

    // pmf value at an exact support point; throws when the point is absent.
    double probability_of(double support_value) const;
};

// Category frequencies of a state column over the support {-1, +1}.
EmpiricalDistribution empirical(const std::vector<channel::ChannelState>& column);

// Validating constructor for hand-built distributions.
EmpiricalDistribution from_pmf(std::vector<double> support, std::vector<double> pmf,
                               std::size_t sample_count = 0);

// 1-D earth-mover distance: sum over support gaps of |CDF_p - CDF_q| x gap.
double wasserstein(const EmpiricalDistribution& p, const EmpiricalDistribution& q);

// 1 - max |CDF_p - CDF_q|; 1 means identical.
double ks_complement(const EmpiricalDistribution& p, const EmpiricalDistribution& q);

// sum_v p(v) ln(p(v)/q(v)) after epsilon-smoothing with renormalization.
// epsilon = 0 computes the exact divergence and throws when q(v) = 0 < p(v).
double kl_divergence(const EmpiricalDistribution& p, const EmpiricalDistribution& q,
                     double epsilon = 1e-9);

struct MetricStats {
    double mean = 0.0;
    double variance = 0.0; // population variance
};

struct AngleMetrics {
    MetricStats ks_complement;
    MetricStats wasserstein;
    MetricStats kl;
};

struct MetricReport {
    std::size_t repetitions = 0;
    std::vector<std::pair<int, AngleMetrics>> per_angle; // dataset column order

    const AngleMetrics& at_angle(int angle_deg) const;
};

// Per-epoch distance of synthetic output from the tracked angle's reference
// distribution; exported as the convergence curve.
struct MetricCurvePoint {
    std::size_t epoch = 0; // 1-based
    double kl = 0.0;
    double wasserstein = 0.0;

    bool operator==(const MetricCurvePoint&) const = default;
};

struct MetricCurve {
    int angle_deg = 0;
    std::vector<MetricCurvePoint> points;

    bool operator==(const MetricCurve&) const = default;
};

// Single real-vs-synthetic comparison (repetitions = 1, variances 0).
// Throws when the column lists differ, naming both headers.
MetricReport compare_datasets(const channel::TraceDataset& real,
                              const channel::TraceDataset& synthetic, double epsilon = 1e-9);

// Anything that can produce an n-row dataset from a seed: the stationary
// channel sampler, a trained model, or a test double.
using DatasetSource =
    std::function<channel::TraceDataset(std::size_t rows, std::uint64_t seed)>;

// Repeats `reps` times: draw a fresh real dataset and a fresh synthetic
// dataset of n rows each, compute all three metrics per angle, and reduce to
// mean / population variance. Deterministic given the seed; repetitions may
// run on `threads` workers (0 = pick automatically) with a fixed merge order.
MetricReport evaluate_repeated(const DatasetSource& real_source, const DatasetSource& model,
                               std::size_t reps, std::size_t n, std::uint64_t seed,
                               double epsilon = 1e-9, unsigned threads = 0);

} // namespace lostrace::metrics
