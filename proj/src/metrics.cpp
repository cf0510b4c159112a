// SPDX-License-Identifier: Apache-2.0

#include "lostrace/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>
#include <thread>

namespace lostrace::metrics {

namespace {

void check_same_support(const EmpiricalDistribution& p, const EmpiricalDistribution& q) {
    if (p.support != q.support)
        throw std::invalid_argument("support mismatch between distributions");
}

std::string join_headers(const std::vector<int>& angles) {
    std::string out;
    for (std::size_t i = 0; i < angles.size(); ++i) {
        if (i > 0)
            out += ",";
        out += "angle_" + std::to_string(angles[i]);
    }
    return out.empty() ? "<none>" : out;
}

} // namespace

double EmpiricalDistribution::probability_of(double support_value) const {
    for (std::size_t i = 0; i < support.size(); ++i)
        if (support[i] == support_value)
            return pmf[i];
    throw std::invalid_argument("value not on the distribution's support");
}

EmpiricalDistribution empirical(const std::vector<channel::ChannelState>& column) {
    if (column.empty())
        throw std::invalid_argument("empirical distribution of an empty column");
    std::size_t n_los = 0;
    for (channel::ChannelState s : column)
        if (s == channel::ChannelState::los)
            ++n_los;
    const double n = static_cast<double>(column.size());
    EmpiricalDistribution dist;
    dist.support = {-1.0, +1.0};
    dist.pmf = {static_cast<double>(column.size() - n_los) / n, static_cast<double>(n_los) / n};
    dist.sample_count = column.size();
    return dist;
}

EmpiricalDistribution from_pmf(std::vector<double> support, std::vector<double> pmf,
                               std::size_t sample_count) {
    if (support.size() != pmf.size() || support.empty())
        throw std::invalid_argument("support and pmf must be nonempty and equally sized");
    if (!std::is_sorted(support.begin(), support.end()) ||
        std::adjacent_find(support.begin(), support.end()) != support.end())
        throw std::invalid_argument("support must be strictly increasing");
    double total = 0.0;
    for (double p : pmf) {
        if (!(p >= 0.0))
            throw std::invalid_argument("pmf entries must be nonnegative");
        total += p;
    }
    if (std::abs(total - 1.0) > 1e-9)
        throw std::invalid_argument("pmf must sum to 1, got " + std::to_string(total));
    return EmpiricalDistribution{std::move(support), std::move(pmf), sample_count};
}

double wasserstein(const EmpiricalDistribution& p, const EmpiricalDistribution& q) {
    check_same_support(p, q);
    double distance = 0.0;
    double cdf_p = 0.0, cdf_q = 0.0;
    for (std::size_t i = 0; i + 1 < p.support.size(); ++i) {
        cdf_p += p.pmf[i];
        cdf_q += q.pmf[i];
        distance += std::abs(cdf_p - cdf_q) * (p.support[i + 1] - p.support[i]);
    }
    return distance;
}

double ks_complement(const EmpiricalDistribution& p, const EmpiricalDistribution& q) {
    check_same_support(p, q);
    double max_gap = 0.0;
    double cdf_p = 0.0, cdf_q = 0.0;
    for (std::size_t i = 0; i < p.support.size(); ++i) {
        cdf_p += p.pmf[i];
        cdf_q += q.pmf[i];
        max_gap = std::max(max_gap, std::abs(cdf_p - cdf_q));
    }
    return 1.0 - max_gap;
}

double kl_divergence(const EmpiricalDistribution& p, const EmpiricalDistribution& q,
                     double epsilon) {
    check_same_support(p, q);
    if (epsilon < 0.0)
        throw std::invalid_argument("epsilon must be nonnegative");
    double sum = 0.0;
    if (epsilon == 0.0) {
        for (std::size_t i = 0; i < p.pmf.size(); ++i) {
            if (p.pmf[i] == 0.0)
                continue;
            if (q.pmf[i] == 0.0)
                throw std::runtime_error("KL undefined: zero-probability mismatch");
            sum += p.pmf[i] * std::log(p.pmf[i] / q.pmf[i]);
        }
    } else {
        const double norm = 1.0 + epsilon * static_cast<double>(p.pmf.size());
        for (std::size_t i = 0; i < p.pmf.size(); ++i) {
            const double ps = (p.pmf[i] + epsilon) / norm;
            const double qs = (q.pmf[i] + epsilon) / norm;
            sum += ps * std::log(ps / qs);
        }
    }
    return sum;
}

const AngleMetrics& MetricReport::at_angle(int angle_deg) const {
    for (const auto& [angle, stats] : per_angle)
        if (angle == angle_deg)
            return stats;
    throw std::invalid_argument("report has no angle " + std::to_string(angle_deg));
}

MetricReport compare_datasets(const channel::TraceDataset& real,
                              const channel::TraceDataset& synthetic, double epsilon) {
    if (real.angles != synthetic.angles)
        throw std::invalid_argument("column mismatch: real has " + join_headers(real.angles) +
                                    "; synthetic has " + join_headers(synthetic.angles));
    MetricReport report;
    report.repetitions = 1;
    for (std::size_t c = 0; c < real.angles.size(); ++c) {
        const EmpiricalDistribution p = empirical(real.columns[c]);
        const EmpiricalDistribution q = empirical(synthetic.columns[c]);
        AngleMetrics stats;
        stats.ks_complement.mean = ks_complement(p, q);
        stats.wasserstein.mean = wasserstein(p, q);
        stats.kl.mean = kl_divergence(p, q, epsilon);
        report.per_angle.emplace_back(real.angles[c], stats);
    }
    return report;
}

namespace {

struct RepetitionValues {
    std::vector<double> ks, w, kl; // per angle, column order
};

MetricStats reduce(const std::vector<double>& values) {
    MetricStats stats;
    const double n = static_cast<double>(values.size());
    for (double v : values)
        stats.mean += v;
    stats.mean /= n;
    for (double v : values)
        stats.variance += (v - stats.mean) * (v - stats.mean);
    stats.variance /= n;
    return stats;
}

} // namespace

MetricReport evaluate_repeated(const DatasetSource& real_source, const DatasetSource& model,
                               std::size_t reps, std::size_t n, std::uint64_t seed,
                               double epsilon, unsigned threads) {
    if (reps < 1)
        throw std::invalid_argument("repetitions must be at least 1");
    if (threads == 0)
        threads = std::max(1u, std::thread::hardware_concurrency());
    threads = static_cast<unsigned>(std::min<std::size_t>(threads, reps));

    std::vector<RepetitionValues> results(reps);
    std::vector<std::string> errors(reps);
    std::vector<int> angles;

    auto run_rep = [&](std::size_t rep) {
        try {
            const std::uint64_t rep_seed = substream_seed(seed, rep);
            const channel::TraceDataset real = real_source(n, substream_seed(rep_seed, 0));
            const channel::TraceDataset synth = model(n, substream_seed(rep_seed, 1));
            if (real.angles != synth.angles)
                throw std::invalid_argument("column mismatch: real has " +
                                            join_headers(real.angles) + "; synthetic has " +
                                            join_headers(synth.angles));
            if (rep == 0)
                angles = real.angles;
            RepetitionValues& out = results[rep];
            for (std::size_t c = 0; c < real.angles.size(); ++c) {
                const EmpiricalDistribution p = empirical(real.columns[c]);
                const EmpiricalDistribution q = empirical(synth.columns[c]);
                out.ks.push_back(ks_complement(p, q));
                out.w.push_back(wasserstein(p, q));
                out.kl.push_back(kl_divergence(p, q, epsilon));
            }
        } catch (const std::exception& e) {
            errors[rep] = e.what();
        }
    };

    if (threads <= 1) {
        for (std::size_t rep = 0; rep < reps; ++rep)
            run_rep(rep);
    } else {
        std::vector<std::thread> pool;
        pool.reserve(threads);
        for (unsigned t = 0; t < threads; ++t)
            pool.emplace_back([&, t] {
                for (std::size_t rep = t; rep < reps; rep += threads)
                    run_rep(rep);
            });
        for (std::thread& t : pool)
            t.join();
    }

    for (std::size_t rep = 0; rep < reps; ++rep)
        if (!errors[rep].empty())
            throw std::runtime_error("repetition " + std::to_string(rep) + ": " + errors[rep]);

    // rep 0 always ran, so `angles` is populated
    MetricReport report;
    report.repetitions = reps;
    for (std::size_t c = 0; c < angles.size(); ++c) {
        std::vector<double> ks, w, kl;
        ks.reserve(reps);
        w.reserve(reps);
        kl.reserve(reps);
        for (const RepetitionValues& rv : results) {
            if (rv.ks.size() != angles.size())
                throw std::runtime_error("repetition produced inconsistent column count");
            ks.push_back(rv.ks[c]);
            w.push_back(rv.w[c]);
            kl.push_back(rv.kl[c]);
        }
        AngleMetrics stats;
        stats.ks_complement = reduce(ks);
        stats.wasserstein = reduce(w);
        stats.kl = reduce(kl);
        report.per_angle.emplace_back(angles[c], stats);
    }
    return report;
}

} // namespace lostrace::metrics
