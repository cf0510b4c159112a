// SPDX-License-Identifier: Apache-2.0
//
// Persistence in stable formats: state-table CSV, metric reports (human
// table and machine JSON), and per-epoch metric-curve CSV. All formats are
// documented byte-exactly in docs/file_formats.md.

#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "lostrace/channel_markov.hpp"
#include "lostrace/metrics.hpp"

namespace lostrace::io {

struct DatasetFile {
    std::filesystem::path path;
    std::vector<std::string> header;
    std::size_t rows = 0;
};

// CSV with one `angle_<deg>` column per angle and body cells `1` / `-1`.
// Rewriting the same dataset yields a byte-identical file.
DatasetFile write_dataset(const channel::TraceDataset& dataset,
                          const std::filesystem::path& path);

// Validating reader; malformed cells are rejected with 1-based row/column
// coordinates.
channel::TraceDataset read_dataset(const std::filesystem::path& path);

enum class ReportFormat { human_table, machine_json };

std::string format_report(const metrics::MetricReport& report, ReportFormat format);
void emit_report(const metrics::MetricReport& report, ReportFormat format,
                 const std::filesystem::path& path);

// Machine-format reports round-trip with bit-exact values.
metrics::MetricReport read_report(const std::filesystem::path& path);

// Long CSV: epoch,metric,value with metric in {kl, wasserstein}.
void write_metric_curve(const metrics::MetricCurve& curve, const std::filesystem::path& path);
metrics::MetricCurve read_metric_curve(const std::filesystem::path& path);

} // namespace lostrace::io
