// SPDX-License-Identifier: Apache-2.0

#include "lostrace/dataio.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace lostrace::io {

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> cells;
    std::string current;
    for (char ch : line) {
        if (ch == ',') {
            cells.push_back(current);
            current.clear();
        } else {
            current += ch;
        }
    }
    cells.push_back(current);
    return cells;
}

// shortest decimal form that parses back to the same double
std::string double_to_string(double value) {
    char buffer[64];
    const auto result = std::to_chars(buffer, buffer + sizeof(buffer), value);
    return std::string(buffer, result.ptr);
}

double string_to_double(const std::string& text, const std::string& context) {
    double value = 0.0;
    const auto result = std::from_chars(text.data(), text.data() + text.size(), value);
    if (result.ec != std::errc() || result.ptr != text.data() + text.size())
        throw std::runtime_error("invalid number '" + text + "' in " + context);
    return value;
}

} // namespace

DatasetFile write_dataset(const channel::TraceDataset& dataset,
                          const std::filesystem::path& path) {
    channel::validate(dataset);
    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw std::runtime_error("cannot open " + path.string() + " for writing");

    DatasetFile file;
    file.path = path;
    file.rows = dataset.rows;

    std::string header;
    for (std::size_t c = 0; c < dataset.angles.size(); ++c) {
        if (c > 0)
            header += ",";
        header += "angle_" + std::to_string(dataset.angles[c]);
    }
    file.header = split_csv_line(header);
    if (dataset.angles.empty())
        file.header.clear();
    out << header << "\n";

    for (std::size_t r = 0; r < dataset.rows; ++r) {
        std::string line;
        for (std::size_t c = 0; c < dataset.angles.size(); ++c) {
            if (c > 0)
                line += ",";
            line += channel::state_value(dataset.cell(r, c)) == 1 ? "1" : "-1";
        }
        out << line << "\n";
    }
    if (!out)
        throw std::runtime_error("failed writing " + path.string());
    return file;
}

channel::TraceDataset read_dataset(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw std::runtime_error("cannot open " + path.string());

    std::string header_line;
    if (!std::getline(in, header_line))
        throw std::runtime_error(path.string() + ": missing header line");

    channel::TraceDataset dataset;
    if (!header_line.empty()) {
        std::set<std::string> seen;
        for (const std::string& name : split_csv_line(header_line)) {
            if (!seen.insert(name).second)
                throw std::runtime_error("duplicate angle column '" + name + "'");
            constexpr std::string_view prefix = "angle_";
            if (name.rfind(prefix, 0) != 0)
                throw std::runtime_error("invalid column name '" + name +
                                         "' (expected angle_<deg>)");
            const std::string digits = name.substr(prefix.size());
            int angle = 0;
            const auto result =
                std::from_chars(digits.data(), digits.data() + digits.size(), angle);
            if (result.ec != std::errc() || result.ptr != digits.data() + digits.size())
                throw std::runtime_error("invalid column name '" + name +
                                         "' (expected angle_<deg>)");
            dataset.angles.push_back(angle);
        }
    }
    dataset.columns.assign(dataset.angles.size(), {});

    std::string line;
    std::size_t row = 0;
    while (std::getline(in, line)) {
        ++row;
        if (dataset.angles.empty()) {
            if (!line.empty())
                throw std::runtime_error("ragged row at row " + std::to_string(row) +
                                         ": expected 0 cells");
            ++dataset.rows;
            continue;
        }
        const std::vector<std::string> cells = split_csv_line(line);
        if (cells.size() != dataset.angles.size())
            throw std::runtime_error("ragged row at row " + std::to_string(row) + ": expected " +
                                     std::to_string(dataset.angles.size()) + " cells, got " +
                                     std::to_string(cells.size()));
        for (std::size_t c = 0; c < cells.size(); ++c) {
            channel::ChannelState state;
            if (cells[c] == "1")
                state = channel::ChannelState::los;
            else if (cells[c] == "-1")
                state = channel::ChannelState::nlos;
            else
                throw std::runtime_error("invalid state value '" + cells[c] + "' at row " +
                                         std::to_string(row) + ", column " +
                                         std::to_string(c + 1) + " (angle_" +
                                         std::to_string(dataset.angles[c]) + ")");
            dataset.columns[c].push_back(state);
        }
        ++dataset.rows;
    }
    return dataset;
}

namespace {

std::string format_human(const metrics::MetricReport& report) {
    std::ostringstream out;
    out << "repetitions: " << report.repetitions << "\n";

    const std::array<std::string, 3> row_labels = {"KS-test", "Wasserstein Distance",
                                                   "KL-Divergence"};
    auto stat_of = [](const metrics::AngleMetrics& m, std::size_t metric_row) {
        switch (metric_row) {
        case 0:
            return m.ks_complement;
        case 1:
            return m.wasserstein;
        default:
            return m.kl;
        }
    };

    auto cell = [](double v) {
        char buffer[32];
        std::snprintf(buffer, sizeof(buffer), "%.6g", v);
        return std::string(buffer);
    };

    constexpr int label_width = 22;
    constexpr int col_width = 14;
    out << std::string(label_width, ' ');
    for (const auto& [angle, m] : report.per_angle) {
        std::string mean_h = std::to_string(angle) + " mean";
        std::string var_h = std::to_string(angle) + " variance";
        out << mean_h << std::string(col_width - mean_h.size(), ' ');
        out << var_h << std::string(col_width - var_h.size(), ' ');
        (void)m;
    }
    out << "\n";
    for (std::size_t metric_row = 0; metric_row < row_labels.size(); ++metric_row) {
        out << row_labels[metric_row]
            << std::string(label_width - row_labels[metric_row].size(), ' ');
        for (const auto& [angle, m] : report.per_angle) {
            const metrics::MetricStats stats = stat_of(m, metric_row);
            const std::string mean_s = cell(stats.mean);
            const std::string var_s = cell(stats.variance);
            out << mean_s << std::string(col_width - mean_s.size(), ' ');
            out << var_s << std::string(col_width - var_s.size(), ' ');
            (void)angle;
        }
        out << "\n";
    }
    return out.str();
}

std::string format_machine(const metrics::MetricReport& report) {
    nlohmann::json j;
    j["format"] = "lostrace-metric-report";
    j["version"] = 1;
    j["repetitions"] = report.repetitions;
    nlohmann::json angles = nlohmann::json::array();
    nlohmann::json results;
    for (const auto& [angle, m] : report.per_angle) {
        angles.push_back(angle);
        nlohmann::json entry;
        entry["ks_complement"] = {{"mean", m.ks_complement.mean},
                                  {"variance", m.ks_complement.variance}};
        entry["wasserstein"] = {{"mean", m.wasserstein.mean},
                                {"variance", m.wasserstein.variance}};
        entry["kl"] = {{"mean", m.kl.mean}, {"variance", m.kl.variance}};
        results[std::to_string(angle)] = std::move(entry);
    }
    j["angles"] = std::move(angles);
    j["results"] = std::move(results);
    return j.dump(2) + "\n";
}

} // namespace

std::string format_report(const metrics::MetricReport& report, ReportFormat format) {
    return format == ReportFormat::human_table ? format_human(report)
                                               : format_machine(report);
}

void emit_report(const metrics::MetricReport& report, ReportFormat format,
                 const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw std::runtime_error("cannot open " + path.string() + " for writing");
    out << format_report(report, format);
    if (!out)
        throw std::runtime_error("failed writing " + path.string());
}

metrics::MetricReport read_report(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw std::runtime_error("cannot open " + path.string());
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw std::runtime_error(path.string() + ": not a machine-format report: " + e.what());
    }
    if (j.value("format", "") != "lostrace-metric-report")
        throw std::runtime_error(path.string() + ": not a lostrace metric report");
    if (j.at("version").get<int>() != 1)
        throw std::runtime_error(path.string() + ": unsupported report version " +
                                 std::to_string(j.at("version").get<int>()));
    metrics::MetricReport report;
    report.repetitions = j.at("repetitions").get<std::size_t>();
    for (const auto& angle_json : j.at("angles")) {
        const int angle = angle_json.get<int>();
        const nlohmann::json& entry = j.at("results").at(std::to_string(angle));
        metrics::AngleMetrics m;
        m.ks_complement.mean = entry.at("ks_complement").at("mean").get<double>();
        m.ks_complement.variance = entry.at("ks_complement").at("variance").get<double>();
        m.wasserstein.mean = entry.at("wasserstein").at("mean").get<double>();
        m.wasserstein.variance = entry.at("wasserstein").at("variance").get<double>();
        m.kl.mean = entry.at("kl").at("mean").get<double>();
        m.kl.variance = entry.at("kl").at("variance").get<double>();
        report.per_angle.emplace_back(angle, m);
    }
    return report;
}

void write_metric_curve(const metrics::MetricCurve& curve, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw std::runtime_error("cannot open " + path.string() + " for writing");
    out << "epoch,metric,value\n";
    for (const metrics::MetricCurvePoint& point : curve.points) {
        out << point.epoch << ",kl," << double_to_string(point.kl) << "\n";
        out << point.epoch << ",wasserstein," << double_to_string(point.wasserstein) << "\n";
    }
    if (!out)
        throw std::runtime_error("failed writing " + path.string());
}

metrics::MetricCurve read_metric_curve(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw std::runtime_error("cannot open " + path.string());
    std::string line;
    if (!std::getline(in, line) || line != "epoch,metric,value")
        throw std::runtime_error(path.string() + ": not a metric-curve CSV");

    metrics::MetricCurve curve;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        const std::vector<std::string> cells = split_csv_line(line);
        if (cells.size() != 3)
            throw std::runtime_error(path.string() + ": malformed line " +
                                     std::to_string(line_no));
        const std::string context = path.string() + " line " + std::to_string(line_no);
        const std::size_t epoch =
            static_cast<std::size_t>(string_to_double(cells[0], context));
        const double value = string_to_double(cells[2], context);
        if (curve.points.empty() || curve.points.back().epoch != epoch)
            curve.points.push_back({epoch, 0.0, 0.0});
        if (cells[1] == "kl")
            curve.points.back().kl = value;
        else if (cells[1] == "wasserstein")
            curve.points.back().wasserstein = value;
        else
            throw std::runtime_error(context + ": unknown metric '" + cells[1] + "'");
    }
    return curve;
}

} // namespace lostrace::io
