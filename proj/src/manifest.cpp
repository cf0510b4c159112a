// SPDX-License-Identifier: Apache-2.0

#include "lostrace/manifest.hpp"

#include <chrono>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <stdexcept>

namespace lostrace {

std::string utc_timestamp() {
    const std::time_t now = std::time(nullptr);
    std::tm tm_utc{};
    gmtime_r(&now, &tm_utc);
    char buffer[32];
    std::strftime(buffer, sizeof(buffer), "%Y-%m-%dT%H:%M:%SZ", &tm_utc);
    return buffer;
}

void write_manifest(const RunManifest& manifest, const std::filesystem::path& path) {
    nlohmann::json j;
    j["format"] = "lostrace-run-manifest";
    j["version"] = 1;
    j["command"] = manifest.command;
    j["arguments"] = manifest.arguments;
    j["inputs"] = manifest.inputs;
    j["outputs"] = manifest.outputs;
    j["tool_version"] = manifest.tool_version;
    j["duration_seconds"] = manifest.duration_seconds;
    j["created_utc"] = manifest.created_utc;
    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw std::runtime_error("cannot open " + path.string() + " for writing");
    out << j.dump(2) << "\n";
    if (!out)
        throw std::runtime_error("failed writing " + path.string());
}

RunManifest read_manifest(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw std::runtime_error("cannot open " + path.string());
    nlohmann::json j;
    in >> j;
    if (j.value("format", "") != "lostrace-run-manifest")
        throw std::runtime_error(path.string() + ": not a lostrace run manifest");
    RunManifest manifest;
    manifest.command = j.at("command").get<std::string>();
    manifest.arguments = j.at("arguments");
    manifest.inputs = j.at("inputs").get<std::vector<std::string>>();
    manifest.outputs = j.at("outputs").get<std::vector<std::string>>();
    manifest.tool_version = j.at("tool_version").get<std::string>();
    manifest.duration_seconds = j.at("duration_seconds").get<double>();
    manifest.created_utc = j.at("created_utc").get<std::string>();
    return manifest;
}

} // namespace lostrace
