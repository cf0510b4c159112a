// SPDX-License-Identifier: Apache-2.0
//
// Run manifest written next to every artifact: the command, its complete
// configuration (including every seed), input/output paths, toolkit version
// and wall-clock duration. Replaying the recorded command reproduces the
// artifact byte-exactly; the manifest itself carries timing and is the one
// output excluded from byte comparisons.

#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace lostrace {

inline constexpr const char* k_tool_version = "0.1.0";

struct RunManifest {
    std::string command;
    nlohmann::json arguments; // full configuration, seeds included
    std::vector<std::string> inputs;
    std::vector<std::string> outputs;
    std::string tool_version = k_tool_version;
    double duration_seconds = 0.0;
    std::string created_utc;
};

void write_manifest(const RunManifest& manifest, const std::filesystem::path& path);
RunManifest read_manifest(const std::filesystem::path& path);

// ISO-8601 UTC timestamp for manifest stamping.
std::string utc_timestamp();

} // namespace lostrace
