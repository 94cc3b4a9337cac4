#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace geomreg {

std::string version_string();

// UTC, second resolution, ISO 8601.
std::string utc_timestamp();

// Everything needed to repeat a run: the fully resolved configuration and
// seed, plus bookkeeping that does not affect results.
struct RunManifest {
    std::string command;
    nlohmann::json config;
    std::uint64_t seed = 0;
    std::size_t workers = 1;
    std::string version = version_string();
    std::string started_at;
    std::string finished_at;
    std::filesystem::path output_dir;
    std::vector<std::string> outputs;  // relative to output_dir
    std::string status = "running";
};

void to_json(nlohmann::json& j, const RunManifest& m);
void from_json(const nlohmann::json& j, RunManifest& m);

void write_manifest(const RunManifest& m, const std::filesystem::path& path);
RunManifest read_manifest(const std::filesystem::path& path);

}  // namespace geomreg
