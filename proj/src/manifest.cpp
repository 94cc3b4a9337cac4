#include "geomreg/manifest.hpp"

#include <chrono>
#include <ctime>
#include <fstream>
#include <stdexcept>

namespace geomreg {

std::string version_string() {
#ifdef GEOMREG_VERSION
    return GEOMREG_VERSION;
#else
    return "unknown";
#endif
}

std::string utc_timestamp() {
    const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

void to_json(nlohmann::json& j, const RunManifest& m) {
    j = {{"command", m.command},         {"config", m.config},
         {"seed", m.seed},               {"workers", m.workers},
         {"version", m.version},         {"started_at", m.started_at},
         {"finished_at", m.finished_at}, {"output_dir", m.output_dir.string()},
         {"outputs", m.outputs},         {"status", m.status}};
}

void from_json(const nlohmann::json& j, RunManifest& m) {
    m.command = j.at("command").get<std::string>();
    m.config = j.at("config");
    m.seed = j.at("seed").get<std::uint64_t>();
    m.workers = j.value("workers", std::size_t{1});
    m.version = j.value("version", std::string{});
    m.started_at = j.value("started_at", std::string{});
    m.finished_at = j.value("finished_at", std::string{});
    m.output_dir = j.value("output_dir", std::string{});
    m.outputs = j.value("outputs", std::vector<std::string>{});
    m.status = j.value("status", std::string{});
}

void write_manifest(const RunManifest& m, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << nlohmann::json(m).dump(2) << '\n';
}

RunManifest read_manifest(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open manifest " + path.string());
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw std::runtime_error("malformed manifest " + path.string() + ": " + e.what());
    }
    return j.get<RunManifest>();
}

}  // namespace geomreg
