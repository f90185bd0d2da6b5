#include "tdgem/manifest.hpp"

#include <chrono>
#include <ctime>

#include "tdgem/json_conv.hpp"
#include "tdgem/serialize.hpp"

namespace tdgem {

using nlohmann::json;

std::string current_timestamp() {
    const auto now = std::chrono::system_clock::now();
    const std::time_t t = std::chrono::system_clock::to_time_t(now);
    char buf[32];
    std::tm tm_utc{};
    gmtime_r(&t, &tm_utc);
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm_utc);
    return buf;
}

void write_manifest(const RunManifest& m, const std::filesystem::path& dir) {
    json j;
    j["command"] = m.command;
    j["args"] = m.args;
    j["config"] = m.config;
    j["seed"] = m.seed;
    j["backends"] = m.backend_ids;
    j["code_version"] = m.code_version;
    j["started_at"] = m.started_at;
    j["finished_at"] = m.finished_at;
    serialize::write_file_bytes(dir / "manifest.json", j.dump(2) + "\n");
}

RunManifest read_manifest(const std::filesystem::path& file) {
    json j = json::parse(serialize::read_file_bytes(file));
    RunManifest m;
    m.command = j.at("command").get<std::string>();
    m.args = j.at("args").get<std::map<std::string, std::string>>();
    m.config = j.at("config").get<EditConfig>();
    m.seed = j.at("seed").get<std::uint64_t>();
    m.backend_ids = j.at("backends").get<std::vector<std::string>>();
    m.code_version = j.at("code_version").get<std::string>();
    m.started_at = j.value("started_at", "");
    m.finished_at = j.value("finished_at", "");
    return m;
}

bool manifests_equivalent(const RunManifest& a, const RunManifest& b) {
    // timestamps and the output destination may differ between a run and its
    // replay; everything that determines the computation must match
    auto strip = [](const RunManifest& m) {
        json j;
        j["command"] = m.command;
        auto args = m.args;
        args.erase("out");
        j["args"] = args;
        j["config"] = m.config;
        j["seed"] = m.seed;
        j["backends"] = m.backend_ids;
        j["code_version"] = m.code_version;
        return j;
    };
    return strip(a) == strip(b);
}

}  // namespace tdgem
