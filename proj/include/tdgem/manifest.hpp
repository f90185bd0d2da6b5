#pragma once

// Run manifest: every CLI artifact directory gets exactly one, recording the
// command, the resolved arguments, the config snapshot, the seed and backend
// identities. Re-running a manifest on the toy stack reproduces the outputs
// byte for byte (timestamps aside).

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "tdgem/core.hpp"

namespace tdgem {

inline constexpr const char* kToolVersion = "tdgem 0.1.0";

struct RunManifest {
    std::string command;
    std::map<std::string, std::string> args;  // canonical resolved arguments
    EditConfig config;
    std::uint64_t seed = 0;
    std::vector<std::string> backend_ids;
    std::string code_version = kToolVersion;
    std::string started_at;
    std::string finished_at;
};

void write_manifest(const RunManifest& m, const std::filesystem::path& dir);
RunManifest read_manifest(const std::filesystem::path& file);

// Equality of everything except the timestamps.
bool manifests_equivalent(const RunManifest& a, const RunManifest& b);

std::string current_timestamp();

}  // namespace tdgem
