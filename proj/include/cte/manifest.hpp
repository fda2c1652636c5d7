#pragma once

#include "cte/serialize.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace cte {

inline constexpr const char *kToolVersion = "0.1.0";

/// Hex SHA-256 of a byte string or of a file's contents.
std::string sha256_hex(const std::string &bytes);
std::string sha256_file(const std::filesystem::path &path);

/// Everything needed to re-run a command: argv, the effective configuration,
/// input hashes, seeds and the artifacts written.
struct RunManifest {
    struct Input {
        std::string path;
        std::string sha256;
    };

    std::string command;
    std::vector<std::string> argv;
    Json config = Json::object();
    std::vector<Input> inputs;
    Json seeds = Json::object();
    std::vector<std::string> artifacts;
    std::string tool_version = kToolVersion;

    void add_input(const std::filesystem::path &path);
    Json to_json() const;
    static RunManifest from_json(const Json &j);
};

/// Sidecar location: "<artifact>.manifest.json".
std::filesystem::path manifest_path(const std::filesystem::path &artifact);

void write_manifest(const RunManifest &manifest, const std::filesystem::path &path);
RunManifest read_manifest(const std::filesystem::path &path);

}  // namespace cte
