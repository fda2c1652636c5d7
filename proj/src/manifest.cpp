#include "cte/manifest.hpp"

#include <openssl/evp.h>

#include <array>
#include <memory>

namespace cte {

std::string sha256_hex(const std::string &bytes) {
    const std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), EVP_MD_CTX_free);
    std::array<unsigned char, EVP_MAX_MD_SIZE> digest{};
    unsigned int length = 0;
    if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1 ||
        EVP_DigestUpdate(ctx.get(), bytes.data(), bytes.size()) != 1 ||
        EVP_DigestFinal_ex(ctx.get(), digest.data(), &length) != 1) {
        throw std::runtime_error("sha256: digest failed");
    }
    static constexpr char hex[] = "0123456789abcdef";
    std::string out;
    out.reserve(2 * length);
    for (unsigned int i = 0; i < length; ++i) {
        out.push_back(hex[digest[i] >> 4]);
        out.push_back(hex[digest[i] & 0xF]);
    }
    return out;
}

std::string sha256_file(const std::filesystem::path &path) { return sha256_hex(read_text_file(path)); }

void RunManifest::add_input(const std::filesystem::path &path) { inputs.push_back({path.string(), sha256_file(path)}); }

Json RunManifest::to_json() const {
    Json in = Json::array();
    for (const auto &i : inputs) in.push_back(Json{{"path", i.path}, {"sha256", i.sha256}});
    return Json{{"command", command}, {"argv", argv},           {"config", config},
                {"inputs", in},       {"seeds", seeds},         {"artifacts", artifacts},
                {"tool_version", tool_version}};
}

RunManifest RunManifest::from_json(const Json &j) {
    validate_json(j, "run_manifest");
    RunManifest m;
    m.command = j.at("command").get<std::string>();
    m.argv = j.at("argv").get<std::vector<std::string>>();
    m.config = j.at("config");
    for (const auto &i : j.at("inputs")) m.inputs.push_back({i.at("path").get<std::string>(), i.at("sha256").get<std::string>()});
    m.seeds = j.at("seeds");
    m.artifacts = j.at("artifacts").get<std::vector<std::string>>();
    m.tool_version = j.at("tool_version").get<std::string>();
    return m;
}

std::filesystem::path manifest_path(const std::filesystem::path &artifact) {
    return std::filesystem::path(artifact.string() + ".manifest.json");
}

void write_manifest(const RunManifest &manifest, const std::filesystem::path &path) {
    const Json j = manifest.to_json();
    validate_json(j, "run_manifest");
    write_json_file(path, j);
}

RunManifest read_manifest(const std::filesystem::path &path) { return RunManifest::from_json(read_json_file(path)); }

}  // namespace cte
