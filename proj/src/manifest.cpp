#include "cau/manifest.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>

#include "cau/errors.hpp"
#include "cau/hash.hpp"

namespace fs = std::filesystem;

namespace cau {

std::uint64_t file_digest(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DependencyError("cannot read " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return fnv1a64(buf.str());
}

std::string file_digest_hex(const std::string& path) { return hex64(file_digest(path)); }

void write_manifest(const std::string& artifact, const std::string& stage,
                    const nlohmann::json& config,
                    const std::map<std::string, std::string>& inputs) {
    nlohmann::json j;
    j["stage"] = stage;
    j["artifact"] = fs::path(artifact).filename().string();
    j["digest"] = file_digest_hex(artifact);
    j["config"] = config;
    j["inputs"] = nlohmann::json::object();
    for (const auto& [name, digest] : inputs) j["inputs"][name] = digest;
    const std::string path = artifact + ".manifest.json";
    std::ofstream out(path);
    if (!out) throw Error("cannot write " + path);
    out << j.dump(2) << "\n";
    if (!out) throw Error("write failed: " + path);
}

void require_artifact(const std::string& artifact) {
    if (!fs::exists(artifact)) throw DependencyError("missing artifact " + artifact);
    const std::string mpath = artifact + ".manifest.json";
    std::ifstream in(mpath);
    if (!in) throw DependencyError("missing manifest " + mpath);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw DependencyError(mpath + ": " + e.what());
    }
    const std::string recorded = j.value("digest", "");
    const std::string current = file_digest_hex(artifact);
    if (recorded != current) {
        throw DependencyError("stale artifact " + artifact + ": digest " + current +
                              " does not match manifest " + recorded);
    }
    if (!j.contains("inputs")) return;
    const fs::path base = fs::path(artifact).parent_path();
    for (const auto& [name, digest] : j.at("inputs").items()) {
        const fs::path p = fs::path(name).is_absolute() ? fs::path(name) : base / name;
        if (!fs::exists(p))
            throw DependencyError("missing upstream input " + p.string() + " of " + artifact);
        const std::string cur = file_digest_hex(p.string());
        if (cur != digest.get<std::string>()) {
            throw DependencyError("stale chain: input " + p.string() + " of " + artifact +
                                  " changed since it was produced");
        }
    }
}

} // namespace cau
