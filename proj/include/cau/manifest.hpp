#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "json.hpp"

namespace cau {

// FNV-1a64 over the file's bytes.
std::uint64_t file_digest(const std::string& path);
std::string file_digest_hex(const std::string& path);

// Write <artifact>.manifest.json recording the producing stage, its config,
// the artifact's own digest, and the digests of every input. Input keys that
// are bare file names resolve relative to the artifact's directory. The
// manifest is fully determined by its content — reruns with unchanged inputs
// produce byte-identical manifests.
void write_manifest(const std::string& artifact, const std::string& stage,
                    const nlohmann::json& config,
                    const std::map<std::string, std::string>& inputs);

// Verify an upstream artifact before consuming it: it must exist, carry a
// manifest, match its recorded digest, and every input recorded in the
// manifest must still match its digest (staleness check one level up).
void require_artifact(const std::string& artifact);

} // namespace cau
