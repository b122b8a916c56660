#include "cau/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>

#include "cau/errors.hpp"
#include "json.hpp"

static_assert(std::endian::native == std::endian::little,
              "checkpoint format assumes a little-endian host");

namespace cau {

namespace {

constexpr char kMagic[4] = {'C', 'A', 'U', '1'};

void write_u32(std::ofstream& out, std::uint32_t v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

std::uint32_t read_u32(std::ifstream& in, const std::string& path) {
    std::uint32_t v = 0;
    in.read(reinterpret_cast<char*>(&v), sizeof(v));
    if (!in) throw ParseError(path + ": truncated checkpoint header");
    return v;
}

} // namespace

void save_checkpoint(const ParamVector& p, const HyperParams& hp, const std::string& path) {
    if (p.flat.size() != p.flat_len()) throw UsageError("parameter vector has wrong length");
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write " + path);
    out.write(kMagic, sizeof(kMagic));
    write_u32(out, static_cast<std::uint32_t>(p.item_count));
    write_u32(out, static_cast<std::uint32_t>(p.d));
    write_u32(out, static_cast<std::uint32_t>(hp.max_prefix_len));
    out.write(reinterpret_cast<const char*>(p.flat.data()),
              static_cast<std::streamsize>(p.flat.size() * sizeof(double)));
    if (!out) throw Error("write failed: " + path);
    out.close();

    nlohmann::json j;
    j["embed_dim"] = hp.embed_dim;
    j["max_prefix_len"] = hp.max_prefix_len;
    j["learn_rate"] = hp.learn_rate;
    j["train_batch"] = hp.train_batch;
    j["unlearn_batch"] = hp.unlearn_batch;
    j["adam_beta1"] = hp.adam_beta1;
    j["adam_beta2"] = hp.adam_beta2;
    j["adam_eps"] = hp.adam_eps;
    j["init_scale"] = hp.init_scale;
    j["seed"] = hp.seed;
    j["item_count"] = p.item_count;
    std::ofstream side(path + ".json");
    if (!side) throw Error("cannot write " + path + ".json");
    side << j.dump(2) << "\n";
    if (!side) throw Error("write failed: " + path + ".json");
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DependencyError("missing checkpoint " + path);
    char magic[4] = {};
    in.read(magic, sizeof(magic));
    if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
        throw ParseError(path + ": not a checkpoint file");
    Checkpoint ck;
    ck.params.item_count = static_cast<int>(read_u32(in, path));
    ck.params.d = static_cast<int>(read_u32(in, path));
    const int L = static_cast<int>(read_u32(in, path));
    if (ck.params.item_count < 1 || ck.params.d < 1 || L < 1)
        throw ParseError(path + ": corrupt checkpoint header");
    ck.params.flat.resize(ck.params.flat_len());
    in.read(reinterpret_cast<char*>(ck.params.flat.data()),
            static_cast<std::streamsize>(ck.params.flat.size() * sizeof(double)));
    if (!in) throw ParseError(path + ": truncated parameter data");
    char extra = 0;
    if (in.read(&extra, 1)) throw ParseError(path + ": trailing bytes after parameters");

    std::ifstream side(path + ".json");
    if (!side) throw DependencyError("missing checkpoint sidecar " + path + ".json");
    nlohmann::json j;
    try {
        side >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(path + ".json: " + e.what());
    }
    try {
        ck.hp.embed_dim = j.at("embed_dim").get<int>();
        ck.hp.max_prefix_len = j.at("max_prefix_len").get<int>();
        ck.hp.learn_rate = j.at("learn_rate").get<double>();
        ck.hp.train_batch = j.at("train_batch").get<int>();
        ck.hp.unlearn_batch = j.at("unlearn_batch").get<int>();
        ck.hp.adam_beta1 = j.at("adam_beta1").get<double>();
        ck.hp.adam_beta2 = j.at("adam_beta2").get<double>();
        ck.hp.adam_eps = j.at("adam_eps").get<double>();
        ck.hp.init_scale = j.at("init_scale").get<double>();
        ck.hp.seed = j.at("seed").get<std::uint64_t>();
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(path + ".json: " + e.what());
    }
    if (ck.hp.embed_dim != ck.params.d || ck.hp.max_prefix_len != L)
        throw ParseError(path + ": sidecar disagrees with binary header");
    return ck;
}

} // namespace cau
