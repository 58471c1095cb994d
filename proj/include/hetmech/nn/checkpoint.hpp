#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "hetmech/common/error.hpp"
#include "hetmech/common/io.hpp"
#include "hetmech/nn/network.hpp"
#include "hetmech/nn/optim.hpp"

namespace hetmech::nn {

static_assert(std::endian::native == std::endian::little, "checkpoints assume a little-endian host");

inline constexpr char kCheckpointMagic[8] = {'H', 'M', 'C', 'K', 'P', 'T', '0', '1'};

struct NamedTensor {
    std::string name;
    std::string kind;  // param | buffer | adam_m | adam_v
    std::vector<int> shape;
    std::vector<double> data;
};

/// Label normalisation applied before training: y_n = (y - mean) / std.
struct LabelScaler {
    double mean = 0.0;
    double std = 1.0;

    double forward(double y) const { return (y - mean) / std; }
    double inverse(double y) const { return y * std + mean; }
};

/// Everything needed to rebuild a trained network (and optionally resume
/// optimisation): architecture, tensors, Adam state, scaler, provenance.
struct Checkpoint {
    ArchitectureSpec arch;
    std::vector<NamedTensor> tensors;
    long adam_step = -1;  // < 0: no optimiser state stored
    LabelScaler scaler;
    nlohmann::json provenance = nlohmann::json::object();
};

inline Checkpoint capture(Network& net, const LabelScaler& scaler, Adam* opt = nullptr) {
    Checkpoint c;
    c.arch = net.architecture();
    c.scaler = scaler;
    auto add = [&](const ParamRef& p, const char* kind, const double* src) {
        c.tensors.push_back({p.name, kind, p.shape, std::vector<double>(src, src + p.size)});
    };
    for (const auto& p : net.parameters()) add(p, "param", p.value);
    for (const auto& b : net.buffers()) add(b, "buffer", b.value);
    if (opt) {
        c.adam_step = opt->step_count();
        for (std::size_t i = 0; i < net.parameters().size(); ++i) {
            add(net.parameters()[i], "adam_m", opt->first_moments()[i].data());
            add(net.parameters()[i], "adam_v", opt->second_moments()[i].data());
        }
    }
    return c;
}

/// Copies tensors into `net` (and `opt`, when both sides carry Adam state).
inline void restore(const Checkpoint& c, Network& net, Adam* opt = nullptr) {
    if (!(c.arch == net.architecture()))
        throw ArchitectureError("checkpoint architecture '" + c.arch.name + "' does not match network '" +
                                net.architecture().name + "'");
    auto find = [&](const std::string& name, const std::string& kind) -> const NamedTensor& {
        for (const auto& t : c.tensors)
            if (t.name == name && t.kind == kind) return t;
        throw FormatError("checkpoint lacks " + kind + " " + name);
    };
    auto load_into = [&](const ParamRef& p, const std::string& kind, double* dst) {
        const auto& t = find(p.name, kind);
        if (static_cast<Eigen::Index>(t.data.size()) != p.size)
            throw FormatError("checkpoint tensor " + p.name + " has " + std::to_string(t.data.size()) + " values");
        std::memcpy(dst, t.data.data(), t.data.size() * sizeof(double));
    };
    for (const auto& p : net.parameters()) load_into(p, "param", p.value);
    for (const auto& b : net.buffers()) load_into(b, "buffer", b.value);
    if (opt && c.adam_step >= 0) {
        for (std::size_t i = 0; i < net.parameters().size(); ++i) {
            load_into(net.parameters()[i], "adam_m", opt->first_moments()[i].data());
            load_into(net.parameters()[i], "adam_v", opt->second_moments()[i].data());
        }
        opt->set_step_count(c.adam_step);
    }
}

/// "HMCKPT01", u64 header length, JSON header, then little-endian doubles in
/// header order.
inline std::string encode_checkpoint(const Checkpoint& c) {
    nlohmann::json tensors = nlohmann::json::array();
    std::size_t offset = 0;
    for (const auto& t : c.tensors) {
        tensors.push_back({{"name", t.name}, {"kind", t.kind}, {"shape", t.shape}, {"offset", offset}, {"count", t.data.size()}});
        offset += t.data.size();
    }
    const nlohmann::json header = {{"architecture", c.arch.to_json()},
                                   {"tensors", tensors},
                                   {"adam_step", c.adam_step},
                                   {"label_mean", c.scaler.mean},
                                   {"label_std", c.scaler.std},
                                   {"provenance", c.provenance}};
    const std::string h = header.dump();
    std::string out(kCheckpointMagic, 8);
    const std::uint64_t len = h.size();
    out.append(reinterpret_cast<const char*>(&len), sizeof len);
    out += h;
    std::size_t cursor = out.size();
    out.resize(cursor + offset * sizeof(double));
    for (const auto& t : c.tensors) {
        std::memcpy(out.data() + cursor, t.data.data(), t.data.size() * sizeof(double));
        cursor += t.data.size() * sizeof(double);
    }
    return out;
}

inline Checkpoint decode_checkpoint(std::string_view bytes) {
    if (bytes.size() < 16 || std::memcmp(bytes.data(), kCheckpointMagic, 8) != 0)
        throw FormatError("missing HMCKPT01 magic");
    std::uint64_t len = 0;
    std::memcpy(&len, bytes.data() + 8, sizeof len);
    if (16 + len > bytes.size()) throw FormatError("checkpoint header is truncated");
    Checkpoint c;
    try {
        const auto header = nlohmann::json::parse(bytes.substr(16, len));
        c.arch = ArchitectureSpec::from_json(header.at("architecture"));
        c.adam_step = header.at("adam_step").get<long>();
        c.scaler = {header.at("label_mean").get<double>(), header.at("label_std").get<double>()};
        c.provenance = header.at("provenance");
        const std::string_view blob = bytes.substr(16 + len);
        for (const auto& t : header.at("tensors")) {
            NamedTensor nt{t.at("name"), t.at("kind"), t.at("shape").get<std::vector<int>>(), {}};
            const auto off = t.at("offset").get<std::size_t>(), n = t.at("count").get<std::size_t>();
            if ((off + n) * sizeof(double) > blob.size()) throw FormatError("checkpoint tensor " + nt.name + " is truncated");
            nt.data.resize(n);
            std::memcpy(nt.data.data(), blob.data() + off * sizeof(double), n * sizeof(double));
            c.tensors.push_back(std::move(nt));
        }
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("malformed checkpoint header: ") + e.what());
    }
    return c;
}

inline void save_checkpoint(const fs::path& path, const Checkpoint& c) { write_file_atomic(path, encode_checkpoint(c)); }
inline Checkpoint load_checkpoint(const fs::path& path) { return decode_checkpoint(read_file(path)); }

}  // namespace hetmech::nn
