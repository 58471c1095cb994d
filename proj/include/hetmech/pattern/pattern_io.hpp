#pragma once

#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "hetmech/common/io.hpp"
#include "hetmech/pattern/pattern.hpp"

namespace hetmech {

/// Sidecar metadata written next to each PBM file.
struct PatternMeta {
    PatternSource source = PatternSource::external;
    std::string seed;
    std::optional<double> c0;
    std::optional<long> snapshot_step;
};

/// Encodes a pattern as binary PBM (P4). Bit 1 (black) is the stiff phase.
inline std::string encode_pbm(const Pattern& p) {
    std::string out = "P4\n64 64\n";
    constexpr int row_bytes = kPatternSide / 8;
    for (int r = 0; r < kPatternSide; ++r) {
        for (int b = 0; b < row_bytes; ++b) {
            unsigned char byte = 0;
            for (int bit = 0; bit < 8; ++bit)
                if (p.at(r, b * 8 + bit)) byte |= static_cast<unsigned char>(0x80u >> bit);
            out.push_back(static_cast<char>(byte));
        }
    }
    return out;
}

namespace detail {
inline void skip_pbm_space(std::string_view s, std::size_t& i) {
    while (i < s.size()) {
        if (s[i] == '#') {
            while (i < s.size() && s[i] != '\n') ++i;
        } else if (s[i] == ' ' || s[i] == '\t' || s[i] == '\n' || s[i] == '\r') {
            ++i;
        } else {
            break;
        }
    }
}
inline long read_pbm_int(std::string_view s, std::size_t& i) {
    skip_pbm_space(s, i);
    std::size_t start = i;
    while (i < s.size() && s[i] >= '0' && s[i] <= '9') ++i;
    if (start == i) throw FormatError("PBM header: expected integer");
    return parse_int(s.substr(start, i - start));
}
}  // namespace detail

/// Decodes and validates a P4 bitmap. Anything other than 64x64 is rejected.
inline Pattern decode_pbm(std::string_view bytes) {
    if (bytes.size() < 2 || bytes.substr(0, 2) != "P4") throw FormatError("not a P4 PBM file");
    std::size_t i = 2;
    const long w = detail::read_pbm_int(bytes, i);
    const long h = detail::read_pbm_int(bytes, i);
    if (w != kPatternSide || h != kPatternSide)
        throw FormatError("PBM is " + std::to_string(w) + "x" + std::to_string(h) +
                          ", expected 64x64");
    if (i >= bytes.size()) throw FormatError("PBM truncated after header");
    ++i;  // single whitespace before raster
    constexpr std::size_t raster = kPatternSide * kPatternSide / 8;
    if (bytes.size() - i != raster)
        throw FormatError("PBM raster is " + std::to_string(bytes.size() - i) + " bytes, expected " +
                          std::to_string(raster));
    Pattern p;
    for (int r = 0; r < kPatternSide; ++r)
        for (int c = 0; c < kPatternSide; ++c) {
            const auto byte = static_cast<unsigned char>(bytes[i + r * 8 + c / 8]);
            p.at(r, c) = (byte >> (7 - c % 8)) & 1u;
        }
    return p;
}

inline nlohmann::json meta_to_json(const PatternMeta& m) {
    nlohmann::json j;
    j["source"] = std::string(to_string(m.source));
    j["seed"] = m.seed;
    j["c0"] = m.c0 ? nlohmann::json(*m.c0) : nlohmann::json(nullptr);
    j["snapshot_step"] = m.snapshot_step ? nlohmann::json(*m.snapshot_step) : nlohmann::json(nullptr);
    return j;
}

/// Validates the sidecar schema: exactly {source, seed, c0, snapshot_step}.
inline PatternMeta meta_from_json(const nlohmann::json& j) {
    if (!j.is_object()) throw FormatError("sidecar is not a JSON object");
    for (const char* key : {"source", "seed", "c0", "snapshot_step"})
        if (!j.contains(key)) throw FormatError(std::string("sidecar missing '") + key + "'");
    if (j.size() != 4) throw FormatError("sidecar has unexpected keys");
    PatternMeta m;
    if (!j["source"].is_string()) throw FormatError("sidecar 'source' must be a string");
    m.source = parse_source(j["source"].get<std::string>());
    if (!j["seed"].is_string()) throw FormatError("sidecar 'seed' must be a string");
    m.seed = j["seed"].get<std::string>();
    if (!j["c0"].is_null()) {
        if (!j["c0"].is_number()) throw FormatError("sidecar 'c0' must be a number or null");
        m.c0 = j["c0"].get<double>();
    }
    if (!j["snapshot_step"].is_null()) {
        if (!j["snapshot_step"].is_number_integer())
            throw FormatError("sidecar 'snapshot_step' must be an integer or null");
        m.snapshot_step = j["snapshot_step"].get<long>();
    }
    return m;
}

inline fs::path sidecar_path(const fs::path& pbm) {
    fs::path p = pbm;
    p.replace_extension(".json");
    return p;
}

/// Writes `<path>` (PBM) and its `.json` sidecar.
inline void write_pattern(const fs::path& path, const Pattern& p, const PatternMeta& meta) {
    write_file_atomic(path, encode_pbm(p));
    write_file_atomic(sidecar_path(path), meta_to_json(meta).dump(2) + "\n");
}

inline Pattern read_pattern(const fs::path& path, PatternMeta* meta_out = nullptr) {
    Pattern p = decode_pbm(read_file(path));
    const auto side = sidecar_path(path);
    if (fs::exists(side)) {
        PatternMeta m;
        try {
            m = meta_from_json(nlohmann::json::parse(read_file(side)));
        } catch (const nlohmann::json::exception& e) {
            throw FormatError(side.string() + ": " + e.what());
        }
        p.source = m.source;
        p.seed_or_id = m.seed;
        if (meta_out) *meta_out = m;
    }
    return p;
}

/// One row of a pattern batch manifest.
struct PatternEntry {
    std::string pattern_id;
    std::string file_path;  // relative to the manifest's directory unless absolute
    PatternSource source = PatternSource::external;
    std::string seed;
};

inline std::string write_pattern_manifest(const std::vector<PatternEntry>& entries) {
    CsvTable t;
    t.header = {"pattern_id", "file_path", "source", "seed"};
    for (const auto& e : entries)
        t.rows.push_back({e.pattern_id, e.file_path, std::string(to_string(e.source)), e.seed});
    return to_csv(t);
}

inline std::vector<PatternEntry> parse_pattern_manifest(std::string_view text) {
    const auto t = parse_csv(text);
    const auto ci = t.column("pattern_id"), cf = t.column("file_path"), cs = t.column("source"),
               cd = t.column("seed");
    std::vector<PatternEntry> out;
    out.reserve(t.rows.size());
    for (const auto& r : t.rows) out.push_back({r[ci], r[cf], parse_source(r[cs]), r[cd]});
    return out;
}

inline fs::path resolve_relative(const fs::path& base_file, const std::string& rel) {
    fs::path p(rel);
    return p.is_absolute() ? p : base_file.parent_path() / p;
}

/// Loads every pattern listed in a manifest file.
inline std::vector<Pattern> load_pattern_set(const fs::path& manifest_path,
                                             std::vector<PatternEntry>* entries_out = nullptr) {
    auto entries = parse_pattern_manifest(read_file(manifest_path));
    std::vector<Pattern> out;
    out.reserve(entries.size());
    for (const auto& e : entries) {
        Pattern p = decode_pbm(read_file(resolve_relative(manifest_path, e.file_path)));
        p.source = e.source;
        p.seed_or_id = e.pattern_id;
        out.push_back(std::move(p));
    }
    if (entries_out) *entries_out = std::move(entries);
    return out;
}

/// Writes patterns as `<dir>/<prefix><i>.pbm` plus sidecars and `<dir>/manifest.csv`.
inline std::vector<PatternEntry> write_pattern_set(const fs::path& dir, const std::vector<Pattern>& patterns,
                                                   const std::vector<PatternMeta>& metas,
                                                   const std::string& prefix) {
    if (metas.size() != patterns.size()) throw ArgumentError("metadata count mismatch");
    fs::create_directories(dir);
    std::vector<PatternEntry> entries;
    entries.reserve(patterns.size());
    for (std::size_t i = 0; i < patterns.size(); ++i) {
        char name[64];
        std::snprintf(name, sizeof name, "%s%05zu", prefix.c_str(), i);
        const std::string file = std::string(name) + ".pbm";
        write_pattern(dir / file, patterns[i], metas[i]);
        entries.push_back({name, file, metas[i].source, metas[i].seed});
    }
    write_file_atomic(dir / "manifest.csv", write_pattern_manifest(entries));
    return entries;
}

}  // namespace hetmech
