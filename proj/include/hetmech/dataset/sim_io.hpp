#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "hetmech/common/hash.hpp"
#include "hetmech/common/io.hpp"
#include "hetmech/fea/mesh.hpp"
#include "hetmech/fea/solver.hpp"
#include "hetmech/pattern/pattern.hpp"

namespace hetmech::dataset {

static_assert(std::endian::native == std::endian::little, "binary formats assume a little-endian host");

inline constexpr char kDisplacementMagic[8] = {'H', 'M', 'D', 'I', 'S', 'P', '0', '1'};
inline constexpr std::size_t kDisplacementValues = static_cast<std::size_t>(kPatternCells) * 2;

inline std::string encode_displacement(const std::vector<double>& field) {
    if (field.size() != kDisplacementValues)
        throw FormatError("displacement field has " + std::to_string(field.size()) + " values, expected " +
                          std::to_string(kDisplacementValues));
    std::string out(kDisplacementMagic, 8);
    out.resize(8 + field.size() * sizeof(double));
    std::memcpy(out.data() + 8, field.data(), field.size() * sizeof(double));
    return out;
}

inline std::vector<double> decode_displacement(std::string_view bytes) {
    if (bytes.size() < 8 || std::memcmp(bytes.data(), kDisplacementMagic, 8) != 0)
        throw FormatError("missing HMDISP01 magic");
    if (bytes.size() != 8 + kDisplacementValues * sizeof(double))
        throw FormatError("displacement file has " + std::to_string(bytes.size()) + " bytes");
    std::vector<double> field(kDisplacementValues);
    std::memcpy(field.data(), bytes.data() + 8, kDisplacementValues * sizeof(double));
    return field;
}

inline const std::vector<std::string>& sim_csv_header() {
    static const std::vector<std::string> h{"pattern_id", "fidelity", "d", "delta_psi", "fx", "fy"};
    return h;
}

/// One CSV row per displacement value.
inline void append_sim_rows(CsvTable& t, const fea::SimRecord& rec) {
    if (t.header.empty()) t.header = sim_csv_header();
    for (std::size_t i = 0; i < rec.delta_psi.size(); ++i)
        t.rows.push_back({rec.pattern_id, rec.fidelity, format_double(rec.delta_psi[i].first),
                          format_double(rec.delta_psi[i].second), format_double(rec.reaction_fx[i]),
                          format_double(rec.reaction_fy[i])});
}

inline std::string sim_records_to_csv(const std::vector<fea::SimRecord>& recs) {
    CsvTable t;
    t.header = sim_csv_header();
    for (const auto& r : recs) append_sim_rows(t, r);
    return to_csv(t);
}

/// Groups rows back into records, preserving first-appearance order. Rows of
/// one record must be contiguous and ordered by d.
inline std::vector<fea::SimRecord> parse_sim_records(std::string_view text) {
    const auto t = parse_csv(text);
    if (t.header != sim_csv_header()) throw FormatError("unexpected simulation CSV header");
    std::vector<fea::SimRecord> out;
    for (const auto& row : t.rows) {
        if (out.empty() || out.back().pattern_id != row[0] || out.back().fidelity != row[1]) {
            out.emplace_back();
            out.back().pattern_id = row[0];
            out.back().fidelity = row[1];
        }
        auto& r = out.back();
        const double d = parse_double(row[2]);
        if (!r.delta_psi.empty() && !(d > r.delta_psi.back().first))
            throw FormatError("simulation rows for " + r.pattern_id + " are not ordered by d");
        r.delta_psi.emplace_back(d, parse_double(row[3]));
        r.reaction_fx.push_back(parse_double(row[4]));
        r.reaction_fy.push_back(parse_double(row[5]));
    }
    return out;
}

/// Checks the record invariants: Delta Psi(0) = 0 and non-decreasing in d.
inline void validate_sim_record(const fea::SimRecord& r) {
    if (r.delta_psi.empty()) throw FormatError(r.pattern_id + ": empty record");
    if (r.reaction_fx.size() != r.delta_psi.size() || r.reaction_fy.size() != r.delta_psi.size())
        throw FormatError(r.pattern_id + ": per-d lists differ in length");
    if (r.delta_psi.front().first == 0.0 && r.delta_psi.front().second != 0.0)
        throw FormatError(r.pattern_id + ": Delta Psi(0) is not 0");
    for (std::size_t i = 1; i < r.delta_psi.size(); ++i)
        if (r.delta_psi[i].second < r.delta_psi[i - 1].second)
            throw FormatError(r.pattern_id + ": Delta Psi decreases with d");
}

/// Content-addressed store of simulation results keyed by
/// (pattern bitmap hash, fidelity profile hash). Writes are atomic.
class SimCache {
public:
    explicit SimCache(fs::path root) : root_(std::move(root)) {}

    const fs::path& root() const { return root_; }

    fs::path record_path(const Pattern& p, const fea::FidelityProfile& prof) const {
        return root_ / prof.hash() / (hex64(p.content_hash()) + ".csv");
    }
    fs::path displacement_path(const Pattern& p, const fea::FidelityProfile& prof) const {
        return root_ / prof.hash() / (hex64(p.content_hash()) + ".disp");
    }

    /// Cached record relabelled with `pattern_id`, if present.
    std::optional<fea::SimRecord> load(const Pattern& p, const fea::FidelityProfile& prof,
                                       const std::string& pattern_id, bool with_displacement) const {
        const auto rp = record_path(p, prof);
        if (!fs::exists(rp)) return std::nullopt;
        auto recs = parse_sim_records(read_file(rp));
        if (recs.size() != 1) throw FormatError("cache entry " + rp.string() + " is malformed");
        auto rec = std::move(recs.front());
        rec.pattern_id = pattern_id;
        if (with_displacement) {
            const auto dp = displacement_path(p, prof);
            if (!fs::exists(dp)) return std::nullopt;
            rec.displacement_field = decode_displacement(read_file(dp));
        }
        return rec;
    }

    void store(const Pattern& p, const fea::FidelityProfile& prof, const fea::SimRecord& rec) const {
        fea::SimRecord keyed = rec;
        keyed.pattern_id = hex64(p.content_hash());
        if (!rec.displacement_field.empty())
            write_file_atomic(displacement_path(p, prof), encode_displacement(rec.displacement_field));
        write_file_atomic(record_path(p, prof), sim_records_to_csv({keyed}));
    }

private:
    fs::path root_;
};

}  // namespace hetmech::dataset
