#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>

#include "hetmech/common/error.hpp"
#include "hetmech/common/hash.hpp"

namespace hetmech {

inline constexpr int kPatternSide = 64;
inline constexpr int kPatternCells = kPatternSide * kPatternSide;

enum class PatternSource { cahn_hilliard, procedural, bernoulli, wgan_cp, wgan_gp, external };

inline std::string_view to_string(PatternSource s) {
    switch (s) {
        case PatternSource::cahn_hilliard: return "cahn-hilliard";
        case PatternSource::procedural: return "procedural";
        case PatternSource::bernoulli: return "bernoulli";
        case PatternSource::wgan_cp: return "wgan-cp";
        case PatternSource::wgan_gp: return "wgan-gp";
        case PatternSource::external: return "external";
    }
    return "external";
}

inline PatternSource parse_source(std::string_view s) {
    for (auto v : {PatternSource::cahn_hilliard, PatternSource::procedural,
                   PatternSource::bernoulli, PatternSource::wgan_cp, PatternSource::wgan_gp,
                   PatternSource::external})
        if (to_string(v) == s) return v;
    throw FormatError("unknown pattern source '" + std::string(s) + "'");
}

/// Real patterns are the ones the physics produced; everything else is synthetic.
inline bool is_real_source(PatternSource s) { return s == PatternSource::cahn_hilliard; }

/// 64x64 two-phase bitmap. Row 0 is the top of the image; cell value 1 is the
/// stiff phase, 0 the soft background.
struct Pattern {
    std::array<std::uint8_t, kPatternCells> cells{};
    PatternSource source = PatternSource::external;
    std::string seed_or_id;

    std::uint8_t at(int row, int col) const { return cells[row * kPatternSide + col]; }
    std::uint8_t& at(int row, int col) { return cells[row * kPatternSide + col]; }

    int stiff_count() const {
        int n = 0;
        for (auto c : cells) n += c;
        return n;
    }
    double stiff_fraction() const { return static_cast<double>(stiff_count()) / kPatternCells; }

    /// Hash of the bitmap only; provenance does not affect it.
    std::uint64_t content_hash() const {
        return Fnv1a{}.update(std::span<const std::uint8_t>(cells)).digest();
    }

    bool same_cells(const Pattern& o) const { return cells == o.cells; }

    static Pattern filled(std::uint8_t v, PatternSource src = PatternSource::external,
                          std::string id = {}) {
        Pattern p;
        p.cells.fill(v);
        p.source = src;
        p.seed_or_id = std::move(id);
        return p;
    }
};

/// Throws FormatError unless every cell is 0 or 1.
inline void validate_pattern(const Pattern& p) {
    for (auto c : p.cells)
        if (c > 1) throw FormatError("pattern cell value " + std::to_string(c) + " is not binary");
}

/// Exact lattice rotation by quarter_turns * 90 degrees counter-clockwise.
inline Pattern rotate_pattern(const Pattern& p, int quarter_turns) {
    const int k = ((quarter_turns % 4) + 4) % 4;
    Pattern out = p;
    if (k == 0) return out;
    constexpr int n = kPatternSide;
    for (int r = 0; r < n; ++r) {
        for (int c = 0; c < n; ++c) {
            int sr = r, sc = c;
            switch (k) {
                case 1: sr = c; sc = n - 1 - r; break;
                case 2: sr = n - 1 - r; sc = n - 1 - c; break;
                case 3: sr = n - 1 - c; sc = r; break;
            }
            out.at(r, c) = p.at(sr, sc);
        }
    }
    return out;
}

}  // namespace hetmech
