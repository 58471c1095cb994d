#pragma once

#include <filesystem>
#include <random>
#include <string>

#include "hetmech/common/rng.hpp"
#include "hetmech/pattern/pattern.hpp"

namespace hetmech::test_support {

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        std::random_device rd;
        path_ = std::filesystem::temp_directory_path() /
                ("hetmech_" + tag + "_" + std::to_string(rd()) + std::to_string(rd()));
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;
    const std::filesystem::path& path() const { return path_; }

private:
    std::filesystem::path path_;
};

inline Pattern random_pattern(std::uint64_t seed, double p = 0.5) {
    Rng rng(seed);
    Pattern out;
    for (auto& c : out.cells) c = uniform01(rng) < p ? 1 : 0;
    out.source = PatternSource::external;
    out.seed_or_id = std::to_string(seed);
    return out;
}

}  // namespace hetmech::test_support
