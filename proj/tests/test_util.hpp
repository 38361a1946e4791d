#pragma once

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <random>
#include <string>

#include "fedcaug/image.hpp"

namespace testutil {

// Unique scratch directory, removed on destruction.
class TempDir {
public:
    TempDir() {
        const auto base = std::filesystem::temp_directory_path();
        static std::atomic<int> counter{0};
        path_ = base / ("fedcaug_test_" + std::to_string(::getpid()) + "_" +
                        std::to_string(counter.fetch_add(1)));
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    std::string file(const std::string& name) const { return (path_ / name).string(); }
    const std::filesystem::path& path() const { return path_; }

private:
    std::filesystem::path path_;
};

inline fedcaug::img::Image constant_image(int h, int w, int c, double v) {
    return fedcaug::img::Image(h, w, c, v);
}

inline fedcaug::img::Image random_image(int h, int w, int c, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> dist(0.0, 1.0);
    fedcaug::img::Image im(h, w, c);
    for (auto& p : im.pixels) p = dist(rng);
    return im;
}

inline bool close(double a, double b, double tol) { return std::abs(a - b) <= tol; }

}  // namespace testutil
