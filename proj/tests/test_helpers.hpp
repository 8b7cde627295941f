#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "specgeo/linalg.hpp"
#include "specgeo/random.hpp"

namespace specgeo::testing {

inline Matrix random_matrix(std::size_t rows, std::size_t cols, std::uint64_t seed) {
    Rng rng(seed);
    Matrix m(rows, cols);
    for (auto& x : m.data()) x = rng.normal();
    return m;
}

inline Matrix random_symmetric(std::size_t d, std::uint64_t seed) {
    Matrix m = random_matrix(d, d, seed);
    symmetrize(m);
    return m;
}

/// B B^T + shift I, positive definite for shift > 0.
inline Matrix random_spd(std::size_t d, std::uint64_t seed, double shift = 0.5) {
    const Matrix b = random_matrix(d, d, seed);
    Matrix a = matmul(b, b.transposed());
    for (std::size_t i = 0; i < d; ++i) a(i, i) += shift;
    symmetrize(a);
    return a;
}

/// Fresh empty directory under the system temp dir.
inline std::filesystem::path temp_dir(const std::string& name) {
    auto dir = std::filesystem::temp_directory_path() / ("specgeo_test_" + name);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

} // namespace specgeo::testing
