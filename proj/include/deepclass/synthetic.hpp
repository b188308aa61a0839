#pragma once

#include <cstddef>
#include <filesystem>

#include "deepclass/dataset.hpp"

namespace deepclass {

inline constexpr std::size_t kSyntheticPerClass = 2;

/// RGB of synthetic image `shade` (0 or 1) of class c. Each class sits on its own corner
/// of the colour cube, so the set is separable by colour alone.
std::array<float, 3> synthetic_color(ClassLabel c, std::size_t shade);

/// 14 constant-colour images (2 per class) of size 3 x size x size, ids "syn_<class>_<shade>".
InMemoryImages synthetic_color_set(std::size_t size = 128);

/// Writes the synthetic set as PPM files plus "manifest.tsv" into dir and returns the manifest.
DatasetManifest write_synthetic_set(const std::filesystem::path& dir, std::size_t size = 128);

}  // namespace deepclass
