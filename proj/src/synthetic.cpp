#include "deepclass/synthetic.hpp"

#include "deepclass/errors.hpp"

namespace deepclass {

namespace {

std::string synthetic_id(ClassLabel c, std::size_t shade) {
    return "syn_" + std::string(class_name(c)) + "_" + std::to_string(shade);
}

Tensor constant_image(const std::array<float, 3>& rgb, std::size_t size) {
    Tensor img({3, size, size});
    const std::size_t plane = size * size;
    for (std::size_t c = 0; c < 3; ++c) std::fill(img.data() + c * plane, img.data() + (c + 1) * plane, rgb[c]);
    return img;
}

}  // namespace

std::array<float, 3> synthetic_color(ClassLabel c, std::size_t shade) {
    if (shade >= kSyntheticPerClass) throw ArgumentError("synthetic shade must be 0 or 1");
    // Corner k + 1 of the cube (bit 2 = red, bit 1 = green, bit 0 = blue); black is skipped.
    const std::size_t corner = index_of(c) + 1;
    const float lo = 0.15f + 0.05f * static_cast<float>(shade);
    const float hi = 0.85f - 0.10f * static_cast<float>(shade);
    return {corner & 4 ? hi : lo, corner & 2 ? hi : lo, corner & 1 ? hi : lo};
}

InMemoryImages synthetic_color_set(std::size_t size) {
    if (size == 0) throw ArgumentError("synthetic image size must be positive");
    InMemoryImages set;
    for (ClassLabel c : kAllClasses)
        for (std::size_t s = 0; s < kSyntheticPerClass; ++s)
            set.add(synthetic_id(c, s), constant_image(synthetic_color(c, s), size), c);
    return set;
}

DatasetManifest write_synthetic_set(const std::filesystem::path& dir, std::size_t size) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
    InMemoryImages set = synthetic_color_set(size);
    DatasetManifest manifest;
    manifest.provenance = "synthetic constant-colour set, " + std::to_string(size) + "px";
    for (std::size_t i = 0; i < set.size(); ++i) {
        std::string file = set.id(i) + ".ppm";
        save_image(set.image(i), dir / file);
        manifest.samples.push_back({set.id(i), file, set.label(i)});
    }
    save_manifest(manifest, dir / "manifest.tsv");
    return manifest;
}

}  // namespace deepclass
