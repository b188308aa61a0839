#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "deepclass/classes.hpp"
#include "deepclass/tensor.hpp"

namespace deepclass {

/// Ground-truth and prediction CSV header (challenge column codes, canonical order).
inline constexpr std::string_view kGroundTruthHeader = "image,MEL,NV,BCC,AKIEC,BKL,DF,VASC";

/// Challenge column code of a class (MEL, NV, BCC, AKIEC, BKL, DF, VASC).
std::string_view challenge_code(ClassLabel c);

struct Sample {
    std::string image_id;
    std::string path;
    ClassLabel label = ClassLabel::M;

    std::array<float, kClassCount> onehot() const;
};

enum class Split { all, train, eval };

std::string_view split_name(Split s);

struct DatasetManifest {
    std::vector<Sample> samples;
    Split split = Split::all;
    std::string provenance;

    std::size_t size() const noexcept { return samples.size(); }
    std::array<std::size_t, kClassCount> class_counts() const;

    friend bool operator==(const DatasetManifest& a, const DatasetManifest& b) {
        return a.split == b.split && a.provenance == b.provenance && a.samples.size() == b.samples.size() &&
               std::equal(a.samples.begin(), a.samples.end(), b.samples.begin(), [](const Sample& x, const Sample& y) {
                   return x.image_id == y.image_id && x.path == y.path && x.label == y.label;
               });
    }
};

/// Parses the challenge ground-truth CSV. Sample paths are left empty.
/// Errors (ParseError, with line number): wrong header, non-one-hot row, duplicate id.
DatasetManifest parse_groundtruth(std::string_view csv);

/// Manifest TSV: optional "# split=" and "# provenance=" lines, a header
/// `image_id<TAB>path<TAB>class`, then one row per sample.
std::string format_manifest(const DatasetManifest& manifest);
DatasetManifest parse_manifest(std::string_view tsv);

DatasetManifest load_manifest(const std::filesystem::path& path);
void save_manifest(const DatasetManifest& manifest, const std::filesystem::path& path);

/// Per-class scores keyed by image id, as read from a prediction CSV.
struct ScoredImage {
    std::string image_id;
    std::array<double, kClassCount> scores{};
};

std::vector<ScoredImage> parse_prediction_csv(std::string_view csv);
std::string format_prediction_csv(std::span<const ScoredImage> rows);

// --- image codec ----------------------------------------------------------

/// Decodes binary PPM (P6, maxval 255) or the packed "DCIM" tensor format into a
/// 3 x H x W tensor; PPM bytes map to byte/255.
Tensor decode_image(std::span<const std::uint8_t> bytes);

/// P6 encoding; values are clamped to [0,1] and rounded to the nearest byte.
std::vector<std::uint8_t> encode_ppm(const Tensor& image);

/// "DCIM" | u32 channels | u32 height | u32 width | f32 data (little-endian).
std::vector<std::uint8_t> encode_dcim(const Tensor& image);

Tensor load_image(const std::filesystem::path& path);

/// Writes DCIM unless the extension is .ppm.
void save_image(const Tensor& image, const std::filesystem::path& path);

/// Align-corners bilinear resampling of a 3 x H x W image (H, W >= 2).
Tensor resize_bilinear(const Tensor& image, std::size_t out_h = 128, std::size_t out_w = 128);

// --- split ----------------------------------------------------------------

/// Seeded, class-stratified selection of `eval_count` samples (largest-remainder
/// apportionment); both parts keep manifest order.
std::pair<DatasetManifest, DatasetManifest> split_eval(const DatasetManifest& manifest, std::size_t eval_count,
                                                        std::uint64_t seed);

// --- image sources for training -------------------------------------------

/// Random-access labelled images, each 3 x H x W at the network input size.
class ImageSource {
public:
    virtual ~ImageSource() = default;
    virtual std::size_t size() const = 0;
    virtual ClassLabel label(std::size_t i) const = 0;
    virtual Tensor image(std::size_t i) const = 0;
    virtual std::string id(std::size_t i) const = 0;
};

class InMemoryImages final : public ImageSource {
public:
    void add(std::string id, Tensor image, ClassLabel label);

    std::size_t size() const override { return images_.size(); }
    ClassLabel label(std::size_t i) const override { return labels_[i]; }
    Tensor image(std::size_t i) const override { return images_[i]; }
    std::string id(std::size_t i) const override { return ids_[i]; }

private:
    std::vector<std::string> ids_;
    std::vector<Tensor> images_;
    std::vector<ClassLabel> labels_;
};

/// Loads manifest images on demand, resolving relative paths against `base_dir` and
/// resizing to height x width when needed.
class ManifestImages final : public ImageSource {
public:
    ManifestImages(DatasetManifest manifest, std::filesystem::path base_dir, std::size_t height = 128,
                   std::size_t width = 128);

    std::size_t size() const override { return manifest_.size(); }
    ClassLabel label(std::size_t i) const override { return manifest_.samples[i].label; }
    Tensor image(std::size_t i) const override;
    std::string id(std::size_t i) const override { return manifest_.samples[i].image_id; }

    std::filesystem::path resolve(std::size_t i) const;

private:
    DatasetManifest manifest_;
    std::filesystem::path base_;
    std::size_t height_;
    std::size_t width_;
};

/// Subtracted from every pixel when a batch is assembled, so the network sees inputs in [-0.5, 0.5].
inline constexpr float kPixelCentre = 0.5f;

/// Stacks the images at `indices` into a B x 3 x H x W batch (pixels minus kPixelCentre) plus
/// B x 7 one-hot targets.
std::pair<Tensor, Tensor> make_batch(const ImageSource& source, std::span<const std::size_t> indices);

}  // namespace deepclass
