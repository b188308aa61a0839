#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "deepclass/classes.hpp"
#include "deepclass/dataset.hpp"
#include "deepclass/tensor.hpp"

namespace deepclass {

enum class Flip : std::size_t { none = 0, horizontal = 1, vertical = 2, both = 3 };

std::string_view flip_name(Flip f);
std::optional<Flip> flip_from_name(std::string_view name);

inline constexpr std::size_t kAngleCount = 24;  // 15 degree steps
inline constexpr std::size_t kFlipCount = 4;
inline constexpr std::size_t kTransformCount = kAngleCount * kFlipCount;

/// Flip followed by a counter-clockwise rotation of angle_index * 15 degrees.
struct Transform {
    std::size_t angle_index = 0;
    Flip flip = Flip::none;

    /// Position in the canonical enumeration (angle major, flip minor); 0 is identity.
    std::size_t ordinal() const { return angle_index * kFlipCount + static_cast<std::size_t>(flip); }
    static Transform from_ordinal(std::size_t ordinal);

    double degrees() const { return 15.0 * static_cast<double>(angle_index); }
    bool is_identity() const { return angle_index == 0 && flip == Flip::none; }
    bool is_right_angle() const { return angle_index % 6 == 0; }

    friend bool operator==(const Transform&, const Transform&) = default;
};

/// Target image count per class, canonical order.
using AugmentTargets = std::array<std::size_t, kClassCount>;

/// M:13350 N:26820 BCC:16440 AK:13050 PBK:13185 D:10212 VL:11300.
AugmentTargets default_targets();

struct PlannedImage {
    ClassLabel label = ClassLabel::M;
    std::size_t source_index = 0;  // manifest index, or index within the class for count-only plans
    std::vector<Transform> transforms;
};

struct AugmentPlan {
    std::vector<PlannedImage> images;

    std::array<std::size_t, kClassCount> totals() const;
};

/// Per-image transform counts for one class: floor(t/n) each, +1 for the first t mod n.
/// Throws CapacityError when an image would need more than 96 variants.
std::vector<std::size_t> per_image_counts(std::size_t images, std::size_t target, ClassLabel label);

/// Count-only plan: images listed class by class, source_index is the position within the class.
AugmentPlan plan_augmentation(const std::array<std::size_t, kClassCount>& class_counts, const AugmentTargets& targets);

/// Plan over a manifest: images in manifest order, remainders go to the earliest images of each class.
AugmentPlan plan_augmentation(const DatasetManifest& manifest, const AugmentTargets& targets);

/// Applies t to a square 3 x S x S image. Right angles are exact permutations; other
/// angles use bilinear sampling with reflected borders.
Tensor apply_transform(const Tensor& image, const Transform& t);

struct AugmentedRow {
    std::string out_path;
    std::string source_id;
    Transform transform;
    ClassLabel label = ClassLabel::M;
};

struct AugmentedManifest {
    std::vector<AugmentedRow> rows;

    std::array<std::size_t, kClassCount> totals() const;
};

/// TSV with header `out_path<TAB>source_id<TAB>angle_index<TAB>flip<TAB>class`.
std::string format_augmented_manifest(const AugmentedManifest& m);
AugmentedManifest parse_augmented_manifest(std::string_view tsv);

/// Training view: image id "<source>@<angle>_<flip>", path = out_path.
DatasetManifest to_dataset_manifest(const AugmentedManifest& m);

/// Output file name of one augmented image.
std::string augmented_file_name(const std::string& source_id, const Transform& t);

/// Resizes each source to size x size, applies its planned transforms and writes DCIM
/// files into output_dir. Rows follow plan order; out_path is relative to output_dir.
AugmentedManifest run_augmentation(const DatasetManifest& manifest, const AugmentPlan& plan,
                                   const std::filesystem::path& source_dir, const std::filesystem::path& output_dir,
                                   std::size_t size = 128);

}  // namespace deepclass
