#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <string_view>

namespace deepclass {

/// The seven lesion classes in canonical order; the order is used for labels, logits and reports.
enum class ClassLabel : std::size_t {
    M = 0,    // melanoma
    N = 1,    // melanocytic nevus
    BCC = 2,  // basal cell carcinoma
    AK = 3,   // actinic keratosis / Bowen's disease
    PBK = 4,  // benign keratosis
    D = 5,    // dermatofibroma
    VL = 6,   // vascular lesion
};

inline constexpr std::size_t kClassCount = 7;

inline constexpr std::array<ClassLabel, kClassCount> kAllClasses{
    ClassLabel::M, ClassLabel::N, ClassLabel::BCC, ClassLabel::AK, ClassLabel::PBK, ClassLabel::D, ClassLabel::VL};

constexpr std::size_t index_of(ClassLabel c) { return static_cast<std::size_t>(c); }

constexpr std::string_view class_name(ClassLabel c) {
    constexpr std::array<std::string_view, kClassCount> names{"M", "N", "BCC", "AK", "PBK", "D", "VL"};
    return names[index_of(c)];
}

inline std::optional<ClassLabel> class_from_name(std::string_view name) {
    for (ClassLabel c : kAllClasses)
        if (class_name(c) == name) return c;
    return std::nullopt;
}

inline std::optional<ClassLabel> class_from_index(std::size_t i) {
    if (i >= kClassCount) return std::nullopt;
    return static_cast<ClassLabel>(i);
}

}  // namespace deepclass
