#include "deepclass/augment.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <exception>
#include <numbers>
#include <sstream>

#include "bytes.hpp"
#include "deepclass/errors.hpp"
#include "deepclass/parallel.hpp"

namespace deepclass {

namespace {

constexpr std::array<std::string_view, kFlipCount> kFlipNames{"none", "horizontal", "vertical", "both"};

void require_square(const Tensor& image) {
    if (image.rank() != 3 || image.dim(0) != 3)
        throw DimensionError("apply_transform expects a 3 x S x S image, got " + shape_string(image.shape()));
    if (image.dim(1) != image.dim(2))
        throw GeometryError("apply_transform needs a square image, got " + shape_string(image.shape()));
}

Tensor flip_image(const Tensor& in, Flip f) {
    if (f == Flip::none) return in;
    const std::size_t h = in.dim(1), w = in.dim(2);
    const bool fx = f == Flip::horizontal || f == Flip::both;
    const bool fy = f == Flip::vertical || f == Flip::both;
    Tensor out(in.shape());
    for (std::size_t c = 0; c < 3; ++c)
        for (std::size_t y = 0; y < h; ++y)
            for (std::size_t x = 0; x < w; ++x)
                out[(c * h + y) * w + x] = in[(c * h + (fy ? h - 1 - y : y)) * w + (fx ? w - 1 - x : x)];
    return out;
}

// quarter_turns counter-clockwise, exact.
Tensor rotate_right_angle(const Tensor& in, std::size_t quarter_turns) {
    quarter_turns %= 4;
    if (quarter_turns == 0) return in;
    const std::size_t s = in.dim(1);
    Tensor out(in.shape());
    for (std::size_t c = 0; c < 3; ++c) {
        const float* src = in.data() + c * s * s;
        float* dst = out.data() + c * s * s;
        for (std::size_t y = 0; y < s; ++y) {
            for (std::size_t x = 0; x < s; ++x) {
                std::size_t sy, sx;
                switch (quarter_turns) {
                    case 1: sy = x; sx = s - 1 - y; break;
                    case 2: sy = s - 1 - y; sx = s - 1 - x; break;
                    default: sy = s - 1 - x; sx = y; break;
                }
                dst[y * s + x] = src[sy * s + sx];
            }
        }
    }
    return out;
}

// Mirror a continuous coordinate into [0, n-1] (reflection about the edge pixels).
double reflect(double u, std::size_t n) {
    if (n == 1) return 0.0;
    const double last = static_cast<double>(n - 1);
    const double period = 2.0 * last;
    u = std::fmod(std::fabs(u), period);
    return u > last ? period - u : u;
}

Tensor rotate_bilinear(const Tensor& in, double degrees) {
    const std::size_t s = in.dim(1);
    const double rad = degrees * std::numbers::pi / 180.0;
    const double cs = std::cos(rad), sn = std::sin(rad);
    const double center = (static_cast<double>(s) - 1.0) / 2.0;
    Tensor out(in.shape());
    for (std::size_t y = 0; y < s; ++y) {
        for (std::size_t x = 0; x < s; ++x) {
            const double dx = static_cast<double>(x) - center;
            const double dy = static_cast<double>(y) - center;
            const double sx = reflect(center + cs * dx - sn * dy, s);
            const double sy = reflect(center + sn * dx + cs * dy, s);
            const std::size_t x0 = std::min(static_cast<std::size_t>(sx), s - 1);
            const std::size_t y0 = std::min(static_cast<std::size_t>(sy), s - 1);
            const std::size_t x1 = std::min(x0 + 1, s - 1), y1 = std::min(y0 + 1, s - 1);
            const double fx = sx - static_cast<double>(x0), fy = sy - static_cast<double>(y0);
            for (std::size_t c = 0; c < 3; ++c) {
                const float* src = in.data() + c * s * s;
                double top = src[y0 * s + x0] * (1.0 - fx) + src[y0 * s + x1] * fx;
                double bot = src[y1 * s + x0] * (1.0 - fx) + src[y1 * s + x1] * fx;
                out[(c * s + y) * s + x] = static_cast<float>(top * (1.0 - fy) + bot * fy);
            }
        }
    }
    return out;
}

std::vector<std::string_view> split_tabs(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    for (;;) {
        std::size_t p = line.find('\t', start);
        if (p == std::string_view::npos) {
            out.push_back(line.substr(start));
            return out;
        }
        out.push_back(line.substr(start, p - start));
        start = p + 1;
    }
}

constexpr std::string_view kAugmentedHeader = "out_path\tsource_id\tangle_index\tflip\tclass";

}  // namespace

std::string_view flip_name(Flip f) { return kFlipNames[static_cast<std::size_t>(f)]; }

std::optional<Flip> flip_from_name(std::string_view name) {
    for (std::size_t i = 0; i < kFlipCount; ++i)
        if (kFlipNames[i] == name) return static_cast<Flip>(i);
    return std::nullopt;
}

Transform Transform::from_ordinal(std::size_t ordinal) {
    if (ordinal >= kTransformCount) throw ArgumentError("transform ordinal " + std::to_string(ordinal) + " >= 96");
    return {ordinal / kFlipCount, static_cast<Flip>(ordinal % kFlipCount)};
}

AugmentTargets default_targets() { return {13350, 26820, 16440, 13050, 13185, 10212, 11300}; }

std::array<std::size_t, kClassCount> AugmentPlan::totals() const {
    std::array<std::size_t, kClassCount> t{};
    for (const PlannedImage& p : images) t[index_of(p.label)] += p.transforms.size();
    return t;
}

std::vector<std::size_t> per_image_counts(std::size_t images, std::size_t target, ClassLabel label) {
    if (target == 0) return std::vector<std::size_t>(images, 0);
    if (images == 0)
        throw CapacityError("class " + std::string(class_name(label)) + " has no source images for a target of " +
                            std::to_string(target));
    const std::size_t base = target / images;
    const std::size_t extra = target % images;
    if (base + (extra ? 1 : 0) > kTransformCount)
        throw CapacityError("class " + std::string(class_name(label)) + " needs " +
                            std::to_string(base + (extra ? 1 : 0)) + " variants per image for " +
                            std::to_string(target) + " from " + std::to_string(images) + " images; at most " +
                            std::to_string(kTransformCount) + " exist");
    std::vector<std::size_t> counts(images, base);
    for (std::size_t i = 0; i < extra; ++i) ++counts[i];
    return counts;
}

namespace {

std::vector<Transform> first_transforms(std::size_t n) {
    std::vector<Transform> t;
    t.reserve(n);
    for (std::size_t i = 0; i < n; ++i) t.push_back(Transform::from_ordinal(i));
    return t;
}

}  // namespace

AugmentPlan plan_augmentation(const std::array<std::size_t, kClassCount>& class_counts, const AugmentTargets& targets) {
    AugmentPlan plan;
    for (ClassLabel c : kAllClasses) {
        auto counts = per_image_counts(class_counts[index_of(c)], targets[index_of(c)], c);
        for (std::size_t i = 0; i < counts.size(); ++i) plan.images.push_back({c, i, first_transforms(counts[i])});
    }
    return plan;
}

AugmentPlan plan_augmentation(const DatasetManifest& manifest, const AugmentTargets& targets) {
    auto class_counts = manifest.class_counts();
    std::array<std::vector<std::size_t>, kClassCount> counts;
    for (ClassLabel c : kAllClasses)
        counts[index_of(c)] = per_image_counts(class_counts[index_of(c)], targets[index_of(c)], c);
    std::array<std::size_t, kClassCount> seen{};
    AugmentPlan plan;
    for (std::size_t i = 0; i < manifest.size(); ++i) {
        ClassLabel c = manifest.samples[i].label;
        std::size_t n = counts[index_of(c)][seen[index_of(c)]++];
        plan.images.push_back({c, i, first_transforms(n)});
    }
    return plan;
}

Tensor apply_transform(const Tensor& image, const Transform& t) {
    require_square(image);
    if (t.angle_index >= kAngleCount) throw ArgumentError("angle index " + std::to_string(t.angle_index) + " >= 24");
    Tensor flipped = flip_image(image, t.flip);
    if (t.is_right_angle()) return rotate_right_angle(flipped, t.angle_index / 6);
    return rotate_bilinear(flipped, t.degrees());
}

std::array<std::size_t, kClassCount> AugmentedManifest::totals() const {
    std::array<std::size_t, kClassCount> t{};
    for (const AugmentedRow& r : rows) ++t[index_of(r.label)];
    return t;
}

std::string format_augmented_manifest(const AugmentedManifest& m) {
    std::ostringstream os;
    os << kAugmentedHeader << '\n';
    for (const AugmentedRow& r : m.rows)
        os << r.out_path << '\t' << r.source_id << '\t' << r.transform.angle_index << '\t'
           << flip_name(r.transform.flip) << '\t' << class_name(r.label) << '\n';
    return os.str();
}

AugmentedManifest parse_augmented_manifest(std::string_view tsv) {
    AugmentedManifest m;
    std::size_t line_no = 0;
    std::size_t pos = 0;
    bool header = false;
    while (pos < tsv.size()) {
        std::size_t end = tsv.find('\n', pos);
        if (end == std::string_view::npos) end = tsv.size();
        std::string_view line = tsv.substr(pos, end - pos);
        pos = end + 1;
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        if (!header) {
            if (line != kAugmentedHeader) throw ParseError("expected augmented-manifest header", line_no);
            header = true;
            continue;
        }
        auto cells = split_tabs(line);
        if (cells.size() != 5) throw ParseError("expected 5 tab-separated fields", line_no);
        AugmentedRow r;
        r.out_path = std::string(cells[0]);
        r.source_id = std::string(cells[1]);
        std::size_t angle = 0;
        auto [ptr, ec] = std::from_chars(cells[2].data(), cells[2].data() + cells[2].size(), angle);
        if (ec != std::errc() || ptr != cells[2].data() + cells[2].size() || angle >= kAngleCount)
            throw ParseError("bad angle index '" + std::string(cells[2]) + "'", line_no);
        auto flip = flip_from_name(cells[3]);
        if (!flip) throw ParseError("bad flip '" + std::string(cells[3]) + "'", line_no);
        auto label = class_from_name(cells[4]);
        if (!label) throw ParseError("unknown class '" + std::string(cells[4]) + "'", line_no);
        r.transform = {angle, *flip};
        r.label = *label;
        m.rows.push_back(std::move(r));
    }
    if (!header) throw ParseError("expected augmented-manifest header", 1);
    return m;
}

DatasetManifest to_dataset_manifest(const AugmentedManifest& m) {
    DatasetManifest d;
    d.split = Split::train;
    d.provenance = "augmented";
    for (const AugmentedRow& r : m.rows)
        d.samples.push_back({r.source_id + "@" + std::to_string(r.transform.angle_index) + "_" +
                                 std::string(flip_name(r.transform.flip)),
                             r.out_path, r.label});
    return d;
}

std::string augmented_file_name(const std::string& source_id, const Transform& t) {
    char angle[8];
    std::snprintf(angle, sizeof angle, "%02zu", t.angle_index);
    return source_id + "_r" + angle + "_" + std::string(flip_name(t.flip)) + ".dcim";
}

AugmentedManifest run_augmentation(const DatasetManifest& manifest, const AugmentPlan& plan,
                                   const std::filesystem::path& source_dir, const std::filesystem::path& output_dir,
                                   std::size_t size) {
    std::error_code ec;
    std::filesystem::create_directories(output_dir, ec);
    if (ec) throw IoError("cannot create " + output_dir.string() + ": " + ec.message());
    for (const PlannedImage& p : plan.images)
        if (p.source_index >= manifest.size())
            throw ArgumentError("plan refers to sample " + std::to_string(p.source_index) + " outside the manifest");

    ManifestImages sources(manifest, source_dir, size, size);
    std::vector<std::exception_ptr> failures(plan.images.size());
    parallel_for(plan.images.size(), [&](std::size_t b, std::size_t e) {
        for (std::size_t i = b; i < e; ++i) {
            const PlannedImage& p = plan.images[i];
            if (p.transforms.empty()) continue;
            try {
                Tensor base = sources.image(p.source_index);
                const std::string& id = manifest.samples[p.source_index].image_id;
                for (const Transform& t : p.transforms)
                    detail::write_file(output_dir / augmented_file_name(id, t), encode_dcim(apply_transform(base, t)));
            } catch (...) {
                failures[i] = std::current_exception();
            }
        }
    });
    for (auto& f : failures)
        if (f) std::rethrow_exception(f);

    AugmentedManifest out;
    for (const PlannedImage& p : plan.images) {
        const Sample& s = manifest.samples[p.source_index];
        for (const Transform& t : p.transforms) out.rows.push_back({augmented_file_name(s.image_id, t), s.image_id, t, p.label});
    }
    return out;
}

}  // namespace deepclass
