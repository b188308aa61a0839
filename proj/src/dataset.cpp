#include "deepclass/dataset.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cstdio>
#include <cmath>
#include <set>
#include <sstream>
#include <unordered_set>

#include "bytes.hpp"
#include "deepclass/errors.hpp"
#include "deepclass/rng.hpp"

namespace deepclass {

namespace {

// Challenge column codes in canonical class order. This is the only place the
// codes are mapped onto class labels.
constexpr std::array<std::string_view, kClassCount> kCodes{"MEL", "NV", "BCC", "AKIEC", "BKL", "DF", "VASC"};

std::vector<std::string_view> split_on(std::string_view line, char sep) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        std::size_t p = line.find(sep, start);
        if (p == std::string_view::npos) {
            out.push_back(line.substr(start));
            return out;
        }
        out.push_back(line.substr(start, p - start));
        start = p + 1;
    }
}

/// Splits text into lines, dropping a trailing CR per line and the empty tail after a final newline.
std::vector<std::string_view> lines_of(std::string_view text) {
    std::vector<std::string_view> lines = split_on(text, '\n');
    if (!lines.empty() && lines.back().empty()) lines.pop_back();
    for (auto& l : lines)
        if (!l.empty() && l.back() == '\r') l.remove_suffix(1);
    return lines;
}

bool parse_double(std::string_view s, double& out) {
    if (s.empty()) return false;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
    return ec == std::errc() && ptr == s.data() + s.size() && std::isfinite(out);
}

void check_header(std::string_view line, std::size_t line_no) {
    if (line != kGroundTruthHeader)
        throw ParseError("expected header '" + std::string(kGroundTruthHeader) + "', got '" + std::string(line) + "'",
                         line_no);
}

}  // namespace

std::string_view challenge_code(ClassLabel c) { return kCodes[index_of(c)]; }

std::array<float, kClassCount> Sample::onehot() const {
    std::array<float, kClassCount> v{};
    v[index_of(label)] = 1.0f;
    return v;
}

std::string_view split_name(Split s) {
    switch (s) {
        case Split::train: return "train";
        case Split::eval: return "eval";
        default: return "all";
    }
}

std::array<std::size_t, kClassCount> DatasetManifest::class_counts() const {
    std::array<std::size_t, kClassCount> counts{};
    for (const Sample& s : samples) ++counts[index_of(s.label)];
    return counts;
}

DatasetManifest parse_groundtruth(std::string_view csv) {
    auto lines = lines_of(csv);
    if (lines.empty()) throw ParseError("missing header", 1);
    check_header(lines[0], 1);
    DatasetManifest m;
    m.provenance = "ground truth";
    std::unordered_set<std::string> seen;
    for (std::size_t i = 1; i < lines.size(); ++i) {
        const std::size_t line_no = i + 1;
        auto cells = split_on(lines[i], ',');
        if (cells.size() != kClassCount + 1)
            throw ParseError("expected " + std::to_string(kClassCount + 1) + " fields, got " +
                                 std::to_string(cells.size()),
                             line_no);
        if (cells[0].empty()) throw ParseError("empty image id", line_no);
        std::size_t ones = 0;
        std::size_t hot = 0;
        for (std::size_t k = 0; k < kClassCount; ++k) {
            double v = 0;
            if (!parse_double(cells[k + 1], v) || (v != 0.0 && v != 1.0))
                throw ParseError("value '" + std::string(cells[k + 1]) + "' is not 0.0 or 1.0", line_no);
            if (v == 1.0) {
                ++ones;
                hot = k;
            }
        }
        if (ones != 1) throw ParseError("row is not one-hot (" + std::to_string(ones) + " ones)", line_no);
        std::string id(cells[0]);
        if (!seen.insert(id).second) throw ParseError("duplicate image id '" + id + "'", line_no);
        m.samples.push_back({id, "", static_cast<ClassLabel>(hot)});
    }
    return m;
}

std::string format_manifest(const DatasetManifest& manifest) {
    std::ostringstream os;
    os << "# split=" << split_name(manifest.split) << '\n';
    if (!manifest.provenance.empty()) os << "# provenance=" << manifest.provenance << '\n';
    os << "image_id\tpath\tclass\n";
    for (const Sample& s : manifest.samples) os << s.image_id << '\t' << s.path << '\t' << class_name(s.label) << '\n';
    return os.str();
}

DatasetManifest parse_manifest(std::string_view tsv) {
    auto lines = lines_of(tsv);
    DatasetManifest m;
    std::size_t i = 0;
    for (; i < lines.size() && lines[i].starts_with('#'); ++i) {
        std::string_view l = lines[i];
        if (l.starts_with("# split=")) {
            std::string_view v = l.substr(8);
            if (v == "train") m.split = Split::train;
            else if (v == "eval") m.split = Split::eval;
            else if (v == "all") m.split = Split::all;
            else throw ParseError("unknown split '" + std::string(v) + "'", i + 1);
        } else if (l.starts_with("# provenance=")) {
            m.provenance = std::string(l.substr(13));
        }
    }
    if (i >= lines.size() || lines[i] != "image_id\tpath\tclass")
        throw ParseError("expected header 'image_id<TAB>path<TAB>class'", i + 1);
    std::unordered_set<std::string> seen;
    for (++i; i < lines.size(); ++i) {
        auto cells = split_on(lines[i], '\t');
        if (cells.size() != 3) throw ParseError("expected 3 tab-separated fields", i + 1);
        auto label = class_from_name(cells[2]);
        if (!label) throw ParseError("unknown class '" + std::string(cells[2]) + "'", i + 1);
        std::string id(cells[0]);
        if (id.empty()) throw ParseError("empty image id", i + 1);
        if (!seen.insert(id).second) throw ParseError("duplicate image id '" + id + "'", i + 1);
        m.samples.push_back({id, std::string(cells[1]), *label});
    }
    return m;
}

DatasetManifest load_manifest(const std::filesystem::path& path) {
    return parse_manifest(detail::read_text_file(path));
}

void save_manifest(const DatasetManifest& manifest, const std::filesystem::path& path) {
    detail::write_text_file(path, format_manifest(manifest));
}

std::vector<ScoredImage> parse_prediction_csv(std::string_view csv) {
    auto lines = lines_of(csv);
    if (lines.empty()) throw ParseError("missing header", 1);
    check_header(lines[0], 1);
    std::vector<ScoredImage> rows;
    std::unordered_set<std::string> seen;
    for (std::size_t i = 1; i < lines.size(); ++i) {
        auto cells = split_on(lines[i], ',');
        if (cells.size() != kClassCount + 1)
            throw ParseError("expected " + std::to_string(kClassCount + 1) + " fields", i + 1);
        ScoredImage r;
        r.image_id = std::string(cells[0]);
        if (r.image_id.empty()) throw ParseError("empty image id", i + 1);
        if (!seen.insert(r.image_id).second) throw ParseError("duplicate image id '" + r.image_id + "'", i + 1);
        for (std::size_t k = 0; k < kClassCount; ++k)
            if (!parse_double(cells[k + 1], r.scores[k]))
                throw ParseError("score '" + std::string(cells[k + 1]) + "' is not a finite number", i + 1);
        rows.push_back(std::move(r));
    }
    return rows;
}

std::string format_prediction_csv(std::span<const ScoredImage> rows) {
    std::ostringstream os;
    os << kGroundTruthHeader << '\n';
    char buf[32];
    for (const ScoredImage& r : rows) {
        os << r.image_id;
        for (double v : r.scores) {
            std::snprintf(buf, sizeof buf, "%.6f", v);
            os << ',' << buf;
        }
        os << '\n';
    }
    return os.str();
}

// ---------------------------------------------------------------------------

namespace {

Tensor decode_ppm(std::span<const std::uint8_t> bytes) {
    std::size_t pos = 2;
    auto skip_space = [&] {
        while (pos < bytes.size()) {
            if (bytes[pos] == '#') {
                while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
            } else if (std::isspace(bytes[pos])) {
                ++pos;
            } else {
                break;
            }
        }
    };
    auto number = [&](const char* what) {
        skip_space();
        std::size_t start = pos;
        std::uint64_t v = 0;
        while (pos < bytes.size() && std::isdigit(bytes[pos])) {
            v = v * 10 + (bytes[pos] - '0');
            if (v > (1u << 24)) throw FormatError(std::string("PPM ") + what + " too large", start);
            ++pos;
        }
        if (pos == start) throw FormatError(std::string("PPM header lacks ") + what, start);
        return static_cast<std::size_t>(v);
    };
    std::size_t w = number("width");
    std::size_t h = number("height");
    std::size_t maxval_at = pos;
    std::size_t maxval = number("maxval");
    if (maxval != 255) throw FormatError("PPM maxval must be 255, got " + std::to_string(maxval), maxval_at);
    if (w == 0 || h == 0) throw FormatError("PPM has zero extent", maxval_at);
    if (pos >= bytes.size() || !std::isspace(bytes[pos])) throw FormatError("PPM header not terminated", pos);
    ++pos;
    const std::size_t need = w * h * 3;
    if (bytes.size() - pos < need)
        throw FormatError("truncated PPM payload: need " + std::to_string(need) + " bytes, have " +
                              std::to_string(bytes.size() - pos),
                          bytes.size());
    Tensor img({3, h, w});
    const std::size_t hw = h * w;
    for (std::size_t i = 0; i < hw; ++i)
        for (std::size_t c = 0; c < 3; ++c) img[c * hw + i] = static_cast<float>(bytes[pos + i * 3 + c]) / 255.0f;
    return img;
}

Tensor decode_dcim(std::span<const std::uint8_t> bytes) {
    detail::ByteReader r(bytes);
    r.raw(4, "magic");
    std::size_t at = r.offset();
    std::uint32_t c = r.u32("channels"), h = r.u32("height"), w = r.u32("width");
    if (c != 3) throw FormatError("DCIM image must have 3 channels, got " + std::to_string(c), at);
    if (h == 0 || w == 0) throw FormatError("DCIM image has zero extent", at);
    std::size_t n = std::size_t{c} * h * w;
    r.need(n * 4, "DCIM payload");
    Tensor img({c, h, w});
    for (float& v : img.values()) v = r.f32("DCIM payload");
    if (!r.done()) throw FormatError("trailing bytes after DCIM payload", r.offset());
    return img;
}

void require_image(const Tensor& image, const char* what) {
    if (image.rank() != 3 || image.dim(0) != 3)
        throw DimensionError(std::string(what) + " expects a 3 x H x W image, got " + shape_string(image.shape()));
}

}  // namespace

Tensor decode_image(std::span<const std::uint8_t> bytes) {
    if (bytes.size() >= 2 && bytes[0] == 'P' && bytes[1] == '6') return decode_ppm(bytes);
    if (bytes.size() >= 4 && bytes[0] == 'D' && bytes[1] == 'C' && bytes[2] == 'I' && bytes[3] == 'M')
        return decode_dcim(bytes);
    throw FormatError("unrecognized image magic (expected P6 or DCIM)", 0);
}

std::vector<std::uint8_t> encode_ppm(const Tensor& image) {
    require_image(image, "encode_ppm");
    const std::size_t h = image.dim(1), w = image.dim(2), hw = h * w;
    std::string header = "P6\n" + std::to_string(w) + " " + std::to_string(h) + "\n255\n";
    std::vector<std::uint8_t> out(header.begin(), header.end());
    out.reserve(out.size() + hw * 3);
    for (std::size_t i = 0; i < hw; ++i) {
        for (std::size_t c = 0; c < 3; ++c) {
            float v = std::clamp(image[c * hw + i], 0.0f, 1.0f);
            out.push_back(static_cast<std::uint8_t>(std::lround(v * 255.0f)));
        }
    }
    return out;
}

std::vector<std::uint8_t> encode_dcim(const Tensor& image) {
    require_image(image, "encode_dcim");
    detail::ByteWriter w;
    w.raw("DCIM");
    for (std::size_t e : image.shape()) w.u32(static_cast<std::uint32_t>(e));
    for (float v : image.values()) w.f32(v);
    return std::move(w.bytes());
}

Tensor load_image(const std::filesystem::path& path) {
    auto bytes = detail::read_file(path);
    try {
        return decode_image(bytes);
    } catch (const FormatError& e) {
        throw FormatError(path.string() + ": " + e.what(), e.offset());
    }
}

void save_image(const Tensor& image, const std::filesystem::path& path) {
    auto bytes = path.extension() == ".ppm" ? encode_ppm(image) : encode_dcim(image);
    detail::write_file(path, bytes);
}

Tensor resize_bilinear(const Tensor& image, std::size_t out_h, std::size_t out_w) {
    require_image(image, "resize_bilinear");
    const std::size_t h = image.dim(1), w = image.dim(2);
    if (h < 2 || w < 2) throw GeometryError("resize_bilinear needs at least 2 x 2 input, got " + shape_string(image.shape()));
    if (out_h < 2 || out_w < 2) throw GeometryError("resize_bilinear output must be at least 2 x 2");

    struct Tap {
        std::size_t i0, i1;
        double f;
    };
    auto taps = [](std::size_t in, std::size_t out) {
        std::vector<Tap> t(out);
        for (std::size_t i = 0; i < out; ++i) {
            double src = static_cast<double>(i) * static_cast<double>(in - 1) / static_cast<double>(out - 1);
            std::size_t i0 = std::min(static_cast<std::size_t>(src), in - 1);
            std::size_t i1 = std::min(i0 + 1, in - 1);
            t[i] = {i0, i1, src - static_cast<double>(i0)};
        }
        return t;
    };
    const auto ty = taps(h, out_h);
    const auto tx = taps(w, out_w);

    Tensor out({3, out_h, out_w});
    for (std::size_t c = 0; c < 3; ++c) {
        const float* src = image.data() + c * h * w;
        float* dst = out.data() + c * out_h * out_w;
        for (std::size_t y = 0; y < out_h; ++y) {
            const Tap& a = ty[y];
            for (std::size_t x = 0; x < out_w; ++x) {
                const Tap& b = tx[x];
                double top = src[a.i0 * w + b.i0] * (1.0 - b.f) + src[a.i0 * w + b.i1] * b.f;
                double bot = src[a.i1 * w + b.i0] * (1.0 - b.f) + src[a.i1 * w + b.i1] * b.f;
                dst[y * out_w + x] = static_cast<float>(top * (1.0 - a.f) + bot * a.f);
            }
        }
    }
    return out;
}

// ---------------------------------------------------------------------------

std::pair<DatasetManifest, DatasetManifest> split_eval(const DatasetManifest& manifest, std::size_t eval_count,
                                                        std::uint64_t seed) {
    const std::size_t total = manifest.size();
    if (eval_count >= total)
        throw ArgumentError("eval count " + std::to_string(eval_count) + " must be smaller than the manifest size " +
                            std::to_string(total));

    auto counts = manifest.class_counts();
    std::array<std::size_t, kClassCount> quota{};
    std::array<std::size_t, kClassCount> remainder{};
    std::size_t assigned = 0;
    for (std::size_t c = 0; c < kClassCount; ++c) {
        quota[c] = eval_count * counts[c] / total;
        remainder[c] = eval_count * counts[c] % total;
        assigned += quota[c];
    }
    std::array<std::size_t, kClassCount> order{};
    for (std::size_t c = 0; c < kClassCount; ++c) order[c] = c;
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return remainder[a] > remainder[b]; });
    for (std::size_t i = 0; assigned < eval_count; ++i, ++assigned) ++quota[order[i % kClassCount]];

    Rng rng(seed, "split");
    std::vector<bool> chosen(total, false);
    for (std::size_t c = 0; c < kClassCount; ++c) {
        std::vector<std::size_t> members;
        for (std::size_t i = 0; i < total; ++i)
            if (index_of(manifest.samples[i].label) == c) members.push_back(i);
        for (std::size_t k = 0; k < quota[c]; ++k) {
            std::size_t j = k + rng.below(members.size() - k);
            std::swap(members[k], members[j]);
            chosen[members[k]] = true;
        }
    }

    std::pair<DatasetManifest, DatasetManifest> out;
    out.first.split = Split::train;
    out.second.split = Split::eval;
    std::string note = "split of " + std::to_string(total) + " samples, eval=" + std::to_string(eval_count) +
                       ", seed=" + std::to_string(seed);
    out.first.provenance = out.second.provenance = note;
    for (std::size_t i = 0; i < total; ++i) (chosen[i] ? out.second : out.first).samples.push_back(manifest.samples[i]);
    return out;
}

// ---------------------------------------------------------------------------

void InMemoryImages::add(std::string id, Tensor image, ClassLabel label) {
    require_image(image, "InMemoryImages");
    ids_.push_back(std::move(id));
    images_.push_back(std::move(image));
    labels_.push_back(label);
}

ManifestImages::ManifestImages(DatasetManifest manifest, std::filesystem::path base_dir, std::size_t height,
                               std::size_t width)
    : manifest_(std::move(manifest)), base_(std::move(base_dir)), height_(height), width_(width) {}

std::filesystem::path ManifestImages::resolve(std::size_t i) const {
    std::filesystem::path p = manifest_.samples[i].path;
    return p.is_absolute() ? p : base_ / p;
}

Tensor ManifestImages::image(std::size_t i) const {
    Tensor img = load_image(resolve(i));
    if (img.dim(1) == height_ && img.dim(2) == width_) return img;
    return resize_bilinear(img, height_, width_);
}

std::pair<Tensor, Tensor> make_batch(const ImageSource& source, std::span<const std::size_t> indices) {
    if (indices.empty()) throw ArgumentError("make_batch needs at least one index");
    Tensor first = source.image(indices[0]);
    const std::size_t per = first.size();
    Tensor batch({indices.size(), first.dim(0), first.dim(1), first.dim(2)});
    Tensor target({indices.size(), kClassCount});
    for (std::size_t b = 0; b < indices.size(); ++b) {
        Tensor img = b == 0 ? std::move(first) : source.image(indices[b]);
        if (img.size() != per)
            throw DimensionError("image " + source.id(indices[b]) + " has shape " + shape_string(img.shape()) +
                                 ", expected " + shape_string(batch.shape()));
        std::transform(img.data(), img.data() + per, batch.data() + b * per,
                       [](float v) { return v - kPixelCentre; });
        target[b * kClassCount + index_of(source.label(indices[b]))] = 1.0f;
    }
    return {std::move(batch), std::move(target)};
}

}  // namespace deepclass
