#include "deepclass/network.hpp"

#include <charconv>
#include <cmath>
#include <sstream>

#include "bytes.hpp"
#include "deepclass/errors.hpp"
#include "deepclass/rng.hpp"

namespace deepclass {

namespace {

constexpr char kMagic[] = "DCLS";
constexpr std::uint16_t kVersion = 1;
constexpr std::size_t kDeepclassConv = 11;
constexpr std::size_t kDeepclassPool = 5;
constexpr std::size_t kDeepclassDense = 3;

std::string layer_label(std::size_t i, const LayerSpec& l) {
    return "layer " + std::to_string(i) + " (" + std::string(layer_kind_name(l.kind)) + ")";
}

std::vector<std::string_view> split_words(std::string_view line) {
    std::vector<std::string_view> words;
    std::size_t i = 0;
    while (i < line.size()) {
        while (i < line.size() && line[i] == ' ') ++i;
        std::size_t j = i;
        while (j < line.size() && line[j] != ' ') ++j;
        if (j > i) words.push_back(line.substr(i, j - i));
        i = j;
    }
    return words;
}

std::size_t parse_count(std::string_view word, std::size_t line) {
    std::size_t v = 0;
    auto [ptr, ec] = std::from_chars(word.data(), word.data() + word.size(), v);
    if (ec != std::errc() || ptr != word.data() + word.size())
        throw ParseError("expected a non-negative integer, got '" + std::string(word) + "'", line);
    return v;
}

}  // namespace

std::string_view layer_kind_name(LayerKind kind) {
    switch (kind) {
        case LayerKind::conv: return "conv";
        case LayerKind::maxpool: return "maxpool";
        case LayerKind::relu: return "relu";
        case LayerKind::flatten: return "flatten";
        case LayerKind::dense: return "dense";
    }
    return "?";
}

LayerSpec LayerSpec::conv(std::size_t out_channels, std::size_t kernel, std::size_t stride, std::size_t padding) {
    LayerSpec l;
    l.kind = LayerKind::conv;
    l.out_channels = out_channels;
    l.kernel = kernel;
    l.stride = stride;
    l.padding = padding;
    return l;
}

LayerSpec LayerSpec::maxpool(std::size_t window, std::size_t stride) {
    LayerSpec l;
    l.kind = LayerKind::maxpool;
    l.window = window;
    l.stride = stride;
    return l;
}

LayerSpec LayerSpec::relu() {
    LayerSpec l;
    l.kind = LayerKind::relu;
    return l;
}

LayerSpec LayerSpec::flatten() {
    LayerSpec l;
    l.kind = LayerKind::flatten;
    return l;
}

LayerSpec LayerSpec::dense(std::size_t units) {
    LayerSpec l;
    l.kind = LayerKind::dense;
    l.units = units;
    return l;
}

LayerCensus NetworkSpec::census() const {
    LayerCensus c;
    for (const LayerSpec& l : layers) {
        switch (l.kind) {
            case LayerKind::conv: ++c.conv; break;
            case LayerKind::maxpool: ++c.maxpool; break;
            case LayerKind::relu: ++c.relu; break;
            case LayerKind::flatten: ++c.flatten; break;
            case LayerKind::dense: ++c.dense; break;
        }
    }
    return c;
}

std::vector<Shape> NetworkSpec::shape_trace() const {
    if (channels == 0 || height == 0 || width == 0)
        throw ValidationError("network input extents must be positive");
    std::vector<Shape> trace;
    Shape cur{channels, height, width};
    for (std::size_t i = 0; i < layers.size(); ++i) {
        const LayerSpec& l = layers[i];
        switch (l.kind) {
            case LayerKind::conv: {
                if (cur.size() != 3)
                    throw ValidationError(layer_label(i, l) + " needs a C x H x W input, got " + shape_string(cur));
                if (l.out_channels == 0 || l.kernel == 0 || l.stride == 0)
                    throw ValidationError(layer_label(i, l) + " has a zero channel count, kernel or stride");
                std::size_t h = conv_output_extent(cur[1], l.kernel, l.stride, l.padding);
                std::size_t w = conv_output_extent(cur[2], l.kernel, l.stride, l.padding);
                if (h == 0 || w == 0)
                    throw ValidationError(layer_label(i, l) + " yields an empty output from " + shape_string(cur));
                cur = {l.out_channels, h, w};
                break;
            }
            case LayerKind::maxpool: {
                if (cur.size() != 3)
                    throw ValidationError(layer_label(i, l) + " needs a C x H x W input, got " + shape_string(cur));
                if (l.window == 0 || l.stride == 0)
                    throw ValidationError(layer_label(i, l) + " has a zero window or stride");
                if (cur[1] < l.window || cur[2] < l.window)
                    throw ValidationError(layer_label(i, l) + " window exceeds input " + shape_string(cur));
                cur = {cur[0], (cur[1] - l.window) / l.stride + 1, (cur[2] - l.window) / l.stride + 1};
                break;
            }
            case LayerKind::relu: break;
            case LayerKind::flatten:
                if (cur.size() != 3)
                    throw ValidationError(layer_label(i, l) + " needs a C x H x W input, got " + shape_string(cur));
                cur = {shape_size(cur)};
                break;
            case LayerKind::dense:
                if (cur.size() != 1)
                    throw ValidationError(layer_label(i, l) + " needs a flat input, got " + shape_string(cur));
                if (l.units == 0) throw ValidationError(layer_label(i, l) + " has zero units");
                cur = {l.units};
                break;
        }
        trace.push_back(cur);
    }
    return trace;
}

void NetworkSpec::validate(CensusPolicy policy) const {
    if (class_count == 0) throw ValidationError("class count must be positive");
    if (layers.empty() || layers.back().kind != LayerKind::dense)
        throw ValidationError("the final layer must be dense");
    if (layers.back().units != class_count)
        throw ValidationError("final dense layer has " + std::to_string(layers.back().units) + " outputs, expected " +
                              std::to_string(class_count));
    if (policy == CensusPolicy::deepclass) {
        LayerCensus c = census();
        if (c.conv != kDeepclassConv || c.maxpool != kDeepclassPool || c.dense != kDeepclassDense)
            throw ValidationError("layer census conv=" + std::to_string(c.conv) +
                                  " maxpool=" + std::to_string(c.maxpool) + " dense=" + std::to_string(c.dense) +
                                  " does not match the required 11/5/3");
    }
    shape_trace();
}

std::string NetworkSpec::to_text() const {
    std::ostringstream os;
    os << "input " << channels << ' ' << height << ' ' << width << '\n';
    os << "classes " << class_count << '\n';
    for (const LayerSpec& l : layers) {
        os << layer_kind_name(l.kind);
        switch (l.kind) {
            case LayerKind::conv:
                os << ' ' << l.out_channels << ' ' << l.kernel << ' ' << l.stride << ' ' << l.padding;
                break;
            case LayerKind::maxpool: os << ' ' << l.window << ' ' << l.stride; break;
            case LayerKind::dense: os << ' ' << l.units; break;
            default: break;
        }
        os << '\n';
    }
    return os.str();
}

NetworkSpec NetworkSpec::from_text(std::string_view text) {
    NetworkSpec spec;
    spec.layers.clear();
    bool have_input = false, have_classes = false;
    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos < text.size()) {
        std::size_t end = text.find('\n', pos);
        if (end == std::string_view::npos) end = text.size();
        std::string_view line = text.substr(pos, end - pos);
        pos = end + 1;
        ++line_no;
        auto w = split_words(line);
        if (w.empty()) continue;
        auto expect = [&](std::size_t n) {
            if (w.size() != n)
                throw ParseError("'" + std::string(w[0]) + "' takes " + std::to_string(n - 1) + " values", line_no);
        };
        if (w[0] == "input") {
            expect(4);
            spec.channels = parse_count(w[1], line_no);
            spec.height = parse_count(w[2], line_no);
            spec.width = parse_count(w[3], line_no);
            have_input = true;
        } else if (w[0] == "classes") {
            expect(2);
            spec.class_count = parse_count(w[1], line_no);
            have_classes = true;
        } else if (w[0] == "conv") {
            expect(5);
            spec.layers.push_back(LayerSpec::conv(parse_count(w[1], line_no), parse_count(w[2], line_no),
                                                  parse_count(w[3], line_no), parse_count(w[4], line_no)));
        } else if (w[0] == "maxpool") {
            expect(3);
            spec.layers.push_back(LayerSpec::maxpool(parse_count(w[1], line_no), parse_count(w[2], line_no)));
        } else if (w[0] == "relu") {
            expect(1);
            spec.layers.push_back(LayerSpec::relu());
        } else if (w[0] == "flatten") {
            expect(1);
            spec.layers.push_back(LayerSpec::flatten());
        } else if (w[0] == "dense") {
            expect(2);
            spec.layers.push_back(LayerSpec::dense(parse_count(w[1], line_no)));
        } else {
            throw ParseError("unknown directive '" + std::string(w[0]) + "'", line_no);
        }
    }
    if (!have_input || !have_classes) throw ParseError("network text lacks 'input' or 'classes'", line_no);
    return spec;
}

NetworkSpec deepclass_spec() {
    NetworkSpec spec;
    const std::size_t convs_per_block[] = {2, 2, 2, 2, 3};
    const std::size_t widths[] = {32, 64, 128, 128, 256};
    for (std::size_t b = 0; b < 5; ++b) {
        for (std::size_t i = 0; i < convs_per_block[b]; ++i) {
            spec.layers.push_back(LayerSpec::conv(widths[b], 3, 1, 1));
            spec.layers.push_back(LayerSpec::relu());
        }
        spec.layers.push_back(LayerSpec::maxpool(2, 2));
    }
    spec.layers.push_back(LayerSpec::flatten());
    spec.layers.push_back(LayerSpec::dense(512));
    spec.layers.push_back(LayerSpec::relu());
    spec.layers.push_back(LayerSpec::dense(512));
    spec.layers.push_back(LayerSpec::relu());
    spec.layers.push_back(LayerSpec::dense(spec.class_count));
    return spec;
}

// ---------------------------------------------------------------------------

std::vector<std::pair<std::string, Shape>> Network::parameter_layout(const NetworkSpec& spec) {
    std::vector<std::pair<std::string, Shape>> layout;
    std::vector<Shape> trace = spec.shape_trace();
    std::size_t conv_no = 0, dense_no = 0;
    for (std::size_t i = 0; i < spec.layers.size(); ++i) {
        const LayerSpec& l = spec.layers[i];
        const Shape& in = i == 0 ? Shape{spec.channels, spec.height, spec.width} : trace[i - 1];
        if (l.kind == LayerKind::conv) {
            std::string name = "conv" + std::to_string(++conv_no);
            layout.emplace_back(name + ".weight", Shape{l.out_channels, in[0], l.kernel, l.kernel});
            layout.emplace_back(name + ".bias", Shape{l.out_channels});
        } else if (l.kind == LayerKind::dense) {
            std::string name = "fc" + std::to_string(++dense_no);
            layout.emplace_back(name + ".weight", Shape{l.units, in[0]});
            layout.emplace_back(name + ".bias", Shape{l.units});
        }
    }
    return layout;
}

Network::Network(NetworkSpec spec, CensusPolicy policy) : spec_(std::move(spec)) {
    spec_.validate(policy);
    for (auto& [name, shape] : parameter_layout(spec_)) params_.push_back({name, Tensor(shape)});
    slots_.resize(spec_.layers.size());
    std::size_t next = 0;
    for (std::size_t i = 0; i < spec_.layers.size(); ++i) {
        LayerKind k = spec_.layers[i].kind;
        if (k == LayerKind::conv || k == LayerKind::dense) {
            slots_[i] = {next, next + 1};
            next += 2;
        }
    }
}

Network Network::initialized(NetworkSpec spec, std::uint64_t seed, CensusPolicy policy) {
    Network net(std::move(spec), policy);
    for (Parameter& p : net.params_) {
        if (p.name.ends_with(".bias")) continue;
        const Shape& s = p.value.shape();
        std::size_t fan_in = shape_size(s) / s[0];
        double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
        Rng rng(seed, "init/" + p.name);
        for (float& v : p.value.values()) v = static_cast<float>(rng.uniform(-bound, bound));
    }
    return net;
}

Tensor& Network::parameter(std::string_view name) {
    for (Parameter& p : params_)
        if (p.name == name) return p.value;
    throw ArgumentError("no parameter named '" + std::string(name) + "'");
}

const Tensor& Network::parameter(std::string_view name) const {
    return const_cast<Network*>(this)->parameter(name);
}

void Network::check_batch(const Tensor& batch) const {
    if (batch.rank() != 4 || batch.dim(1) != spec_.channels || batch.dim(2) != spec_.height ||
        batch.dim(3) != spec_.width)
        throw DimensionError("network expects a B x " + std::to_string(spec_.channels) + " x " +
                             std::to_string(spec_.height) + " x " + std::to_string(spec_.width) +
                             " batch, got " + shape_string(batch.shape()));
}

Tensor Network::run(const Tensor& batch, std::vector<LayerCache>* cache) const {
    check_batch(batch);
    Tensor x = batch;
    if (cache) cache->assign(spec_.layers.size(), {});
    for (std::size_t i = 0; i < spec_.layers.size(); ++i) {
        const LayerSpec& l = spec_.layers[i];
        LayerCache* c = cache ? &(*cache)[i] : nullptr;
        if (c) c->input_shape = x.shape();
        switch (l.kind) {
            case LayerKind::conv: {
                const Tensor& w = params_[slots_[i].weight].value;
                const Tensor& b = params_[slots_[i].bias].value;
                Tensor y = conv2d(x, w, b, l.stride, l.padding);
                if (c) c->input = std::move(x);
                x = std::move(y);
                break;
            }
            case LayerKind::maxpool: {
                PoolResult r = maxpool2d(x, PoolParams{l.window, l.stride});
                if (c) c->argmax = std::move(r.argmax);
                x = std::move(r.output);
                break;
            }
            case LayerKind::relu: {
                Tensor y = relu(x);
                if (c) c->input = std::move(x);
                x = std::move(y);
                break;
            }
            case LayerKind::flatten: {
                std::size_t b = x.dim(0);
                x = x.reshaped({b, x.size() / b});
                break;
            }
            case LayerKind::dense: {
                const Tensor& w = params_[slots_[i].weight].value;
                const Tensor& b = params_[slots_[i].bias].value;
                Tensor y = dense(x, w, b);
                if (c) c->input = std::move(x);
                x = std::move(y);
                break;
            }
        }
    }
    return x;
}

Tensor Network::forward(const Tensor& batch, bool train_mode) {
    if (!train_mode) return run(batch, nullptr);
    cache_.clear();
    return run(batch, &cache_);
}

Tensor Network::infer(const Tensor& batch) const { return run(batch, nullptr); }

ParameterSet Network::backward(const Tensor& d_logits) {
    if (cache_.empty()) throw StateError("backward called without a preceding train-mode forward");
    const std::size_t batch = cache_.front().input_shape[0];
    if (d_logits.shape() != Shape{batch, spec_.class_count})
        throw DimensionError("backward expects logits gradient " + shape_string({batch, spec_.class_count}) +
                             ", got " + shape_string(d_logits.shape()));

    ParameterSet grads;
    grads.reserve(params_.size());
    for (const Parameter& p : params_) grads.push_back({p.name, Tensor()});

    Tensor g = d_logits;
    for (std::size_t i = spec_.layers.size(); i-- > 0;) {
        const LayerSpec& l = spec_.layers[i];
        LayerCache& c = cache_[i];
        const bool need_input = i > 0;
        switch (l.kind) {
            case LayerKind::conv: {
                ConvGrads r = conv2d_grad(c.input, params_[slots_[i].weight].value, l.stride, l.padding, g, need_input);
                grads[slots_[i].weight].value = std::move(r.kernel);
                grads[slots_[i].bias].value = std::move(r.bias);
                g = std::move(r.input);
                break;
            }
            case LayerKind::maxpool: g = maxpool2d_grad(c.argmax, g, c.input_shape); break;
            case LayerKind::relu: g = relu_grad(c.input, g); break;
            case LayerKind::flatten: g = g.reshaped(c.input_shape); break;
            case LayerKind::dense: {
                DenseGrads r = dense_grad(c.input, params_[slots_[i].weight].value, g);
                grads[slots_[i].weight].value = std::move(r.weight);
                grads[slots_[i].bias].value = std::move(r.bias);
                g = std::move(r.input);
                break;
            }
        }
        c = LayerCache{};
    }
    cache_.clear();
    return grads;
}

std::vector<std::size_t> argmax_rows(const Tensor& scores) {
    if (scores.rank() != 2) throw DimensionError("argmax_rows expects a rank-2 tensor, got " + shape_string(scores.shape()));
    const std::size_t B = scores.dim(0), K = scores.dim(1);
    std::vector<std::size_t> out(B);
    for (std::size_t b = 0; b < B; ++b) {
        std::size_t best = 0;
        for (std::size_t k = 1; k < K; ++k)
            if (scores[b * K + k] > scores[b * K + best]) best = k;
        out[b] = best;
    }
    return out;
}

Prediction Network::predict(const Tensor& batch) const {
    Tensor logits = infer(batch);
    return {softmax(logits), argmax_rows(logits)};
}

Network build_deepclass(std::uint64_t seed) { return Network::initialized(deepclass_spec(), seed); }

// ---------------------------------------------------------------------------

std::vector<std::uint8_t> serialize_checkpoint(const Network& net) {
    detail::ByteWriter w;
    w.raw(std::string_view(kMagic, 4));
    w.u16(kVersion);
    std::string text = net.spec().to_text();
    w.u32(static_cast<std::uint32_t>(text.size()));
    w.raw(text);
    for (const Parameter& p : net.parameters()) {
        w.u16(static_cast<std::uint16_t>(p.name.size()));
        w.raw(p.name);
        w.u8(static_cast<std::uint8_t>(p.value.rank()));
        for (std::size_t e : p.value.shape()) w.u32(static_cast<std::uint32_t>(e));
        for (float v : p.value.values()) w.f32(v);
    }
    return std::move(w.bytes());
}

Network deserialize_checkpoint(std::span<const std::uint8_t> bytes) {
    detail::ByteReader r(bytes);
    if (r.raw(4, "magic") != std::string_view(kMagic, 4)) throw FormatError("bad checkpoint magic", 0);
    std::size_t version_at = r.offset();
    std::uint16_t version = r.u16("version");
    if (version != kVersion)
        throw FormatError("unsupported checkpoint version " + std::to_string(version), version_at);
    std::uint32_t text_len = r.u32("spec length");
    std::size_t text_at = r.offset();
    std::string text = r.raw(text_len, "spec text");

    NetworkSpec spec;
    try {
        spec = NetworkSpec::from_text(text);
        spec.validate(CensusPolicy::any);
    } catch (const Error& e) {
        throw FormatError(std::string("invalid network spec: ") + e.what(), text_at);
    }
    Network net(spec, CensusPolicy::any);
    for (Parameter& p : net.parameters()) {
        std::size_t at = r.offset();
        std::uint16_t name_len = r.u16("parameter name length");
        std::string name = r.raw(name_len, "parameter name");
        if (name != p.name)
            throw FormatError("expected parameter '" + p.name + "', found '" + name + "'", at);
        std::size_t rank_at = r.offset();
        std::uint8_t rank = r.u8("parameter rank");
        if (rank != p.value.rank())
            throw FormatError("parameter '" + name + "' has rank " + std::to_string(rank) + ", expected " +
                                  std::to_string(p.value.rank()),
                              rank_at);
        for (std::size_t d = 0; d < rank; ++d) {
            std::size_t ext_at = r.offset();
            std::uint32_t e = r.u32("parameter extent");
            if (e != p.value.dim(d))
                throw FormatError("parameter '" + name + "' extent " + std::to_string(d) + " is " +
                                      std::to_string(e) + ", expected " + std::to_string(p.value.dim(d)),
                                  ext_at);
        }
        r.need(p.value.size() * 4, "parameter data");
        for (float& v : p.value.values()) v = r.f32("parameter data");
    }
    if (!r.done()) throw FormatError("trailing bytes after the last parameter", r.offset());
    return net;
}

void save_checkpoint(const Network& net, const std::filesystem::path& path) {
    auto bytes = serialize_checkpoint(net);
    detail::write_file(path, bytes);
}

Network load_checkpoint(const std::filesystem::path& path) { return deserialize_checkpoint(detail::read_file(path)); }

}  // namespace deepclass
