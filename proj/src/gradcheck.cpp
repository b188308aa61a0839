#include "deepclass/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <numeric>
#include <sstream>

#include "deepclass/ops.hpp"
#include "deepclass/rng.hpp"

namespace deepclass {

namespace {

// 64-bit reference kernels written as plain nested loops. They share nothing with the
// production kernels beyond the index conventions.
namespace shadow {

using Vec = std::vector<double>;

struct Dims4 {
    std::size_t n, c, h, w;
    std::size_t at(std::size_t a, std::size_t b, std::size_t y, std::size_t x) const {
        return ((a * c + b) * h + y) * w + x;
    }
};

Vec conv(const Vec& x, Dims4 xd, const Vec& k, Dims4 kd, const Vec& bias, std::size_t stride, std::size_t pad,
         Dims4& od) {
    od = {xd.n, kd.n, (xd.h + 2 * pad - kd.h) / stride + 1, (xd.w + 2 * pad - kd.w) / stride + 1};
    Vec out(od.n * od.c * od.h * od.w);
    for (std::size_t b = 0; b < od.n; ++b)
        for (std::size_t o = 0; o < od.c; ++o)
            for (std::size_t y = 0; y < od.h; ++y)
                for (std::size_t xx = 0; xx < od.w; ++xx) {
                    double s = bias[o];
                    for (std::size_t c = 0; c < xd.c; ++c)
                        for (std::size_t i = 0; i < kd.h; ++i)
                            for (std::size_t j = 0; j < kd.w; ++j) {
                                long sy = long(y * stride + i) - long(pad);
                                long sx = long(xx * stride + j) - long(pad);
                                if (sy < 0 || sx < 0 || sy >= long(xd.h) || sx >= long(xd.w)) continue;
                                s += x[xd.at(b, c, sy, sx)] * k[kd.at(o, c, i, j)];
                            }
                    out[od.at(b, o, y, xx)] = s;
                }
    return out;
}

Vec pool(const Vec& x, Dims4 xd, std::size_t window, std::size_t stride, Dims4& od) {
    od = {xd.n, xd.c, (xd.h - window) / stride + 1, (xd.w - window) / stride + 1};
    Vec out(od.n * od.c * od.h * od.w);
    for (std::size_t b = 0; b < od.n; ++b)
        for (std::size_t c = 0; c < od.c; ++c)
            for (std::size_t y = 0; y < od.h; ++y)
                for (std::size_t xx = 0; xx < od.w; ++xx) {
                    double m = -INFINITY;
                    for (std::size_t i = 0; i < window; ++i)
                        for (std::size_t j = 0; j < window; ++j)
                            m = std::max(m, x[xd.at(b, c, y * stride + i, xx * stride + j)]);
                    out[od.at(b, c, y, xx)] = m;
                }
    return out;
}

// Smallest gap between the largest and second-largest value over all pool windows.
double pool_margin(const Vec& x, Dims4 xd, std::size_t window, std::size_t stride) {
    double margin = INFINITY;
    const std::size_t oh = (xd.h - window) / stride + 1, ow = (xd.w - window) / stride + 1;
    for (std::size_t b = 0; b < xd.n; ++b)
        for (std::size_t c = 0; c < xd.c; ++c)
            for (std::size_t y = 0; y < oh; ++y)
                for (std::size_t xx = 0; xx < ow; ++xx) {
                    std::vector<double> v;
                    for (std::size_t i = 0; i < window; ++i)
                        for (std::size_t j = 0; j < window; ++j)
                            v.push_back(x[xd.at(b, c, y * stride + i, xx * stride + j)]);
                    if (v.size() < 2) continue;
                    std::sort(v.begin(), v.end(), std::greater<>());
                    margin = std::min(margin, v[0] - v[1]);
                }
    return margin;
}

Vec dense(const Vec& x, std::size_t batch, std::size_t in, const Vec& w, const Vec& bias, std::size_t out) {
    Vec y(batch * out);
    for (std::size_t b = 0; b < batch; ++b)
        for (std::size_t m = 0; m < out; ++m) {
            double s = bias[m];
            for (std::size_t n = 0; n < in; ++n) s += x[b * in + n] * w[m * in + n];
            y[b * out + m] = s;
        }
    return y;
}

double xent(const Vec& logits, std::size_t batch, std::size_t classes, const std::vector<std::size_t>& labels) {
    double total = 0;
    for (std::size_t b = 0; b < batch; ++b) {
        double mx = -INFINITY;
        for (std::size_t k = 0; k < classes; ++k) mx = std::max(mx, logits[b * classes + k]);
        double s = 0;
        for (std::size_t k = 0; k < classes; ++k) s += std::exp(logits[b * classes + k] - mx);
        total += std::log(s) + mx - logits[b * classes + labels[b]];
    }
    return total / double(batch);
}

double weighted_sum(const Vec& a, const Vec& w) {
    double s = 0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * w[i];
    return s;
}

}  // namespace shadow

shadow::Vec widen(const Tensor& t) { return shadow::Vec(t.data(), t.data() + t.size()); }

Tensor random_tensor(Rng& rng, Shape shape, double lo = -1.0, double hi = 1.0) {
    Tensor t(std::move(shape));
    for (float& v : t.values()) v = static_cast<float>(rng.uniform(lo, hi));
    return t;
}

std::size_t pick(Rng& rng, std::size_t lo, std::size_t hi) { return lo + rng.below(hi - lo + 1); }

// Central differences of f with respect to every element of x.
shadow::Vec numeric_gradient(shadow::Vec x, const std::function<double(const shadow::Vec&)>& f) {
    shadow::Vec g(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double orig = x[i];
        x[i] = orig + kGradcheckStep;
        double up = f(x);
        x[i] = orig - kGradcheckStep;
        double down = f(x);
        x[i] = orig;
        g[i] = (up - down) / (2.0 * kGradcheckStep);
    }
    return g;
}

struct Tracker {
    GradcheckResult r;
    explicit Tracker(std::string op) { r.op = std::move(op); }
    // A case may cover several parameters; only the first of them bumps the count.
    void add(const Tensor& analytic, const shadow::Vec& numeric, bool new_case = true) {
        shadow::Vec a = widen(analytic);
        r.max_error = std::max(r.max_error, gradient_relative_error(a, numeric));
        if (new_case) ++r.cases;
    }
    GradcheckResult done() {
        r.pass = r.max_error <= kGradcheckTolerance;
        return r;
    }
};

void check_conv(std::uint64_t seed, std::size_t cases, std::vector<GradcheckResult>& out) {
    Tracker tin("conv2d.input"), tker("conv2d.kernel"), tbias("conv2d.bias");
    Rng rng(seed, "gradcheck/conv2d");
    for (std::size_t c = 0; c < cases; ++c) {
        std::size_t B = 1, C = 2, H = 5, W = 5, O = 3, kh = 3, kw = 3, stride = 1, pad = 0;
        if (c > 0) {
            B = pick(rng, 1, 2);
            C = pick(rng, 1, 3);
            O = pick(rng, 1, 3);
            kh = pick(rng, 1, 3);
            kw = pick(rng, 1, 3);
            stride = pick(rng, 1, 2);
            pad = pick(rng, 0, 1);
            H = pick(rng, std::max<std::size_t>(1, kh), 6);
            W = pick(rng, std::max<std::size_t>(1, kw), 6);
        }
        Tensor x = random_tensor(rng, {B, C, H, W});
        Tensor k = random_tensor(rng, {O, C, kh, kw});
        Tensor b = random_tensor(rng, {O});
        Tensor y = conv2d(x, k, b, stride, pad);
        Tensor g = random_tensor(rng, y.shape());
        ConvGrads grads = conv2d_grad(x, k, stride, pad, g);

        const shadow::Dims4 xd{B, C, H, W}, kd{O, C, kh, kw};
        const shadow::Vec xv = widen(x), kv = widen(k), bv = widen(b), gv = widen(g);
        auto loss = [&](const shadow::Vec& xs, const shadow::Vec& ks, const shadow::Vec& bs) {
            shadow::Dims4 od{};
            return shadow::weighted_sum(shadow::conv(xs, xd, ks, kd, bs, stride, pad, od), gv);
        };
        tin.add(grads.input, numeric_gradient(xv, [&](const shadow::Vec& v) { return loss(v, kv, bv); }));
        tker.add(grads.kernel, numeric_gradient(kv, [&](const shadow::Vec& v) { return loss(xv, v, bv); }));
        tbias.add(grads.bias, numeric_gradient(bv, [&](const shadow::Vec& v) { return loss(xv, kv, v); }));
    }
    out.push_back(tin.done());
    out.push_back(tker.done());
    out.push_back(tbias.done());
}

void check_pool(std::uint64_t seed, std::size_t cases, std::vector<GradcheckResult>& out) {
    Tracker t("maxpool2d");
    Rng rng(seed, "gradcheck/maxpool2d");
    for (std::size_t c = 0; c < cases; ++c) {
        std::size_t B = 1, C = 1, H = 3, W = 3, window = 2, stride = 1;
        if (c > 0) {
            B = pick(rng, 1, 2);
            C = pick(rng, 1, 3);
            window = pick(rng, 1, 3);
            stride = pick(rng, 1, 2);
            H = pick(rng, window, 7);
            W = pick(rng, window, 7);
        }
        // Distinct values 0.01 apart keep every window maximum unique under +-step.
        std::vector<std::size_t> rank(B * C * H * W);
        std::iota(rank.begin(), rank.end(), std::size_t{0});
        rng.shuffle(rank);
        Tensor x({B, C, H, W});
        for (std::size_t i = 0; i < x.size(); ++i)
            x[i] = static_cast<float>(0.01 * double(rank[i]) - 0.5 + rng.uniform(0.0, 1e-3));
        PoolResult r = maxpool2d(x, PoolParams{window, stride});
        Tensor g = random_tensor(rng, r.output.shape());
        Tensor analytic = maxpool2d_grad(r.argmax, g, x.shape());
        const shadow::Dims4 xd{B, C, H, W};
        const shadow::Vec gv = widen(g);
        t.add(analytic, numeric_gradient(widen(x), [&](const shadow::Vec& v) {
            shadow::Dims4 od{};
            return shadow::weighted_sum(shadow::pool(v, xd, window, stride, od), gv);
        }));
    }
    out.push_back(t.done());
}

void check_relu(std::uint64_t seed, std::size_t cases, std::vector<GradcheckResult>& out) {
    Tracker t("relu");
    Rng rng(seed, "gradcheck/relu");
    for (std::size_t c = 0; c < cases; ++c) {
        Shape s{pick(rng, 1, 3), pick(rng, 1, 3), pick(rng, 1, 5), pick(rng, 1, 5)};
        Tensor x(s);
        // Kept at least 0.05 away from the kink.
        for (float& v : x.values()) v = static_cast<float>((rng.uniform() < 0.5 ? -1.0 : 1.0) * rng.uniform(0.05, 1.0));
        Tensor g = random_tensor(rng, s);
        Tensor analytic = relu_grad(x, g);
        const shadow::Vec gv = widen(g);
        t.add(analytic, numeric_gradient(widen(x), [&](const shadow::Vec& v) {
            double sum = 0;
            for (std::size_t i = 0; i < v.size(); ++i) sum += std::max(0.0, v[i]) * gv[i];
            return sum;
        }));
    }
    out.push_back(t.done());
}

void check_dense(std::uint64_t seed, std::size_t cases, std::vector<GradcheckResult>& out) {
    Tracker tin("dense.input"), tw("dense.weight"), tb("dense.bias");
    Rng rng(seed, "gradcheck/dense");
    for (std::size_t c = 0; c < cases; ++c) {
        std::size_t B = 2, N = 3, M = 4;
        if (c > 0) {
            B = pick(rng, 1, 4);
            N = pick(rng, 1, 8);
            M = pick(rng, 1, 8);
        }
        Tensor x = random_tensor(rng, {B, N});
        Tensor w = random_tensor(rng, {M, N});
        Tensor b = random_tensor(rng, {M});
        Tensor g = random_tensor(rng, {B, M});
        DenseGrads grads = dense_grad(x, w, g);
        const shadow::Vec xv = widen(x), wv = widen(w), bv = widen(b), gv = widen(g);
        auto loss = [&](const shadow::Vec& xs, const shadow::Vec& ws, const shadow::Vec& bs) {
            return shadow::weighted_sum(shadow::dense(xs, B, N, ws, bs, M), gv);
        };
        tin.add(grads.input, numeric_gradient(xv, [&](const shadow::Vec& v) { return loss(v, wv, bv); }));
        tw.add(grads.weight, numeric_gradient(wv, [&](const shadow::Vec& v) { return loss(xv, v, bv); }));
        tb.add(grads.bias, numeric_gradient(bv, [&](const shadow::Vec& v) { return loss(xv, wv, v); }));
    }
    out.push_back(tin.done());
    out.push_back(tw.done());
    out.push_back(tb.done());
}

void check_softmax(std::uint64_t seed, std::size_t cases, std::vector<GradcheckResult>& out) {
    Tracker t("softmax_xent");
    Rng rng(seed, "gradcheck/softmax_xent");
    for (std::size_t c = 0; c < cases; ++c) {
        std::size_t B = pick(rng, 1, 4), K = c % 2 ? 7 : pick(rng, 2, 7);
        Tensor z = random_tensor(rng, {B, K}, -3.0, 3.0);
        Tensor target({B, K});
        std::vector<std::size_t> labels(B);
        for (std::size_t b = 0; b < B; ++b) {
            labels[b] = rng.below(K);
            target[b * K + labels[b]] = 1.0f;
        }
        SoftmaxXent sx = softmax_xent(z, target);
        t.add(sx.d_logits, numeric_gradient(widen(z), [&](const shadow::Vec& v) { return shadow::xent(v, B, K, labels); }));
    }
    out.push_back(t.done());
}

void check_network(std::uint64_t seed, std::size_t cases, std::vector<GradcheckResult>& out) {
    Tracker t("network(reduced)");
    Rng rng(seed, "gradcheck/network");
    const NetworkSpec spec = reduced_spec();
    const LayerSpec& conv = spec.layers[0];
    const LayerSpec& pool = spec.layers[1];
    for (std::size_t c = 0; c < cases; ++c) {
        Network net = Network::initialized(spec, derive_seed(seed, "case/" + std::to_string(c)), CensusPolicy::any);
        for (float& v : net.parameter("conv1.bias").values()) v = static_cast<float>(rng.uniform(-0.1, 0.1));
        for (float& v : net.parameter("fc1.bias").values()) v = static_cast<float>(rng.uniform(-0.1, 0.1));
        const std::size_t B = pick(rng, 1, 2);
        const shadow::Dims4 xd{B, spec.channels, spec.height, spec.width};
        const Tensor& w = net.parameter("conv1.weight");
        const shadow::Dims4 kd{w.dim(0), w.dim(1), w.dim(2), w.dim(3)};

        // Resample until every pool window has a clear winner, so +-step never swaps it.
        Tensor x;
        for (int attempt = 0; attempt < 1000; ++attempt) {
            x = random_tensor(rng, {B, spec.channels, spec.height, spec.width});
            shadow::Dims4 od{};
            shadow::Vec y = shadow::conv(widen(x), xd, widen(w), kd, widen(net.parameter("conv1.bias")), conv.stride,
                                         conv.padding, od);
            if (shadow::pool_margin(y, od, pool.window, pool.stride) > 0.02) break;
        }
        Tensor target({B, spec.class_count});
        std::vector<std::size_t> labels(B);
        for (std::size_t b = 0; b < B; ++b) {
            labels[b] = rng.below(spec.class_count);
            target[b * spec.class_count + labels[b]] = 1.0f;
        }

        Tensor logits = net.forward(x, true);
        SoftmaxXent sx = softmax_xent(logits, target);
        ParameterSet grads = net.backward(sx.d_logits);

        shadow::Vec params[4] = {widen(net.parameter("conv1.weight")), widen(net.parameter("conv1.bias")),
                                 widen(net.parameter("fc1.weight")), widen(net.parameter("fc1.bias"))};
        const shadow::Vec xv = widen(x);
        auto loss = [&](const shadow::Vec* p) {
            shadow::Dims4 cd{}, pd{};
            shadow::Vec y = shadow::conv(xv, xd, p[0], kd, p[1], conv.stride, conv.padding, cd);
            shadow::Vec z = shadow::pool(y, cd, pool.window, pool.stride, pd);
            const std::size_t flat = pd.c * pd.h * pd.w;
            shadow::Vec l = shadow::dense(z, B, flat, p[2], p[3], spec.class_count);
            return shadow::xent(l, B, spec.class_count, labels);
        };
        for (std::size_t i = 0; i < 4; ++i) {
            shadow::Vec num = numeric_gradient(params[i], [&](const shadow::Vec& v) {
                shadow::Vec copy[4] = {params[0], params[1], params[2], params[3]};
                copy[i] = v;
                return loss(copy);
            });
            t.add(grads[i].value, num, i == 0);
        }
    }
    out.push_back(t.done());
}

}  // namespace

double gradient_relative_error(std::span<const double> analytic, std::span<const double> numeric) {
    double scale = 0;
    for (double n : numeric) scale = std::max(scale, std::fabs(n));
    const double floor = std::max(1e-2 * scale, 1e-8);
    double worst = 0;
    for (std::size_t i = 0; i < analytic.size() && i < numeric.size(); ++i) {
        double a = analytic[i], n = numeric[i];
        double denom = std::max({std::fabs(a), std::fabs(n), floor});
        worst = std::max(worst, std::fabs(a - n) / denom);
    }
    if (analytic.size() != numeric.size()) worst = INFINITY;
    return worst;
}

bool GradcheckReport::all_pass() const {
    return std::all_of(results.begin(), results.end(), [](const GradcheckResult& r) { return r.pass; });
}

std::string GradcheckReport::render() const {
    std::ostringstream os;
    char buf[160];
    for (const GradcheckResult& r : results) {
        std::snprintf(buf, sizeof buf, "%-18s cases %3zu  max rel error %.3e  %s\n", r.op.c_str(), r.cases, r.max_error,
                      r.pass ? "PASS" : "FAIL");
        os << buf;
    }
    os << (all_pass() ? "gradcheck PASS" : "gradcheck FAIL") << '\n';
    return os.str();
}

NetworkSpec reduced_spec() {
    NetworkSpec spec;
    spec.channels = 3;
    spec.height = 8;
    spec.width = 8;
    spec.class_count = 7;
    spec.layers = {LayerSpec::conv(4, 3, 1, 1), LayerSpec::maxpool(2, 2), LayerSpec::flatten(), LayerSpec::dense(7)};
    return spec;
}

GradcheckReport run_gradcheck(std::uint64_t seed, std::size_t cases_per_op, std::size_t network_cases) {
    GradcheckReport report;
    check_conv(seed, cases_per_op, report.results);
    check_pool(seed, cases_per_op, report.results);
    check_relu(seed, cases_per_op, report.results);
    check_dense(seed, cases_per_op, report.results);
    check_softmax(seed, cases_per_op, report.results);
    check_network(seed, network_cases, report.results);
    return report;
}

}  // namespace deepclass
