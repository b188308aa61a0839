#include "deepclass/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "deepclass/errors.hpp"
#include "gemm.hpp"

namespace deepclass {

namespace {

void require_rank(const Tensor& t, std::size_t rank, const char* what) {
    if (t.rank() != rank)
        throw DimensionError(std::string(what) + " must have rank " + std::to_string(rank) + ", got shape " +
                             shape_string(t.shape()));
}

std::vector<double> to_double(const float* p, std::size_t n) { return std::vector<double>(p, p + n); }

void store_float(const std::vector<double>& src, float* dst) {
    for (std::size_t i = 0; i < src.size(); ++i) dst[i] = static_cast<float>(src[i]);
}

struct ConvShape {
    std::size_t batch, in_c, height, width;
    std::size_t out_c, k_h, k_w;
    std::size_t out_h, out_w;
    std::size_t stride, padding;

    std::size_t patch() const { return in_c * k_h * k_w; }
    std::size_t pixels() const { return out_h * out_w; }
};

ConvShape conv_shape(const Tensor& input, const Tensor& kernel, std::size_t stride, std::size_t padding) {
    require_rank(input, 4, "conv2d input");
    require_rank(kernel, 4, "conv2d kernel");
    if (stride == 0) throw GeometryError("conv2d stride must be positive");
    ConvShape s{};
    s.batch = input.dim(0);
    s.in_c = input.dim(1);
    s.height = input.dim(2);
    s.width = input.dim(3);
    s.out_c = kernel.dim(0);
    s.k_h = kernel.dim(2);
    s.k_w = kernel.dim(3);
    s.stride = stride;
    s.padding = padding;
    if (kernel.dim(1) != s.in_c)
        throw DimensionError("conv2d kernel expects " + std::to_string(kernel.dim(1)) + " input channels, input " +
                             shape_string(input.shape()) + " has " + std::to_string(s.in_c));
    s.out_h = conv_output_extent(s.height, s.k_h, stride, padding);
    s.out_w = conv_output_extent(s.width, s.k_w, stride, padding);
    if (s.out_h == 0 || s.out_w == 0)
        throw GeometryError("conv2d kernel " + shape_string(kernel.shape()) + " with padding " +
                            std::to_string(padding) + " yields an empty output for input " +
                            shape_string(input.shape()));
    return s;
}

// col[(c*kH + i)*kW + j][y*outW + x] = padded input sample.
void im2col(const ConvShape& s, const float* plane, std::vector<double>& col) {
    const std::size_t n = s.pixels();
    col.assign(s.patch() * n, 0.0);
    for (std::size_t c = 0; c < s.in_c; ++c) {
        const float* src = plane + c * s.height * s.width;
        for (std::size_t i = 0; i < s.k_h; ++i) {
            for (std::size_t j = 0; j < s.k_w; ++j) {
                double* row = col.data() + ((c * s.k_h + i) * s.k_w + j) * n;
                for (std::size_t y = 0; y < s.out_h; ++y) {
                    std::ptrdiff_t sy = static_cast<std::ptrdiff_t>(y * s.stride + i) -
                                        static_cast<std::ptrdiff_t>(s.padding);
                    if (sy < 0 || sy >= static_cast<std::ptrdiff_t>(s.height)) continue;
                    const float* srow = src + static_cast<std::size_t>(sy) * s.width;
                    double* drow = row + y * s.out_w;
                    for (std::size_t x = 0; x < s.out_w; ++x) {
                        std::ptrdiff_t sx = static_cast<std::ptrdiff_t>(x * s.stride + j) -
                                            static_cast<std::ptrdiff_t>(s.padding);
                        if (sx >= 0 && sx < static_cast<std::ptrdiff_t>(s.width)) drow[x] = srow[sx];
                    }
                }
            }
        }
    }
}

// Transposed layout: colT[y*outW + x][(c*kH + i)*kW + j].
void im2col_transposed(const ConvShape& s, const float* plane, std::vector<double>& colT) {
    const std::size_t patch = s.patch();
    colT.assign(s.pixels() * patch, 0.0);
    for (std::size_t y = 0; y < s.out_h; ++y) {
        for (std::size_t x = 0; x < s.out_w; ++x) {
            double* drow = colT.data() + (y * s.out_w + x) * patch;
            for (std::size_t c = 0; c < s.in_c; ++c) {
                const float* src = plane + c * s.height * s.width;
                for (std::size_t i = 0; i < s.k_h; ++i) {
                    std::ptrdiff_t sy = static_cast<std::ptrdiff_t>(y * s.stride + i) -
                                        static_cast<std::ptrdiff_t>(s.padding);
                    if (sy < 0 || sy >= static_cast<std::ptrdiff_t>(s.height)) continue;
                    for (std::size_t j = 0; j < s.k_w; ++j) {
                        std::ptrdiff_t sx = static_cast<std::ptrdiff_t>(x * s.stride + j) -
                                            static_cast<std::ptrdiff_t>(s.padding);
                        if (sx >= 0 && sx < static_cast<std::ptrdiff_t>(s.width))
                            drow[(c * s.k_h + i) * s.k_w + j] = src[static_cast<std::size_t>(sy) * s.width + sx];
                    }
                }
            }
        }
    }
}

// Scatter-add of a K x N column buffer back onto a C x H x W plane.
void col2im(const ConvShape& s, const std::vector<double>& col, double* plane) {
    const std::size_t n = s.pixels();
    for (std::size_t c = 0; c < s.in_c; ++c) {
        double* dst = plane + c * s.height * s.width;
        for (std::size_t i = 0; i < s.k_h; ++i) {
            for (std::size_t j = 0; j < s.k_w; ++j) {
                const double* row = col.data() + ((c * s.k_h + i) * s.k_w + j) * n;
                for (std::size_t y = 0; y < s.out_h; ++y) {
                    std::ptrdiff_t sy = static_cast<std::ptrdiff_t>(y * s.stride + i) -
                                        static_cast<std::ptrdiff_t>(s.padding);
                    if (sy < 0 || sy >= static_cast<std::ptrdiff_t>(s.height)) continue;
                    double* drow = dst + static_cast<std::size_t>(sy) * s.width;
                    const double* srow = row + y * s.out_w;
                    for (std::size_t x = 0; x < s.out_w; ++x) {
                        std::ptrdiff_t sx = static_cast<std::ptrdiff_t>(x * s.stride + j) -
                                            static_cast<std::ptrdiff_t>(s.padding);
                        if (sx >= 0 && sx < static_cast<std::ptrdiff_t>(s.width)) drow[sx] += srow[x];
                    }
                }
            }
        }
    }
}

std::vector<double> transpose(const float* src, std::size_t rows, std::size_t cols) {
    std::vector<double> out(rows * cols);
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cols; ++c) out[c * rows + r] = src[r * cols + c];
    return out;
}

}  // namespace

std::size_t conv_output_extent(std::size_t extent, std::size_t kernel, std::size_t stride, std::size_t padding) {
    if (stride == 0 || kernel == 0) return 0;
    std::size_t padded = extent + 2 * padding;
    if (padded < kernel) return 0;
    return (padded - kernel) / stride + 1;
}

Tensor conv2d(const Tensor& input, const Tensor& kernel, const Tensor& bias, std::size_t stride, std::size_t padding) {
    ConvShape s = conv_shape(input, kernel, stride, padding);
    if (bias.rank() != 1 || bias.dim(0) != s.out_c)
        throw DimensionError("conv2d bias must have shape [" + std::to_string(s.out_c) + "], got " +
                             shape_string(bias.shape()));

    Tensor out({s.batch, s.out_c, s.out_h, s.out_w});
    const std::size_t n = s.pixels();
    std::vector<double> weights = to_double(kernel.data(), kernel.size());
    std::vector<double> col;
    std::vector<double> acc(s.out_c * n);
    for (std::size_t b = 0; b < s.batch; ++b) {
        im2col(s, input.data() + b * s.in_c * s.height * s.width, col);
        for (std::size_t o = 0; o < s.out_c; ++o) std::fill_n(acc.begin() + o * n, n, double(bias[o]));
        detail::gemm_accumulate(s.out_c, n, s.patch(), weights.data(), col.data(), acc.data());
        store_float(acc, out.data() + b * s.out_c * n);
    }
    return out;
}

Tensor conv2d(const Tensor& input, const ConvParams& p) {
    return conv2d(input, p.kernel, p.bias, p.stride, p.padding);
}

ConvGrads conv2d_grad(const Tensor& input, const Tensor& kernel, std::size_t stride, std::size_t padding,
                      const Tensor& d_out, bool want_input_grad) {
    ConvShape s = conv_shape(input, kernel, stride, padding);
    Shape expected{s.batch, s.out_c, s.out_h, s.out_w};
    if (d_out.shape() != expected)
        throw DimensionError("conv2d_grad upstream gradient has shape " + shape_string(d_out.shape()) +
                             ", forward output is " + shape_string(expected));

    const std::size_t n = s.pixels();
    const std::size_t patch = s.patch();
    const std::size_t plane = s.in_c * s.height * s.width;

    std::vector<double> d_kernel(s.out_c * patch, 0.0);
    std::vector<double> d_bias(s.out_c, 0.0);
    std::vector<double> d_input;
    std::vector<double> weights_t;
    if (want_input_grad) {
        d_input.assign(s.batch * plane, 0.0);
        weights_t = transpose(kernel.data(), s.out_c, patch);
    }

    std::vector<double> col;
    std::vector<double> d_col;
    for (std::size_t b = 0; b < s.batch; ++b) {
        const float* g = d_out.data() + b * s.out_c * n;
        std::vector<double> grad = to_double(g, s.out_c * n);
        for (std::size_t o = 0; o < s.out_c; ++o) {
            double sum = d_bias[o];
            for (std::size_t i = 0; i < n; ++i) sum += grad[o * n + i];
            d_bias[o] = sum;
        }
        im2col_transposed(s, input.data() + b * plane, col);
        detail::gemm_accumulate(s.out_c, patch, n, grad.data(), col.data(), d_kernel.data());
        if (want_input_grad) {
            d_col.assign(patch * n, 0.0);
            detail::gemm_accumulate(patch, n, s.out_c, weights_t.data(), grad.data(), d_col.data());
            col2im(s, d_col, d_input.data() + b * plane);
        }
    }

    ConvGrads grads;
    grads.kernel = Tensor(kernel.shape());
    store_float(d_kernel, grads.kernel.data());
    grads.bias = Tensor({s.out_c});
    store_float(d_bias, grads.bias.data());
    if (want_input_grad) {
        grads.input = Tensor(input.shape());
        store_float(d_input, grads.input.data());
    }
    return grads;
}

ConvGrads conv2d_grad(const Tensor& input, const ConvParams& p, const Tensor& d_out) {
    return conv2d_grad(input, p.kernel, p.stride, p.padding, d_out, true);
}

PoolResult maxpool2d(const Tensor& input, const PoolParams& p) {
    require_rank(input, 4, "maxpool2d input");
    if (p.window == 0 || p.stride == 0) throw GeometryError("maxpool2d window and stride must be positive");
    const std::size_t B = input.dim(0), C = input.dim(1), H = input.dim(2), W = input.dim(3);
    if (H < p.window || W < p.window)
        throw GeometryError("maxpool2d window " + std::to_string(p.window) + " exceeds input " +
                            shape_string(input.shape()));
    const std::size_t oh = (H - p.window) / p.stride + 1;
    const std::size_t ow = (W - p.window) / p.stride + 1;

    PoolResult r{Tensor({B, C, oh, ow}), {}};
    r.argmax.resize(r.output.size());
    std::size_t out_idx = 0;
    for (std::size_t plane = 0; plane < B * C; ++plane) {
        const std::size_t base = plane * H * W;
        for (std::size_t y = 0; y < oh; ++y) {
            for (std::size_t x = 0; x < ow; ++x, ++out_idx) {
                std::size_t best = base + (y * p.stride) * W + x * p.stride;
                float best_v = input[best];
                for (std::size_t i = 0; i < p.window; ++i) {
                    for (std::size_t j = 0; j < p.window; ++j) {
                        std::size_t idx = base + (y * p.stride + i) * W + (x * p.stride + j);
                        if (input[idx] > best_v) {
                            best_v = input[idx];
                            best = idx;
                        }
                    }
                }
                r.output[out_idx] = best_v;
                r.argmax[out_idx] = best;
            }
        }
    }
    return r;
}

Tensor maxpool2d_grad(const std::vector<std::size_t>& argmax, const Tensor& d_out, const Shape& input_shape) {
    if (input_shape.size() != 4 || d_out.rank() != 4)
        throw DimensionError("maxpool2d_grad expects rank-4 shapes, got input " + shape_string(input_shape) +
                             " and gradient " + shape_string(d_out.shape()));
    if (d_out.dim(0) != input_shape[0] || d_out.dim(1) != input_shape[1] || d_out.dim(2) > input_shape[2] ||
        d_out.dim(3) > input_shape[3])
        throw DimensionError("maxpool2d_grad gradient " + shape_string(d_out.shape()) +
                             " is inconsistent with input " + shape_string(input_shape));
    if (argmax.size() != d_out.size())
        throw DimensionError("maxpool2d_grad argmax has " + std::to_string(argmax.size()) + " entries, gradient has " +
                             std::to_string(d_out.size()));
    const std::size_t total = shape_size(input_shape);
    const std::size_t out_plane = d_out.dim(2) * d_out.dim(3);
    const std::size_t in_plane = input_shape[2] * input_shape[3];
    std::vector<double> acc(total, 0.0);
    for (std::size_t i = 0; i < argmax.size(); ++i) {
        std::size_t idx = argmax[i];
        if (idx >= total || idx / in_plane != i / out_plane)
            throw DimensionError("maxpool2d_grad argmax index " + std::to_string(idx) +
                                 " lies outside its input plane");
        acc[idx] += d_out[i];
    }
    Tensor d_in(input_shape);
    store_float(acc, d_in.data());
    return d_in;
}

Tensor relu(const Tensor& input) {
    Tensor out = input;
    for (float& v : out.values()) v = v > 0.0f ? v : 0.0f;
    return out;
}

Tensor relu_grad(const Tensor& input, const Tensor& d_out) {
    if (input.shape() != d_out.shape())
        throw DimensionError("relu_grad shapes differ: " + shape_string(input.shape()) + " vs " +
                             shape_string(d_out.shape()));
    Tensor d_in(input.shape());
    for (std::size_t i = 0; i < input.size(); ++i) d_in[i] = input[i] > 0.0f ? d_out[i] : 0.0f;
    return d_in;
}

Tensor dense(const Tensor& input, const Tensor& weight, const Tensor& bias) {
    require_rank(input, 2, "dense input");
    require_rank(weight, 2, "dense weight");
    const std::size_t B = input.dim(0), N = input.dim(1), M = weight.dim(0);
    if (weight.dim(1) != N)
        throw DimensionError("dense weight " + shape_string(weight.shape()) + " does not accept input " +
                             shape_string(input.shape()));
    if (bias.rank() != 1 || bias.dim(0) != M)
        throw DimensionError("dense bias must have shape [" + std::to_string(M) + "], got " +
                             shape_string(bias.shape()));
    std::vector<double> x = to_double(input.data(), input.size());
    std::vector<double> w_t = transpose(weight.data(), M, N);
    std::vector<double> acc(B * M);
    for (std::size_t b = 0; b < B; ++b)
        for (std::size_t m = 0; m < M; ++m) acc[b * M + m] = bias[m];
    detail::gemm_accumulate(B, M, N, x.data(), w_t.data(), acc.data());
    Tensor out({B, M});
    store_float(acc, out.data());
    return out;
}

DenseGrads dense_grad(const Tensor& input, const Tensor& weight, const Tensor& d_out) {
    require_rank(input, 2, "dense input");
    require_rank(weight, 2, "dense weight");
    const std::size_t B = input.dim(0), N = input.dim(1), M = weight.dim(0);
    if (weight.dim(1) != N)
        throw DimensionError("dense weight " + shape_string(weight.shape()) + " does not accept input " +
                             shape_string(input.shape()));
    if (d_out.shape() != Shape{B, M})
        throw DimensionError("dense_grad upstream gradient has shape " + shape_string(d_out.shape()) +
                             ", expected " + shape_string({B, M}));

    std::vector<double> g = to_double(d_out.data(), d_out.size());
    std::vector<double> x = to_double(input.data(), input.size());
    std::vector<double> w = to_double(weight.data(), weight.size());
    std::vector<double> g_t = transpose(d_out.data(), B, M);

    std::vector<double> d_x(B * N, 0.0);
    detail::gemm_accumulate(B, N, M, g.data(), w.data(), d_x.data());
    std::vector<double> d_w(M * N, 0.0);
    detail::gemm_accumulate(M, N, B, g_t.data(), x.data(), d_w.data());
    std::vector<double> d_b(M, 0.0);
    for (std::size_t b = 0; b < B; ++b)
        for (std::size_t m = 0; m < M; ++m) d_b[m] += g[b * M + m];

    DenseGrads grads{Tensor(input.shape()), Tensor(weight.shape()), Tensor({M})};
    store_float(d_x, grads.input.data());
    store_float(d_w, grads.weight.data());
    store_float(d_b, grads.bias.data());
    return grads;
}

Tensor softmax(const Tensor& logits) {
    require_rank(logits, 2, "softmax logits");
    const std::size_t B = logits.dim(0), K = logits.dim(1);
    Tensor probs(logits.shape());
    std::vector<double> e(K);
    for (std::size_t b = 0; b < B; ++b) {
        const float* z = logits.data() + b * K;
        double mx = *std::max_element(z, z + K);
        double sum = 0.0;
        for (std::size_t k = 0; k < K; ++k) {
            e[k] = std::exp(double(z[k]) - mx);
            sum += e[k];
        }
        for (std::size_t k = 0; k < K; ++k) probs[b * K + k] = static_cast<float>(e[k] / sum);
    }
    return probs;
}

SoftmaxXent softmax_xent(const Tensor& logits, const Tensor& target) {
    require_rank(logits, 2, "softmax_xent logits");
    if (target.shape() != logits.shape())
        throw DimensionError("softmax_xent target " + shape_string(target.shape()) + " does not match logits " +
                             shape_string(logits.shape()));
    const std::size_t B = logits.dim(0), K = logits.dim(1);
    std::vector<std::size_t> label(B);
    for (std::size_t b = 0; b < B; ++b) {
        std::size_t ones = 0;
        for (std::size_t k = 0; k < K; ++k) {
            float t = target[b * K + k];
            if (t == 1.0f) {
                ++ones;
                label[b] = k;
            } else if (t != 0.0f) {
                throw ValidationError("softmax_xent target row " + std::to_string(b) + " is not one-hot");
            }
        }
        if (ones != 1) throw ValidationError("softmax_xent target row " + std::to_string(b) + " is not one-hot");
    }

    SoftmaxXent r{0.0, Tensor(logits.shape()), Tensor(logits.shape())};
    std::vector<double> e(K);
    double total = 0.0;
    for (std::size_t b = 0; b < B; ++b) {
        const float* z = logits.data() + b * K;
        double mx = *std::max_element(z, z + K);
        double sum = 0.0;
        for (std::size_t k = 0; k < K; ++k) {
            e[k] = std::exp(double(z[k]) - mx);
            sum += e[k];
        }
        total += std::log(sum) - (double(z[label[b]]) - mx);
        for (std::size_t k = 0; k < K; ++k) {
            double p = e[k] / sum;
            r.probs[b * K + k] = static_cast<float>(p);
            r.d_logits[b * K + k] = static_cast<float>((p - (k == label[b] ? 1.0 : 0.0)) / double(B));
        }
    }
    r.loss = total / double(B);
    return r;
}

}  // namespace deepclass
