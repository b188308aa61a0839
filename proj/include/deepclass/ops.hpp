#pragma once

#include <cstddef>
#include <vector>

#include "deepclass/tensor.hpp"

namespace deepclass {

/// Convolution layer parameters. `kernel` is outC x inC x kH x kW and `bias` has outC entries.
struct ConvParams {
    Tensor kernel;
    Tensor bias;
    std::size_t stride = 1;
    std::size_t padding = 0;
};

/// Square max-pool window.
struct PoolParams {
    std::size_t window = 2;
    std::size_t stride = 2;
};

/// floor((extent + 2*padding - kernel)/stride) + 1, or 0 when the window does not fit.
std::size_t conv_output_extent(std::size_t extent, std::size_t kernel, std::size_t stride, std::size_t padding);

// Forward and backward kernels. Reductions run in 64-bit and in a fixed order,
// so identical inputs give bit-identical outputs.

/// Cross-correlation with symmetric zero padding: B x inC x H x W -> B x outC x H' x W'.
Tensor conv2d(const Tensor& input, const Tensor& kernel, const Tensor& bias, std::size_t stride, std::size_t padding);
Tensor conv2d(const Tensor& input, const ConvParams& p);

struct ConvGrads {
    Tensor input;  // empty when not requested
    Tensor kernel;
    Tensor bias;
};

ConvGrads conv2d_grad(const Tensor& input, const Tensor& kernel, std::size_t stride, std::size_t padding,
                      const Tensor& d_out, bool want_input_grad = true);
ConvGrads conv2d_grad(const Tensor& input, const ConvParams& p, const Tensor& d_out);

struct PoolResult {
    Tensor output;
    /// Flat input index of each output cell's winner (first occurrence on ties).
    std::vector<std::size_t> argmax;
};

PoolResult maxpool2d(const Tensor& input, const PoolParams& p);

/// Routes each d_out cell to its winner; overlapping windows accumulate.
Tensor maxpool2d_grad(const std::vector<std::size_t>& argmax, const Tensor& d_out, const Shape& input_shape);

Tensor relu(const Tensor& input);

/// d_out where input > 0, else 0 (subgradient 0 at the kink).
Tensor relu_grad(const Tensor& input, const Tensor& d_out);

/// input[B x N] * weight[M x N]^T + bias[M].
Tensor dense(const Tensor& input, const Tensor& weight, const Tensor& bias);

struct DenseGrads {
    Tensor input;
    Tensor weight;
    Tensor bias;
};

DenseGrads dense_grad(const Tensor& input, const Tensor& weight, const Tensor& d_out);

/// Row-wise softmax with max-shift.
Tensor softmax(const Tensor& logits);

struct SoftmaxXent {
    double loss = 0.0;  // mean over the batch of -ln p[target]
    Tensor probs;
    Tensor d_logits;  // (probs - target) / B
};

/// `target` rows must be one-hot (exactly one 1, the rest 0).
SoftmaxXent softmax_xent(const Tensor& logits, const Tensor& target);

}  // namespace deepclass
