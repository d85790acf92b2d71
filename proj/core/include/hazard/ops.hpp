#pragma once

#include "hazard/tensor.hpp"

/// Forward kernels and their vector-Jacobian products. Images are [C,H,W],
/// convolution kernels are 3x3.
namespace hazard::ops {

inline constexpr std::size_t kKernelExtent = 3;
inline constexpr float kDefaultNegativeSlope = 0.01f;

std::size_t conv_output_extent(std::size_t extent, std::size_t stride, std::size_t padding);
/// Transposed-convolution output extent; the adjustment is stride - 1 so a
/// stride-2 layer exactly doubles its input.
std::size_t conv_transpose_output_extent(std::size_t extent, std::size_t stride,
                                         std::size_t padding);

/// Cross-correlation. kernels: [C_out, C_in, 3, 3], bias: [C_out].
Tensor conv2d(const Tensor& input, const Tensor& kernels, const Tensor& bias,
              std::size_t stride, std::size_t padding);

/// Adjoint of conv2d in its input. kernels: [C_in, C_out, 3, 3], bias: [C_out].
Tensor conv2d_transpose(const Tensor& input, const Tensor& kernels, const Tensor& bias,
                        std::size_t stride, std::size_t padding);

struct ConvGrads {
  Tensor input;
  Tensor kernels;
  Tensor bias;
};

ConvGrads conv2d_backward(const Tensor& input, const Tensor& kernels,
                          const Tensor& grad_output, std::size_t stride,
                          std::size_t padding);
ConvGrads conv2d_transpose_backward(const Tensor& input, const Tensor& kernels,
                                    const Tensor& grad_output, std::size_t stride,
                                    std::size_t padding);

Tensor leaky_relu(const Tensor& x, float negative_slope = kDefaultNegativeSlope);
Tensor leaky_relu_backward(const Tensor& x, const Tensor& grad_output,
                           float negative_slope = kDefaultNegativeSlope);

/// Affine map weights * x + bias. x: [N], weights: [M,N], bias: [M].
Tensor dense(const Tensor& x, const Tensor& weights, const Tensor& bias);

struct DenseGrads {
  Tensor input;
  Tensor weights;
  Tensor bias;
};

DenseGrads dense_backward(const Tensor& x, const Tensor& weights, const Tensor& grad_output);

/// Mean squared difference over all elements.
double mse_loss(const Tensor& prediction, const Tensor& target);
/// Mean absolute difference over all elements.
double mae(const Tensor& prediction, const Tensor& target);

}  // namespace hazard::ops
