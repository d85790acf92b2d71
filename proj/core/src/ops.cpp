#include "hazard/ops.hpp"

#include <Eigen/Core>
#include <cmath>
#include <string>

#include "hazard/errors.hpp"

namespace hazard::ops {
namespace {

using RowMat = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatView = Eigen::Map<RowMat>;
using ConstMatView = Eigen::Map<const RowMat>;

constexpr std::size_t kTaps = kKernelExtent * kKernelExtent;

struct Geometry {
  std::size_t channels;
  std::size_t height, width;          // image extents
  std::size_t out_height, out_width;  // sliding-window positions
  std::size_t stride, padding;
};

// col[(c*9 + ky*3 + kx), oy*Wo + ox] = image[c, oy*s + ky - p, ox*s + kx - p]
void im2col(const float* image, const Geometry& g, float* col) {
  const std::size_t positions = g.out_height * g.out_width;
  for (std::size_t c = 0; c < g.channels; ++c) {
    const float* plane = image + c * g.height * g.width;
    for (std::size_t ky = 0; ky < kKernelExtent; ++ky) {
      for (std::size_t kx = 0; kx < kKernelExtent; ++kx) {
        float* row = col + ((c * kKernelExtent + ky) * kKernelExtent + kx) * positions;
        for (std::size_t oy = 0; oy < g.out_height; ++oy) {
          const auto iy = static_cast<std::ptrdiff_t>(oy * g.stride + ky) -
                          static_cast<std::ptrdiff_t>(g.padding);
          float* dst = row + oy * g.out_width;
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.height)) {
            for (std::size_t ox = 0; ox < g.out_width; ++ox) dst[ox] = 0.0f;
            continue;
          }
          const float* src = plane + static_cast<std::size_t>(iy) * g.width;
          for (std::size_t ox = 0; ox < g.out_width; ++ox) {
            const auto ix = static_cast<std::ptrdiff_t>(ox * g.stride + kx) -
                            static_cast<std::ptrdiff_t>(g.padding);
            dst[ox] = (ix < 0 || ix >= static_cast<std::ptrdiff_t>(g.width))
                          ? 0.0f
                          : src[ix];
          }
        }
      }
    }
  }
}

// Adjoint of im2col: scatter-add columns back into a zeroed image.
void col2im(const float* col, const Geometry& g, float* image) {
  const std::size_t positions = g.out_height * g.out_width;
  for (std::size_t c = 0; c < g.channels; ++c) {
    float* plane = image + c * g.height * g.width;
    for (std::size_t ky = 0; ky < kKernelExtent; ++ky) {
      for (std::size_t kx = 0; kx < kKernelExtent; ++kx) {
        const float* row = col + ((c * kKernelExtent + ky) * kKernelExtent + kx) * positions;
        for (std::size_t oy = 0; oy < g.out_height; ++oy) {
          const auto iy = static_cast<std::ptrdiff_t>(oy * g.stride + ky) -
                          static_cast<std::ptrdiff_t>(g.padding);
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.height)) continue;
          float* dst = plane + static_cast<std::size_t>(iy) * g.width;
          const float* src = row + oy * g.out_width;
          for (std::size_t ox = 0; ox < g.out_width; ++ox) {
            const auto ix = static_cast<std::ptrdiff_t>(ox * g.stride + kx) -
                            static_cast<std::ptrdiff_t>(g.padding);
            if (ix >= 0 && ix < static_cast<std::ptrdiff_t>(g.width)) dst[ix] += src[ox];
          }
        }
      }
    }
  }
}

void check_conv_args(const char* op, const Tensor& input, const Tensor& kernels,
                     std::size_t stride, std::size_t padding) {
  if (input.rank() != 3) {
    throw ShapeError(std::string(op) + ": input must be [C,H,W], got " +
                     shape_to_string(input.shape()));
  }
  if (kernels.rank() != 4 || kernels.dim(2) != kKernelExtent || kernels.dim(3) != kKernelExtent) {
    throw ShapeError(std::string(op) + ": kernels must be [*,*,3,3], got " +
                     shape_to_string(kernels.shape()));
  }
  if (stride == 0) throw ShapeError(std::string(op) + ": stride must be positive");
  if (padding >= kKernelExtent) {
    throw ShapeError(std::string(op) + ": padding " + std::to_string(padding) +
                     " exceeds kernel support");
  }
}

void check_channels(const char* op, const Tensor& input, std::size_t kernel_in) {
  if (input.dim(0) != kernel_in) {
    throw ShapeError(std::string(op) + ": input has " + std::to_string(input.dim(0)) +
                     " channels but kernels expect " + std::to_string(kernel_in) + " (input " +
                     shape_to_string(input.shape()) + ")");
  }
}

void check_bias(const char* op, const Tensor& bias, std::size_t channels) {
  if (bias.rank() != 1 || bias.dim(0) != channels) {
    throw ShapeError(std::string(op) + ": bias must be [" + std::to_string(channels) +
                     "], got " + shape_to_string(bias.shape()));
  }
}

void add_channel_bias(Tensor& out, const Tensor& bias) {
  const std::size_t plane = out.dim(1) * out.dim(2);
  for (std::size_t c = 0; c < out.dim(0); ++c) {
    float* p = out.data() + c * plane;
    const float b = bias[c];
    for (std::size_t i = 0; i < plane; ++i) p[i] += b;
  }
}

Tensor channel_sums(const Tensor& grad) {
  Tensor sums({grad.dim(0)});
  const std::size_t plane = grad.dim(1) * grad.dim(2);
  for (std::size_t c = 0; c < grad.dim(0); ++c) {
    const float* p = grad.data() + c * plane;
    double acc = 0.0;
    for (std::size_t i = 0; i < plane; ++i) acc += p[i];
    sums[c] = static_cast<float>(acc);
  }
  return sums;
}

// Geometry of the forward convolution that a transposed convolution inverts.
Geometry transpose_geometry(const Tensor& input, std::size_t out_channels, std::size_t stride,
                            std::size_t padding) {
  const std::size_t h = input.dim(1), w = input.dim(2);
  return Geometry{out_channels,
                  conv_transpose_output_extent(h, stride, padding),
                  conv_transpose_output_extent(w, stride, padding),
                  h,
                  w,
                  stride,
                  padding};
}

}  // namespace

std::size_t conv_output_extent(std::size_t extent, std::size_t stride, std::size_t padding) {
  if (stride == 0) throw ShapeError("stride must be positive");
  if (extent + 2 * padding < kKernelExtent) {
    throw ShapeError("extent " + std::to_string(extent) + " with padding " +
                     std::to_string(padding) + " is smaller than the 3x3 kernel");
  }
  return (extent + 2 * padding - kKernelExtent) / stride + 1;
}

std::size_t conv_transpose_output_extent(std::size_t extent, std::size_t stride,
                                         std::size_t padding) {
  if (stride == 0) throw ShapeError("stride must be positive");
  const std::size_t adjust = stride - 1;
  const std::size_t full = (extent - 1) * stride + kKernelExtent + adjust;
  if (full <= 2 * padding) {
    throw ShapeError("transposed convolution output would be empty");
  }
  return full - 2 * padding;
}

Tensor conv2d(const Tensor& input, const Tensor& kernels, const Tensor& bias,
              std::size_t stride, std::size_t padding) {
  check_conv_args("conv2d", input, kernels, stride, padding);
  check_channels("conv2d", input, kernels.dim(1));
  const std::size_t c_out = kernels.dim(0);
  check_bias("conv2d", bias, c_out);

  const Geometry g{input.dim(0),
                   input.dim(1),
                   input.dim(2),
                   conv_output_extent(input.dim(1), stride, padding),
                   conv_output_extent(input.dim(2), stride, padding),
                   stride,
                   padding};
  const std::size_t positions = g.out_height * g.out_width;
  const std::size_t taps = g.channels * kTaps;

  std::vector<float> col(taps * positions);
  im2col(input.data(), g, col.data());

  Tensor out({c_out, g.out_height, g.out_width});
  MatView(out.data(), c_out, positions).noalias() =
      ConstMatView(kernels.data(), c_out, taps) * ConstMatView(col.data(), taps, positions);
  add_channel_bias(out, bias);
  return out;
}

ConvGrads conv2d_backward(const Tensor& input, const Tensor& kernels,
                          const Tensor& grad_output, std::size_t stride, std::size_t padding) {
  check_conv_args("conv2d_backward", input, kernels, stride, padding);
  check_channels("conv2d_backward", input, kernels.dim(1));
  const std::size_t c_out = kernels.dim(0);
  const Geometry g{input.dim(0),
                   input.dim(1),
                   input.dim(2),
                   conv_output_extent(input.dim(1), stride, padding),
                   conv_output_extent(input.dim(2), stride, padding),
                   stride,
                   padding};
  if (grad_output.shape() != Shape{c_out, g.out_height, g.out_width}) {
    throw ShapeError("conv2d_backward: gradient " + shape_to_string(grad_output.shape()));
  }
  const std::size_t positions = g.out_height * g.out_width;
  const std::size_t taps = g.channels * kTaps;

  std::vector<float> col(taps * positions);
  im2col(input.data(), g, col.data());

  const ConstMatView dout(grad_output.data(), c_out, positions);
  ConvGrads grads{Tensor(input.shape()), Tensor(kernels.shape()), channel_sums(grad_output)};
  MatView(grads.kernels.data(), c_out, taps).noalias() =
      dout * ConstMatView(col.data(), taps, positions).transpose();

  std::vector<float> dcol(taps * positions);
  MatView(dcol.data(), taps, positions).noalias() =
      ConstMatView(kernels.data(), c_out, taps).transpose() * dout;
  col2im(dcol.data(), g, grads.input.data());
  return grads;
}

Tensor conv2d_transpose(const Tensor& input, const Tensor& kernels, const Tensor& bias,
                        std::size_t stride, std::size_t padding) {
  check_conv_args("conv2d_transpose", input, kernels, stride, padding);
  check_channels("conv2d_transpose", input, kernels.dim(0));
  const std::size_t c_in = kernels.dim(0);
  const std::size_t c_out = kernels.dim(1);
  check_bias("conv2d_transpose", bias, c_out);

  const Geometry g = transpose_geometry(input, c_out, stride, padding);
  const std::size_t positions = g.out_height * g.out_width;
  const std::size_t taps = c_out * kTaps;

  std::vector<float> col(taps * positions);
  MatView(col.data(), taps, positions).noalias() =
      ConstMatView(kernels.data(), c_in, taps).transpose() *
      ConstMatView(input.data(), c_in, positions);

  Tensor out({c_out, g.height, g.width});
  col2im(col.data(), g, out.data());
  add_channel_bias(out, bias);
  return out;
}

ConvGrads conv2d_transpose_backward(const Tensor& input, const Tensor& kernels,
                                    const Tensor& grad_output, std::size_t stride,
                                    std::size_t padding) {
  check_conv_args("conv2d_transpose_backward", input, kernels, stride, padding);
  check_channels("conv2d_transpose_backward", input, kernels.dim(0));
  const std::size_t c_in = kernels.dim(0);
  const std::size_t c_out = kernels.dim(1);
  const Geometry g = transpose_geometry(input, c_out, stride, padding);
  if (grad_output.shape() != Shape{c_out, g.height, g.width}) {
    throw ShapeError("conv2d_transpose_backward: gradient " +
                     shape_to_string(grad_output.shape()));
  }
  const std::size_t positions = g.out_height * g.out_width;
  const std::size_t taps = c_out * kTaps;

  std::vector<float> gcol(taps * positions);
  im2col(grad_output.data(), g, gcol.data());
  const ConstMatView gcol_view(gcol.data(), taps, positions);

  ConvGrads grads{Tensor(input.shape()), Tensor(kernels.shape()), channel_sums(grad_output)};
  MatView(grads.input.data(), c_in, positions).noalias() =
      ConstMatView(kernels.data(), c_in, taps) * gcol_view;
  MatView(grads.kernels.data(), c_in, taps).noalias() =
      ConstMatView(input.data(), c_in, positions) * gcol_view.transpose();
  return grads;
}

Tensor leaky_relu(const Tensor& x, float negative_slope) {
  Tensor out(x.shape());
  const float* src = x.data();
  float* dst = out.data();
  for (std::size_t i = 0; i < x.size(); ++i) {
    dst[i] = src[i] > 0.0f ? src[i] : negative_slope * src[i];
  }
  return out;
}

Tensor leaky_relu_backward(const Tensor& x, const Tensor& grad_output, float negative_slope) {
  require_same_shape(x, grad_output, "leaky_relu_backward");
  Tensor out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) {
    out[i] = x[i] > 0.0f ? grad_output[i] : negative_slope * grad_output[i];
  }
  return out;
}

Tensor dense(const Tensor& x, const Tensor& weights, const Tensor& bias) {
  if (x.rank() != 1 || weights.rank() != 2 || weights.dim(1) != x.dim(0)) {
    throw ShapeError("dense: x " + shape_to_string(x.shape()) + ", weights " +
                     shape_to_string(weights.shape()));
  }
  const std::size_t m = weights.dim(0), n = weights.dim(1);
  check_bias("dense", bias, m);
  Tensor out({m});
  Eigen::Map<Eigen::VectorXf>(out.data(), m).noalias() =
      ConstMatView(weights.data(), m, n) * Eigen::Map<const Eigen::VectorXf>(x.data(), n) +
      Eigen::Map<const Eigen::VectorXf>(bias.data(), m);
  return out;
}

DenseGrads dense_backward(const Tensor& x, const Tensor& weights, const Tensor& grad_output) {
  if (x.rank() != 1 || weights.rank() != 2 || weights.dim(1) != x.dim(0) ||
      grad_output.shape() != Shape{weights.dim(0)}) {
    throw ShapeError("dense_backward: x " + shape_to_string(x.shape()) + ", weights " +
                     shape_to_string(weights.shape()) + ", gradient " +
                     shape_to_string(grad_output.shape()));
  }
  const std::size_t m = weights.dim(0), n = weights.dim(1);
  const Eigen::Map<const Eigen::VectorXf> g(grad_output.data(), m);
  DenseGrads grads{Tensor({n}), Tensor(weights.shape()), grad_output};
  Eigen::Map<Eigen::VectorXf>(grads.input.data(), n).noalias() =
      ConstMatView(weights.data(), m, n).transpose() * g;
  MatView(grads.weights.data(), m, n).noalias() =
      g * Eigen::Map<const Eigen::VectorXf>(x.data(), n).transpose();
  return grads;
}

double mse_loss(const Tensor& prediction, const Tensor& target) {
  require_same_shape(prediction, target, "mse_loss");
  double acc = 0.0;
  for (std::size_t i = 0; i < prediction.size(); ++i) {
    const double d = static_cast<double>(prediction[i]) - target[i];
    acc += d * d;
  }
  return acc / static_cast<double>(prediction.size());
}

double mae(const Tensor& prediction, const Tensor& target) {
  require_same_shape(prediction, target, "mae");
  double acc = 0.0;
  for (std::size_t i = 0; i < prediction.size(); ++i) {
    acc += std::abs(static_cast<double>(prediction[i]) - target[i]);
  }
  return acc / static_cast<double>(prediction.size());
}

}  // namespace hazard::ops
