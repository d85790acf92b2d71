#pragma once

#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "hazard/ops.hpp"
#include "hazard/tensor.hpp"

/// Reverse-mode differentiation over the operations in hazard::ops.
///
/// Every operation applied to a Variable that (transitively) depends on a
/// parameter records its inputs and a vector-Jacobian product. Operations on
/// constants only record their value, so inference through this API does not
/// retain a graph.
namespace hazard::autograd {

namespace detail {
struct Node;
}

class Variable {
 public:
  Variable() = default;

  /// Leaf that gradients are taken with respect to.
  static Variable parameter(Tensor value);
  static Variable constant(Tensor value);

  const Tensor& value() const;
  /// Mutable access for in-place optimizer updates on leaves.
  Tensor& mutable_value();
  bool requires_grad() const;
  const char* op() const;
  bool defined() const noexcept { return node_ != nullptr; }
  bool same_node(const Variable& other) const noexcept { return node_ == other.node_; }

 private:
  explicit Variable(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}

  std::shared_ptr<detail::Node> node_;

  friend Variable make_variable(const char* op, Tensor value, std::vector<Variable> inputs,
                                std::function<std::vector<Tensor>(const Tensor&)> backward);
  friend struct GradientWalker;
};

/// Internal constructor used by the operations below. `backward` maps the
/// gradient of the result to one gradient per input (an empty Tensor means
/// "no contribution").
Variable make_variable(const char* op, Tensor value, std::vector<Variable> inputs,
                       std::function<std::vector<Tensor>(const Tensor&)> backward);

Variable conv2d(const Variable& input, const Variable& kernels, const Variable& bias,
                std::size_t stride, std::size_t padding);
Variable conv2d_transpose(const Variable& input, const Variable& kernels, const Variable& bias,
                          std::size_t stride, std::size_t padding);
Variable leaky_relu(const Variable& x, float negative_slope = ops::kDefaultNegativeSlope);
Variable dense(const Variable& x, const Variable& weights, const Variable& bias);
Variable reshape(const Variable& x, Shape shape);
Variable mse_loss(const Variable& prediction, const Variable& target);
Variable mae(const Variable& prediction, const Variable& target);
/// Arithmetic mean of scalar variables.
Variable mean(std::span<const Variable> terms);

struct Gradients {
  /// One entry per requested parameter, in request order.
  std::vector<Tensor> values;
  /// Indices of parameters the loss does not depend on; their entry is zero.
  std::vector<std::size_t> unreachable;

  const Tensor& operator[](std::size_t i) const { return values[i]; }
};

/// d(loss)/d(p) for every p in `parameters`. `loss` must hold a single value.
Gradients gradients(const Variable& loss, std::span<const Variable> parameters);

}  // namespace hazard::autograd
