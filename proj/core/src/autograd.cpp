#include "hazard/autograd.hpp"

#include <unordered_map>
#include <utility>

#include "hazard/errors.hpp"

namespace hazard::autograd {

namespace detail {
struct Node {
  Tensor value;
  bool requires_grad = false;
  const char* op = "leaf";
  std::vector<std::shared_ptr<Node>> inputs;
  std::function<std::vector<Tensor>(const Tensor&)> backward;
};
}  // namespace detail

namespace {

void accumulate(Tensor& into, const Tensor& grad) {
  if (into.empty()) {
    into = grad;
    return;
  }
  require_same_shape(into, grad, "gradient accumulation");
  float* dst = into.data();
  const float* src = grad.data();
  for (std::size_t i = 0; i < into.size(); ++i) dst[i] += src[i];
}

}  // namespace

Variable Variable::parameter(Tensor value) {
  auto node = std::make_shared<detail::Node>();
  node->value = std::move(value);
  node->requires_grad = true;
  return Variable(std::move(node));
}

Variable Variable::constant(Tensor value) {
  auto node = std::make_shared<detail::Node>();
  node->value = std::move(value);
  return Variable(std::move(node));
}

const Tensor& Variable::value() const { return node_->value; }
Tensor& Variable::mutable_value() { return node_->value; }
bool Variable::requires_grad() const { return node_ && node_->requires_grad; }
const char* Variable::op() const { return node_->op; }

Variable make_variable(const char* op, Tensor value, std::vector<Variable> inputs,
                       std::function<std::vector<Tensor>(const Tensor&)> backward) {
  auto node = std::make_shared<detail::Node>();
  node->value = std::move(value);
  node->op = op;
  for (const auto& in : inputs) node->requires_grad = node->requires_grad || in.requires_grad();
  if (node->requires_grad) {
    node->inputs.reserve(inputs.size());
    for (auto& in : inputs) node->inputs.push_back(std::move(in.node_));
    node->backward = std::move(backward);
  }
  return Variable(std::move(node));
}

Variable conv2d(const Variable& input, const Variable& kernels, const Variable& bias,
                std::size_t stride, std::size_t padding) {
  Tensor out = ops::conv2d(input.value(), kernels.value(), bias.value(), stride, padding);
  return make_variable("conv2d", std::move(out), {input, kernels, bias},
                       [x = input, k = kernels, stride, padding](const Tensor& g) {
                         auto grads = ops::conv2d_backward(x.value(), k.value(), g, stride, padding);
                         return std::vector<Tensor>{std::move(grads.input),
                                                    std::move(grads.kernels),
                                                    std::move(grads.bias)};
                       });
}

Variable conv2d_transpose(const Variable& input, const Variable& kernels, const Variable& bias,
                          std::size_t stride, std::size_t padding) {
  Tensor out =
      ops::conv2d_transpose(input.value(), kernels.value(), bias.value(), stride, padding);
  return make_variable("conv2d_transpose", std::move(out), {input, kernels, bias},
                       [x = input, k = kernels, stride, padding](const Tensor& g) {
                         auto grads = ops::conv2d_transpose_backward(x.value(), k.value(), g,
                                                                     stride, padding);
                         return std::vector<Tensor>{std::move(grads.input),
                                                    std::move(grads.kernels),
                                                    std::move(grads.bias)};
                       });
}

Variable leaky_relu(const Variable& x, float negative_slope) {
  return make_variable("leaky_relu", ops::leaky_relu(x.value(), negative_slope), {x},
                       [x, negative_slope](const Tensor& g) {
                         return std::vector<Tensor>{
                             ops::leaky_relu_backward(x.value(), g, negative_slope)};
                       });
}

Variable dense(const Variable& x, const Variable& weights, const Variable& bias) {
  return make_variable("dense", ops::dense(x.value(), weights.value(), bias.value()),
                       {x, weights, bias}, [x, weights](const Tensor& g) {
                         auto grads = ops::dense_backward(x.value(), weights.value(), g);
                         return std::vector<Tensor>{std::move(grads.input),
                                                    std::move(grads.weights),
                                                    std::move(grads.bias)};
                       });
}

Variable reshape(const Variable& x, Shape shape) {
  return make_variable("reshape", x.value().reshaped(std::move(shape)), {x},
                       [original = x.value().shape()](const Tensor& g) {
                         return std::vector<Tensor>{g.reshaped(original)};
                       });
}

Variable mse_loss(const Variable& prediction, const Variable& target) {
  const double loss = ops::mse_loss(prediction.value(), target.value());
  return make_variable(
      "mse_loss", Tensor::scalar(static_cast<float>(loss)), {prediction, target},
      [p = prediction, t = target](const Tensor& g) {
        const Tensor& pv = p.value();
        const Tensor& tv = t.value();
        const float scale = 2.0f * g.item() / static_cast<float>(pv.size());
        Tensor dp(pv.shape());
        for (std::size_t i = 0; i < pv.size(); ++i) dp[i] = scale * (pv[i] - tv[i]);
        Tensor dt;
        if (t.requires_grad()) {
          dt = Tensor(tv.shape());
          for (std::size_t i = 0; i < tv.size(); ++i) dt[i] = -dp[i];
        }
        return std::vector<Tensor>{p.requires_grad() ? std::move(dp) : Tensor{}, std::move(dt)};
      });
}

Variable mae(const Variable& prediction, const Variable& target) {
  const double loss = ops::mae(prediction.value(), target.value());
  return make_variable(
      "mae", Tensor::scalar(static_cast<float>(loss)), {prediction, target},
      [p = prediction, t = target](const Tensor& g) {
        const Tensor& pv = p.value();
        const Tensor& tv = t.value();
        const float scale = g.item() / static_cast<float>(pv.size());
        Tensor dp(pv.shape());
        for (std::size_t i = 0; i < pv.size(); ++i) {
          const float d = pv[i] - tv[i];
          dp[i] = d > 0.0f ? scale : (d < 0.0f ? -scale : 0.0f);
        }
        Tensor dt;
        if (t.requires_grad()) {
          dt = Tensor(tv.shape());
          for (std::size_t i = 0; i < tv.size(); ++i) dt[i] = -dp[i];
        }
        return std::vector<Tensor>{p.requires_grad() ? std::move(dp) : Tensor{}, std::move(dt)};
      });
}

Variable mean(std::span<const Variable> terms) {
  if (terms.empty()) throw DataError("mean of an empty list");
  double acc = 0.0;
  for (const auto& t : terms) acc += t.value().item();
  const std::size_t n = terms.size();
  return make_variable("mean", Tensor::scalar(static_cast<float>(acc / static_cast<double>(n))),
                       std::vector<Variable>(terms.begin(), terms.end()),
                       [n](const Tensor& g) {
                         return std::vector<Tensor>(
                             n, Tensor::scalar(g.item() / static_cast<float>(n)));
                       });
}

struct GradientWalker {
  static Gradients run(const Variable& loss, std::span<const Variable> parameters) {
    if (!loss.defined() || loss.value().size() != 1) {
      throw ShapeError("gradients: loss must be a single value");
    }
    Gradients result;
    result.values.reserve(parameters.size());

    // Post-order over the recorded graph; reversed it is a valid backward order.
    std::vector<detail::Node*> order;
    if (loss.requires_grad()) {
      std::unordered_map<detail::Node*, bool> visited;
      std::vector<std::pair<detail::Node*, std::size_t>> stack{{loss.node_.get(), 0}};
      visited[loss.node_.get()] = true;
      while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->inputs.size()) {
          detail::Node* child = node->inputs[next++].get();
          if (child->requires_grad && !visited[child]) {
            visited[child] = true;
            stack.emplace_back(child, 0);
          }
        } else {
          order.push_back(node);
          stack.pop_back();
        }
      }
    }

    std::unordered_map<detail::Node*, Tensor> grads;
    grads[loss.node_.get()] = Tensor(loss.value().shape(), 1.0f);
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
      detail::Node* node = *it;
      if (!node->backward) continue;
      auto found = grads.find(node);
      if (found == grads.end()) continue;
      std::vector<Tensor> input_grads = node->backward(found->second);
      for (std::size_t i = 0; i < node->inputs.size(); ++i) {
        detail::Node* in = node->inputs[i].get();
        if (!in->requires_grad || i >= input_grads.size() || input_grads[i].empty()) continue;
        accumulate(grads[in], input_grads[i]);
      }
      // Interior gradients are no longer needed once propagated.
      if (!node->inputs.empty()) grads.erase(node);
    }

    for (std::size_t i = 0; i < parameters.size(); ++i) {
      auto found = grads.find(parameters[i].node_.get());
      if (found == grads.end()) {
        result.values.emplace_back(parameters[i].value().shape());
        result.unreachable.push_back(i);
      } else {
        result.values.push_back(found->second);
      }
    }
    return result;
  }
};

Gradients gradients(const Variable& loss, std::span<const Variable> parameters) {
  return GradientWalker::run(loss, parameters);
}

}  // namespace hazard::autograd
