#include <gtest/gtest.h>

#include "hazard/autograd.hpp"
#include "hazard/errors.hpp"
#include "hazard/ops.hpp"
#include "oracles.hpp"

namespace {

using hazard::Tensor;
using hazard::rng::CounterRng;
namespace ops = hazard::ops;
namespace ag = hazard::autograd;

constexpr double kTol = 1e-6;

void expect_close(const Tensor& got, const std::vector<double>& want, const char* what,
                  std::uint64_t seed) {
  ASSERT_EQ(got.size(), want.size()) << what << " seed " << seed;
  for (std::size_t i = 0; i < want.size(); ++i) {
    ASSERT_NEAR(got[i], want[i], kTol * std::max(1.0, std::abs(want[i])))
        << what << " element " << i << " seed " << seed;
  }
}

struct ConvCase {
  std::size_t ci, co, h, w, stride, pad;
};

ConvCase random_case(CounterRng& gen) {
  ConvCase c;
  c.ci = 1 + gen.below(4);
  c.co = 1 + gen.below(4);
  c.stride = 1 + gen.below(2);
  c.pad = gen.below(3);
  c.h = 3 + gen.below(7);
  c.w = 3 + gen.below(7);
  return c;
}

TEST(Conv2d, MatchesLoopOracleOnRandomShapes) {
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    CounterRng gen(seed);
    const auto c = random_case(gen);
    const Tensor in = oracle::random_tensor({c.ci, c.h, c.w}, gen);
    const Tensor k = oracle::random_tensor({c.co, c.ci, 3, 3}, gen);
    const Tensor b = oracle::random_tensor({c.co}, gen);
    std::size_t oh = 0, ow = 0;
    const auto want = oracle::conv2d(in, k, b, c.stride, c.pad, oh, ow);
    const Tensor got = ops::conv2d(in, k, b, c.stride, c.pad);
    ASSERT_EQ(got.shape(), (hazard::Shape{c.co, oh, ow})) << "seed " << seed;
    expect_close(got, want, "conv2d", seed);
  }
}

TEST(Conv2dTranspose, MatchesScatterOracleOnRandomShapes) {
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    CounterRng gen(seed + 1000);
    auto c = random_case(gen);
    c.pad = gen.below(2);
    const Tensor in = oracle::random_tensor({c.ci, c.h, c.w}, gen);
    const Tensor k = oracle::random_tensor({c.ci, c.co, 3, 3}, gen);
    const Tensor b = oracle::random_tensor({c.co}, gen);
    std::size_t oh = 0, ow = 0;
    const auto want = oracle::conv2d_transpose(in, k, b, c.stride, c.pad, oh, ow);
    const Tensor got = ops::conv2d_transpose(in, k, b, c.stride, c.pad);
    ASSERT_EQ(got.shape(), (hazard::Shape{c.co, oh, ow})) << "seed " << seed;
    expect_close(got, want, "conv2d_transpose", seed);
  }
}

TEST(Conv2dTranspose, StrideTwoDoublesExtent) {
  EXPECT_EQ(ops::conv_transpose_output_extent(4, 2, 1), 8u);
  EXPECT_EQ(ops::conv_transpose_output_extent(32, 2, 1), 64u);
  EXPECT_EQ(ops::conv_output_extent(64, 2, 1), 32u);
}

TEST(Conv2dTranspose, IsAdjointOfConv2d) {
  // <conv(x), y> == <conv_T(y), x> with zero bias and the same kernel array.
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    CounterRng gen(seed + 2000);
    const std::size_t ci = 1 + gen.below(3), co = 1 + gen.below(3);
    const std::size_t stride = 1 + gen.below(2);
    const std::size_t h = 2 * (2 + gen.below(4)), w = 2 * (2 + gen.below(4));
    const Tensor x = oracle::random_tensor({ci, h, w}, gen);
    const Tensor k = oracle::random_tensor({co, ci, 3, 3}, gen);
    const Tensor cx = ops::conv2d(x, k, Tensor({co}), stride, 1);
    const Tensor y = oracle::random_tensor(cx.shape(), gen);
    const Tensor ty = ops::conv2d_transpose(y, k, Tensor({ci}), stride, 1);
    ASSERT_EQ(ty.shape(), x.shape());
    double lhs = 0.0, rhs = 0.0;
    for (std::size_t i = 0; i < cx.size(); ++i) lhs += static_cast<double>(cx[i]) * y[i];
    for (std::size_t i = 0; i < x.size(); ++i) rhs += static_cast<double>(ty[i]) * x[i];
    EXPECT_NEAR(lhs, rhs, 1e-4 * std::max(1.0, std::abs(lhs))) << "seed " << seed;
  }
}

TEST(Conv2d, RejectsChannelMismatch) {
  const Tensor in({2, 5, 5});
  const Tensor k({3, 1, 3, 3});
  try {
    ops::conv2d(in, k, Tensor({3}), 1, 1);
    FAIL() << "expected a shape error";
  } catch (const hazard::ShapeError& e) {
    EXPECT_NE(std::string(e.what()).find("channel"), std::string::npos) << e.what();
  }
}

TEST(Dense, MatchesLoopOracle) {
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    CounterRng gen(seed + 3000);
    const std::size_t n = 1 + gen.below(40), m = 1 + gen.below(20);
    const Tensor x = oracle::random_tensor({n}, gen);
    const Tensor wts = oracle::random_tensor({m, n}, gen);
    const Tensor b = oracle::random_tensor({m}, gen);
    expect_close(ops::dense(x, wts, b), oracle::dense(x, wts, b), "dense", seed);
  }
}

TEST(Losses, MatchLoopOracles) {
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    CounterRng gen(seed + 4000);
    const hazard::Shape shape{1 + gen.below(3), 1 + gen.below(9), 1 + gen.below(9)};
    const Tensor a = oracle::random_tensor(shape, gen);
    const Tensor b = oracle::random_tensor(shape, gen);
    EXPECT_NEAR(ops::mse_loss(a, b), oracle::mse(a, b), kTol) << "seed " << seed;
    EXPECT_NEAR(ops::mae(a, b), oracle::mae(a, b), kTol) << "seed " << seed;
  }
}

TEST(Losses, IdenticalTensorsGiveZero) {
  CounterRng gen(5);
  const Tensor a = oracle::random_tensor({1, 8, 8}, gen);
  EXPECT_EQ(ops::mse_loss(a, a), 0.0);
  EXPECT_EQ(ops::mae(a, a), 0.0);
}

TEST(LeakyRelu, ScalesNegativesBySlope) {
  const Tensor x = Tensor::from({4}, {-2.0f, -0.5f, 0.0f, 3.0f});
  const Tensor y = ops::leaky_relu(x);
  EXPECT_FLOAT_EQ(y[0], -0.02f);
  EXPECT_FLOAT_EQ(y[1], -0.005f);
  EXPECT_FLOAT_EQ(y[2], 0.0f);
  EXPECT_FLOAT_EQ(y[3], 3.0f);
}

// ---------------------------------------------------------------- gradients

using Build = std::function<ag::Variable(std::vector<ag::Variable>&)>;
using Reference = std::function<std::vector<double>(const std::vector<Tensor>&)>;

/// Checks d(sum(w * out))/d(input) for every input, with a random weight w
/// per output element. The analytic gradient comes from the library's
/// backward pass over `build`; the numeric one from central differences of
/// the double-precision loop oracle `reference`.
void check_gradients(const Build& build, const Reference& reference, std::vector<Tensor> inputs,
                     CounterRng& gen, const char* what, std::uint64_t seed) {
  std::vector<ag::Variable> vars;
  for (auto& t : inputs) vars.push_back(ag::Variable::parameter(t));
  const auto out = build(vars);
  const std::size_t n = out.value().size();
  const Tensor w = oracle::random_tensor({1, n}, gen);
  const auto loss = ag::dense(ag::reshape(out, {n}), ag::Variable::constant(w),
                              ag::Variable::constant(Tensor({1})));
  const auto grads = ag::gradients(loss, vars);
  for (std::size_t p = 0; p < inputs.size(); ++p) {
    auto f = [&] {
      const auto o = reference(inputs);
      double s = 0.0;
      for (std::size_t i = 0; i < n; ++i) s += static_cast<double>(w[i]) * o[i];
      return s;
    };
    const auto numeric = oracle::numeric_gradient(inputs[p], f);
    const auto& g = grads[p];
    const double err = oracle::relative_error({g.values().begin(), g.values().end()}, numeric);
    EXPECT_LE(err, 1e-3) << what << " input " << p << " seed " << seed;
  }
}

TEST(Gradients, Conv2dMatchesFiniteDifferences) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    CounterRng gen(seed + 5000);
    const std::size_t ci = 1 + gen.below(2), co = 1 + gen.below(2), stride = 1 + gen.below(2);
    const Tensor x = oracle::random_tensor({ci, 6, 5}, gen);
    const Tensor k = oracle::random_tensor({co, ci, 3, 3}, gen);
    const Tensor b = oracle::random_tensor({co}, gen);
    check_gradients(
        [&](std::vector<ag::Variable>& v) { return ag::conv2d(v[0], v[1], v[2], stride, 1); },
        [&](const std::vector<Tensor>& t) {
          std::size_t oh, ow;
          return oracle::conv2d(t[0], t[1], t[2], stride, 1, oh, ow);
        },
        {x, k, b}, gen, "conv2d", seed);
  }
}

TEST(Gradients, Conv2dTransposeMatchesFiniteDifferences) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    CounterRng gen(seed + 6000);
    const std::size_t ci = 1 + gen.below(2), co = 1 + gen.below(2), stride = 1 + gen.below(2);
    const Tensor x = oracle::random_tensor({ci, 4, 3}, gen);
    const Tensor k = oracle::random_tensor({ci, co, 3, 3}, gen);
    const Tensor b = oracle::random_tensor({co}, gen);
    check_gradients(
        [&](std::vector<ag::Variable>& v) {
          return ag::conv2d_transpose(v[0], v[1], v[2], stride, 1);
        },
        [&](const std::vector<Tensor>& t) {
          std::size_t oh, ow;
          return oracle::conv2d_transpose(t[0], t[1], t[2], stride, 1, oh, ow);
        },
        {x, k, b}, gen, "conv2d_transpose", seed);
  }
}

TEST(Gradients, DenseAndLeakyReluMatchFiniteDifferences) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    CounterRng gen(seed + 7000);
    const Tensor x = oracle::random_tensor({7}, gen);
    const Tensor w = oracle::random_tensor({5, 7}, gen);
    const Tensor b = oracle::random_tensor({5}, gen);
    check_gradients(
        [&](std::vector<ag::Variable>& v) { return ag::leaky_relu(ag::dense(v[0], v[1], v[2])); },
        [&](const std::vector<Tensor>& t) {
          auto y = oracle::dense(t[0], t[1], t[2]);
          for (auto& v : y) v = v > 0.0 ? v : 0.01 * v;
          return y;
        },
        {x, w, b}, gen, "dense+leaky_relu", seed);
  }
}

TEST(Gradients, LossesMatchFiniteDifferences) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    CounterRng gen(seed + 8000);
    const Tensor a = oracle::random_tensor({2, 4, 4}, gen);
    const Tensor b = oracle::random_tensor({2, 4, 4}, gen);
    check_gradients([](std::vector<ag::Variable>& v) { return ag::mse_loss(v[0], v[1]); },
                    [](const std::vector<Tensor>& t) {
                      return std::vector<double>{oracle::mse(t[0], t[1])};
                    },
                    {a, b}, gen, "mse", seed);
    check_gradients([](std::vector<ag::Variable>& v) { return ag::mae(v[0], v[1]); },
                    [](const std::vector<Tensor>& t) {
                      return std::vector<double>{oracle::mae(t[0], t[1])};
                    },
                    {a, b}, gen, "mae", seed);
  }
}

TEST(Gradients, UnreachableParameterGetsZeroAndIsReported) {
  auto x = ag::Variable::parameter(Tensor::from({2}, {1.0f, 2.0f}));
  auto unused = ag::Variable::parameter(Tensor::from({3}, {1.0f, 1.0f, 1.0f}));
  const auto loss = ag::mse_loss(x, ag::Variable::constant(Tensor({2})));
  std::vector<ag::Variable> params{x, unused};
  const auto g = ag::gradients(loss, params);
  ASSERT_EQ(g.unreachable, std::vector<std::size_t>{1});
  EXPECT_EQ(g[1], Tensor({3}));
  EXPECT_FLOAT_EQ(g[0][0], 1.0f);  // d/dx mean(x^2) = x
  EXPECT_FLOAT_EQ(g[0][1], 2.0f);
}

TEST(Gradients, SharedSubexpressionAccumulates) {
  // loss = mse(x, 0) + mse(x, 0) via mean of two identical terms equals mse(x, 0).
  auto x = ag::Variable::parameter(Tensor::from({2}, {3.0f, -1.0f}));
  const auto term = ag::mse_loss(x, ag::Variable::constant(Tensor({2})));
  std::vector<ag::Variable> terms{term, term};
  const auto loss = ag::mean(terms);
  std::vector<ag::Variable> params{x};
  const auto g = ag::gradients(loss, params);
  EXPECT_FLOAT_EQ(g[0][0], 3.0f);
  EXPECT_FLOAT_EQ(g[0][1], -1.0f);
}

TEST(Autograd, ConstantsDoNotRecordAGraph) {
  const auto a = ag::Variable::constant(Tensor::from({2}, {1.0f, 2.0f}));
  const auto y = ag::leaky_relu(a);
  EXPECT_FALSE(y.requires_grad());
}

}  // namespace
