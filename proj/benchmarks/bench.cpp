#include <benchmark/benchmark.h>

#include <vector>

#include "hazard/adam.hpp"
#include "hazard/autoencoder.hpp"
#include "hazard/autograd.hpp"
#include "hazard/evaluation.hpp"
#include "hazard/ops.hpp"
#include "hazard/preprocessing.hpp"
#include "hazard/rng.hpp"

namespace {

using hazard::Tensor;
namespace ag = hazard::autograd;

Tensor noise(hazard::Shape shape, std::uint64_t seed) {
  hazard::rng::CounterRng gen(seed);
  Tensor t(std::move(shape));
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = static_cast<float>(gen.uniform(-1, 1));
  return t;
}

hazard::AutoencoderModel model_with(std::size_t filters) {
  hazard::AutoencoderConfig c;
  c.first_layer_size = filters;
  return hazard::AutoencoderModel::build(c);
}

// First encoder layer: [1,64,64] -> [F,32,32].
void BM_Conv2d(benchmark::State& state) {
  const auto f = static_cast<std::size_t>(state.range(0));
  const Tensor in = noise({1, 64, 64}, 1), k = noise({f, 1, 3, 3}, 2), b({f});
  for (auto _ : state) benchmark::DoNotOptimize(hazard::ops::conv2d(in, k, b, 2, 1));
}
BENCHMARK(BM_Conv2d)->Arg(8)->Arg(32)->Arg(128);

// Deepest decoder layer: [8F,4,4] -> [4F,8,8].
void BM_Conv2dTranspose(benchmark::State& state) {
  const auto f = static_cast<std::size_t>(state.range(0));
  const Tensor in = noise({8 * f, 4, 4}, 1), k = noise({8 * f, 4 * f, 3, 3}, 2), b({4 * f});
  for (auto _ : state) benchmark::DoNotOptimize(hazard::ops::conv2d_transpose(in, k, b, 2, 1));
}
BENCHMARK(BM_Conv2dTranspose)->Arg(8)->Arg(32)->Arg(128);

void BM_ScorePatch(benchmark::State& state) {
  const auto model = model_with(static_cast<std::size_t>(state.range(0)));
  const Tensor patch = noise({1, 64, 64}, 3);
  for (auto _ : state) benchmark::DoNotOptimize(model.score_patch(patch));
}
BENCHMARK(BM_ScorePatch)->Arg(8)->Arg(32)->Arg(128)->Unit(benchmark::kMillisecond);

// Forward graph, backward pass and Adam update for one patch.
void BM_TrainStep(benchmark::State& state) {
  auto model = model_with(static_cast<std::size_t>(state.range(0)));
  const Tensor patch = noise({1, 64, 64}, 4);
  std::vector<hazard::AdamState> adam;
  for (const auto& p : model.parameters()) adam.push_back(hazard::AdamState::for_parameter(p.value));
  for (auto _ : state) {
    std::vector<ag::Variable> params;
    for (const auto& p : model.parameters()) params.push_back(ag::Variable::parameter(p.value));
    const auto input = ag::Variable::constant(patch);
    const auto loss = ag::mse_loss(model.forward(params, input), input);
    const auto grads = ag::gradients(loss, params);
    auto live = model.parameters();
    for (std::size_t i = 0; i < live.size(); ++i) hazard::adam_update(live[i].value, grads[i], adam[i]);
  }
}
BENCHMARK(BM_TrainStep)->Arg(8)->Arg(32)->Unit(benchmark::kMillisecond);

void BM_PrepareImage(benchmark::State& state) {
  const hazard::Frame frame{noise({1, 512, 512}, 5), "f", std::nullopt};
  const auto scale = static_cast<std::size_t>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(hazard::prepare_image(frame, scale));
}
BENCHMARK(BM_PrepareImage)->Arg(1)->Arg(8)->Unit(benchmark::kMicrosecond);

void BM_Auc(benchmark::State& state) {
  hazard::rng::CounterRng gen(6);
  std::vector<hazard::LabeledScore> scores;
  for (std::int64_t i = 0; i < state.range(0); ++i) {
    scores.push_back({"", gen.uniform(), gen.uniform() < 0.4 ? "haze-global" : "normal"});
  }
  for (auto _ : state) benchmark::DoNotOptimize(hazard::auc(scores));
}
BENCHMARK(BM_Auc)->Arg(1000)->Arg(100000);

}  // namespace

// Defined here rather than linking benchmark_main: the distribution's static
// benchmark_main archive carries LTO bytecode from another compiler release.
BENCHMARK_MAIN();
