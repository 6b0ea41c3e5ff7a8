#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "qmann/model.hpp"
#include "qmann/similarity.hpp"
#include "qmann/train.hpp"

using namespace qmann;

namespace {

FixedTensor random_tensor(std::mt19937_64& rng, std::size_t rows,
                          std::size_t cols, const QFormat& fmt) {
  std::uniform_int_distribution<std::int64_t> raws(-fmt.max_raw(),
                                                   fmt.max_raw());
  FixedTensor t;
  t.rows = rows;
  t.cols = cols;
  t.fmt = fmt;
  t.raw.resize(rows * cols);
  for (auto& r : t.raw) r = raws(rng);
  return t;
}

void BM_Quantize(benchmark::State& state) {
  const QFormat fmt{5, 2};
  FxContext ctx;
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> dist(-40.0, 40.0);
  std::vector<double> xs(1024);
  for (auto& x : xs) x = dist(rng);
  std::size_t i = 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(quantize(xs[i++ & 1023], fmt, ctx));
  }
}
BENCHMARK(BM_Quantize);

void BM_FxMulAdd(benchmark::State& state) {
  const QFormat fmt{5, 2};
  FxContext ctx;
  std::mt19937_64 rng(2);
  const FixedTensor t = random_tensor(rng, 1, 1024, fmt);
  std::size_t i = 0;
  FixedScalar acc{0, fmt};
  for (auto _ : state) {
    const FixedScalar p =
        fx_mul(t.scalar(i & 1023), t.scalar((i + 7) & 1023), ctx);
    acc = fx_add(acc, p, ctx);
    benchmark::DoNotOptimize(acc);
    ++i;
  }
}
BENCHMARK(BM_FxMulAdd);

void BM_DotSimilarityFixed(benchmark::State& state) {
  const QFormat fmt{5, 2};
  std::mt19937_64 rng(3);
  const std::size_t dim = static_cast<std::size_t>(state.range(0));
  const FixedTensor u = random_tensor(rng, 1, dim, fmt);
  const FixedTensor v = random_tensor(rng, 1, dim, fmt);
  FxContext ctx;
  for (auto _ : state) {
    benchmark::DoNotOptimize(dot_similarity_fixed(u, 0, v, 0, ctx));
  }
  state.SetItemsProcessed(state.iterations() * dim);
}
BENCHMARK(BM_DotSimilarityFixed)->Arg(60)->Arg(256);

void BM_HammingSimilarity(benchmark::State& state) {
  const QFormat fmt{2, 5};
  std::mt19937_64 rng(4);
  const std::size_t dim = static_cast<std::size_t>(state.range(0));
  const FixedTensor u = random_tensor(rng, 1, dim, fmt);
  const FixedTensor v = random_tensor(rng, 1, dim, fmt);
  const HammingWeights w{-3, 8};
  for (auto _ : state) {
    benchmark::DoNotOptimize(hamming_similarity(u, 0, v, 0, w));
  }
  state.SetItemsProcessed(state.iterations() * dim);
}
BENCHMARK(BM_HammingSimilarity)->Arg(60)->Arg(256);

void BM_HammingBackward(benchmark::State& state) {
  const QFormat fmt{2, 5};
  std::mt19937_64 rng(5);
  const FixedTensor u = random_tensor(rng, 1, 60, fmt);
  const FixedTensor v = random_tensor(rng, 1, 60, fmt);
  const HammingWeights w{-3, 8};
  for (auto _ : state) {
    benchmark::DoNotOptimize(hamming_backward(u, 0, v, 0, w));
  }
}
BENCHMARK(BM_HammingBackward);

EncodedStory bench_story(std::size_t input_dim, std::size_t sentences) {
  std::mt19937_64 rng(6);
  EncodedStory story;
  story.sentences.assign(sentences, std::vector<double>(input_dim, 0.0));
  for (auto& s : story.sentences) {
    for (int k = 0; k < 5; ++k) s[rng() % input_dim] = 1.0;
  }
  story.question.assign(input_dim, 0.0);
  story.question[0] = 1.0;
  story.answer = 1;
  return story;
}

void BM_ForwardFloat(benchmark::State& state) {
  const MannConfig cfg{40, 60, 50, 3};
  Rng rng(7);
  const MannParams params = init_params(cfg, rng);
  const EncodedStory story = bench_story(cfg.input_dim, 14);
  const QuantSpec spec;
  QuantScopes scopes;
  for (auto _ : state) {
    benchmark::DoNotOptimize(
        forward_story(params, nullptr, story, cfg, spec, scopes, nullptr));
  }
}
BENCHMARK(BM_ForwardFloat);

void BM_ForwardFixed(benchmark::State& state) {
  const MannConfig cfg{40, 60, 50, 3};
  Rng rng(8);
  const MannParams params = init_params(cfg, rng);
  const EncodedStory story = bench_story(cfg.input_dim, 14);
  QuantSpec spec;
  spec.arithmetic = Arithmetic::Fixed;
  spec.param_fmt = spec.act_fmt = spec.mem_fmt = QFormat{5, 2};
  QuantScopes scopes;
  const QuantizedParams qp =
      quantize_params(params, spec, cfg.hops, scopes.params);
  for (auto _ : state) {
    benchmark::DoNotOptimize(
        forward_story(params, &qp, story, cfg, spec, scopes, nullptr));
  }
}
BENCHMARK(BM_ForwardFixed);

void BM_BackwardFloat(benchmark::State& state) {
  const MannConfig cfg{40, 60, 50, 3};
  Rng rng(9);
  const MannParams params = init_params(cfg, rng);
  const EncodedStory story = bench_story(cfg.input_dim, 14);
  const QuantSpec spec;
  QuantScopes scopes;
  const ForwardResult fwd =
      forward_story(params, nullptr, story, cfg, spec, scopes, nullptr);
  Gradients grads(cfg);
  for (auto _ : state) {
    grads.zero();
    backward_story(params, story, cfg, spec, fwd, grads);
    benchmark::DoNotOptimize(grads);
  }
}
BENCHMARK(BM_BackwardFloat);

}  // namespace

BENCHMARK_MAIN();
