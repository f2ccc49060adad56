#include <random>
#include <string>
#include <vector>

#include <benchmark/benchmark.h>

#include "r2i/attention.hpp"
#include "r2i/image.hpp"
#include "r2i/scorer.hpp"
#include "r2i/synthesis.hpp"
#include "r2i/text.hpp"

namespace {

using namespace r2i;

void BM_Consensus(benchmark::State& state) {
  const std::vector<std::string> pool{"Red", "red.", " RED ", "dark red", "Crimson", "red"};
  std::vector<std::string> answers;
  std::mt19937 rng(1);
  for (int i = 0; i < state.range(0); ++i) answers.push_back(pool[rng() % pool.size()]);
  for (auto _ : state) benchmark::DoNotOptimize(consensus(std::span<const std::string>(answers), state.range(0) * 3 / 4));
}
BENCHMARK(BM_Consensus)->Arg(8)->Arg(64);

void BM_Normalize(benchmark::State& state) {
  const std::string text = "  The answer is: \\boxed{1,234.50 Euros}, probably (maybe) ...  ";
  for (auto _ : state) {
    benchmark::DoNotOptimize(normalize_for_match(text));
    benchmark::DoNotOptimize(extract_answer(text, AnswerFormat::open));
  }
}
BENCHMARK(BM_Normalize);

void BM_RuleMatch(benchmark::State& state) {
  for (auto _ : state) {
    benchmark::DoNotOptimize(rule_match("answer is c", "C. three apples", AnswerFormat::mcq));
    benchmark::DoNotOptimize(rule_match("3.0", "3", AnswerFormat::open));
  }
}
BENCHMARK(BM_RuleMatch);

Tensor filled(std::vector<std::size_t> shape, unsigned seed) {
  Tensor t(std::move(shape));
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.01, 1.0);
  for (auto& v : t.data()) v = u(rng);
  return t;
}

void BM_AttentionCoverage(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  AttentionBundle b;
  b.grid_n = n;
  b.t_tokens = 64;
  b.llm_layers = 28;
  b.llm_heads = 8;
  b.connector_layers = 2;
  b.connector_heads = 4;
  b.a_st_q = filled({28, 8, 1, 64}, 1);
  b.a_st_qprime = filled({28, 8, 1, 64}, 2);
  b.a_ti = filled({2, 4, 64, n * n}, 3);
  const PixelBox box{100, 80, 300, 260};
  for (auto _ : state) benchmark::DoNotOptimize(bundle_coverage(b, box, 640, 480));
}
BENCHMARK(BM_AttentionCoverage)->Arg(8)->Arg(24);

void BM_ResizeBilinear(benchmark::State& state) {
  const int side = static_cast<int>(state.range(0));
  Image src(side, side);
  for (int y = 0; y < side; ++y) {
    for (int x = 0; x < side; ++x) {
      src.set_pixel(x, y, {static_cast<std::uint8_t>(x), static_cast<std::uint8_t>(y), static_cast<std::uint8_t>(x ^ y)});
    }
  }
  for (auto _ : state) benchmark::DoNotOptimize(resize_bilinear(src, side * 2, side * 2));
  state.SetItemsProcessed(state.iterations() * side * side * 4);
}
BENCHMARK(BM_ResizeBilinear)->Arg(64)->Arg(256);

}  // namespace

BENCHMARK_MAIN();
