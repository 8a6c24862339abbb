#include <random>
#include <vector>

#include <benchmark/benchmark.h>

#include "wimp/autodiff.hpp"
#include "wimp/model.hpp"
#include "wimp/scenario.hpp"

namespace {

using namespace wimp;

std::vector<double> random_values(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<double> v(n);
  for (auto& x : v) x = u(rng);
  return v;
}

const Dataset& scenes() {
  static const Dataset d = [] {
    GeneratorParams gp;
    gp.n_scenarios = 16;
    gp.seed = 1;
    return generate_scenarios(gp);
  }();
  return d;
}

void BM_MatmulForwardBackward(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto a = random_values(n * n, 1);
  const auto b = random_values(n, 2);
  for (auto _ : state) {
    ad::Tape tape;
    const ad::Var w = tape.parameter(0, ad::Tensor::matrix(n, n, a));
    const ad::Var x = tape.constant(b, n, 1);
    const ad::Var loss = ad::sum(tape, ad::tanh(tape, ad::matmul(tape, w, x)));
    tape.backward(loss);
    benchmark::DoNotOptimize(tape.grad(w).data());
  }
}
BENCHMARK(BM_MatmulForwardBackward)->Arg(16)->Arg(64)->Arg(128);

void BM_LstmSequence(benchmark::State& state) {
  const std::size_t h = static_cast<std::size_t>(state.range(0));
  const std::size_t in = 2;
  const std::size_t steps = 20;
  const auto w = random_values(4 * h * (in + h), 3);
  const auto bias = random_values(4 * h, 4);
  const auto xs = random_values(in * steps, 5);
  for (auto _ : state) {
    ad::Tape tape;
    const ad::Var wv = tape.parameter(0, ad::Tensor::matrix(4 * h, in + h, w));
    const ad::Var bv = tape.parameter(1, ad::Tensor::vector(bias));
    const std::vector<double> zeros(h, 0.0);
    ad::Var hv = tape.constant(zeros, h, 1);
    ad::Var cv = hv;
    for (std::size_t t = 0; t < steps; ++t) {
      const ad::Var x = tape.constant(std::span<const double>(xs).subspan(t * in, in), in, 1);
      const auto out = ad::lstm_cell(tape, x, hv, cv, wv, bv);
      hv = out.h;
      cv = out.c;
    }
    tape.backward(ad::sum(tape, hv));
    benchmark::DoNotOptimize(tape.grad(wv).data());
  }
}
BENCHMARK(BM_LstmSequence)->Arg(16)->Arg(64);

void BM_ProposePolylines(benchmark::State& state) {
  const Dataset& d = scenes();
  std::size_t i = 0;
  for (auto _ : state) {
    const Scenario& s = d.scenarios[i++ % d.scenarios.size()];
    benchmark::DoNotOptimize(propose_polylines(d.map_for(s), s.focal().observed, 6));
  }
}
BENCHMARK(BM_ProposePolylines);

void BM_ModelForward(benchmark::State& state) {
  const Dataset& d = scenes();
  const WimpModel model(ModelConfig::desk(), 0);
  std::vector<ScenePolylines> lines;
  for (const auto& s : d.scenarios) lines.push_back(propose_scene_polylines(d.map_for(s), s, Mode::kEval));
  std::size_t i = 0;
  for (auto _ : state) {
    const std::size_t k = i++ % d.scenarios.size();
    benchmark::DoNotOptimize(forward(model, d.scenarios[k], lines[k]));
  }
}
BENCHMARK(BM_ModelForward)->Unit(benchmark::kMillisecond);

void BM_PredictTopK(benchmark::State& state) {
  const Dataset& d = scenes();
  const WimpModel model(ModelConfig::desk(), 0);
  std::size_t i = 0;
  for (auto _ : state) {
    const Scenario& s = d.scenarios[i++ % d.scenarios.size()];
    benchmark::DoNotOptimize(predict_top_k(model, s, d.map_for(s), 6));
  }
}
BENCHMARK(BM_PredictTopK)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
