#include <benchmark/benchmark.h>

#include "kalikow/gram.hpp"
#include "kalikow/lasso.hpp"
#include "kalikow/models.hpp"
#include "kalikow/rng.hpp"
#include "kalikow/simulator.hpp"

using namespace kalikow;

namespace {

const NeuronId n1{1}, n2{2}, n3{3};

KalikowModel network() {
    return hawkes_model(HawkesSpec{{{n1, 0.3}, {n2, 0.4}, {n3, 0.4}},
                                   {{n2, n1, 1, 0.25}, {n3, n1, 2, -0.15}, {n1, n2, 1, 0.2}, {n1, n3, 3, 0.1}}});
}

void BM_PerfectSampleMarkov(benchmark::State& state) {
    const auto model = markov_model(0.3, 0.6);
    std::uint64_t r = 0;
    for (auto _ : state) benchmark::DoNotOptimize(perfect_sample(model, Site{n1, 0}, replica_seed(1, r++)));
}
BENCHMARK(BM_PerfectSampleMarkov);

void BM_GenealogyWalk(benchmark::State& state) {
    GenealogyWalker walker(gl_linear_model(
        GLLinearSpec{{{n1, 0.4}, {n2, 0.5}},
                     {{{n2, n1}, 0.3}, {{n1, n2}, -0.2}},
                     {{n1, {0.5, 0.3, 0.2}}, {n2, {0.6, 0.25, 0.15}}}},
        8));
    std::uint64_t r = 0;
    for (auto _ : state) benchmark::DoNotOptimize(walker.walk(Site{n1, 0}, replica_seed(2, r++)));
}
BENCHMARK(BM_GenealogyWalk);

void BM_SampleWindow(benchmark::State& state) {
    const auto model = network();
    std::uint64_t seed = 0;
    for (auto _ : state) benchmark::DoNotOptimize(sample_window(model, {n1, n2, n3}, 3, state.range(0), seed++));
    state.SetItemsProcessed(state.iterations() * state.range(0) * 3);
}
BENCHMARK(BM_SampleWindow)->Arg(1000)->Arg(10000);

void BM_Assemble(benchmark::State& state) {
    const auto s = sample_window(network(), {n1, n2, n3}, state.range(1), state.range(0), 3);
    const auto dict = hawkes_dict({n1, n2, n3}, state.range(1), true);
    for (auto _ : state) benchmark::DoNotOptimize(assemble(dict, s, n1));
    state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_Assemble)->Args({10000, 3})->Args({10000, 10})->Args({100000, 3});

void BM_Lasso(benchmark::State& state) {
    const auto s = sample_window(network(), {n1, n2, n3}, state.range(0), 10000, 4);
    const auto dict = hawkes_dict({n1, n2, n3}, state.range(0), true);
    const auto g = assemble(dict, s, n1);
    const double d = d_delta(dict.sup_norm(), dict.size(), 0.1, s.T());
    for (auto _ : state) benchmark::DoNotOptimize(solve(g, 2.0, d));
}
BENCHMARK(BM_Lasso)->Arg(3)->Arg(10);

}  // namespace

BENCHMARK_MAIN();
