#include <benchmark/benchmark.h>

#include <array>
#include <random>

#include "csqc/fock.hpp"
#include "csqc/gates.hpp"
#include "csqc/pauli_sim.hpp"
#include "csqc/steane.hpp"
#include "csqc/threshold.hpp"

using namespace csqc;

namespace {

void bm_exrec(benchmark::State& state) {
    const auto trials = static_cast<std::uint64_t>(state.range(0));
    std::uint64_t seed = 1;
    for (auto _ : state) {
        benchmark::DoNotOptimize(run_exrec(2e-4, 0.015, trials, true, seed++));
    }
    state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(trials));
}
BENCHMARK(bm_exrec)->Arg(10000)->Arg(100000)->Unit(benchmark::kMillisecond);

void bm_decoder_table(benchmark::State& state) {
    for (auto _ : state) {
        ErasureDecoder d;
        benchmark::DoNotOptimize(&d);
    }
}
BENCHMARK(bm_decoder_table);

void bm_decoder_lookup(benchmark::State& state) {
    const ErasureDecoder d;
    std::mt19937_64 rng(7);
    for (auto _ : state) {
        const auto r = rng();
        benchmark::DoNotOptimize(d.decode(static_cast<unsigned>(r & 7u), static_cast<unsigned>((r >> 3) & 127u)));
    }
}
BENCHMARK(bm_decoder_lookup);

void bm_beam_splitter(benchmark::State& state) {
    const double a = static_cast<double>(state.range(0)) / 100.0;
    const auto s = tensor(coherent(a), coherent(a));
    for (auto _ : state) {
        benchmark::DoNotOptimize(apply_beam_splitter(s, {}));
    }
}
BENCHMARK(bm_beam_splitter)->Arg(100)->Arg(156)->Arg(200);

void bm_projection(benchmark::State& state) {
    const double a = 1.56;
    const auto s = apply_beam_splitter(tensor(cat_state(a, +1), coherent(a)), {});
    const std::array<std::size_t, 2> modes{0, 1};
    for (auto _ : state) {
        benchmark::DoNotOptimize(outcome_distribution(s, modes));
    }
}
BENCHMARK(bm_projection);

void bm_teleported_hadamard(benchmark::State& state) {
    const double a = static_cast<double>(state.range(0)) / 100.0;
    const CsqcQubit in{1.0, 1.0, a};
    for (auto _ : state) {
        benchmark::DoNotOptimize(verify_hadamard_gate(a, in));
    }
}
BENCHMARK(bm_teleported_hadamard)->Arg(80)->Arg(156)->Unit(benchmark::kMillisecond);

void bm_resources(benchmark::State& state) {
    for (auto _ : state) {
        benchmark::DoNotOptimize(count_resources(5));
    }
}
BENCHMARK(bm_resources);

}  // namespace

BENCHMARK_MAIN();
