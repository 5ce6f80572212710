// Microbenchmarks for the hot paths: sequence sampling, log-probability
// gradients, the chain partition function, rollout Q estimation, and the two
// batch gradient kernels. Run the binary directly; it is not part of ctest.
#include <benchmark/benchmark.h>

#include <cstdint>

#include "ebsg/energy.hpp"
#include "ebsg/gan.hpp"
#include "ebsg/generator.hpp"
#include "ebsg/maxent.hpp"
#include "ebsg/numerics.hpp"
#include "ebsg/oracle.hpp"

namespace {

using namespace ebsg;

GeneratorModel tabular_model(int vocab) {
    GeneratorModel gen = make_tabular_generator(vocab, 1);
    Vector params(param_count(gen));
    Rng rng(1);
    for (double& p : params) {
        p = rng.uniform(-1.0, 1.0);
    }
    set_params(gen, params);
    return gen;
}

EnergyModel linear_model(int vocab) {
    EnergyModel e = make_linear_energy(vocab);
    Vector params(param_count(e));
    Rng rng(2);
    for (double& p : params) {
        p = rng.uniform(-1.0, 1.0);
    }
    set_params(e, params);
    return e;
}

void bm_sample_tabular(benchmark::State& state) {
    const GeneratorModel gen = tabular_model(static_cast<int>(state.range(0)));
    Rng rng(3);
    for (auto _ : state) {
        benchmark::DoNotOptimize(sample_sequence(gen, 8, rng));
    }
}
BENCHMARK(bm_sample_tabular)->Arg(5)->Arg(50)->Arg(500);

void bm_sample_recurrent(benchmark::State& state) {
    const GeneratorModel gen =
        make_recurrent_generator(static_cast<int>(state.range(0)), 16, 32, 4);
    Rng rng(5);
    for (auto _ : state) {
        benchmark::DoNotOptimize(sample_sequence(gen, 8, rng));
    }
}
BENCHMARK(bm_sample_recurrent)->Arg(5)->Arg(50)->Arg(500);

void bm_grad_log_prob_tabular(benchmark::State& state) {
    const int vocab = static_cast<int>(state.range(0));
    const GeneratorModel gen = tabular_model(vocab);
    Rng rng(6);
    const Sequence seq = sample_sequence(gen, 8, rng).items;
    for (auto _ : state) {
        benchmark::DoNotOptimize(grad_log_prob(gen, seq));
    }
}
BENCHMARK(bm_grad_log_prob_tabular)->Arg(5)->Arg(50)->Arg(500);

void bm_grad_log_prob_recurrent(benchmark::State& state) {
    const GeneratorModel gen =
        make_recurrent_generator(static_cast<int>(state.range(0)), 16, 32, 7);
    Rng rng(8);
    const Sequence seq = sample_sequence(gen, 8, rng).items;
    for (auto _ : state) {
        benchmark::DoNotOptimize(grad_log_prob(gen, seq));
    }
}
BENCHMARK(bm_grad_log_prob_recurrent)->Arg(5)->Arg(50);

void bm_partition_dp(benchmark::State& state) {
    const int vocab = static_cast<int>(state.range(0));
    EnergyModel em = linear_model(vocab);
    const LinearEnergy& cost = std::get<LinearEnergy>(em);
    for (auto _ : state) {
        benchmark::DoNotOptimize(partition_dp(cost, 8));
    }
}
BENCHMARK(bm_partition_dp)->Arg(5)->Arg(50)->Arg(500);

void bm_soft_dp_policy(benchmark::State& state) {
    const int vocab = static_cast<int>(state.range(0));
    EnergyModel em = linear_model(vocab);
    const LinearEnergy& cost = std::get<LinearEnergy>(em);
    for (auto _ : state) {
        benchmark::DoNotOptimize(soft_dp_policy(cost, 8));
    }
}
BENCHMARK(bm_soft_dp_policy)->Arg(5)->Arg(50)->Arg(500);

void bm_estimate_q(benchmark::State& state) {
    const int vocab = 20;
    const GeneratorModel gen = tabular_model(vocab);
    const EnergyModel e = linear_model(vocab);
    Rng rng(9);
    const Sequence prefix{3, 7};
    const int rollouts = static_cast<int>(state.range(0));
    for (auto _ : state) {
        benchmark::DoNotOptimize(estimate_Q(gen, e, prefix, 8, rollouts, 1.0, rng));
    }
}
BENCHMARK(bm_estimate_q)->Arg(1)->Arg(16)->Arg(64);

void bm_discriminator_grad(benchmark::State& state) {
    const int vocab = 20;
    const GeneratorModel gen = tabular_model(vocab);
    const EnergyModel e = linear_model(vocab);
    Rng rng(10);
    std::vector<Sequence> real;
    std::vector<Sequence> fake;
    for (int i = 0; i < static_cast<int>(state.range(0)); ++i) {
        real.push_back(sample_sequence(gen, 8, rng).items);
        fake.push_back(sample_sequence(gen, 8, rng).items);
    }
    for (auto _ : state) {
        benchmark::DoNotOptimize(discriminator_grad(e, real, fake, 1.0));
    }
}
BENCHMARK(bm_discriminator_grad)->Arg(32)->Arg(256);

void bm_generator_grad(benchmark::State& state) {
    const int vocab = 20;
    const GeneratorModel gen = tabular_model(vocab);
    const EnergyModel e = linear_model(vocab);
    GanConfig config;
    config.horizon = 8;
    config.batch_size = 32;
    config.n_rollouts = 16;
    config.n_threads = static_cast<int>(state.range(0));
    Rng rng(11);
    for (auto _ : state) {
        benchmark::DoNotOptimize(generator_grad(gen, e, config, rng));
    }
}
BENCHMARK(bm_generator_grad)->Arg(1)->Arg(2)->Arg(4);

}  // namespace

BENCHMARK_MAIN();
