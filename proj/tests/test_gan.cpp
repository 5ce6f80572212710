#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <cstddef>
#include <limits>
#include <stdexcept>
#include <vector>

#include "doctest.h"
#include "ebsg/data_io.hpp"
#include "ebsg/demos.hpp"
#include "ebsg/energy.hpp"
#include "ebsg/errors.hpp"
#include "ebsg/gan.hpp"
#include "ebsg/generator.hpp"
#include "ebsg/numerics.hpp"
#include "ebsg/oracle.hpp"
#include "oracles.hpp"

using namespace ebsg;

namespace {

GeneratorModel random_generator(int vocab_size, std::uint64_t seed, double scale = 1.0) {
    GeneratorModel gen = make_tabular_generator(vocab_size, 1);
    Vector params(param_count(gen));
    Rng rng(seed);
    for (double& p : params) {
        p = rng.uniform(-scale, scale);
    }
    set_params(gen, params);
    return gen;
}

EnergyModel random_energy(int vocab_size, std::uint64_t seed, double scale = 1.0) {
    EnergyModel e = make_linear_energy(vocab_size);
    Vector params(param_count(e));
    Rng rng(seed);
    for (double& p : params) {
        p = rng.uniform(-scale, scale);
    }
    set_params(e, params);
    return e;
}

/// Enumerated gradient of E_p[energy + lambda * log p] over all sequences.
Vector enumerated_generator_grad(const GeneratorModel& gen, const EnergyModel& e, int horizon,
                                 double lambda) {
    Vector total(param_count(gen), 0.0);
    for (const Sequence& s : testing::all_sequences(vocab_size(gen), horizon)) {
        const double lp = log_prob(gen, s);
        const double weight = std::exp(lp) * (energy(e, s) + lambda * lp);
        add_scaled(total, grad_log_prob(gen, s), weight);
    }
    return total;
}

/// Enumerated E[energy + lambda * log p | prefix] under the generator chain.
double enumerated_Q(const GeneratorModel& gen, const EnergyModel& e,
                    const Sequence& prefix, int horizon, double lambda) {
    double total = 0.0;
    for (const Sequence& s : testing::all_sequences(vocab_size(gen), horizon)) {
        bool matches = true;
        for (std::size_t i = 0; i < prefix.size(); ++i) {
            if (s[i] != prefix[i]) {
                matches = false;
                break;
            }
        }
        if (!matches) {
            continue;
        }
        double cond = 1.0;
        for (std::size_t t = prefix.size(); t < s.size(); ++t) {
            const Vector dist =
                next_step_dist(gen, std::span<const ItemId>(s.data(), t));
            cond *= dist[static_cast<std::size_t>(s[t])];
        }
        total += cond * (energy(e, s) + lambda * log_prob(gen, s));
    }
    return total;
}

}  // namespace

TEST_CASE("hinge clamps at zero and rejects non-finite input") {
    CHECK(hinge(1.0, 0.3) == doctest::Approx(0.7).epsilon(1e-15));
    CHECK(hinge(1.0, 1.5) == 0.0);
    CHECK(hinge(1.0, 1.0) == 0.0);  // the margin boundary sits on the saturated side
    CHECK(hinge(-2.0, -3.5) == doctest::Approx(1.5).epsilon(1e-15));
    CHECK_THROWS_AS(hinge(std::numeric_limits<double>::quiet_NaN(), 0.0),
                    std::invalid_argument);
    CHECK_THROWS_AS(hinge(0.0, std::numeric_limits<double>::infinity()),
                    std::invalid_argument);
}

TEST_CASE("discriminator loss equals its hand-computed value") {
    const EnergyModel e = random_energy(2, 7);
    const std::vector<Sequence> real{{0, 1}, {1, 1}};
    const std::vector<Sequence> fake{{0, 0}, {1, 0}};
    const double margin = 0.5;

    double expected = 0.0;
    for (const Sequence& s : real) {
        expected += testing::linear_energy_by_hand(std::get<LinearEnergy>(e), s) / 2.0;
    }
    for (const Sequence& s : fake) {
        const double ef = testing::linear_energy_by_hand(std::get<LinearEnergy>(e), s);
        expected += std::max(margin - ef, 0.0) / 2.0;
    }
    CHECK(discriminator_loss(e, real, fake, margin) ==
          doctest::Approx(expected).epsilon(1e-14));
    CHECK_THROWS_AS(discriminator_loss(e, {}, fake, margin), std::invalid_argument);
    CHECK_THROWS_AS(discriminator_loss(e, real, {}, margin), std::invalid_argument);
}

TEST_CASE("discriminator gradient matches finite differences away from the kink") {
    const int vocab = 3;
    const std::vector<Sequence> real{{0, 1, 2}, {2, 2, 0}, {1, 0, 1}};
    const std::vector<Sequence> fake{{1, 1, 1}, {0, 2, 2}, {2, 0, 0}};
    for (std::uint64_t seed : {3ULL, 4ULL, 5ULL}) {
        const EnergyModel e = random_energy(vocab, seed);
        // A margin above every fake energy keeps the hinge strictly active, so
        // the objective is smooth at this point. Coordinates whose real and
        // fake counts coincide have an exactly zero gradient, so compare
        // absolutely: differencing noise swamps any relative measure there.
        const double margin = 50.0;
        const Vector grad = discriminator_grad(e, real, fake, margin);
        const auto objective = [&](std::span<const double> params) {
            EnergyModel copy = make_linear_energy(vocab);
            set_params(copy, params);
            return discriminator_loss(copy, real, fake, margin);
        };
        const Vector numeric = finite_diff_grad(objective, param_vector(e), 1e-6);
        CHECK(testing::max_abs_diff(grad, numeric) < 1e-6);
    }
}

TEST_CASE("fakes at or above the margin contribute exactly zero") {
    const EnergyModel e = random_energy(2, 11);
    const std::vector<Sequence> real{{0, 1}, {1, 0}};
    const std::vector<Sequence> fake{{0, 0}, {1, 1}};
    // Any margin at or below the minimum fake energy saturates the whole batch.
    double min_fake = std::numeric_limits<double>::infinity();
    for (const Sequence& s : fake) {
        min_fake = std::min(min_fake, energy(e, s));
    }
    const Vector grad = discriminator_grad(e, real, fake, min_fake - 1.0);
    const Vector real_mean = batch_feature_mean(real, 2);
    CHECK(testing::max_abs_diff(grad, real_mean) == 0.0);
}

TEST_CASE("identical real and fake batches below the margin cancel bitwise") {
    const EnergyModel e = random_energy(3, 13);
    const std::vector<Sequence> batch{{0, 1, 2}, {2, 0, 1}, {1, 1, 1}};
    const Vector grad = discriminator_grad(e, batch, batch, 1e6);
    for (double g : grad) {
        CHECK(g == 0.0);
    }
}

TEST_CASE("a complete prefix makes the Q estimate exact and draw-free") {
    const GeneratorModel gen = random_generator(3, 17);
    const EnergyModel e = random_energy(3, 18);
    const Sequence full{2, 0, 1};
    Rng used(99);
    Rng untouched(99);
    const QEstimate q = estimate_Q(gen, e, full, 3, 16, 0.7, used);
    CHECK(q.n_rollouts == 0);
    CHECK(q.value ==
          doctest::Approx(energy(e, full) + 0.7 * log_prob(gen, full)).epsilon(1e-14));
    CHECK(used.next_u64() == untouched.next_u64());
}

TEST_CASE("Q estimate rejects malformed prefixes") {
    const GeneratorModel gen = random_generator(2, 19);
    const EnergyModel e = random_energy(2, 20);
    Rng rng(1);
    CHECK_THROWS_AS(estimate_Q(gen, e, Sequence{}, 3, 4, 1.0, rng), std::invalid_argument);
    CHECK_THROWS_AS(estimate_Q(gen, e, Sequence{0, 1, 0, 1}, 3, 4, 1.0, rng),
                    std::invalid_argument);
    CHECK_THROWS_AS(estimate_Q(gen, e, Sequence{0}, 3, 0, 1.0, rng), std::invalid_argument);
}

TEST_CASE("rollout Q estimates are unbiased for the enumerated conditional") {
    const GeneratorModel gen = random_generator(2, 23);
    const EnergyModel e = random_energy(2, 24);
    const int horizon = 3;
    const double lambda = 1.0;
    const Sequence prefix{1};
    const double exact = enumerated_Q(gen, e, prefix, horizon, lambda);

    Rng rng(1234);
    testing::MeanAccumulator acc;
    for (int i = 0; i < 10000; ++i) {
        const QEstimate q = estimate_Q(gen, e, prefix, horizon, 4, lambda, rng);
        CHECK(q.n_rollouts == 4);
        acc.add(q.value);
    }
    const double se = acc.standard_error();
    REQUIRE(se > 0.0);
    CHECK(std::abs(acc.mean() - exact) <= 3.0 * se);
}

TEST_CASE("the score-function generator gradient is unbiased") {
    const GeneratorModel gen = random_generator(2, 29, 0.8);
    const EnergyModel e = random_energy(2, 30, 0.8);
    GanConfig config;
    config.horizon = 2;
    config.batch_size = 4;
    config.n_rollouts = 2;
    config.lambda_entropy = 0.7;

    const Vector exact = enumerated_generator_grad(gen, e, 2, 0.7);

    Rng rng(777);
    testing::VectorMeanAccumulator acc(param_count(gen));
    for (int i = 0; i < 6000; ++i) {
        acc.add(generator_grad(gen, e, config, rng));
    }
    const Vector mean = acc.mean();
    const Vector se = acc.standard_error();
    for (std::size_t j = 0; j < exact.size(); ++j) {
        REQUIRE(se[j] > 0.0);
        CHECK(std::abs(mean[j] - exact[j]) <= 3.0 * se[j]);
    }
}

TEST_CASE("the running-mean baseline leaves the gradient expectation unchanged") {
    const GeneratorModel gen = random_generator(2, 31, 0.8);
    const EnergyModel e = random_energy(2, 32, 0.8);
    GanConfig config;
    config.horizon = 2;
    config.batch_size = 4;
    config.n_rollouts = 2;
    config.lambda_entropy = 1.0;
    config.baseline_enabled = true;
    config.baseline_window = 50;

    const Vector exact = enumerated_generator_grad(gen, e, 2, 1.0);

    Rng rng(555);
    testing::VectorMeanAccumulator acc(param_count(gen));
    for (int i = 0; i < 6000; ++i) {
        acc.add(generator_grad(gen, e, config, rng));
    }
    const Vector mean = acc.mean();
    const Vector se = acc.standard_error();
    for (std::size_t j = 0; j < exact.size(); ++j) {
        REQUIRE(se[j] > 0.0);
        CHECK(std::abs(mean[j] - exact[j]) <= 3.0 * se[j]);
    }
}

TEST_CASE("the generator gradient is bitwise identical across thread counts") {
    const GeneratorModel gen = random_generator(3, 37);
    const EnergyModel e = random_energy(3, 38);
    GanConfig base;
    base.horizon = 4;
    base.batch_size = 8;
    base.n_rollouts = 4;

    std::vector<Vector> grads;
    std::vector<GenBatchStats> stats;
    for (int threads : {1, 2, 4}) {
        GanConfig config = base;
        config.n_threads = threads;
        Rng rng(4242);
        GenBatchStats s;
        grads.push_back(generator_grad(gen, e, config, rng, &s));
        stats.push_back(s);
    }
    for (std::size_t i = 1; i < grads.size(); ++i) {
        CHECK(grads[i] == grads[0]);
        CHECK(stats[i].mean_energy == stats[0].mean_energy);
        CHECK(stats[i].mean_log_prob == stats[0].mean_log_prob);
        CHECK(stats[i].mean_objective == stats[0].mean_objective);
        CHECK(stats[i].feature_mean == stats[0].feature_mean);
    }
}

TEST_CASE("generator batch statistics are consistent with each other") {
    const GeneratorModel gen = random_generator(3, 41);
    const EnergyModel e = random_energy(3, 42);
    GanConfig config;
    config.horizon = 3;
    config.batch_size = 16;
    config.n_rollouts = 2;
    config.lambda_entropy = 0.5;
    Rng rng(9);
    GenBatchStats stats;
    generator_grad(gen, e, config, rng, &stats);
    CHECK(stats.mean_objective ==
          doctest::Approx(stats.mean_energy + 0.5 * stats.mean_log_prob).epsilon(1e-12));
    CHECK(stats.feature_mean.size() == feature_dim(3));
    // The linear energy of the mean feature vector is the mean energy.
    CHECK(dot(param_vector(e), stats.feature_mean) ==
          doctest::Approx(stats.mean_energy).epsilon(1e-12));
}

TEST_CASE("MLE pretraining never increases the demo NLL") {
    const MarkovOracle oracle = make_markov_oracle(3, 51, 1.0);
    const DemoSet demos = sample_demos(oracle, 100, 4, 52);
    const GeneratorModel start = make_tabular_generator(3, 1);
    const PretrainResult result = pretrain_mle(start, demos, 8, 0.5);
    REQUIRE(result.nll_per_epoch.size() == 8);
    for (std::size_t i = 1; i < result.nll_per_epoch.size(); ++i) {
        CHECK(result.nll_per_epoch[i] <= result.nll_per_epoch[i - 1] + 1e-12);
    }
    // Starting from uniform, the first epoch already strictly improves.
    const double uniform_nll = 4.0 * std::log(3.0);
    CHECK(result.nll_per_epoch.back() < uniform_nll - 1e-3);
}

TEST_CASE("a zero pretraining rate returns the model bitwise unchanged") {
    const MarkovOracle oracle = make_markov_oracle(2, 53, 1.0);
    const DemoSet demos = sample_demos(oracle, 20, 3, 54);
    const GeneratorModel start = random_generator(2, 55);
    const PretrainResult result = pretrain_mle(start, demos, 5, 0.0);
    CHECK(param_vector(result.model) == param_vector(start));
    CHECK_THROWS_AS(pretrain_mle(start, demos, -1, 0.5), std::invalid_argument);
    CHECK_THROWS_AS(pretrain_mle(start, demos, 5, -0.1), std::invalid_argument);
}

TEST_CASE("config validation names the offending field") {
    GanConfig config;
    config.margin = std::numeric_limits<double>::quiet_NaN();
    CHECK_THROWS_WITH_AS(config.validate(), "GanConfig: margin must be finite",
                         std::invalid_argument);
    config = GanConfig{};
    config.lambda_entropy = -1.0;
    CHECK_THROWS_WITH_AS(config.validate(), "GanConfig: lambda_entropy must be >= 0",
                         std::invalid_argument);
    config = GanConfig{};
    config.lr_g = -0.1;
    CHECK_THROWS_WITH_AS(config.validate(), "GanConfig: lr_g must be >= 0",
                         std::invalid_argument);
    config = GanConfig{};
    config.batch_size = 0;
    CHECK_THROWS_WITH_AS(config.validate(), "GanConfig: batch_size must be >= 1",
                         std::invalid_argument);
    config = GanConfig{};
    config.n_rollouts = 0;
    CHECK_THROWS_WITH_AS(config.validate(), "GanConfig: n_rollouts must be >= 1",
                         std::invalid_argument);
    config = GanConfig{};
    config.horizon = 0;
    CHECK_THROWS_WITH_AS(config.validate(), "GanConfig: horizon must be >= 1",
                         std::invalid_argument);
    config = GanConfig{};
    config.n_threads = 0;
    CHECK_THROWS_WITH_AS(config.validate(), "GanConfig: n_threads must be >= 1",
                         std::invalid_argument);
    config = GanConfig{};
    config.validate();  // defaults are valid
}

TEST_CASE("the training loop records one well-formed metric row per round") {
    const MarkovOracle oracle = make_markov_oracle(3, 61, 1.0);
    const DemoSet demos = sample_demos(oracle, 64, 4, 62);
    GanConfig config;
    config.horizon = 4;
    config.epochs = 3;
    config.batch_size = 8;
    config.n_rollouts = 4;
    config.seed = 7;
    const TrainState state = train(make_tabular_generator(3, 1), make_linear_energy(3), demos,
                                   config, &oracle);
    CHECK(state.iteration == 3);
    REQUIRE(state.history.size() == 3);
    for (std::size_t i = 0; i < state.history.size(); ++i) {
        const MetricRow& row = state.history[i];
        CHECK(row.iteration == static_cast<int>(i) + 1);
        CHECK(std::isfinite(row.d_loss));
        CHECK(std::isfinite(row.g_objective));
        CHECK(std::isfinite(row.mean_fake_energy));
        CHECK(std::isfinite(row.mean_real_energy));
        CHECK(row.entropy_estimate >= 0.0);  // -log p of a discrete sample
        REQUIRE(row.oracle_nll.has_value());
        CHECK(std::isfinite(*row.oracle_nll));
        REQUIRE(row.feature_gap.has_value());
        CHECK(*row.feature_gap >= 0.0);
    }
}

TEST_CASE("training twice with one seed reproduces every metric bitwise") {
    const MarkovOracle oracle = make_markov_oracle(3, 71, 1.0);
    const DemoSet demos = sample_demos(oracle, 32, 3, 72);
    GanConfig config;
    config.horizon = 3;
    config.epochs = 4;
    config.batch_size = 8;
    config.n_rollouts = 2;
    config.pretrain_epochs = 2;
    config.seed = 99;

    const auto run = [&] {
        return train(make_tabular_generator(3, 1), make_linear_energy(3), demos, config,
                     &oracle);
    };
    const TrainState a = run();
    const TrainState b = run();
    CHECK(param_vector(a.gen) == param_vector(b.gen));
    CHECK(param_vector(a.energy) == param_vector(b.energy));
    REQUIRE(a.history.size() == b.history.size());
    for (std::size_t i = 0; i < a.history.size(); ++i) {
        CHECK(a.history[i].d_loss == b.history[i].d_loss);
        CHECK(a.history[i].g_objective == b.history[i].g_objective);
        CHECK(a.history[i].mean_fake_energy == b.history[i].mean_fake_energy);
        CHECK(a.history[i].mean_real_energy == b.history[i].mean_real_energy);
        CHECK(a.history[i].entropy_estimate == b.history[i].entropy_estimate);
        CHECK(a.history[i].oracle_nll == b.history[i].oracle_nll);
        CHECK(a.history[i].feature_gap == b.history[i].feature_gap);
    }
}

TEST_CASE("training is bitwise identical across thread counts") {
    const MarkovOracle oracle = make_markov_oracle(2, 81, 1.0);
    const DemoSet demos = sample_demos(oracle, 24, 3, 82);
    GanConfig config;
    config.horizon = 3;
    config.epochs = 3;
    config.batch_size = 8;
    config.n_rollouts = 2;
    config.seed = 5;

    GanConfig threaded = config;
    threaded.n_threads = 3;
    const TrainState a =
        train(make_tabular_generator(2, 1), make_linear_energy(2), demos, config);
    const TrainState b =
        train(make_tabular_generator(2, 1), make_linear_energy(2), demos, threaded);
    CHECK(param_vector(a.gen) == param_vector(b.gen));
    CHECK(param_vector(a.energy) == param_vector(b.energy));
    REQUIRE(a.history.size() == b.history.size());
    for (std::size_t i = 0; i < a.history.size(); ++i) {
        CHECK(a.history[i].g_objective == b.history[i].g_objective);
        CHECK(a.history[i].d_loss == b.history[i].d_loss);
    }
}

TEST_CASE("early stopping halts once the feature gap stops improving") {
    const MarkovOracle oracle = make_markov_oracle(2, 91, 1.0);
    const DemoSet demos = sample_demos(oracle, 32, 3, 92);
    GanConfig config;
    config.horizon = 3;
    config.epochs = 60;
    config.batch_size = 8;
    config.n_rollouts = 2;
    config.seed = 3;
    config.early_stop_enabled = true;
    config.early_stop_patience = 3;
    config.early_stop_min_improvement = 1e9;  // nothing can clear this bar

    const TrainState state =
        train(make_tabular_generator(2, 1), make_linear_energy(2), demos, config);
    CHECK(state.history.size() < 60);
    CHECK(state.history.size() >= 3);
    CHECK(state.iteration == static_cast<int>(state.history.size()));
}

TEST_CASE("training validates its inputs") {
    const MarkovOracle oracle = make_markov_oracle(2, 95, 1.0);
    const DemoSet demos = sample_demos(oracle, 8, 3, 96);
    GanConfig config;
    config.horizon = 3;
    config.epochs = 1;

    CHECK_THROWS_AS(
        train(make_tabular_generator(3, 1), make_linear_energy(2), demos, config),
        std::invalid_argument);
    CHECK_THROWS_AS(
        train(make_tabular_generator(2, 1), make_linear_energy(3), demos, config),
        std::invalid_argument);

    GanConfig bad_horizon = config;
    bad_horizon.horizon = 5;
    CHECK_THROWS_AS(
        train(make_tabular_generator(2, 1), make_linear_energy(2), demos, bad_horizon),
        std::invalid_argument);

    // An oracle whose vocabulary differs from the demos' is rejected; the
    // caller must remap it first. The oracle's tokens are "0" and "1", so a
    // reversed vocabulary exercises the remapping path.
    const Vocabulary reversed({"1", "0"});
    const DemoSet relabeled = remap_demos(demos, reversed);
    CHECK_THROWS_AS(
        train(make_tabular_generator(2, 1), make_linear_energy(2), relabeled, config, &oracle),
        std::invalid_argument);
    const MarkovOracle remapped = remap_oracle(oracle, reversed);
    const TrainState ok = train(make_tabular_generator(2, 1), make_linear_energy(2), relabeled,
                                config, &remapped);
    CHECK(ok.history.size() == 1);
}
