#pragma once

#include <cstdint>
#include <vector>

#include "ebsg/demos.hpp"
#include "ebsg/energy.hpp"
#include "ebsg/eval.hpp"
#include "ebsg/generator.hpp"
#include "ebsg/oracle.hpp"

namespace ebsg {

/// Training-loop knobs. The margin applies only to the discriminator
/// objective; the generator always minimizes the raw
/// E[energy + lambda_entropy * log p] (its entropy regularizer carries no
/// margin). Zero learning rates are allowed and skip the corresponding
/// parameter update entirely, leaving the model bitwise unchanged.
struct GanConfig {
    double margin = 1.0;
    double lambda_entropy = 1.0;  ///< weight on the log p term (1 = plain negative entropy)
    double lr_g = 0.02;
    double lr_d = 0.05;
    int batch_size = 32;
    int n_rollouts = 16;   ///< rollouts per prefix for the Q estimate
    int d_steps = 1;       ///< discriminator updates per round
    int g_steps = 1;       ///< generator updates per round
    int epochs = 100;      ///< rounds; one metric row each
    bool baseline_enabled = false;
    int baseline_window = 100;  ///< running-mean window, in Q estimates
    int pretrain_epochs = 0;
    double pretrain_lr = 0.5;
    int horizon = 8;  ///< sequence length T
    std::uint64_t seed = 1;
    int n_threads = 1;  ///< worker threads for the generator batch; 1 = serial
    bool early_stop_enabled = false;
    double early_stop_min_improvement = 1e-3;  ///< required feature-gap improvement
    int early_stop_patience = 20;              ///< rounds without improvement before stopping

    /// Throws std::invalid_argument naming the first offending field.
    void validate() const;
};

/// max(margin - energy, 0). The subgradient used at energy == margin is 0
/// (the saturated side), so such fakes contribute nothing to updates.
double hinge(double margin, double energy_value);

/// Value of the discriminator objective:
/// mean_real energy + mean_fake hinge(margin, energy).
double discriminator_loss(const EnergyModel& e, const std::vector<Sequence>& real_batch,
                          const std::vector<Sequence>& fake_batch, double margin);

/// Exact gradient of discriminator_loss with respect to the energy
/// parameters. Fake sequences at or above the margin contribute exactly
/// zero; identical real and fake batches below the margin cancel exactly
/// (both sides are accumulated in the same order before one subtraction).
Vector discriminator_grad(const EnergyModel& e, const std::vector<Sequence>& real_batch,
                          const std::vector<Sequence>& fake_batch, double margin);

struct QEstimate {
    double value = 0.0;
    int n_rollouts = 0;  ///< 0 when the prefix is complete and the value is exact
};

/// Estimated conditional expectation of energy(S) + lambda * log p(S) given
/// the prefix, where log p is the full-sequence log-probability. A complete
/// prefix (length == horizon) is evaluated exactly with no sampling; shorter
/// prefixes average n_rollouts completions drawn from the generator.
QEstimate estimate_Q(const GeneratorModel& gen, const EnergyModel& e,
                     std::span<const ItemId> prefix, int horizon, int n_rollouts,
                     double lambda_entropy, Rng& rng);

/// Batch statistics from one generator gradient estimate, for metric rows.
struct GenBatchStats {
    double mean_energy = 0.0;     ///< mean fake energy
    double mean_log_prob = 0.0;   ///< mean log p of the fake batch
    double mean_objective = 0.0;  ///< mean (energy + lambda * log p)
    Vector feature_mean;          ///< empirical feature mean of the fake batch
};

/// Score-function estimate of the gradient of E_p[energy + lambda * log p]:
/// samples config.batch_size sequences and credits each step's score with
/// the rollout Q estimate of its prefix (minus the optional running-mean
/// baseline, which leaves the expectation unchanged because the conditional
/// expected score is zero). Consumes exactly batch_size child streams forked
/// from rng, so the result is identical for any n_threads.
Vector generator_grad(const GeneratorModel& gen, const EnergyModel& e, const GanConfig& config,
                      Rng& rng, GenBatchStats* stats = nullptr);

struct PretrainResult {
    GeneratorModel model;
    std::vector<double> nll_per_epoch;  ///< mean demo NLL after each epoch
};

/// Full-batch maximum-likelihood ascent on the demos. The step is halved
/// whenever it would increase the demo NLL, so the per-epoch NLL sequence is
/// non-increasing. lr == 0 returns the model bitwise unchanged.
PretrainResult pretrain_mle(const GeneratorModel& gen, const DemoSet& demos, int epochs,
                            double lr);

struct TrainState {
    GeneratorModel gen;
    EnergyModel energy;
    int iteration = 0;  ///< completed rounds
    std::vector<MetricRow> history;
};

/// The full adversarial loop: optional MLE pretraining, then per round
/// d_steps hinge discriminator updates and g_steps score-function generator
/// updates, with one metric row per round. mean_real_energy and d_loss come
/// from the round's last discriminator batch; the fake-side metrics and
/// feature gap come from the last generator batch. When an oracle is passed
/// it must share the demo vocabulary; the forward oracle NLL is then exact
/// for order-1 tabular generators and a fixed 512-sample Monte-Carlo
/// estimate otherwise. Throws TrainDivergedError naming the first non-finite
/// metric.
TrainState train(GeneratorModel gen, EnergyModel e, const DemoSet& demos, const GanConfig& config,
                 const MarkovOracle* oracle = nullptr);

}  // namespace ebsg
