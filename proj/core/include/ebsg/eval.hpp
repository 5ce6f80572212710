#pragma once

#include <cstdint>
#include <optional>
#include <utility>
#include <vector>

#include "ebsg/demos.hpp"
#include "ebsg/generator.hpp"
#include "ebsg/oracle.hpp"

namespace ebsg {

/// One row of the training metrics table. All log quantities are in nats.
struct MetricRow {
    int iteration = 0;
    double d_loss = 0.0;             ///< mean real energy + mean fake hinge
    double g_objective = 0.0;        ///< mean fake (energy + lambda * log p)
    double mean_fake_energy = 0.0;
    double mean_real_energy = 0.0;
    double entropy_estimate = 0.0;   ///< mean fake -log p, a sample entropy estimate
    std::optional<double> oracle_nll;   ///< forward oracle NLL, when an oracle is attached
    std::optional<double> feature_gap;  ///< L-inf fake-batch vs demo feature gap
};

enum class NllDirection {
    forward,  ///< E_{S ~ oracle}[-log p_G(S)]
    reverse,  ///< E_{S ~ p_G}[-log p_oracle(S)]
};

enum class NllMode {
    exact,  ///< chain computation; requires an order-1 tabular generator
    mc,     ///< Monte-Carlo with n_samples sequences
};

/// Oracle negative log-likelihood in nats. Exact mode ignores n_samples and
/// seed and throws std::invalid_argument for generators it cannot integrate
/// over (anything but order-1 tabular). The generator and oracle must share
/// the vocabulary size.
double oracle_nll(const GeneratorModel& gen, const MarkovOracle& oracle, int horizon,
                  NllDirection direction, NllMode mode, int n_samples = 0,
                  std::uint64_t seed = 0);

/// L-inf distance between two feature-mean vectors; throws on a dimension
/// mismatch.
double feature_gap(std::span<const double> mean_a, std::span<const double> mean_b);

/// Exact generator feature expectation (order-1 tabular only) against the
/// demo feature mean.
double feature_gap(const TabularGenerator& gen, const DemoSet& demos);

/// The k most probable next items after the prefix, highest first, ties
/// broken by ascending item id. Throws on k outside [1, V].
std::vector<std::pair<ItemId, double>> recommend_topk(const GeneratorModel& gen,
                                                      std::span<const ItemId> prefix, int k);

/// Fraction of (prefix, next item) pairs in the held-out set whose true next
/// item is in the top-k recommendation. Every position from the second item
/// on contributes one pair; the empty-prefix prediction is excluded (it is
/// covered by NLL instead). Caveat: this scores one-step-ahead accuracy only
/// and does not capture cascading error over generated rollouts.
double hit_at_k(const GeneratorModel& gen, const DemoSet& heldout, int k);

}  // namespace ebsg
