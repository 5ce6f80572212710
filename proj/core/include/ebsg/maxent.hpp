#pragma once

#include <variant>
#include <vector>

#include "ebsg/demos.hpp"
#include "ebsg/energy.hpp"
#include "ebsg/generator.hpp"
#include "ebsg/numerics.hpp"
#include "ebsg/vocabulary.hpp"

namespace ebsg {

/// The Boltzmann distribution P(S) = exp(-energy(S)) / Z materialized over
/// every length-T sequence, in lexicographic sequence order.
struct EnumeratedDistribution {
    int vocab_size = 0;
    int horizon = 0;
    std::vector<Sequence> sequences;
    Vector probabilities;
    double log_z = 0.0;
};

/// The same distribution in chain form: backward soft values
/// W[t][a] = lse_b(-cost(a,b) + W[t+1][b]) (W[T-1] = 0), log Z =
/// lse_a(-init_cost(a) + W[0][a]), and per-position conditionals stored as a
/// non-stationary order-1 tabular policy whose logits are exact
/// log-conditionals. The policy's sequence distribution equals P.
struct DpDistribution {
    int vocab_size = 0;
    int horizon = 0;
    double log_z = 0.0;
    std::vector<Vector> soft_values;  ///< horizon entries of length V
    TabularGenerator policy;
};

using ExactDistribution = std::variant<EnumeratedDistribution, DpDistribution>;

double log_z(const ExactDistribution& dist);
int distribution_horizon(const ExactDistribution& dist);

/// Log-probability of one sequence. The enumerated form looks the sequence
/// up; the dp form multiplies stored conditionals, so the two are
/// independent computations that tests can cross-check.
double sequence_log_prob(const ExactDistribution& dist, std::span<const ItemId> seq);

/// All V^T sequences of the given length in lexicographic order. Throws
/// EnumerationLimitError past 10^6 sequences.
std::vector<Sequence> enumerate_all_sequences(int vocab_size, int horizon);

/// Materializes P by brute force (the oracle the DP is tested against).
EnumeratedDistribution enumerate_distribution(const LinearEnergy& cost, int horizon);

struct PartitionResult {
    DpDistribution dist;
    Vector feature_expectation;  ///< E_P[f], dimension V + V^2
};

/// log Z, conditionals, and exact feature expectations in O(T V^2).
PartitionResult partition_dp(const LinearEnergy& cost, int horizon);

/// The exact minimizer of E_q[cost] - H(q) over order-1 policies: a
/// non-stationary tabular(1) generator with q*(S) = P(S) for every S and
/// achieved objective equal to -log Z.
TabularGenerator soft_dp_policy(const LinearEnergy& cost, int horizon);

/// Per-position state marginals of an order-1 tabular policy (rows are
/// positions 0..horizon-1). Throws on order != 1 or a non-stationary policy
/// whose horizon is shorter than requested.
Matrix state_marginals(const TabularGenerator& q, int horizon);

/// Exact E_q[f] for an order-1 tabular policy via the forward chain pass.
Vector expected_features(const TabularGenerator& q, int horizon);

/// E_{S~p}[-log q(S)] for two order-1 tabular policies, computed from p's
/// marginals and both conditionals (no sampling).
double chain_cross_entropy(const TabularGenerator& p, const TabularGenerator& q, int horizon);

/// Exact entropy of the induced sequence distribution.
double sequence_entropy(const TabularGenerator& q, int horizon);

/// Exact E_q[energy] = dot(cost parameters, expected_features(q)).
double expected_energy(const TabularGenerator& q, const LinearEnergy& cost, int horizon);

/// KL(q || P) >= 0, zero iff equal. Enumerated form: explicit sum of
/// q(S) log(q(S)/P(S)). Dp form: the variational identity
/// E_q[cost] - H(q) + log Z.
double kl_divergence(const TabularGenerator& q, const ExactDistribution& dist);

/// Gradient of the mean demo log-likelihood with respect to the cost
/// parameters: E_P[f] - E_demo[f]. Zero exactly when the model feature
/// expectation matches the demos. Computed with partition_dp.
Vector exact_ll_grad(const LinearEnergy& cost, const DemoSet& demos);
Vector exact_ll_grad(const LinearEnergy& cost, std::span<const double> demo_feature_mean,
                     int horizon);

/// Mean demo log-likelihood -c . mu_demo - log Z (nats per sequence).
double demo_log_likelihood(const LinearEnergy& cost, const DemoSet& demos);
double demo_log_likelihood(const LinearEnergy& cost, std::span<const double> demo_feature_mean,
                           int horizon);

struct IlConfig {
    int max_rounds = 2000;
    double step_size = 1.0;   ///< c-step size; halved while the step would lower the demo LL
    double tolerance = 1e-3;  ///< stop when the L-inf feature gap drops below this
};

struct IlRound {
    int round = 0;
    double feature_gap = 0.0;
    double demo_log_likelihood = 0.0;
    double step_size = 0.0;  ///< step accepted this round (0 on the final, stepless row)
};

struct TwoStepResult {
    LinearEnergy cost;
    TabularGenerator policy;  ///< exact q-step for the final cost
    std::vector<IlRound> history;
    bool converged = false;
};

/// Alternates the exact q-step (soft_dp_policy) with one ascent step on
/// -E_demo[cost] + E_q[cost]; since the q-step is exact, that ascent step is
/// exactly the demo log-likelihood gradient, and step halving keeps the
/// likelihood non-decreasing per round.
TwoStepResult two_step_solve(const DemoSet& demos, const IlConfig& config);

/// Infinite-data mode: the demo feature mean is given directly (e.g. exact
/// expectations of a known cost), removing sampling noise.
TwoStepResult two_step_solve(std::span<const double> demo_feature_mean, int vocab_size,
                             int horizon, const IlConfig& config);

}  // namespace ebsg
