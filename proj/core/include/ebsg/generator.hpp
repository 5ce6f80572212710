#pragma once

#include <cstdint>
#include <variant>
#include <vector>

#include "ebsg/numerics.hpp"
#include "ebsg/vocabulary.hpp"

namespace ebsg {

/// Autoregressive categorical model over item sequences with order-k context
/// logit tables.
///
/// Stationary mode holds one table per context length 0..order; position t
/// reads table min(t, order), so the next-step distribution depends only on
/// the last min(t, order) items. Non-stationary mode holds one table per
/// position 0..horizon-1 (each with context length min(t, order)), which is
/// what the exact soft-DP policy needs: the entropy-regularized optimum is
/// position-dependent even when the costs are not.
///
/// A context (a_1..a_j), oldest first, indexes row a_1*V^(j-1) + ... + a_j of
/// its table; each row is a logit vector over the vocabulary. The flattened
/// parameter vector is the tables concatenated in order, each row-major.
struct TabularGenerator {
    int vocab_size = 0;
    int order = 1;
    bool stationary = true;
    int horizon = 0;  ///< number of per-position tables; 0 in stationary mode
    std::vector<Matrix> tables;

    bool operator==(const TabularGenerator&) const = default;
};

/// Single-layer tanh recurrent generator with a learned initial hidden state
/// and a learned begin-of-sequence input for the empty prefix.
///
/// Step t (0-based) consumes x_t = bos when t == 0 else embed[s_{t-1}], then
/// h_t = tanh(w_xh x_t + w_hh h_{t-1} + b_h) with h_{-1} = h0, and the
/// next-step distribution is softmax(w_out h_t + b_out). The flattened
/// parameter order is embed, bos, w_xh, w_hh, b_h, h0, w_out, b_out.
struct RecurrentGenerator {
    int vocab_size = 0;
    int embed_dim = 0;
    int hidden_dim = 0;
    Matrix embed;  ///< V x E
    Vector bos;    ///< E
    Matrix w_xh;   ///< H x E
    Matrix w_hh;   ///< H x H
    Vector b_h;    ///< H
    Vector h0;     ///< H
    Matrix w_out;  ///< V x H
    Vector b_out;  ///< V

    bool operator==(const RecurrentGenerator&) const = default;
};

using GeneratorModel = std::variant<TabularGenerator, RecurrentGenerator>;

/// Zero-logit (uniform) tabular generator. Stationary unless a horizon > 0 is
/// given, in which case one table per position is allocated. Throws on
/// vocab_size < 2, order < 1, or a table that would exceed 10^6 rows.
TabularGenerator make_tabular_generator(int vocab_size, int order = 1, int horizon = 0);

/// Recurrent generator with weights drawn i.i.d. uniform on [-0.1, 0.1],
/// deterministic in the seed. Throws on vocab_size < 2 or dims < 1.
RecurrentGenerator make_recurrent_generator(int vocab_size, int embed_dim, int hidden_dim,
                                            std::uint64_t seed);

struct SampleResult {
    Sequence items;
    Vector step_log_probs;  ///< log p(s_t | s_1..s_{t-1}) per step; sums to log_prob
};

/// Distribution over the next item given a prefix. Deterministic in
/// (model, prefix); throws on out-of-vocabulary ids or, for non-stationary
/// tabular models, a prefix at or past the horizon.
Vector next_step_dist(const GeneratorModel& gen, std::span<const ItemId> prefix);

/// Draws a length-T sequence one item at a time from next_step_dist; consumes
/// exactly T categorical draws.
SampleResult sample_sequence(const GeneratorModel& gen, int horizon, Rng& rng);

/// Sum of stepwise log-probabilities of the full sequence; always <= 0.
double log_prob(const GeneratorModel& gen, std::span<const ItemId> seq);

/// Exact analytic gradient of log_prob with respect to the flattened
/// parameter vector (backpropagation through time for the recurrent kind).
Vector grad_log_prob(const GeneratorModel& gen, std::span<const ItemId> seq);

/// Gradient of sum_t weights[t] * log p(s_t | s_1..s_{t-1}) in one pass.
/// grad_log_prob is the all-ones special case; the trainer uses per-step
/// return weights here so each sequence costs a single backward pass.
Vector grad_log_prob_weighted(const GeneratorModel& gen, std::span<const ItemId> seq,
                              std::span<const double> weights);

std::size_t param_count(const GeneratorModel& gen);
Vector param_vector(const GeneratorModel& gen);
void set_params(GeneratorModel& gen, std::span<const double> params);

/// params(gen) += scale * delta, in place.
void add_scaled_params(GeneratorModel& gen, std::span<const double> delta, double scale);

int vocab_size(const GeneratorModel& gen);

}  // namespace ebsg
