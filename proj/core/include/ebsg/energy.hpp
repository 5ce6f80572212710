#pragma once

#include <cstdint>
#include <variant>

#include "ebsg/numerics.hpp"
#include "ebsg/vocabulary.hpp"

namespace ebsg {

/// Linear transition-cost energy: energy(S) = init_cost[s_1] +
/// sum_{t>=2} trans_cost(s_{t-1}, s_t), accumulated in sequence order.
///
/// The flattened parameter vector is init_cost followed by trans_cost
/// row-major, which is exactly the layout of feature_counts, so the energy
/// equals the parameter/feature dot product (up to last-ulp rounding from the
/// different accumulation order; tests assert 1e-12).
struct LinearEnergy {
    int vocab_size = 0;
    Vector init_cost;   ///< V
    Matrix trans_cost;  ///< V x V; (a, b) is the cost of the transition a -> b

    bool operator==(const LinearEnergy&) const = default;
};

/// Recurrent energy: a tanh cell consumes the items in order (no
/// begin-of-sequence input; the first input is the first item's embedding)
/// and a scalar affine readout of the final hidden state is the energy.
/// Flattened parameter order: embed, w_xh, w_hh, b_h, h0, w_out, b_out.
struct RecurrentEnergy {
    int vocab_size = 0;
    int embed_dim = 0;
    int hidden_dim = 0;
    Matrix embed;   ///< V x E
    Matrix w_xh;    ///< H x E
    Matrix w_hh;    ///< H x H
    Vector b_h;     ///< H
    Vector h0;      ///< H
    Vector w_out;   ///< H
    double b_out = 0.0;

    bool operator==(const RecurrentEnergy&) const = default;
};

using EnergyModel = std::variant<LinearEnergy, RecurrentEnergy>;

/// All-zero linear energy. Throws on vocab_size < 2.
LinearEnergy make_linear_energy(int vocab_size);

/// Recurrent energy with weights i.i.d. uniform on [-0.1, 0.1], seeded.
RecurrentEnergy make_recurrent_energy(int vocab_size, int embed_dim, int hidden_dim,
                                      std::uint64_t seed);

/// Scalar energy of a sequence (the discriminator score; low = realistic).
double energy(const EnergyModel& e, std::span<const ItemId> seq);

/// Exact analytic gradient of energy with respect to the flattened
/// parameters. For the linear kind this is exactly feature_counts(seq).
Vector grad_energy(const EnergyModel& e, std::span<const ItemId> seq);

/// State-action occurrence features: entry s_1 of the first V counts the
/// initial item, and entry V + a*V + b counts ordered transitions a -> b.
/// Entries are non-negative integers summing to the sequence length.
Vector feature_counts(std::span<const ItemId> seq, int vocab_size);

/// V + V^2, the length of feature_counts and of linear-energy parameters.
std::size_t feature_dim(int vocab_size);

std::size_t param_count(const EnergyModel& e);
Vector param_vector(const EnergyModel& e);
void set_params(EnergyModel& e, std::span<const double> params);
void add_scaled_params(EnergyModel& e, std::span<const double> delta, double scale);
int vocab_size(const EnergyModel& e);

}  // namespace ebsg
