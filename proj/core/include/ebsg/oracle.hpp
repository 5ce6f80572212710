#pragma once

#include <cstdint>

#include "ebsg/demos.hpp"
#include "ebsg/generator.hpp"
#include "ebsg/numerics.hpp"
#include "ebsg/vocabulary.hpp"

namespace ebsg {

/// Ground-truth first-order Markov chain used to manufacture synthetic
/// demonstrations and to score generators against a known data distribution.
/// The initial distribution and every transition row are strictly positive
/// (floored at 1e-6 and renormalized) so log-likelihoods are always finite.
struct MarkovOracle {
    Vocabulary vocab;
    Vector initial;      ///< V, sums to 1 within 1e-12
    Matrix transition;   ///< V x V, each row sums to 1 within 1e-12
    std::uint64_t seed = 0;  ///< seed it was created from, for provenance
};

/// Oracle with rows drawn from a symmetric Dirichlet with the given
/// concentration (gamma draws normalized per row), deterministic in the seed.
/// Item tokens are decimal ids. Throws on V < 2 or concentration <= 0.
MarkovOracle make_markov_oracle(int vocab_size, std::uint64_t seed, double concentration);

/// n i.i.d. length-T sequences from the oracle, deterministic in the seed.
DemoSet sample_demos(const MarkovOracle& oracle, int n, int horizon, std::uint64_t seed);

/// Exact log-probability of a sequence under the oracle chain.
double oracle_log_prob(const MarkovOracle& oracle, std::span<const ItemId> seq);

/// The oracle as a stationary order-1 tabular generator (logits are log
/// probabilities), so chain computations can reuse the generator machinery.
TabularGenerator as_tabular_policy(const MarkovOracle& oracle);

/// Oracle with its items permuted to match a target vocabulary containing
/// the same tokens. Throws std::out_of_range if a token is missing.
MarkovOracle remap_oracle(const MarkovOracle& oracle, const Vocabulary& target);

}  // namespace ebsg
