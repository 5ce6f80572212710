#pragma once

// Brute-force reference implementations that the library is tested against.
// Everything here favors clarity over speed and deliberately avoids the
// library's own DP recursions and analytic gradients, so a shared bug cannot
// hide: sequence enumeration is recursive (the library's is an odometer),
// probabilities are chained through next_step_dist products (the library's
// log_prob accumulates logits), and expectations are explicit sums over the
// enumerated space.

#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "ebsg/energy.hpp"
#include "ebsg/generator.hpp"
#include "ebsg/numerics.hpp"
#include "ebsg/vocabulary.hpp"

namespace ebsg::testing {

inline void collect_sequences(int vocab_size, int horizon, Sequence& prefix,
                              std::vector<Sequence>& out) {
    if (static_cast<int>(prefix.size()) == horizon) {
        out.push_back(prefix);
        return;
    }
    for (ItemId item = 0; item < vocab_size; ++item) {
        prefix.push_back(item);
        collect_sequences(vocab_size, horizon, prefix, out);
        prefix.pop_back();
    }
}

/// All V^T sequences in lexicographic order, built recursively.
inline std::vector<Sequence> all_sequences(int vocab_size, int horizon) {
    std::vector<Sequence> out;
    Sequence prefix;
    collect_sequences(vocab_size, horizon, prefix, out);
    return out;
}

/// Probability of one sequence as a plain product of next-step distributions.
inline double chain_prob(const GeneratorModel& gen, const Sequence& seq) {
    double p = 1.0;
    for (std::size_t t = 0; t < seq.size(); ++t) {
        const Vector dist =
            next_step_dist(gen, std::span<const ItemId>(seq.data(), t));
        p *= dist[static_cast<std::size_t>(seq[t])];
    }
    return p;
}

/// Linear-chain energy recomputed by direct table walks.
inline double linear_energy_by_hand(const LinearEnergy& cost, const Sequence& seq) {
    double e = cost.init_cost[static_cast<std::size_t>(seq[0])];
    for (std::size_t t = 1; t < seq.size(); ++t) {
        e += cost.trans_cost(seq[t - 1], seq[t]);
    }
    return e;
}

/// Initial one-hot plus ordered transition counts, recomputed by hand.
inline Vector features_by_hand(const Sequence& seq, int vocab_size) {
    Vector f(static_cast<std::size_t>(vocab_size) +
                 static_cast<std::size_t>(vocab_size) * static_cast<std::size_t>(vocab_size),
             0.0);
    f[static_cast<std::size_t>(seq[0])] += 1.0;
    for (std::size_t t = 1; t < seq.size(); ++t) {
        f[static_cast<std::size_t>(vocab_size) +
          static_cast<std::size_t>(seq[t - 1]) * static_cast<std::size_t>(vocab_size) +
          static_cast<std::size_t>(seq[t])] += 1.0;
    }
    return f;
}

struct BoltzmannTable {
    std::vector<Sequence> sequences;
    Vector probabilities;
    double log_z = 0.0;
};

/// P(S) = exp(-energy(S)) / Z materialized by direct summation.
inline BoltzmannTable boltzmann_by_enumeration(const LinearEnergy& cost, int horizon) {
    BoltzmannTable table;
    table.sequences = all_sequences(cost.vocab_size, horizon);
    Vector neg_energy;
    neg_energy.reserve(table.sequences.size());
    for (const Sequence& s : table.sequences) {
        neg_energy.push_back(-linear_energy_by_hand(cost, s));
    }
    table.log_z = log_sum_exp(neg_energy);
    table.probabilities.reserve(neg_energy.size());
    for (double v : neg_energy) {
        table.probabilities.push_back(std::exp(v - table.log_z));
    }
    return table;
}

/// E[f(S)] over an explicit distribution on enumerated sequences.
inline Vector expected_features_by_enumeration(const std::vector<Sequence>& sequences,
                                               const Vector& probabilities, int vocab_size) {
    Vector mean(static_cast<std::size_t>(vocab_size) +
                    static_cast<std::size_t>(vocab_size) * static_cast<std::size_t>(vocab_size),
                0.0);
    for (std::size_t i = 0; i < sequences.size(); ++i) {
        const Vector f = features_by_hand(sequences[i], vocab_size);
        for (std::size_t j = 0; j < mean.size(); ++j) {
            mean[j] += probabilities[i] * f[j];
        }
    }
    return mean;
}

/// -sum p log p with 0 log 0 = 0.
inline double entropy_of(std::span<const double> probabilities) {
    double h = 0.0;
    for (double p : probabilities) {
        if (p > 0.0) {
            h -= p * std::log(p);
        }
    }
    return h;
}

inline double max_abs_diff(std::span<const double> a, std::span<const double> b) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        m = std::max(m, std::abs(a[i] - b[i]));
    }
    return m;
}

/// Relative gradient comparison with an absolute floor for near-zero entries.
inline double max_relative_error(std::span<const double> got, std::span<const double> want,
                                 double abs_floor) {
    double worst = 0.0;
    for (std::size_t i = 0; i < got.size(); ++i) {
        const double scale = std::max(std::abs(want[i]), abs_floor);
        worst = std::max(worst, std::abs(got[i] - want[i]) / scale);
    }
    return worst;
}

/// Streaming per-coordinate mean and standard error (Welford).
class VectorMeanAccumulator {
  public:
    explicit VectorMeanAccumulator(std::size_t dim) : mean_(dim, 0.0), m2_(dim, 0.0) {}

    void add(std::span<const double> x) {
        ++n_;
        for (std::size_t i = 0; i < mean_.size(); ++i) {
            const double delta = x[i] - mean_[i];
            mean_[i] += delta / static_cast<double>(n_);
            m2_[i] += delta * (x[i] - mean_[i]);
        }
    }

    std::size_t count() const { return n_; }
    const Vector& mean() const { return mean_; }

    Vector standard_error() const {
        Vector se(mean_.size(), 0.0);
        for (std::size_t i = 0; i < se.size(); ++i) {
            const double var = m2_[i] / static_cast<double>(n_ - 1);
            se[i] = std::sqrt(var / static_cast<double>(n_));
        }
        return se;
    }

  private:
    std::size_t n_ = 0;
    Vector mean_;
    Vector m2_;
};

/// Scalar version of the accumulator.
class MeanAccumulator {
  public:
    void add(double x) {
        ++n_;
        const double delta = x - mean_;
        mean_ += delta / static_cast<double>(n_);
        m2_ += delta * (x - mean_);
    }

    std::size_t count() const { return n_; }
    double mean() const { return mean_; }

    double standard_error() const {
        return std::sqrt(m2_ / static_cast<double>(n_ - 1) / static_cast<double>(n_));
    }

  private:
    std::size_t n_ = 0;
    double mean_ = 0.0;
    double m2_ = 0.0;
};

}  // namespace ebsg::testing
