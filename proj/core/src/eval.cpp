#include "ebsg/eval.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "ebsg/maxent.hpp"

namespace ebsg {

namespace {

const TabularGenerator& require_chain_generator(const GeneratorModel& gen) {
    const auto* tab = std::get_if<TabularGenerator>(&gen);
    if (tab == nullptr || tab->order != 1) {
        throw std::invalid_argument(
            "exact oracle NLL requires an order-1 tabular generator; use mc mode instead");
    }
    return *tab;
}

}  // namespace

double oracle_nll(const GeneratorModel& gen, const MarkovOracle& oracle, int horizon,
                  NllDirection direction, NllMode mode, int n_samples, std::uint64_t seed) {
    if (vocab_size(gen) != oracle.vocab.size()) {
        throw std::invalid_argument("oracle_nll: generator and oracle vocabulary sizes differ");
    }
    if (horizon < 1) {
        throw std::invalid_argument("oracle_nll: horizon must be >= 1");
    }

    if (mode == NllMode::exact) {
        const TabularGenerator oracle_policy = as_tabular_policy(oracle);
        if (direction == NllDirection::forward) {
            return chain_cross_entropy(oracle_policy, require_chain_generator(gen), horizon);
        }
        return chain_cross_entropy(require_chain_generator(gen), oracle_policy, horizon);
    }

    if (n_samples < 1) {
        throw std::invalid_argument("oracle_nll: mc mode needs n_samples >= 1");
    }
    Rng rng(seed);
    double total = 0.0;
    if (direction == NllDirection::forward) {
        GeneratorModel oracle_model = as_tabular_policy(oracle);
        for (int i = 0; i < n_samples; ++i) {
            const SampleResult s = sample_sequence(oracle_model, horizon, rng);
            total += -log_prob(gen, s.items);
        }
    } else {
        for (int i = 0; i < n_samples; ++i) {
            const SampleResult s = sample_sequence(gen, horizon, rng);
            total += -oracle_log_prob(oracle, s.items);
        }
    }
    return total / static_cast<double>(n_samples);
}

double feature_gap(std::span<const double> mean_a, std::span<const double> mean_b) {
    if (mean_a.size() != mean_b.size()) {
        throw std::invalid_argument("feature_gap: dimension mismatch (" +
                                    std::to_string(mean_a.size()) + " vs " +
                                    std::to_string(mean_b.size()) + ")");
    }
    double gap = 0.0;
    for (std::size_t i = 0; i < mean_a.size(); ++i) {
        gap = std::max(gap, std::abs(mean_a[i] - mean_b[i]));
    }
    return gap;
}

double feature_gap(const TabularGenerator& gen, const DemoSet& demos) {
    if (gen.vocab_size != demos.vocab.size()) {
        throw std::invalid_argument("feature_gap: vocabulary sizes differ");
    }
    return feature_gap(expected_features(gen, demos.horizon), demos.feature_mean);
}

std::vector<std::pair<ItemId, double>> recommend_topk(const GeneratorModel& gen,
                                                      std::span<const ItemId> prefix, int k) {
    const int V = vocab_size(gen);
    if (k < 1 || k > V) {
        throw std::invalid_argument("recommend_topk: k must be in [1, " + std::to_string(V) + "]");
    }
    const Vector dist = next_step_dist(gen, prefix);
    std::vector<ItemId> order(static_cast<std::size_t>(V));
    for (int v = 0; v < V; ++v) {
        order[static_cast<std::size_t>(v)] = v;
    }
    std::sort(order.begin(), order.end(), [&dist](ItemId a, ItemId b) {
        const double pa = dist[static_cast<std::size_t>(a)];
        const double pb = dist[static_cast<std::size_t>(b)];
        if (pa != pb) {
            return pa > pb;
        }
        return a < b;
    });
    std::vector<std::pair<ItemId, double>> out;
    out.reserve(static_cast<std::size_t>(k));
    for (int i = 0; i < k; ++i) {
        const ItemId v = order[static_cast<std::size_t>(i)];
        out.emplace_back(v, dist[static_cast<std::size_t>(v)]);
    }
    return out;
}

double hit_at_k(const GeneratorModel& gen, const DemoSet& heldout, int k) {
    if (heldout.sequences.empty()) {
        throw std::invalid_argument("hit_at_k: empty held-out set");
    }
    if (heldout.horizon < 2) {
        throw std::invalid_argument("hit_at_k: horizon must be >= 2 to form prediction pairs");
    }
    std::int64_t hits = 0;
    std::int64_t pairs = 0;
    for (const Sequence& s : heldout.sequences) {
        for (std::size_t t = 1; t < s.size(); ++t) {
            const std::span<const ItemId> prefix(s.data(), t);
            const auto top = recommend_topk(gen, prefix, k);
            const ItemId target = s[t];
            for (const auto& [item, prob] : top) {
                if (item == target) {
                    ++hits;
                    break;
                }
            }
            ++pairs;
        }
    }
    return static_cast<double>(hits) / static_cast<double>(pairs);
}

}  // namespace ebsg
