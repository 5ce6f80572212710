#include "ebsg/oracle.hpp"

#include <cmath>
#include <stdexcept>

namespace ebsg {

namespace {

/// Normalizes gamma draws into a probability vector, then adds a 1e-6 floor
/// and renormalizes so every entry is strictly positive.
void dirichlet_row(std::span<double> row, double concentration, Rng& rng) {
    double sum = 0.0;
    for (double& v : row) {
        v = rng.gamma(concentration);
        sum += v;
    }
    for (double& v : row) {
        v = v / sum + 1e-6;
    }
    double total = 0.0;
    for (double v : row) {
        total += v;
    }
    for (double& v : row) {
        v /= total;
    }
}

}  // namespace

MarkovOracle make_markov_oracle(int vocab_size, std::uint64_t seed, double concentration) {
    if (vocab_size < 2) {
        throw std::invalid_argument("make_markov_oracle: vocab_size must be >= 2");
    }
    if (!(concentration > 0.0)) {
        throw std::invalid_argument("make_markov_oracle: concentration must be > 0");
    }
    MarkovOracle oracle;
    oracle.vocab = make_index_vocabulary(vocab_size);
    oracle.seed = seed;
    oracle.initial = Vector(static_cast<std::size_t>(vocab_size));
    oracle.transition = Matrix(vocab_size, vocab_size);

    Rng rng(seed);
    dirichlet_row(oracle.initial, concentration, rng);
    for (int a = 0; a < vocab_size; ++a) {
        dirichlet_row(oracle.transition.row(a), concentration, rng);
    }
    return oracle;
}

DemoSet sample_demos(const MarkovOracle& oracle, int n, int horizon, std::uint64_t seed) {
    if (n < 1) {
        throw std::invalid_argument("sample_demos: n must be >= 1");
    }
    if (horizon < 1) {
        throw std::invalid_argument("sample_demos: horizon must be >= 1");
    }
    Rng rng(seed);
    std::vector<Sequence> sequences;
    sequences.reserve(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        Sequence s;
        s.reserve(static_cast<std::size_t>(horizon));
        s.push_back(categorical_sample(oracle.initial, rng));
        for (int t = 1; t < horizon; ++t) {
            s.push_back(categorical_sample(oracle.transition.row(s.back()), rng));
        }
        sequences.push_back(std::move(s));
    }
    return make_demo_set(oracle.vocab, horizon, std::move(sequences));
}

double oracle_log_prob(const MarkovOracle& oracle, std::span<const ItemId> seq) {
    validate_items(seq, oracle.vocab.size());
    if (seq.empty()) {
        throw std::invalid_argument("oracle_log_prob: empty sequence");
    }
    double total = std::log(oracle.initial[static_cast<std::size_t>(seq[0])]);
    for (std::size_t t = 1; t < seq.size(); ++t) {
        total += std::log(oracle.transition(seq[t - 1], seq[t]));
    }
    return total;
}

TabularGenerator as_tabular_policy(const MarkovOracle& oracle) {
    const int V = oracle.vocab.size();
    TabularGenerator g = make_tabular_generator(V, 1);
    for (int v = 0; v < V; ++v) {
        g.tables[0](0, v) = std::log(oracle.initial[static_cast<std::size_t>(v)]);
    }
    for (int a = 0; a < V; ++a) {
        for (int b = 0; b < V; ++b) {
            g.tables[1](a, b) = std::log(oracle.transition(a, b));
        }
    }
    return g;
}

MarkovOracle remap_oracle(const MarkovOracle& oracle, const Vocabulary& target) {
    const int V = oracle.vocab.size();
    if (target.size() != V) {
        throw std::invalid_argument("remap_oracle: vocabulary sizes differ (" +
                                    std::to_string(V) + " vs " + std::to_string(target.size()) +
                                    ")");
    }
    std::vector<int> perm(static_cast<std::size_t>(V));
    for (int i = 0; i < V; ++i) {
        perm[static_cast<std::size_t>(i)] = target.id(oracle.vocab.token(i));
    }
    MarkovOracle out;
    out.vocab = target;
    out.seed = oracle.seed;
    out.initial = Vector(static_cast<std::size_t>(V));
    out.transition = Matrix(V, V);
    for (int a = 0; a < V; ++a) {
        out.initial[static_cast<std::size_t>(perm[static_cast<std::size_t>(a)])] =
            oracle.initial[static_cast<std::size_t>(a)];
        for (int b = 0; b < V; ++b) {
            out.transition(perm[static_cast<std::size_t>(a)], perm[static_cast<std::size_t>(b)]) =
                oracle.transition(a, b);
        }
    }
    return out;
}

}  // namespace ebsg
