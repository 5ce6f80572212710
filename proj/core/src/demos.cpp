#include "ebsg/demos.hpp"

#include <stdexcept>
#include <utility>

#include "ebsg/energy.hpp"

namespace ebsg {

DemoSet make_demo_set(Vocabulary vocab, int horizon, std::vector<Sequence> sequences) {
    if (sequences.empty()) {
        throw std::invalid_argument("make_demo_set: empty demonstration set");
    }
    if (horizon < 1) {
        throw std::invalid_argument("make_demo_set: horizon must be >= 1");
    }
    for (const Sequence& s : sequences) {
        validate_sequence(s, vocab.size(), horizon);
    }
    DemoSet out;
    out.feature_mean = batch_feature_mean(sequences, vocab.size());
    out.vocab = std::move(vocab);
    out.horizon = horizon;
    out.sequences = std::move(sequences);
    return out;
}

Vector batch_feature_mean(const std::vector<Sequence>& batch, int vocab_size) {
    if (batch.empty()) {
        throw std::invalid_argument("batch_feature_mean: empty batch");
    }
    Vector sum(feature_dim(vocab_size), 0.0);
    for (const Sequence& s : batch) {
        add_scaled(sum, feature_counts(s, vocab_size), 1.0);
    }
    for (double& v : sum) {
        v /= static_cast<double>(batch.size());
    }
    return sum;
}

}  // namespace ebsg
