#pragma once

#include <vector>

#include "ebsg/numerics.hpp"
#include "ebsg/vocabulary.hpp"

namespace ebsg {

/// A set of fixed-length demonstration sequences with its empirical feature
/// mean cached (dimension V + V^2; the exact average of feature_counts over
/// the members: integer count sums divided once by the set size).
struct DemoSet {
    Vocabulary vocab;
    int horizon = 0;
    std::vector<Sequence> sequences;
    Vector feature_mean;
};

/// Validates every sequence against (vocab, horizon), computes the feature
/// mean. Throws std::invalid_argument on an empty set or a bad sequence.
DemoSet make_demo_set(Vocabulary vocab, int horizon, std::vector<Sequence> sequences);

/// Average of feature_counts over a batch; summed in batch order, divided by
/// the batch size once at the end. Throws on an empty batch.
Vector batch_feature_mean(const std::vector<Sequence>& batch, int vocab_size);

}  // namespace ebsg
