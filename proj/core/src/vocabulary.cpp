#include "ebsg/vocabulary.hpp"

#include <stdexcept>
#include <utility>

namespace ebsg {

Vocabulary::Vocabulary(std::vector<std::string> tokens) : tokens_(std::move(tokens)) {
    for (std::size_t i = 0; i < tokens_.size(); ++i) {
        if (tokens_[i].empty()) {
            throw std::invalid_argument("Vocabulary: empty token at id " + std::to_string(i));
        }
        auto [it, inserted] = index_.emplace(tokens_[i], static_cast<ItemId>(i));
        if (!inserted) {
            throw std::invalid_argument("Vocabulary: duplicate token \"" + tokens_[i] + "\"");
        }
    }
}

const std::string& Vocabulary::token(ItemId id) const {
    if (id < 0 || id >= size()) {
        throw std::out_of_range("Vocabulary: id " + std::to_string(id) + " outside [0, " +
                                std::to_string(size()) + ")");
    }
    return tokens_[static_cast<std::size_t>(id)];
}

ItemId Vocabulary::id(const std::string& token) const {
    auto it = index_.find(token);
    if (it == index_.end()) {
        throw std::out_of_range("Vocabulary: unknown token \"" + token + "\"");
    }
    return it->second;
}

Vocabulary make_index_vocabulary(int size) {
    if (size < 1) {
        throw std::invalid_argument("make_index_vocabulary: size must be >= 1");
    }
    std::vector<std::string> tokens;
    tokens.reserve(static_cast<std::size_t>(size));
    for (int i = 0; i < size; ++i) {
        tokens.push_back(std::to_string(i));
    }
    return Vocabulary(std::move(tokens));
}

void validate_items(std::span<const ItemId> items, int vocab_size) {
    for (std::size_t t = 0; t < items.size(); ++t) {
        if (items[t] < 0 || items[t] >= vocab_size) {
            throw std::invalid_argument("sequence item at position " + std::to_string(t) +
                                        " is out of vocabulary (id " + std::to_string(items[t]) +
                                        ", vocab size " + std::to_string(vocab_size) + ")");
        }
    }
}

void validate_sequence(std::span<const ItemId> seq, int vocab_size, int horizon) {
    if (static_cast<int>(seq.size()) != horizon) {
        throw std::invalid_argument("sequence length " + std::to_string(seq.size()) +
                                    " does not match horizon " + std::to_string(horizon));
    }
    validate_items(seq, vocab_size);
}

}  // namespace ebsg
