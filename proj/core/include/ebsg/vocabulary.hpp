#pragma once

#include <map>
#include <span>
#include <string>
#include <vector>

namespace ebsg {

using ItemId = int;

/// A fixed-length item sequence; horizon checks happen at module boundaries.
using Sequence = std::vector<ItemId>;

/// Ordered item alphabet with a dense 0..V-1 id per token. Ids are assigned
/// by construction order and are stable under save/load.
class Vocabulary {
  public:
    Vocabulary() = default;

    /// Throws std::invalid_argument on duplicate or empty tokens.
    explicit Vocabulary(std::vector<std::string> tokens);

    int size() const { return static_cast<int>(tokens_.size()); }

    /// Token for a dense id; throws std::out_of_range on a bad id.
    const std::string& token(ItemId id) const;

    /// Dense id for a token; throws std::out_of_range on an unknown token.
    ItemId id(const std::string& token) const;

    bool contains(const std::string& token) const { return index_.count(token) > 0; }

    const std::vector<std::string>& tokens() const { return tokens_; }

    bool operator==(const Vocabulary& other) const { return tokens_ == other.tokens_; }

  private:
    std::vector<std::string> tokens_;
    std::map<std::string, ItemId> index_;
};

/// Vocabulary whose tokens are the decimal ids themselves ("0", "1", ...).
/// Used for synthetic data where items have no external names.
Vocabulary make_index_vocabulary(int size);

/// Checks every id is in [0, vocab_size); throws std::invalid_argument naming
/// the offending position otherwise.
void validate_items(std::span<const ItemId> items, int vocab_size);

/// validate_items plus an exact-length check against the horizon.
void validate_sequence(std::span<const ItemId> seq, int vocab_size, int horizon);

}  // namespace ebsg
