#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <unordered_map>
#include <vector>

#include "ibow/descriptor.hpp"

namespace ibow {

using WordId = std::uint64_t;
using DescriptorMap = std::unordered_map<WordId, BinaryDescriptor>;

struct Neighbor {
  WordId word = 0;
  std::size_t distance = 0;
  friend bool operator==(const Neighbor&, const Neighbor&) = default;
};

struct ForestParams {
  std::size_t branching = 16;   // K
  std::size_t max_leaf = 150;   // S
  std::size_t trees = 4;        // T_i
  std::size_t budget = 64;      // descriptors examined per search

  void validate() const;
};

/// One randomized hierarchical clustering tree over binary descriptors.
///
/// Every non-root node carries a routing centre: a value snapshot of the
/// descriptor chosen as cluster centre plus the id of the word it came from.
/// A node is either internal (children) or a leaf (word ids). Descriptors are
/// not owned by the tree; every operation that needs them takes the
/// id -> descriptor map of the owning forest.
///
/// Build: fewer than S ids (or a single id) form a leaf. Otherwise min(K, n)
/// distinct ids are drawn as centres; each centre seeds its own cluster and
/// every other id joins the nearest centre (lowest index on ties). Since each
/// cluster keeps at least its centre, recursion always shrinks.
class HammingTree {
 public:
  struct Node {
    BinaryDescriptor centre;
    std::optional<WordId> centre_word;
    Node* parent = nullptr;
    std::vector<std::unique_ptr<Node>> children;
    std::vector<WordId> words;

    bool is_leaf() const { return children.empty(); }
  };

  HammingTree(std::size_t branching, std::size_t max_leaf, std::uint64_t seed);

  HammingTree(HammingTree&&) noexcept = default;
  HammingTree& operator=(HammingTree&&) noexcept = default;

  /// Replaces the tree with one built over every entry of `words`. Ids are
  /// processed in ascending order so the result depends only on content and seed.
  void build(const DescriptorMap& words);

  /// Descends to a leaf; appends when the leaf stays below S, otherwise the
  /// leaf is rebuilt in place over its ids plus the new one.
  /// `words` must already contain `id`.
  void insert(WordId id, const DescriptorMap& words);

  /// Deletes `id` from its leaf. Emptied nodes are pruned upwards; any
  /// surviving node whose centre came from `id` gets a new centre drawn
  /// at random from its remaining subtree. `words` must still contain `id`'s
  /// entry or already have it erased; it is only used for reselected centres.
  void remove(WordId id, const DescriptorMap& words);

  const Node* root() const { return root_.get(); }
  bool empty() const { return root_ == nullptr; }
  bool contains(WordId id) const { return leaf_of_.contains(id); }
  std::size_t size() const { return leaf_of_.size(); }
  std::size_t max_leaf() const { return max_leaf_; }
  std::size_t branching() const { return branching_; }

  /// Leaf reached by the greedy single-pass descent for `q`.
  const Node* descend(const BinaryDescriptor& q) const;

  /// All ids found by walking every leaf (one entry per occurrence).
  std::vector<WordId> collect_ids() const;
  std::size_t largest_leaf() const;

  /// Indented text rendering of the tree shape:
  ///   R
  ///     c4
  ///       c1 {1 4}
  std::string dump() const;

 private:
  void build_node(Node& node, std::vector<WordId> ids, const DescriptorMap& words);
  void reselect_centre(Node& node, const DescriptorMap& words);
  std::size_t random_index(std::size_t n);

  std::size_t branching_;
  std::size_t max_leaf_;
  std::mt19937_64 rng_;
  std::unique_ptr<Node> root_;
  std::unordered_map<WordId, Node*> leaf_of_;
};

/// Builds a standalone tree over `words`.
HammingTree build_tree(const DescriptorMap& words, std::size_t branching, std::size_t max_leaf,
                       std::uint64_t seed);

/// T_i randomized trees over one shared descriptor table, searched together
/// with a shared best-bin-first priority queue.
///
/// Searches are const and may run concurrently with each other. Any mutation
/// (build, insert, remove, update_descriptor) needs exclusive access.
class Forest {
 public:
  explicit Forest(ForestParams params = {}, std::uint64_t seed = 0);

  void build(DescriptorMap words);
  void insert(WordId id, BinaryDescriptor descriptor);
  void remove(WordId id);

  /// Overwrites the stored descriptor. Routing centres keep their snapshots
  /// and the word is not repositioned.
  void update_descriptor(WordId id, BinaryDescriptor descriptor);

  const BinaryDescriptor& descriptor(WordId id) const;
  bool contains(WordId id) const { return words_.contains(id); }
  std::size_t size() const { return words_.size(); }
  bool empty() const { return words_.empty(); }

  /// Best-bin-first search: each tree is descended once (the other children
  /// of each visited node go into a queue keyed by centre distance), reached
  /// leaves are scanned, then queue entries are expanded until at least
  /// `budget` distinct descriptors were examined. Returns up to k distinct
  /// words by ascending (distance, id).
  std::vector<Neighbor> knn_search(const BinaryDescriptor& q, std::size_t k) const;
  std::vector<Neighbor> knn_search(const BinaryDescriptor& q, std::size_t k, std::size_t budget) const;

  const std::vector<HammingTree>& trees() const { return trees_; }
  const DescriptorMap& words() const { return words_; }
  const ForestParams& params() const { return params_; }

 private:
  ForestParams params_;
  std::uint64_t seed_;
  DescriptorMap words_;
  std::vector<HammingTree> trees_;
};

}  // namespace ibow
