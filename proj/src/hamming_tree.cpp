#include "ibow/hamming_tree.hpp"

#include <algorithm>
#include <queue>
#include <sstream>
#include <stdexcept>
#include <unordered_set>

namespace ibow {

void ForestParams::validate() const {
  if (branching < 2) throw std::invalid_argument("K must be >= 2");
  if (max_leaf < 1) throw std::invalid_argument("S must be >= 1");
  if (trees < 1) throw std::invalid_argument("T_i must be >= 1");
  if (budget < 1) throw std::invalid_argument("search budget must be >= 1");
}

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

const BinaryDescriptor& lookup(const DescriptorMap& words, WordId id) {
  const auto it = words.find(id);
  if (it == words.end()) throw std::invalid_argument("unknown word id " + std::to_string(id));
  return it->second;
}

// Child with the smallest centre distance; lowest index wins ties.
std::size_t nearest_child(const HammingTree::Node& node, const BinaryDescriptor& q) {
  std::size_t best = 0, best_d = hamming(node.children[0]->centre, q);
  for (std::size_t i = 1; i < node.children.size(); ++i) {
    const auto d = hamming(node.children[i]->centre, q);
    if (d < best_d) best = i, best_d = d;
  }
  return best;
}

}  // namespace

// --- HammingTree ------------------------------------------------------------

HammingTree::HammingTree(std::size_t branching, std::size_t max_leaf, std::uint64_t seed)
    : branching_(branching), max_leaf_(max_leaf), rng_(seed) {
  if (branching < 2) throw std::invalid_argument("K must be >= 2");
  if (max_leaf < 1) throw std::invalid_argument("S must be >= 1");
}

std::size_t HammingTree::random_index(std::size_t n) { return static_cast<std::size_t>(rng_() % n); }

void HammingTree::build(const DescriptorMap& words) {
  root_.reset();
  leaf_of_.clear();
  if (words.empty()) return;
  std::vector<WordId> ids;
  ids.reserve(words.size());
  for (const auto& [id, _] : words) ids.push_back(id);
  std::sort(ids.begin(), ids.end());
  root_ = std::make_unique<Node>();
  build_node(*root_, std::move(ids), words);
}

void HammingTree::build_node(Node& node, std::vector<WordId> ids, const DescriptorMap& words) {
  node.children.clear();
  node.words.clear();
  const std::size_t n = ids.size();
  if (n < max_leaf_ || n <= 1) {
    for (auto id : ids) leaf_of_[id] = &node;
    node.words = std::move(ids);
    return;
  }

  // Partial Fisher-Yates over positions picks min(K, n) distinct centres.
  const std::size_t k = std::min(branching_, n);
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  for (std::size_t i = 0; i < k; ++i) std::swap(order[i], order[i + random_index(n - i)]);

  std::vector<std::ptrdiff_t> centre_slot(n, -1);
  std::vector<const BinaryDescriptor*> centres(k);
  for (std::size_t j = 0; j < k; ++j) {
    centre_slot[order[j]] = static_cast<std::ptrdiff_t>(j);
    centres[j] = &lookup(words, ids[order[j]]);
  }

  std::vector<std::vector<WordId>> clusters(k);
  for (std::size_t i = 0; i < n; ++i) {
    if (centre_slot[i] >= 0) {
      clusters[static_cast<std::size_t>(centre_slot[i])].push_back(ids[i]);
      continue;
    }
    const auto& d = lookup(words, ids[i]);
    std::size_t best = 0, best_d = hamming(*centres[0], d);
    for (std::size_t j = 1; j < k; ++j) {
      const auto dj = hamming(*centres[j], d);
      if (dj < best_d) best = j, best_d = dj;
    }
    clusters[best].push_back(ids[i]);
  }

  node.children.reserve(k);
  for (std::size_t j = 0; j < k; ++j) {
    auto child = std::make_unique<Node>();
    child->centre = *centres[j];
    child->centre_word = ids[order[j]];
    child->parent = &node;
    Node& ref = *child;
    node.children.push_back(std::move(child));
    build_node(ref, std::move(clusters[j]), words);
  }
}

const HammingTree::Node* HammingTree::descend(const BinaryDescriptor& q) const {
  const Node* node = root_.get();
  if (!node) return nullptr;
  while (!node->is_leaf()) node = node->children[nearest_child(*node, q)].get();
  return node;
}

void HammingTree::insert(WordId id, const DescriptorMap& words) {
  if (leaf_of_.contains(id)) throw std::invalid_argument("word id " + std::to_string(id) + " already in tree");
  const auto& d = lookup(words, id);
  if (!root_) {
    root_ = std::make_unique<Node>();
    root_->words.push_back(id);
    leaf_of_[id] = root_.get();
    return;
  }
  Node* leaf = const_cast<Node*>(descend(d));
  if (leaf->words.size() + 1 < max_leaf_) {
    leaf->words.push_back(id);
    leaf_of_[id] = leaf;
    return;
  }
  auto ids = std::move(leaf->words);
  ids.push_back(id);
  build_node(*leaf, std::move(ids), words);
}

void HammingTree::remove(WordId id, const DescriptorMap& words) {
  const auto it = leaf_of_.find(id);
  if (it == leaf_of_.end()) throw std::invalid_argument("word id " + std::to_string(id) + " not in tree");
  Node* node = it->second;
  leaf_of_.erase(it);
  std::erase(node->words, id);

  // Prune emptied nodes upwards.
  while (node && node->is_leaf() && node->words.empty()) {
    Node* parent = node->parent;
    if (!parent) {
      root_.reset();
      return;
    }
    std::erase_if(parent->children, [&](const std::unique_ptr<Node>& c) { return c.get() == node; });
    node = parent;
  }

  for (; node; node = node->parent)
    if (node->centre_word == id) reselect_centre(*node, words);
}

void HammingTree::reselect_centre(Node& node, const DescriptorMap& words) {
  std::vector<WordId> ids;
  std::vector<const Node*> stack{&node};
  while (!stack.empty()) {
    const Node* n = stack.back();
    stack.pop_back();
    ids.insert(ids.end(), n->words.begin(), n->words.end());
    for (const auto& c : n->children) stack.push_back(c.get());
  }
  const WordId pick = ids[random_index(ids.size())];
  node.centre = lookup(words, pick);
  node.centre_word = pick;
}

std::vector<WordId> HammingTree::collect_ids() const {
  std::vector<WordId> ids;
  std::vector<const Node*> stack;
  if (root_) stack.push_back(root_.get());
  while (!stack.empty()) {
    const Node* n = stack.back();
    stack.pop_back();
    ids.insert(ids.end(), n->words.begin(), n->words.end());
    for (const auto& c : n->children) stack.push_back(c.get());
  }
  return ids;
}

std::size_t HammingTree::largest_leaf() const {
  std::size_t best = 0;
  std::vector<const Node*> stack;
  if (root_) stack.push_back(root_.get());
  while (!stack.empty()) {
    const Node* n = stack.back();
    stack.pop_back();
    if (n->is_leaf()) best = std::max(best, n->words.size());
    for (const auto& c : n->children) stack.push_back(c.get());
  }
  return best;
}

std::string HammingTree::dump() const {
  std::ostringstream out;
  auto rec = [&](auto&& self, const Node& n, int depth) -> void {
    out << std::string(static_cast<std::size_t>(depth) * 2, ' ');
    if (n.parent == nullptr) out << 'R';
    else if (n.centre_word) out << 'c' << *n.centre_word;
    else out << "c?";
    if (n.is_leaf()) {
      out << " {";
      for (std::size_t i = 0; i < n.words.size(); ++i) out << (i ? " " : "") << n.words[i];
      out << '}';
    }
    out << '\n';
    for (const auto& c : n.children) self(self, *c, depth + 1);
  };
  if (root_) rec(rec, *root_, 0);
  return out.str();
}

HammingTree build_tree(const DescriptorMap& words, std::size_t branching, std::size_t max_leaf,
                       std::uint64_t seed) {
  HammingTree t(branching, max_leaf, seed);
  t.build(words);
  return t;
}

// --- Forest -----------------------------------------------------------------

Forest::Forest(ForestParams params, std::uint64_t seed) : params_(params), seed_(seed) {
  params_.validate();
  trees_.reserve(params_.trees);
  for (std::size_t i = 0; i < params_.trees; ++i)
    trees_.emplace_back(params_.branching, params_.max_leaf, splitmix64(seed_ + i));
}

void Forest::build(DescriptorMap words) {
  words_ = std::move(words);
  for (auto& t : trees_) t.build(words_);
}

void Forest::insert(WordId id, BinaryDescriptor descriptor) {
  if (words_.contains(id)) throw std::invalid_argument("word id " + std::to_string(id) + " already indexed");
  if (!words_.empty() && words_.begin()->second.width() != descriptor.width())
    throw std::invalid_argument("descriptor width mismatch on insert");
  words_.emplace(id, std::move(descriptor));
  for (auto& t : trees_) t.insert(id, words_);
}

void Forest::remove(WordId id) {
  if (!words_.contains(id)) throw std::invalid_argument("word id " + std::to_string(id) + " not indexed");
  // Erase first so reselected centres never pick the removed word.
  words_.erase(id);
  for (auto& t : trees_) t.remove(id, words_);
}

void Forest::update_descriptor(WordId id, BinaryDescriptor descriptor) {
  const auto it = words_.find(id);
  if (it == words_.end()) throw std::invalid_argument("word id " + std::to_string(id) + " not indexed");
  if (it->second.width() != descriptor.width()) throw std::invalid_argument("descriptor width mismatch on update");
  it->second = std::move(descriptor);
}

const BinaryDescriptor& Forest::descriptor(WordId id) const { return lookup(words_, id); }

std::vector<Neighbor> Forest::knn_search(const BinaryDescriptor& q, std::size_t k) const {
  return knn_search(q, k, params_.budget);
}

std::vector<Neighbor> Forest::knn_search(const BinaryDescriptor& q, std::size_t k, std::size_t budget) const {
  std::vector<Neighbor> found;
  if (words_.empty() || k == 0) return found;

  struct Entry {
    std::size_t distance;
    std::uint64_t seq;
    const HammingTree::Node* node;
    bool operator>(const Entry& o) const {
      return distance != o.distance ? distance > o.distance : seq > o.seq;
    }
  };
  std::priority_queue<Entry, std::vector<Entry>, std::greater<>> queue;
  std::uint64_t seq = 0;
  std::unordered_set<WordId> seen;

  auto explore = [&](const HammingTree::Node* node) {
    while (!node->is_leaf()) {
      const std::size_t n = node->children.size();
      std::size_t best = 0, best_d = 0;
      // Distances are computed once; the chosen child is the first minimum.
      std::vector<std::size_t> dist(n);
      for (std::size_t i = 0; i < n; ++i) {
        dist[i] = hamming(node->children[i]->centre, q);
        if (i == 0 || dist[i] < best_d) best = i, best_d = dist[i];
      }
      for (std::size_t i = 0; i < n; ++i)
        if (i != best) queue.push({dist[i], seq++, node->children[i].get()});
      node = node->children[best].get();
    }
    for (const WordId id : node->words) {
      if (!seen.insert(id).second) continue;
      found.push_back({id, hamming(words_.at(id), q)});
    }
  };

  for (const auto& t : trees_)
    if (t.root()) explore(t.root());
  while (!queue.empty() && seen.size() < budget) {
    const auto e = queue.top();
    queue.pop();
    explore(e.node);
  }

  const auto by_distance = [](const Neighbor& a, const Neighbor& b) {
    return a.distance != b.distance ? a.distance < b.distance : a.word < b.word;
  };
  if (found.size() > k) {
    std::partial_sort(found.begin(), found.begin() + static_cast<std::ptrdiff_t>(k), found.end(), by_distance);
    found.resize(k);
  } else {
    std::sort(found.begin(), found.end(), by_distance);
  }
  return found;
}

}  // namespace ibow
