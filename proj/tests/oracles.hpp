#pragma once
// Independent reference computations used only by tests.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <map>
#include <random>
#include <set>
#include <vector>

#include <Eigen/Dense>

#include "ibow/descriptor.hpp"
#include "ibow/geometry.hpp"
#include "ibow/hamming_tree.hpp"
#include "ibow/imgproc.hpp"
#include "ibow/vocabulary.hpp"

namespace oracle {

inline ibow::BinaryDescriptor random_descriptor(std::mt19937_64& rng, std::size_t bits = 256) {
  ibow::BinaryDescriptor d(bits);
  for (std::size_t i = 0; i < bits; ++i) d.set(i, rng() & 1u);
  return d;
}

inline ibow::BinaryDescriptor flip_bits(ibow::BinaryDescriptor d, std::size_t n, std::mt19937_64& rng) {
  std::vector<std::size_t> idx(d.width());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  for (std::size_t k = 0; k < n; ++k) {
    std::swap(idx[k], idx[k + rng() % (idx.size() - k)]);
    d.flip(idx[k]);
  }
  return d;
}

// Bit-by-bit Hamming distance.
inline std::size_t hamming_bitwise(const ibow::BinaryDescriptor& a, const ibow::BinaryDescriptor& b) {
  std::size_t n = 0;
  for (std::size_t i = 0; i < a.width(); ++i) n += a.test(i) != b.test(i);
  return n;
}

inline std::size_t linear_nn_distance(const ibow::DescriptorMap& words, const ibow::BinaryDescriptor& q) {
  std::size_t best = q.width() + 1;
  for (const auto& [id, d] : words) best = std::min(best, hamming_bitwise(d, q));
  return best;
}

// Segment test by enumeration of all 16 start positions of a 9-pixel arc.
inline bool is_segment_corner(const ibow::GrayImage& img, int x, int y, int t) {
  static const int cx[16] = {0, 1, 2, 3, 3, 3, 2, 1, 0, -1, -2, -3, -3, -3, -2, -1};
  static const int cy[16] = {-3, -3, -2, -1, 0, 1, 2, 3, 3, 3, 2, 1, 0, -1, -2, -3};
  if (x < 3 || y < 3 || x >= img.width() - 3 || y >= img.height() - 3) return false;
  const int c = img(x, y);
  for (int sign : {1, -1}) {
    for (int start = 0; start < 16; ++start) {
      bool all = true;
      for (int k = 0; k < 9 && all; ++k) {
        const int i = (start + k) % 16;
        const int v = img(x + cx[i], y + cy[i]);
        all = sign > 0 ? v > c + t : v < c - t;
      }
      if (all) return true;
    }
  }
  return false;
}

// tf-idf scores from explicit per-image bags of word ids.
//   bags[k]   : word ids image k contributed when indexed (live or not)
//   totals[k] : feature count of image k at indexing time
//   live      : words currently in the vocabulary
//   query     : word id per matched query feature
inline std::map<std::uint32_t, double> tfidf_scores(const std::map<std::uint32_t, std::vector<ibow::WordId>>& bags,
                                                    const std::map<std::uint32_t, std::size_t>& totals,
                                                    const std::set<ibow::WordId>& live,
                                                    const std::vector<ibow::WordId>& query) {
  const double n_images = static_cast<double>(totals.size());
  std::map<std::uint32_t, double> scores;
  for (const auto w : query) {
    if (!live.contains(w)) continue;
    std::size_t df = 0;
    for (const auto& [k, bag] : bags)
      if (std::find(bag.begin(), bag.end(), w) != bag.end()) ++df;
    if (df == 0) continue;
    const double idf = std::log(n_images / static_cast<double>(df));
    for (const auto& [k, bag] : bags) {
      const auto count = std::count(bag.begin(), bag.end(), w);
      if (count == 0) continue;
      scores[k] += static_cast<double>(count) / static_cast<double>(totals.at(k)) * idf;
    }
  }
  for (auto it = scores.begin(); it != scores.end();) it = it->second > 0.0 ? std::next(it) : scores.erase(it);
  return scores;
}

// Two random cameras observing random 3D points; F0 from the camera
// matrices via F = [e']_x P' P^+.
struct TwoViewScene {
  Eigen::Matrix3d F;  // canonical (unit norm, positive largest entry)
  std::vector<ibow::Correspondence> matches;
};

inline Eigen::Matrix3d skew(const Eigen::Vector3d& v) {
  Eigen::Matrix3d m;
  m << 0, -v.z(), v.y(), v.z(), 0, -v.x(), -v.y(), v.x(), 0;
  return m;
}

inline TwoViewScene make_two_view_scene(std::size_t points, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Eigen::Matrix3d K;
  K << 500, 0, 320, 0, 500, 240, 0, 0, 1;
  const Eigen::Matrix3d R = (Eigen::AngleAxisd(0.2 * u(rng), Eigen::Vector3d::UnitY()) *
                             Eigen::AngleAxisd(0.1 * u(rng), Eigen::Vector3d::UnitX()) *
                             Eigen::AngleAxisd(0.1 * u(rng), Eigen::Vector3d::UnitZ()))
                                .toRotationMatrix();
  const Eigen::Vector3d t(1.0 + 0.3 * u(rng), 0.3 * u(rng), 0.3 * u(rng));

  Eigen::Matrix<double, 3, 4> P1, P2;
  P1 << K, Eigen::Vector3d::Zero();
  P2 << K * R, K * t;
  // Camera centre of P1 is the origin; its image in view 2 is the epipole.
  const Eigen::Vector3d e2 = P2 * Eigen::Vector4d(0, 0, 0, 1);
  const Eigen::Matrix<double, 4, 3> P1_pinv = P1.transpose() * (P1 * P1.transpose()).inverse();
  TwoViewScene scene;
  scene.F = ibow::canonicalize(skew(e2) * P2 * P1_pinv);

  while (scene.matches.size() < points) {
    const Eigen::Vector4d X(4.0 * u(rng), 3.0 * u(rng), 8.0 + 4.0 * u(rng), 1.0);
    const Eigen::Vector3d a = P1 * X, b = P2 * X;
    if (a.z() <= 0 || b.z() <= 0) continue;
    scene.matches.push_back({a.hnormalized(), b.hnormalized()});
  }
  return scene;
}

// Structural checks for a tree over `words`; returns an empty string when sound.
//  - every id of `words` sits in exactly one leaf and nothing else does
//  - leaves hold fewer than S ids, or a single id
//  - parent links are consistent, no empty nodes remain
//  - every routing centre names a word of its own subtree
inline std::string tree_violations(const ibow::HammingTree& tree, const ibow::DescriptorMap& words,
                                   bool check_centre_values = true) {
  using Node = ibow::HammingTree::Node;
  if (tree.empty()) return words.empty() ? "" : "tree empty but words remain";
  std::map<ibow::WordId, int> seen;
  std::string err;
  std::function<std::set<ibow::WordId>(const Node&)> walk = [&](const Node& node) {
    std::set<ibow::WordId> ids;
    if (node.is_leaf()) {
      if (node.words.empty() && &node != tree.root()) err += "empty leaf; ";
      if (node.words.size() >= tree.max_leaf() && node.words.size() > 1) err += "oversized leaf; ";
      for (auto id : node.words) {
        ++seen[id];
        if (!tree.contains(id)) err += "leaf id missing from index; ";
        ids.insert(id);
      }
    } else {
      for (const auto& c : node.children) {
        if (c->parent != &node) err += "bad parent link; ";
        auto sub = walk(*c);
        if (sub.empty()) err += "empty subtree; ";
        ids.insert(sub.begin(), sub.end());
      }
    }
    if (&node != tree.root()) {
      if (!node.centre_word) err += "node without centre; ";
      else if (!ids.contains(*node.centre_word)) err += "centre " + std::to_string(*node.centre_word) + " outside subtree; ";
      else if (check_centre_values && words.at(*node.centre_word) != node.centre) err += "stale centre value; ";
    }
    return ids;
  };
  walk(*tree.root());
  for (const auto& [id, n] : seen)
    if (n != 1 || !words.contains(id)) err += "id " + std::to_string(id) + " seen " + std::to_string(n) + "x; ";
  if (seen.size() != words.size()) err += "word count mismatch; ";
  if (tree.size() != words.size()) err += "index size mismatch; ";
  return err;
}

// Inverted index and forest agree with the word table.
inline std::string vocab_violations(const ibow::Vocabulary& v) {
  std::string err;
  for (const auto& [id, postings] : v.inverted_index()) {
    if (!v.contains(id)) err += "posting for dead word " + std::to_string(id) + "; ";
    std::set<ibow::ImageId> images;
    for (const auto& p : postings) {
      if (!images.insert(p.image).second) err += "duplicate posting; ";
      if (p.count < 1) err += "zero count; ";
    }
    if (v.contains(id) && v.word(id).doc_frequency != postings.size()) err += "df mismatch; ";
  }
  std::size_t temps = 0;
  for (const auto& [id, w] : v.words()) {
    if (!v.forest().contains(id)) err += "word missing from forest; ";
    temps += w.status == ibow::WordStatus::temporary;
  }
  if (v.forest().size() != v.size()) err += "forest size mismatch; ";
  if (temps != v.temporary_count()) err += "temporary count mismatch; ";
  for (const auto& t : v.forest().trees()) err += tree_violations(t, v.forest().words(), false);
  return err;
}

}  // namespace oracle
