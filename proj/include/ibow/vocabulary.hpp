#pragma once

#include <cstddef>
#include <cstdint>
#include <deque>
#include <functional>
#include <span>
#include <unordered_map>
#include <utility>
#include <vector>

#include "ibow/hamming_tree.hpp"
#include "ibow/imgproc.hpp"

namespace ibow {

using ImageId = std::uint32_t;
using FrameIndex = std::size_t;

/// Returns true for images that must not be scored (e.g. the recency buffer).
using ImageFilter = std::function<bool(ImageId)>;

enum class WordStatus { temporary, stable };

struct VisualWord {
  WordId id = 0;
  WordStatus status = WordStatus::temporary;
  FrameIndex created_at = 0;
  std::size_t times_matched = 0;
  std::size_t doc_frequency = 0;
};

struct Posting {
  ImageId image = 0;
  std::uint32_t count = 0;
  friend bool operator==(const Posting&, const Posting&) = default;
};

struct VocabParams {
  ForestParams forest;
  std::size_t purge_frames = 2;      // P_f
  std::size_t min_observations = 2;  // P_o
  double ratio = 0.8;
  bool purge_enabled = true;
  std::uint64_t seed = 0;

  void validate() const;
};

struct ScoredImage {
  ImageId image = 0;
  double score = 0.0;
};

struct WordAssignment {
  std::vector<std::pair<std::size_t, WordId>> matches;  // (feature index, word)
  std::vector<std::size_t> unmatched;                   // feature indices
};

/// One diagnostics record per processed frame.
struct FrameStats {
  FrameIndex frame = 0;
  std::size_t vocab_size = 0;
  std::size_t temp_count = 0;
  std::size_t merged = 0;
  std::size_t added = 0;
  std::size_t deleted = 0;
};

struct ImageUpdate {
  std::vector<ScoredImage> scores;
  FrameStats stats;
  WordAssignment assignment;
  std::vector<WordId> added;
  std::vector<WordId> deleted;
};

/// Incremental visual vocabulary over a Hamming tree forest with an inverted
/// index and tf-idf image scoring.
///
/// Scoring: s(q, k) sums, over every query feature assigned to a word w that
/// occurs in image k, tf(w, k) * idf(w), where tf is the occurrence count of w
/// in k divided by the number of features k contributed when it was indexed,
/// and idf = ln(N / df(w)) with N the number of indexed images.
///
/// A process_image call is one exclusive transaction; const members may be
/// shared between readers in between.
class Vocabulary {
 public:
  /// Creates one stable word per feature of the first image.
  Vocabulary(const FeatureList& first_image, VocabParams params = {}, ImageId image = 0,
             FrameIndex frame = 0);

  /// Ratio test against the two nearest words. A vocabulary with a single
  /// word accepts at distance <= width / 4.
  WordAssignment assign_words(std::span<const Feature> features) const;

  /// B_w <- B_w AND q. Returns the merged descriptor.
  const BinaryDescriptor& merge_word(WordId id, const BinaryDescriptor& q);

  /// Inserts the listed features as temporary words created at `frame` and
  /// records them as occurrences in `image`.
  std::vector<WordId> add_temporary_words(std::span<const Feature> features,
                                          std::span<const std::size_t> unmatched, ImageId image,
                                          FrameIndex frame);

  /// Resolves temporaries with frame - created_at >= P_f: promoted when
  /// matched at least P_o times, deleted otherwise.
  std::vector<WordId> purge_temporaries(FrameIndex frame);

  std::vector<ScoredImage> score_images(std::span<const Feature> features,
                                        const ImageFilter& exclude = {}) const;
  std::vector<ScoredImage> score_assignment(const WordAssignment& assignment,
                                            const ImageFilter& exclude = {}) const;

  /// Scores against the current vocabulary, then assigns, merges, adds
  /// temporaries, purges and finally indexes the image.
  ImageUpdate process_image(std::span<const Feature> features, ImageId image, FrameIndex frame,
                            const ImageFilter& exclude = {});

  const VisualWord& word(WordId id) const;
  const BinaryDescriptor& descriptor(WordId id) const { return forest_.descriptor(id); }
  bool contains(WordId id) const { return words_.contains(id); }
  std::size_t size() const { return words_.size(); }
  std::size_t temporary_count() const { return temp_count_; }
  const std::unordered_map<WordId, VisualWord>& words() const { return words_; }
  const std::vector<Posting>& postings(WordId id) const;
  const std::unordered_map<WordId, std::vector<Posting>>& inverted_index() const { return index_; }
  std::size_t image_count() const { return image_totals_.size(); }
  std::size_t image_total(ImageId image) const;
  const Forest& forest() const { return forest_; }
  const VocabParams& params() const { return params_; }
  std::size_t descriptor_bits() const { return bits_; }

 private:
  WordId insert_word(const BinaryDescriptor& d, WordStatus status, FrameIndex frame);
  void index_occurrences(ImageId image, std::span<const WordId> words);
  void delete_word(WordId id);

  VocabParams params_;
  std::size_t bits_ = 0;
  Forest forest_;
  std::unordered_map<WordId, VisualWord> words_;
  std::unordered_map<WordId, std::vector<Posting>> index_;
  std::unordered_map<ImageId, std::size_t> image_totals_;
  std::deque<WordId> temporaries_;  // creation order
  std::size_t temp_count_ = 0;
  WordId next_id_ = 0;
};

/// Writes the `frame,vocab_size,temp_count,merged,added,deleted` header.
std::string diagnostics_csv_header();
std::string to_csv_row(const FrameStats& s);

}  // namespace ibow
