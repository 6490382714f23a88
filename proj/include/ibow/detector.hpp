#pragma once

#include <cstddef>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ibow/geometry.hpp"
#include "ibow/vocabulary.hpp"

namespace ibow {

inline constexpr std::size_t kNoShortcut = std::numeric_limits<std::size_t>::max();

struct DetectorParams {
  std::size_t buffer = 50;             // p
  double tau_im = 0.3;
  std::size_t island_half_width = 5;   // b
  std::size_t tau_c = 20;              // kNoShortcut disables the shortcut
  std::size_t min_inliers = 24;
  double match_ratio = 0.8;
  RansacParams ransac;

  void validate() const;
};

struct NormalizedScore {
  ImageId image = 0;
  double score = 0.0;  // in [0, 1]
};

/// Time interval [m, n] grouping similar images.
struct Island {
  FrameIndex m = 0;
  FrameIndex n = 0;
  std::vector<NormalizedScore> members;
  ImageId representative = 0;
  double score_g = 0.0;

  bool overlaps(const Island& o) const { return m <= o.n && o.m <= n; }
  bool contains(FrameIndex f) const { return m <= f && f <= n; }
};

/// Min-max normalisation. A single entry or a zero range maps everything to 1.
std::vector<NormalizedScore> normalize_scores(std::span<const ScoredImage> scored);

/// Keeps entries with score >= tau_im, preserving order.
std::vector<NormalizedScore> filter_candidates(std::span<const NormalizedScore> normalized, double tau_im);

/// Average normalised member score over the interval length n - m + 1.
double island_score(const Island& island);

/// Groups candidates into disjoint islands, sorted by descending G (ties by lower m).
///
/// Candidates are scanned in order. One strictly inside an existing island
/// joins it and the interval grows to cover [c - b, c + b]; otherwise it opens
/// [c - b, c + b]. Intervals are clamped to [0, last_frame].
///
/// Overlaps are then resolved by time distance to the island representatives:
/// when two intervals overlap, frames strictly closer to one representative go
/// to that island and equidistant frames to neither. A member left outside
/// every trimmed interval moves to the island with the nearest representative,
/// whose interval is stretched to reach it.
std::vector<Island> build_islands(std::span<const NormalizedScore> candidates, std::size_t b,
                                  FrameIndex last_frame);

struct IslandChoice {
  std::size_t index = 0;
  bool priority = false;
};

/// Prefers the best-scoring island overlapping the previous frame's choice;
/// otherwise takes the top island. Ties go to the lower m.
IslandChoice select_island(std::span<const Island> islands, const std::optional<Island>& previous);

enum class LoopStatus { accepted, rejected, skipped };
enum class DecisionPath { none, geometry, shortcut };

std::string to_string(LoopStatus s);
std::string to_string(DecisionPath p);

struct LoopResult {
  FrameIndex frame = 0;
  LoopStatus status = LoopStatus::skipped;
  std::optional<ImageId> matched;     // set when accepted
  std::optional<ImageId> candidate;   // representative of the selected island
  std::optional<std::size_t> inliers; // set when geometry ran
  DecisionPath path = DecisionPath::none;
  std::optional<Island> island;
  bool priority = false;
};

std::string results_csv_header();
std::string to_csv_row(const LoopResult& r);

/// Sequential loop-closure detector. Frame t is the t-th call to on_frame.
/// Images within the last p frames (ids > t - p) are never candidates; the
/// first frame only seeds the vocabulary.
class LoopDetector {
 public:
  explicit LoopDetector(DetectorParams params = {}, VocabParams vocab_params = {});

  LoopResult on_frame(FeatureList features);

  FrameIndex frames_processed() const { return frames_.size(); }
  bool has_vocabulary() const { return vocabulary_.has_value(); }
  const Vocabulary& vocabulary() const { return *vocabulary_; }
  const FrameStats& last_stats() const { return last_stats_; }
  std::size_t consecutive_loops() const { return consecutive_; }
  const std::optional<Island>& previous_island() const { return previous_; }
  const DetectorParams& params() const { return params_; }

 private:
  void reset_tracking();

  DetectorParams params_;
  VocabParams vocab_params_;
  std::optional<Vocabulary> vocabulary_;
  std::vector<FeatureList> frames_;
  std::optional<Island> previous_;
  std::size_t consecutive_ = 0;
  FrameStats last_stats_;
};

}  // namespace ibow
