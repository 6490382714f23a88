#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ibow/detector.hpp"

namespace ibow {

// --- ground truth -----------------------------------------------------------

/// loops[t] lists the earlier frames that close a true loop with frame t.
struct GroundTruth {
  std::vector<std::vector<FrameIndex>> loops;

  std::size_t frames() const { return loops.size(); }
  bool positive(FrameIndex t) const { return t < loops.size() && !loops[t].empty(); }
  std::size_t positives() const;
  void add(FrameIndex t, FrameIndex k);
};

/// Parses either a square 0/1 matrix (row t, column k marks t -> k) or a list
/// of "t k" pairs. A file is read as a matrix when every row has as many
/// tokens as there are rows and all tokens are 0 or 1; otherwise it must be
/// a pair list. Entries with k >= t are dropped so loops always point back in time.
GroundTruth parse_ground_truth(const std::string& text);
GroundTruth load_ground_truth(const std::filesystem::path& path);
std::string to_pair_list(const GroundTruth& gt);

// --- precision / recall -----------------------------------------------------

struct PrPoint {
  std::size_t threshold = 0;
  double precision = 1.0;
  double recall = 0.0;
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;
};

/// One accepted (or not) decision per frame.
struct Decision {
  FrameIndex frame = 0;
  std::optional<ImageId> matched;
};

/// An accepted match t -> f is a true positive when some ground-truth loop of
/// t lies within +-tolerance frames of f, otherwise a false positive.
/// fn counts ground-truth positive frames without a true positive, so
/// recall = tp / positives. Precision is 1 when nothing was accepted.
PrPoint compute_pr(std::span<const Decision> decisions, const GroundTruth& gt, std::size_t tolerance);
PrPoint compute_pr(std::span<const LoopResult> results, const GroundTruth& gt, std::size_t tolerance);

/// Offline re-decision of a recorded run at a different inlier threshold.
/// Shortcut acceptances stay accepted at every threshold; geometry checks
/// are accepted when their recorded inlier count reaches `threshold`.
std::vector<Decision> rethreshold(std::span<const LoopResult> results, std::size_t threshold);

struct SweepResult {
  std::vector<PrPoint> curve;
  double max_recall_at_full_precision = 0.0;
};

SweepResult sweep_thresholds(std::span<const LoopResult> results, const GroundTruth& gt, std::size_t tolerance,
                             std::span<const std::size_t> thresholds);

std::string pr_csv_header();
std::string to_csv_row(const PrPoint& p);

// --- synthetic sequences ----------------------------------------------------

/// A frame plan is a comma list of segments: "N<count>" visits count new
/// places, "R<a>-<b>" revisits frames a..b (descending when a > b).
struct SyntheticSpec {
  std::string plan = "N200,R0-99";
  std::size_t noise_bits = 25;
  std::size_t features = 1000;
  std::size_t descriptor_bits = kDefaultDescriptorBits;
  std::uint64_t seed = 0;
};

struct SyntheticSequence {
  std::vector<FeatureList> frames;
  GroundTruth ground_truth;
  /// For every frame, the frame whose landmarks it re-observes (itself for new places).
  std::vector<FrameIndex> source;
};

/// Pinhole camera (f = 500, 640x480) moving sideways through a field of
/// random 3D landmarks, each carrying a random binary descriptor. New-place
/// frames observe the visible landmarks with exact descriptors. A revisit
/// re-observes the source frame's landmarks from a slightly perturbed pose,
/// so keypoints follow a true epipolar geometry, with `noise_bits` random
/// bit flips per descriptor. Ground truth links a revisit to every earlier
/// frame showing the same place.
SyntheticSequence generate_synthetic(const SyntheticSpec& spec);

/// "key = value" spec with keys plan, noise_bits, features, descriptor_bits, seed.
SyntheticSpec parse_synthetic_spec(const std::string& text);

/// Writes frame_NNNNNN.ibwf files, ground_truth.txt (pair list) and a
/// run.cfg that replays the sequence in features mode.
void write_synthetic(const SyntheticSequence& seq, const SyntheticSpec& spec, const std::filesystem::path& dir,
                     std::size_t tolerance);

// --- run configuration ------------------------------------------------------

enum class InputMode { synthetic, images, features };

struct RunConfig {
  InputMode mode = InputMode::synthetic;
  std::filesystem::path input;
  std::filesystem::path ground_truth;
  std::filesystem::path output = "ibow_out";
  std::size_t features = 1000;
  VocabParams vocab;
  DetectorParams detector;
  ExtractorParams extractor;
  SyntheticSpec synthetic;
  std::optional<std::size_t> gt_tolerance;  // defaults to b for synthetic input, 0 otherwise
  std::vector<std::size_t> thresholds;      // sweep thresholds
  std::uint64_t seed = 0;

  std::size_t tolerance() const;
};

/// Flat "key = value" text; '#' starts a comment. Unknown keys are errors.
RunConfig parse_config(const std::string& text, const std::filesystem::path& base_dir = {});
RunConfig load_config(const std::filesystem::path& path);

/// Keys understood by parse_config, in documentation order.
std::vector<std::string> config_keys();

// --- harness ----------------------------------------------------------------

struct RunOutput {
  std::vector<LoopResult> results;
  std::vector<FrameStats> diagnostics;
  std::vector<double> frame_ms;
  std::size_t final_vocabulary = 0;
  std::optional<GroundTruth> ground_truth;
};

/// Lists frame files in lexicographic order (".pgm" or ".ibwf").
std::vector<std::filesystem::path> list_frames(const std::filesystem::path& dir, const std::string& extension);

/// Runs the detector over the configured input. Frame time covers the whole
/// per-frame pipeline (vocabulary update, query, islands, decision) but not
/// image loading or feature extraction.
RunOutput run_sequence(const RunConfig& config);

struct TimingSummary {
  double mean_ms = 0.0;
  double p95_ms = 0.0;
};
TimingSummary summarize_timing(std::span<const double> frame_ms);

/// Writes results.csv, diagnostics.csv, summary.txt and, when a sweep is
/// given, pr_curve.csv into config.output.
void write_outputs(const RunConfig& config, const RunOutput& run, const std::optional<SweepResult>& sweep);

std::string summary_text(const RunConfig& config, const RunOutput& run, const std::optional<SweepResult>& sweep);

}  // namespace ibow
