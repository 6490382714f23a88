#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "ibow/descriptor.hpp"

namespace ibow {

/// Raised for malformed PGM or feature files.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Row-major 8-bit grayscale image.
class GrayImage {
 public:
  GrayImage() = default;
  GrayImage(int width, int height, std::uint8_t fill = 0);
  GrayImage(int width, int height, std::vector<std::uint8_t> data);

  int width() const { return width_; }
  int height() const { return height_; }
  std::span<const std::uint8_t> data() const { return data_; }

  std::uint8_t operator()(int x, int y) const { return data_[static_cast<std::size_t>(y) * width_ + x]; }
  std::uint8_t& operator()(int x, int y) { return data_[static_cast<std::size_t>(y) * width_ + x]; }

  friend bool operator==(const GrayImage&, const GrayImage&) = default;

 private:
  int width_ = 0;
  int height_ = 0;
  std::vector<std::uint8_t> data_;
};

struct Keypoint {
  float x = 0.f;
  float y = 0.f;
  float response = 0.f;
  friend bool operator==(const Keypoint&, const Keypoint&) = default;
};

struct Feature {
  Keypoint keypoint;
  BinaryDescriptor descriptor;
  friend bool operator==(const Feature&, const Feature&) = default;
};

using FeatureList = std::vector<Feature>;

// --- PGM --------------------------------------------------------------------

/// Loads a binary (P5) or ASCII (P2) PGM with maxval <= 255.
GrayImage load_pgm(const std::filesystem::path& path);
GrayImage parse_pgm(std::span<const std::uint8_t> bytes);
void write_pgm(const std::filesystem::path& path, const GrayImage& img);

// --- detection / description ------------------------------------------------

struct ExtractorParams {
  int corner_threshold = 20;
  std::size_t descriptor_bits = kDefaultDescriptorBits;
  std::uint64_t pattern_seed = 42;
};

/// FAST-9 style segment test on the radius-3 Bresenham circle followed by
/// 3x3 non-maximum suppression. Returns at most `target` keypoints sorted by
/// descending response (ties by row, then column). Images smaller than 16x16
/// yield no keypoints.
std::vector<Keypoint> detect_corners(const GrayImage& img, std::size_t target, int threshold = 20);

/// Segment-test score for one pixel; 0 when the pixel is not a corner.
/// Exposed for brute-force checks.
float corner_score(const GrayImage& img, int x, int y, int threshold);

/// Point-pair sampling pattern for the BRIEF-style descriptor. Offsets lie in
/// [-15, 15] (a 31x31 patch). Generated from mt19937_64 raw output so the
/// pattern is identical on every platform.
struct SamplingPattern {
  struct Pair {
    int ax, ay, bx, by;
  };
  std::vector<Pair> pairs;
  std::uint64_t seed = 0;

  static SamplingPattern generate(std::size_t bits, std::uint64_t seed);
};

struct ExtractionStats {
  std::size_t dropped_at_border = 0;
};

/// Minimum distance from every border for a keypoint to be described.
inline constexpr int kDescriptorBorder = 24;

/// Describes keypoints on the 5x5 box-filtered image. Keypoints closer than
/// kDescriptorBorder pixels to a border are dropped and counted in `stats`.
FeatureList extract_descriptors(const GrayImage& img, std::span<const Keypoint> kps,
                                const ExtractorParams& params = {},
                                ExtractionStats* stats = nullptr);

/// detect_corners + extract_descriptors.
FeatureList extract_features(const GrayImage& img, std::size_t target,
                             const ExtractorParams& params = {});

// --- feature files ----------------------------------------------------------

struct FeatureFile {
  std::uint32_t descriptor_bits = kDefaultDescriptorBits;
  std::uint64_t pattern_seed = 42;
  FeatureList features;
};

/// Binary little-endian layout: "IBWF", u32 version (1), u32 descriptor_bits,
/// u64 pattern_seed, u32 count, then per feature f32 x, f32 y, f32 response and
/// descriptor_bits / 8 raw bytes.
void write_features(const std::filesystem::path& path, const FeatureList& features,
                    std::uint64_t pattern_seed = 42);
FeatureFile read_feature_file(const std::filesystem::path& path);

/// Reads a feature file and rejects it unless its descriptor width equals `expected_bits`.
FeatureList read_features(const std::filesystem::path& path,
                          std::size_t expected_bits = kDefaultDescriptorBits);

}  // namespace ibow
