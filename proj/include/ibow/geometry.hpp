#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

#include <Eigen/Core>

#include "ibow/imgproc.hpp"

namespace ibow {

struct Correspondence {
  Eigen::Vector2d a;  // pixel in the query image
  Eigen::Vector2d b;  // pixel in the candidate image
};

/// 3x3, rank 2, unit Frobenius norm, largest-magnitude entry positive.
using FundamentalMatrix = Eigen::Matrix3d;

class EstimationFailed : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct RansacParams {
  std::size_t max_iterations = 500;
  double inlier_threshold = 2.0;  // Sampson distance, pixels
  std::uint64_t seed = 0;

  void validate() const;
};

struct RansacResult {
  FundamentalMatrix F = FundamentalMatrix::Zero();
  std::vector<std::uint8_t> inliers;  // one flag per correspondence
  std::size_t inlier_count = 0;
};

/// Exhaustive nearest / second-nearest Hamming scan of `b` for every feature
/// of `a`; kept when d1 < ratio * d2. Each b feature keeps only its
/// lowest-distance claim (lowest a index on ties). Output follows a's order.
std::vector<Correspondence> ratio_match(std::span<const Feature> a, std::span<const Feature> b,
                                        double ratio = 0.8);

/// Scales to unit Frobenius norm and flips the sign so the entry of largest
/// magnitude is positive.
FundamentalMatrix canonicalize(const Eigen::Matrix3d& F);

/// Normalised eight-point estimate from >= 8 correspondences. Throws
/// std::invalid_argument below 8 points and EstimationFailed on degenerate input.
FundamentalMatrix eight_point(std::span<const Correspondence> matches);

/// First-order geometric error of `m` under F, in pixels.
double sampson_distance(const Eigen::Matrix3d& F, const Correspondence& m);

/// x_b^T F x_a.
double epipolar_residual(const Eigen::Matrix3d& F, const Correspondence& m);

/// RANSAC over 8-point samples with a Sampson-distance inlier test, then a
/// refit on the winning consensus set. Fewer than 8 correspondences, or no
/// model with 8 inliers, yields inlier_count 0.
RansacResult ransac_fundamental(std::span<const Correspondence> matches, const RansacParams& params = {});

}  // namespace ibow
