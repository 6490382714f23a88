#include "ibow/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include <Eigen/Geometry>
#include <Eigen/SVD>

#include "ibow/jacobi.hpp"

namespace ibow {

void RansacParams::validate() const {
  if (max_iterations < 1) throw std::invalid_argument("RANSAC needs at least one iteration");
  if (!(inlier_threshold > 0.0)) throw std::invalid_argument("inlier threshold must be positive");
}

std::vector<Correspondence> ratio_match(std::span<const Feature> a, std::span<const Feature> b, double ratio) {
  constexpr std::size_t kNone = std::numeric_limits<std::size_t>::max();
  struct Claim {
    std::size_t a = kNone;
    std::size_t distance = kNone;
  };
  std::vector<Claim> claims(b.size());

  for (std::size_t i = 0; i < a.size(); ++i) {
    std::size_t d1 = kNone, d2 = kNone, best = kNone;
    for (std::size_t j = 0; j < b.size(); ++j) {
      const auto d = hamming(a[i].descriptor, b[j].descriptor);
      if (d < d1) {
        d2 = d1;
        d1 = d;
        best = j;
      } else if (d < d2) {
        d2 = d;
      }
    }
    if (best == kNone || d2 == kNone) continue;
    if (!(static_cast<double>(d1) < ratio * static_cast<double>(d2))) continue;
    auto& c = claims[best];
    if (d1 < c.distance) c = {i, d1};
  }

  std::vector<std::pair<std::size_t, std::size_t>> kept;  // (a, b)
  for (std::size_t j = 0; j < claims.size(); ++j)
    if (claims[j].a != kNone) kept.emplace_back(claims[j].a, j);
  std::sort(kept.begin(), kept.end());

  std::vector<Correspondence> out;
  out.reserve(kept.size());
  for (const auto& [i, j] : kept)
    out.push_back({{a[i].keypoint.x, a[i].keypoint.y}, {b[j].keypoint.x, b[j].keypoint.y}});
  return out;
}

FundamentalMatrix canonicalize(const Eigen::Matrix3d& F) {
  const double norm = F.norm();
  if (!(norm > 0.0) || !std::isfinite(norm)) throw EstimationFailed("fundamental matrix has zero or non-finite norm");
  FundamentalMatrix out = F / norm;
  Eigen::Index r = 0, c = 0;
  out.cwiseAbs().maxCoeff(&r, &c);
  if (out(r, c) < 0) out = -out;
  return out;
}

namespace {

// Similarity moving the centroid to the origin with RMS distance sqrt(2).
Eigen::Matrix3d normalizing_transform(std::span<const Eigen::Vector2d> pts) {
  Eigen::Vector2d centroid = Eigen::Vector2d::Zero();
  for (const auto& p : pts) centroid += p;
  centroid /= static_cast<double>(pts.size());
  double ms = 0.0;
  for (const auto& p : pts) ms += (p - centroid).squaredNorm();
  const double rms = std::sqrt(ms / static_cast<double>(pts.size()));
  if (!(rms > 1e-12 * (1.0 + centroid.norm()))) throw EstimationFailed("points are coincident");
  const double s = std::sqrt(2.0) / rms;
  Eigen::Matrix3d T;
  T << s, 0, -s * centroid.x(), 0, s, -s * centroid.y(), 0, 0, 1;
  return T;
}

}  // namespace

FundamentalMatrix eight_point(std::span<const Correspondence> matches) {
  if (matches.size() < 8) throw std::invalid_argument("eight-point estimation needs at least 8 correspondences");
  std::vector<Eigen::Vector2d> pa, pb;
  pa.reserve(matches.size());
  pb.reserve(matches.size());
  for (const auto& m : matches) {
    if (!m.a.allFinite() || !m.b.allFinite()) throw std::invalid_argument("non-finite correspondence");
    pa.push_back(m.a);
    pb.push_back(m.b);
  }
  const Eigen::Matrix3d Ta = normalizing_transform(pa);
  const Eigen::Matrix3d Tb = normalizing_transform(pb);

  Eigen::Matrix<double, 9, 9> normal = Eigen::Matrix<double, 9, 9>::Zero();
  for (std::size_t i = 0; i < matches.size(); ++i) {
    const Eigen::Vector3d a = Ta * pa[i].homogeneous();
    const Eigen::Vector3d b = Tb * pb[i].homogeneous();
    Eigen::Matrix<double, 9, 1> row;
    row << b.x() * a.x(), b.x() * a.y(), b.x(), b.y() * a.x(), b.y() * a.y(), b.y(), a.x(), a.y(), 1.0;
    normal.selfadjointView<Eigen::Lower>().rankUpdate(row);
  }
  normal = normal.selfadjointView<Eigen::Lower>();

  const auto eig = jacobi_eigen<double, 9>(normal, 1e-12, 100);
  if (!(eig.values(1) > 1e-12 * std::max(eig.values(8), 1e-300)))
    throw EstimationFailed("degenerate configuration: solution space is not one-dimensional");

  Eigen::Matrix3d F;
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) F(r, c) = eig.vectors(3 * r + c, 0);

  Eigen::JacobiSVD<Eigen::Matrix3d> svd(F, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Eigen::Vector3d sv = svd.singularValues();
  sv(2) = 0.0;
  F = svd.matrixU() * sv.asDiagonal() * svd.matrixV().transpose();

  return canonicalize(Tb.transpose() * F * Ta);
}

double epipolar_residual(const Eigen::Matrix3d& F, const Correspondence& m) {
  return m.b.homogeneous().dot(F * m.a.homogeneous());
}

double sampson_distance(const Eigen::Matrix3d& F, const Correspondence& m) {
  const Eigen::Vector3d xa = m.a.homogeneous();
  const Eigen::Vector3d xb = m.b.homogeneous();
  const Eigen::Vector3d Fa = F * xa;
  const Eigen::Vector3d Fb = F.transpose() * xb;
  const double e = xb.dot(Fa);
  const double denom = Fa.x() * Fa.x() + Fa.y() * Fa.y() + Fb.x() * Fb.x() + Fb.y() * Fb.y();
  if (!(denom > 0.0)) return std::numeric_limits<double>::infinity();
  return std::abs(e) / std::sqrt(denom);
}

namespace {

std::size_t mark_inliers(const Eigen::Matrix3d& F, std::span<const Correspondence> matches, double threshold,
                         std::vector<std::uint8_t>& mask) {
  mask.assign(matches.size(), 0);
  std::size_t count = 0;
  for (std::size_t i = 0; i < matches.size(); ++i) {
    if (sampson_distance(F, matches[i]) < threshold) {
      mask[i] = 1;
      ++count;
    }
  }
  return count;
}

}  // namespace

RansacResult ransac_fundamental(std::span<const Correspondence> matches, const RansacParams& params) {
  params.validate();
  RansacResult result;
  result.inliers.assign(matches.size(), 0);
  const std::size_t n = matches.size();
  if (n < 8) return result;

  std::mt19937_64 rng(params.seed);
  std::vector<std::size_t> order(n);
  std::vector<Correspondence> sample(8);
  std::vector<std::uint8_t> mask;

  FundamentalMatrix best_F = FundamentalMatrix::Zero();
  std::vector<std::uint8_t> best_mask;
  std::size_t best_count = 0;

  for (std::size_t it = 0; it < params.max_iterations; ++it) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    for (std::size_t i = 0; i < 8; ++i) {
      std::swap(order[i], order[i + static_cast<std::size_t>(rng() % (n - i))]);
      sample[i] = matches[order[i]];
    }
    FundamentalMatrix F;
    try {
      F = eight_point(sample);
    } catch (const EstimationFailed&) {
      continue;
    }
    const std::size_t count = mark_inliers(F, matches, params.inlier_threshold, mask);
    if (count > best_count) {
      best_count = count;
      best_F = F;
      best_mask = mask;
    }
  }
  if (best_count < 8) return result;

  std::vector<Correspondence> consensus;
  consensus.reserve(best_count);
  for (std::size_t i = 0; i < n; ++i)
    if (best_mask[i]) consensus.push_back(matches[i]);
  try {
    const FundamentalMatrix refit = eight_point(consensus);
    const std::size_t count = mark_inliers(refit, matches, params.inlier_threshold, mask);
    if (count >= 8) {
      result.F = refit;
      result.inliers = mask;
      result.inlier_count = count;
      return result;
    }
  } catch (const EstimationFailed&) {
  }
  result.F = best_F;
  result.inliers = best_mask;
  result.inlier_count = best_count;
  return result;
}

}  // namespace ibow
