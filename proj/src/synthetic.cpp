#include <algorithm>
#include <cmath>
#include <cctype>
#include <numeric>
#include <optional>
#include <random>
#include <stdexcept>

#include <Eigen/Geometry>

#include "ibow/eval.hpp"

namespace ibow {

namespace {

constexpr double kFocal = 500.0;
constexpr double kCx = 320.0, kCy = 240.0;
constexpr double kWidth = 640.0, kHeight = 480.0;
constexpr double kStep = 2.0;  // camera advance per new place
constexpr double kMinDepth = 5.0, kMaxDepth = 20.0;
constexpr double kHalfFov = kCx / kFocal;   // tan of the horizontal half angle
constexpr double kHalfFovY = kCy / kFocal;

struct Segment {
  bool revisit = false;
  std::size_t count = 0;
  std::size_t from = 0, to = 0;
};

std::vector<Segment> parse_plan(const std::string& plan) {
  std::vector<Segment> out;
  std::size_t pos = 0;
  auto number = [&](const std::string& tok, std::size_t& i) {
    const std::size_t start = i;
    while (i < tok.size() && std::isdigit(static_cast<unsigned char>(tok[i]))) ++i;
    if (i == start) throw std::invalid_argument("synthetic plan: expected a number in '" + tok + "'");
    return static_cast<std::size_t>(std::stoull(tok.substr(start, i - start)));
  };
  while (pos <= plan.size()) {
    auto comma = plan.find(',', pos);
    if (comma == std::string::npos) comma = plan.size();
    std::string tok = plan.substr(pos, comma - pos);
    tok.erase(std::remove_if(tok.begin(), tok.end(), [](unsigned char c) { return std::isspace(c); }), tok.end());
    pos = comma + 1;
    if (tok.empty()) continue;
    std::size_t i = 1;
    Segment s;
    if (tok[0] == 'N' || tok[0] == 'n') {
      s.count = number(tok, i);
    } else if (tok[0] == 'R' || tok[0] == 'r') {
      s.revisit = true;
      s.from = number(tok, i);
      if (i >= tok.size() || tok[i] != '-') throw std::invalid_argument("synthetic plan: revisit needs 'R<a>-<b>'");
      ++i;
      s.to = number(tok, i);
      s.count = (s.from > s.to ? s.from - s.to : s.to - s.from) + 1;
    } else {
      throw std::invalid_argument("synthetic plan: unknown segment '" + tok + "'");
    }
    if (i != tok.size()) throw std::invalid_argument("synthetic plan: trailing characters in '" + tok + "'");
    out.push_back(s);
  }
  if (out.empty()) throw std::invalid_argument("synthetic plan is empty");
  return out;
}

struct Landmark {
  Eigen::Vector3d position;
  BinaryDescriptor descriptor;
};

struct Pose {
  Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();  // world -> camera
  Eigen::Vector3d centre = Eigen::Vector3d::Zero();
};

std::optional<Eigen::Vector2d> project(const Pose& pose, const Eigen::Vector3d& X) {
  const Eigen::Vector3d c = pose.rotation * (X - pose.centre);
  if (c.z() < 0.1) return std::nullopt;
  const Eigen::Vector2d uv(kFocal * c.x() / c.z() + kCx, kFocal * c.y() / c.z() + kCy);
  if (uv.x() < 0.0 || uv.x() >= kWidth || uv.y() < 0.0 || uv.y() >= kHeight) return std::nullopt;
  return uv;
}

}  // namespace

SyntheticSequence generate_synthetic(const SyntheticSpec& spec) {
  if (spec.features == 0) throw std::invalid_argument("synthetic sequence needs features > 0");
  if (spec.noise_bits > spec.descriptor_bits) throw std::invalid_argument("noise bits exceed descriptor width");
  const auto segments = parse_plan(spec.plan);

  std::size_t new_places = 0;
  for (const auto& s : segments)
    if (!s.revisit) new_places += s.count;

  std::mt19937_64 rng(spec.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto uniform = [&](double lo, double hi) { return lo + (hi - lo) * unit(rng); };

  // Landmark density chosen so that about `features` landmarks are in view.
  const double margin = kHalfFov * kMaxDepth + 1.0;
  const double x_lo = -margin;
  const double x_hi = kStep * static_cast<double>(new_places > 0 ? new_places - 1 : 0) + margin;
  const double mean_width = kHalfFov * (kMinDepth + kMaxDepth);  // expected visible x-extent
  const auto landmark_count =
      static_cast<std::size_t>(std::llround(static_cast<double>(spec.features) / mean_width * (x_hi - x_lo)));

  std::vector<Landmark> landmarks;
  landmarks.reserve(landmark_count);
  for (std::size_t i = 0; i < landmark_count; ++i) {
    const double z = uniform(kMinDepth, kMaxDepth);
    Landmark l{{uniform(x_lo, x_hi), uniform(-kHalfFovY * z, kHalfFovY * z), z}, BinaryDescriptor(spec.descriptor_bits)};
    for (std::size_t b = 0; b < spec.descriptor_bits; ++b) l.descriptor.set(b, (rng() >> 63) != 0);
    landmarks.push_back(std::move(l));
  }
  std::sort(landmarks.begin(), landmarks.end(),
            [](const Landmark& a, const Landmark& b) { return a.position.x() < b.position.x(); });

  SyntheticSequence seq;
  std::vector<Pose> poses;
  std::vector<std::vector<std::size_t>> observed;  // landmark indices per frame
  std::vector<std::size_t> place;                  // place index per frame
  std::vector<std::size_t> flip_order(spec.descriptor_bits);

  auto emit = [&](const Pose& pose, const std::vector<std::size_t>& candidates, std::size_t noise) {
    FeatureList feats;
    std::vector<std::size_t> seen;
    for (const auto li : candidates) {
      const auto uv = project(pose, landmarks[li].position);
      if (!uv) continue;
      Feature f{{static_cast<float>(uv->x()), static_cast<float>(uv->y()), 1.0f}, landmarks[li].descriptor};
      if (noise > 0) {
        std::iota(flip_order.begin(), flip_order.end(), std::size_t{0});
        for (std::size_t k = 0; k < noise; ++k) {
          std::swap(flip_order[k], flip_order[k + rng() % (flip_order.size() - k)]);
          f.descriptor.flip(flip_order[k]);
        }
      }
      feats.push_back(std::move(f));
      seen.push_back(li);
    }
    return std::pair{std::move(feats), std::move(seen)};
  };

  std::size_t next_place = 0;
  for (const auto& s : segments) {
    if (!s.revisit) {
      for (std::size_t i = 0; i < s.count; ++i, ++next_place) {
        Pose pose;
        pose.centre = {kStep * static_cast<double>(next_place), 0.0, 0.0};
        const double cx = pose.centre.x();
        const auto lo = std::lower_bound(landmarks.begin(), landmarks.end(), cx - margin,
                                         [](const Landmark& l, double v) { return l.position.x() < v; });
        const auto hi = std::upper_bound(landmarks.begin(), landmarks.end(), cx + margin,
                                         [](double v, const Landmark& l) { return v < l.position.x(); });
        std::vector<std::size_t> cand(static_cast<std::size_t>(hi - lo));
        std::iota(cand.begin(), cand.end(), static_cast<std::size_t>(lo - landmarks.begin()));
        auto [feats, seen] = emit(pose, cand, 0);
        seq.frames.push_back(std::move(feats));
        seq.ground_truth.loops.emplace_back();
        seq.source.push_back(seq.frames.size() - 1);
        poses.push_back(pose);
        observed.push_back(std::move(seen));
        place.push_back(next_place);
      }
      continue;
    }
    const std::size_t start = seq.frames.size();
    if (s.from >= start || s.to >= start)
      throw std::invalid_argument("synthetic plan: revisit of frames not yet generated");
    for (std::size_t i = 0; i < s.count; ++i) {
      const std::size_t src = s.from <= s.to ? s.from + i : s.from - i;
      const double deg = M_PI / 180.0;
      Pose pose;
      pose.rotation = (Eigen::AngleAxisd(uniform(-deg, deg), Eigen::Vector3d::UnitY()) *
                       Eigen::AngleAxisd(uniform(-deg, deg), Eigen::Vector3d::UnitX()) *
                       Eigen::AngleAxisd(uniform(-deg, deg), Eigen::Vector3d::UnitZ()))
                          .toRotationMatrix() *
                      poses[src].rotation;
      pose.centre = poses[src].centre + Eigen::Vector3d(uniform(-0.3, 0.3), uniform(-0.1, 0.1), uniform(-0.3, 0.3));
      auto [feats, seen] = emit(pose, observed[src], spec.noise_bits);
      const FrameIndex t = seq.frames.size();
      seq.frames.push_back(std::move(feats));
      seq.ground_truth.loops.emplace_back();
      for (FrameIndex q = 0; q < t; ++q)
        if (place[q] == place[src]) seq.ground_truth.loops[t].push_back(q);
      seq.source.push_back(src);
      poses.push_back(pose);
      observed.push_back(std::move(seen));
      place.push_back(place[src]);
    }
  }
  return seq;
}

}  // namespace ibow
