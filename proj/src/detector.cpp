#include "ibow/detector.hpp"

#include <algorithm>
#include <cstdio>
#include <stdexcept>

namespace ibow {

void DetectorParams::validate() const {
  if (!(tau_im >= 0.0 && tau_im < 1.0)) throw std::invalid_argument("tau_im must lie in [0, 1)");
  if (min_inliers < 8) throw std::invalid_argument("min_inliers must be >= 8");
  if (!(match_ratio > 0.0 && match_ratio < 1.0)) throw std::invalid_argument("match ratio must lie in (0, 1)");
  ransac.validate();
}

std::vector<NormalizedScore> normalize_scores(std::span<const ScoredImage> scored) {
  std::vector<NormalizedScore> out;
  out.reserve(scored.size());
  if (scored.empty()) return out;
  double lo = scored.front().score, hi = lo;
  for (const auto& s : scored) {
    lo = std::min(lo, s.score);
    hi = std::max(hi, s.score);
  }
  const double range = hi - lo;
  for (const auto& s : scored) {
    const double v = range > 0.0 ? (s.score - lo) / range : 1.0;
    out.push_back({s.image, std::clamp(v, 0.0, 1.0)});
  }
  return out;
}

std::vector<NormalizedScore> filter_candidates(std::span<const NormalizedScore> normalized, double tau_im) {
  std::vector<NormalizedScore> out;
  for (const auto& c : normalized)
    if (c.score >= tau_im) out.push_back(c);
  return out;
}

double island_score(const Island& island) {
  if (island.members.empty()) throw std::invalid_argument("island without members");
  if (island.n < island.m) throw std::invalid_argument("island interval is reversed");
  double sum = 0.0;
  for (const auto& s : island.members) sum += s.score;
  return sum / static_cast<double>(island.n - island.m + 1);
}

namespace {

ImageId pick_representative(const std::vector<NormalizedScore>& members) {
  const NormalizedScore* best = &members.front();
  for (const auto& s : members)
    if (s.score > best->score || (s.score == best->score && s.image < best->image)) best = &s;
  return best->image;
}

}  // namespace

std::vector<Island> build_islands(std::span<const NormalizedScore> candidates, std::size_t b, FrameIndex last_frame) {
  std::vector<Island> islands;
  const auto lower = [&](FrameIndex c) { return c > b ? c - b : FrameIndex{0}; };
  const auto upper = [&](FrameIndex c) { return std::max(c, std::min(last_frame, c + b)); };

  for (const auto& cand : candidates) {
    const FrameIndex c = cand.image;
    bool found = false;
    for (auto& isl : islands) {
      if (isl.m < c && c < isl.n) {
        isl.members.push_back(cand);
        isl.m = std::min(isl.m, lower(c));
        isl.n = std::max(isl.n, upper(c));
        found = true;
        break;
      }
    }
    if (!found) islands.push_back({lower(c), upper(c), {cand}, 0, 0.0});
  }
  if (islands.empty()) return islands;

  for (auto& isl : islands) isl.representative = pick_representative(isl.members);

  // Trim overlapping pairs at the midpoint between representatives.
  const std::vector<Island> original = islands;
  for (std::size_t i = 0; i < original.size(); ++i) {
    for (std::size_t j = 0; j < original.size(); ++j) {
      if (i == j || !original[i].overlaps(original[j])) continue;
      const FrameIndex ri = original[i].representative, rj = original[j].representative;
      if (ri < rj) islands[i].n = std::min(islands[i].n, (ri + rj - 1) / 2);
      else islands[i].m = std::max(islands[i].m, (ri + rj) / 2 + 1);
    }
  }

  std::vector<NormalizedScore> all;
  for (auto& isl : islands) {
    all.insert(all.end(), isl.members.begin(), isl.members.end());
    isl.members.clear();
  }
  for (const auto& s : all) {
    const FrameIndex c = s.image;
    auto home = std::find_if(islands.begin(), islands.end(), [&](const Island& isl) { return isl.contains(c); });
    if (home == islands.end()) {
      const auto dist = [&](const Island& isl) {
        const FrameIndex r = isl.representative;
        return r > c ? r - c : c - r;
      };
      home = std::min_element(islands.begin(), islands.end(), [&](const Island& a, const Island& b2) {
        return dist(a) != dist(b2) ? dist(a) < dist(b2) : a.representative < b2.representative;
      });
      home->m = std::min(home->m, c);
      home->n = std::max(home->n, c);
    }
    home->members.push_back(s);
  }

  std::erase_if(islands, [](const Island& isl) { return isl.members.empty(); });
  for (auto& isl : islands) {
    std::sort(isl.members.begin(), isl.members.end(),
              [](const NormalizedScore& a, const NormalizedScore& b2) { return a.image < b2.image; });
    isl.representative = pick_representative(isl.members);
    isl.score_g = island_score(isl);
  }
  std::sort(islands.begin(), islands.end(), [](const Island& a, const Island& b2) {
    return a.score_g != b2.score_g ? a.score_g > b2.score_g : a.m < b2.m;
  });
  return islands;
}

IslandChoice select_island(std::span<const Island> islands, const std::optional<Island>& previous) {
  if (islands.empty()) throw std::invalid_argument("no islands to select from");
  const auto better = [&](std::size_t a, std::size_t b) {
    return islands[a].score_g != islands[b].score_g ? islands[a].score_g > islands[b].score_g
                                                    : islands[a].m < islands[b].m;
  };
  if (previous) {
    std::optional<std::size_t> best;
    for (std::size_t i = 0; i < islands.size(); ++i)
      if (islands[i].overlaps(*previous) && (!best || better(i, *best))) best = i;
    if (best) return {*best, true};
  }
  std::size_t best = 0;
  for (std::size_t i = 1; i < islands.size(); ++i)
    if (better(i, best)) best = i;
  return {best, false};
}

std::string to_string(LoopStatus s) {
  switch (s) {
    case LoopStatus::accepted: return "accepted";
    case LoopStatus::rejected: return "rejected";
    case LoopStatus::skipped: return "skipped";
  }
  return "?";
}

std::string to_string(DecisionPath p) {
  switch (p) {
    case DecisionPath::none: return "";
    case DecisionPath::geometry: return "geometry";
    case DecisionPath::shortcut: return "shortcut";
  }
  return "?";
}

std::string results_csv_header() { return "frame,status,matched,inliers,path,island_m,island_n,G"; }

std::string to_csv_row(const LoopResult& r) {
  std::string row = std::to_string(r.frame) + ',' + to_string(r.status) + ',';
  if (r.matched) row += std::to_string(*r.matched);
  row += ',';
  if (r.inliers) row += std::to_string(*r.inliers);
  row += ',' + to_string(r.path) + ',';
  if (r.island) {
    char g[32];
    std::snprintf(g, sizeof g, "%.6f", r.island->score_g);
    row += std::to_string(r.island->m) + ',' + std::to_string(r.island->n) + ',' + g;
  } else {
    row += ",,";
  }
  return row;
}

// --- LoopDetector -----------------------------------------------------------

LoopDetector::LoopDetector(DetectorParams params, VocabParams vocab_params)
    : params_(params), vocab_params_(vocab_params) {
  params_.validate();
  vocab_params_.validate();
}

void LoopDetector::reset_tracking() {
  consecutive_ = 0;
  previous_.reset();
}

LoopResult LoopDetector::on_frame(FeatureList features) {
  const FrameIndex t = frames_.size();
  LoopResult result;
  result.frame = t;

  if (!vocabulary_) {
    if (!features.empty()) {
      vocabulary_.emplace(features, vocab_params_, static_cast<ImageId>(t), t);
      last_stats_ = {t, vocabulary_->size(), vocabulary_->temporary_count(), 0, vocabulary_->size(), 0};
    } else {
      last_stats_ = {t, 0, 0, 0, 0, 0};
    }
    frames_.push_back(std::move(features));
    reset_tracking();
    return result;
  }

  // Candidates must be at least p frames old.
  const std::size_t p = params_.buffer;
  const ImageFilter exclude = [t, p](ImageId id) { return static_cast<FrameIndex>(id) + p > t; };
  auto update = vocabulary_->process_image(features, static_cast<ImageId>(t), t, exclude);
  last_stats_ = update.stats;

  const auto finish = [&](LoopStatus status) {
    result.status = status;
    if (status == LoopStatus::accepted) {
      ++consecutive_;
      previous_ = result.island;
    } else {
      reset_tracking();
    }
    frames_.push_back(std::move(features));
    return result;
  };

  if (t < p) return finish(LoopStatus::skipped);
  if (update.scores.empty()) return finish(LoopStatus::rejected);

  const auto candidates = filter_candidates(normalize_scores(update.scores), params_.tau_im);
  if (candidates.empty()) return finish(LoopStatus::rejected);

  const auto islands = build_islands(candidates, params_.island_half_width, t - 1);
  const auto choice = select_island(islands, previous_);
  result.island = islands[choice.index];
  result.priority = choice.priority;
  result.candidate = result.island->representative;

  if (choice.priority && params_.tau_c != kNoShortcut && consecutive_ > params_.tau_c) {
    result.path = DecisionPath::shortcut;
    result.matched = result.candidate;
    return finish(LoopStatus::accepted);
  }

  result.path = DecisionPath::geometry;
  const auto matches = ratio_match(features, frames_[*result.candidate], params_.match_ratio);
  const auto ransac = ransac_fundamental(matches, params_.ransac);
  result.inliers = ransac.inlier_count;
  if (ransac.inlier_count >= params_.min_inliers) {
    result.matched = result.candidate;
    return finish(LoopStatus::accepted);
  }
  return finish(LoopStatus::rejected);
}

}  // namespace ibow
