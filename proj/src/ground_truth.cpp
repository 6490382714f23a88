#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "ibow/eval.hpp"

namespace ibow {

std::size_t GroundTruth::positives() const {
  return static_cast<std::size_t>(std::count_if(loops.begin(), loops.end(), [](const auto& l) { return !l.empty(); }));
}

void GroundTruth::add(FrameIndex t, FrameIndex k) {
  if (k >= t) throw std::invalid_argument("ground-truth loops must point to earlier frames");
  if (loops.size() <= t) loops.resize(t + 1);
  auto& l = loops[t];
  const auto it = std::lower_bound(l.begin(), l.end(), k);
  if (it == l.end() || *it != k) l.insert(it, k);
}

namespace {

std::vector<std::vector<std::string>> tokenize_lines(const std::string& text) {
  std::vector<std::vector<std::string>> rows;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    std::replace(line.begin(), line.end(), ',', ' ');
    std::istringstream ls(line);
    std::vector<std::string> tokens;
    for (std::string tok; ls >> tok;) tokens.push_back(tok);
    if (!tokens.empty()) rows.push_back(std::move(tokens));
  }
  return rows;
}

std::size_t parse_index(const std::string& tok, std::size_t line) {
  std::size_t pos = 0;
  unsigned long long v = 0;
  try {
    v = std::stoull(tok, &pos);
  } catch (const std::exception&) {
    pos = 0;
  }
  if (pos != tok.size() || tok.empty() || tok[0] == '-')
    throw FormatError("ground truth line " + std::to_string(line) + ": '" + tok + "' is not a frame index");
  return static_cast<std::size_t>(v);
}

}  // namespace

GroundTruth parse_ground_truth(const std::string& text) {
  const auto rows = tokenize_lines(text);
  GroundTruth gt;
  if (rows.empty()) return gt;

  const std::size_t n = rows.size();
  const bool matrix = std::all_of(rows.begin(), rows.end(), [&](const auto& r) {
    return r.size() == n && std::all_of(r.begin(), r.end(), [](const std::string& t) { return t == "0" || t == "1"; });
  });

  if (matrix) {
    gt.loops.resize(n);
    for (std::size_t t = 0; t < n; ++t)
      for (std::size_t k = 0; k < t; ++k)
        if (rows[t][k] == "1") gt.loops[t].push_back(k);
    return gt;
  }

  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].size() != 2)
      throw FormatError("ground truth line " + std::to_string(i + 1) +
                        ": expected 't k' pair or a square 0/1 matrix row");
    const auto t = parse_index(rows[i][0], i + 1);
    const auto k = parse_index(rows[i][1], i + 1);
    if (k < t) gt.add(t, k);
    else if (gt.loops.size() <= t) gt.loops.resize(t + 1);
  }
  return gt;
}

GroundTruth load_ground_truth(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open ground truth " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_ground_truth(ss.str());
}

std::string to_pair_list(const GroundTruth& gt) {
  std::string out;
  for (std::size_t t = 0; t < gt.loops.size(); ++t)
    for (const auto k : gt.loops[t]) out += std::to_string(t) + ' ' + std::to_string(k) + '\n';
  return out;
}

// --- precision / recall -----------------------------------------------------

PrPoint compute_pr(std::span<const Decision> decisions, const GroundTruth& gt, std::size_t tolerance) {
  PrPoint pr;
  for (const auto& d : decisions) {
    if (!d.matched) continue;
    const FrameIndex f = *d.matched;
    bool hit = false;
    if (d.frame < gt.loops.size()) {
      for (const auto g : gt.loops[d.frame]) {
        if ((g > f ? g - f : f - g) <= tolerance) {
          hit = true;
          break;
        }
      }
    }
    if (hit) ++pr.tp;
    else ++pr.fp;
  }
  const std::size_t positives = gt.positives();
  pr.fn = positives - std::min(positives, pr.tp);
  pr.precision = pr.tp + pr.fp == 0 ? 1.0 : static_cast<double>(pr.tp) / static_cast<double>(pr.tp + pr.fp);
  pr.recall = positives == 0 ? 0.0 : static_cast<double>(pr.tp) / static_cast<double>(pr.tp + pr.fn);
  return pr;
}

PrPoint compute_pr(std::span<const LoopResult> results, const GroundTruth& gt, std::size_t tolerance) {
  std::vector<Decision> d;
  d.reserve(results.size());
  for (const auto& r : results)
    d.push_back({r.frame, r.status == LoopStatus::accepted ? r.matched : std::nullopt});
  return compute_pr(d, gt, tolerance);
}

std::vector<Decision> rethreshold(std::span<const LoopResult> results, std::size_t threshold) {
  std::vector<Decision> out;
  out.reserve(results.size());
  for (const auto& r : results) {
    Decision d{r.frame, std::nullopt};
    if (r.path == DecisionPath::shortcut && r.status == LoopStatus::accepted) d.matched = r.matched;
    else if (r.path == DecisionPath::geometry && r.inliers && *r.inliers >= threshold) d.matched = r.candidate;
    out.push_back(d);
  }
  return out;
}

SweepResult sweep_thresholds(std::span<const LoopResult> results, const GroundTruth& gt, std::size_t tolerance,
                             std::span<const std::size_t> thresholds) {
  SweepResult sweep;
  for (const auto th : thresholds) {
    auto p = compute_pr(rethreshold(results, th), gt, tolerance);
    p.threshold = th;
    if (p.fp == 0) sweep.max_recall_at_full_precision = std::max(sweep.max_recall_at_full_precision, p.recall);
    sweep.curve.push_back(p);
  }
  return sweep;
}

std::string pr_csv_header() { return "threshold,precision,recall,tp,fp,fn"; }

std::string to_csv_row(const PrPoint& p) {
  char buf[160];
  std::snprintf(buf, sizeof buf, "%zu,%.6f,%.6f,%zu,%zu,%zu", p.threshold, p.precision, p.recall, p.tp, p.fp, p.fn);
  return buf;
}

}  // namespace ibow
