#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <deque>
#include <fstream>
#include <functional>
#include <future>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "ibow/eval.hpp"

namespace ibow {

std::size_t RunConfig::tolerance() const {
  if (gt_tolerance) return *gt_tolerance;
  return mode == InputMode::synthetic ? detector.island_half_width : 0;
}

// --- config -----------------------------------------------------------------

namespace {

std::string trim(std::string s) {
  const auto not_space = [](unsigned char c) { return !std::isspace(c); };
  s.erase(s.begin(), std::find_if(s.begin(), s.end(), not_space));
  s.erase(std::find_if(s.rbegin(), s.rend(), not_space).base(), s.end());
  return s;
}

std::size_t to_size(const std::string& key, const std::string& v) {
  std::size_t pos = 0;
  unsigned long long x = 0;
  try {
    x = std::stoull(v, &pos);
  } catch (const std::exception&) {
    pos = 0;
  }
  if (pos != v.size() || v.empty() || v[0] == '-')
    throw std::invalid_argument("config key '" + key + "': expected a non-negative integer, got '" + v + "'");
  return static_cast<std::size_t>(x);
}

double to_double(const std::string& key, const std::string& v) {
  std::size_t pos = 0;
  double x = 0;
  try {
    x = std::stod(v, &pos);
  } catch (const std::exception&) {
    pos = 0;
  }
  if (pos != v.size() || v.empty() || !std::isfinite(x))
    throw std::invalid_argument("config key '" + key + "': expected a number, got '" + v + "'");
  return x;
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "1" || v == "true" || v == "yes" || v == "on") return true;
  if (v == "0" || v == "false" || v == "no" || v == "off") return false;
  throw std::invalid_argument("config key '" + key + "': expected a boolean, got '" + v + "'");
}

std::vector<std::size_t> to_list(const std::string& key, const std::string& v) {
  std::vector<std::size_t> out;
  std::stringstream ss(v);
  for (std::string item; std::getline(ss, item, ',');) {
    item = trim(item);
    if (!item.empty()) out.push_back(to_size(key, item));
  }
  return out;
}

using Setter = std::function<void(RunConfig&, const std::string&, const std::filesystem::path&)>;

const std::vector<std::pair<std::string, Setter>>& setters() {
  static const std::vector<std::pair<std::string, Setter>> table = {
      {"K", [](RunConfig& c, const std::string& v, auto&) { c.vocab.forest.branching = to_size("K", v); }},
      {"S", [](RunConfig& c, const std::string& v, auto&) { c.vocab.forest.max_leaf = to_size("S", v); }},
      {"T_i", [](RunConfig& c, const std::string& v, auto&) { c.vocab.forest.trees = to_size("T_i", v); }},
      {"p", [](RunConfig& c, const std::string& v, auto&) { c.detector.buffer = to_size("p", v); }},
      {"features",
       [](RunConfig& c, const std::string& v, auto&) { c.features = c.synthetic.features = to_size("features", v); }},
      {"P_f", [](RunConfig& c, const std::string& v, auto&) { c.vocab.purge_frames = to_size("P_f", v); }},
      {"P_o", [](RunConfig& c, const std::string& v, auto&) { c.vocab.min_observations = to_size("P_o", v); }},
      {"tau_im", [](RunConfig& c, const std::string& v, auto&) { c.detector.tau_im = to_double("tau_im", v); }},
      {"b", [](RunConfig& c, const std::string& v, auto&) { c.detector.island_half_width = to_size("b", v); }},
      {"tau_c",
       [](RunConfig& c, const std::string& v, auto&) {
         c.detector.tau_c = (v == "inf" || v == "off") ? kNoShortcut : to_size("tau_c", v);
       }},
      {"mode",
       [](RunConfig& c, const std::string& v, auto&) {
         if (v == "synthetic") c.mode = InputMode::synthetic;
         else if (v == "images") c.mode = InputMode::images;
         else if (v == "features") c.mode = InputMode::features;
         else throw std::invalid_argument("config key 'mode': expected synthetic, images or features");
       }},
      {"input", [](RunConfig& c, const std::string& v, const std::filesystem::path& base) { c.input = base / v; }},
      {"ground_truth",
       [](RunConfig& c, const std::string& v, const std::filesystem::path& base) { c.ground_truth = base / v; }},
      {"output", [](RunConfig& c, const std::string& v, const std::filesystem::path& base) { c.output = base / v; }},
      {"seed",
       [](RunConfig& c, const std::string& v, auto&) {
         c.seed = to_size("seed", v);
         c.vocab.seed = c.detector.ransac.seed = c.synthetic.seed = c.seed;
       }},
      {"min_inliers", [](RunConfig& c, const std::string& v, auto&) { c.detector.min_inliers = to_size("min_inliers", v); }},
      {"ratio", [](RunConfig& c, const std::string& v, auto&) { c.vocab.ratio = to_double("ratio", v); }},
      {"match_ratio", [](RunConfig& c, const std::string& v, auto&) { c.detector.match_ratio = to_double("match_ratio", v); }},
      {"budget", [](RunConfig& c, const std::string& v, auto&) { c.vocab.forest.budget = to_size("budget", v); }},
      {"ransac_iterations",
       [](RunConfig& c, const std::string& v, auto&) { c.detector.ransac.max_iterations = to_size("ransac_iterations", v); }},
      {"ransac_threshold",
       [](RunConfig& c, const std::string& v, auto&) {
         c.detector.ransac.inlier_threshold = to_double("ransac_threshold", v);
       }},
      {"corner_threshold",
       [](RunConfig& c, const std::string& v, auto&) {
         c.extractor.corner_threshold = static_cast<int>(to_size("corner_threshold", v));
       }},
      {"descriptor_bits",
       [](RunConfig& c, const std::string& v, auto&) {
         c.extractor.descriptor_bits = c.synthetic.descriptor_bits = to_size("descriptor_bits", v);
       }},
      {"pattern_seed", [](RunConfig& c, const std::string& v, auto&) { c.extractor.pattern_seed = to_size("pattern_seed", v); }},
      {"purge", [](RunConfig& c, const std::string& v, auto&) { c.vocab.purge_enabled = to_bool("purge", v); }},
      {"gt_tolerance", [](RunConfig& c, const std::string& v, auto&) { c.gt_tolerance = to_size("gt_tolerance", v); }},
      {"thresholds", [](RunConfig& c, const std::string& v, auto&) { c.thresholds = to_list("thresholds", v); }},
      {"synth_plan", [](RunConfig& c, const std::string& v, auto&) { c.synthetic.plan = v; }},
      {"synth_noise_bits",
       [](RunConfig& c, const std::string& v, auto&) { c.synthetic.noise_bits = to_size("synth_noise_bits", v); }},
  };
  return table;
}

}  // namespace

std::vector<std::string> config_keys() {
  std::vector<std::string> keys;
  for (const auto& [k, _] : setters()) keys.push_back(k);
  return keys;
}

RunConfig parse_config(const std::string& text, const std::filesystem::path& base_dir) {
  RunConfig cfg;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument("config line " + std::to_string(lineno) + ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    const auto& table = setters();
    const auto it = std::find_if(table.begin(), table.end(), [&](const auto& e) { return e.first == key; });
    if (it == table.end())
      throw std::invalid_argument("config line " + std::to_string(lineno) + ": unknown key '" + key + "'");
    it->second(cfg, value, base_dir);
  }
  cfg.vocab.validate();
  cfg.detector.validate();
  if (cfg.mode != InputMode::synthetic && cfg.input.empty())
    throw std::invalid_argument("config: 'input' is required for images/features mode");
  if (!std::is_sorted(cfg.thresholds.begin(), cfg.thresholds.end()))
    throw std::invalid_argument("config: thresholds must be ascending");
  return cfg;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), path.parent_path());
}

// --- harness ----------------------------------------------------------------

std::vector<std::filesystem::path> list_frames(const std::filesystem::path& dir, const std::string& extension) {
  if (!std::filesystem::is_directory(dir)) throw std::runtime_error("not a directory: " + dir.string());
  std::vector<std::filesystem::path> out;
  for (const auto& e : std::filesystem::directory_iterator(dir))
    if (e.is_regular_file() && e.path().extension() == extension) out.push_back(e.path());
  std::sort(out.begin(), out.end(),
            [](const auto& a, const auto& b) { return a.filename().string() < b.filename().string(); });
  return out;
}

namespace {

/// Loads frames ahead of the consumer with a bounded queue of async tasks.
class Prefetcher {
 public:
  Prefetcher(std::size_t count, std::function<FeatureList(std::size_t)> load, std::size_t depth = 4)
      : count_(count), load_(std::move(load)), depth_(depth) {
    fill();
  }

  FeatureList next() {
    auto f = std::move(queue_.front());
    queue_.pop_front();
    fill();
    return f.get();
  }

 private:
  void fill() {
    while (queue_.size() < depth_ && issued_ < count_) {
      const std::size_t i = issued_++;
      queue_.push_back(std::async(std::launch::async, load_, i));
    }
  }

  std::size_t count_;
  std::function<FeatureList(std::size_t)> load_;
  std::size_t depth_;
  std::size_t issued_ = 0;
  std::deque<std::future<FeatureList>> queue_;
};

}  // namespace

RunOutput run_sequence(const RunConfig& config) {
  RunOutput out;
  std::size_t frame_count = 0;
  std::function<FeatureList(std::size_t)> load;
  std::optional<SyntheticSequence> synthetic;

  switch (config.mode) {
    case InputMode::synthetic: {
      synthetic = generate_synthetic(config.synthetic);
      frame_count = synthetic->frames.size();
      out.ground_truth = synthetic->ground_truth;
      load = [&](std::size_t i) { return synthetic->frames[i]; };
      break;
    }
    case InputMode::features: {
      auto files = std::make_shared<std::vector<std::filesystem::path>>(list_frames(config.input, ".ibwf"));
      frame_count = files->size();
      const std::size_t bits = config.extractor.descriptor_bits;
      load = [files, bits](std::size_t i) {
        try {
          return read_features((*files)[i], bits);
        } catch (const std::exception& e) {
          throw std::runtime_error("frame " + std::to_string(i) + ": " + e.what());
        }
      };
      break;
    }
    case InputMode::images: {
      auto files = std::make_shared<std::vector<std::filesystem::path>>(list_frames(config.input, ".pgm"));
      frame_count = files->size();
      const auto params = config.extractor;
      const std::size_t target = config.features;
      load = [files, params, target](std::size_t i) {
        try {
          return extract_features(load_pgm((*files)[i]), target, params);
        } catch (const std::exception& e) {
          throw std::runtime_error("frame " + std::to_string(i) + ": " + e.what());
        }
      };
      break;
    }
  }
  if (config.mode != InputMode::synthetic && !config.ground_truth.empty())
    out.ground_truth = load_ground_truth(config.ground_truth);

  LoopDetector detector(config.detector, config.vocab);
  Prefetcher prefetch(frame_count, load, config.mode == InputMode::synthetic ? 1 : 4);
  std::optional<std::size_t> width;
  for (std::size_t i = 0; i < frame_count; ++i) {
    FeatureList frame = prefetch.next();
    for (const auto& f : frame) {
      if (!width) width = f.descriptor.width();
      if (f.descriptor.width() != *width)
        throw std::runtime_error("frame " + std::to_string(i) + ": descriptor width " +
                                 std::to_string(f.descriptor.width()) + " differs from " + std::to_string(*width));
    }
    const auto start = std::chrono::steady_clock::now();
    out.results.push_back(detector.on_frame(std::move(frame)));
    const auto stop = std::chrono::steady_clock::now();
    out.frame_ms.push_back(std::chrono::duration<double, std::milli>(stop - start).count());
    out.diagnostics.push_back(detector.last_stats());
  }
  out.final_vocabulary = detector.has_vocabulary() ? detector.vocabulary().size() : 0;
  return out;
}

TimingSummary summarize_timing(std::span<const double> frame_ms) {
  TimingSummary s;
  if (frame_ms.empty()) return s;
  s.mean_ms = std::accumulate(frame_ms.begin(), frame_ms.end(), 0.0) / static_cast<double>(frame_ms.size());
  std::vector<double> sorted(frame_ms.begin(), frame_ms.end());
  std::sort(sorted.begin(), sorted.end());
  const auto rank = static_cast<std::size_t>(std::ceil(0.95 * static_cast<double>(sorted.size())));
  s.p95_ms = sorted[std::max<std::size_t>(rank, 1) - 1];
  return s;
}

std::string summary_text(const RunConfig& config, const RunOutput& run, const std::optional<SweepResult>& sweep) {
  std::size_t accepted = 0, shortcut = 0;
  for (const auto& r : run.results) {
    if (r.status != LoopStatus::accepted) continue;
    ++accepted;
    if (r.path == DecisionPath::shortcut) ++shortcut;
  }
  const auto timing = summarize_timing(run.frame_ms);
  char buf[128];
  std::ostringstream out;
  out << "frames: " << run.results.size() << '\n';
  out << "accepted_loops: " << accepted << '\n';
  out << "shortcut_acceptances: " << shortcut << '\n';
  out << "final_vocabulary_size: " << run.final_vocabulary << '\n';
  std::snprintf(buf, sizeof buf, "%.3f", timing.mean_ms);
  out << "mean_frame_ms: " << buf << '\n';
  std::snprintf(buf, sizeof buf, "%.3f", timing.p95_ms);
  out << "p95_frame_ms: " << buf << '\n';
  if (run.ground_truth) {
    const auto live = compute_pr(run.results, *run.ground_truth, config.tolerance());
    std::snprintf(buf, sizeof buf, "%.6f %.6f", live.precision, live.recall);
    out << "live_threshold: " << config.detector.min_inliers << '\n';
    out << "live_precision_recall: " << buf << '\n';
  }
  if (sweep) {
    std::snprintf(buf, sizeof buf, "%.6f", sweep->max_recall_at_full_precision);
    out << "max_recall_at_precision_1: " << buf << '\n';
  }
  return out.str();
}

void write_outputs(const RunConfig& config, const RunOutput& run, const std::optional<SweepResult>& sweep) {
  std::filesystem::create_directories(config.output);
  auto open = [&](const char* name) {
    std::ofstream f(config.output / name);
    if (!f) throw std::runtime_error("cannot write " + (config.output / name).string());
    return f;
  };
  {
    auto f = open("results.csv");
    f << results_csv_header() << '\n';
    for (const auto& r : run.results) f << to_csv_row(r) << '\n';
  }
  {
    auto f = open("diagnostics.csv");
    f << diagnostics_csv_header() << '\n';
    for (const auto& s : run.diagnostics) f << to_csv_row(s) << '\n';
  }
  if (sweep) {
    auto f = open("pr_curve.csv");
    f << pr_csv_header() << '\n';
    for (const auto& p : sweep->curve) f << to_csv_row(p) << '\n';
  }
  auto f = open("summary.txt");
  f << summary_text(config, run, sweep);
}

}  // namespace ibow

namespace ibow {

SyntheticSpec parse_synthetic_spec(const std::string& text) {
  SyntheticSpec spec;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument("synth spec line " + std::to_string(lineno) + ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key == "plan") spec.plan = value;
    else if (key == "noise_bits") spec.noise_bits = to_size(key, value);
    else if (key == "features") spec.features = to_size(key, value);
    else if (key == "descriptor_bits") spec.descriptor_bits = to_size(key, value);
    else if (key == "seed") spec.seed = to_size(key, value);
    else throw std::invalid_argument("synth spec line " + std::to_string(lineno) + ": unknown key '" + key + "'");
  }
  return spec;
}

void write_synthetic(const SyntheticSequence& seq, const SyntheticSpec& spec, const std::filesystem::path& dir,
                     std::size_t tolerance) {
  std::filesystem::create_directories(dir);
  for (std::size_t i = 0; i < seq.frames.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "frame_%06zu.ibwf", i);
    write_features(dir / name, seq.frames[i], 0);
  }
  std::ofstream(dir / "ground_truth.txt") << to_pair_list(seq.ground_truth);
  std::ofstream cfg(dir / "run.cfg");
  cfg << "# replays the synthetic sequence from its feature files\n"
      << "mode = features\ninput = .\nground_truth = ground_truth.txt\noutput = out\n"
      << "descriptor_bits = " << spec.descriptor_bits << '\n'
      << "features = " << spec.features << '\n'
      << "gt_tolerance = " << tolerance << '\n'
      << "seed = " << spec.seed << '\n';
}

}  // namespace ibow
