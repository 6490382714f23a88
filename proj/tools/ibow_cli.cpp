// Command-line front end: feature extraction, detection runs, threshold
// sweeps and synthetic sequence generation.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "ibow/eval.hpp"

namespace {

std::vector<std::size_t> parse_thresholds(const std::string& text) {
  std::vector<std::size_t> out;
  std::stringstream ss(text);
  for (std::string item; std::getline(ss, item, ',');)
    if (!item.empty()) out.push_back(static_cast<std::size_t>(std::stoull(item)));
  return out;
}

int cmd_extract(const std::string& img_dir, const std::string& feat_dir, std::size_t features,
                const ibow::ExtractorParams& params) {
  std::filesystem::create_directories(feat_dir);
  const auto frames = ibow::list_frames(img_dir, ".pgm");
  for (const auto& path : frames) {
    const auto img = ibow::load_pgm(path);
    const auto kps = ibow::detect_corners(img, features, params.corner_threshold);
    ibow::ExtractionStats stats;
    const auto feats = ibow::extract_descriptors(img, kps, params, &stats);
    auto out = std::filesystem::path(feat_dir) / path.filename();
    out.replace_extension(".ibwf");
    ibow::write_features(out, feats, params.pattern_seed);
    std::cout << path.filename().string() << ": " << feats.size() << " features (" << stats.dropped_at_border
              << " dropped at border)\n";
  }
  return 0;
}

int cmd_run(const std::string& config_path, const std::optional<std::vector<std::size_t>>& thresholds) {
  auto config = ibow::load_config(config_path);
  const auto run = ibow::run_sequence(config);
  std::optional<ibow::SweepResult> sweep;
  if (run.ground_truth) {
    std::vector<std::size_t> th = thresholds ? *thresholds : config.thresholds;
    if (th.empty()) th = {config.detector.min_inliers};
    if (!std::is_sorted(th.begin(), th.end())) throw std::invalid_argument("thresholds must be ascending");
    sweep = ibow::sweep_thresholds(run.results, *run.ground_truth, config.tolerance(), th);
  } else if (thresholds) {
    std::cerr << "warning: no ground truth configured, skipping the precision-recall sweep\n";
  }
  ibow::write_outputs(config, run, sweep);
  std::cout << ibow::summary_text(config, run, sweep);
  std::cout << "outputs written to " << config.output.string() << '\n';
  return 0;
}

int cmd_synth(const std::string& spec_path, const std::string& out_dir) {
  std::ifstream in(spec_path);
  if (!in) throw std::runtime_error("cannot open synth spec " + spec_path);
  std::stringstream ss;
  ss << in.rdbuf();
  const auto spec = ibow::parse_synthetic_spec(ss.str());
  const auto seq = ibow::generate_synthetic(spec);
  ibow::write_synthetic(seq, spec, out_dir, ibow::DetectorParams{}.island_half_width);
  std::cout << "wrote " << seq.frames.size() << " frames, " << seq.ground_truth.positives()
            << " loop frames to " << out_dir << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Incremental bag-of-binary-words loop closure detection"};
  app.require_subcommand(1);

  auto* extract = app.add_subcommand("extract", "Extract binary features from a directory of PGM images");
  std::string img_dir, feat_dir;
  std::size_t features = 1000;
  ibow::ExtractorParams extractor;
  extract->add_option("img_dir", img_dir, "Directory of .pgm frames")->required()->check(CLI::ExistingDirectory);
  extract->add_option("feat_dir", feat_dir, "Output directory for .ibwf files")->required();
  extract->add_option("--features", features, "Features per image")->capture_default_str();
  extract->add_option("--threshold", extractor.corner_threshold, "Corner threshold")->capture_default_str();
  extract->add_option("--pattern-seed", extractor.pattern_seed, "Sampling pattern seed")->capture_default_str();

  auto* run = app.add_subcommand("run", "Run loop closure detection from a config file");
  std::string run_config;
  run->add_option("config", run_config, "key = value config file")->required()->check(CLI::ExistingFile);

  auto* sweep = app.add_subcommand("sweep", "Run detection and sweep the inlier threshold");
  std::string sweep_config, sweep_thresholds;
  sweep->add_option("config", sweep_config, "key = value config file")->required()->check(CLI::ExistingFile);
  sweep->add_option("--thresholds", sweep_thresholds, "Ascending comma-separated inlier thresholds")->required();

  auto* synth = app.add_subcommand("synth", "Generate a synthetic feature sequence with ground truth");
  std::string synth_spec, synth_out;
  synth->add_option("spec", synth_spec, "Synthetic spec file")->required()->check(CLI::ExistingFile);
  synth->add_option("out_dir", synth_out, "Output directory")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*extract) return cmd_extract(img_dir, feat_dir, features, extractor);
    if (*run) return cmd_run(run_config, std::nullopt);
    if (*sweep) return cmd_run(sweep_config, parse_thresholds(sweep_thresholds));
    if (*synth) return cmd_synth(synth_spec, synth_out);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
