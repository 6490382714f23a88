#include <doctest.h>

#include <fstream>
#include <iterator>
#include <set>
#include <sstream>

#include "ibow/eval.hpp"
#include "tmpdir.hpp"

using namespace ibow;

namespace {

GroundTruth ten_positives() {
  GroundTruth gt;
  for (FrameIndex t = 10; t < 20; ++t) gt.add(t, t - 10);
  return gt;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p);
  return {std::istreambuf_iterator<char>(in), {}};
}

LoopResult geometric(FrameIndex t, ImageId cand, std::size_t inliers, std::size_t live = 24) {
  LoopResult r;
  r.frame = t;
  r.path = DecisionPath::geometry;
  r.candidate = cand;
  r.inliers = inliers;
  r.status = inliers >= live ? LoopStatus::accepted : LoopStatus::rejected;
  if (r.status == LoopStatus::accepted) r.matched = cand;
  return r;
}

RunConfig small_synthetic(std::uint64_t seed) {
  return parse_config("mode = synthetic\nsynth_plan = N60,R0-29\nfeatures = 300\np = 20\nseed = " +
                      std::to_string(seed) + "\n");
}

}  // namespace

TEST_CASE("pr: definitions") {
  const auto gt = ten_positives();
  std::vector<Decision> none;
  for (FrameIndex t = 0; t < 20; ++t) none.push_back({t, std::nullopt});
  auto p = compute_pr(none, gt, 0);
  CHECK(p.precision == 1.0);
  CHECK(p.recall == 0.0);
  CHECK(p.fn == 10);

  auto all = none;
  for (FrameIndex t = 10; t < 20; ++t) all[t].matched = static_cast<ImageId>(t - 10);
  p = compute_pr(all, gt, 0);
  CHECK(p.precision == 1.0);
  CHECK(p.recall == 1.0);

  auto mixed = none;
  mixed[10].matched = 0;
  mixed[5].matched = 1;
  p = compute_pr(mixed, gt, 0);
  CHECK(p.precision == doctest::Approx(0.5));
  CHECK(p.recall == doctest::Approx(0.1));
  CHECK(p.tp == 1);
  CHECK(p.fp == 1);
  CHECK(p.fn == 9);

  // Tolerance window.
  auto near = none;
  near[12].matched = 4;
  CHECK(compute_pr(near, gt, 1).fp == 1);
  CHECK(compute_pr(near, gt, 2).tp == 1);
}

TEST_CASE("pr: sweep boundaries and rethresholding") {
  const auto gt = ten_positives();
  std::vector<LoopResult> rs;
  for (FrameIndex t = 0; t < 10; ++t) rs.push_back(LoopResult{.frame = t});
  for (FrameIndex t = 10; t < 20; ++t) rs.push_back(geometric(t, static_cast<ImageId>(t - 10), 20 + t));
  rs[15] = geometric(15, 9, 100);  // wrong place, many inliers

  const std::vector<std::size_t> th{8, 25, 35, 500};
  const auto sweep = sweep_thresholds(rs, gt, 0, th);
  REQUIRE(sweep.curve.size() == 4);
  // Below every count: every geometric check is accepted.
  CHECK(sweep.curve[0].tp == 9);
  CHECK(sweep.curve[0].fp == 1);
  // Above every count.
  CHECK(sweep.curve[3].precision == 1.0);
  CHECK(sweep.curve[3].recall == 0.0);
  // At 35 only the rogue frame (100) survives among tp candidates >= 35: frames 15..19 minus the rogue.
  CHECK(sweep.curve[2].tp == 4);
  CHECK(sweep.curve[2].fp == 1);
  CHECK(sweep.max_recall_at_full_precision == 0.0);

  // Shortcut acceptances survive every threshold.
  LoopResult sc;
  sc.frame = 19;
  sc.status = LoopStatus::accepted;
  sc.path = DecisionPath::shortcut;
  sc.matched = sc.candidate = 9;
  rs[19] = sc;
  CHECK(rethreshold(rs, 1000)[19].matched == 9);
  CHECK(pr_csv_header() == "threshold,precision,recall,tp,fp,fn");
  CHECK(to_csv_row(sweep.curve[2]) == "35,0.800000,0.400000,4,1,6");
}

TEST_CASE("ground truth parsing") {
  const auto m = parse_ground_truth("0 0 0\n1 0 0\n1 1 0\n");
  CHECK(m.frames() == 3);
  CHECK(m.loops[1] == std::vector<FrameIndex>{0});
  CHECK(m.loops[2] == std::vector<FrameIndex>{0, 1});
  // Upper triangle is ignored.
  CHECK(parse_ground_truth("0 1\n0 0\n").positives() == 0);

  const auto p = parse_ground_truth("# t k\n5 2\n5 1\n7,3\n2 9\n");
  CHECK(p.loops[5] == std::vector<FrameIndex>{1, 2});
  CHECK(p.loops[7] == std::vector<FrameIndex>{3});
  CHECK(p.positives() == 2);
  CHECK(parse_ground_truth(to_pair_list(p)).loops == p.loops);

  CHECK_THROWS_AS(parse_ground_truth("1 2 3\n"), FormatError);
  CHECK_THROWS_AS(parse_ground_truth("a b\n"), FormatError);
  CHECK(parse_ground_truth("").frames() == 0);
  CHECK_THROWS_AS(GroundTruth{}.add(3, 3), std::invalid_argument);
}

TEST_CASE("config parsing") {
  const auto defaults = parse_config("");
  CHECK(defaults.vocab.forest.branching == 16);
  CHECK(defaults.vocab.forest.max_leaf == 150);
  CHECK(defaults.vocab.forest.trees == 4);
  CHECK(defaults.detector.buffer == 50);
  CHECK(defaults.features == 1000);
  CHECK(defaults.vocab.purge_frames == 2);
  CHECK(defaults.vocab.min_observations == 2);
  CHECK(defaults.detector.tau_im == doctest::Approx(0.3));
  CHECK(defaults.detector.island_half_width == 5);
  CHECK(defaults.detector.tau_c == 20);
  CHECK(defaults.tolerance() == 5);

  const auto c = parse_config("K = 8  # comment\nS=20\ntau_c = inf\nmode = features\ninput = frames\nthresholds = 8, 16,32\n",
                              "/data");
  CHECK(c.vocab.forest.branching == 8);
  CHECK(c.vocab.forest.max_leaf == 20);
  CHECK(c.detector.tau_c == kNoShortcut);
  CHECK(c.input == std::filesystem::path("/data/frames"));
  CHECK(c.thresholds == std::vector<std::size_t>{8, 16, 32});
  CHECK(c.tolerance() == 0);

  CHECK_THROWS_WITH_AS(parse_config("K = 16\nbogus = 1\n"), doctest::Contains("unknown key 'bogus'"), std::invalid_argument);
  CHECK_THROWS_AS(parse_config("K = -3\n"), std::invalid_argument);
  CHECK_THROWS_AS(parse_config("K = 1\n"), std::invalid_argument);
  CHECK_THROWS_AS(parse_config("tau_im = 1.5\n"), std::invalid_argument);
  CHECK_THROWS_AS(parse_config("mode = images\n"), std::invalid_argument);
  CHECK_THROWS_AS(parse_config("K 16\n"), std::invalid_argument);
  CHECK(config_keys().front() == "K");
}

TEST_CASE("synthetic plan and noise") {
  SyntheticSpec spec;
  spec.plan = "N100,R0-99";
  spec.features = 200;
  spec.noise_bits = 0;
  const auto seq = generate_synthetic(spec);
  REQUIRE(seq.frames.size() == 200);
  CHECK(seq.ground_truth.positives() == 100);
  for (FrameIndex t = 0; t < 100; ++t) CHECK_FALSE(seq.ground_truth.positive(t));
  for (FrameIndex t = 100; t < 200; ++t) {
    CHECK(seq.ground_truth.loops[t] == std::vector<FrameIndex>{t - 100});
    CHECK(seq.source[t] == t - 100);
  }
  // With zero noise a revisit carries the original descriptors.
  for (FrameIndex t = 100; t < 200; t += 17) {
    std::set<std::string> orig;
    for (const auto& f : seq.frames[t - 100]) orig.insert(f.descriptor.to_string());
    std::size_t shared = 0;
    for (const auto& f : seq.frames[t]) shared += orig.contains(f.descriptor.to_string());
    CHECK(shared == seq.frames[t].size());
  }

  spec.noise_bits = 25;
  const auto noisy = generate_synthetic(spec);
  // Each revisit feature is its source landmark with exactly 25 flipped bits.
  for (const FrameIndex t : {100u, 150u, 199u}) {
    const auto& src = noisy.frames[noisy.source[t]];
    REQUIRE(!noisy.frames[t].empty());
    for (const auto& f : noisy.frames[t]) {
      std::size_t best = 256;
      for (const auto& g : src) best = std::min(best, hamming(f.descriptor, g.descriptor));
      CHECK(best == 25);
    }
  }

  SyntheticSpec rev;
  rev.plan = "N10,R9-5";
  rev.features = 50;
  const auto r = generate_synthetic(rev);
  CHECK(r.frames.size() == 15);
  CHECK(r.source[10] == 9);
  CHECK(r.source[14] == 5);

  CHECK_THROWS_AS(generate_synthetic({.plan = "N5,R3-9"}), std::invalid_argument);
  CHECK_THROWS_AS(generate_synthetic({.plan = "X5"}), std::invalid_argument);
  const auto parsed = parse_synthetic_spec("plan = N20,R0-4\nnoise_bits = 3\nseed = 9\n");
  CHECK(parsed.plan == "N20,R0-4");
  CHECK(parsed.noise_bits == 3);
  CHECK(parsed.seed == 9);
  CHECK_THROWS_AS(parse_synthetic_spec("colour = blue\n"), std::invalid_argument);
}

TEST_CASE("harness: tiny sequences and timing summary") {
  auto cfg = parse_config("mode = synthetic\nsynth_plan = N3\nfeatures = 100\n");
  const auto run = run_sequence(cfg);
  REQUIRE(run.results.size() == 3);
  for (const auto& r : run.results) CHECK(r.status != LoopStatus::accepted);
  CHECK(run.frame_ms.size() == 3);
  CHECK(run.final_vocabulary >= 100);

  const std::vector<double> ms{5, 1, 3, 2, 4};
  const auto t = summarize_timing(ms);
  CHECK(t.mean_ms == doctest::Approx(3.0));
  CHECK(t.p95_ms == 5.0);
  CHECK(summarize_timing({}).mean_ms == 0.0);
}

TEST_CASE("harness: runs are deterministic and feature files replay identically") {
  TempDir dir;
  auto cfg = small_synthetic(4);
  cfg.output = dir / "a";
  const auto a = run_sequence(cfg);
  write_outputs(cfg, a, std::nullopt);
  cfg.output = dir / "b";
  write_outputs(cfg, run_sequence(cfg), std::nullopt);
  CHECK(slurp(dir / "a/results.csv") == slurp(dir / "b/results.csv"));
  CHECK(slurp(dir / "a/diagnostics.csv") == slurp(dir / "b/diagnostics.csv"));
  const auto summary = slurp(dir / "a/summary.txt");
  for (const char* key : {"mean_frame_ms", "p95_frame_ms", "final_vocabulary_size", "live_precision_recall"})
    CHECK(summary.find(key) != std::string::npos);

  // Write the same sequence as feature files and replay it.
  const auto seq = generate_synthetic(cfg.synthetic);
  write_synthetic(seq, cfg.synthetic, dir / "feat", cfg.tolerance());
  std::ofstream(dir / "feat/run.cfg", std::ios::app) << "p = 20\n";
  auto replay_cfg = load_config(dir / "feat/run.cfg");
  CHECK(replay_cfg.mode == InputMode::features);
  const auto replay = run_sequence(replay_cfg);
  REQUIRE(replay.results.size() == a.results.size());
  for (std::size_t i = 0; i < a.results.size(); ++i) CHECK(to_csv_row(replay.results[i]) == to_csv_row(a.results[i]));
  REQUIRE(replay.ground_truth);
  CHECK(replay.ground_truth->loops == a.ground_truth->loops);
}

TEST_CASE("harness: a frame with the wrong descriptor width aborts the run") {
  TempDir dir;
  SyntheticSpec spec{.plan = "N3", .features = 50};
  const auto seq = generate_synthetic(spec);
  write_synthetic(seq, spec, dir.path(), 0);
  FeatureList narrow{{{1, 1, 1}, BinaryDescriptor(128)}};
  write_features(dir / "frame_000001.ibwf", narrow);
  try {
    run_sequence(load_config(dir / "run.cfg"));
    FAIL("expected an error");
  } catch (const std::exception& e) {
    CHECK(std::string(e.what()).find("frame 1") != std::string::npos);
  }
}

TEST_CASE("rethresholding matches fresh runs when the shortcut is off") {
  auto base = small_synthetic(1);
  base.detector.tau_c = kNoShortcut;
  const auto recorded = run_sequence(base);
  for (const std::size_t th : {8u, 16u, 24u, 60u, 200u}) {
    auto cfg = base;
    cfg.detector.min_inliers = th;
    const auto fresh = run_sequence(cfg);
    const auto offline = rethreshold(recorded.results, th);
    std::size_t differing = 0;
    for (std::size_t i = 0; i < offline.size(); ++i) {
      const auto& f = fresh.results[i];
      differing += (f.status == LoopStatus::accepted ? f.matched : std::nullopt) != offline[i].matched;
    }
    CHECK_MESSAGE(differing == 0, "threshold " << th << ": " << differing << " frames differ");
  }
}
