#include <doctest.h>

#include <algorithm>
#include <fstream>
#include <iterator>
#include <random>
#include <set>
#include <string>

#include "ibow/imgproc.hpp"
#include "oracles.hpp"
#include "tmpdir.hpp"

using namespace ibow;

namespace {

std::vector<std::uint8_t> bytes_of(const std::string& s) { return {s.begin(), s.end()}; }

std::vector<std::uint8_t> read_all(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

GrayImage random_image(int w, int h, std::mt19937_64& rng) {
  GrayImage img(w, h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) img(x, y) = static_cast<std::uint8_t>(rng());
  return img;
}

// Smooth random texture: blocky noise so corners exist but are sparse.
GrayImage textured_image(int w, int h, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  GrayImage img(w, h);
  const int cell = 7;
  std::vector<std::uint8_t> cells(static_cast<std::size_t>((w / cell + 1) * (h / cell + 1)));
  for (auto& c : cells) c = static_cast<std::uint8_t>(rng());
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) img(x, y) = cells[static_cast<std::size_t>((y / cell) * (w / cell + 1) + x / cell)];
  return img;
}

}  // namespace

TEST_CASE("pgm: binary and ascii encodings decode to the same pixels") {
  std::string p5 = "P5\n2 2\n255\n";
  p5 += std::string("\x00\xff\x80\x01", 4);
  const auto a = parse_pgm(bytes_of(p5));
  const auto b = parse_pgm(bytes_of("P2\n# comment\n2 2\n255\n0 255\n128 1\n"));
  CHECK(a == b);
  CHECK(a.width() == 2);
  CHECK(a(0, 0) == 0);
  CHECK(a(1, 0) == 255);
  CHECK(a(0, 1) == 128);
  CHECK(a(1, 1) == 1);
}

TEST_CASE("pgm: 16-bit maxval is rejected") {
  std::string p5 = "P5\n1 1\n65535\n";
  p5 += std::string(2, '\0');
  try {
    parse_pgm(bytes_of(p5));
    FAIL("expected FormatError");
  } catch (const FormatError& e) {
    CHECK(std::string(e.what()).find("unsupported maxval 65535") != std::string::npos);
  }
}

TEST_CASE("pgm: malformed input names the byte offset") {
  for (const std::string bad : {"P6\n1 1\n255\n\x01", "P5\n2 2\n255\n\x01", "P5\n2\n", "P2\n1 1\n255\n300\n"}) {
    try {
      parse_pgm(bytes_of(bad));
      FAIL("expected FormatError for " << bad);
    } catch (const FormatError& e) {
      CHECK(std::string(e.what()).find("byte offset") != std::string::npos);
    }
  }
}

TEST_CASE("pgm: write then load round-trips") {
  TempDir dir;
  std::mt19937_64 rng(7);
  for (int i = 0; i < 20; ++i) {
    const auto img = random_image(1 + static_cast<int>(rng() % 40), 1 + static_cast<int>(rng() % 40), rng);
    write_pgm(dir / "x.pgm", img);
    CHECK(load_pgm(dir / "x.pgm") == img);
  }
  CHECK_THROWS_WITH(load_pgm(dir / "missing.pgm"), doctest::Contains("cannot open"));
}

TEST_CASE("corners: uniform image has none") {
  CHECK(detect_corners(GrayImage(64, 64, 128), 1000).empty());
}

TEST_CASE("corners: tiny images yield nothing") {
  std::mt19937_64 rng(1);
  CHECK(detect_corners(random_image(15, 40, rng), 100).empty());
  CHECK(detect_corners(random_image(40, 15, rng), 100).empty());
}

TEST_CASE("corners: single bright dot matches the brute-force segment test") {
  GrayImage img(64, 64, 50);
  img(30, 20) = 250;
  std::set<std::pair<int, int>> expected;
  for (int y = 0; y < img.height(); ++y)
    for (int x = 0; x < img.width(); ++x)
      if (oracle::is_segment_corner(img, x, y, 20)) expected.insert({x, y});
  REQUIRE(expected.size() == 1);
  const auto kps = detect_corners(img, 1000);
  REQUIRE(kps.size() == 1);
  CHECK(std::pair<int, int>{static_cast<int>(kps[0].x), static_cast<int>(kps[0].y)} == *expected.begin());
  CHECK(kps[0].response > 0.f);
}

TEST_CASE("corners: every detection passes the segment test") {
  const auto img = textured_image(120, 100, 3);
  const auto kps = detect_corners(img, 100000);
  REQUIRE(!kps.empty());
  for (const auto& k : kps) {
    CHECK(oracle::is_segment_corner(img, static_cast<int>(k.x), static_cast<int>(k.y), 20));
    CHECK(corner_score(img, static_cast<int>(k.x), static_cast<int>(k.y), 20) == k.response);
  }
  // Non-corners score zero.
  for (int y = 0; y < img.height(); ++y)
    for (int x = 0; x < img.width(); ++x)
      if (!oracle::is_segment_corner(img, x, y, 20)) REQUIRE(corner_score(img, x, y, 20) == 0.f);
}

TEST_CASE("corners: top-k keeps the strongest responses") {
  const auto img = textured_image(200, 160, 11);
  const auto all = detect_corners(img, 100000);
  REQUIRE(all.size() >= 50);
  const auto top = detect_corners(img, 10);
  REQUIRE(top.size() == 10);
  for (std::size_t i = 0; i < 10; ++i) CHECK(top[i] == all[i]);
  for (std::size_t i = 1; i < all.size(); ++i) CHECK(all[i - 1].response >= all[i].response);
}

TEST_CASE("corners: count never exceeds the target") {
  std::mt19937_64 rng(5);
  for (int i = 0; i < 10; ++i) {
    const auto img = random_image(48, 48, rng);
    const std::size_t target = rng() % 30;
    CHECK(detect_corners(img, target).size() <= target);
  }
}

TEST_CASE("descriptor: sampling pattern is deterministic and in range") {
  const auto a = SamplingPattern::generate(256, 42);
  const auto b = SamplingPattern::generate(256, 42);
  const auto c = SamplingPattern::generate(256, 43);
  REQUIRE(a.pairs.size() == 256);
  bool differs = false;
  for (std::size_t i = 0; i < a.pairs.size(); ++i) {
    const auto& p = a.pairs[i];
    CHECK(p.ax == b.pairs[i].ax);
    CHECK(p.by == b.pairs[i].by);
    for (int v : {p.ax, p.ay, p.bx, p.by}) CHECK(std::abs(v) <= 15);
    CHECK_FALSE((p.ax == p.bx && p.ay == p.by));
    differs |= p.ax != c.pairs[i].ax || p.ay != c.pairs[i].ay;
  }
  CHECK(differs);
}

TEST_CASE("descriptor: determinism, locality and border handling") {
  const auto img = textured_image(160, 120, 21);
  const std::vector<Keypoint> kps = {{80, 60, 1}, {10, 60, 1}, {80, 100, 1}, {24, 24, 1}, {135, 95, 1}, {136, 60, 1}};
  ExtractionStats stats;
  const auto f1 = extract_descriptors(img, kps, {}, &stats);
  const auto f2 = extract_descriptors(img, kps, {});
  CHECK(f1 == f2);
  // (10,60), (80,100) and (136,60) are within 24 px of a border.
  CHECK(stats.dropped_at_border == 3);
  REQUIRE(f1.size() == 3);
  CHECK(f1[0].descriptor.width() == 256);

  // A pixel change outside the 31x31 patch plus 5x5 smoothing does not alter the descriptor.
  auto far = img;
  far(5, 5) = static_cast<std::uint8_t>(far(5, 5) ^ 0xff);
  const auto f3 = extract_descriptors(far, std::span(kps).first(1));
  CHECK(f3[0].descriptor == f1[0].descriptor);

  // Erasing the patch changes it.
  auto near = img;
  for (int y = 45; y <= 75; ++y)
    for (int x = 65; x <= 95; ++x) near(x, y) = static_cast<std::uint8_t>(255 - near(x, y));
  const auto f4 = extract_descriptors(near, std::span(kps).first(1));
  CHECK(f4[0].descriptor != f1[0].descriptor);
}

TEST_CASE("features: file round-trip and byte-identical re-extraction") {
  TempDir dir;
  const auto img = textured_image(320, 240, 99);
  const auto feats = extract_features(img, 1000);
  REQUIRE(!feats.empty());
  write_features(dir / "a.ibwf", feats);
  write_features(dir / "b.ibwf", extract_features(img, 1000));
  CHECK(read_all(dir / "a.ibwf") == read_all(dir / "b.ibwf"));
  CHECK(read_features(dir / "a.ibwf") == feats);

  std::mt19937_64 rng(3);
  FeatureList many;
  for (int i = 0; i < 1000; ++i)
    many.push_back({{static_cast<float>(rng() % 640), static_cast<float>(rng() % 480), static_cast<float>(rng() % 100)},
                    oracle::random_descriptor(rng)});
  write_features(dir / "many.ibwf", many, 17);
  const auto file = read_feature_file(dir / "many.ibwf");
  CHECK(file.features == many);
  CHECK(file.pattern_seed == 17);
  CHECK(file.descriptor_bits == 256);
}

TEST_CASE("features: empty list round-trips") {
  TempDir dir;
  write_features(dir / "e.ibwf", {});
  CHECK(read_features(dir / "e.ibwf").empty());
}

TEST_CASE("features: width mismatch and corruption are format errors") {
  TempDir dir;
  std::mt19937_64 rng(4);
  FeatureList narrow = {{{1, 2, 3}, oracle::random_descriptor(rng, 128)}};
  write_features(dir / "n.ibwf", narrow);
  CHECK(read_feature_file(dir / "n.ibwf").features == narrow);
  CHECK_THROWS_AS(read_features(dir / "n.ibwf", 256), FormatError);

  auto bytes = read_all(dir / "n.ibwf");
  {
    std::ofstream out(dir / "t.ibwf", std::ios::binary);
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size() - 3));
  }
  CHECK_THROWS_AS(read_feature_file(dir / "t.ibwf"), FormatError);
  bytes[0] = 'X';
  {
    std::ofstream out(dir / "m.ibwf", std::ios::binary);
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  }
  CHECK_THROWS_AS(read_feature_file(dir / "m.ibwf"), FormatError);
}
