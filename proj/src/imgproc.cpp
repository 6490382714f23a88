#include "ibow/imgproc.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cctype>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <random>

namespace ibow {

GrayImage::GrayImage(int width, int height, std::uint8_t fill)
    : GrayImage(width, height,
                std::vector<std::uint8_t>(static_cast<std::size_t>(std::max(width, 0)) *
                                              static_cast<std::size_t>(std::max(height, 0)),
                                          fill)) {}

GrayImage::GrayImage(int width, int height, std::vector<std::uint8_t> data)
    : width_(width), height_(height), data_(std::move(data)) {
  if (width < 1 || height < 1) throw std::invalid_argument("image dimensions must be >= 1");
  if (data_.size() != static_cast<std::size_t>(width) * static_cast<std::size_t>(height))
    throw std::invalid_argument("image data length does not match width x height");
}

// --- PGM --------------------------------------------------------------------

namespace {

std::vector<std::uint8_t> slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

class PgmCursor {
 public:
  explicit PgmCursor(std::span<const std::uint8_t> b) : bytes_(b) {}

  [[noreturn]] void fail(const std::string& what) const {
    throw FormatError("PGM: " + what + " at byte offset " + std::to_string(pos_));
  }

  void skip_space_and_comments() {
    while (pos_ < bytes_.size()) {
      const auto c = bytes_[pos_];
      if (c == '#') {
        while (pos_ < bytes_.size() && bytes_[pos_] != '\n') ++pos_;
      } else if (std::isspace(c)) {
        ++pos_;
      } else {
        break;
      }
    }
  }

  unsigned long number() {
    skip_space_and_comments();
    if (pos_ >= bytes_.size()) fail("unexpected end of data");
    if (!std::isdigit(bytes_[pos_])) fail("expected a decimal number");
    unsigned long v = 0;
    while (pos_ < bytes_.size() && std::isdigit(bytes_[pos_])) {
      v = v * 10 + (bytes_[pos_] - '0');
      if (v > 0xFFFFFFFFul) fail("number too large");
      ++pos_;
    }
    return v;
  }

  std::size_t pos() const { return pos_; }
  void advance(std::size_t n) { pos_ += n; }
  std::size_t remaining() const { return bytes_.size() - pos_; }
  std::uint8_t peek() const { return bytes_[pos_]; }

 private:
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

GrayImage parse_pgm(std::span<const std::uint8_t> bytes) {
  PgmCursor cur(bytes);
  if (bytes.size() < 2 || bytes[0] != 'P' || (bytes[1] != '5' && bytes[1] != '2'))
    cur.fail("bad magic, expected P5 or P2");
  const bool binary = bytes[1] == '5';
  cur.advance(2);
  const auto w = cur.number();
  const auto h = cur.number();
  if (w == 0 || h == 0) cur.fail("zero image dimension");
  const auto maxval = cur.number();
  if (maxval == 0 || maxval > 255) cur.fail("unsupported maxval " + std::to_string(maxval));
  const std::size_t n = static_cast<std::size_t>(w) * h;
  std::vector<std::uint8_t> data(n);
  if (binary) {
    if (cur.remaining() == 0 || !std::isspace(cur.peek())) cur.fail("expected whitespace after maxval");
    cur.advance(1);
    if (cur.remaining() < n)
      cur.fail("truncated payload, need " + std::to_string(n) + " bytes, have " +
               std::to_string(cur.remaining()));
    std::copy_n(bytes.begin() + static_cast<std::ptrdiff_t>(cur.pos()), n, data.begin());
    for (auto v : data)
      if (v > maxval) cur.fail("sample exceeds maxval");
  } else {
    for (std::size_t i = 0; i < n; ++i) {
      const auto v = cur.number();
      if (v > maxval) cur.fail("sample exceeds maxval");
      data[i] = static_cast<std::uint8_t>(v);
    }
  }
  return GrayImage(static_cast<int>(w), static_cast<int>(h), std::move(data));
}

GrayImage load_pgm(const std::filesystem::path& path) {
  const auto bytes = slurp(path);
  try {
    return parse_pgm(bytes);
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

void write_pgm(const std::filesystem::path& path, const GrayImage& img) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "P5\n" << img.width() << ' ' << img.height() << "\n255\n";
  out.write(reinterpret_cast<const char*>(img.data().data()),
            static_cast<std::streamsize>(img.data().size()));
}

// --- corners ----------------------------------------------------------------

namespace {

constexpr std::array<std::array<int, 2>, 16> kCircle{{{0, -3}, {1, -3}, {2, -2}, {3, -1},
                                                      {3, 0},  {3, 1},  {2, 2},  {1, 3},
                                                      {0, 3},  {-1, 3}, {-2, 2}, {-3, 1},
                                                      {-3, 0}, {-3, -1}, {-2, -2}, {-1, -3}}};
constexpr int kArc = 9;

bool has_arc(std::uint32_t mask) {
  // Duplicate the 16-bit ring so wrap-around arcs appear contiguous.
  const std::uint32_t ring = mask | (mask << 16);
  int run = 0;
  for (int i = 0; i < 32; ++i) {
    run = (ring >> i) & 1u ? run + 1 : 0;
    if (run >= kArc) return true;
  }
  return false;
}

}  // namespace

float corner_score(const GrayImage& img, int x, int y, int threshold) {
  if (x < 3 || y < 3 || x >= img.width() - 3 || y >= img.height() - 3) return 0.f;
  const int c = img(x, y);
  std::uint32_t bright = 0, dark = 0;
  int bright_sum = 0, dark_sum = 0;
  for (int i = 0; i < 16; ++i) {
    const int v = img(x + kCircle[i][0], y + kCircle[i][1]);
    if (v > c + threshold) {
      bright |= 1u << i;
      bright_sum += v - c - threshold;
    } else if (v < c - threshold) {
      dark |= 1u << i;
      dark_sum += c - threshold - v;
    }
  }
  int score = 0;
  if (has_arc(bright)) score = bright_sum;
  if (has_arc(dark)) score = std::max(score, dark_sum);
  return static_cast<float>(score);
}

std::vector<Keypoint> detect_corners(const GrayImage& img, std::size_t target, int threshold) {
  std::vector<Keypoint> out;
  const int w = img.width(), h = img.height();
  if (w < 16 || h < 16 || target == 0) return out;

  std::vector<float> score(static_cast<std::size_t>(w) * h, 0.f);
  for (int y = 3; y < h - 3; ++y)
    for (int x = 3; x < w - 3; ++x) score[static_cast<std::size_t>(y) * w + x] = corner_score(img, x, y, threshold);

  auto at = [&](int x, int y) { return score[static_cast<std::size_t>(y) * w + x]; };
  for (int y = 3; y < h - 3; ++y) {
    for (int x = 3; x < w - 3; ++x) {
      const float s = at(x, y);
      if (s <= 0.f) continue;
      bool keep = true;
      for (int dy = -1; dy <= 1 && keep; ++dy) {
        for (int dx = -1; dx <= 1; ++dx) {
          if (dx == 0 && dy == 0) continue;
          const float n = at(x + dx, y + dy);
          // Equal neighbours: the first one in raster order survives.
          const bool earlier = dy < 0 || (dy == 0 && dx < 0);
          if (n > s || (n == s && earlier)) {
            keep = false;
            break;
          }
        }
      }
      if (keep) out.push_back({static_cast<float>(x), static_cast<float>(y), s});
    }
  }
  std::stable_sort(out.begin(), out.end(),
                   [](const Keypoint& a, const Keypoint& b) { return a.response > b.response; });
  if (out.size() > target) out.resize(target);
  return out;
}

// --- descriptors ------------------------------------------------------------

SamplingPattern SamplingPattern::generate(std::size_t bits, std::uint64_t seed) {
  SamplingPattern p;
  p.seed = seed;
  p.pairs.reserve(bits);
  std::mt19937_64 gen(seed);
  auto coord = [&] { return static_cast<int>(gen() % 31) - 15; };
  while (p.pairs.size() < bits) {
    Pair pr{coord(), coord(), coord(), coord()};
    if (pr.ax == pr.bx && pr.ay == pr.by) continue;
    p.pairs.push_back(pr);
  }
  return p;
}

namespace {

// 5x5 box filter; windows are clipped at the image border.
std::vector<std::uint8_t> box_filter5(const GrayImage& img) {
  const int w = img.width(), h = img.height();
  std::vector<std::uint32_t> integral(static_cast<std::size_t>(w + 1) * (h + 1), 0);
  auto I = [&](int x, int y) -> std::uint32_t& { return integral[static_cast<std::size_t>(y) * (w + 1) + x]; };
  for (int y = 0; y < h; ++y) {
    std::uint32_t row = 0;
    for (int x = 0; x < w; ++x) {
      row += img(x, y);
      I(x + 1, y + 1) = I(x + 1, y) + row;
    }
  }
  std::vector<std::uint8_t> out(static_cast<std::size_t>(w) * h);
  for (int y = 0; y < h; ++y) {
    const int y0 = std::max(0, y - 2), y1 = std::min(h, y + 3);
    for (int x = 0; x < w; ++x) {
      const int x0 = std::max(0, x - 2), x1 = std::min(w, x + 3);
      const std::uint32_t sum = I(x1, y1) - I(x0, y1) - I(x1, y0) + I(x0, y0);
      const std::uint32_t area = static_cast<std::uint32_t>((x1 - x0) * (y1 - y0));
      out[static_cast<std::size_t>(y) * w + x] = static_cast<std::uint8_t>((sum + area / 2) / area);
    }
  }
  return out;
}

}  // namespace

FeatureList extract_descriptors(const GrayImage& img, std::span<const Keypoint> kps,
                                const ExtractorParams& params, ExtractionStats* stats) {
  const auto pattern = SamplingPattern::generate(params.descriptor_bits, params.pattern_seed);
  const auto smooth = box_filter5(img);
  const int w = img.width(), h = img.height();
  auto S = [&](int x, int y) { return smooth[static_cast<std::size_t>(y) * w + x]; };

  FeatureList out;
  out.reserve(kps.size());
  std::size_t dropped = 0;
  for (const auto& kp : kps) {
    const int x = static_cast<int>(std::lround(kp.x));
    const int y = static_cast<int>(std::lround(kp.y));
    if (x < kDescriptorBorder || y < kDescriptorBorder || x >= w - kDescriptorBorder ||
        y >= h - kDescriptorBorder) {
      ++dropped;
      continue;
    }
    BinaryDescriptor d(params.descriptor_bits);
    for (std::size_t i = 0; i < pattern.pairs.size(); ++i) {
      const auto& p = pattern.pairs[i];
      if (S(x + p.ax, y + p.ay) < S(x + p.bx, y + p.by)) d.set(i, true);
    }
    out.push_back({kp, std::move(d)});
  }
  if (stats) stats->dropped_at_border = dropped;
  return out;
}

FeatureList extract_features(const GrayImage& img, std::size_t target, const ExtractorParams& params) {
  const auto kps = detect_corners(img, target, params.corner_threshold);
  return extract_descriptors(img, kps, params);
}

// --- feature files ----------------------------------------------------------

namespace {

constexpr std::array<char, 4> kMagic{'I', 'B', 'W', 'F'};
constexpr std::uint32_t kVersion = 1;

template <class T>
void put_le(std::vector<std::uint8_t>& buf, T v) {
  static_assert(std::is_integral_v<T>);
  for (std::size_t i = 0; i < sizeof(T); ++i) buf.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_f32(std::vector<std::uint8_t>& buf, float f) { put_le(buf, std::bit_cast<std::uint32_t>(f)); }

class Reader {
 public:
  Reader(std::span<const std::uint8_t> b, std::string name) : bytes_(b), name_(std::move(name)) {}

  template <class T>
  T get() {
    need(sizeof(T));
    T v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<T>(static_cast<T>(bytes_[pos_ + i]) << (8 * i));
    pos_ += sizeof(T);
    return v;
  }
  float get_f32() { return std::bit_cast<float>(get<std::uint32_t>()); }
  std::span<const std::uint8_t> take(std::size_t n) {
    need(n);
    auto s = bytes_.subspan(pos_, n);
    pos_ += n;
    return s;
  }
  [[noreturn]] void fail(const std::string& what) const {
    throw FormatError(name_ + ": " + what + " at byte offset " + std::to_string(pos_));
  }
  bool at_end() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) fail("truncated feature file");
  }
  std::span<const std::uint8_t> bytes_;
  std::string name_;
  std::size_t pos_ = 0;
};

}  // namespace

void write_features(const std::filesystem::path& path, const FeatureList& features, std::uint64_t pattern_seed) {
  const std::size_t bits = features.empty() ? kDefaultDescriptorBits : features.front().descriptor.width();
  if (bits % 8 != 0) throw std::invalid_argument("feature files need a descriptor width divisible by 8");
  std::vector<std::uint8_t> buf;
  buf.reserve(24 + features.size() * (12 + bits / 8));
  buf.insert(buf.end(), kMagic.begin(), kMagic.end());
  put_le(buf, kVersion);
  put_le(buf, static_cast<std::uint32_t>(bits));
  put_le(buf, pattern_seed);
  put_le(buf, static_cast<std::uint32_t>(features.size()));
  for (const auto& f : features) {
    if (f.descriptor.width() != bits) throw std::invalid_argument("mixed descriptor widths in feature list");
    put_f32(buf, f.keypoint.x);
    put_f32(buf, f.keypoint.y);
    put_f32(buf, f.keypoint.response);
    const auto bytes = f.descriptor.to_bytes();
    buf.insert(buf.end(), bytes.begin(), bytes.end());
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
}

FeatureFile read_feature_file(const std::filesystem::path& path) {
  const auto bytes = slurp(path);
  Reader r(bytes, path.string());
  const auto magic = r.take(4);
  if (!std::equal(magic.begin(), magic.end(), kMagic.begin())) r.fail("magic mismatch, expected IBWF");
  if (const auto v = r.get<std::uint32_t>(); v != kVersion) r.fail("unsupported version " + std::to_string(v));
  FeatureFile file;
  file.descriptor_bits = r.get<std::uint32_t>();
  if (file.descriptor_bits == 0 || file.descriptor_bits % 8 != 0) r.fail("invalid descriptor width");
  file.pattern_seed = r.get<std::uint64_t>();
  const auto count = r.get<std::uint32_t>();
  file.features.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    Feature f;
    f.keypoint.x = r.get_f32();
    f.keypoint.y = r.get_f32();
    f.keypoint.response = r.get_f32();
    f.descriptor = BinaryDescriptor::from_bytes(r.take(file.descriptor_bits / 8));
    file.features.push_back(std::move(f));
  }
  if (!r.at_end()) r.fail("trailing bytes after last feature");
  return file;
}

FeatureList read_features(const std::filesystem::path& path, std::size_t expected_bits) {
  auto file = read_feature_file(path);
  if (file.descriptor_bits != expected_bits)
    throw FormatError(path.string() + ": descriptor width " + std::to_string(file.descriptor_bits) +
                      " does not match configured width " + std::to_string(expected_bits));
  return std::move(file.features);
}

}  // namespace ibow
