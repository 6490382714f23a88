#pragma once

#include <bit>
#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace ibow {

/// Fixed-width bit string. Bit i lives in word i / 64 at position i % 64;
/// bits past width() are kept at zero so popcount-based ops stay exact.
class BinaryDescriptor {
 public:
  BinaryDescriptor() = default;

  /// All-zero descriptor of `width` bits.
  explicit BinaryDescriptor(std::size_t width)
      : width_(width), words_((width + 63) / 64, 0) {
    if (width == 0) throw std::invalid_argument("descriptor width must be positive");
  }

  static BinaryDescriptor ones(std::size_t width) {
    BinaryDescriptor d(width);
    for (auto& w : d.words_) w = ~std::uint64_t{0};
    d.mask_tail();
    return d;
  }

  /// Little-endian byte layout: bit i is bit (i % 8) of byte i / 8.
  static BinaryDescriptor from_bytes(std::span<const std::uint8_t> bytes) {
    BinaryDescriptor d(bytes.size() * 8);
    for (std::size_t i = 0; i < bytes.size(); ++i)
      d.words_[i / 8] |= std::uint64_t{bytes[i]} << (8 * (i % 8));
    return d;
  }

  /// Parses a string of '0'/'1' characters, most significant (highest index) bit first,
  /// so "1100" has bits 3 and 2 set.
  static BinaryDescriptor from_string(const std::string& bits) {
    BinaryDescriptor d(bits.size());
    for (std::size_t i = 0; i < bits.size(); ++i) {
      const char c = bits[bits.size() - 1 - i];
      if (c == '1') d.set(i, true);
      else if (c != '0') throw std::invalid_argument("descriptor string must contain only 0/1");
    }
    return d;
  }

  std::size_t width() const { return width_; }
  bool empty() const { return width_ == 0; }
  std::span<const std::uint64_t> words() const { return words_; }

  bool test(std::size_t i) const { return (words_[i / 64] >> (i % 64)) & 1u; }
  void set(std::size_t i, bool v) {
    const std::uint64_t m = std::uint64_t{1} << (i % 64);
    if (v) words_[i / 64] |= m;
    else words_[i / 64] &= ~m;
  }
  void flip(std::size_t i) { words_[i / 64] ^= std::uint64_t{1} << (i % 64); }

  std::size_t popcount() const {
    std::size_t n = 0;
    for (auto w : words_) n += static_cast<std::size_t>(std::popcount(w));
    return n;
  }

  std::vector<std::uint8_t> to_bytes() const {
    std::vector<std::uint8_t> out((width_ + 7) / 8);
    for (std::size_t i = 0; i < out.size(); ++i)
      out[i] = static_cast<std::uint8_t>(words_[i / 8] >> (8 * (i % 8)));
    return out;
  }

  std::string to_string() const {
    std::string s(width_, '0');
    for (std::size_t i = 0; i < width_; ++i)
      if (test(i)) s[width_ - 1 - i] = '1';
    return s;
  }

  BinaryDescriptor& operator&=(const BinaryDescriptor& o) {
    check_width(o);
    for (std::size_t i = 0; i < words_.size(); ++i) words_[i] &= o.words_[i];
    return *this;
  }

  friend BinaryDescriptor operator&(BinaryDescriptor a, const BinaryDescriptor& b) {
    a &= b;
    return a;
  }

  friend bool operator==(const BinaryDescriptor&, const BinaryDescriptor&) = default;

  friend std::size_t hamming(const BinaryDescriptor& a, const BinaryDescriptor& b) {
    a.check_width(b);
    std::size_t n = 0;
    for (std::size_t i = 0; i < a.words_.size(); ++i)
      n += static_cast<std::size_t>(std::popcount(a.words_[i] ^ b.words_[i]));
    return n;
  }

 private:
  void check_width(const BinaryDescriptor& o) const {
    if (o.width_ != width_)
      throw std::invalid_argument("descriptor width mismatch: " + std::to_string(width_) +
                                  " vs " + std::to_string(o.width_));
  }
  void mask_tail() {
    if (const std::size_t r = width_ % 64; r != 0) words_.back() &= (std::uint64_t{1} << r) - 1;
  }

  std::size_t width_ = 0;
  std::vector<std::uint64_t> words_;
};

inline constexpr std::size_t kDefaultDescriptorBits = 256;

}  // namespace ibow
