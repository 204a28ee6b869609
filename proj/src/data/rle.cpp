#include "dasam/data/rle.hpp"

#include "dasam/error.hpp"

namespace dasam::data {

Rle encode_rle(const InstanceMask& mask) {
  Rle rle{mask.height(), mask.width(), {}};
  std::uint8_t current = 0;
  std::uint32_t run = 0;
  for (int x = 0; x < mask.width(); ++x) {
    for (int y = 0; y < mask.height(); ++y) {
      const std::uint8_t v = mask.at(y, x) ? 1 : 0;
      if (v != current) {
        rle.counts.push_back(run);
        run = 0;
        current = v;
      }
      ++run;
    }
  }
  rle.counts.push_back(run);
  return rle;
}

InstanceMask decode_rle(const std::vector<std::uint32_t>& counts, int height, int width) {
  if (height <= 0 || width <= 0) {
    throw MalformedPayload("size", "mask dimensions must be positive");
  }
  const auto total = static_cast<std::uint64_t>(height) * static_cast<std::uint64_t>(width);
  std::uint64_t sum = 0;
  for (auto c : counts) sum += c;
  if (sum != total) {
    throw MalformedPayload("counts", "run lengths sum to " + std::to_string(sum) + ", expected " +
                                         std::to_string(total));
  }
  std::vector<std::uint8_t> bits(total, 0);
  std::uint64_t pos = 0;
  std::uint8_t value = 0;
  for (auto c : counts) {
    for (std::uint32_t i = 0; i < c; ++i, ++pos) {
      const auto x = static_cast<int>(pos / height);
      const auto y = static_cast<int>(pos % height);
      bits[static_cast<std::size_t>(y) * width + x] = value;
    }
    value ^= 1;
  }
  return InstanceMask::from_bitmap(height, width, std::move(bits));
}

InstanceMask decode_rle(const Rle& rle) { return decode_rle(rle.counts, rle.height, rle.width); }

std::string rle_counts_to_string(const std::vector<std::uint32_t>& counts) {
  std::string s;
  for (std::size_t i = 0; i < counts.size(); ++i) {
    long long x = counts[i];
    if (i > 2) x -= static_cast<long long>(counts[i - 2]);
    bool more = true;
    while (more) {
      char c = static_cast<char>(x & 0x1f);
      x >>= 5;
      more = (c & 0x10) ? x != -1 : x != 0;
      if (more) c |= 0x20;
      s.push_back(static_cast<char>(c + 48));
    }
  }
  return s;
}

std::vector<std::uint32_t> rle_counts_from_string(const std::string& s) {
  std::vector<std::uint32_t> counts;
  std::size_t p = 0;
  while (p < s.size()) {
    long long x = 0;
    int k = 0;
    bool more = true;
    while (more) {
      if (p >= s.size()) {
        throw MalformedPayload("counts", "truncated compressed RLE string");
      }
      const int c = static_cast<int>(s[p]) - 48;
      if (c < 0 || c > 63) {
        throw MalformedPayload("counts", "invalid character in compressed RLE string");
      }
      x |= static_cast<long long>(c & 0x1f) << (5 * k);
      more = (c & 0x20) != 0;
      ++p;
      ++k;
      if (!more && (c & 0x10)) x |= -1LL << (5 * k);
    }
    const std::size_t m = counts.size();
    if (m > 2) x += static_cast<long long>(counts[m - 2]);
    if (x < 0 || x > 0xffffffffLL) {
      throw MalformedPayload("counts", "run length out of range");
    }
    counts.push_back(static_cast<std::uint32_t>(x));
  }
  return counts;
}

}  // namespace dasam::data
