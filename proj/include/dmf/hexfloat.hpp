#pragma once

#include <bit>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "dmf/error.hpp"

namespace dmf {

// Bit-exact text encoding of doubles: 16 lowercase hex digits per value
// (big-endian IEEE-754 bit pattern), concatenated.
inline std::string encode_hex(std::span<const double> values) {
  static constexpr char kDigits[] = "0123456789abcdef";
  std::string out;
  out.reserve(values.size() * 16);
  for (double v : values) {
    const auto bits = std::bit_cast<std::uint64_t>(v);
    for (int shift = 60; shift >= 0; shift -= 4) out.push_back(kDigits[(bits >> shift) & 0xF]);
  }
  return out;
}

inline std::vector<double> decode_hex(const std::string& text) {
  if (text.size() % 16 != 0) throw ParseError("hex float array length is not a multiple of 16");
  std::vector<double> out;
  out.reserve(text.size() / 16);
  for (std::size_t i = 0; i < text.size(); i += 16) {
    std::uint64_t bits = 0;
    for (std::size_t k = 0; k < 16; ++k) {
      const char c = text[i + k];
      std::uint64_t d;
      if (c >= '0' && c <= '9') d = static_cast<std::uint64_t>(c - '0');
      else if (c >= 'a' && c <= 'f') d = static_cast<std::uint64_t>(c - 'a' + 10);
      else if (c >= 'A' && c <= 'F') d = static_cast<std::uint64_t>(c - 'A' + 10);
      else throw ParseError("invalid hex digit at offset " + std::to_string(i + k));
      bits = (bits << 4) | d;
    }
    out.push_back(std::bit_cast<double>(bits));
  }
  return out;
}

}  // namespace dmf
