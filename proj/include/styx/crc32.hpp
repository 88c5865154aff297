#pragma once

#include <array>
#include <cstdint>
#include <string_view>

namespace styx {

// CRC-32 (IEEE 802.3, reflected, poly 0xEDB88320), the checksum used by all
// on-disk record formats.
namespace detail {

inline const std::array<std::uint32_t, 256>& crc32_table() {
  static const std::array<std::uint32_t, 256> table = [] {
    std::array<std::uint32_t, 256> t{};
    for (std::uint32_t i = 0; i < 256; ++i) {
      std::uint32_t c = i;
      for (int k = 0; k < 8; ++k)
        c = (c & 1) ? 0xEDB88320u ^ (c >> 1) : (c >> 1);
      t[i] = c;
    }
    return t;
  }();
  return table;
}

}  // namespace detail

inline std::uint32_t crc32(std::string_view data, std::uint32_t crc = 0) {
  const auto& table = detail::crc32_table();
  crc ^= 0xFFFFFFFFu;
  for (unsigned char byte : data)
    crc = table[(crc ^ byte) & 0xFF] ^ (crc >> 8);
  return crc ^ 0xFFFFFFFFu;
}

}  // namespace styx
