#pragma once

// Little-endian f64 / u64 helpers shared by the on-disk formats.

#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <span>

namespace scoretune::detail {

inline std::uint64_t to_le(std::uint64_t v) {
  if constexpr (std::endian::native == std::endian::little) return v;
  std::uint64_t out = 0;
  for (int b = 0; b < 8; ++b) out |= ((v >> (8 * b)) & 0xffU) << (8 * (7 - b));
  return out;
}

inline void write_u64(std::ostream& os, std::uint64_t v) {
  const std::uint64_t le = to_le(v);
  os.write(reinterpret_cast<const char*>(&le), sizeof le);
}

inline bool read_u64(std::istream& is, std::uint64_t& v) {
  std::uint64_t le = 0;
  if (!is.read(reinterpret_cast<char*>(&le), sizeof le)) return false;
  v = to_le(le);
  return true;
}

inline void write_f64(std::ostream& os, std::span<const double> values) {
  if constexpr (std::endian::native == std::endian::little) {
    os.write(reinterpret_cast<const char*>(values.data()),
             static_cast<std::streamsize>(values.size() * sizeof(double)));
  } else {
    for (double d : values) write_u64(os, std::bit_cast<std::uint64_t>(d));
  }
}

inline bool read_f64(std::istream& is, std::span<double> values) {
  if constexpr (std::endian::native == std::endian::little) {
    return static_cast<bool>(is.read(reinterpret_cast<char*>(values.data()),
                                     static_cast<std::streamsize>(values.size() * sizeof(double))));
  } else {
    for (double& d : values) {
      std::uint64_t bits = 0;
      if (!read_u64(is, bits)) return false;
      d = std::bit_cast<double>(bits);
    }
    return true;
  }
}

}  // namespace scoretune::detail
