#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <vector>

namespace morphgrasp::binary {

template <typename U>
void put_le(std::vector<unsigned char>& out, U bits) {
  for (std::size_t i = 0; i < sizeof(U); ++i) out.push_back(static_cast<unsigned char>((bits >> (8 * i)) & 0xFFu));
}

template <typename U>
U get_le(const unsigned char* in) {
  U v = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(in[i]) << (8 * i);
  return v;
}

inline void put_f64(std::vector<unsigned char>& out, double v) { put_le(out, std::bit_cast<std::uint64_t>(v)); }
inline void put_f32(std::vector<unsigned char>& out, float v) { put_le(out, std::bit_cast<std::uint32_t>(v)); }
inline void put_u32(std::vector<unsigned char>& out, std::uint32_t v) { put_le(out, v); }
inline double get_f64(const unsigned char* in) { return std::bit_cast<double>(get_le<std::uint64_t>(in)); }
inline float get_f32(const unsigned char* in) { return std::bit_cast<float>(get_le<std::uint32_t>(in)); }
inline std::uint32_t get_u32(const unsigned char* in) { return get_le<std::uint32_t>(in); }

}  // namespace morphgrasp::binary
