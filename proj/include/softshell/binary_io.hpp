#pragma once

#include "softshell/errors.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <string>

// Little-endian primitives for the on-disk formats.
namespace softshell::binary {

template <typename Int>
void put_uint(std::ostream& out, Int value) {
  unsigned char buf[sizeof(Int)];
  for (std::size_t i = 0; i < sizeof(Int); ++i) buf[i] = static_cast<unsigned char>((value >> (8 * i)) & 0xFF);
  out.write(reinterpret_cast<const char*>(buf), sizeof buf);
}

inline void put_u32(std::ostream& out, std::uint32_t v) { put_uint(out, v); }
inline void put_u64(std::ostream& out, std::uint64_t v) { put_uint(out, v); }
inline void put_f32(std::ostream& out, float v) { put_uint(out, std::bit_cast<std::uint32_t>(v)); }
inline void put_f64(std::ostream& out, double v) { put_uint(out, std::bit_cast<std::uint64_t>(v)); }

template <typename Int>
Int get_uint(std::istream& in, std::uint64_t& offset) {
  unsigned char buf[sizeof(Int)];
  if (!in.read(reinterpret_cast<char*>(buf), sizeof buf)) throw FormatError("unexpected end of file", offset);
  Int v = 0;
  for (std::size_t i = 0; i < sizeof(Int); ++i) v |= static_cast<Int>(buf[i]) << (8 * i);
  offset += sizeof(Int);
  return v;
}

inline std::uint32_t get_u32(std::istream& in, std::uint64_t& offset) { return get_uint<std::uint32_t>(in, offset); }
inline std::uint64_t get_u64(std::istream& in, std::uint64_t& offset) { return get_uint<std::uint64_t>(in, offset); }
inline float get_f32(std::istream& in, std::uint64_t& offset) {
  return std::bit_cast<float>(get_uint<std::uint32_t>(in, offset));
}
inline double get_f64(std::istream& in, std::uint64_t& offset) {
  return std::bit_cast<double>(get_uint<std::uint64_t>(in, offset));
}

inline void put_bytes(std::ostream& out, const std::string& s) {
  put_u32(out, static_cast<std::uint32_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

inline std::string get_bytes(std::istream& in, std::uint64_t& offset, std::uint32_t max_len = 1u << 26) {
  const std::uint32_t n = get_u32(in, offset);
  if (n > max_len) throw FormatError("length field " + std::to_string(n) + " exceeds limit", offset - 4);
  std::string s(n, '\0');
  if (n && !in.read(s.data(), n)) throw FormatError("unexpected end of file", offset);
  offset += n;
  return s;
}

}  // namespace softshell::binary
