#pragma once

#include <array>
#include <bit>
#include <cstdint>
#include <istream>
#include <ostream>
#include <string>

#include "bwdq/errors.hpp"

namespace bwdq::binio {

// Little-endian primitive writers, independent of host byte order.
template <typename UInt>
void write_uint(std::ostream& out, UInt value) {
  std::array<char, sizeof(UInt)> bytes{};
  for (std::size_t i = 0; i < sizeof(UInt); ++i) {
    bytes[i] = static_cast<char>((value >> (8 * i)) & 0xFF);
  }
  out.write(bytes.data(), bytes.size());
}

inline void write_u8(std::ostream& out, std::uint8_t v) { write_uint(out, v); }
inline void write_u32(std::ostream& out, std::uint32_t v) { write_uint(out, v); }
inline void write_u64(std::ostream& out, std::uint64_t v) { write_uint(out, v); }
inline void write_f64(std::ostream& out, double v) {
  write_uint(out, std::bit_cast<std::uint64_t>(v));
}

// Reader that tracks its byte offset so format errors can report where they happened.
class Reader {
 public:
  explicit Reader(std::istream& in, std::uint64_t start_offset = 0)
      : in_(in), offset_(start_offset) {}

  std::uint64_t offset() const { return offset_; }

  template <typename UInt>
  UInt read_uint(const char* what) {
    std::array<char, sizeof(UInt)> bytes{};
    in_.read(bytes.data(), bytes.size());
    if (in_.gcount() != static_cast<std::streamsize>(bytes.size())) {
      throw FormatError(std::string("truncated file while reading ") + what, offset_);
    }
    UInt value = 0;
    for (std::size_t i = 0; i < sizeof(UInt); ++i) {
      value |= static_cast<UInt>(static_cast<unsigned char>(bytes[i])) << (8 * i);
    }
    offset_ += sizeof(UInt);
    return value;
  }

  std::uint8_t u8(const char* what) { return read_uint<std::uint8_t>(what); }
  std::uint32_t u32(const char* what) { return read_uint<std::uint32_t>(what); }
  std::uint64_t u64(const char* what) { return read_uint<std::uint64_t>(what); }
  double f64(const char* what) { return std::bit_cast<double>(read_uint<std::uint64_t>(what)); }

  std::string magic(std::size_t n) {
    std::string s(n, '\0');
    in_.read(s.data(), static_cast<std::streamsize>(n));
    if (in_.gcount() != static_cast<std::streamsize>(n)) {
      throw FormatError("truncated file while reading magic", offset_);
    }
    offset_ += n;
    return s;
  }

 private:
  std::istream& in_;
  std::uint64_t offset_;
};

}  // namespace bwdq::binio
