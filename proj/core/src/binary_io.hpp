#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <string>
#include <string_view>
#include <type_traits>
#include <utility>

#include "mkbd/common.hpp"

namespace mkbd::detail {

template <typename T>
void put_le(std::ostream& out, T value) {
  static_assert(std::is_arithmetic_v<T>);
  using U = std::conditional_t<sizeof(T) == 8, std::uint64_t, std::uint32_t>;
  static_assert(sizeof(T) == sizeof(U));
  const U bits = std::bit_cast<U>(value);
  char bytes[sizeof(U)];
  for (std::size_t i = 0; i < sizeof(U); ++i) bytes[i] = static_cast<char>((bits >> (8 * i)) & 0xFF);
  out.write(bytes, sizeof(U));
}

/// Sequential little-endian reader that reports the offset of any failure.
class LeReader {
 public:
  LeReader(std::istream& in, std::string what) : in_(in), what_(std::move(what)) {}

  template <typename T>
  T get(std::string_view field) {
    using U = std::conditional_t<sizeof(T) == 8, std::uint64_t, std::uint32_t>;
    static_assert(sizeof(T) == sizeof(U));
    unsigned char bytes[sizeof(U)];
    read_raw(bytes, sizeof(U), field);
    U bits = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) bits |= static_cast<U>(bytes[i]) << (8 * i);
    return std::bit_cast<T>(bits);
  }

  void expect_magic(std::string_view magic) {
    char buf[8] = {};
    read_raw(buf, magic.size(), "magic");
    if (std::string_view(buf, magic.size()) != magic) {
      throw FormatError(what_ + ": bad magic, expected \"" + std::string(magic) + "\"", 0);
    }
  }

  void expect_end() {
    if (in_.peek() != std::char_traits<char>::eof()) {
      throw FormatError(what_ + ": trailing bytes after last record", offset_);
    }
  }

  std::uint64_t offset() const noexcept { return offset_; }

 private:
  void read_raw(void* dst, std::size_t n, std::string_view field) {
    in_.read(static_cast<char*>(dst), static_cast<std::streamsize>(n));
    const auto got = static_cast<std::size_t>(in_.gcount());
    if (got != n) {
      throw FormatError(what_ + ": truncated while reading " + std::string(field),
                        offset_ + got);
    }
    offset_ += n;
  }

  std::istream& in_;
  std::string what_;
  std::uint64_t offset_ = 0;
};

}  // namespace mkbd::detail
