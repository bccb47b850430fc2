#pragma once

// Little-endian scalar/array I/O for checkpoint and state files.

#include <algorithm>
#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <stdexcept>
#include <string>
#include <type_traits>
#include <vector>

namespace armt::io {

class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

template <typename T>
  requires std::is_arithmetic_v<T>
void write_le(std::ostream& os, const T* data, std::size_t count) {
  if constexpr (std::endian::native == std::endian::little) {
    os.write(reinterpret_cast<const char*>(data), static_cast<std::streamsize>(count * sizeof(T)));
  } else {
    for (std::size_t i = 0; i < count; ++i) {
      char bytes[sizeof(T)];
      std::memcpy(bytes, data + i, sizeof(T));
      std::reverse(bytes, bytes + sizeof(T));
      os.write(bytes, sizeof(T));
    }
  }
}

template <typename T>
  requires std::is_arithmetic_v<T>
void read_le(std::istream& is, T* data, std::size_t count) {
  is.read(reinterpret_cast<char*>(data), static_cast<std::streamsize>(count * sizeof(T)));
  if (!is) throw FormatError("unexpected end of file");
  if constexpr (std::endian::native != std::endian::little) {
    for (std::size_t i = 0; i < count; ++i) {
      char* bytes = reinterpret_cast<char*>(data + i);
      std::reverse(bytes, bytes + sizeof(T));
    }
  }
}

template <typename T>
void write_scalar(std::ostream& os, T value) {
  write_le(os, &value, 1);
}

template <typename T>
T read_scalar(std::istream& is) {
  T value{};
  read_le(is, &value, 1);
  return value;
}

inline void write_magic(std::ostream& os, const char (&magic)[5]) { os.write(magic, 4); }

inline void expect_magic(std::istream& is, const char (&magic)[5], const std::string& what) {
  char buf[4] = {};
  is.read(buf, 4);
  if (!is || std::memcmp(buf, magic, 4) != 0) throw FormatError("not a " + what + " file");
}

}  // namespace armt::io
