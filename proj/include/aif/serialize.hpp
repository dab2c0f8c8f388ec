#pragma once

#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <string>
#include <type_traits>
#include <vector>

#include "aif/errors.hpp"

namespace aif::io {

// Little-endian host assumed; checkpoints are not meant to move across
// architectures with a different byte order.

class BinaryWriter {
 public:
  explicit BinaryWriter(std::ostream& os) : os_(os) {}

  template <class T>
    requires std::is_arithmetic_v<T>
  void put(T value) {
    os_.write(reinterpret_cast<const char*>(&value), sizeof(T));
  }

  void put_size(std::size_t n) { put<std::uint64_t>(n); }

  void put_string(const std::string& s) {
    put_size(s.size());
    os_.write(s.data(), static_cast<std::streamsize>(s.size()));
  }

  template <class T>
    requires std::is_arithmetic_v<T>
  void put_vector(const std::vector<T>& v) {
    put_size(v.size());
    os_.write(reinterpret_cast<const char*>(v.data()),
              static_cast<std::streamsize>(v.size() * sizeof(T)));
  }

  void check() const {
    if (!os_) throw FormatError("write failed");
  }

 private:
  std::ostream& os_;
};

class BinaryReader {
 public:
  explicit BinaryReader(std::istream& is) : is_(is) {}

  template <class T>
    requires std::is_arithmetic_v<T>
  T get() {
    T value{};
    is_.read(reinterpret_cast<char*>(&value), sizeof(T));
    if (!is_) throw FormatError("unexpected end of stream");
    return value;
  }

  std::size_t get_size() {
    const auto n = get<std::uint64_t>();
    if (n > (std::uint64_t{1} << 40)) throw FormatError("implausible length field");
    return static_cast<std::size_t>(n);
  }

  std::string get_string() {
    std::string s(get_size(), '\0');
    is_.read(s.data(), static_cast<std::streamsize>(s.size()));
    if (!is_) throw FormatError("unexpected end of stream");
    return s;
  }

  template <class T>
    requires std::is_arithmetic_v<T>
  std::vector<T> get_vector() {
    std::vector<T> v(get_size());
    is_.read(reinterpret_cast<char*>(v.data()),
             static_cast<std::streamsize>(v.size() * sizeof(T)));
    if (!is_) throw FormatError("unexpected end of stream");
    return v;
  }

  void expect_tag(const char* tag) {
    const std::size_t len = std::strlen(tag);
    std::string got(len, '\0');
    is_.read(got.data(), static_cast<std::streamsize>(len));
    if (!is_ || got != tag) throw FormatError(std::string("missing section tag ") + tag);
  }

 private:
  std::istream& is_;
};

inline void put_tag(std::ostream& os, const char* tag) { os.write(tag, std::strlen(tag)); }

}  // namespace aif::io
