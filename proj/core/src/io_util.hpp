#pragma once

// Internal binary (de)serialization helpers. Fixed-width little-endian
// fields written through memcpy; not installed.

#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace smile::io {

inline std::ofstream open_out(const std::string& path) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("cannot open for writing: " + path);
  return f;
}

inline std::ifstream open_in(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open for reading: " + path);
  return f;
}

template <class T>
void write_pod(std::ostream& os, const T& v) {
  static_assert(std::is_trivially_copyable_v<T>);
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T read_pod(std::istream& is) {
  static_assert(std::is_trivially_copyable_v<T>);
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw std::runtime_error("truncated binary file");
  return v;
}

inline void write_magic(std::ostream& os, const char tag[8]) {
  os.write(tag, 8);
}

inline void check_magic(std::istream& is, const char tag[8],
                        const std::string& what) {
  char buf[8] = {};
  is.read(buf, 8);
  if (!is || std::memcmp(buf, tag, 8) != 0)
    throw std::runtime_error("bad file header, expected " + what);
}

template <class T>
void write_vec(std::ostream& os, const std::vector<T>& v) {
  static_assert(std::is_trivially_copyable_v<T>);
  write_pod<uint64_t>(os, v.size());
  os.write(reinterpret_cast<const char*>(v.data()),
           std::streamsize(v.size() * sizeof(T)));
}

template <class T>
std::vector<T> read_vec(std::istream& is) {
  static_assert(std::is_trivially_copyable_v<T>);
  auto n = read_pod<uint64_t>(is);
  std::vector<T> v(n);
  is.read(reinterpret_cast<char*>(v.data()), std::streamsize(n * sizeof(T)));
  if (!is) throw std::runtime_error("truncated binary file");
  return v;
}

}  // namespace smile::io
