// Little-endian binary primitives, CRC32, and the MTF1/MTE1 matrix file
// formats (f32 payload on disk, f64 in memory).
#pragma once

#include <array>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "motorec/errors.hpp"
#include "motorec/matrix.hpp"

namespace motorec::io {

inline void put_u32le(std::string& out, std::uint32_t x) {
  out.push_back(static_cast<char>(x & 0xff));
  out.push_back(static_cast<char>((x >> 8) & 0xff));
  out.push_back(static_cast<char>((x >> 16) & 0xff));
  out.push_back(static_cast<char>((x >> 24) & 0xff));
}

inline void put_f32le(std::string& out, float x) {
  std::uint32_t bits;
  std::memcpy(&bits, &x, 4);
  put_u32le(out, bits);
}

inline void put_u64le(std::string& out, std::uint64_t x) {
  put_u32le(out, static_cast<std::uint32_t>(x & 0xffffffffull));
  put_u32le(out, static_cast<std::uint32_t>(x >> 32));
}

inline void put_f64le(std::string& out, double x) {
  std::uint64_t bits;
  std::memcpy(&bits, &x, 8);
  put_u64le(out, bits);
}

class Reader {
 public:
  Reader(const std::string& bytes, std::string what) : bytes_(bytes), what_(std::move(what)) {}

  std::uint32_t u32le() {
    need(4);
    std::uint32_t x = 0;
    for (int i = 3; i >= 0; --i) x = (x << 8) | static_cast<std::uint8_t>(bytes_[pos_ + i]);
    pos_ += 4;
    return x;
  }

  std::uint64_t u64le() {
    const std::uint64_t lo = u32le();
    const std::uint64_t hi = u32le();
    return lo | (hi << 32);
  }

  float f32le() {
    const std::uint32_t bits = u32le();
    float x;
    std::memcpy(&x, &bits, 4);
    return x;
  }

  double f64le() {
    const std::uint64_t bits = u64le();
    double x;
    std::memcpy(&x, &bits, 8);
    return x;
  }

  std::string raw(std::size_t n) {
    need(n);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  void need(std::size_t n) {
    if (pos_ + n > bytes_.size())
      throw integrity_error(what_ + ": truncated file (needed " + std::to_string(n) +
                            " more bytes)");
  }

  const std::string& bytes_;
  std::string what_;
  std::size_t pos_ = 0;
};

// CRC-32 (IEEE 802.3, reflected).
inline std::uint32_t crc32(const void* data, std::size_t len, std::uint32_t seed = 0) {
  static const std::array<std::uint32_t, 256> table = [] {
    std::array<std::uint32_t, 256> t{};
    for (std::uint32_t i = 0; i < 256; ++i) {
      std::uint32_t c = i;
      for (int k = 0; k < 8; ++k) c = (c & 1) ? 0xedb88320u ^ (c >> 1) : c >> 1;
      t[i] = c;
    }
    return t;
  }();
  std::uint32_t crc = ~seed;
  const auto* p = static_cast<const std::uint8_t*>(data);
  for (std::size_t i = 0; i < len; ++i) crc = table[(crc ^ p[i]) & 0xff] ^ (crc >> 8);
  return ~crc;
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw data_error("cannot open file: " + path);
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return bytes;
}

inline void write_file(const std::string& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw data_error("cannot open file for writing: " + path);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw data_error("write failed: " + path);
}

// Matrix container shared by MTF1 (features) and MTE1 (embeddings):
// magic, u32 count, u32 dim, count*dim f32 row-major.
inline std::string encode_matrix_f32(const char magic[4], const DenseMatrix& m) {
  std::string out(magic, 4);
  put_u32le(out, static_cast<std::uint32_t>(m.rows));
  put_u32le(out, static_cast<std::uint32_t>(m.cols));
  for (double x : m.v) put_f32le(out, static_cast<float>(x));
  return out;
}

inline DenseMatrix decode_matrix_f32(const char magic[4], const std::string& bytes,
                                     const std::string& what) {
  Reader r(bytes, what);
  if (r.raw(4) != std::string(magic, 4))
    throw integrity_error(what + ": bad magic (expected " + std::string(magic, 4) + ")");
  const std::uint32_t rows = r.u32le();
  const std::uint32_t cols = r.u32le();
  if (static_cast<std::uint64_t>(rows) * cols * 4 != r.remaining())
    throw integrity_error(what + ": payload size mismatch");
  DenseMatrix m(rows, cols);
  for (std::size_t i = 0; i < m.size(); ++i) m.v[i] = static_cast<double>(r.f32le());
  return m;
}

inline void write_features(const std::string& path, const DenseMatrix& m) {
  write_file(path, encode_matrix_f32("MTF1", m));
}

inline DenseMatrix read_features(const std::string& path) {
  return decode_matrix_f32("MTF1", read_file(path), path);
}

inline void write_embeddings(const std::string& path, const DenseMatrix& m) {
  write_file(path, encode_matrix_f32("MTE1", m));
}

inline DenseMatrix read_embeddings(const std::string& path) {
  return decode_matrix_f32("MTE1", read_file(path), path);
}

}  // namespace motorec::io
