#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fedst/spectral.hpp"
#include "fedst/types.hpp"

namespace fedst {

/// Little-endian byte sink. All wire payloads are 64-bit IEEE doubles in
/// row-major order behind a fixed 16-byte header; see README for the layout.
class ByteWriter {
 public:
  void u32(std::uint32_t v);
  void u64(std::uint64_t v);
  void f64(double v);
  void str(const std::string& s);  // u32 length + raw bytes
  void matrix(const Matrix& m);          // u32 rows, u32 cols, row-major f64
  void spectrum(const SparseSpectrum& s);  // u64 length, u32 count, (u64,f64,f64) triples

  const std::vector<std::uint8_t>& bytes() const { return buf_; }
  std::size_t size() const { return buf_.size(); }

 private:
  std::vector<std::uint8_t> buf_;
};

class ByteReader {
 public:
  explicit ByteReader(const std::vector<std::uint8_t>& buf) : buf_(buf) {}

  std::uint32_t u32();
  std::uint64_t u64();
  double f64();
  std::string str();
  Matrix matrix();
  SparseSpectrum spectrum();
  bool done() const { return pos_ == buf_.size(); }

 private:
  void need(std::size_t n) const;
  const std::vector<std::uint8_t>& buf_;
  std::size_t pos_ = 0;
};

/// FNV-1a 64-bit hash; stamps config provenance into output files.
std::uint64_t fnv1a(const std::string& data);
std::string hashHex(std::uint64_t h);

}  // namespace fedst
