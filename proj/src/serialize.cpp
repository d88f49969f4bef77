#include "fedst/serialize.hpp"

#include <cstring>

#include "fedst/error.hpp"

namespace fedst {

void ByteWriter::u32(std::uint32_t v) {
  for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xff));
}

void ByteWriter::u64(std::uint64_t v) {
  for (int i = 0; i < 8; ++i) buf_.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xff));
}

void ByteWriter::f64(double v) {
  std::uint64_t bits = 0;
  std::memcpy(&bits, &v, sizeof(bits));
  u64(bits);
}

void ByteWriter::str(const std::string& s) {
  u32(static_cast<std::uint32_t>(s.size()));
  for (char c : s) buf_.push_back(static_cast<std::uint8_t>(c));
}

void ByteWriter::matrix(const Matrix& m) {
  u32(static_cast<std::uint32_t>(m.rows()));
  u32(static_cast<std::uint32_t>(m.cols()));
  for (Index r = 0; r < m.rows(); ++r) {
    for (Index c = 0; c < m.cols(); ++c) f64(m(r, c));
  }
}

void ByteWriter::spectrum(const SparseSpectrum& s) {
  u64(static_cast<std::uint64_t>(s.source_length));
  u32(static_cast<std::uint32_t>(s.size()));
  for (Index j = 0; j < s.size(); ++j) {
    u64(static_cast<std::uint64_t>(s.indices[static_cast<std::size_t>(j)]));
    f64(s.values[j].real());
    f64(s.values[j].imag());
  }
}

void ByteReader::need(std::size_t n) const {
  if (pos_ + n > buf_.size()) throw ProtocolError("ByteReader: truncated payload");
}

std::uint32_t ByteReader::u32() {
  need(4);
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(buf_[pos_ + i]) << (8 * i);
  pos_ += 4;
  return v;
}

std::uint64_t ByteReader::u64() {
  need(8);
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(buf_[pos_ + i]) << (8 * i);
  pos_ += 8;
  return v;
}

double ByteReader::f64() {
  const std::uint64_t bits = u64();
  double v = 0.0;
  std::memcpy(&v, &bits, sizeof(v));
  return v;
}

std::string ByteReader::str() {
  const std::uint32_t len = u32();
  need(len);
  std::string s(reinterpret_cast<const char*>(buf_.data() + pos_), len);
  pos_ += len;
  return s;
}

Matrix ByteReader::matrix() {
  const Index rows = static_cast<Index>(u32());
  const Index cols = static_cast<Index>(u32());
  Matrix m(rows, cols);
  for (Index r = 0; r < rows; ++r) {
    for (Index c = 0; c < cols; ++c) m(r, c) = f64();
  }
  return m;
}

SparseSpectrum ByteReader::spectrum() {
  SparseSpectrum s;
  s.source_length = static_cast<Index>(u64());
  const std::uint32_t count = u32();
  s.values.resize(count);
  for (std::uint32_t j = 0; j < count; ++j) {
    s.indices.push_back(static_cast<Index>(u64()));
    const double re = f64();
    const double im = f64();
    s.values[static_cast<Index>(j)] = Complex(re, im);
  }
  return s;
}

std::uint64_t fnv1a(const std::string& data) {
  std::uint64_t h = 14695981039346656037ULL;
  for (unsigned char c : data) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

std::string hashHex(std::uint64_t h) {
  static const char* digits = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i) {
    out[static_cast<std::size_t>(i)] = digits[h & 0xf];
    h >>= 4;
  }
  return out;
}

}  // namespace fedst
