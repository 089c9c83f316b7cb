#pragma once

#include <cstdint>
#include <cstring>
#include <string>

#include <Eigen/Dense>

#include "evdet/common.hpp"

namespace evdet {

// Little-endian binary serialization for checkpoints and index blobs.
// Assumes an LE host (asserted at startup by the CLI; all supported targets
// are LE).

class BinaryWriter {
 public:
  void put_u8(uint8_t v) { buf_.push_back(static_cast<char>(v)); }
  void put_u32(uint32_t v) { put_raw(&v, sizeof v); }
  void put_u64(uint64_t v) { put_raw(&v, sizeof v); }
  void put_double(double v) { put_raw(&v, sizeof v); }

  void put_string(const std::string& s) {
    put_u32(static_cast<uint32_t>(s.size()));
    buf_.append(s);
  }

  void put_matrix(const Eigen::MatrixXd& m) {
    put_u32(static_cast<uint32_t>(m.rows()));
    put_u32(static_cast<uint32_t>(m.cols()));
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
      for (Eigen::Index c = 0; c < m.cols(); ++c) put_double(m(r, c));
    }
  }

  const std::string& buffer() const { return buf_; }

 private:
  void put_raw(const void* p, size_t n) { buf_.append(static_cast<const char*>(p), n); }
  std::string buf_;
};

class BinaryReader {
 public:
  explicit BinaryReader(std::string data) : data_(std::move(data)) {}

  uint8_t get_u8() { return static_cast<uint8_t>(data_.at(take(1))); }
  uint32_t get_u32() { uint32_t v; get_raw(&v, sizeof v); return v; }
  uint64_t get_u64() { uint64_t v; get_raw(&v, sizeof v); return v; }
  double get_double() { double v; get_raw(&v, sizeof v); return v; }

  std::string get_string() {
    uint32_t n = get_u32();
    size_t off = take(n);
    return data_.substr(off, n);
  }

  Eigen::MatrixXd get_matrix() {
    uint32_t rows = get_u32();
    uint32_t cols = get_u32();
    Eigen::MatrixXd m(rows, cols);
    for (uint32_t r = 0; r < rows; ++r) {
      for (uint32_t c = 0; c < cols; ++c) m(r, c) = get_double();
    }
    return m;
  }

  bool exhausted() const { return pos_ == data_.size(); }

 private:
  size_t take(size_t n) {
    if (pos_ + n > data_.size()) throw ParseError("truncated binary blob");
    size_t off = pos_;
    pos_ += n;
    return off;
  }
  void get_raw(void* p, size_t n) { std::memcpy(p, data_.data() + take(n), n); }

  std::string data_;
  size_t pos_ = 0;
};

}  // namespace evdet
