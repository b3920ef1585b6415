#pragma once

// Little-endian readers/writers shared by the dataset and checkpoint formats.

#include <bit>
#include <cstdint>
#include <cstring>
#include <string>
#include <string_view>
#include <vector>

#include "adaplan/errors.hpp"

namespace adaplan::detail {

static_assert(std::endian::native == std::endian::little, "only little-endian hosts are supported");

class ByteWriter {
 public:
  void bytes(const void* data, std::size_t n) {
    const auto* p = static_cast<const char*>(data);
    buffer_.insert(buffer_.end(), p, p + n);
  }
  void u8(std::uint8_t v) { bytes(&v, 1); }
  void u16(std::uint16_t v) { bytes(&v, 2); }
  void u32(std::uint32_t v) { bytes(&v, 4); }
  void f32(float v) { bytes(&v, 4); }
  void str(std::string_view s) { bytes(s.data(), s.size()); }

  const std::vector<char>& buffer() const { return buffer_; }

 private:
  std::vector<char> buffer_;
};

class ByteReader {
 public:
  explicit ByteReader(std::vector<char> data) : data_(std::move(data)) {}

  std::size_t offset() const { return offset_; }
  std::size_t remaining() const { return data_.size() - offset_; }

  void bytes(void* out, std::size_t n, const char* what) {
    if (remaining() < n) {
      throw FormatError(std::string("truncated file while reading ") + what, offset_);
    }
    std::memcpy(out, data_.data() + offset_, n);
    offset_ += n;
  }
  std::uint8_t u8(const char* what) {
    std::uint8_t v;
    bytes(&v, 1, what);
    return v;
  }
  std::uint16_t u16(const char* what) {
    std::uint16_t v;
    bytes(&v, 2, what);
    return v;
  }
  std::uint32_t u32(const char* what) {
    std::uint32_t v;
    bytes(&v, 4, what);
    return v;
  }
  float f32(const char* what) {
    float v;
    bytes(&v, 4, what);
    return v;
  }
  std::string str(std::size_t n, const char* what) {
    std::string s(n, '\0');
    bytes(s.data(), n, what);
    return s;
  }

 private:
  std::vector<char> data_;
  std::size_t offset_ = 0;
};

std::vector<char> read_file(const std::string& path);
void write_file(const std::string& path, const std::vector<char>& data);

}  // namespace adaplan::detail
