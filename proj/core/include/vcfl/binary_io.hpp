#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace vcfl {

/// Little-endian byte sink.
class ByteWriter {
 public:
  void put_u8(std::uint8_t v);
  void put_u32(std::uint32_t v);
  void put_u64(std::uint64_t v);
  void put_f64(double v);
  void put_bytes(std::span<const std::uint8_t> bytes);
  void put_magic(std::string_view magic);

  const std::vector<std::uint8_t>& bytes() const { return bytes_; }

 private:
  std::vector<std::uint8_t> bytes_;
};

/// Little-endian byte source. Every failure reports the byte offset.
class ByteReader {
 public:
  explicit ByteReader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  std::uint8_t get_u8(std::string_view what);
  std::uint32_t get_u32(std::string_view what);
  std::uint64_t get_u64(std::string_view what);
  double get_f64(std::string_view what);
  std::span<const std::uint8_t> get_bytes(std::size_t n, std::string_view what);
  void expect_magic(std::string_view magic);

  std::size_t offset() const { return offset_; }
  std::size_t remaining() const { return bytes_.size() - offset_; }
  void expect_end();

 private:
  void need(std::size_t n, std::string_view what) const;

  std::span<const std::uint8_t> bytes_;
  std::size_t offset_ = 0;
};

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);
void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

}  // namespace vcfl
