#include "vcfl/binary_io.hpp"

#include <cstring>
#include <fstream>
#include <sstream>

#include "vcfl/error.hpp"

namespace vcfl {

void ByteWriter::put_u8(std::uint8_t v) { bytes_.push_back(v); }

void ByteWriter::put_u32(std::uint32_t v) {
  for (int i = 0; i < 4; ++i) bytes_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void ByteWriter::put_u64(std::uint64_t v) {
  for (int i = 0; i < 8; ++i) bytes_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void ByteWriter::put_f64(double v) {
  std::uint64_t bits;
  std::memcpy(&bits, &v, sizeof bits);
  put_u64(bits);
}

void ByteWriter::put_bytes(std::span<const std::uint8_t> bytes) {
  bytes_.insert(bytes_.end(), bytes.begin(), bytes.end());
}

void ByteWriter::put_magic(std::string_view magic) {
  for (char c : magic) bytes_.push_back(static_cast<std::uint8_t>(c));
}

void ByteReader::need(std::size_t n, std::string_view what) const {
  if (remaining() < n) {
    std::ostringstream os;
    os << "truncated file: needed " << n << " bytes for " << what << " at byte offset "
       << offset_ << " but only " << remaining() << " remain";
    throw FormatError(os.str());
  }
}

std::uint8_t ByteReader::get_u8(std::string_view what) {
  need(1, what);
  return bytes_[offset_++];
}

std::uint32_t ByteReader::get_u32(std::string_view what) {
  need(4, what);
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= std::uint32_t{bytes_[offset_ + i]} << (8 * i);
  offset_ += 4;
  return v;
}

std::uint64_t ByteReader::get_u64(std::string_view what) {
  need(8, what);
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= std::uint64_t{bytes_[offset_ + i]} << (8 * i);
  offset_ += 8;
  return v;
}

double ByteReader::get_f64(std::string_view what) {
  const std::uint64_t bits = get_u64(what);
  double v;
  std::memcpy(&v, &bits, sizeof v);
  return v;
}

std::span<const std::uint8_t> ByteReader::get_bytes(std::size_t n, std::string_view what) {
  need(n, what);
  auto out = bytes_.subspan(offset_, n);
  offset_ += n;
  return out;
}

void ByteReader::expect_magic(std::string_view magic) {
  const std::size_t at = offset_;
  auto got = get_bytes(magic.size(), "magic");
  if (std::memcmp(got.data(), magic.data(), magic.size()) != 0) {
    std::string printable;
    for (auto b : got) printable += (b >= 32 && b < 127) ? static_cast<char>(b) : '?';
    std::ostringstream os;
    os << "bad magic at byte offset " << at << ": expected \"" << magic << "\", found \""
       << printable << "\"";
    throw FormatError(os.str());
  }
}

void ByteReader::expect_end() {
  if (remaining() != 0) {
    std::ostringstream os;
    os << "unexpected trailing data at byte offset " << offset_ << " (" << remaining()
       << " bytes)";
    throw FormatError(os.str());
  }
}

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string() + " for reading");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw FormatError("write failed for " + path.string());
}

}  // namespace vcfl
