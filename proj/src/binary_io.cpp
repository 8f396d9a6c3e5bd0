#include "synthaug/binary_io.hpp"

#include <bit>
#include <fstream>
#include <iterator>

namespace synthaug {

void ByteWriter::put_u32(std::uint32_t v) {
  for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void ByteWriter::put_u64(std::uint64_t v) {
  for (int i = 0; i < 8; ++i) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void ByteWriter::put_f64(double v) { put_u64(std::bit_cast<std::uint64_t>(v)); }

void ByteWriter::put_f64s(std::span<const double> v) {
  for (double x : v) put_f64(x);
}

void ByteWriter::put_bytes(std::string_view bytes) {
  buf_.insert(buf_.end(), bytes.begin(), bytes.end());
}

void ByteReader::need(std::size_t n, const char* what) const {
  if (remaining() < n)
    throw ParseError(std::string("truncated input while reading ") + what, pos_);
}

std::uint8_t ByteReader::get_u8() {
  need(1, "u8");
  return bytes_[pos_++];
}

std::uint32_t ByteReader::get_u32() {
  need(4, "u32");
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes_[pos_++]) << (8 * i);
  return v;
}

std::uint64_t ByteReader::get_u64() {
  need(8, "u64");
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(bytes_[pos_++]) << (8 * i);
  return v;
}

double ByteReader::get_f64() {
  need(8, "f64");
  return std::bit_cast<double>(get_u64());
}

void ByteReader::get_f64s(std::span<double> out) {
  need(8 * out.size(), "f64 array");
  for (double& x : out) x = get_f64();
}

void ByteReader::expect_bytes(std::string_view bytes, const char* what) {
  need(bytes.size(), what);
  for (std::size_t i = 0; i < bytes.size(); ++i) {
    if (bytes_[pos_ + i] != static_cast<std::uint8_t>(bytes[i]))
      throw ParseError(std::string("bad ") + what, pos_ + i);
  }
  pos_ += bytes.size();
}

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed for '" + path.string() + "'");
}

}  // namespace synthaug
