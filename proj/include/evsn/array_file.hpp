#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "evsn/matrix.hpp"

namespace evsn {

/// A named n-dimensional block of doubles.
struct NamedArray {
  std::string name;
  std::vector<std::uint64_t> shape;
  std::vector<double> values;

  static NamedArray from_matrix(std::string name, const Matrix& m);
  Matrix to_matrix() const;  // requires a 2-D shape
  bool operator==(const NamedArray&) const = default;
};

/// Container shared by checkpoints and corpora:
///
///   "EVSN" | u32 version | payload | 32-byte SHA-256(payload)
///   payload = u32 count, then per array: u32 name length, name bytes,
///             u32 rank, u64 dims[rank], f64 values[prod(dims)];
///             then u32 metadata length and UTF-8 JSON metadata.
///
/// All integers and doubles are little-endian.
struct ArrayFile {
  static constexpr std::uint32_t kVersion = 1;

  std::vector<NamedArray> arrays;
  std::string metadata = "{}";

  const NamedArray& get(const std::string& name) const;
  bool operator==(const ArrayFile&) const = default;
};

std::vector<std::uint8_t> encode_payload(const ArrayFile& file);
/// Full file image including magic, version and digest.
std::vector<std::uint8_t> serialize(const ArrayFile& file);
ArrayFile deserialize(const std::vector<std::uint8_t>& bytes, const std::string& origin = "buffer");

void write_array_file(const std::filesystem::path& path, const ArrayFile& file);
ArrayFile read_array_file(const std::filesystem::path& path);

std::string sha256_hex(const std::uint8_t* data, std::size_t size);
std::string sha256_hex(const std::string& text);
std::string sha256_file_hex(const std::filesystem::path& path);

/// Shared helpers for the small text files written next to binaries.
void write_text_file(const std::filesystem::path& path, const std::string& text);
std::string read_text_file(const std::filesystem::path& path);

}  // namespace evsn
