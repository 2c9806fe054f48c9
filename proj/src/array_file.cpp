#include "evsn/array_file.hpp"

#include <openssl/evp.h>

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>

#include "evsn/error.hpp"

namespace evsn {

static_assert(std::endian::native == std::endian::little,
              "array files are written with native little-endian stores");

NamedArray NamedArray::from_matrix(std::string name, const Matrix& m) {
  return {std::move(name), {m.rows(), m.cols()}, m.values()};
}

Matrix NamedArray::to_matrix() const {
  if (shape.size() != 2) fail(ErrorKind::data, "array '" + name + "' is not two-dimensional");
  return Matrix(shape[0], shape[1], values);
}

const NamedArray& ArrayFile::get(const std::string& name) const {
  for (const auto& a : arrays) {
    if (a.name == name) return a;
  }
  fail(ErrorKind::data, "array '" + name + "' not present");
}

namespace {

constexpr char kMagic[4] = {'E', 'V', 'S', 'N'};
constexpr std::size_t kDigestBytes = 32;

template <typename T>
void put(std::vector<std::uint8_t>& out, T value) {
  std::uint8_t bytes[sizeof(T)];
  std::memcpy(bytes, &value, sizeof(T));
  out.insert(out.end(), bytes, bytes + sizeof(T));
}

class Reader {
 public:
  Reader(const std::uint8_t* data, std::size_t size, const std::string& origin)
      : data_(data), size_(size), origin_(origin) {}

  template <typename T>
  T get() {
    need(sizeof(T));
    T value;
    std::memcpy(&value, data_ + pos_, sizeof(T));
    pos_ += sizeof(T);
    return value;
  }

  std::string text(std::size_t n) {
    need(n);
    std::string s(reinterpret_cast<const char*>(data_ + pos_), n);
    pos_ += n;
    return s;
  }

  void doubles(std::vector<double>& out, std::size_t n) {
    if (n > (size_ - pos_) / sizeof(double)) truncated();
    out.resize(n);
    std::memcpy(out.data(), data_ + pos_, n * sizeof(double));
    pos_ += n * sizeof(double);
  }

  bool done() const { return pos_ == size_; }

 private:
  void need(std::size_t n) {
    if (n > size_ - pos_) truncated();
  }
  [[noreturn]] void truncated() { fail(ErrorKind::data, origin_ + ": truncated array file"); }

  const std::uint8_t* data_;
  std::size_t size_;
  std::size_t pos_ = 0;
  std::string origin_;
};

void sha256(const std::uint8_t* data, std::size_t size, std::uint8_t* digest) {
  unsigned int len = 0;
  if (EVP_Digest(data, size, digest, &len, EVP_sha256(), nullptr) != 1 || len != kDigestBytes) {
    fail(ErrorKind::numeric, "SHA-256 computation failed");
  }
}

std::string hex(const std::uint8_t* bytes, std::size_t n) {
  static constexpr char kHex[] = "0123456789abcdef";
  std::string s;
  s.reserve(2 * n);
  for (std::size_t i = 0; i < n; ++i) {
    s.push_back(kHex[bytes[i] >> 4]);
    s.push_back(kHex[bytes[i] & 0xF]);
  }
  return s;
}

}  // namespace

std::vector<std::uint8_t> encode_payload(const ArrayFile& file) {
  std::vector<std::uint8_t> out;
  put<std::uint32_t>(out, static_cast<std::uint32_t>(file.arrays.size()));
  for (const auto& a : file.arrays) {
    std::uint64_t count = 1;
    for (auto d : a.shape) count *= d;
    if (count != a.values.size()) {
      fail(ErrorKind::shape, "array '" + a.name + "' shape does not match its value count");
    }
    put<std::uint32_t>(out, static_cast<std::uint32_t>(a.name.size()));
    out.insert(out.end(), a.name.begin(), a.name.end());
    put<std::uint32_t>(out, static_cast<std::uint32_t>(a.shape.size()));
    for (auto d : a.shape) put<std::uint64_t>(out, d);
    const auto* raw = reinterpret_cast<const std::uint8_t*>(a.values.data());
    out.insert(out.end(), raw, raw + a.values.size() * sizeof(double));
  }
  put<std::uint32_t>(out, static_cast<std::uint32_t>(file.metadata.size()));
  out.insert(out.end(), file.metadata.begin(), file.metadata.end());
  return out;
}

std::vector<std::uint8_t> serialize(const ArrayFile& file) {
  const std::vector<std::uint8_t> payload = encode_payload(file);
  std::vector<std::uint8_t> out(kMagic, kMagic + 4);
  put<std::uint32_t>(out, ArrayFile::kVersion);
  out.insert(out.end(), payload.begin(), payload.end());
  std::uint8_t digest[kDigestBytes];
  sha256(payload.data(), payload.size(), digest);
  out.insert(out.end(), digest, digest + kDigestBytes);
  return out;
}

ArrayFile deserialize(const std::vector<std::uint8_t>& bytes, const std::string& origin) {
  if (bytes.size() < 8 + 4 + 4 + kDigestBytes || std::memcmp(bytes.data(), kMagic, 4) != 0) {
    fail(ErrorKind::data, origin + ": not an EVSN array file");
  }
  std::uint32_t version;
  std::memcpy(&version, bytes.data() + 4, sizeof(version));
  if (version != ArrayFile::kVersion) {
    fail(ErrorKind::data, origin + ": unsupported format version " + std::to_string(version));
  }
  const std::uint8_t* payload = bytes.data() + 8;
  const std::size_t payload_size = bytes.size() - 8 - kDigestBytes;
  std::uint8_t digest[kDigestBytes];
  sha256(payload, payload_size, digest);
  if (std::memcmp(digest, payload + payload_size, kDigestBytes) != 0) {
    fail(ErrorKind::data, origin + ": digest mismatch, file is corrupted");
  }

  Reader r(payload, payload_size, origin);
  ArrayFile file;
  const auto count = r.get<std::uint32_t>();
  for (std::uint32_t i = 0; i < count; ++i) {
    NamedArray a;
    a.name = r.text(r.get<std::uint32_t>());
    const auto rank = r.get<std::uint32_t>();
    std::uint64_t total = 1;
    for (std::uint32_t d = 0; d < rank; ++d) {
      a.shape.push_back(r.get<std::uint64_t>());
      total *= a.shape.back();
    }
    r.doubles(a.values, total);
    file.arrays.push_back(std::move(a));
  }
  file.metadata = r.text(r.get<std::uint32_t>());
  if (!r.done()) fail(ErrorKind::data, origin + ": trailing bytes after metadata");
  return file;
}

void write_array_file(const std::filesystem::path& path, const ArrayFile& file) {
  const auto bytes = serialize(file);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorKind::io, "cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) fail(ErrorKind::io, "failed writing " + path.string());
}

ArrayFile read_array_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::io, "cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return deserialize(bytes, path.string());
}

std::string sha256_hex(const std::uint8_t* data, std::size_t size) {
  std::uint8_t digest[kDigestBytes];
  sha256(data, size, digest);
  return hex(digest, kDigestBytes);
}

std::string sha256_hex(const std::string& text) {
  return sha256_hex(reinterpret_cast<const std::uint8_t*>(text.data()), text.size());
}

std::string sha256_file_hex(const std::filesystem::path& path) {
  return sha256_hex(read_text_file(path));
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorKind::io, "cannot open " + path.string() + " for writing");
  out << text;
  if (!out) fail(ErrorKind::io, "failed writing " + path.string());
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::io, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace evsn
