#ifndef XLPOOL_NPY_HPP_
#define XLPOOL_NPY_HPP_

// Minimal NPY reader/writer for little-endian float32 C-order arrays.
// Writes format 1.0; reads 1.0 and 2.0.

#include <bit>
#include <cctype>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "xlpool/error.hpp"

namespace xlpool {

static_assert(std::endian::native == std::endian::little,
              "xlpool assumes a little-endian host");

struct NpyArray {
  std::vector<std::size_t> shape;
  std::vector<float> data;
};

namespace detail {

inline constexpr std::string_view kNpyMagic{"\x93NUMPY", 6};

struct NpyHeader {
  std::string descr;
  bool fortran_order = false;
  std::vector<std::size_t> shape;
};

// Parses the python-literal dict in an NPY header. Only the three keys the
// format defines are understood; anything else is a format error.
class NpyHeaderParser {
 public:
  explicit NpyHeaderParser(std::string_view text) : s_(text) {}

  NpyHeader parse() {
    NpyHeader h;
    bool have_descr = false, have_order = false, have_shape = false;
    skip_ws();
    expect('{');
    skip_ws();
    while (peek() != '}') {
      std::string key = parse_string();
      skip_ws();
      expect(':');
      skip_ws();
      if (key == "descr") {
        h.descr = parse_string();
        have_descr = true;
      } else if (key == "fortran_order") {
        h.fortran_order = parse_bool();
        have_order = true;
      } else if (key == "shape") {
        h.shape = parse_shape();
        have_shape = true;
      } else {
        throw FormatError("npy: unexpected header key '" + key + "'");
      }
      skip_ws();
      if (peek() == ',') {
        ++pos_;
        skip_ws();
      } else if (peek() != '}') {
        throw FormatError("npy: expected ',' or '}' in header");
      }
    }
    ++pos_;
    skip_ws();
    if (pos_ != s_.size()) throw FormatError("npy: trailing bytes after header dict");
    if (!have_descr || !have_order || !have_shape)
      throw FormatError("npy: header missing 'descr', 'fortran_order' or 'shape'");
    return h;
  }

 private:
  char peek() const {
    if (pos_ >= s_.size()) throw FormatError("npy: header truncated");
    return s_[pos_];
  }
  void expect(char c) {
    if (peek() != c) throw FormatError(std::string("npy: expected '") + c + "' in header");
    ++pos_;
  }
  void skip_ws() {
    while (pos_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[pos_]))) ++pos_;
  }
  std::string parse_string() {
    char q = peek();
    if (q != '\'' && q != '"') throw FormatError("npy: expected quoted string in header");
    ++pos_;
    auto end = s_.find(q, pos_);
    if (end == std::string_view::npos) throw FormatError("npy: unterminated string in header");
    std::string out(s_.substr(pos_, end - pos_));
    pos_ = end + 1;
    return out;
  }
  bool parse_bool() {
    if (s_.substr(pos_, 4) == "True") {
      pos_ += 4;
      return true;
    }
    if (s_.substr(pos_, 5) == "False") {
      pos_ += 5;
      return false;
    }
    throw FormatError("npy: expected True/False for fortran_order");
  }
  std::vector<std::size_t> parse_shape() {
    std::vector<std::size_t> shape;
    expect('(');
    skip_ws();
    while (peek() != ')') {
      if (!std::isdigit(static_cast<unsigned char>(peek())))
        throw FormatError("npy: non-integer shape entry");
      std::size_t v = 0;
      while (pos_ < s_.size() && std::isdigit(static_cast<unsigned char>(s_[pos_]))) {
        v = v * 10 + static_cast<std::size_t>(s_[pos_] - '0');
        ++pos_;
      }
      if (pos_ < s_.size() && s_[pos_] == 'L') ++pos_;  // python 2 long suffix
      shape.push_back(v);
      skip_ws();
      if (peek() == ',') {
        ++pos_;
        skip_ws();
      } else if (peek() != ')') {
        throw FormatError("npy: malformed shape tuple");
      }
    }
    ++pos_;
    return shape;
  }

  std::string_view s_;
  std::size_t pos_ = 0;
};

inline std::string shape_to_string(std::span<const std::size_t> shape) {
  std::string s = "(";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ", ";
    s += std::to_string(shape[i]);
  }
  if (shape.size() == 1) s += ",";
  return s + ")";
}

inline std::string read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) throw IoError("read failed for '" + path.string() + "'");
  return bytes;
}

inline void write_file_bytes(const std::filesystem::path& path, std::string_view bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed for '" + path.string() + "'");
}

}  // namespace detail

inline std::string encode_npy(std::span<const std::size_t> shape, std::span<const float> data) {
  std::size_t count = 1;
  for (auto s : shape) count *= s;
  if (count != data.size())
    throw ShapeError("npy: shape " + detail::shape_to_string(shape) + " needs " +
                     std::to_string(count) + " values, got " + std::to_string(data.size()));

  std::string dict = "{'descr': '<f4', 'fortran_order': False, 'shape': " +
                     detail::shape_to_string(shape) + ", }";
  // magic(6) + version(2) + len(2) + dict + padding + '\n' is a multiple of 64.
  std::size_t unpadded = 10 + dict.size() + 1;
  std::size_t total = (unpadded + 63) / 64 * 64;
  dict.append(total - unpadded, ' ');
  dict.push_back('\n');
  if (dict.size() > 0xFFFF) throw ShapeError("npy: header too large for format 1.0");

  std::string out;
  out.reserve(total + data.size_bytes());
  out.append(detail::kNpyMagic);
  out.push_back('\x01');
  out.push_back('\x00');
  auto len = static_cast<std::uint16_t>(dict.size());
  out.push_back(static_cast<char>(len & 0xFF));
  out.push_back(static_cast<char>(len >> 8));
  out += dict;
  out.append(reinterpret_cast<const char*>(data.data()), data.size_bytes());
  return out;
}

inline NpyArray decode_npy(std::string_view bytes) {
  if (bytes.size() < 10 || bytes.substr(0, 6) != detail::kNpyMagic)
    throw FormatError("npy: bad magic");
  auto major = static_cast<unsigned char>(bytes[6]);
  std::size_t header_len = 0;
  std::size_t offset = 0;
  auto byte = [&](std::size_t i) { return static_cast<std::size_t>(static_cast<unsigned char>(bytes[i])); };
  if (major == 1) {
    header_len = byte(8) | (byte(9) << 8);
    offset = 10;
  } else if (major == 2) {
    if (bytes.size() < 12) throw FormatError("npy: truncated preamble");
    header_len = byte(8) | (byte(9) << 8) | (byte(10) << 16) | (byte(11) << 24);
    offset = 12;
  } else {
    throw FormatError("npy: unsupported format version " + std::to_string(major));
  }
  if (bytes.size() < offset + header_len) throw FormatError("npy: header truncated");
  auto header = detail::NpyHeaderParser(bytes.substr(offset, header_len)).parse();

  if (header.descr != "<f4")
    throw SchemaError("npy: dtype must be '<f4' (little-endian float32), got '" + header.descr + "'");
  if (header.fortran_order) throw SchemaError("npy: fortran_order must be False (C-order required)");

  std::size_t count = 1;
  for (auto s : header.shape) count *= s;
  auto payload = bytes.substr(offset + header_len);
  if (payload.size() != count * sizeof(float))
    throw FormatError("npy: payload has " + std::to_string(payload.size()) + " bytes, shape " +
                      detail::shape_to_string(header.shape) + " needs " +
                      std::to_string(count * sizeof(float)));
  NpyArray arr;
  arr.shape = std::move(header.shape);
  arr.data.resize(count);
  if (count) std::memcpy(arr.data.data(), payload.data(), payload.size());
  return arr;
}

inline NpyArray read_npy(const std::filesystem::path& path) {
  return decode_npy(detail::read_file_bytes(path));
}

inline void write_npy(const std::filesystem::path& path, std::span<const std::size_t> shape,
                      std::span<const float> data) {
  detail::write_file_bytes(path, encode_npy(shape, data));
}

inline void write_npy(const std::filesystem::path& path, std::initializer_list<std::size_t> shape,
                      std::span<const float> data) {
  std::vector<std::size_t> s(shape);
  write_npy(path, std::span<const std::size_t>(s), data);
}

}  // namespace xlpool

#endif  // XLPOOL_NPY_HPP_
