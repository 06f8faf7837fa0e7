#include "mdfl/npy.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>
#include <regex>
#include <sstream>

#include "mdfl/errors.hpp"

namespace mdfl {

namespace {

template <typename U>
void widen(const std::vector<char>& raw, std::vector<double>& out) {
  const std::size_t n = raw.size() / sizeof(U);
  out.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    U v;
    std::memcpy(&v, raw.data() + i * sizeof(U), sizeof(U));
    out[i] = static_cast<double>(v);
  }
}

std::size_t dtype_size(const std::string& d) {
  static const std::vector<std::pair<std::string, std::size_t>> known{
      {"<f4", 4}, {"<f8", 8}, {"|u1", 1}, {"|i1", 1}, {"|b1", 1}, {"<u2", 2}, {"<i2", 2},
      {"<u4", 4}, {"<i4", 4}, {"<u8", 8}, {"<i8", 8}};
  for (const auto& [name, size] : known) {
    if (name == d) return size;
  }
  throw DataError("unsupported npy dtype '" + d + "'");
}

void write_npy(const std::filesystem::path& path, const std::string& descr, const Shape& shape, const char* data,
               std::size_t bytes) {
  std::ostringstream dict;
  dict << "{'descr': '" << descr << "', 'fortran_order': False, 'shape': (";
  for (std::size_t i = 0; i < shape.size(); ++i) dict << shape[i] << (shape.size() == 1 || i + 1 < shape.size() ? "," : "");
  dict << "), }";
  std::string header = dict.str();
  const std::size_t unpadded = 10 + header.size() + 1;
  header.append((64 - unpadded % 64) % 64, ' ');
  header += '\n';
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.write("\x93NUMPY\x01\x00", 8);
  const std::uint16_t len = static_cast<std::uint16_t>(header.size());
  out.write(reinterpret_cast<const char*>(&len), 2);
  out << header;
  out.write(data, static_cast<std::streamsize>(bytes));
}

}  // namespace

NpyArray read_npy(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw MissingFileError("cannot open " + path.string());
  char magic[8];
  if (!in.read(magic, 8) || std::memcmp(magic, "\x93NUMPY", 6) != 0) {
    throw BadMagicError(path.string() + " is not a .npy file");
  }
  const int major = static_cast<unsigned char>(magic[6]);
  std::uint32_t header_len = 0;
  if (major == 1) {
    std::uint16_t h = 0;
    in.read(reinterpret_cast<char*>(&h), 2);
    header_len = h;
  } else if (major == 2 || major == 3) {
    in.read(reinterpret_cast<char*>(&header_len), 4);
  } else {
    throw BadMagicError(path.string() + ": unsupported npy version " + std::to_string(major));
  }
  std::string header(header_len, '\0');
  if (!in.read(header.data(), header_len)) throw ShapeMismatchError(path.string() + ": truncated npy header");

  std::smatch m;
  NpyArray a;
  if (!std::regex_search(header, m, std::regex(R"('descr'\s*:\s*'([^']+)')"))) {
    throw DataError(path.string() + ": npy header lacks descr");
  }
  a.dtype = m[1];
  if (std::regex_search(header, m, std::regex(R"('fortran_order'\s*:\s*True)"))) {
    throw DataError(path.string() + ": Fortran-ordered arrays are not supported; save with order='C'");
  }
  if (!std::regex_search(header, m, std::regex(R"('shape'\s*:\s*\(([^)]*)\))"))) {
    throw DataError(path.string() + ": npy header lacks shape");
  }
  const std::string dims = m[1];
  const std::regex number(R"(\d+)");
  for (std::sregex_iterator it(dims.begin(), dims.end(), number), end; it != end; ++it) {
    a.shape.push_back(std::stoull(it->str()));
  }
  std::size_t count = 1;
  for (auto d : a.shape) count *= d;
  const std::size_t size = dtype_size(a.dtype);
  std::vector<char> raw(count * size);
  if (!in.read(raw.data(), static_cast<std::streamsize>(raw.size()))) {
    throw ShapeMismatchError(path.string() + ": payload shorter than shape " + shape_str(a.shape) + " requires");
  }
  if (in.peek() != std::char_traits<char>::eof()) throw ShapeMismatchError(path.string() + ": trailing bytes after payload");

  const auto& d = a.dtype;
  if (d == "<f4") widen<float>(raw, a.values);
  else if (d == "<f8") widen<double>(raw, a.values);
  else if (d == "|u1" || d == "|b1") widen<std::uint8_t>(raw, a.values);
  else if (d == "|i1") widen<std::int8_t>(raw, a.values);
  else if (d == "<u2") widen<std::uint16_t>(raw, a.values);
  else if (d == "<i2") widen<std::int16_t>(raw, a.values);
  else if (d == "<u4") widen<std::uint32_t>(raw, a.values);
  else if (d == "<i4") widen<std::int32_t>(raw, a.values);
  else if (d == "<u8") widen<std::uint64_t>(raw, a.values);
  else widen<std::int64_t>(raw, a.values);
  return a;
}

void write_npy_f32(const std::filesystem::path& path, const Shape& shape, const std::vector<float>& values) {
  write_npy(path, "<f4", shape, reinterpret_cast<const char*>(values.data()), values.size() * sizeof(float));
}

void write_npy_u16(const std::filesystem::path& path, const Shape& shape, const std::vector<std::uint16_t>& values) {
  write_npy(path, "<u2", shape, reinterpret_cast<const char*>(values.data()), values.size() * 2);
}

}  // namespace mdfl
