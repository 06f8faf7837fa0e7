#include "mdfl/mdt.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>

#include "mdfl/errors.hpp"

namespace mdfl {

static_assert(std::endian::native == std::endian::little, "MDT payloads are read with memcpy");

namespace {

constexpr std::array<char, 4> kMagic{'M', 'D', 'T', '1'};

std::size_t element_bytes(MdtType t) { return t == MdtType::f32 ? 4 : 2; }

std::ifstream open_input(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw MissingFileError("missing file: " + path.string());
  std::ifstream in(path, std::ios::binary);
  if (!in) throw MissingFileError("cannot open " + path.string());
  return in;
}

template <typename V>
void read_payload(const std::filesystem::path& path, const MdtHeader& h, MdtType want, V* dst) {
  if (h.dtype != want) {
    throw ShapeMismatchError(path.string() + ": expected dtype " + std::to_string(static_cast<int>(want)) +
                             ", file has " + std::to_string(static_cast<int>(h.dtype)));
  }
  auto in = open_input(path);
  in.seekg(static_cast<std::streamoff>(h.payload_offset));
  const std::size_t bytes = shape_size(h.shape) * element_bytes(h.dtype);
  in.read(reinterpret_cast<char*>(dst), static_cast<std::streamsize>(bytes));
  if (!in) throw ShapeMismatchError(path.string() + ": truncated payload");
}

std::ofstream open_output(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  return out;
}

}  // namespace

MdtHeader read_mdt_header(const std::filesystem::path& path) {
  auto in = open_input(path);
  std::array<char, 4> magic{};
  in.read(magic.data(), 4);
  if (!in || magic != kMagic) throw BadMagicError(path.string() + ": bad magic (expected MDT1)");
  unsigned char type_rank[2];
  in.read(reinterpret_cast<char*>(type_rank), 2);
  if (!in) throw BadMagicError(path.string() + ": truncated header");
  MdtHeader h;
  if (type_rank[0] != 1 && type_rank[0] != 2) {
    throw BadMagicError(path.string() + ": unknown dtype code " + std::to_string(type_rank[0]));
  }
  h.dtype = static_cast<MdtType>(type_rank[0]);
  const std::size_t rank = type_rank[1];
  if (rank == 0) throw ShapeMismatchError(path.string() + ": rank 0");
  for (std::size_t i = 0; i < rank; ++i) {
    std::uint64_t d = 0;
    in.read(reinterpret_cast<char*>(&d), 8);
    if (!in) throw BadMagicError(path.string() + ": truncated header");
    if (d == 0) throw ShapeMismatchError(path.string() + ": zero dimension");
    h.shape.push_back(static_cast<std::size_t>(d));
  }
  h.payload_offset = 6 + 8 * rank;
  const auto expect = h.payload_offset + shape_size(h.shape) * element_bytes(h.dtype);
  const auto actual = std::filesystem::file_size(path);
  if (actual != expect) {
    throw ShapeMismatchError(path.string() + ": header " + shape_str(h.shape) + " needs " +
                             std::to_string(expect) + " bytes, file has " + std::to_string(actual));
  }
  return h;
}

Tensor<float> read_mdt_f32(const std::filesystem::path& path) {
  const auto h = read_mdt_header(path);
  Tensor<float> t(h.shape);
  read_payload(path, h, MdtType::f32, t.ptr());
  return t;
}

std::vector<std::uint16_t> read_mdt_u16(const std::filesystem::path& path, Shape* shape) {
  const auto h = read_mdt_header(path);
  std::vector<std::uint16_t> data(shape_size(h.shape));
  read_payload(path, h, MdtType::u16, data.data());
  if (shape) *shape = h.shape;
  return data;
}

void write_mdt_header(std::ostream& out, MdtType dtype, const Shape& shape) {
  if (shape.empty() || shape.size() > 255) throw ShapeError("MDT rank must be in [1,255]");
  out.write(kMagic.data(), 4);
  const unsigned char type_rank[2] = {static_cast<unsigned char>(dtype), static_cast<unsigned char>(shape.size())};
  out.write(reinterpret_cast<const char*>(type_rank), 2);
  for (auto d : shape) {
    const std::uint64_t v = d;
    out.write(reinterpret_cast<const char*>(&v), 8);
  }
}

void write_mdt(const std::filesystem::path& path, const Tensor<float>& t) {
  auto out = open_output(path);
  write_mdt_header(out, MdtType::f32, t.shape());
  out.write(reinterpret_cast<const char*>(t.ptr()), static_cast<std::streamsize>(t.size() * 4));
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

void write_mdt(const std::filesystem::path& path, const Shape& shape, const std::vector<std::uint16_t>& data) {
  if (shape_size(shape) != data.size()) throw ShapeError("MDT u16 payload does not match " + shape_str(shape));
  auto out = open_output(path);
  write_mdt_header(out, MdtType::u16, shape);
  out.write(reinterpret_cast<const char*>(data.data()), static_cast<std::streamsize>(data.size() * 2));
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

}  // namespace mdfl
