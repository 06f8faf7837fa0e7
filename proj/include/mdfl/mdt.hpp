#pragma once

// MDT tensor container: "MDT1", u8 dtype (1 = f32, 2 = u16), u8 rank,
// rank x u64 dims, row-major little-endian payload.

#include <cstdint>
#include <filesystem>
#include <vector>

#include "mdfl/tensor.hpp"

namespace mdfl {

enum class MdtType : std::uint8_t { f32 = 1, u16 = 2 };

struct MdtHeader {
  MdtType dtype = MdtType::f32;
  Shape shape;
  std::size_t payload_offset = 0;
};

/// Parses and validates the header only; also checks that the file holds
/// exactly the payload the header promises.
MdtHeader read_mdt_header(const std::filesystem::path& path);

Tensor<float> read_mdt_f32(const std::filesystem::path& path);
std::vector<std::uint16_t> read_mdt_u16(const std::filesystem::path& path, Shape* shape = nullptr);

void write_mdt(const std::filesystem::path& path, const Tensor<float>& t);
void write_mdt(const std::filesystem::path& path, const Shape& shape, const std::vector<std::uint16_t>& data);

/// Writes only the header bytes. Used to fabricate large test fixtures.
void write_mdt_header(std::ostream& out, MdtType dtype, const Shape& shape);

}  // namespace mdfl
