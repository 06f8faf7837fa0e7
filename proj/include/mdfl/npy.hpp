#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "mdfl/tensor.hpp"

namespace mdfl {

/// Contents of a NumPy .npy file (format 1.0 to 3.0, C order, little-endian
/// or single-byte numeric dtypes), widened to double.
struct NpyArray {
  std::string dtype;  // descr as stored, e.g. "<f4"
  Shape shape;
  std::vector<double> values;
};

NpyArray read_npy(const std::filesystem::path& path);

/// Test and tooling helper: writes float32 ("<f4") or uint16 ("<u2") arrays.
void write_npy_f32(const std::filesystem::path& path, const Shape& shape, const std::vector<float>& values);
void write_npy_u16(const std::filesystem::path& path, const Shape& shape, const std::vector<std::uint16_t>& values);

}  // namespace mdfl
