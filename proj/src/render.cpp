#include "mdfl/render.hpp"

#include <png.h>

#include <cstdio>
#include <memory>
#include <string>

#include "mdfl/errors.hpp"

namespace mdfl {

const std::vector<Rgb>& default_palette() {
  static const std::vector<Rgb> palette{
      {230, 25, 75},   {60, 180, 75},   {255, 225, 25}, {0, 130, 200},   {245, 130, 48},  {145, 30, 180},
      {70, 240, 240},  {240, 50, 230},  {210, 245, 60}, {250, 190, 212}, {0, 128, 128},   {220, 190, 255},
      {170, 110, 40},  {255, 250, 200}, {128, 0, 0},    {170, 255, 195}, {128, 128, 0},   {255, 215, 180},
      {0, 0, 128},     {128, 128, 128}, {255, 255, 255}};
  return palette;
}

void render_map(const LabelMap& labels, const std::vector<Rgb>& palette, const std::filesystem::path& out) {
  if (labels.height == 0 || labels.width == 0) throw ValidationError("render_map: empty raster");
  std::uint16_t max_label = 0;
  for (auto v : labels.data) max_label = std::max(max_label, v);
  if (palette.size() < max_label) {
    throw ValidationError("palette has " + std::to_string(palette.size()) + " colours but raster uses class " +
                          std::to_string(max_label));
  }

  std::unique_ptr<FILE, int (*)(FILE*)> file(std::fopen(out.c_str(), "wb"), &std::fclose);
  if (!file) throw std::runtime_error("cannot open " + out.string() + " for writing");

  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, &info);
    throw std::runtime_error("libpng initialisation failed");
  }

  std::vector<png_byte> row(labels.width * 3);
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw std::runtime_error("failed writing " + out.string());
  }
  png_init_io(png, file.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(labels.width), static_cast<png_uint_32>(labels.height), 8,
               PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (std::size_t r = 0; r < labels.height; ++r) {
    for (std::size_t c = 0; c < labels.width; ++c) {
      const auto k = labels.at(r, c);
      const Rgb rgb = k == 0 ? Rgb{0, 0, 0} : palette[k - 1];
      for (int ch = 0; ch < 3; ++ch) row[c * 3 + ch] = rgb[ch];
    }
    png_write_row(png, row.data());
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  if (std::fflush(file.get()) != 0) throw std::runtime_error("failed writing " + out.string());
}

}  // namespace mdfl
