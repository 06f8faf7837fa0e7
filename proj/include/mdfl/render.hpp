#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "mdfl/scene.hpp"

namespace mdfl {

using Rgb = std::array<std::uint8_t, 3>;

/// Fixed colour table; entry k-1 colours class k.
const std::vector<Rgb>& default_palette();

/// Writes `labels` as an 8-bit RGB PNG. Label 0 is black. Output bytes depend
/// only on the inputs.
void render_map(const LabelMap& labels, const std::vector<Rgb>& palette, const std::filesystem::path& out);

}  // namespace mdfl
