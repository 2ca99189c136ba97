#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "rp2/signs.hpp"

namespace rp2 {

/// Colors a printer can reproduce.
struct PrintablePalette {
  std::string name;
  std::vector<Rgb> colors;

  /// Non-empty, every channel in [0,1], no duplicates.
  void validate() const;
};

/// The 27 colors of the {0, 0.5, 1}^3 grid, named "rgb27".
PrintablePalette default_palette();

/// Text file: one "r g b" triple in [0,1] per line; '#' starts a comment.
/// The palette takes the file stem as its name.
PrintablePalette load_palette(const std::filesystem::path& path);

/// Closest palette color under the L1 distance; ties go to the earlier entry.
Rgb nearest_palette_color(const PrintablePalette& palette, const Rgb& color);

}  // namespace rp2
