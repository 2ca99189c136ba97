#pragma once

#include <filesystem>
#include <vector>

#include "rp2/attack.hpp"

namespace rp2 {

/// One printed patch: a mask component's bounding rectangle in canonical
/// pixels and where its upsampled copy sits on the sheet.
struct StickerPatch {
  int x0 = 0, y0 = 0, width = 0, height = 0;  // canonical pixels
  int sheet_x = 0, sheet_y = 0;                // top-left on the sheet
  int sheet_width = 0, sheet_height = 0;
};

struct StickerSheet {
  std::filesystem::path path;
  std::vector<StickerPatch> patches;
  int print_side = 0;
  double mm_per_px = 0.0;
};

inline constexpr double kDefaultSignWidthMm = 750.0;

/// Canonical pixel feeding print pixel `u` when S pixels are printed as `print_side`.
int source_pixel(int u, int canonical_side, int print_side);

/// Palette-quantized clamp(canonical + M.delta) on the mask, white elsewhere.
Tensor quantized_sticker_colors(const Tensor& canonical, const Perturbation& perturbation,
                                const PrintablePalette& palette);

/// Writes a white sheet holding one nearest-neighbor upsampled patch per
/// mask component (the sign printed at print_side pixels across), each
/// framed by a black cut line. Off-mask pixels inside a patch stay white.
/// The file name records the print scale, e.g. sticker_sheet_2.930mm_per_px.png.
StickerSheet export_sticker_sheet(const Tensor& canonical, const Perturbation& perturbation, int print_side,
                                  const std::filesystem::path& out_dir, const PrintablePalette& palette,
                                  double sign_width_mm = kDefaultSignWidthMm);

}  // namespace rp2
