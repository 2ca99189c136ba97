#include "rp2/sticker.hpp"

#include <algorithm>
#include <cstdio>

#include "rp2/error.hpp"
#include "rp2/image_io.hpp"
#include "rp2/mask_discovery.hpp"

namespace rp2 {

namespace {

constexpr int kGap = 6;        // white space between a patch and its cut line
constexpr int kSheetPad = 12;  // between neighboring framed patches

}  // namespace

int source_pixel(int u, int canonical_side, int print_side) {
  return std::min(canonical_side - 1,
                  static_cast<int>((2LL * u + 1) * canonical_side / (2LL * print_side)));
}

Tensor quantized_sticker_colors(const Tensor& canonical, const Perturbation& perturbation,
                                const PrintablePalette& palette) {
  palette.validate();
  const Tensor printed = apply_perturbation(canonical, perturbation);
  Tensor out(printed.shape(), 1.0f);
  const Tensor& m = perturbation.mask.grid();
  for (std::size_t p = 0; p < m.size(); ++p) {
    if (m[p] == 0.0f) continue;
    const Rgb q = nearest_palette_color(palette, {printed[3 * p], printed[3 * p + 1], printed[3 * p + 2]});
    out[3 * p] = q.r;
    out[3 * p + 1] = q.g;
    out[3 * p + 2] = q.b;
  }
  return out;
}

StickerSheet export_sticker_sheet(const Tensor& canonical, const Perturbation& perturbation, int print_side,
                                  const std::filesystem::path& out_dir, const PrintablePalette& palette,
                                  double sign_width_mm) {
  const int s = perturbation.mask.side();
  if (print_side < s) throw ValidationError("print side must be at least the canonical side");
  if (!(sign_width_mm > 0.0)) throw ValidationError("sign width must be positive");
  const Tensor colors = quantized_sticker_colors(canonical, perturbation, palette);
  const std::vector<Component> comps = connected_components(perturbation.mask.grid());
  if (comps.empty()) throw ValidationError("empty mask: nothing to print");

  auto print_extent = [&](int lo, int count) {
    const int a = static_cast<int>(static_cast<long long>(lo) * print_side / s);
    const int b = static_cast<int>(static_cast<long long>(lo + count) * print_side / s);
    return std::pair{a, b - a};
  };

  // Shelf layout, one row of patches after another.
  StickerSheet sheet;
  sheet.print_side = print_side;
  sheet.mm_per_px = sign_width_mm / print_side;
  const int frame = 2 * (kGap + 1);
  const int row_limit = std::max(print_side, 256);
  int cursor_x = kSheetPad, cursor_y = kSheetPad, row_h = 0, sheet_w = 0;
  for (const Component& c : comps) {
    StickerPatch p{c.x0, c.y0, c.x1 - c.x0 + 1, c.y1 - c.y0 + 1};
    p.sheet_width = print_extent(p.x0, p.width).second;
    p.sheet_height = print_extent(p.y0, p.height).second;
    if (cursor_x > kSheetPad && cursor_x + p.sheet_width + frame > row_limit) {
      cursor_x = kSheetPad;
      cursor_y += row_h + kSheetPad;
      row_h = 0;
    }
    p.sheet_x = cursor_x + kGap + 1;
    p.sheet_y = cursor_y + kGap + 1;
    cursor_x += p.sheet_width + frame + kSheetPad;
    row_h = std::max(row_h, p.sheet_height + frame);
    sheet_w = std::max(sheet_w, cursor_x);
    sheet.patches.push_back(p);
  }
  const int sheet_h = cursor_y + row_h + kSheetPad;

  Tensor img({sheet_h, sheet_w, 3}, 1.0f);
  auto put = [&](int y, int x, float r, float g, float b) {
    float* px = img.data() + (static_cast<std::size_t>(y) * sheet_w + x) * 3;
    px[0] = r;
    px[1] = g;
    px[2] = b;
  };
  for (const StickerPatch& p : sheet.patches) {
    const int ox = print_extent(p.x0, p.width).first;
    const int oy = print_extent(p.y0, p.height).first;
    for (int v = 0; v < p.sheet_height; ++v) {
      const int sy = source_pixel(oy + v, s, print_side);
      for (int u = 0; u < p.sheet_width; ++u) {
        const int sx = source_pixel(ox + u, s, print_side);
        const float* c = colors.data() + (static_cast<std::size_t>(sy) * s + sx) * 3;
        put(p.sheet_y + v, p.sheet_x + u, c[0], c[1], c[2]);
      }
    }
    const int left = p.sheet_x - kGap - 1, right = p.sheet_x + p.sheet_width + kGap;
    const int top = p.sheet_y - kGap - 1, bottom = p.sheet_y + p.sheet_height + kGap;
    for (int x = left; x <= right; ++x) {
      put(top, x, 0, 0, 0);
      put(bottom, x, 0, 0, 0);
    }
    for (int y = top; y <= bottom; ++y) {
      put(y, left, 0, 0, 0);
      put(y, right, 0, 0, 0);
    }
  }

  char name[96];
  std::snprintf(name, sizeof name, "sticker_sheet_%.3fmm_per_px.png", sheet.mm_per_px);
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw IoError("cannot create " + out_dir.string() + ": " + ec.message());
  sheet.path = out_dir / name;
  write_png(sheet.path, img);
  return sheet;
}

}  // namespace rp2
