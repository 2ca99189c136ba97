#include "rp2/palette.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "rp2/error.hpp"

namespace rp2 {

void PrintablePalette::validate() const {
  if (colors.empty()) throw ValidationError("palette '" + name + "' is empty");
  for (std::size_t i = 0; i < colors.size(); ++i) {
    const Rgb& c = colors[i];
    for (float v : {c.r, c.g, c.b}) {
      if (!(v >= 0.0f && v <= 1.0f)) throw ValidationError("palette '" + name + "' has a channel outside [0,1]");
    }
    for (std::size_t j = 0; j < i; ++j) {
      if (colors[j] == c) throw ValidationError("palette '" + name + "' repeats a color");
    }
  }
}

PrintablePalette default_palette() {
  PrintablePalette p{"rgb27", {}};
  for (float r : {0.0f, 0.5f, 1.0f})
    for (float g : {0.0f, 0.5f, 1.0f})
      for (float b : {0.0f, 0.5f, 1.0f}) p.colors.push_back({r, g, b});
  return p;
}

PrintablePalette load_palette(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot read palette " + path.string());
  PrintablePalette p{path.stem().string(), {}};
  std::string line;
  int line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    std::istringstream ls(line);
    Rgb c;
    if (!(ls >> c.r)) continue;
    std::string rest;
    if (!(ls >> c.g >> c.b) || (ls >> rest)) {
      throw FormatError("palette " + path.string() + ":" + std::to_string(line_no) + " is not an 'r g b' triple");
    }
    p.colors.push_back(c);
  }
  try {
    p.validate();
  } catch (const ValidationError& e) {
    throw FormatError(e.what());
  }
  return p;
}

Rgb nearest_palette_color(const PrintablePalette& palette, const Rgb& c) {
  palette.validate();
  std::size_t best = 0;
  float best_d = 0.0f;
  for (std::size_t i = 0; i < palette.colors.size(); ++i) {
    const Rgb& p = palette.colors[i];
    const float d = std::abs(p.r - c.r) + std::abs(p.g - c.g) + std::abs(p.b - c.b);
    if (i == 0 || d < best_d) {
      best = i;
      best_d = d;
    }
  }
  return palette.colors[best];
}

}  // namespace rp2
