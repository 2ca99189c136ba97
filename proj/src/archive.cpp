#include "rp2/archive.hpp"

#include <fstream>

#include "rp2/error.hpp"
#include "rp2/image_io.hpp"
#include "rp2/weights_io.hpp"

namespace rp2 {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

json range(const Range& r) { return json::array({r.lo, r.hi}); }

}  // namespace

json to_json(const DistributionConfig& c) {
  return {{"scale", range(c.scale)},
          {"yaw_deg", range(c.yaw_deg)},
          {"pitch_deg", range(c.pitch_deg)},
          {"brightness", range(c.brightness)},
          {"crop_margin", range(c.crop_margin)},
          {"crop_shift", c.crop_shift},
          {"noise_sigma", c.noise_sigma},
          {"experimental_fraction", c.experimental_fraction},
          {"background_variants", c.background_variants}};
}

json to_json(const AttackConfig& c) {
  json palette = json::array();
  for (const Rgb& rgb : c.palette.colors) palette.push_back({rgb.r, rgb.g, rgb.b});
  return {{"lambda", c.lambda},
          {"norm", to_string(c.norm)},
          {"eta", c.eta},
          {"iterations", c.iterations},
          {"batch_size", c.batch_size},
          {"target_class", c.target_class ? json(*c.target_class) : json(nullptr)},
          {"untargeted", c.untargeted()},
          {"distribution", to_json(c.distribution)},
          {"palette", c.palette.name},
          {"palette_colors", palette},
          {"nps_weight", c.nps_weight},
          {"seed", c.seed},
          {"probe_size", c.probe_size},
          {"probe_every", c.probe_every}};
}

void write_archive(const fs::path& dir, const Perturbation& pert, const json& extra) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
  const int s = pert.mask.side();
  require_shape(pert.delta, {s, s, 3}, "perturbation delta");

  RpwFile file;
  file.architecture_id = std::string(kPerturbationArchitecture);
  file.class_count = 0;
  file.input_side = static_cast<std::uint32_t>(s);
  file.tensors = {pert.delta};
  write_rpw(file, dir / "delta.rpw");
  write_png(dir / "mask.png", pert.mask.grid());

  json meta = {{"canonical_side", s},
               {"norm", to_string(pert.norm_used)},
               {"lambda", pert.lambda_used},
               {"target_class", pert.target_class ? json(*pert.target_class) : json(nullptr)},
               {"untargeted", !pert.target_class.has_value()},
               {"palette", pert.palette_id},
               {"mask_coverage", pert.mask.coverage()}};
  for (const auto& [key, value] : extra.items()) {
    if (!meta.contains(key)) meta[key] = value;
  }
  std::ofstream out(dir / "meta.json");
  if (!out) throw IoError("cannot write " + (dir / "meta.json").string());
  out << meta.dump(2) << '\n';
}

PerturbationArchive read_archive(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw IoError("no archive directory at " + dir.string());
  PerturbationArchive a;
  std::ifstream in(dir / "meta.json");
  if (!in) throw FormatError(dir.string() + ": missing meta.json");
  try {
    a.meta = json::parse(in);
  } catch (const json::exception& e) {
    throw FormatError(dir.string() + "/meta.json: " + e.what());
  }
  try {
    const int s = a.meta.at("canonical_side").get<int>();
    const RpwFile file = read_rpw(dir / "delta.rpw", {"delta"}, kPerturbationArchitecture);
    if (file.input_side != static_cast<std::uint32_t>(s)) throw FormatError("delta.rpw side disagrees with meta.json");
    Tensor rgb = read_png(dir / "mask.png");
    if (rgb.dim(0) != s || rgb.dim(1) != s) throw FormatError("mask.png side disagrees with meta.json");
    Tensor grid({s, s});
    for (std::size_t p = 0; p < grid.size(); ++p) grid[p] = rgb[3 * p] > 0.5f ? 1.0f : 0.0f;
    a.perturbation.mask = Mask(std::move(grid));
    a.perturbation.delta = file.tensors.at(0);
    require_shape(a.perturbation.delta, {s, s, 3}, "archived delta");
    a.perturbation.norm_used = parse_norm(a.meta.at("norm").get<std::string>());
    a.perturbation.lambda_used = a.meta.at("lambda").get<double>();
    const json& target = a.meta.at("target_class");
    if (!target.is_null()) a.perturbation.target_class = target.get<int>();
    a.perturbation.palette_id = a.meta.value("palette", std::string());
  } catch (const json::exception& e) {
    throw FormatError(dir.string() + "/meta.json: " + e.what());
  } catch (const ValidationError& e) {
    throw FormatError(dir.string() + ": " + e.what());
  } catch (const ShapeError& e) {
    throw FormatError(dir.string() + ": " + e.what());
  }
  return a;
}

}  // namespace rp2
