#include "rp2/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "rp2/classifier.hpp"
#include "rp2/error.hpp"
#include "rp2/image_io.hpp"
#include "rp2/parallel.hpp"
#include "rp2/rng.hpp"
#include "rp2/signs.hpp"
#include "rp2/transform.hpp"

namespace rp2 {

SplitCounts split_counts(int per_class) {
  SplitCounts c;
  c.train = static_cast<int>(std::lround(0.70 * per_class));
  c.val = static_cast<int>(std::lround(0.15 * per_class));
  c.test = per_class - c.train - c.val;
  return c;
}

Tensor dataset_image(int index, int class_id, std::uint64_t seed) {
  const SignClassSpec& spec = reference_sign_class(class_id);
  Rng rng = make_rng(seed, "dataset.image", static_cast<std::uint64_t>(index));
  const std::uint64_t render_seed = rng();
  PoseSpec pose;
  pose.full_frame_crop = true;
  pose.scale = uniform(rng, 0.6, 1.0);
  pose.roll_deg = uniform(rng, -15.0, 15.0);
  pose.offset_x = uniform(rng, -0.1, 0.1);
  pose.offset_y = uniform(rng, -0.1, 0.1);
  pose.brightness = uniform(rng, -0.2, 0.2);
  pose.noise_sigma = uniform(rng, 0.0, 0.02);
  pose.background_id = static_cast<int>(rng() % 1024);
  pose.noise_seed = rng();
  const Tensor canonical = render_sign(spec, kDatasetCanonicalSide, render_seed);
  return synthesize_instance(canonical, make_synthetic_sample(pose, kDatasetCanonicalSide));
}

SignDataset generate_dataset(int per_class, std::uint64_t seed, int threads) {
  if (per_class < kMinPerClass) {
    throw ValidationError("per_class must be >= " + std::to_string(kMinPerClass) + ", got " + std::to_string(per_class));
  }
  const SplitCounts counts = split_counts(per_class);
  // Global index = class * per_class + k; k decides the split.
  std::vector<std::pair<int, int>> train, val, test;  // (index, label)
  for (int c = 0; c < kReferenceClassCount; ++c) {
    for (int k = 0; k < per_class; ++k) {
      const int index = c * per_class + k;
      auto& dst = k < counts.train ? train : (k < counts.train + counts.val ? val : test);
      dst.emplace_back(index, c);
    }
  }
  Rng order = make_rng(seed, "dataset.order");
  auto build = [&](std::vector<std::pair<int, int>>& items) {
    std::shuffle(items.begin(), items.end(), order);
    DatasetSplit split;
    std::vector<Tensor> images(items.size());
    parallel_for(items.size(), threads,
                 [&](std::size_t i) { images[i] = dataset_image(items[i].first, items[i].second, seed); });
    for (const auto& [index, label] : items) {
      split.indices.push_back(index);
      split.labels.push_back(label);
    }
    split.images = items.empty() ? Tensor({0, kInstanceSide, kInstanceSide, 3}) : stack_images(images);
    return split;
  };
  SignDataset ds;
  ds.train = build(train);
  ds.val = build(val);
  ds.test = build(test);
  return ds;
}


namespace {

std::vector<std::string> split_on(const std::string& s, char sep) {
  std::vector<std::string> parts;
  std::string cur;
  std::istringstream is(s);
  while (std::getline(is, cur, sep)) parts.push_back(cur);
  if (!s.empty() && s.back() == sep) parts.emplace_back();
  return parts;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \r\n");
  return s.substr(b, e - b + 1);
}

double parse_number(const std::string& text, const std::string& context) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(text, &used);
  } catch (const std::exception&) {
    throw FormatError("malformed number '" + text + "' in " + context);
  }
  if (used != text.size() || !std::isfinite(v)) throw FormatError("malformed number '" + text + "' in " + context);
  return v;
}

}  // namespace

CornerAnnotation parse_corners(const std::string& text) {
  const auto points = split_on(trim(text), ';');
  if (points.size() != 4) throw FormatError("corner annotation needs 4 points, got '" + text + "'");
  CornerAnnotation a;
  for (std::size_t i = 0; i < 4; ++i) {
    const auto xy = split_on(points[i], ',');
    if (xy.size() != 2) throw FormatError("corner point '" + points[i] + "' is not x,y");
    a.corners[i] = {parse_number(trim(xy[0]), "corner x"), parse_number(trim(xy[1]), "corner y")};
  }
  if (!is_strictly_convex(a.corners)) throw FormatError("corner annotation '" + text + "' is not strictly convex");
  return a;
}

std::string format_corners(const CornerAnnotation& a) {
  std::ostringstream os;
  os.precision(17);
  for (std::size_t i = 0; i < 4; ++i) {
    if (i) os << ';';
    os << a.corners[i].x << ',' << a.corners[i].y;
  }
  return os.str();
}

FolderLoad load_image_folder(const std::filesystem::path& folder, const std::filesystem::path& annotations) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(folder)) throw IoError("not a directory: " + folder.string());
  FolderLoad result;

  std::set<std::string> pngs;
  for (const auto& entry : fs::directory_iterator(folder)) {
    if (!entry.is_regular_file()) continue;
    std::string ext = entry.path().extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    if (ext == ".png") pngs.insert(entry.path().filename().string());
  }

  struct Entry {
    std::string filename;
    int label;
    std::optional<CornerAnnotation> corners;
  };
  std::vector<Entry> entries;
  if (fs::exists(annotations)) {
    std::ifstream is(annotations);
    if (!is) throw IoError("cannot read " + annotations.string());
    std::string line;
    int line_no = 0;
    while (std::getline(is, line)) {
      ++line_no;
      const std::string context = annotations.filename().string() + ":" + std::to_string(line_no);
      if (trim(line).empty() || trim(line)[0] == '#') continue;
      const auto fields = split_on(line, '\t');
      if (fields.size() < 2 || fields.size() > 3) {
        throw FormatError("malformed annotation line " + context + ": expected 2 or 3 tab-separated fields");
      }
      Entry e;
      e.filename = trim(fields[0]);
      const double label = parse_number(trim(fields[1]), context);
      if (label < 0 || label != std::floor(label)) throw FormatError("malformed label in " + context);
      e.label = static_cast<int>(label);
      if (fields.size() == 3 && !trim(fields[2]).empty()) {
        try {
          e.corners = parse_corners(fields[2]);
        } catch (const FormatError& err) {
          throw FormatError("malformed annotation line " + context + ": " + err.what());
        }
      }
      entries.push_back(std::move(e));
    }
  }

  std::set<std::string> annotated;
  for (Entry& e : entries) {
    annotated.insert(e.filename);
    if (!pngs.contains(e.filename)) {
      result.warnings.push_back("annotation refers to missing file " + e.filename);
      continue;
    }
    ImageRecord rec;
    rec.filename = e.filename;
    rec.image = read_png(folder / e.filename);
    rec.label = e.label;
    rec.corners = e.corners;
    result.records.push_back(std::move(rec));
  }
  for (const std::string& name : pngs) {
    if (!annotated.contains(name)) result.warnings.push_back("no annotation for " + name + "; skipped");
  }
  return result;
}

void write_split(const DatasetSplit& split, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
  std::ofstream ann(dir / "annotations.tsv", std::ios::trunc);
  if (!ann) throw IoError("cannot write " + (dir / "annotations.tsv").string());
  for (int i = 0; i < split.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "%06d.png", split.indices[static_cast<std::size_t>(i)]);
    const Tensor item = batch_item(split.images, i);
    write_png(dir / name, item.reshaped({item.dim(1), item.dim(2), 3}));
    ann << name << '\t' << split.labels[static_cast<std::size_t>(i)] << '\n';
  }
  if (!ann) throw IoError("write failed for " + (dir / "annotations.tsv").string());
}

DatasetSplit read_split(const std::filesystem::path& dir) {
  FolderLoad load = load_image_folder(dir, dir / "annotations.tsv");
  DatasetSplit split;
  std::vector<Tensor> images;
  for (ImageRecord& r : load.records) {
    if (r.image.dim(0) != kInstanceSide || r.image.dim(1) != kInstanceSide) {
      throw FormatError("dataset image " + r.filename + " is not 32x32");
    }
    images.push_back(std::move(r.image));
    split.labels.push_back(r.label);
    const std::string stem = std::filesystem::path(r.filename).stem().string();
    int index = static_cast<int>(split.indices.size());
    try {
      index = std::stoi(stem);
    } catch (const std::exception&) {
    }
    split.indices.push_back(index);
  }
  if (!images.empty()) split.images = stack_images(images);
  return split;
}

}  // namespace rp2
