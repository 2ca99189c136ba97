#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "rp2/geometry.hpp"
#include "rp2/tensor.hpp"

namespace rp2 {

/// Four image-space corners, clockwise from the sign's canonical top-left.
struct CornerAnnotation {
  Quad corners;
};

/// Images [N, 32, 32, 3] with one label per row and the generator index of each row.
struct DatasetSplit {
  Tensor images{Shape{0, 32, 32, 3}};
  std::vector<int> labels;
  std::vector<int> indices;

  int size() const { return static_cast<int>(labels.size()); }
};

struct SignDataset {
  DatasetSplit train;
  DatasetSplit val;
  DatasetSplit test;
};

inline constexpr int kMinPerClass = 20;
/// Canonical side used when rendering dataset images before warping to 32 x 32.
inline constexpr int kDatasetCanonicalSide = 64;

/// Per-split image counts for one class: round(70%), round(15%), rest.
struct SplitCounts {
  int train = 0, val = 0, test = 0;
};
SplitCounts split_counts(int per_class);

/// Procedural dataset over the reference classes with per-image jitter
/// (scale 0.6-1.0, rotation +/-15 deg, translation +/-10%, brightness +/-0.2,
/// noise sigma <= 0.02). Every split holds the same count of each class.
SignDataset generate_dataset(int per_class, std::uint64_t seed, int threads = 1);

/// One image of the procedural dataset, by global index.
Tensor dataset_image(int index, int class_id, std::uint64_t seed);

struct ImageRecord {
  std::string filename;
  Tensor image;  // [H, W, 3]
  int label = 0;
  std::optional<CornerAnnotation> corners;
};

struct FolderLoad {
  std::vector<ImageRecord> records;
  std::vector<std::string> warnings;
};

/// Parses "x0,y0;x1,y1;x2,y2;x3,y3"; throws FormatError if malformed or not strictly convex.
CornerAnnotation parse_corners(const std::string& text);
std::string format_corners(const CornerAnnotation& corners);

/// Loads PNGs named in a tab-separated annotation file
/// ("filename<TAB>label[<TAB>corners]"). PNGs without an annotation and
/// annotations without a file become warnings. Records come back in
/// annotation-file order.
FolderLoad load_image_folder(const std::filesystem::path& folder, const std::filesystem::path& annotations);

/// Writes a split as PNG files plus an annotations.tsv in the loader's format.
void write_split(const DatasetSplit& split, const std::filesystem::path& dir);

/// Loads a split written by write_split (images must be 32 x 32).
DatasetSplit read_split(const std::filesystem::path& dir);

}  // namespace rp2
