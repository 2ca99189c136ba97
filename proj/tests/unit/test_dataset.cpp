#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <set>

#include "oracles.hpp"
#include "rp2/dataset.hpp"
#include "rp2/error.hpp"
#include "rp2/image_io.hpp"
#include "rp2/signs.hpp"

using namespace rp2;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "rp2_unit_dataset" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

/// Even-odd ray casting, independent of the renderer's convexity test.
bool point_in_polygon(const std::vector<Point2>& poly, double x, double y) {
  bool inside = false;
  for (std::size_t i = 0, j = poly.size() - 1; i < poly.size(); j = i++) {
    if ((poly[i].y > y) != (poly[j].y > y) &&
        x < (poly[j].x - poly[i].x) * (y - poly[i].y) / (poly[j].y - poly[i].y) + poly[i].x) {
      inside = !inside;
    }
  }
  return inside;
}

bool same_color(const float* px, const Rgb& c) { return px[0] == c.r && px[1] == c.g && px[2] == c.b; }

}  // namespace

TEST(Signs, ReferenceClassesAreDistinct) {
  const auto& classes = reference_sign_classes();
  ASSERT_EQ(classes.size(), 8u);
  std::set<std::pair<int, int>> seen;
  for (const auto& c : classes) seen.insert({static_cast<int>(c.shape), static_cast<int>(c.glyph)});
  EXPECT_EQ(seen.size(), 8u);
  EXPECT_EQ(classes[0].shape, SignShape::octagon);
}

TEST(Signs, RenderIsDeterministicAndInRange) {
  for (const auto& spec : reference_sign_classes()) {
    const Tensor a = render_sign(spec, 48, 9);
    EXPECT_EQ(a, render_sign(spec, 48, 9));
    for (float v : a.values()) {
      EXPECT_GE(v, 0.0f);
      EXPECT_LE(v, 1.0f);
    }
  }
  EXPECT_THROW(render_sign(reference_sign_class(0), 16, 1), ValidationError);
}

TEST(Signs, OctagonCornersAgainstPointInPolygon) {
  const SignClassSpec& spec = reference_sign_class(0);
  const int side = 64;
  // Fill region: the outline at 0.82 of the 0.95 circumradius.
  std::vector<Point2> inner;
  std::vector<Point2> vertices;
  for (int k = 0; k < 8; ++k) {
    const double a = (-112.5 + 45.0 * k) * std::numbers::pi / 180.0;
    inner.push_back({0.95 * 0.82 * std::cos(a), 0.95 * 0.82 * std::sin(a)});
    vertices.push_back({0.95 * 0.70 * std::cos(a), 0.95 * 0.70 * std::sin(a)});
  }
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const Tensor img = render_sign(spec, side, seed);
    const Rgb bg = render_background(spec, seed);
    for (const Point2& v : vertices) {
      const int x = static_cast<int>(std::floor((v.x + 1.0) * side / 2.0));
      const int y = static_cast<int>(std::floor((v.y + 1.0) * side / 2.0));
      // Every corner of the pixel must be inside the fill octagon for the oracle to apply.
      bool all_inside = true;
      for (int cy = 0; cy <= 1; ++cy)
        for (int cx = 0; cx <= 1; ++cx)
          all_inside = all_inside && point_in_polygon(inner, 2.0 * (x + cx) / side - 1.0, 2.0 * (y + cy) / side - 1.0);
      ASSERT_TRUE(all_inside);
      EXPECT_TRUE(same_color(img.data() + (static_cast<std::size_t>(y) * side + x) * 3, spec.fill_color));
    }
    for (int corner = 0; corner < 4; ++corner) {
      const int x = corner % 2 ? side - 1 : 0, y = corner / 2 ? side - 1 : 0;
      const float* px = img.data() + (static_cast<std::size_t>(y) * side + x) * 3;
      EXPECT_FALSE(same_color(px, spec.fill_color));
      EXPECT_TRUE(same_color(px, bg));
    }
  }
}

TEST(Signs, SurfaceMaskAgreesWithPointInPolygon) {
  const SignClassSpec& spec = reference_sign_class(0);
  const int side = 64;
  const std::vector<Point2> outline = sign_outline(spec.shape);
  const Tensor mask = sign_surface_mask(spec, side);
  for (int y = 0; y < side; ++y)
    for (int x = 0; x < side; ++x) {
      const bool in = point_in_polygon(outline, 2.0 * (x + 0.5) / side - 1.0, 2.0 * (y + 0.5) / side - 1.0);
      EXPECT_EQ(mask.at({y, x}) == 1.0f, in) << x << "," << y;
    }
}

TEST(Signs, CircleCenterIsFill) {
  SignClassSpec spec = reference_sign_class(4);
  spec.glyph = Glyph::none;
  const Tensor img = render_sign(spec, 32, 3);
  EXPECT_TRUE(same_color(img.data() + (16 * 32 + 16) * 3, spec.fill_color));
}

TEST(Dataset, SplitArithmetic) {
  const SplitCounts c = split_counts(100);
  EXPECT_EQ(c.train, 70);
  EXPECT_EQ(c.val, 15);
  EXPECT_EQ(c.test, 15);
  EXPECT_THROW(generate_dataset(10, 1), ValidationError);
}

TEST(Dataset, BalancedDisjointDeterministic) {
  const SignDataset a = generate_dataset(20, 5);
  EXPECT_EQ(a.train.size(), 8 * 14);
  EXPECT_EQ(a.val.size(), 8 * 3);
  EXPECT_EQ(a.test.size(), 8 * 3);
  std::set<int> seen;
  for (const DatasetSplit* s : {&a.train, &a.val, &a.test}) {
    std::vector<int> hist(8, 0);
    for (int l : s->labels) ++hist[l];
    for (int h : hist) EXPECT_EQ(h, s->size() / 8);
    for (int i : s->indices) EXPECT_TRUE(seen.insert(i).second) << "index " << i << " in two splits";
    for (float v : s->images.values()) {
      ASSERT_GE(v, 0.0f);
      ASSERT_LE(v, 1.0f);
    }
  }
  const SignDataset again = generate_dataset(20, 5, 3);
  EXPECT_EQ(a.train.images, again.train.images);
  EXPECT_EQ(a.test.labels, again.test.labels);
  const SignDataset other = generate_dataset(20, 6);
  EXPECT_NE(a.train.images, other.train.images);
  std::multiset<int> ha(a.train.labels.begin(), a.train.labels.end());
  std::multiset<int> hb(other.train.labels.begin(), other.train.labels.end());
  EXPECT_EQ(ha, hb);
}

TEST(Corners, ParseAndFormat) {
  const CornerAnnotation c = parse_corners("1,2;10,2;10,12;1,12");
  EXPECT_EQ(c.corners[2].x, 10.0);
  EXPECT_EQ(c.corners[2].y, 12.0);
  EXPECT_EQ(parse_corners(format_corners(c)).corners[3].y, 12.0);
  EXPECT_THROW(parse_corners("1,2;10,2;1,12;10,12"), FormatError);  // self-intersecting
  EXPECT_THROW(parse_corners("1,2;10,2;10,12"), FormatError);
  EXPECT_THROW(parse_corners("a,b;1,1;2,2;3,3"), FormatError);
}

TEST(ImageIo, RoundTripQuantizes) {
  const fs::path dir = fresh_dir("png");
  const Tensor img = rp2::testing::Gen(3).tensor({5, 7, 3}, 0.0, 1.0);
  write_png(dir / "a.png", img);
  const Tensor back = read_png(dir / "a.png");
  EXPECT_EQ(back, quantize_8bit(img));
  EXPECT_THROW(read_png(dir / "missing.png"), IoError);
  std::ofstream(dir / "junk.png") << "not a png";
  EXPECT_THROW(read_png(dir / "junk.png"), FormatError);
}

TEST(Loader, EmptyFolder) {
  const fs::path dir = fresh_dir("empty");
  std::ofstream(dir / "annotations.tsv") << "";
  const FolderLoad load = load_image_folder(dir, dir / "annotations.tsv");
  EXPECT_TRUE(load.records.empty());
  EXPECT_TRUE(load.warnings.empty());
}

TEST(Loader, AnnotatedImageWithCorners) {
  const fs::path dir = fresh_dir("one");
  write_png(dir / "sign.png", Tensor({40, 50, 3}, 0.5f));
  std::ofstream(dir / "annotations.tsv") << "# photo\nsign.png\t3\t5,6;40,6;40,35;5,35\n";
  const FolderLoad load = load_image_folder(dir, dir / "annotations.tsv");
  ASSERT_EQ(load.records.size(), 1u);
  EXPECT_EQ(load.records[0].label, 3);
  ASSERT_TRUE(load.records[0].corners.has_value());
  EXPECT_EQ(load.records[0].corners->corners[1].x, 40.0);
  EXPECT_EQ(load.records[0].image.shape(), (Shape{40, 50, 3}));
}

TEST(Loader, MissingFileAndUnannotatedImageAreWarnings) {
  const fs::path dir = fresh_dir("warn");
  write_png(dir / "a.png", Tensor({8, 8, 3}, 0.5f));
  write_png(dir / "stray.png", Tensor({8, 8, 3}, 0.5f));
  std::ofstream(dir / "annotations.tsv") << "a.png\t1\ngone.png\t2\n";
  const FolderLoad load = load_image_folder(dir, dir / "annotations.tsv");
  ASSERT_EQ(load.records.size(), 1u);
  EXPECT_EQ(load.records[0].filename, "a.png");
  ASSERT_EQ(load.warnings.size(), 2u);
}

TEST(Loader, MalformedLineIsAnError) {
  const fs::path dir = fresh_dir("bad");
  write_png(dir / "a.png", Tensor({8, 8, 3}, 0.5f));
  std::ofstream(dir / "annotations.tsv") << "a.png\tnot-a-label\n";
  EXPECT_THROW(load_image_folder(dir, dir / "annotations.tsv"), FormatError);
}

TEST(Loader, SplitRoundTrip) {
  const fs::path dir = fresh_dir("split");
  const SignDataset ds = generate_dataset(20, 2);
  write_split(ds.val, dir);
  const DatasetSplit back = read_split(dir);
  EXPECT_EQ(back.labels, ds.val.labels);
  EXPECT_EQ(back.images, quantize_8bit(ds.val.images.reshaped({ds.val.size() * 32, 32, 3})).reshaped(ds.val.images.shape()));
}
