#include <cmath>
#include <random>
#include <set>

#include <gtest/gtest.h>

#include "surgseg/annotations.hpp"
#include "surgseg/errors.hpp"
#include "surgseg/fileutil.hpp"
#include "surgseg/image_io.hpp"
#include "surgseg/manifest.hpp"
#include "surgseg/preprocess.hpp"
#include "surgseg/raster.hpp"
#include "surgseg/taxonomy.hpp"
#include "surgseg/tensor.hpp"
#include "test_util.hpp"

namespace surgseg {
namespace {

// Independent even-odd test: count edge crossings of a ray to +x.
bool point_in_polygon(const std::vector<Point>& poly, double px, double py) {
  bool inside = false;
  const std::size_t n = poly.size();
  for (std::size_t i = 0; i < n; ++i) {
    const Point& p = poly[i];
    const Point& q = poly[(i + 1) % n];
    if ((p.y > py) == (q.y > py)) continue;
    const double t = (py - p.y) / (q.y - p.y);
    if (px < p.x + t * (q.x - p.x)) inside = !inside;
  }
  return inside;
}

std::string via_record(const std::string& filename, const std::string& shape, const std::string& label,
                       int width = 100, int height = 80) {
  return "\"" + filename + "123\": {\"filename\": \"" + filename +
         "\", \"size\": 123, \"regions\": [{\"shape_attributes\": " + shape +
         ", \"region_attributes\": {\"class\": \"" + label + "\"}}], \"file_attributes\": {\"width\": " +
         std::to_string(width) + ", \"height\": " + std::to_string(height) + "}}";
}

TEST(Taxonomy, BackgroundIsLastChannel) {
  const auto t = ClassTaxonomy::neurosurgical();
  EXPECT_EQ(t.num_instruments(), 27);
  EXPECT_EQ(t.num_channels(), 28);
  EXPECT_EQ(t.background_id(), 27);
  EXPECT_FALSE(t.is_instrument(t.background_id()));
  EXPECT_EQ(t.name(t.background_id()), "not a tool");
  std::set<std::string> unique(t.instrument_names().begin(), t.instrument_names().end());
  EXPECT_EQ(unique.size(), 27u);
}

TEST(Taxonomy, LookupIgnoresCaseAndWhitespace) {
  ClassTaxonomy t({"Scalpel", "Adson Forceps"});
  EXPECT_EQ(t.find("  scalpel "), 0);
  EXPECT_EQ(t.find("ADSON FORCEPS"), 1);
  EXPECT_FALSE(t.find("Laser").has_value());
  t.add_alias("knife", "Scalpel");
  EXPECT_EQ(t.find("Knife"), 0);
}

TEST(Taxonomy, RejectsDuplicatesAndEmptyNames) {
  EXPECT_THROW(ClassTaxonomy({"A", "a "}), ConfigError);
  EXPECT_THROW(ClassTaxonomy({"A", ""}), ConfigError);
  EXPECT_THROW(ClassTaxonomy({"A", "not a tool"}), ConfigError);
}

TEST(Taxonomy, FromFileSkipsCommentsAndBlankLines) {
  test::TempDir dir;
  write_file_atomic(dir.file("t.txt"), std::string("# classes\nBar\n\nDisk\n"));
  const auto t = ClassTaxonomy::from_file(dir.file("t.txt"));
  ASSERT_EQ(t.num_instruments(), 2);
  EXPECT_EQ(t.name(1), "Disk");
}

TEST(ViaParser, RectRecordMapsToOneRegion) {
  const auto t = ClassTaxonomy::neurosurgical();
  const std::string doc =
      "{" + via_record("a.jpg", R"({"name":"rect","x":10,"y":5,"width":20,"height":30})", "Scalpel") + "}";
  const auto images = parse_via_annotations(doc, t);
  ASSERT_EQ(images.size(), 1u);
  EXPECT_EQ(images[0].image_id, "a.jpg");
  EXPECT_EQ(images[0].truth_class, *t.find("Scalpel"));
  ASSERT_EQ(images[0].regions.size(), 1u);
  EXPECT_EQ(std::get<RectShape>(images[0].regions[0].shape), (RectShape{10, 5, 20, 30}));
}

TEST(ViaParser, ProjectFileAndPolygon) {
  ClassTaxonomy t({"Bar"});
  const std::string doc = R"({"_via_settings": {}, "_via_img_metadata": {)" +
                          via_record("p.png", R"({"name":"polygon","all_points_x":[1,50,1],"all_points_y":[1,1,200]})",
                                     "bar") +
                          "}}";
  const auto images = parse_via_annotations(doc, t);
  ASSERT_EQ(images.size(), 1u);
  const auto& poly = std::get<PolygonShape>(images[0].regions[0].shape);
  ASSERT_EQ(poly.vertices.size(), 3u);
  EXPECT_EQ(poly.vertices[2], (Point{1, 80}));  // clamped to the image height
}

TEST(ViaParser, ClampsRectangles) {
  ClassTaxonomy t({"Bar"});
  const std::string doc =
      "{" + via_record("a.png", R"({"name":"rect","x":-5,"y":70,"width":20,"height":30})", "Bar") + "}";
  const auto images = parse_via_annotations(doc, t);
  EXPECT_EQ(std::get<RectShape>(images[0].regions[0].shape), (RectShape{0, 70, 15, 10}));
}

TEST(ViaParser, UnknownClassNamesTheRecord) {
  const auto t = ClassTaxonomy::neurosurgical();
  const std::string doc =
      "{" + via_record("laser.jpg", R"({"name":"rect","x":1,"y":1,"width":2,"height":2})", "Laser") + "}";
  try {
    parse_via_annotations(doc, t);
    FAIL() << "expected DataError";
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("laser.jpg"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("Laser"), std::string::npos);
  }
}

TEST(ViaParser, RegionOutsideImageIsAnError) {
  ClassTaxonomy t({"Bar"});
  const std::string doc =
      "{" + via_record("far.png", R"({"name":"rect","x":500,"y":1,"width":2,"height":2})", "Bar") + "}";
  EXPECT_THROW(parse_via_annotations(doc, t), DataError);
}

TEST(ViaParser, MalformedJsonReportsByteOffset) {
  ClassTaxonomy t({"Bar"});
  const std::string doc = R"({"a.png": {"filename": "a.png",, }})";
  try {
    parse_via_annotations(doc, t);
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_EQ(doc[31], ',');
    EXPECT_EQ(e.byte_offset(), 31u);
  }
  EXPECT_THROW(parse_via_annotations("", t), ParseError);
}

TEST(ViaParser, MixedClassesInOneRecordAreRejected) {
  ClassTaxonomy t({"Bar", "Disk"});
  const std::string doc = R"({"m.png": {"filename": "m.png", "file_attributes": {"width": 10, "height": 10},
    "regions": [
      {"shape_attributes": {"name":"rect","x":0,"y":0,"width":2,"height":2}, "region_attributes": {"class":"Bar"}},
      {"shape_attributes": {"name":"rect","x":4,"y":4,"width":2,"height":2}, "region_attributes": {"class":"Disk"}}
    ]}})";
  EXPECT_THROW(parse_via_annotations(doc, t), DataError);
}

TEST(ViaParser, DimensionsProbedFromImageRoot) {
  test::TempDir dir;
  Rgb8Image img{12, 20, std::vector<std::uint8_t>(12 * 20 * 3, 7)};
  write_png(dir.file("x.png"), img);
  ClassTaxonomy t({"Bar"});
  const std::string doc = R"({"x.png": {"filename": "x.png", "regions": [
    {"shape_attributes": {"name":"rect","x":1,"y":1,"width":3,"height":3}, "region_attributes": {"class":"Bar"}}]}})";
  EXPECT_THROW(parse_via_annotations(doc, t), DataError);
  ViaParseOptions opts;
  opts.image_root = dir.path().string();
  const auto images = parse_via_annotations(doc, t, opts);
  EXPECT_EQ(images[0].width, 20);
  EXPECT_EQ(images[0].height, 12);
}

TEST(Raster, RectangleIsHalfOpen) {
  AnnotatedImage image{"r", "", 4, 4, {Region{RectShape{1, 1, 2, 2}, 5}}, 5};
  const LabelMask mask = rasterize_mask(image, {4, 4}, 9);
  EXPECT_EQ(mask.count(5), 4u);
  EXPECT_EQ(mask.count(9), 12u);
  EXPECT_EQ(mask.at(1, 1), 5);
  EXPECT_EQ(mask.at(2, 2), 5);
  EXPECT_EQ(mask.at(3, 3), 9);
}

TEST(Raster, NoRegionsGivesAllBackground) {
  AnnotatedImage image{"e", "", 6, 5, {}, 0};
  const LabelMask mask = rasterize_mask(image, {5, 6}, 3);
  EXPECT_EQ(mask.count(3), 30u);
}

TEST(Raster, TriangleMatchesBruteForcePointInPolygon) {
  const std::vector<Point> tri{{0, 0}, {8, 0}, {0, 8}};
  AnnotatedImage image{"t", "", 8, 8, {Region{PolygonShape{tri}, 2}}, 2};
  const LabelMask mask = rasterize_mask(image, {8, 8}, 7);
  std::size_t expected = 0;
  for (int y = 0; y < 8; ++y) {
    for (int x = 0; x < 8; ++x) {
      const bool in = point_in_polygon(tri, x + 0.5, y + 0.5);
      expected += in;
      EXPECT_EQ(mask.at(y, x) == 2, in) << y << "," << x;
    }
  }
  EXPECT_EQ(mask.count(2), expected);
  EXPECT_EQ(expected, 28u);
}

TEST(Raster, RandomPolygonsMatchBruteForce) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> coord(-2.0, 18.0);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<Point> poly;
    const int n = 3 + trial % 6;
    for (int i = 0; i < n; ++i) poly.push_back({coord(rng), coord(rng)});
    LabelMask mask(16, 16, 9);
    fill_region(mask, Region{PolygonShape{poly}, 1}, 9);
    for (int y = 0; y < 16; ++y) {
      for (int x = 0; x < 16; ++x) {
        ASSERT_EQ(mask.at(y, x) == 1, point_in_polygon(poly, x + 0.5, y + 0.5)) << trial;
      }
    }
  }
}

TEST(Raster, OverlapLaterRegionWins) {
  LabelMask mask(4, 4, 9);
  EXPECT_EQ(fill_region(mask, Region{RectShape{0, 0, 3, 3}, 1}, 9), 0u);
  EXPECT_EQ(fill_region(mask, Region{RectShape{2, 2, 2, 2}, 2}, 9), 1u);
  EXPECT_EQ(mask.at(2, 2), 2);
}

TEST(Raster, RegionsScaleWithCropAndResize) {
  // 100x200 source cropped to its central 100x100 and halved.
  AnnotatedImage image{"s", "", 200, 100, {Region{RectShape{50, 0, 100, 100}, 0}}, 0};
  const LabelMask mask = rasterize_mask(image, {50, 50}, 1);
  EXPECT_EQ(mask.count(0), 2500u);
  EXPECT_EQ(center_crop_window({100, 200}, {64, 64}), (CropWindow{50, 0, 100, 100}));
}

TEST(Raster, OnlyTruthClassAndBackgroundAppear) {
  AnnotatedImage image{"m", "", 40, 30, {Region{RectShape{3, 4, 10, 7}, 2}, Region{PolygonShape{{{20, 2}, {38, 5}, {25, 28}}}, 2}},
                       2};
  const LabelMask mask = rasterize_mask(image, {32, 32}, 4);
  for (ClassId v : mask.labels) EXPECT_TRUE(v == 2 || v == 4);
}

TEST(OneHot, RoundTripsThroughArgmax) {
  std::mt19937_64 rng(5);
  LabelMask mask(7, 9, 0);
  for (auto& v : mask.labels) v = static_cast<ClassId>(rng() % 6);
  const OneHotMask oh = one_hot(mask, 6);
  for (int y = 0; y < 7; ++y) {
    for (int x = 0; x < 9; ++x) {
      float sum = 0;
      for (int c = 0; c < 6; ++c) sum += oh.at(y, x, c);
      EXPECT_EQ(sum, 1.0f);
    }
  }
  EXPECT_EQ(channel_argmax(oh), mask);
}

TEST(Preprocess, MidGrayStaysMidGray) {
  Image gray = to_float(Rgb8Image{37, 53, std::vector<std::uint8_t>(37 * 53 * 3, 128)});
  const Image out = preprocess(gray, {16, 24});
  ASSERT_EQ(out.height, 16);
  ASSERT_EQ(out.width, 24);
  for (float v : out.pixels) EXPECT_FLOAT_EQ(v, 128.0f / 255.0f);
}

TEST(Preprocess, CheckerboardHalvesToHalfGray) {
  Image board(16, 16);
  for (int y = 0; y < 16; ++y) {
    for (int x = 0; x < 16; ++x) {
      for (int c = 0; c < 3; ++c) board.at(y, x, c) = static_cast<float>((x + y) % 2);
    }
  }
  const Image out = resize_bilinear(board, 8, 8);
  for (int y = 1; y < 7; ++y) {
    for (int x = 1; x < 7; ++x) EXPECT_NEAR(out.at(y, x, 0), 0.5f, 1e-6f);
  }
}

TEST(Preprocess, SameSizeResizeIsIdentity) {
  std::mt19937_64 rng(3);
  Image img(9, 13);
  for (auto& v : img.pixels) v = std::uniform_real_distribution<float>(0, 1)(rng);
  EXPECT_EQ(resize_bilinear(img, 9, 13), img);
}

TEST(Preprocess, LoadCropsToTargetAspect) {
  test::TempDir dir;
  // Left and right quarters red, middle half green: the center crop keeps
  // only green.
  Rgb8Image src{100, 200, std::vector<std::uint8_t>(100 * 200 * 3, 0)};
  for (int y = 0; y < 100; ++y) {
    for (int x = 0; x < 200; ++x) {
      const bool middle = x >= 50 && x < 150;
      src.pixels[(y * 200 + x) * 3 + (middle ? 1 : 0)] = 255;
    }
  }
  write_png(dir.file("wide.png"), src);
  const Image out = load_and_preprocess(dir.file("wide.png"), {64, 64});
  ASSERT_EQ(out.height, 64);
  for (int y = 0; y < 64; ++y) {
    for (int x = 0; x < 64; ++x) {
      EXPECT_EQ(out.at(y, x, 0), 0.0f);
      EXPECT_EQ(out.at(y, x, 1), 1.0f);
    }
  }
  EXPECT_THROW(load_and_preprocess(dir.file("missing.png"), {8, 8}), DataError);
}

TEST(Augment, UnitRangeIsIdentity) {
  std::mt19937_64 rng(1);
  Image img(16, 16);
  for (auto& v : img.pixels) v = std::uniform_real_distribution<float>(0, 1)(rng);
  LabelMask mask(16, 16, 3);
  mask.at(4, 4) = 1;
  const auto [aug_img, aug_mask] = augment(img, mask, rng, {1.0, 1.0});
  EXPECT_EQ(aug_img, img);
  EXPECT_EQ(aug_mask, mask);
}

TEST(Augment, SeededAndLabelPreserving) {
  Image img(32, 32, 0.25f);
  AnnotatedImage ann{"a", "", 32, 32, {Region{RectShape{8, 6, 12, 14}, 1}}, 1};
  const LabelMask mask = rasterize_mask(ann, {32, 32}, 5);
  std::mt19937_64 a(42), b(42);
  for (int i = 0; i < 100; ++i) {
    const auto [ia, ma] = augment(img, mask, a, {0.3, 0.9});
    const auto [ib, mb] = augment(img, mask, b, {0.3, 0.9});
    ASSERT_EQ(ia, ib);
    ASSERT_EQ(ma, mb);
    ASSERT_EQ(ma.height, 32);
    for (ClassId v : ma.labels) ASSERT_TRUE(v == 1 || v == 5);
  }
}

TEST(Augment, DegenerateCropIsRejected) {
  std::mt19937_64 rng(0);
  Image img(4, 4);
  LabelMask mask(4, 4, 0);
  EXPECT_THROW(augment(img, mask, rng, {0.1, 0.2}), ConfigError);
  EXPECT_THROW(augment(img, mask, rng, {0.0, 0.5}), ConfigError);
  EXPECT_THROW(augment(img, mask, rng, {0.8, 0.5}), ConfigError);
}

TEST(Manifest, RoundTripsAndVerifiesDigest) {
  Dataset ds{ClassTaxonomy({"Bar", "Disk"}), {}};
  ds.images.push_back({"a.png", "/d/a.png", 64, 48, {Region{RectShape{1.5, 2, 10, 20.25}, 1}}, 1});
  ds.images.push_back({"b.png", "/d/b.png", 64, 48, {Region{PolygonShape{{{1, 1}, {5, 1}, {3, 7.5}}}, 0}}, 0});
  const std::string text = format_manifest(ds);
  const Dataset back = parse_manifest(text);
  EXPECT_EQ(back.images, ds.images);
  EXPECT_EQ(back.taxonomy.instrument_names(), ds.taxonomy.instrument_names());

  std::string tampered = text;
  tampered.replace(tampered.find("rect:1.5"), 8, "rect:2.5");
  EXPECT_THROW(parse_manifest(tampered), DataError);
}

TEST(Manifest, DigestIsFnv1a) {
  AnnotatedImage img{"x", "", 4, 4, {Region{RectShape{0, 0, 1, 1}, 0}}, 0};
  // FNV-1a 64 over "rect:0,0,1,1".
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (char ch : std::string("rect:0,0,1,1")) {
    h ^= static_cast<unsigned char>(ch);
    h *= 0x100000001b3ull;
  }
  char hex[17];
  std::snprintf(hex, sizeof hex, "%016llx", static_cast<unsigned long long>(h));
  EXPECT_EQ(region_digest(img), hex);
}

}  // namespace
}  // namespace surgseg
