// Copyright 2026 The vrd25 Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <filesystem>
#include <set>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "vrd25/dataset.hpp"
#include "vrd25/import.hpp"
#include "vrd25/synthetic.hpp"

namespace vrd25 {
namespace {

namespace fs = std::filesystem;

fs::path scratch_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() /
                     ("vrd25_dataset_test_" + name + "_" + std::to_string(::getpid()));
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

ObjectInstance obj(const std::string& id, int cls, Box box, bool group_of = false) {
  ObjectInstance o;
  o.object_id = id;
  o.image_id = "img";
  o.class_id = cls;
  o.box = box;
  o.is_group_of = group_of;
  return o;
}

// Square box of the given area fraction anchored at (x, y).
Box area_box(double area, double x = 0.0, double y = 0.0) {
  const double s = std::sqrt(area);
  return Box(x, y, x + s, y + s);
}

TEST(FilterObjectsTest, AreaWindowIsStrict) {
  FilterConfig cfg;
  const auto kept = filter_objects(
      {obj("small", 0, area_box(0.01)), obj("low", 0, Box(0.0, 0.0, 0.2, 0.1)),
       obj("edge", 0, Box(0.0, 0.0, 0.7, 1.0)), obj("big", 0, Box(0.0, 0.0, 0.8, 1.0))},
      cfg);
  std::set<std::string> ids;
  for (const auto& o : kept) ids.insert(o.object_id);
  EXPECT_EQ(ids, (std::set<std::string>{"low", "edge"}));
}

TEST(FilterObjectsTest, RemovesGroupOfAndClothingWithPerson) {
  FilterConfig cfg;
  cfg.person_class_ids = {1};
  cfg.clothing_class_ids = {2};
  cfg.body_part_class_ids = {3};
  const std::vector<ObjectInstance> with_person = {
      obj("person", 1, area_box(0.2)), obj("trousers", 2, area_box(0.1, 0.5, 0.5)),
      obj("hand", 3, area_box(0.05, 0.6, 0.0)), obj("crowd", 4, area_box(0.1), true)};
  const auto kept = filter_objects(with_person, cfg);
  ASSERT_EQ(kept.size(), 1u);
  EXPECT_EQ(kept[0].object_id, "person");

  // Without a person box, clothing stays.
  const auto alone = filter_objects({with_person[1]}, cfg);
  ASSERT_EQ(alone.size(), 1u);
  // A group-of person does not license the clothing removal.
  auto crowd = with_person[0];
  crowd.is_group_of = true;
  EXPECT_EQ(filter_objects({crowd, with_person[1]}, cfg).size(), 1u);
}

TEST(FilterObjectsTest, Idempotent) {
  FilterConfig cfg;
  cfg.person_class_ids = {0};
  cfg.clothing_class_ids = {1};
  Rng rng(5);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<ObjectInstance> objects;
    for (int k = 0; k < 8; ++k) {
      const double w = rng.uniform(0.05, 1.0), h = rng.uniform(0.05, 1.0);
      objects.push_back(obj("o" + std::to_string(k), static_cast<int>(rng.below(3)),
                            Box(0.0, 0.0, w, h), rng.bernoulli(0.1)));
    }
    const auto once = filter_objects(objects, cfg);
    EXPECT_EQ(filter_objects(once, cfg), once);
  }
}

TEST(FilterPairsTest, IouAndPartOf) {
  FilterConfig cfg;
  cfg.part_of_table = {{5, 6}};
  const Box base(0.0, 0.0, 0.5, 0.5);
  const Box inner(0.0, 0.0, 0.5, 0.4);  // iou 0.8
  const Box far(0.6, 0.6, 0.9, 0.9);
  ASSERT_NEAR(iou(base, inner), 0.8, 1e-12);
  EXPECT_TRUE(filter_pairs({obj("a", 0, base), obj("b", 0, inner)}, cfg).empty());
  // The wheel/car entry removes the pair in either order.
  EXPECT_TRUE(filter_pairs({obj("wheel", 5, base), obj("car", 6, far)}, cfg).empty());
  EXPECT_TRUE(filter_pairs({obj("car", 6, base), obj("wheel", 5, far)}, cfg).empty());
  EXPECT_EQ(filter_pairs({obj("a", 0, base), obj("b", 1, far)}, cfg).size(), 2u);
}

TEST(FilterPairsTest, ExactBoundaryIouKept) {
  const Box a(0.0, 0.0, 1.0, 1.0), b(0.0, 0.0, 0.7, 1.0);
  ASSERT_EQ(iou(a, b), 0.7);
  EXPECT_EQ(filter_pairs({obj("a", 0, a), obj("b", 0, b)}, FilterConfig{}).size(), 2u);
}

DatasetBundle grid_bundle(int per_split, const std::vector<int>& objects_per_image) {
  DatasetBundle b;
  int n = 0;
  for (Split s : {Split::kTrain, Split::kTest}) {
    for (int i = 0; i < per_split; ++i) {
      ImageRecord im;
      im.image_id = std::string(name(s)) + std::to_string(i);
      im.split = s;
      im.group = assign_group(im.image_id);
      im.width_px = im.height_px = 100;
      b.images.push_back(im);
      const int count = objects_per_image[i % objects_per_image.size()];
      for (int k = 0; k < count; ++k) {
        ObjectInstance o = obj("o" + std::to_string(n++), k,
                               Box(0.1 * k, 0.0, 0.1 * k + 0.1, 0.5));
        o.image_id = im.image_id;
        b.objects.push_back(o);
      }
    }
  }
  return b;
}

TEST(SamplingTest, OneWithinPairPerTrainingImage) {
  const DatasetBundle b = grid_bundle(12, {1, 5, 0, 2});
  const auto sampled = sample_training_pairs(b, FilterConfig{}, 9);
  // Only images with >= 2 objects contribute.
  EXPECT_EQ(sampled.within.size(), 6u);
  std::set<std::string> images;
  for (const auto& p : sampled.within) {
    EXPECT_EQ(p.image_id_a, p.image_id_b);
    EXPECT_NE(p.object_id_a, p.object_id_b);
    images.insert(p.image_id_a);
  }
  EXPECT_EQ(images.size(), 6u);
}

TEST(SamplingTest, AcrossIsAPerfectMatching) {
  DatasetBundle b;
  for (int i = 0; i < 20; ++i) {
    ImageRecord im{"im" + std::to_string(i), 10, 10, Split::kTrain,
                   i < 10 ? Group::kA : Group::kB};
    b.images.push_back(im);
    for (int k = 0; k < 3; ++k) {
      ObjectInstance o = obj(im.image_id + "_" + std::to_string(k), 0,
                             Box(0.3 * k, 0.0, 0.3 * k + 0.2, 0.5));
      o.image_id = im.image_id;
      b.objects.push_back(o);
    }
  }
  const auto sampled = sample_training_pairs(b, FilterConfig{}, 4);
  ASSERT_EQ(sampled.across.size(), 10u);
  std::set<std::string> used;
  for (const auto& p : sampled.across) {
    EXPECT_EQ(b.find_image(p.image_id_a)->group, Group::kA);
    EXPECT_EQ(b.find_image(p.image_id_b)->group, Group::kB);
    EXPECT_TRUE(used.insert(p.image_id_a).second);
    EXPECT_TRUE(used.insert(p.image_id_b).second);
  }
  const auto again = sample_training_pairs(b, FilterConfig{}, 4);
  EXPECT_EQ(encode_relations(again.across), encode_relations(sampled.across));
  EXPECT_EQ(encode_relations(again.within), encode_relations(sampled.within));
}

TEST(SamplingTest, ExhaustiveCounts) {
  DatasetBundle b;
  auto add_image = [&](const std::string& id, Group g, int count) {
    b.images.push_back({id, 10, 10, Split::kTest, g});
    for (int k = 0; k < count; ++k) {
      ObjectInstance o = obj(id + "_" + std::to_string(k), 0,
                             Box(0.2 * k, 0.0, 0.2 * k + 0.15, 0.5));
      o.image_id = id;
      b.objects.push_back(o);
    }
  };
  add_image("a", Group::kA, 3);
  add_image("b", Group::kB, 2);
  add_image("c", Group::kA, 4);
  add_image("d", Group::kB, 0);
  const auto pairs = exhaustive_eval_pairs(b, FilterConfig{}, Split::kTest);
  EXPECT_EQ(pairs.within.size(), 3u * 2 + 2 * 1 + 4 * 3);
  // Designated pairs zip hash-sorted A images {a, c} with B images {b, d}.
  std::size_t across = 0;
  for (const auto& [ia, ib] : designate_image_pairs(b.images, Split::kTest)) {
    const auto by = b.objects_by_image();
    across += by.at(ia).size() * by.at(ib).size();
  }
  EXPECT_EQ(pairs.across.size(), across);
  std::set<std::pair<std::string, std::string>> designated;
  for (auto p : designate_image_pairs(b.images, Split::kTest)) designated.insert(p);
  EXPECT_EQ(designated.size(), 2u);
}

TEST(SamplingTest, FilteredObjectsNeverPaired) {
  GeneratorConfig g;
  g.train_images = 40;
  g.val_images = 0;
  g.test_images = 10;
  auto sb = generate_bundle(g, 3);
  FilterConfig strict;
  strict.min_area_frac = 0.08;
  std::set<std::string> survivors;
  for (const auto& [image, objects] : sb.bundle.objects_by_image()) {
    for (const auto& o : filter_objects(objects, strict)) survivors.insert(o.object_id);
  }
  const auto train = sample_training_pairs(sb.bundle, strict, 1);
  const auto test = exhaustive_eval_pairs(sb.bundle, strict, Split::kTest);
  for (const auto* list : {&train.within, &train.across, &test.within, &test.across}) {
    for (const auto& p : *list) {
      EXPECT_TRUE(survivors.count(p.object_id_a));
      EXPECT_TRUE(survivors.count(p.object_id_b));
    }
  }
}

TEST(BundleIoTest, SyntheticRoundTrip) {
  GeneratorConfig g;
  g.train_images = 20;
  g.val_images = 4;
  g.test_images = 6;
  g.rater_sigma = 0.3;
  const auto sb = generate_bundle(g, 21);
  const fs::path dir = scratch_dir("roundtrip");
  write_bundle(sb.bundle, dir);
  const DatasetBundle back = read_bundle(dir);
  EXPECT_EQ(back, sb.bundle);
  fs::remove_all(dir);
}

TEST(BundleIoTest, DanglingImageReference) {
  DatasetBundle b;
  b.images.push_back({"img", 10, 10, Split::kTrain, Group::kA});
  ObjectInstance o = obj("o1", 0, area_box(0.1));
  o.image_id = "ghost";
  b.objects.push_back(o);
  try {
    check_integrity(b);
    FAIL();
  } catch (const IntegrityError& e) {
    EXPECT_NE(std::string(e.what()).find("ghost"), std::string::npos);
  }
}

TEST(BundleIoTest, BadPredicateCodeNamesColumn) {
  const fs::path dir = scratch_dir("badcode");
  write_file_atomic(dir / "images.csv", std::string(kImagesHeader) + "\nimg,10,10,test,A\n");
  write_file_atomic(dir / "objects.csv",
                    std::string(kObjectsHeader) +
                        "\na,img,0,0,0,0.5,0.5,0,\nb,img,0,0.5,0.5,1,1,0,\n");
  write_file_atomic(dir / "relations.csv",
                    "pair_id,setting,image_id_a,object_id_a,image_id_b,object_id_b,depth,"
                    "occlusion\na|b,within,img,a,img,b,7,0\n");
  try {
    read_bundle(dir);
    FAIL();
  } catch (const ValidationError& e) {
    const std::string what = e.what();
    EXPECT_NE(what.find("relations.csv:2"), std::string::npos) << what;
    EXPECT_NE(what.find("'depth'"), std::string::npos) << what;
  }
  fs::remove_all(dir);
}

TEST(ClassMetadataTest, RoundTrip) {
  ClassMetadata meta;
  meta.classes = {{0, "person", false, false, true},
                  {1, "trousers", false, true, false},
                  {2, "hand", true, false, false},
                  {3, "car", false, false, false},
                  {4, "wheel", false, false, false}};
  meta.part_of = {{4, 3}};
  const fs::path dir = scratch_dir("meta");
  write_class_metadata(meta, dir / "class_metadata.csv", dir / "part_of.csv");
  const auto back = read_class_metadata(dir / "class_metadata.csv", dir / "part_of.csv");
  EXPECT_EQ(back.vocabulary_size(), 5);
  EXPECT_EQ(back.part_of, meta.part_of);
  const FilterConfig f = FilterConfig::from_metadata(back);
  EXPECT_EQ(f.person_class_ids, std::set<int>{0});
  EXPECT_EQ(f.clothing_class_ids, std::set<int>{1});
  EXPECT_EQ(f.body_part_class_ids, std::set<int>{2});
  fs::remove_all(dir);
}

// ---------------------------------------------------------------------------
// Release importer.

TEST(ImportTest, EmptyDirectoryFails) {
  const fs::path dir = scratch_dir("empty_release");
  ClassMetadata meta;
  meta.classes = {{0, "person", false, false, true}};
  try {
    import_public_release(dir, meta, dir / "rejects.csv");
    FAIL();
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("no annotation files found"), std::string::npos);
  }
  fs::remove_all(dir);
}

TEST(ImportTest, HeaderOnlyFileGivesEmptyBundle) {
  const fs::path dir = scratch_dir("header_only");
  write_file_atomic(dir / "within_image_test.csv",
                    "image_id,entity_1,xmin_1,xmax_1,ymin_1,ymax_1,entity_2,xmin_2,xmax_2,"
                    "ymin_2,ymax_2,depth,occlusion\n");
  ClassMetadata meta;
  meta.classes = {{0, "person", false, false, true}};
  const auto result = import_public_release(dir, meta, dir / "rejects.csv");
  EXPECT_TRUE(result.bundle.images.empty());
  EXPECT_TRUE(result.bundle.pairs.empty());
  EXPECT_EQ(result.rejects, 0u);
  fs::remove_all(dir);
}

TEST(ImportTest, RejectsUnknownSchema) {
  const fs::path dir = scratch_dir("bad_schema");
  write_file_atomic(dir / "within_image_test.csv", "foo,bar\n1,2\n");
  ClassMetadata meta;
  meta.classes = {{0, "x", false, false, false}};
  EXPECT_THROW(import_public_release(dir, meta, dir / "rejects.csv"), ValidationError);
  fs::remove_all(dir);
}

TEST(ImportTest, ExportedShapeRoundTrips) {
  GeneratorConfig g;
  g.train_images = 16;
  g.val_images = 4;
  g.test_images = 6;
  g.rater_sigma = 0.2;
  const auto sb = generate_bundle(g, 8);
  ClassMetadata meta;
  for (int c = 0; c < g.scene.num_classes; ++c) {
    meta.classes.push_back({c, "class" + std::to_string(c), false, false, false});
  }
  const fs::path dir = scratch_dir("release");
  export_release_shape(sb.bundle, meta, dir);
  const auto result = import_public_release(dir, meta, dir / "rejects.csv");
  EXPECT_EQ(result.rejects, 0u);
  EXPECT_EQ(result.bundle.images, sb.bundle.images);
  // Pairs come back grouped by file; compare them in pair_id order.
  auto sorted_pairs = [](std::vector<OrderedPairLabel> v) {
    std::sort(v.begin(), v.end(),
              [](const auto& a, const auto& b) { return a.pair_id < b.pair_id; });
    return v;
  };
  EXPECT_EQ(sorted_pairs(result.bundle.pairs), sorted_pairs(sb.bundle.pairs));
  ASSERT_EQ(result.bundle.objects.size(), sb.bundle.objects.size());
  for (std::size_t i = 0; i < sb.bundle.objects.size(); ++i) {
    EXPECT_EQ(result.bundle.objects[i], sb.bundle.objects[i]);
  }
  EXPECT_EQ(result.bundle.provenance, Provenance::kImported);
  fs::remove_all(dir);
}

TEST(ImportTest, UnmappableRowsGoToRejects) {
  const fs::path dir = scratch_dir("rejects");
  write_file_atomic(dir / "within_image_test.csv",
                    "image_id,entity_1,xmin_1,xmax_1,ymin_1,ymax_1,entity_2,xmin_2,xmax_2,"
                    "ymin_2,ymax_2,depth,occlusion\n"
                    "img1,person,0.1,0.4,0.1,0.6,tree,0.5,0.9,0.2,0.8,a is closer,no occlusion\n"
                    "img1,person,0.1,0.4,0.1,0.6,unicorn,0.5,0.9,0.2,0.8,0,0\n"
                    "img1,person,0.1,0.4,0.1,0.6,tree,0.5,0.9,0.2,0.8,9,0\n");
  ClassMetadata meta;
  meta.classes = {{0, "person", false, false, true}, {1, "tree", false, false, false}};
  const auto result = import_public_release(dir, meta, dir / "rejects.csv");
  EXPECT_EQ(result.rejects, 2u);
  ASSERT_EQ(result.bundle.pairs.size(), 1u);
  EXPECT_EQ(result.bundle.pairs[0].label.depth, DepthPredicate::kACloser);
  EXPECT_EQ(result.bundle.pairs[0].label.occlusion, OcclusionPredicate::kNoOcclusion);
  const std::string rejects = read_text_file(dir / "rejects.csv");
  EXPECT_NE(rejects.find("unicorn"), std::string::npos);
  fs::remove_all(dir);
}

}  // namespace
}  // namespace vrd25
