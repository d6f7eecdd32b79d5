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

#include <cmath>
#include <map>
#include <set>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "vrd25/synthetic.hpp"

namespace vrd25 {
namespace {

using D = DepthPredicate;
using O = OcclusionPredicate;

Camera square_camera(double focal) { return {focal, 50.0, 50.0, 100, 100}; }

// Billboard centered on the optical axis offset by (dx, dy) pixels at depth z.
BillboardObject billboard(const Camera& cam, double z, double size, double du = 0,
                          double dv = 0) {
  const double half = 0.5 * size;
  const double ox = du * z / cam.focal_px, oy = dv * z / cam.focal_px;
  return {0, {{{ox - half, oy - half, ox + half, oy + half}, z}}};
}

TEST(ProjectionTest, AreaScalesWithInverseSquareDepth) {
  // A unit square at z=2 covers 20% of a 100x100 image when its side is
  // sqrt(0.2) * 100 px, i.e. focal = side * z.
  const double focal = std::sqrt(0.2) * 100.0 * 2.0;
  const Camera cam = square_camera(focal);
  const Box near = project_object(cam, billboard(cam, 2.0, 1.0));
  const Box far = project_object(cam, billboard(cam, 4.0, 1.0));
  EXPECT_NEAR(near.area(), 0.2, 1e-12);
  EXPECT_NEAR(near.area() / far.area(), (4.0 / 2.0) * (4.0 / 2.0), 1e-12);
}

TEST(ProjectionTest, AreaDecreasesWithDepth) {
  const Camera cam = square_camera(60.0);
  double previous = 2.0;
  for (double z = 1.0; z < 20.0; z += 0.25) {
    const double a = project_object(cam, billboard(cam, z, 1.0)).area();
    EXPECT_LE(a, previous);
    previous = a;
  }
}

TEST(GenerateSceneTest, RejectsSingleObjectConfig) {
  SceneConfig cfg;
  cfg.min_objects = cfg.max_objects = 1;
  EXPECT_THROW(generate_scene(cfg, 1), ValidationError);
  cfg.min_objects = 2;
  cfg.max_objects = 21;
  EXPECT_THROW(generate_scene(cfg, 1), ValidationError);
}

TEST(GenerateSceneTest, FailsWhenAreaWindowUnreachable) {
  SceneConfig cfg;
  cfg.size_min = cfg.size_max = 0.05;  // always far below 2% of the image
  cfg.max_attempts = 5;
  EXPECT_THROW(generate_scene(cfg, 1), ValidationError);
}

TEST(GenerateSceneTest, SameSeedSameObjects) {
  SceneConfig cfg;
  const auto a = scene_objects(generate_scene(cfg, 77, "img"));
  const auto b = scene_objects(generate_scene(cfg, 77, "img"));
  EXPECT_EQ(a, b);
  const auto c = scene_objects(generate_scene(cfg, 78, "img"));
  EXPECT_NE(a, c);
}

TEST(GenerateSceneTest, ObjectsRespectConstraints) {
  SceneConfig cfg;
  cfg.compound_prob = 0.5;
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    const SyntheticScene scene = generate_scene(cfg, seed, "s");
    ASSERT_GE(scene.objects.size(), 2u);
    const auto objects = scene_objects(scene);
    for (std::size_t i = 0; i < objects.size(); ++i) {
      EXPECT_GE(objects[i].box.area(), cfg.min_area_frac);
      EXPECT_LE(objects[i].box.area(), cfg.max_area_frac);
      for (const auto& part : scene.objects[i].parts) EXPECT_GT(part.depth_z, kNearPlane);
      for (std::size_t j = i + 1; j < objects.size(); ++j) {
        EXPECT_LE(iou(objects[i].box, objects[j].box), cfg.pair_iou_max);
      }
    }
  }
}

TEST(GroundTruthTest, DisjointBillboards) {
  const Camera cam = square_camera(50.0);
  SyntheticScene scene{"s", cam, {billboard(cam, 1.0, 0.4, -30), billboard(cam, 3.0, 1.0, 30)}, 0};
  const auto pairs = ground_truth_pairs(scene, 0.1);
  ASSERT_EQ(pairs.size(), 2u);
  EXPECT_EQ(pairs[0].label.depth, D::kACloser);
  EXPECT_EQ(pairs[0].label.occlusion, O::kNoOcclusion);
  EXPECT_EQ(pairs[1].label.depth, D::kBCloser);
}

TEST(GroundTruthTest, OverlappingBillboards) {
  const Camera cam = square_camera(50.0);
  SyntheticScene scene{"s", cam, {billboard(cam, 1.0, 0.4, -5), billboard(cam, 3.0, 1.5, 5)}, 0};
  const auto pairs = ground_truth_pairs(scene, 0.1);
  EXPECT_EQ(pairs[0].label.occlusion, O::kAOccludesB);
  EXPECT_EQ(pairs[1].label.occlusion, O::kBOccludesA);
}

TEST(GroundTruthTest, CompoundInterleavingGivesMutual) {
  const Camera cam = square_camera(50.0);
  // A: top part [20,40]x[20,50] px at z=1, bottom part [20,40]x[50,80] at z=5.
  // B: [30,70]x[30,70] px at z=3 overlaps both parts, so the top part of A
  // occludes B and B occludes the bottom part of A.
  BillboardObject a{0,
                    {detail::part_from_pixels(cam, {20, 20, 40, 50}, 1.0),
                     detail::part_from_pixels(cam, {20, 50, 40, 80}, 5.0)}};
  BillboardObject b{1, {detail::part_from_pixels(cam, {30, 30, 70, 70}, 3.0)}};
  EXPECT_EQ(compare_occlusion(cam, a, b), O::kMutual);
  EXPECT_EQ(compare_occlusion(cam, b, a), O::kMutual);
  // Area-weighted depth: world areas scale with z^2, so the far part dominates.
  const double wa = 20.0 * 30.0 * 1.0, wb = 20.0 * 30.0 * 25.0;
  EXPECT_NEAR(a.representative_depth(), (wa * 1.0 + wb * 5.0) / (wa + wb), 1e-12);
  SyntheticScene scene{"s", cam, {a, b}, 0};
  const auto pairs = ground_truth_pairs(scene, 0.05);
  EXPECT_EQ(pairs[0].label.occlusion, O::kMutual);
}

TEST(GroundTruthTest, PartnerDepthKeepsRepresentativeDepth) {
  for (double target : {2.0, 7.5, 14.0}) {
    for (double z1 : {target * 1.4, target / 1.4}) {
      const auto z2 = detail::solve_partner_depth(target, z1, 300.0, 500.0);
      // A far first part dominates the weighting and cannot always be balanced.
      if (z1 > target && !z2) continue;
      ASSERT_TRUE(z2.has_value());
      const double a1 = 300.0 * z1 * z1, a2 = 500.0 * *z2 * *z2;
      EXPECT_NEAR((a1 * z1 + a2 * *z2) / (a1 + a2), target, 1e-9 * target);
    }
  }
}

TEST(GroundTruthTest, SymmetricOverRandomScenes) {
  SceneConfig cfg;
  cfg.compound_prob = 0.4;
  cfg.max_objects = 8;
  for (std::uint64_t seed = 0; seed < 1000; ++seed) {
    const SyntheticScene scene = generate_scene(cfg, seed, "s");
    const auto pairs = ground_truth_pairs(scene, cfg.same_depth_tau);
    std::map<std::pair<std::string, std::string>, PairPredicates> label;
    for (const auto& p : pairs) label[{p.object_id_a, p.object_id_b}] = p.label;
    for (const auto& p : pairs) {
      ASSERT_EQ(label.at({p.object_id_b, p.object_id_a}), flip(p.label)) << "seed " << seed;
    }
  }
}

TEST(GroundTruthTest, DepthOrderIsTransitive) {
  SceneConfig cfg;
  cfg.max_objects = 10;
  cfg.same_depth_prob = 0.4;
  long qualifying = 0, violations = 0;
  for (std::uint64_t seed = 0; seed < 300; ++seed) {
    const SyntheticScene scene = generate_scene(cfg, seed, "s");
    const std::size_t n = scene.objects.size();
    auto depth = [&](std::size_t i, std::size_t j) {
      return compare_depths(scene.objects[i].representative_depth(),
                            scene.objects[j].representative_depth(), cfg.same_depth_tau,
                            Setting::kWithin);
    };
    auto leq = [&](std::size_t i, std::size_t j) {
      const D d = depth(i, j);
      return d == D::kACloser || d == D::kSameDepth;
    };
    for (std::size_t a = 0; a < n; ++a) {
      for (std::size_t b = 0; b < n; ++b) {
        for (std::size_t c = 0; c < n; ++c) {
          if (a == b || b == c || a == c || !leq(a, b) || !leq(b, c)) continue;
          ++qualifying;
          violations += !leq(a, c);
        }
      }
    }
  }
  EXPECT_GT(qualifying, 1000);
  EXPECT_EQ(violations, 0);
}

TEST(ClusteredDepthsTest, GapsAvoidTheThresholdBand) {
  SceneConfig cfg;
  cfg.same_depth_prob = 0.3;
  Rng rng(2);
  for (int trial = 0; trial < 500; ++trial) {
    const auto z = sample_clustered_depths(cfg, 8, rng);
    for (double a : z) {
      for (double b : z) {
        if (a >= b) continue;
        const double gap = (b - a) / a;
        EXPECT_TRUE(gap <= 0.9 * cfg.same_depth_tau + 1e-12 ||
                    gap > cfg.same_depth_tau * 1.4)
            << gap;
      }
    }
  }
}

TEST(RenderTest, NearestSurfaceAndBackground) {
  const Camera cam = square_camera(50.0);
  SyntheticScene scene{"s", cam,
                       {billboard(cam, 2.0, 0.8, -20, 0), billboard(cam, 1.0, 0.3, -5, 0),
                        billboard(cam, 3.0, 1.2, 20, 0)},
                       0};
  DepthRenderOptions opt;
  opt.far_value = 250.0f;
  const DepthMap map = render_depth_map(scene, opt);
  EXPECT_EQ(map.at(25, 50), 2.0f);   // only the z=2 billboard
  EXPECT_EQ(map.at(42, 50), 1.0f);   // z=2 and z=1 overlap
  EXPECT_EQ(map.at(50, 2), 250.0f);  // background
  EXPECT_EQ(map.at(70, 50), 3.0f);
}

TEST(RenderTest, GroundPlaneBelowHorizon) {
  const Camera cam = square_camera(50.0);
  SyntheticScene scene{"s", cam, {}, 0};
  DepthRenderOptions opt;
  opt.ground_plane = true;
  opt.camera_height = 1.5;
  const DepthMap map = render_depth_map(scene, opt);
  EXPECT_FLOAT_EQ(map.at(10, 90), static_cast<float>(50.0 * 1.5 / (90.5 - 50.0)));
  EXPECT_EQ(map.at(10, 10), opt.far_value);
}

TEST(RenderTest, NoisyMapsAreDeterministic) {
  const SyntheticScene scene = generate_scene(SceneConfig{}, 5, "s");
  DepthRenderOptions opt;
  opt.object_bias_sigma = 0.2;
  opt.pixel_noise_sigma = 0.1;
  EXPECT_EQ(render_depth_map(scene, opt), render_depth_map(scene, opt));
  EXPECT_NE(render_depth_map(scene, opt), render_depth_map(scene, DepthRenderOptions{}));
}

std::vector<RaterProfile> profiles(double sigma, double unsure, std::uint64_t seed = 1) {
  std::vector<RaterProfile> out;
  for (int r = 0; r < 5; ++r) {
    out.push_back({"r" + std::to_string(r), sigma, 0.05, unsure, derive_seed(seed, r)});
  }
  return out;
}

TEST(RaterTest, NoiselessRatersReportGroundTruth) {
  const SyntheticScene scene = generate_scene(SceneConfig{}, 9, "s");
  std::vector<PairTruth> truths;
  const auto gt = ground_truth_pairs(scene, 0.05);
  for (std::size_t k = 0; k < gt.size(); ++k) {
    const auto& p = gt[k];
    const std::size_t i = std::stoul(p.object_id_a.substr(3));
    const std::size_t j = std::stoul(p.object_id_b.substr(3));
    truths.push_back({p.pair_id, Setting::kWithin, scene.objects[i].representative_depth(),
                      scene.objects[j].representative_depth(), p.label.occlusion});
  }
  const auto votes = simulate_votes(truths, profiles(0.0, 0.0));
  ASSERT_EQ(votes.size(), 5 * gt.size());
  for (std::size_t v = 0; v < votes.size(); ++v) {
    EXPECT_EQ(votes[v].depth_vote, *gt[v / 5].label.depth);
    EXPECT_EQ(votes[v].occlusion_vote, gt[v / 5].label.occlusion);
  }
}

TEST(RaterTest, AlwaysUnsure) {
  const std::vector<PairTruth> truths = {{"p", Setting::kAcross, 1.0, 3.0, std::nullopt}};
  for (const auto& v : simulate_votes(truths, profiles(0.2, 1.0))) {
    EXPECT_EQ(v.depth_vote, D::kUnsure);
    EXPECT_FALSE(v.occlusion_vote.has_value());
  }
  EXPECT_THROW(simulate_votes(truths, std::vector<RaterProfile>(4)), ValidationError);
}

TEST(RaterTest, SmallGapsDisagreeMore) {
  auto disagreement = [](double gap) {
    std::vector<PairTruth> truths;
    for (int i = 0; i < 1000; ++i) {
      truths.push_back({"p" + std::to_string(i), Setting::kWithin, 4.0, 4.0 * (1 + gap),
                        O::kNoOcclusion});
    }
    const auto votes = simulate_votes(truths, profiles(0.3, 0.0, 17));
    int disagreeing = 0;
    for (std::size_t p = 0; p < truths.size(); ++p) {
      std::set<D> seen;
      for (int r = 0; r < 5; ++r) seen.insert(votes[5 * p + r].depth_vote);
      disagreeing += seen.size() > 1;
    }
    return disagreeing / 1000.0;
  };
  const double small = disagreement(0.05), large = disagreement(1.0);
  EXPECT_GT(small, large);
}

TEST(GenerateBundleTest, NoiselessBundleIsAllEasy) {
  GeneratorConfig g;
  g.train_images = 30;
  g.val_images = 10;
  g.test_images = 10;
  const auto sb = generate_bundle(g, 4);
  std::map<std::string, const OrderedPairLabel*> truth;
  for (const auto& t : sb.truth) truth[t.pair_id] = &t;
  int eval = 0;
  for (const auto& p : sb.bundle.pairs) {
    EXPECT_EQ(p.label, truth.at(p.pair_id)->label);
    if (!p.difficulty) continue;
    ++eval;
    // Across-image pairs inside the threshold band are unanimous UNSURE.
    if (p.label.depth == D::kUnsure) {
      EXPECT_EQ(p.setting, Setting::kAcross);
      EXPECT_EQ(*p.difficulty, Difficulty::kInfeasible);
    } else {
      EXPECT_EQ(*p.difficulty, Difficulty::kEasy);
    }
  }
  EXPECT_GT(eval, 50);
  EXPECT_NO_THROW(check_integrity(sb.bundle));
}

TEST(GenerateBundleTest, SameDepthRateNearTenPercent) {
  GeneratorConfig g;
  g.train_images = 0;
  g.val_images = 0;
  g.test_images = 300;
  const auto sb = generate_bundle(g, 12);
  int within = 0, same = 0;
  for (const auto& p : sb.truth) {
    if (p.setting != Setting::kWithin) continue;
    ++within;
    same += p.label.depth == D::kSameDepth;
  }
  EXPECT_NEAR(static_cast<double>(same) / within, 0.10, 0.05);
}

TEST(GenerateBundleTest, Deterministic) {
  GeneratorConfig g;
  g.train_images = 10;
  g.val_images = 2;
  g.test_images = 4;
  g.rater_sigma = 0.3;
  g.detector.box_noise = 0.05;
  g.detector.false_positive_rate = 0.5;
  g.appearance_dim = 4;
  const auto a = generate_bundle(g, 99);
  const auto b = generate_bundle(g, 99);
  EXPECT_EQ(a.bundle, b.bundle);
  EXPECT_EQ(a.detections, b.detections);
  EXPECT_EQ(a.depth_maps, b.depth_maps);
  EXPECT_EQ(a.object_features, b.object_features);
}

TEST(DetectorTest, PerfectProfileCopiesBoxes) {
  const auto objects = scene_objects(generate_scene(SceneConfig{}, 3, "img"));
  const auto dets = synthesize_detections(objects, "img", 8, DetectorProfile{});
  ASSERT_EQ(dets.size(), objects.size());
  for (std::size_t i = 0; i < dets.size(); ++i) {
    EXPECT_EQ(dets[i].box, objects[i].box);
    ASSERT_TRUE(dets[i].detector_score.has_value());
  }
}

TEST(GeneratorConfigTest, ReadsKeyValueFile) {
  const auto kv = KeyValueConfig::parse(
      "train_images=7\nrater_sigma=0.25\nnearest_class=3\nground_plane=true\n", "gen.cfg");
  const auto g = GeneratorConfig::from_config(kv);
  EXPECT_EQ(g.train_images, 7);
  EXPECT_EQ(g.rater_sigma, 0.25);
  EXPECT_EQ(g.scene.nearest_class, 3);
  EXPECT_TRUE(g.depth.ground_plane);
  EXPECT_THROW(GeneratorConfig::from_config(KeyValueConfig::parse("bogus=1\n", "gen.cfg")),
               ValidationError);
}

}  // namespace
}  // namespace vrd25
