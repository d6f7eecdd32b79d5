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

#include <algorithm>
#include <map>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "fixtures.hpp"
#include "oracles.hpp"
#include "vrd25/baselines.hpp"
#include "vrd25/evaluation.hpp"
#include "vrd25/mlp.hpp"
#include "vrd25/synthetic.hpp"

namespace vrd25 {
namespace {

using namespace fixture;

TEST(MatchTest, StrictThresholdAndTieBreaks) {
  const MatchingConfig cfg;
  const Box unit(0, 0, 0.5, 0.5);
  // IoU exactly 0.5 does not match.
  EXPECT_TRUE(match_detections({obj("d", "i", Box(0, 0, 0.5, 0.25))}, {obj("g", "i", unit)}, cfg)
                  .empty());
  // Identical boxes: the lower groundtruth id goes first, then the lower
  // detection id.
  const auto m = match_detections({obj("d2", "i", unit), obj("d1", "i", unit)},
                                  {obj("g2", "i", unit), obj("g1", "i", unit)}, cfg);
  ASSERT_EQ(m.size(), 2u);
  EXPECT_EQ(m.at("d1"), "g1");
  EXPECT_EQ(m.at("d2"), "g2");
  // A higher IoU claims the groundtruth first even for a later detection.
  const auto n = match_detections(
      {obj("a", "i", Box(0, 0, 0.5, 0.4375)), obj("b", "i", unit)}, {obj("g", "i", unit)}, cfg);
  ASSERT_EQ(n.size(), 1u);
  EXPECT_EQ(n.at("b"), "g");
}

TEST(TrimTest, TopScoresWithLowerIdOnTies) {
  const Box b(0, 0, 0.5, 0.5);
  const std::vector<ObjectInstance> dets = {obj("d3", "i", b, 0.9), obj("d1", "i", b, 0.5),
                                            obj("d0", "i", b, 0.5), obj("d2", "i", b, 0.1)};
  const auto kept = trim_detections(dets, 2, permissive(), {});
  ASSERT_EQ(kept.size(), 2u);
  EXPECT_EQ(kept[0].object_id, "d3");
  EXPECT_EQ(kept[1].object_id, "d0");

  MatchingConfig no_leak;
  no_leak.leak_groundtruth_count = false;
  EXPECT_EQ(trim_detections(dets, 2, permissive(), no_leak).size(), 4u);
  EXPECT_THROW(trim_detections({obj("x", "i", b)}, 1, permissive(), {}), ValidationError);

  // Filtering comes first: a tiny box never takes a slot.
  FilterConfig f = permissive();
  f.min_area_frac = 0.1;
  const auto filtered =
      trim_detections({obj("tiny", "i", Box(0, 0, 0.1, 0.1), 0.99), obj("big", "i", b, 0.2)}, 1,
                      f, {});
  ASSERT_EQ(filtered.size(), 1u);
  EXPECT_EQ(filtered[0].object_id, "big");

  const auto per_image = prepare_detections(
      {obj("p", "i", b, 0.5), obj("q", "i", b, 0.6), obj("r", "j", b, 0.4)},
      {obj("g", "i", b)}, permissive(), {});
  ASSERT_EQ(per_image.size(), 1u);  // image j has no groundtruth
  EXPECT_EQ(per_image[0].object_id, "q");
}

TEST(ScoreTest, MatchesBruteForceOracle) {
  int images = 0;
  long tp = 0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const RandomCase c = random_case(seed, 3);
    images += 3;
    for (bool unsure : {true, false}) {
      EvalContext ctx = context(c.gt, c.relations);
      ctx.matching.score_unsure_groundtruth = unsure;
      const MetricsReport r = score(c.set, ctx);
      const auto want = oracle::brute_force_score(c.set, c.gt, c.relations, 0.5, unsure);
      for (Task t : kAllTasks) {
        const auto& w = want[static_cast<int>(t)];
        EXPECT_EQ(r[t].tp, w[0]) << "seed " << seed << " " << name(t);
        EXPECT_EQ(r[t].predicted, w[1]) << "seed " << seed << " " << name(t);
        EXPECT_EQ(r[t].groundtruth, w[2]) << "seed " << seed << " " << name(t);
        tp += w[0];
      }
    }
  }
  EXPECT_GE(images, 200);
  EXPECT_GT(tp, 100);  // the fixtures exercise true positives
}

TEST(ScoreTest, InvariantUnderReordering) {
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    RandomCase c = random_case(1000 + seed, 4);
    const MetricsReport before = score(c.set, context(c.gt, c.relations));
    Rng rng(seed);
    rng.shuffle(c.set.predictions);
    rng.shuffle(c.set.objects);
    rng.shuffle(c.gt);
    rng.shuffle(c.relations);
    const MetricsReport after = score(c.set, context(c.gt, c.relations));
    EXPECT_EQ(before.tasks, after.tasks);
    EXPECT_EQ(before.per_predicate, after.per_predicate);
  }
}

TEST(ScoreTest, HandCountedExample) {
  const auto g0 = obj("g0", "i", Box(0, 0, 0.5, 0.5));
  const auto g1 = obj("g1", "i", Box(0.5, 0.5, 1, 1));
  const auto g2 = obj("g2", "i", Box(0.5, 0, 1, 0.5));
  const auto d0 = obj("d0", "i", Box(0, 0, 0.5, 0.5));
  const auto d1 = obj("d1", "i", Box(0.5, 0.5, 1, 1));
  const auto miss = obj("d9", "i", Box(0, 0.5, 0.5, 1));
  const auto d2 = obj("d2", "i", Box(0.5, 0, 1, 0.5));
  std::vector<OrderedPairLabel> rels = {
      rel(g0, g1, D::kACloser, O::kNoOcclusion),
      rel(g1, g0, D::kBCloser, O::kNoOcclusion),
      rel(g0, g2, std::nullopt, O::kAOccludesB, Difficulty::kAmbiguous),
  };
  PredictionSet s;
  s.objects = {d0, d1, miss, d2};
  s.predictions = {
      pred(d0, d1, D::kACloser, O::kNoOcclusion),    // tp tp
      pred(d1, d0, D::kSameDepth, O::kNoOcclusion),  // fp tp
      pred(d0, d2, D::kACloser, O::kAOccludesB),     // (excluded) tp
      pred(d0, miss, D::kACloser, O::kMutual),       // unmatched: fp fp
      pred(d2, d0, D::kBCloser, O::kMutual),         // matched, no relation: fp fp
  };
  const MetricsReport r = score(s, context({g0, g1, g2}, rels));
  EXPECT_EQ(r[Task::kWithinDepth], (Counts{1, 4, 2}));
  EXPECT_EQ(r[Task::kOcclusion], (Counts{3, 5, 3}));
  EXPECT_EQ(r[Task::kAcrossDepth], (Counts{0, 0, 0}));
  EXPECT_DOUBLE_EQ(r[Task::kWithinDepth].f1(), 2 * 0.25 * 0.5 / 0.75);
  EXPECT_DOUBLE_EQ(r[Task::kAcrossDepth].f1(), 0.0);
  EXPECT_EQ(r.per_predicate[0][code(D::kACloser)], (Counts{1, 2, 1}));
  EXPECT_EQ(r.per_difficulty[0][static_cast<int>(Difficulty::kEasy)], (Counts{1, 2, 2}));

  // Predictions the filter would never have produced are dropped.
  FilterConfig strict = permissive();
  strict.pair_iou_max = 0.5;
  const auto overlapping = obj("d5", "i", Box(0, 0, 0.5, 0.5));
  PredictionSet t;
  t.objects = {d0, overlapping};
  t.predictions = {pred(d0, overlapping, D::kACloser, O::kNoOcclusion)};
  const ScoreDetail detail = score_detail(t, context({g0}, {}, strict));
  EXPECT_EQ(detail.dropped_inadmissible, 1);
  EXPECT_TRUE(detail.predictions.empty());

  t.predictions.push_back(t.predictions[0]);
  EXPECT_THROW(score(t, context({g0}, {})), ValidationError);
  t.objects.pop_back();
  t.predictions.pop_back();
  EXPECT_THROW(score(t, context({g0}, {})), ValidationError);
}

struct NoisyWorld {
  SyntheticBundle sb;
  FilterConfig filter;
};

const NoisyWorld& noisy_world() {
  static const NoisyWorld w = [] {
    GeneratorConfig g;
    g.train_images = 120;
    g.val_images = 10;
    g.test_images = 120;
    g.rater_sigma = 0.25;
    g.rater_unsure_prob = 0.05;
    g.depth.object_bias_sigma = 0.05;
    g.depth.pixel_noise_sigma = 0.02;
    g.detector.box_noise = 0.08;
    g.detector.miss_prob = 0.1;
    g.detector.false_positive_rate = 0.5;
    return NoisyWorld{generate_bundle(g, 2024), synthetic_filter(g.scene)};
  }();
  return w;
}

TEST(ScoreTest, GroundtruthIsAFixedPoint) {
  const auto& w = noisy_world();
  for (Split split : {Split::kTest, Split::kTrain}) {
    const EvalContext ctx = make_eval_context(w.sb.bundle, w.filter, split);
    const MetricsReport r = score(groundtruth_predictions(ctx), ctx);
    for (Task t : kAllTasks) {
      EXPECT_GT(r[t].groundtruth, 0) << name(t);
      EXPECT_DOUBLE_EQ(r[t].f1(), 1.0) << name(t);
    }
    EXPECT_DOUBLE_EQ(r.average_f1(), 1.0);
  }
}

TEST(StrataTest, TablesPartitionTheTotals) {
  const auto& w = noisy_world();
  const EvalContext ctx = make_eval_context(w.sb.bundle, w.filter, Split::kTest);
  const auto rules = predict_with_rule(Rule::kSize, w.sb.bundle.images,
                                       prepare_detections(w.sb.detections, ctx.groundtruth,
                                                          w.filter, ctx.matching),
                                       w.filter, Split::kTest);
  const ScoreDetail d = score_detail(rules.set, ctx);
  const MetricsReport total = summarize(d);
  for (Stratum s : {Stratum::kDifficulty, Stratum::kPredicate, Stratum::kSize,
                    Stratum::kVertical, Stratum::kHorizontal, Stratum::kClass,
                    Stratum::kClassPair}) {
    const auto rows = stratified_report(d, s, {.class_vocab_size = 8});
    for (Task t : kAllTasks) {
      Counts sum;
      for (const auto& row : rows) {
        if (row.task != t) continue;
        sum += row.counts;
        EXPECT_EQ(row.f1.has_value(), row.counts.groundtruth > 0);
      }
      EXPECT_EQ(sum.groundtruth, total[t].groundtruth) << name(s);
      EXPECT_LE(sum.predicted, total[t].predicted) << name(s);
      if (s == Stratum::kPredicate || s == Stratum::kSize) {
        EXPECT_EQ(sum, total[t]) << name(s);
      }
    }
  }
  const auto size_rows = stratified_report(d, Stratum::kSize);
  EXPECT_EQ(size_rows.size(), 3u * 25u);
  const auto diff_rows = stratified_report(d, Stratum::kDifficulty);
  ASSERT_EQ(diff_rows.size(), 15u);
  EXPECT_EQ(diff_rows[0].key, "easy");

  const std::string csv =
      encode_metrics(total, {{Stratum::kDifficulty, diff_rows}});
  EXPECT_EQ(csv.substr(0, csv.find('\n')), kMetricsHeader);
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 1 + 10 + 15);
  EXPECT_NE(csv.find("across_depth,f1,difficulty=ambiguous,,0"), std::string::npos);
}

TEST(ConsistencyTest, HandFixtures) {
  const auto a = obj("a", "i", Box(0, 0, .2, .2)), b = obj("b", "i", Box(.3, .3, .5, .5)),
             c = obj("c", "i", Box(.6, .6, .9, .9));
  PredictionSet s;
  s.predictions = {pred(a, b, D::kACloser, O::kNoOcclusion),
                   pred(b, c, D::kACloser, O::kNoOcclusion),
                   pred(a, c, D::kBCloser, O::kNoOcclusion)};
  const ConsistencyReport r = consistency_report(s);
  EXPECT_EQ(r.transitivity_triples, 1);
  EXPECT_DOUBLE_EQ(r.transitivity_rate(), 1.0);
  EXPECT_EQ(r.depth_pairs, 0);  // no pair has both orders

  s.predictions[2].depth = D::kSameDepth;
  EXPECT_DOUBLE_EQ(consistency_report(s).transitivity_rate(), 0.0);
  s.predictions.pop_back();  // missing a->c prediction
  EXPECT_DOUBLE_EQ(consistency_report(s).transitivity_rate(), 1.0);

  PredictionSet sym;
  sym.predictions = {pred(a, b, D::kACloser, O::kAOccludesB),
                     pred(b, a, D::kBCloser, O::kAOccludesB),
                     pred(a, c, D::kSameDepth, O::kMutual), pred(c, a, D::kSameDepth, O::kMutual),
                     pred(b, c, D::kACloser, O::kNoOcclusion),
                     pred(c, b, D::kACloser, O::kNoOcclusion)};
  const ConsistencyReport q = consistency_report(sym);
  EXPECT_EQ(q.depth_pairs, 3);
  EXPECT_EQ(q.depth_symmetry_violations, 1);
  EXPECT_EQ(q.occlusion_pairs, 3);
  EXPECT_EQ(q.occlusion_symmetry_violations, 1);
  const std::string csv = encode_consistency(q);
  EXPECT_NE(csv.find("depth_symmetry,0.333333"), std::string::npos);
}

TEST(ConsistencyTest, RulesAreSymmetricAndUndertrainedMlpIsNot) {
  const auto& w = noisy_world();
  const auto gt = filter_objects(w.sb.bundle.objects, w.filter);
  for (Rule rule : {Rule::kSize, Rule::kLocation}) {
    const auto set = predict_with_rule(rule, w.sb.bundle.images, gt, w.filter, Split::kTest).set;
    const ConsistencyReport r = consistency_report(set);
    EXPECT_GT(r.depth_pairs, 100);
    EXPECT_EQ(r.depth_symmetry_violations, 0);
    EXPECT_EQ(r.occlusion_symmetry_violations, 0);
  }
  TrainConfig cfg;
  cfg.steps = 30;
  cfg.hidden = 16;
  cfg.seed = 5;
  cfg.setting = TrainSetting::kJoint;
  const FeatureConfig fc = FeatureConfig::parse("B", 0, 0);
  const auto run = train_mlp(training_examples(w.sb.bundle, TrainSetting::kJoint), fc, {}, cfg);
  const auto set = predict_mlp(run.model, w.sb.bundle.images, gt, w.filter, Split::kTest, {});
  const ConsistencyReport r = consistency_report(set);
  EXPECT_GT(r.depth_symmetry_violations, 0);
}

TEST(BiasTest, PlantedNearestClassTopsACloser) {
  GeneratorConfig g;
  g.train_images = 150;
  g.val_images = 0;
  g.test_images = 0;
  g.scene.nearest_class = 7;
  const auto sb = generate_bundle(g, 77);
  const BiasReport r = bias_report(sb.bundle.pairs, sb.bundle.objects, 6);
  const auto& top = r.top_classes.at({Task::kWithinDepth, code(D::kACloser)});
  ASSERT_FALSE(top.empty());
  EXPECT_EQ(top[0], "7");
  for (const auto& row : r.by_class) {
    if (row.key == "7" && row.task == Task::kWithinDepth) {
      EXPECT_GT(row.fraction(code(D::kACloser)), 0.5);
    }
    // Mirroring makes every class's occlusion row self-consistent in total.
    EXPECT_GT(row.total(), 0);
  }
  EXPECT_LE(r.top_class_pairs.at({Task::kOcclusion, code(O::kMutual)}).size(), 6u);
  const std::string csv = encode_bias(r);
  EXPECT_EQ(csv.substr(0, csv.find('\n')), kBiasHeader);

  auto broken = sb.bundle.pairs;
  broken[0].object_id_a = "ghost";
  EXPECT_THROW(bias_report(broken, sb.bundle.objects), IntegrityError);
}

TEST(BaselineScoreTest, ClassPriorNearChanceAndDepthRuleAhead) {
  const auto& w = noisy_world();
  const EvalContext ctx = make_eval_context(w.sb.bundle, w.filter, Split::kTest);
  const ClassPriorTable prior = build_class_prior(w.sb.bundle);
  RuleInputs in{&prior, &w.sb.depth_maps};
  const auto prior_set =
      predict_with_rule(Rule::kClassPrior, w.sb.bundle.images, ctx.groundtruth, w.filter,
                        Split::kTest, {}, in);
  const auto depth_set = predict_with_rule(Rule::kDepth, w.sb.bundle.images, ctx.groundtruth,
                                           w.filter, Split::kTest, {}, in);
  const MetricsReport p = score(prior_set.set, ctx), dr = score(depth_set.set, ctx);
  EXPECT_LT(p[Task::kWithinDepth].f1(), 0.6);
  EXPECT_GT(dr[Task::kWithinDepth].f1(), p[Task::kWithinDepth].f1() + 0.2);
  EXPECT_GT(dr[Task::kAcrossDepth].f1(), p[Task::kAcrossDepth].f1());
}

TEST(DecompositionTest, OracleVariantsDominate) {
  const auto& w = noisy_world();
  const EvalContext ctx = make_eval_context(w.sb.bundle, w.filter, Split::kTest);
  RuleInputs in{nullptr, &w.sb.depth_maps};
  const Predictor depth_rule = [&](const std::vector<ObjectInstance>& objects) {
    return predict_with_rule(Rule::kDepth, w.sb.bundle.images, objects, w.filter, Split::kTest,
                             {}, in)
        .set;
  };
  const DecompositionResult r = error_decomposition(depth_rule, w.sb.detections, ctx);
  for (Task t : kAllTasks) {
    EXPECT_GE(r.object_detection[t].f1(), r.full[t].f1()) << name(t);
    EXPECT_GE(r.predicate_prediction[t].f1(), r.full[t].f1()) << name(t);
    EXPECT_EQ(r.object_detection[t].predicted, r.full[t].predicted);
  }
  EXPECT_LT(r.full.average_f1(), r.predicate_prediction.average_f1());
}

TEST(DifficultyTest, EasyScoresAtLeastDifficult) {
  const auto& w = noisy_world();
  const EvalContext ctx = make_eval_context(w.sb.bundle, w.filter, Split::kTest);
  RuleInputs in{nullptr, &w.sb.depth_maps};
  const auto set = predict_with_rule(Rule::kDepth, w.sb.bundle.images, ctx.groundtruth, w.filter,
                                     Split::kTest, {}, in);
  const MetricsReport r = score(set.set, ctx);
  const Counts& easy = r.per_difficulty[0][static_cast<int>(Difficulty::kEasy)];
  const Counts& hard = r.per_difficulty[0][static_cast<int>(Difficulty::kDifficult)];
  ASSERT_GT(easy.groundtruth, 0);
  ASSERT_GT(hard.groundtruth, 0);
  EXPECT_GE(easy.f1(), hard.f1());
}

}  // namespace
}  // namespace vrd25
