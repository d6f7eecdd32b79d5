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

// Small builders and the random scoring fixture shared by the evaluation
// tests and the acceptance binary.

#ifndef VRD25_TESTS_FIXTURES_HPP_
#define VRD25_TESTS_FIXTURES_HPP_

#include <algorithm>
#include <optional>
#include <string>
#include <vector>

#include "vrd25/evaluation.hpp"

namespace vrd25::fixture {

using D = DepthPredicate;
using O = OcclusionPredicate;

inline constexpr Setting kW = Setting::kWithin;
inline constexpr Setting kX = Setting::kAcross;

inline ObjectInstance obj(const std::string& id, const std::string& image, Box box,
                          std::optional<double> score = std::nullopt, int cls = 0) {
  ObjectInstance o;
  o.object_id = id;
  o.image_id = image;
  o.class_id = cls;
  o.box = box;
  o.detector_score = score;
  return o;
}

inline FilterConfig permissive() {
  FilterConfig f;
  f.min_area_frac = 0.0;
  f.max_area_frac = 1.0;
  f.pair_iou_max = 1.0;
  return f;
}

inline Prediction pred(const ObjectInstance& a, const ObjectInstance& b, D depth,
                       std::optional<O> occl) {
  Prediction p;
  p.setting = a.image_id == b.image_id ? kW : kX;
  p.image_id_a = a.image_id;
  p.object_id_a = a.object_id;
  p.image_id_b = b.image_id;
  p.object_id_b = b.object_id;
  p.depth = depth;
  p.occlusion = occl;
  return p;
}

inline OrderedPairLabel rel(const ObjectInstance& a, const ObjectInstance& b,
                            std::optional<D> depth, std::optional<O> occl,
                            Difficulty diff = Difficulty::kEasy) {
  OrderedPairLabel p = make_pair(a.image_id == b.image_id ? kW : kX, a, b);
  p.label = {depth, occl};
  p.difficulty = diff;
  return p;
}

inline EvalContext context(std::vector<ObjectInstance> gt,
                           std::vector<OrderedPairLabel> relations,
                           FilterConfig filter = permissive()) {
  EvalContext ctx;
  ctx.groundtruth = std::move(gt);
  ctx.relations = std::move(relations);
  ctx.filter = filter;
  return ctx;
}

// Boxes on a 1/8 grid make exact IoU ties common.
inline Box grid_box(Rng& rng) {
  const int x0 = static_cast<int>(rng.below(7)), y0 = static_cast<int>(rng.below(7));
  const int x1 = x0 + 1 + static_cast<int>(rng.below(8 - x0));
  const int y1 = y0 + 1 + static_cast<int>(rng.below(8 - y0));
  return Box(x0 / 8.0, y0 / 8.0, x1 / 8.0, y1 / 8.0);
}

inline Box nudge(const Box& b, Rng& rng) {
  auto move = [&](double v) {
    return std::clamp(v + (static_cast<int>(rng.below(3)) - 1) / 16.0, 0.0, 1.0);
  };
  const double x0 = move(b.xmin()), y0 = move(b.ymin()), x1 = move(b.xmax()),
               y1 = move(b.ymax());
  return x1 > x0 && y1 > y0 ? Box(x0, y0, x1, y1) : b;
}

struct RandomCase {
  std::vector<ObjectInstance> gt;
  std::vector<OrderedPairLabel> relations;
  PredictionSet set;
};

inline RandomCase random_case(std::uint64_t seed, int images) {
  Rng rng(seed);
  RandomCase c;
  std::vector<std::vector<ObjectInstance>> gt(images), dets(images);
  int next_det = 0;
  for (int i = 0; i < images; ++i) {
    const std::string image = "img" + std::to_string(i);
    const int n = 1 + static_cast<int>(rng.below(6));
    for (int k = 0; k < n; ++k) {
      gt[i].push_back(obj(image + "_g" + std::to_string(k), image, grid_box(rng)));
    }
    for (const auto& g : gt[i]) {
      const int copies = rng.bernoulli(0.8) + rng.bernoulli(0.2);
      for (int k = 0; k < copies; ++k) {
        dets[i].push_back(
            obj("d" + std::to_string(next_det++), image, rng.bernoulli(0.5) ? g.box : nudge(g.box, rng)));
      }
    }
    const int extra = static_cast<int>(rng.below(3));
    for (int k = 0; k < extra; ++k) {
      dets[i].push_back(obj("d" + std::to_string(next_det++), image, grid_box(rng)));
    }
    rng.shuffle(dets[i]);
  }
  auto maybe_depth = [&](bool across) -> std::optional<D> {
    const int v = static_cast<int>(rng.below(5));
    if (v == 4) return std::nullopt;
    if (across && v == 2) return D::kUnsure;
    return depth_from_code(v);
  };
  auto maybe_occl = [&]() -> std::optional<O> {
    const int v = static_cast<int>(rng.below(5));
    if (v == 4) return std::nullopt;
    return occlusion_from_code(v);
  };
  for (int i = 0; i < images; ++i) {
    for (const auto& a : gt[i]) {
      for (const auto& b : gt[i]) {
        if (&a != &b) c.relations.push_back(rel(a, b, maybe_depth(false), maybe_occl()));
      }
    }
  }
  for (int i = 0; i + 1 < images; i += 2) {
    for (const auto& a : gt[i]) {
      for (const auto& b : gt[i + 1]) c.relations.push_back(rel(a, b, maybe_depth(true), {}));
    }
  }
  auto any_depth = [&](bool across) {
    D d = depth_from_code(static_cast<int>(rng.below(4)));
    return across && d == D::kSameDepth ? D::kUnsure : d;
  };
  for (int i = 0; i < images; ++i) {
    for (const auto& a : dets[i]) {
      for (const auto& b : dets[i]) {
        if (&a != &b && rng.bernoulli(0.7)) {
          c.set.predictions.push_back(pred(a, b, any_depth(false),
                                           occlusion_from_code(static_cast<int>(rng.below(4)))));
        }
      }
    }
  }
  for (int i = 0; i + 1 < images; i += 2) {
    for (const auto& a : dets[i]) {
      for (const auto& b : dets[i + 1]) {
        if (rng.bernoulli(0.6)) c.set.predictions.push_back(pred(a, b, any_depth(true), {}));
      }
    }
  }
  for (auto& v : gt) c.gt.insert(c.gt.end(), v.begin(), v.end());
  for (auto& v : dets) c.set.objects.insert(c.set.objects.end(), v.begin(), v.end());
  return c;
}

// Copies every relation's label into a prediction over the groundtruth
// boxes; unlabeled tasks fall back to UNSURE and NO_OCCLUSION.
inline PredictionSet groundtruth_predictions(const EvalContext& ctx) {
  PredictionSet s;
  s.model_name = "groundtruth";
  s.objects = ctx.groundtruth;
  for (const auto& p : ctx.relations) {
    Prediction q;
    q.setting = p.setting;
    q.image_id_a = p.image_id_a;
    q.object_id_a = p.object_id_a;
    q.image_id_b = p.image_id_b;
    q.object_id_b = p.object_id_b;
    q.depth = p.label.depth.value_or(D::kUnsure);
    if (p.setting == kW) q.occlusion = p.label.occlusion.value_or(O::kNoOcclusion);
    s.predictions.push_back(q);
  }
  return s;
}

}  // namespace vrd25::fixture

#endif  // VRD25_TESTS_FIXTURES_HPP_
