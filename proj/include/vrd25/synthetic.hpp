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

// Synthetic scenes with exact ground truth.
//
// A scene is a pinhole camera looking at fronto-parallel billboards. Camera
// coordinates: x right, y down, z forward; the ground plane (when enabled)
// sits at y = camera_height. A simple object is one billboard; a compound
// object is two vertically stacked billboards at different depths that touch
// in the image plane, which is what makes mutual occlusion possible.
//
// Object depth is the world-area-weighted mean of part depths. Depths are
// drawn in clusters: members of one cluster lie within 0.9*tau of each other
// and distinct clusters are separated by more than tau, so the ground-truth
// depth relation is a total preorder (transitive with same-depth ties).

#ifndef VRD25_SYNTHETIC_HPP_
#define VRD25_SYNTHETIC_HPP_

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "vrd25/aggregation.hpp"
#include "vrd25/core.hpp"
#include "vrd25/dataset.hpp"
#include "vrd25/random.hpp"
#include "vrd25/raster_io.hpp"
#include "vrd25/text_io.hpp"

namespace vrd25 {

inline constexpr double kNearPlane = 0.1;

struct Camera {
  double focal_px = 48.0;
  double cx = 32.0;
  double cy = 17.0;
  int width = 64;
  int height = 48;
};

struct WorldRect {
  double x0 = 0, y0 = 0, x1 = 0, y1 = 0;
  double area() const { return (x1 - x0) * (y1 - y0); }
};

struct BillboardPart {
  WorldRect rect;
  double depth_z = 1.0;
};

struct BillboardObject {
  int class_id = 0;
  std::vector<BillboardPart> parts;

  double representative_depth() const {
    double num = 0, den = 0;
    for (const auto& p : parts) {
      num += p.rect.area() * p.depth_z;
      den += p.rect.area();
    }
    return num / den;
  }
};

struct SyntheticScene {
  std::string image_id;
  Camera camera;
  std::vector<BillboardObject> objects;
  std::uint64_t seed = 0;
};

// Pixel-space rectangle, possibly empty after clamping.
struct PixelRect {
  double u0 = 0, v0 = 0, u1 = 0, v1 = 0;
  bool empty() const { return !(u1 > u0 && v1 > v0); }
  double area() const { return empty() ? 0.0 : (u1 - u0) * (v1 - v0); }
};

inline PixelRect intersect(const PixelRect& a, const PixelRect& b) {
  return {std::max(a.u0, b.u0), std::max(a.v0, b.v0), std::min(a.u1, b.u1),
          std::min(a.v1, b.v1)};
}

inline PixelRect project_part(const Camera& cam, const BillboardPart& p,
                              bool clamp = true) {
  PixelRect r{cam.cx + cam.focal_px * p.rect.x0 / p.depth_z,
              cam.cy + cam.focal_px * p.rect.y0 / p.depth_z,
              cam.cx + cam.focal_px * p.rect.x1 / p.depth_z,
              cam.cy + cam.focal_px * p.rect.y1 / p.depth_z};
  if (clamp) {
    r = intersect(r, PixelRect{0, 0, static_cast<double>(cam.width),
                               static_cast<double>(cam.height)});
  }
  return r;
}

inline std::string scene_object_id(const std::string& image_id, std::size_t k) {
  return image_id + "_o" + std::to_string(k);
}

// Union of the visible part rectangles, normalized. Throws if the object is
// entirely outside the image.
inline Box project_object(const Camera& cam, const BillboardObject& obj) {
  double u0 = 1e300, v0 = 1e300, u1 = -1e300, v1 = -1e300;
  bool any = false;
  for (const auto& part : obj.parts) {
    const PixelRect r = project_part(cam, part);
    if (r.empty()) continue;
    any = true;
    u0 = std::min(u0, r.u0);
    v0 = std::min(v0, r.v0);
    u1 = std::max(u1, r.u1);
    v1 = std::max(v1, r.v1);
  }
  if (!any) throw ValidationError("billboard projects outside the image");
  return Box(u0 / cam.width, v0 / cam.height, u1 / cam.width, v1 / cam.height);
}

inline ImageRecord scene_image_record(const SyntheticScene& scene, Split split) {
  return {scene.image_id, scene.camera.width, scene.camera.height, split,
          assign_group(scene.image_id)};
}

inline std::vector<ObjectInstance> scene_objects(const SyntheticScene& scene) {
  std::vector<ObjectInstance> out;
  for (std::size_t k = 0; k < scene.objects.size(); ++k) {
    ObjectInstance o;
    o.object_id = scene_object_id(scene.image_id, k);
    o.image_id = scene.image_id;
    o.class_id = scene.objects[k].class_id;
    o.box = project_object(scene.camera, scene.objects[k]);
    out.push_back(std::move(o));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Ground truth.

inline DepthPredicate compare_depths(double z_a, double z_b, double tau,
                                     Setting setting) {
  const double gap = (z_b - z_a) / std::min(z_a, z_b);
  if (gap > tau) return DepthPredicate::kACloser;
  if (-gap > tau) return DepthPredicate::kBCloser;
  return setting == Setting::kWithin ? DepthPredicate::kSameDepth
                                     : DepthPredicate::kUnsure;
}

// Visible-surface occlusion between two objects of one scene: a part of A
// occludes B when their projections overlap with positive area and that part
// is strictly nearer than the overlapping part of B.
inline OcclusionPredicate compare_occlusion(const Camera& cam,
                                            const BillboardObject& a,
                                            const BillboardObject& b) {
  bool a_over_b = false, b_over_a = false;
  for (const auto& pa : a.parts) {
    const PixelRect ra = project_part(cam, pa);
    for (const auto& pb : b.parts) {
      const PixelRect rb = project_part(cam, pb);
      if (intersect(ra, rb).area() <= 0.0) continue;
      if (pa.depth_z < pb.depth_z) a_over_b = true;
      if (pb.depth_z < pa.depth_z) b_over_a = true;
    }
  }
  if (a_over_b && b_over_a) return OcclusionPredicate::kMutual;
  if (a_over_b) return OcclusionPredicate::kAOccludesB;
  if (b_over_a) return OcclusionPredicate::kBOccludesA;
  return OcclusionPredicate::kNoOcclusion;
}

// Exact labels for every ordered pair of scene objects.
inline std::vector<OrderedPairLabel> ground_truth_pairs(const SyntheticScene& scene,
                                                        double same_depth_tau) {
  if (scene.objects.size() < 2) {
    throw ValidationError("ground truth needs at least two objects");
  }
  std::vector<OrderedPairLabel> out;
  for (std::size_t i = 0; i < scene.objects.size(); ++i) {
    for (std::size_t j = 0; j < scene.objects.size(); ++j) {
      if (i == j) continue;
      OrderedPairLabel p;
      p.object_id_a = scene_object_id(scene.image_id, i);
      p.object_id_b = scene_object_id(scene.image_id, j);
      p.pair_id = pair_id_for(p.object_id_a, p.object_id_b);
      p.setting = Setting::kWithin;
      p.image_id_a = p.image_id_b = scene.image_id;
      p.label.depth = compare_depths(scene.objects[i].representative_depth(),
                                     scene.objects[j].representative_depth(),
                                     same_depth_tau, Setting::kWithin);
      p.label.occlusion =
          compare_occlusion(scene.camera, scene.objects[i], scene.objects[j]);
      out.push_back(std::move(p));
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Depth rendering.

struct DepthRenderOptions {
  float far_value = 100.0f;
  bool ground_plane = false;
  double camera_height = 1.6;
  // Per-object multiplicative bias and per-pixel multiplicative noise model
  // an imperfect monocular estimator. Zero gives the exact map.
  double object_bias_sigma = 0.0;
  double pixel_noise_sigma = 0.0;
  std::uint64_t seed = 0;
};

inline DepthMap render_depth_map(const SyntheticScene& scene,
                                 const DepthRenderOptions& opt = {}) {
  const Camera& cam = scene.camera;
  DepthMap map(cam.width, cam.height, opt.far_value);
  Rng rng(derive_seed(opt.seed ^ scene.seed, "depth-noise"));
  std::vector<double> bias(scene.objects.size(), 1.0);
  for (auto& b : bias) {
    if (opt.object_bias_sigma > 0) {
      b = std::max(0.2, 1.0 + rng.normal(0.0, opt.object_bias_sigma));
    }
  }
  for (int y = 0; y < cam.height; ++y) {
    const double v = y + 0.5;
    for (int x = 0; x < cam.width; ++x) {
      const double u = x + 0.5;
      double z = opt.far_value;
      if (opt.ground_plane && v > cam.cy) {
        z = std::min(z, cam.focal_px * opt.camera_height / (v - cam.cy));
      }
      for (std::size_t k = 0; k < scene.objects.size(); ++k) {
        for (const auto& part : scene.objects[k].parts) {
          const PixelRect r = project_part(cam, part);
          if (u >= r.u0 && u < r.u1 && v >= r.v0 && v < r.v1) {
            z = std::min(z, part.depth_z * bias[k]);
          }
        }
      }
      if (opt.pixel_noise_sigma > 0) {
        z *= std::max(0.05, 1.0 + rng.normal(0.0, opt.pixel_noise_sigma));
      }
      map.at(x, y) = static_cast<float>(z);
    }
  }
  return map;
}

// ---------------------------------------------------------------------------
// Scene generation.

struct SceneConfig {
  int image_width = 64;
  int image_height = 48;
  double focal_px = 48.0;
  double camera_height = 1.6;
  double horizon_frac = 0.35;  // principal point row / image height
  int min_objects = 2;
  int max_objects = 6;
  int num_classes = 8;
  double depth_min = 2.0;
  double depth_max = 16.0;
  double size_min = 0.8;  // world size of the smallest class
  double size_max = 2.4;  // world size of the largest class
  double size_jitter = 0.25;
  double compound_prob = 0.15;
  double floating_prob = 0.2;
  double same_depth_prob = 0.15;
  double same_depth_tau = 0.05;
  double cluster_separation = 1.5;  // cross-cluster gap, in units of tau
  double min_visible_frac = 0.3;
  int nearest_class = -1;  // when >= 0 this class is always the nearest object
  int max_attempts = 400;
  double min_area_frac = 0.02;
  double max_area_frac = 0.70;
  double pair_iou_max = 0.7;

  void validate() const {
    if (min_objects < 2 || max_objects < min_objects || max_objects > 20) {
      throw ValidationError("scene config: need 2 <= min_objects <= max_objects <= 20");
    }
    if (image_width <= 0 || image_height <= 0 || focal_px <= 0) {
      throw ValidationError("scene config: image size and focal length must be positive");
    }
    if (!(depth_min > kNearPlane && depth_max > depth_min)) {
      throw ValidationError("scene config: need near plane < depth_min < depth_max");
    }
    if (num_classes < 1) throw ValidationError("scene config: num_classes >= 1");
    if (nearest_class >= num_classes || (nearest_class >= 0 && num_classes < 2)) {
      throw ValidationError("scene config: nearest_class out of range");
    }
    if (same_depth_tau < 0 || cluster_separation <= 1.0) {
      throw ValidationError("scene config: need tau >= 0 and cluster_separation > 1");
    }
    if (!(0 <= min_area_frac && min_area_frac < max_area_frac && max_area_frac <= 1)) {
      throw ValidationError("scene config: bad area window");
    }
  }

  Camera camera() const {
    return {focal_px, 0.5 * image_width, horizon_frac * image_height, image_width,
            image_height};
  }
};

namespace detail {

// Depth of the second part that makes the world-area-weighted mean equal
// `target`, given the first part's depth and both pixel areas.
inline std::optional<double> solve_partner_depth(double target, double z1,
                                                 double px1, double px2) {
  auto mean = [&](double z2) {
    const double a1 = px1 * z1 * z1, a2 = px2 * z2 * z2;
    return (a1 * z1 + a2 * z2) / (a1 + a2);
  };
  double lo, hi;
  if (z1 > target) {
    lo = kNearPlane * 1.01;
    hi = target;
  } else {
    lo = target;
    hi = target * 50.0;
  }
  if ((mean(lo) - target) * (mean(hi) - target) > 0) return std::nullopt;
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    if ((mean(mid) - target) * (mean(lo) - target) > 0) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return 0.5 * (lo + hi);
}

inline BillboardPart part_from_pixels(const Camera& cam, const PixelRect& r,
                                      double z) {
  return {{(r.u0 - cam.cx) * z / cam.focal_px, (r.v0 - cam.cy) * z / cam.focal_px,
           (r.u1 - cam.cx) * z / cam.focal_px, (r.v1 - cam.cy) * z / cam.focal_px},
          z};
}

// Fraction of each object's projected area that is not hidden by a nearer
// part, measured on the pixel grid.
inline std::vector<double> visible_fractions(const SyntheticScene& scene) {
  const Camera& cam = scene.camera;
  std::vector<long> total(scene.objects.size(), 0), visible(scene.objects.size(), 0);
  for (int y = 0; y < cam.height; ++y) {
    for (int x = 0; x < cam.width; ++x) {
      const double u = x + 0.5, v = y + 0.5;
      double best = 1e300;
      std::size_t owner = scene.objects.size();
      for (std::size_t k = 0; k < scene.objects.size(); ++k) {
        bool covers = false;
        for (const auto& part : scene.objects[k].parts) {
          const PixelRect r = project_part(cam, part);
          if (u >= r.u0 && u < r.u1 && v >= r.v0 && v < r.v1) {
            covers = true;
            if (part.depth_z < best) {
              best = part.depth_z;
              owner = k;
            }
          }
        }
        if (covers) ++total[k];
      }
      if (owner < scene.objects.size()) ++visible[owner];
    }
  }
  std::vector<double> out(scene.objects.size(), 0.0);
  for (std::size_t k = 0; k < out.size(); ++k) {
    out[k] = total[k] ? static_cast<double>(visible[k]) / total[k] : 0.0;
  }
  return out;
}

}  // namespace detail

// Draws `n` object depths in clusters (see file comment).
inline std::vector<double> sample_clustered_depths(const SceneConfig& cfg, int n,
                                                   Rng& rng) {
  const double width = 0.9 * cfg.same_depth_tau;
  const double gap = 1.0 + cfg.cluster_separation * std::max(cfg.same_depth_tau, 1e-3);
  std::vector<double> bases;
  std::vector<double> depths;
  for (int k = 0; k < n; ++k) {
    if (!bases.empty() && rng.bernoulli(cfg.same_depth_prob)) {
      const double b = bases[rng.below(bases.size())];
      depths.push_back(b * (1.0 + rng.uniform(0.0, width)));
      continue;
    }
    bool placed = false;
    for (int attempt = 0; attempt < cfg.max_attempts && !placed; ++attempt) {
      const double b = rng.uniform(cfg.depth_min, cfg.depth_max / (1.0 + width));
      bool ok = true;
      for (double c : bases) {
        const double lo = std::min(b, c), hi = std::max(b, c);
        if (hi < lo * (1.0 + width) * gap) ok = false;
      }
      if (ok) {
        bases.push_back(b);
        depths.push_back(b * (1.0 + rng.uniform(0.0, width)));
        placed = true;
      }
    }
    if (!placed) {
      throw ValidationError("scene generation: cannot place " + std::to_string(n) +
                            " separated depth clusters in [depth_min, depth_max]");
    }
  }
  return depths;
}

// Generates one scene whose objects all satisfy the area window, the pair IoU
// limit and the visibility floor. Fails after max_attempts placements.
inline SyntheticScene generate_scene(const SceneConfig& cfg, std::uint64_t seed,
                                     std::string image_id = "img") {
  cfg.validate();
  Rng rng(derive_seed(seed, "scene"));
  const Camera cam = cfg.camera();
  const double W = cfg.image_width, H = cfg.image_height;
  const double lo_area = cfg.min_area_frac + 0.005;
  const double hi_area = cfg.max_area_frac - 0.05;
  for (int scene_attempt = 0; scene_attempt < cfg.max_attempts; ++scene_attempt) {
    const int n = rng.uniform_int(cfg.min_objects, cfg.max_objects);
    std::vector<double> depths;
    try {
      depths = sample_clustered_depths(cfg, n, rng);
    } catch (const ValidationError&) {
      continue;
    }
    std::vector<int> classes(n);
    if (cfg.nearest_class >= 0) {
      const auto nearest = std::min_element(depths.begin(), depths.end()) - depths.begin();
      for (int k = 0; k < n; ++k) {
        if (k == nearest) {
          classes[k] = cfg.nearest_class;
        } else {
          int c = rng.uniform_int(0, cfg.num_classes - 2);
          classes[k] = c >= cfg.nearest_class ? c + 1 : c;
        }
      }
    } else {
      for (auto& c : classes) c = rng.uniform_int(0, cfg.num_classes - 1);
    }

    SyntheticScene scene{image_id, cam, {}, seed};
    bool scene_ok = true;
    for (int k = 0; k < n && scene_ok; ++k) {
      bool placed = false;
      for (int attempt = 0; attempt < 60 && !placed; ++attempt) {
        const double z = depths[k];
        const double base =
            cfg.num_classes == 1
                ? cfg.size_min
                : cfg.size_min + (cfg.size_max - cfg.size_min) * classes[k] /
                                     (cfg.num_classes - 1);
        const double size = base * rng.uniform(1.0 - cfg.size_jitter, 1.0 + cfg.size_jitter);
        const double aspect = std::exp(rng.uniform(std::log(0.6), std::log(1.6)));
        const double pw = cam.focal_px * size * std::sqrt(aspect) / z;
        const double ph = cam.focal_px * size / std::sqrt(aspect) / z;
        const double uc = rng.uniform(0.1 * W, 0.9 * W);
        double v_bottom;
        if (rng.bernoulli(cfg.floating_prob)) {
          v_bottom = rng.uniform(0.3 * ph, H + 0.3 * ph);
        } else {
          v_bottom = cam.cy + cam.focal_px * cfg.camera_height / z;
        }
        const PixelRect full{uc - 0.5 * pw, v_bottom - ph, uc + 0.5 * pw, v_bottom};
        BillboardObject obj;
        obj.class_id = classes[k];
        if (rng.bernoulli(cfg.compound_prob)) {
          const double t = rng.uniform(0.35, 0.65);
          const PixelRect top{full.u0, full.v0, full.u1, full.v0 + t * ph};
          const PixelRect bottom{full.u0, full.v0 + t * ph, full.u1, full.v1};
          const double spread = rng.uniform(0.3, 0.6);
          const bool top_far = rng.bernoulli(0.5);
          const double z_top = top_far ? z * (1.0 + spread) : z / (1.0 + spread);
          auto z_bottom = detail::solve_partner_depth(z, z_top, top.area(), bottom.area());
          if (!z_bottom || *z_bottom <= kNearPlane) continue;
          obj.parts = {detail::part_from_pixels(cam, top, z_top),
                       detail::part_from_pixels(cam, bottom, *z_bottom)};
        } else {
          obj.parts = {detail::part_from_pixels(cam, full, z)};
        }
        Box box;
        try {
          box = project_object(cam, obj);
        } catch (const ValidationError&) {
          continue;
        }
        if (box.area() < lo_area || box.area() > hi_area) continue;
        bool pair_ok = true;
        for (const auto& other : scene.objects) {
          if (iou(box, project_object(cam, other)) > cfg.pair_iou_max - 0.05) {
            pair_ok = false;
          }
        }
        if (!pair_ok) continue;
        scene.objects.push_back(obj);
        const auto vis = detail::visible_fractions(scene);
        if (*std::min_element(vis.begin(), vis.end()) < cfg.min_visible_frac) {
          scene.objects.pop_back();
          continue;
        }
        placed = true;
      }
      scene_ok = placed;
    }
    if (scene_ok) return scene;
  }
  throw ValidationError("scene generation failed after " +
                        std::to_string(cfg.max_attempts) +
                        " attempts; the area window cannot be met");
}

// ---------------------------------------------------------------------------
// Simulated raters.

struct RaterProfile {
  std::string rater_id = "r0";
  double depth_noise_sigma = 0.0;
  double same_depth_threshold = 0.05;
  double unsure_prob = 0.0;
  std::uint64_t seed = 0;

  void validate() const {
    if (depth_noise_sigma < 0 || same_depth_threshold < 0 || unsure_prob < 0 ||
        unsure_prob > 1) {
      throw ValidationError("rater profile parameters out of range");
    }
  }
};

// What a rater looks at for one pair.
struct PairTruth {
  std::string pair_id;
  Setting setting = Setting::kWithin;
  double depth_a = 1.0;
  double depth_b = 1.0;
  std::optional<OcclusionPredicate> occlusion;
};

// Each rater perceives z * (1 + eps), eps ~ N(0, sigma^2), independently per
// object and pair. With probability unsure_prob the answer is UNSURE;
// otherwise the perceived depths go through the relative-gap decision rule.
// Occlusion answers switch to a uniformly chosen wrong class with
// probability 1 - exp(-sigma).
inline VoteRecord simulate_vote(const PairTruth& truth, const RaterProfile& rater,
                                std::int64_t timestamp) {
  Rng rng(derive_seed(rater.seed, truth.pair_id));
  VoteRecord v;
  v.pair_id = truth.pair_id;
  v.rater_id = rater.rater_id;
  v.timestamp_unix_ms = timestamp;
  const double za = truth.depth_a * std::max(0.01, 1.0 + rng.normal(0.0, rater.depth_noise_sigma));
  const double zb = truth.depth_b * std::max(0.01, 1.0 + rng.normal(0.0, rater.depth_noise_sigma));
  const bool unsure = rng.bernoulli(rater.unsure_prob);
  v.depth_vote = unsure ? DepthPredicate::kUnsure
                        : compare_depths(za, zb, rater.same_depth_threshold, truth.setting);
  if (truth.setting == Setting::kWithin && truth.occlusion) {
    OcclusionPredicate o = *truth.occlusion;
    if (rng.bernoulli(1.0 - std::exp(-rater.depth_noise_sigma))) {
      const int shift = 1 + static_cast<int>(rng.below(3));
      o = static_cast<OcclusionPredicate>((code(o) + shift) % 4);
    }
    v.occlusion_vote = o;
  }
  return v;
}

inline std::vector<VoteRecord> simulate_votes(const std::vector<PairTruth>& pairs,
                                              const std::vector<RaterProfile>& profiles,
                                              std::size_t required_raters = 5) {
  if (profiles.size() != required_raters) {
    throw ValidationError("expected " + std::to_string(required_raters) +
                          " rater profiles, got " + std::to_string(profiles.size()));
  }
  for (const auto& p : profiles) p.validate();
  std::vector<VoteRecord> out;
  std::int64_t t = 0;
  for (const auto& pair : pairs) {
    for (const auto& rater : profiles) out.push_back(simulate_vote(pair, rater, ++t));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Synthetic detector and appearance features.

struct DetectorProfile {
  double box_noise = 0.0;  // stddev of edge displacement, fraction of box size
  double miss_prob = 0.0;
  double false_positive_rate = 0.0;  // expected spurious boxes per image
  std::uint64_t seed = 0;
};

inline std::vector<ObjectInstance> synthesize_detections(
    const std::vector<ObjectInstance>& groundtruth, const std::string& image_id,
    int num_classes, const DetectorProfile& profile) {
  Rng rng(derive_seed(profile.seed, "detector/" + image_id));
  std::vector<ObjectInstance> out;
  int k = 0;
  auto clamp01 = [](double v) { return std::clamp(v, 0.0, 1.0); };
  for (const auto& gt : groundtruth) {
    if (rng.bernoulli(profile.miss_prob)) continue;
    const double w = gt.box.width(), h = gt.box.height();
    double x0 = clamp01(gt.box.xmin() + rng.normal(0, profile.box_noise) * w);
    double x1 = clamp01(gt.box.xmax() + rng.normal(0, profile.box_noise) * w);
    double y0 = clamp01(gt.box.ymin() + rng.normal(0, profile.box_noise) * h);
    double y1 = clamp01(gt.box.ymax() + rng.normal(0, profile.box_noise) * h);
    if (x1 < x0) std::swap(x0, x1);
    if (y1 < y0) std::swap(y0, y1);
    if (x1 - x0 < 0.01 || y1 - y0 < 0.01) continue;
    ObjectInstance d;
    d.object_id = image_id + "_d" + std::to_string(k++);
    d.image_id = image_id;
    d.class_id = gt.class_id;
    d.box = Box(x0, y0, x1, y1);
    d.detector_score = rng.uniform(0.5, 1.0);
    out.push_back(std::move(d));
  }
  double budget = profile.false_positive_rate;
  while (budget > 0 && rng.bernoulli(std::min(1.0, budget))) {
    budget -= 1.0;
    const double w = rng.uniform(0.15, 0.5), h = rng.uniform(0.15, 0.5);
    const double x0 = rng.uniform(0.0, 1.0 - w), y0 = rng.uniform(0.0, 1.0 - h);
    ObjectInstance d;
    d.object_id = image_id + "_d" + std::to_string(k++);
    d.image_id = image_id;
    d.class_id = rng.uniform_int(0, std::max(0, num_classes - 1));
    d.box = Box(x0, y0, x0 + w, y0 + h);
    d.detector_score = rng.uniform(0.0, 0.7);
    out.push_back(std::move(d));
  }
  return out;
}

// Class-prototype-plus-noise appearance vectors for synthetic objects.
inline std::vector<float> synthesize_appearance(int class_id, int dim,
                                                std::uint64_t seed,
                                                const std::string& key,
                                                double noise = 0.5) {
  Rng proto(derive_seed(seed, "appearance/class/" + std::to_string(class_id)));
  Rng jitter(derive_seed(seed, "appearance/" + key));
  std::vector<float> v(dim);
  for (auto& x : v) x = static_cast<float>(proto.normal() + noise * jitter.normal());
  return v;
}

// ---------------------------------------------------------------------------
// Full synthetic bundles.

struct GeneratorConfig {
  SceneConfig scene;
  int train_images = 200;
  int val_images = 20;
  int test_images = 40;
  int rater_count = 5;
  double rater_sigma = 0.0;
  double rater_unsure_prob = 0.0;
  double rater_same_threshold = -1.0;  // < 0: use same_depth_tau
  DepthRenderOptions depth;
  DetectorProfile detector;
  int appearance_dim = 0;

  static GeneratorConfig from_config(const KeyValueConfig& kv) {
    GeneratorConfig g;
    kv.check_known({"image_width", "image_height", "focal_px", "camera_height",
                    "horizon_frac", "min_objects", "max_objects", "num_classes",
                    "depth_min", "depth_max", "size_min", "size_max", "size_jitter",
                    "compound_prob", "floating_prob", "same_depth_prob",
                    "same_depth_tau", "cluster_separation", "min_visible_frac",
                    "nearest_class", "max_attempts", "train_images", "val_images",
                    "test_images", "rater_count", "rater_sigma", "rater_unsure_prob",
                    "rater_same_threshold", "far_value", "ground_plane",
                    "depth_object_bias", "depth_pixel_noise", "detector_box_noise",
                    "detector_miss_prob", "detector_fp_rate", "appearance_dim"});
    SceneConfig& s = g.scene;
    s.image_width = static_cast<int>(kv.get_int("image_width", s.image_width));
    s.image_height = static_cast<int>(kv.get_int("image_height", s.image_height));
    s.focal_px = kv.get_double("focal_px", s.focal_px);
    s.camera_height = kv.get_double("camera_height", s.camera_height);
    s.horizon_frac = kv.get_double("horizon_frac", s.horizon_frac);
    s.min_objects = static_cast<int>(kv.get_int("min_objects", s.min_objects));
    s.max_objects = static_cast<int>(kv.get_int("max_objects", s.max_objects));
    s.num_classes = static_cast<int>(kv.get_int("num_classes", s.num_classes));
    s.depth_min = kv.get_double("depth_min", s.depth_min);
    s.depth_max = kv.get_double("depth_max", s.depth_max);
    s.size_min = kv.get_double("size_min", s.size_min);
    s.size_max = kv.get_double("size_max", s.size_max);
    s.size_jitter = kv.get_double("size_jitter", s.size_jitter);
    s.compound_prob = kv.get_double("compound_prob", s.compound_prob);
    s.floating_prob = kv.get_double("floating_prob", s.floating_prob);
    s.same_depth_prob = kv.get_double("same_depth_prob", s.same_depth_prob);
    s.same_depth_tau = kv.get_double("same_depth_tau", s.same_depth_tau);
    s.cluster_separation = kv.get_double("cluster_separation", s.cluster_separation);
    s.min_visible_frac = kv.get_double("min_visible_frac", s.min_visible_frac);
    s.nearest_class = static_cast<int>(kv.get_int("nearest_class", s.nearest_class));
    s.max_attempts = static_cast<int>(kv.get_int("max_attempts", s.max_attempts));
    g.train_images = static_cast<int>(kv.get_int("train_images", g.train_images));
    g.val_images = static_cast<int>(kv.get_int("val_images", g.val_images));
    g.test_images = static_cast<int>(kv.get_int("test_images", g.test_images));
    g.rater_count = static_cast<int>(kv.get_int("rater_count", g.rater_count));
    g.rater_sigma = kv.get_double("rater_sigma", g.rater_sigma);
    g.rater_unsure_prob = kv.get_double("rater_unsure_prob", g.rater_unsure_prob);
    g.rater_same_threshold = kv.get_double("rater_same_threshold", g.rater_same_threshold);
    g.depth.far_value = static_cast<float>(kv.get_double("far_value", g.depth.far_value));
    g.depth.ground_plane = kv.get_bool("ground_plane", g.depth.ground_plane);
    g.depth.object_bias_sigma = kv.get_double("depth_object_bias", g.depth.object_bias_sigma);
    g.depth.pixel_noise_sigma = kv.get_double("depth_pixel_noise", g.depth.pixel_noise_sigma);
    g.detector.box_noise = kv.get_double("detector_box_noise", g.detector.box_noise);
    g.detector.miss_prob = kv.get_double("detector_miss_prob", g.detector.miss_prob);
    g.detector.false_positive_rate = kv.get_double("detector_fp_rate", g.detector.false_positive_rate);
    g.appearance_dim = static_cast<int>(kv.get_int("appearance_dim", g.appearance_dim));
    g.validate();
    return g;
  }

  void validate() const {
    scene.validate();
    if (train_images < 0 || val_images < 0 || test_images < 0) {
      throw ValidationError("generator: image counts must be non-negative");
    }
    if (rater_count < 1) throw ValidationError("generator: rater_count >= 1");
    if (appearance_dim < 0) throw ValidationError("generator: appearance_dim >= 0");
  }

  std::vector<RaterProfile> raters(std::uint64_t seed) const {
    std::vector<RaterProfile> out;
    for (int r = 0; r < rater_count; ++r) {
      RaterProfile p;
      p.rater_id = "r" + std::to_string(r);
      p.depth_noise_sigma = rater_sigma;
      p.unsure_prob = rater_unsure_prob;
      p.same_depth_threshold =
          rater_same_threshold < 0 ? scene.same_depth_tau : rater_same_threshold;
      p.seed = derive_seed(seed, "rater/" + std::to_string(r));
      out.push_back(p);
    }
    return out;
  }
};

struct SyntheticBundle {
  DatasetBundle bundle;  // groundtruth objects, aggregated relations, votes
  std::vector<SyntheticScene> scenes;
  std::map<std::string, DepthMap> depth_maps;
  std::vector<OrderedPairLabel> truth;  // noiseless labels for bundle.pairs
  std::vector<ObjectInstance> detections;
  // image_id -> vector, object_id -> vector (objects and detections)
  std::map<std::string, std::vector<float>> image_features;
  std::map<std::string, std::vector<float>> object_features;
  std::vector<DifficultyReportRow> difficulty_report;

  const SyntheticScene& scene(const std::string& image_id) const {
    for (const auto& s : scenes) {
      if (s.image_id == image_id) return s;
    }
    throw ValidationError("no scene for image " + image_id);
  }
};

inline FilterConfig synthetic_filter(const SceneConfig& s) {
  FilterConfig f;
  f.min_area_frac = s.min_area_frac;
  f.max_area_frac = s.max_area_frac;
  f.pair_iou_max = s.pair_iou_max;
  return f;
}

inline SyntheticBundle generate_bundle(const GeneratorConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  SyntheticBundle out;
  out.bundle.provenance = Provenance::kSynthetic;
  const std::pair<Split, int> splits[] = {{Split::kTrain, cfg.train_images},
                                          {Split::kValidation, cfg.val_images},
                                          {Split::kTest, cfg.test_images}};
  std::map<std::string, std::size_t> object_index;
  for (const auto& [split, count] : splits) {
    for (int i = 0; i < count; ++i) {
      char id[32];
      std::snprintf(id, sizeof(id), "%s_%05d",
                    split == Split::kTrain ? "train"
                    : split == Split::kValidation ? "val" : "test",
                    i);
      SyntheticScene scene = generate_scene(cfg.scene, derive_seed(seed, id), id);
      out.bundle.images.push_back(scene_image_record(scene, split));
      for (auto& o : scene_objects(scene)) {
        object_index[o.object_id] = out.bundle.objects.size();
        out.bundle.objects.push_back(std::move(o));
      }
      DepthRenderOptions depth = cfg.depth;
      depth.camera_height = cfg.scene.camera_height;
      depth.seed = derive_seed(seed, "depth");
      out.depth_maps[scene.image_id] = render_depth_map(scene, depth);
      out.scenes.push_back(std::move(scene));
    }
  }

  const FilterConfig filter = synthetic_filter(cfg.scene);
  const SampledPairs train = sample_training_pairs(out.bundle, filter, derive_seed(seed, "sample"));
  SampledPairs eval_pairs;
  for (Split s : {Split::kValidation, Split::kTest}) {
    SampledPairs p = exhaustive_eval_pairs(out.bundle, filter, s);
    eval_pairs.within.insert(eval_pairs.within.end(), p.within.begin(), p.within.end());
    eval_pairs.across.insert(eval_pairs.across.end(), p.across.begin(), p.across.end());
  }
  std::vector<OrderedPairLabel> pairs;
  for (const auto& group : {train.within, train.across, eval_pairs.within, eval_pairs.across}) {
    pairs.insert(pairs.end(), group.begin(), group.end());
  }

  // Exact labels and what the raters see.
  std::map<std::string, const SyntheticScene*> scene_by_image;
  for (const auto& s : out.scenes) scene_by_image[s.image_id] = &s;
  auto object_of = [&](const std::string& image_id, const std::string& object_id)
      -> const BillboardObject& {
    const SyntheticScene& s = *scene_by_image.at(image_id);
    const std::string prefix = image_id + "_o";
    return s.objects.at(std::stoul(object_id.substr(prefix.size())));
  };
  std::vector<PairTruth> truths;
  for (const auto& p : pairs) {
    const BillboardObject& a = object_of(p.image_id_a, p.object_id_a);
    const BillboardObject& b = object_of(p.image_id_b, p.object_id_b);
    PairTruth t{p.pair_id, p.setting, a.representative_depth(), b.representative_depth(), {}};
    OrderedPairLabel truth = p;
    truth.label.depth = compare_depths(t.depth_a, t.depth_b, cfg.scene.same_depth_tau, p.setting);
    if (p.setting == Setting::kWithin) {
      t.occlusion = compare_occlusion(scene_by_image.at(p.image_id_a)->camera, a, b);
      truth.label.occlusion = t.occlusion;
    }
    truths.push_back(t);
    out.truth.push_back(std::move(truth));
  }

  const auto raters = cfg.raters(seed);
  std::map<std::string, Split> split_of;
  for (const auto& im : out.bundle.images) split_of[im.image_id] = im.split;
  std::int64_t clock = 1'600'000'000'000;
  for (std::size_t i = 0; i < truths.size(); ++i) {
    const PairTruth& t = truths[i];
    if (split_of.at(pairs[i].image_id_a) == Split::kTrain) {
      const auto& rater = raters[fnv1a64(t.pair_id) % raters.size()];
      out.bundle.votes.push_back(simulate_vote(t, rater, ++clock));
    } else {
      for (const auto& rater : raters) {
        out.bundle.votes.push_back(simulate_vote(t, rater, ++clock));
      }
    }
  }
  auto agg = aggregate_bundle(pairs, out.bundle.votes, [&](const OrderedPairLabel& p) {
    return split_of.at(p.image_id_a) == Split::kTrain ? 1 : cfg.rater_count;
  });
  if (!agg.exceptions.empty()) {
    throw std::logic_error("synthetic aggregation produced exceptions: " +
                           agg.exceptions.front().reason);
  }
  out.bundle.pairs = std::move(agg.relations);
  out.difficulty_report = std::move(agg.report);

  for (const auto& s : out.scenes) {
    DetectorProfile det = cfg.detector;
    det.seed = derive_seed(seed, "detector");
    std::vector<ObjectInstance> gt;
    for (const auto& o : out.bundle.objects) {
      if (o.image_id == s.image_id) gt.push_back(o);
    }
    for (auto& d : synthesize_detections(gt, s.image_id, cfg.scene.num_classes, det)) {
      out.detections.push_back(std::move(d));
    }
  }
  if (cfg.appearance_dim > 0) {
    const std::uint64_t fseed = derive_seed(seed, "appearance");
    for (const auto& im : out.bundle.images) {
      out.image_features[im.image_id] =
          synthesize_appearance(-1, cfg.appearance_dim, fseed, "image/" + im.image_id, 1.0);
    }
    for (const auto* list : {&out.bundle.objects, &out.detections}) {
      for (const auto& o : *list) {
        out.object_features[o.object_id] =
            synthesize_appearance(o.class_id, cfg.appearance_dim, fseed, o.object_id);
      }
    }
  }
  return out;
}

}  // namespace vrd25

#endif  // VRD25_SYNTHETIC_HPP_
