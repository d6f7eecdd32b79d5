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

// Rule-based predictors: class prior, size, location and depth rules.
//
// Every rule is evaluated once per unordered within-image pair and mirrored
// with flip(), so the output is symmetric by construction. Across-image
// pairs get no occlusion answer and the "no clear difference" band maps to
// UNSURE instead of SAME_DEPTH.

#ifndef VRD25_BASELINES_HPP_
#define VRD25_BASELINES_HPP_

#include <array>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <tuple>
#include <unordered_map>
#include <vector>

#include "vrd25/core.hpp"
#include "vrd25/dataset.hpp"
#include "vrd25/raster_io.hpp"
#include "vrd25/text_io.hpp"

namespace vrd25 {

struct RuleMargins {
  double delta_s = 0.0;
  double delta_l = 0.02;
  double delta_d = 0.02;
  double occlusion_overlap_threshold = 0.0;

  void validate() const {
    if (delta_s < 0 || delta_l < 0 || delta_d < 0 || occlusion_overlap_threshold < 0) {
      throw ValidationError("rule margins must be non-negative");
    }
  }

  static RuleMargins from_config(const KeyValueConfig& kv) {
    return from_config(kv, RuleMargins());
  }

  static RuleMargins from_config(const KeyValueConfig& kv, RuleMargins base) {
    kv.check_known({"delta_s", "delta_l", "delta_d", "occlusion_overlap_threshold"});
    base.delta_s = kv.get_double("delta_s", base.delta_s);
    base.delta_l = kv.get_double("delta_l", base.delta_l);
    base.delta_d = kv.get_double("delta_d", base.delta_d);
    base.occlusion_overlap_threshold =
        kv.get_double("occlusion_overlap_threshold", base.occlusion_overlap_threshold);
    base.validate();
    return base;
  }
};

enum class Rule { kClassPrior, kSize, kLocation, kDepth };

inline const char* name(Rule r) {
  static constexpr const char* kNames[] = {"class_prior", "size", "location", "depth"};
  return kNames[static_cast<int>(r)];
}

inline Rule rule_from_name(std::string_view s) {
  for (Rule r : {Rule::kClassPrior, Rule::kSize, Rule::kLocation, Rule::kDepth}) {
    if (s == name(r)) return r;
  }
  throw ValidationError("unknown rule '" + std::string(s) +
                        "' (expected class_prior, size, location or depth)");
}

// Y coordinate used by the location rule.
enum class LocationAnchor { kBottom, kCenter };

struct RuleOptions {
  RuleMargins margins;
  LocationAnchor anchor = LocationAnchor::kBottom;
  // Depth maps from inverse-depth estimators store larger values for nearer
  // surfaces; set this for such sources.
  bool depth_larger_is_closer = false;
};

// Three-way comparison shared by the geometric rules. `a_lead` is the signed
// evidence that A is closer; the margin is strict.
inline DepthPredicate decide(double a_lead, double margin, Setting setting) {
  if (a_lead > margin) return DepthPredicate::kACloser;
  if (-a_lead > margin) return DepthPredicate::kBCloser;
  return setting == Setting::kWithin ? DepthPredicate::kSameDepth
                                     : DepthPredicate::kUnsure;
}

// Closer object occludes the farther one when the boxes overlap by more than
// the threshold.
inline std::optional<OcclusionPredicate> coupled_occlusion(const Box& a, const Box& b,
                                                           DepthPredicate depth,
                                                           double threshold,
                                                           Setting setting) {
  if (setting == Setting::kAcross) return std::nullopt;
  if (overlap(a, b).area() > threshold) {
    if (depth == DepthPredicate::kACloser) return OcclusionPredicate::kAOccludesB;
    if (depth == DepthPredicate::kBCloser) return OcclusionPredicate::kBOccludesA;
  }
  return OcclusionPredicate::kNoOcclusion;
}

inline PairPredicates rule_size(const Box& a, const Box& b, const RuleMargins& m,
                                Setting setting) {
  PairPredicates p;
  p.depth = decide(a.area() - b.area(), m.delta_s, setting);
  p.occlusion = coupled_occlusion(a, b, *p.depth, m.occlusion_overlap_threshold, setting);
  return p;
}

inline double anchor_y(const Box& b, LocationAnchor anchor) {
  return anchor == LocationAnchor::kBottom ? b.ymax() : b.center_y();
}

inline PairPredicates rule_location(const Box& a, const Box& b, const RuleMargins& m,
                                    Setting setting,
                                    LocationAnchor anchor = LocationAnchor::kBottom) {
  PairPredicates p;
  p.depth = decide(anchor_y(a, anchor) - anchor_y(b, anchor), m.delta_l, setting);
  p.occlusion = coupled_occlusion(a, b, *p.depth, m.occlusion_overlap_threshold, setting);
  return p;
}

// `depth_a` / `depth_b` are mean map values inside each box.
inline PairPredicates rule_depth(const Box& a, const Box& b, double depth_a, double depth_b,
                                 const RuleMargins& m, Setting setting,
                                 bool larger_is_closer = false) {
  PairPredicates p;
  const double lead = larger_is_closer ? depth_a - depth_b : depth_b - depth_a;
  p.depth = decide(lead, m.delta_d, setting);
  p.occlusion = coupled_occlusion(a, b, *p.depth, m.occlusion_overlap_threshold, setting);
  return p;
}

// ---------------------------------------------------------------------------
// Class prior.

class ClassPriorTable {
 public:
  struct Entry {
    std::array<long, 4> depth{};
    std::array<long, 4> occlusion{};
  };

  // Counts one labeled ordered pair in both orientations.
  void add(Setting setting, int class_a, int class_b, const PairPredicates& label) {
    const PairPredicates flipped = flip(label);
    count(table_[key(setting, class_a, class_b)], label);
    count(table_[key(setting, class_b, class_a)], flipped);
  }

  PairPredicates lookup(Setting setting, int class_a, int class_b) const {
    PairPredicates out;
    out.depth = DepthPredicate::kUnsure;
    if (setting == Setting::kWithin) out.occlusion = OcclusionPredicate::kNoOcclusion;
    const auto it = table_.find(key(setting, class_a, class_b));
    if (it == table_.end()) return out;
    if (const int d = mode(it->second.depth); d >= 0) out.depth = depth_from_code(d);
    if (setting == Setting::kWithin) {
      if (const int o = mode(it->second.occlusion); o >= 0) {
        out.occlusion = occlusion_from_code(o);
      }
    }
    return out;
  }

  bool empty() const { return table_.empty(); }
  std::size_t size() const { return table_.size(); }

 private:
  using Key = std::tuple<Setting, int, int>;

  static Key key(Setting s, int a, int b) { return {s, a, b}; }

  static void count(Entry& e, const PairPredicates& label) {
    if (label.depth) ++e.depth[code(*label.depth)];
    if (label.occlusion) ++e.occlusion[code(*label.occlusion)];
  }

  // Modal code, lowest code on ties; -1 when nothing was counted.
  static int mode(const std::array<long, 4>& h) {
    int best = -1;
    for (int c = 0; c < 4; ++c) {
      if (h[c] > 0 && (best < 0 || h[c] > h[best])) best = c;
    }
    return best;
  }

  std::map<Key, Entry> table_;
};

// Uses training-split pairs only; pairs whose endpoints are unknown objects
// are an integrity error.
inline ClassPriorTable build_class_prior(const DatasetBundle& bundle) {
  std::unordered_map<std::string, const ObjectInstance*> objects;
  for (const auto& o : bundle.objects) objects[o.object_id] = &o;
  std::unordered_map<std::string, Split> split_of;
  for (const auto& im : bundle.images) split_of[im.image_id] = im.split;
  ClassPriorTable table;
  for (const auto& p : bundle.pairs) {
    const auto ia = split_of.find(p.image_id_a), ib = split_of.find(p.image_id_b);
    if (ia == split_of.end() || ib == split_of.end() || ia->second != Split::kTrain ||
        ib->second != Split::kTrain) {
      continue;
    }
    const auto a = objects.find(p.object_id_a), b = objects.find(p.object_id_b);
    if (a == objects.end() || b == objects.end()) {
      throw IntegrityError("class prior: pair " + p.pair_id + " references unknown objects");
    }
    table.add(p.setting, a->second->class_id, b->second->class_id, p.label);
  }
  return table;
}

// ---------------------------------------------------------------------------
// Batch prediction.

struct SkippedPair {
  std::string pair_id;
  std::string reason;
};

struct RulePredictions {
  PredictionSet set;
  std::vector<SkippedPair> skipped;
};

struct RuleInputs {
  const ClassPriorTable* prior = nullptr;                     // class_prior
  const std::map<std::string, DepthMap>* depth_maps = nullptr;  // depth
};

inline Prediction to_prediction(const OrderedPairLabel& slot, const PairPredicates& p) {
  Prediction out;
  out.setting = slot.setting;
  out.image_id_a = slot.image_id_a;
  out.object_id_a = slot.object_id_a;
  out.image_id_b = slot.image_id_b;
  out.object_id_b = slot.object_id_b;
  out.depth = p.depth.value_or(DepthPredicate::kUnsure);
  out.occlusion = slot.setting == Setting::kWithin ? p.occlusion : std::nullopt;
  return out;
}

namespace detail {

class RuleEvaluator {
 public:
  RuleEvaluator(Rule rule, const RuleOptions& opt, const RuleInputs& in)
      : rule_(rule), opt_(opt), in_(in) {
    opt.margins.validate();
    if (rule == Rule::kClassPrior && !in.prior) {
      throw ValidationError("class_prior rule needs a class prior table");
    }
    if (rule == Rule::kDepth && !in.depth_maps) {
      throw ValidationError("depth rule needs depth maps");
    }
  }

  // Empty on a per-pair failure, with the reason in `why`.
  std::optional<PairPredicates> operator()(const ObjectInstance& a, const ObjectInstance& b,
                                           Setting s, std::string& why) {
    switch (rule_) {
      case Rule::kClassPrior:
        return in_.prior->lookup(s, a.class_id, b.class_id);
      case Rule::kSize:
        return rule_size(a.box, b.box, opt_.margins, s);
      case Rule::kLocation:
        return rule_location(a.box, b.box, opt_.margins, s, opt_.anchor);
      case Rule::kDepth: {
        const auto da = mean_depth(a, why), db = mean_depth(b, why);
        if (!da || !db) return std::nullopt;
        return rule_depth(a.box, b.box, *da, *db, opt_.margins, s,
                          opt_.depth_larger_is_closer);
      }
    }
    return std::nullopt;
  }

 private:
  std::optional<double> mean_depth(const ObjectInstance& o, std::string& why) {
    if (const auto it = cache_.find(o.object_id); it != cache_.end()) return it->second;
    const auto map = in_.depth_maps->find(o.image_id);
    if (map == in_.depth_maps->end()) {
      why = "missing depth map for image " + o.image_id;
      return std::nullopt;
    }
    const double d = box_depth_stats(map->second, o.box).mean;
    cache_[o.object_id] = d;
    return d;
  }

  Rule rule_;
  RuleOptions opt_;
  RuleInputs in_;
  std::unordered_map<std::string, double> cache_;
};

}  // namespace detail

// Labels every candidate pair of `objects` (see candidate_pairs). Within-image
// pairs are evaluated at their first occurrence and the reverse order gets
// the flipped answer.
inline RulePredictions predict_with_rule(Rule rule, const std::vector<ImageRecord>& images,
                                         const std::vector<ObjectInstance>& objects,
                                         const FilterConfig& filter, Split split,
                                         const RuleOptions& options = {},
                                         const RuleInputs& inputs = {}) {
  detail::RuleEvaluator eval(rule, options, inputs);
  std::unordered_map<std::string, const ObjectInstance*> by_id;
  for (const auto& o : objects) by_id[o.object_id] = &o;
  const SampledPairs slots = candidate_pairs(images, objects, filter, split);

  RulePredictions out;
  out.set.model_name = std::string("rule_") + name(rule);
  out.set.objects = objects;
  // First-seen within-image pairs: label, or the skip reason.
  std::map<std::string, std::pair<std::optional<PairPredicates>, std::string>> done;
  for (const auto* group : {&slots.within, &slots.across}) {
    for (const auto& slot : *group) {
      const ObjectInstance& a = *by_id.at(slot.object_id_a);
      const ObjectInstance& b = *by_id.at(slot.object_id_b);
      std::optional<PairPredicates> label;
      if (slot.setting == Setting::kWithin) {
        const auto mirror = done.find(pair_id_for(b.object_id, a.object_id));
        std::string why;
        if (mirror != done.end()) {
          if (mirror->second.first) label = flip(*mirror->second.first);
          why = mirror->second.second;
        } else {
          label = eval(a, b, slot.setting, why);
          done[slot.pair_id] = {label, why};
        }
        if (!label) {
          out.skipped.push_back({slot.pair_id, why});
          continue;
        }
      } else {
        std::string why;
        label = eval(a, b, slot.setting, why);
        if (!label) {
          out.skipped.push_back({slot.pair_id, why});
          continue;
        }
      }
      out.set.predictions.push_back(to_prediction(slot, *label));
    }
  }
  return out;
}

}  // namespace vrd25

#endif  // VRD25_BASELINES_HPP_
