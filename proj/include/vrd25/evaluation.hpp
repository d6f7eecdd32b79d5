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

// Triplet evaluation: class-agnostic IoU matching of predicted objects to
// groundtruth, precision/recall/F1 per task (within-image depth, occlusion,
// across-image depth), stratified tables, consistency, label bias and the
// three-way error decomposition.
//
// A predicted triplet <a, p, b> is correct when a and b are matched to
// groundtruth objects a', b' and the groundtruth relation (a', b') carries p.
// Groundtruth relations without a label for a task (no majority) drop out of
// that task entirely, together with predictions matched onto them.

#ifndef VRD25_EVALUATION_HPP_
#define VRD25_EVALUATION_HPP_

#include <algorithm>
#include <array>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <tuple>
#include <unordered_map>
#include <vector>

#include "vrd25/core.hpp"
#include "vrd25/dataset.hpp"
#include "vrd25/text_io.hpp"

namespace vrd25 {

struct MatchingConfig {
  double iou_threshold = 0.5;
  bool leak_groundtruth_count = true;
  // When false, groundtruth UNSURE depth labels (INFEASIBLE pairs) leave the
  // depth tasks the same way unlabeled pairs do.
  bool score_unsure_groundtruth = true;

  void validate() const {
    if (!(iou_threshold > 0.0 && iou_threshold <= 1.0)) {
      throw ValidationError("matching: iou_threshold must be in (0, 1]");
    }
  }

  static MatchingConfig from_config(const KeyValueConfig& kv) {
    kv.check_known({"iou_threshold", "leak_groundtruth_count", "score_unsure_groundtruth"});
    MatchingConfig c;
    c.iou_threshold = kv.get_double("iou_threshold", c.iou_threshold);
    c.leak_groundtruth_count = kv.get_bool("leak_groundtruth_count", c.leak_groundtruth_count);
    c.score_unsure_groundtruth =
        kv.get_bool("score_unsure_groundtruth", c.score_unsure_groundtruth);
    c.validate();
    return c;
  }
};

// ---------------------------------------------------------------------------
// Detections.

// Filters one image's detections and, when leaking the groundtruth count,
// keeps the `groundtruth_count` highest-scoring survivors (ties: lower id).
inline std::vector<ObjectInstance> trim_detections(const std::vector<ObjectInstance>& detections,
                                                   std::size_t groundtruth_count,
                                                   const FilterConfig& filter,
                                                   const MatchingConfig& cfg) {
  std::vector<ObjectInstance> kept = filter_objects(detections, filter);
  if (!cfg.leak_groundtruth_count) return kept;
  for (const auto& d : kept) {
    if (!d.detector_score) {
      throw ValidationError("detection " + d.object_id +
                            " has no detector_score, needed to trim to the groundtruth count");
    }
  }
  std::stable_sort(kept.begin(), kept.end(), [](const auto& x, const auto& y) {
    if (*x.detector_score != *y.detector_score) return *x.detector_score > *y.detector_score;
    return x.object_id < y.object_id;
  });
  if (kept.size() > groundtruth_count) kept.resize(groundtruth_count);
  return kept;
}

// Applies trim_detections image by image; `groundtruth` is the filtered
// groundtruth object list.
inline std::vector<ObjectInstance> prepare_detections(
    const std::vector<ObjectInstance>& detections,
    const std::vector<ObjectInstance>& groundtruth, const FilterConfig& filter,
    const MatchingConfig& cfg) {
  std::map<std::string, std::vector<ObjectInstance>> by_image;
  std::map<std::string, std::size_t> gt_count;
  for (const auto& d : detections) by_image[d.image_id].push_back(d);
  for (const auto& g : groundtruth) ++gt_count[g.image_id];
  std::vector<ObjectInstance> out;
  for (const auto& [image, dets] : by_image) {
    const auto it = gt_count.find(image);
    for (auto& d : trim_detections(dets, it == gt_count.end() ? 0 : it->second, filter, cfg)) {
      out.push_back(std::move(d));
    }
  }
  return out;
}

// Greedy one-to-one matching of one image's detections to its groundtruth:
// candidate pairs with IoU strictly above the threshold, taken by
// descending IoU, then ascending groundtruth id, then ascending detection
// id. Returns detection id -> groundtruth id.
inline std::map<std::string, std::string> match_detections(
    const std::vector<ObjectInstance>& detections,
    const std::vector<ObjectInstance>& groundtruth, const MatchingConfig& cfg) {
  cfg.validate();
  std::vector<std::tuple<double, const std::string*, const std::string*>> cand;
  for (const auto& d : detections) {
    for (const auto& g : groundtruth) {
      const double v = iou(d.box, g.box);
      if (v > cfg.iou_threshold) cand.emplace_back(v, &g.object_id, &d.object_id);
    }
  }
  std::sort(cand.begin(), cand.end(), [](const auto& x, const auto& y) {
    if (std::get<0>(x) != std::get<0>(y)) return std::get<0>(x) > std::get<0>(y);
    if (*std::get<1>(x) != *std::get<1>(y)) return *std::get<1>(x) < *std::get<1>(y);
    return *std::get<2>(x) < *std::get<2>(y);
  });
  std::map<std::string, std::string> out;
  std::set<std::string> used;
  for (const auto& [v, g, d] : cand) {
    if (out.count(*d) || used.count(*g)) continue;
    out[*d] = *g;
    used.insert(*g);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Scoring.

enum class Task { kWithinDepth = 0, kOcclusion = 1, kAcrossDepth = 2 };
inline constexpr std::array<Task, 3> kAllTasks = {Task::kWithinDepth, Task::kOcclusion,
                                                  Task::kAcrossDepth};

inline const char* name(Task t) {
  static constexpr const char* kNames[] = {"within_depth", "occlusion", "across_depth"};
  return kNames[static_cast<int>(t)];
}

inline const char* label_name(Task t, int label) {
  return t == Task::kOcclusion ? name(occlusion_from_code(label))
                               : name(depth_from_code(label));
}

struct Counts {
  long tp = 0;
  long predicted = 0;
  long groundtruth = 0;

  double precision() const { return predicted ? static_cast<double>(tp) / predicted : 0.0; }
  double recall() const { return groundtruth ? static_cast<double>(tp) / groundtruth : 0.0; }
  double f1() const {
    const double p = precision(), r = recall();
    return p + r > 0 ? 2 * p * r / (p + r) : 0.0;
  }
  Counts& operator+=(const Counts& o) {
    tp += o.tp;
    predicted += o.predicted;
    groundtruth += o.groundtruth;
    return *this;
  }
  friend bool operator==(const Counts&, const Counts&) = default;
};

// Groundtruth side of one evaluation split.
struct EvalContext {
  std::vector<ImageRecord> images;
  std::vector<ObjectInstance> groundtruth;  // filtered
  std::vector<OrderedPairLabel> relations;  // pairs of the split
  FilterConfig filter;
  Split split = Split::kTest;
  MatchingConfig matching;
};

inline EvalContext make_eval_context(const DatasetBundle& bundle, const FilterConfig& filter,
                                     Split split, const MatchingConfig& matching = {}) {
  EvalContext ctx;
  ctx.images = bundle.images;
  ctx.filter = filter;
  ctx.split = split;
  ctx.matching = matching;
  std::set<std::string> in_split;
  for (const auto& [image, objs] : bundle.objects_by_image()) {
    const ImageRecord* im = bundle.find_image(image);
    if (!im || im->split != split) continue;
    in_split.insert(image);
    for (auto& o : filter_objects(objs, filter)) ctx.groundtruth.push_back(std::move(o));
  }
  for (const auto& p : bundle.pairs) {
    if (in_split.count(p.image_id_a) && in_split.count(p.image_id_b)) ctx.relations.push_back(p);
  }
  return ctx;
}

// One scored prediction or groundtruth entry, kept so every table is a
// regrouping of the same decisions.
struct ScoredPrediction {
  Task task;
  int label;
  bool tp;
  const OrderedPairLabel* gt;  // matched groundtruth relation, if any
  const ObjectInstance* a;
  const ObjectInstance* b;
};

struct GroundtruthEntry {
  Task task;
  int label;
  const OrderedPairLabel* pair;
  const ObjectInstance* a;
  const ObjectInstance* b;
};

struct ScoreDetail {
  std::vector<ScoredPrediction> predictions;
  std::vector<GroundtruthEntry> groundtruth;
  // Storage the pointers above refer to.
  std::vector<ObjectInstance> predicted_objects;
  std::vector<ObjectInstance> groundtruth_objects;
  std::vector<OrderedPairLabel> relations;
  long dropped_inadmissible = 0;

  ScoreDetail() = default;
  ScoreDetail(const ScoreDetail&) = delete;
  ScoreDetail& operator=(const ScoreDetail&) = delete;
  ScoreDetail(ScoreDetail&&) = default;
  ScoreDetail& operator=(ScoreDetail&&) = default;
};

namespace detail {

inline std::optional<int> task_label(Task t, const PairPredicates& p,
                                     const MatchingConfig& cfg) {
  if (t == Task::kOcclusion) {
    if (!p.occlusion) return std::nullopt;
    return code(*p.occlusion);
  }
  if (!p.depth) return std::nullopt;
  if (!cfg.score_unsure_groundtruth && *p.depth == DepthPredicate::kUnsure) return std::nullopt;
  return code(*p.depth);
}

}  // namespace detail

inline ScoreDetail score_detail(const PredictionSet& predictions, const EvalContext& ctx) {
  ctx.matching.validate();
  ScoreDetail out;
  out.predicted_objects = predictions.objects;
  out.groundtruth_objects = ctx.groundtruth;
  out.relations = ctx.relations;

  std::unordered_map<std::string, const ObjectInstance*> pred_obj, gt_obj;
  for (const auto& o : out.predicted_objects) {
    if (!pred_obj.emplace(o.object_id, &o).second) {
      throw ValidationError("duplicate predicted object id " + o.object_id);
    }
  }
  for (const auto& o : out.groundtruth_objects) gt_obj[o.object_id] = &o;

  // Per-image matching.
  std::map<std::string, std::vector<ObjectInstance>> dets_by_image, gt_by_image;
  for (const auto& o : out.predicted_objects) dets_by_image[o.image_id].push_back(o);
  for (const auto& o : out.groundtruth_objects) gt_by_image[o.image_id].push_back(o);
  std::unordered_map<std::string, std::string> match;
  for (const auto& [image, dets] : dets_by_image) {
    const auto g = gt_by_image.find(image);
    if (g == gt_by_image.end()) continue;
    for (auto& [d, gid] : match_detections(dets, g->second, ctx.matching)) match[d] = gid;
  }

  std::map<std::pair<std::string, std::string>, const OrderedPairLabel*> gt_pair;
  for (const auto& p : out.relations) gt_pair[{p.object_id_a, p.object_id_b}] = &p;

  for (const auto& p : out.relations) {
    const auto a = gt_obj.find(p.object_id_a), b = gt_obj.find(p.object_id_b);
    if (a == gt_obj.end() || b == gt_obj.end()) continue;  // filtered out
    for (Task t : kAllTasks) {
      if ((t == Task::kAcrossDepth) != (p.setting == Setting::kAcross)) continue;
      if (const auto label = detail::task_label(t, p.label, ctx.matching)) {
        out.groundtruth.push_back({t, *label, &p, a->second, b->second});
      }
    }
  }

  std::set<std::pair<std::string, std::string>> seen;
  for (const auto& pr : predictions.predictions) {
    const auto a = pred_obj.find(pr.object_id_a), b = pred_obj.find(pr.object_id_b);
    if (a == pred_obj.end() || b == pred_obj.end()) {
      throw ValidationError("prediction " + pair_id_for(pr.object_id_a, pr.object_id_b) +
                            " refers to objects outside the prediction object set");
    }
    if (!seen.insert({pr.object_id_a, pr.object_id_b}).second) {
      throw ValidationError("duplicate prediction for " +
                            pair_id_for(pr.object_id_a, pr.object_id_b));
    }
    if (pr.setting == Setting::kWithin &&
        (a->second->image_id != b->second->image_id ||
         !pair_admissible(*a->second, *b->second, ctx.filter))) {
      ++out.dropped_inadmissible;
      continue;
    }
    const OrderedPairLabel* gt = nullptr;
    const auto ma = match.find(pr.object_id_a), mb = match.find(pr.object_id_b);
    if (ma != match.end() && mb != match.end()) {
      const auto it = gt_pair.find({ma->second, mb->second});
      if (it != gt_pair.end() && it->second->setting == pr.setting &&
          gt_obj.count(ma->second) && gt_obj.count(mb->second)) {
        gt = it->second;
      }
    }
    PairPredicates predicted{pr.depth, pr.occlusion};
    for (Task t : kAllTasks) {
      if ((t == Task::kAcrossDepth) != (pr.setting == Setting::kAcross)) continue;
      if (t == Task::kOcclusion && !pr.occlusion) continue;
      const int label = t == Task::kOcclusion ? code(*pr.occlusion) : code(pr.depth);
      bool tp = false;
      if (gt) {
        const auto truth = detail::task_label(t, gt->label, ctx.matching);
        if (!truth) continue;  // matched onto an unlabeled relation
        tp = *truth == label;
      }
      out.predictions.push_back({t, label, tp, gt, a->second, b->second});
    }
  }
  return out;
}

// Groups predictions and groundtruth by a stratum key. A prediction key of
// nullopt leaves it out of the table.
template <typename PredKey, typename GtKey>
std::map<std::string, std::array<Counts, 3>> group_counts(const ScoreDetail& d,
                                                          PredKey pred_key, GtKey gt_key) {
  std::map<std::string, std::array<Counts, 3>> out;
  for (const auto& p : d.predictions) {
    const std::optional<std::string> k = pred_key(p);
    if (!k) continue;
    auto& c = out[*k][static_cast<int>(p.task)];
    ++c.predicted;
    c.tp += p.tp;
  }
  for (const auto& g : d.groundtruth) {
    const std::optional<std::string> k = gt_key(g);
    if (!k) continue;
    ++out[*k][static_cast<int>(g.task)].groundtruth;
  }
  return out;
}

struct MetricsReport {
  std::array<Counts, 3> tasks{};
  std::array<std::array<Counts, 4>, 3> per_predicate{};
  std::array<std::array<Counts, 5>, 3> per_difficulty{};
  long dropped_inadmissible = 0;

  const Counts& operator[](Task t) const { return tasks[static_cast<int>(t)]; }
  double average_f1() const {
    return (tasks[0].f1() + tasks[1].f1() + tasks[2].f1()) / 3.0;
  }
};

inline MetricsReport summarize(const ScoreDetail& d) {
  MetricsReport r;
  r.dropped_inadmissible = d.dropped_inadmissible;
  for (const auto& p : d.predictions) {
    const int t = static_cast<int>(p.task);
    ++r.tasks[t].predicted;
    r.tasks[t].tp += p.tp;
    ++r.per_predicate[t][p.label].predicted;
    // A true positive has equal predicted and groundtruth labels.
    r.per_predicate[t][p.label].tp += p.tp;
    if (p.gt) {
      const int diff = static_cast<int>(p.gt->difficulty.value_or(Difficulty::kEasy));
      ++r.per_difficulty[t][diff].predicted;
      r.per_difficulty[t][diff].tp += p.tp;
    }
  }
  for (const auto& g : d.groundtruth) {
    const int t = static_cast<int>(g.task);
    ++r.tasks[t].groundtruth;
    ++r.per_predicate[t][g.label].groundtruth;
    ++r.per_difficulty[t][static_cast<int>(g.pair->difficulty.value_or(Difficulty::kEasy))]
          .groundtruth;
  }
  return r;
}

inline MetricsReport score(const PredictionSet& predictions, const EvalContext& ctx) {
  return summarize(score_detail(predictions, ctx));
}

// ---------------------------------------------------------------------------
// Stratified tables.

enum class Stratum {
  kDifficulty,
  kPredicate,
  kSize,
  kVertical,
  kHorizontal,
  kClass,
  kClassPair
};

inline const char* name(Stratum s) {
  static constexpr const char* kNames[] = {"difficulty", "predicate", "size",      "vertical",
                                           "horizontal", "class",     "class_pair"};
  return kNames[static_cast<int>(s)];
}

inline Stratum stratum_from_name(std::string_view s) {
  for (int i = 0; i <= static_cast<int>(Stratum::kClassPair); ++i) {
    if (s == name(static_cast<Stratum>(i))) return static_cast<Stratum>(i);
  }
  throw ValidationError("unknown stratum '" + std::string(s) + "'");
}

struct StratumRow {
  Task task;
  std::string key;
  Counts counts;
  std::optional<double> f1;  // null when the stratum has no groundtruth
};

struct StrataOptions {
  std::vector<double> bin_edges = {0.0, 0.2, 0.4, 0.6, 0.8, 1.0};
  int class_vocab_size = 0;  // class strata list every class below this
};

namespace detail {

inline int bin_of(double v, const std::vector<double>& edges) {
  for (std::size_t i = 1; i + 1 < edges.size(); ++i) {
    if (v < edges[i]) return static_cast<int>(i - 1);
  }
  return static_cast<int>(edges.size()) - 2;
}

inline double stratum_value(Stratum s, const Box& b) {
  switch (s) {
    case Stratum::kSize: return b.area();
    case Stratum::kVertical: return b.center_y();
    default: return b.center_x();
  }
}

}  // namespace detail

// Difficulty, predicate, class and class-pair strata use the matched
// groundtruth relation (predictions without one are left out); geometric
// strata bin both endpoints, (bin of A, bin of B), from the matched
// groundtruth boxes when available and the predicted boxes otherwise.
inline std::vector<StratumRow> stratified_report(const ScoreDetail& d, Stratum s,
                                                 const StrataOptions& opt = {}) {
  if (opt.bin_edges.size() < 2 ||
      !std::is_sorted(opt.bin_edges.begin(), opt.bin_edges.end())) {
    throw ValidationError("strata: need at least two ascending bin edges");
  }
  std::unordered_map<std::string, const ObjectInstance*> gt_obj;
  for (const auto& o : d.groundtruth_objects) gt_obj[o.object_id] = &o;
  auto endpoints = [&](const OrderedPairLabel* gt, const ObjectInstance* a,
                       const ObjectInstance* b) {
    if (gt) return std::pair{gt_obj.at(gt->object_id_a), gt_obj.at(gt->object_id_b)};
    return std::pair{a, b};
  };
  auto key_of = [&](Task t, int label, const OrderedPairLabel* gt, const ObjectInstance* a,
                    const ObjectInstance* b) -> std::optional<std::string> {
    switch (s) {
      case Stratum::kDifficulty:
        if (!gt) return std::nullopt;
        return std::string(name(gt->difficulty.value_or(Difficulty::kEasy)));
      case Stratum::kPredicate:
        return std::string(label_name(t, label));
      case Stratum::kClass:
      case Stratum::kClassPair: {
        if (!gt) return std::nullopt;
        const auto [ga, gb] = endpoints(gt, a, b);
        if (s == Stratum::kClass) return std::to_string(ga->class_id);
        return std::to_string(ga->class_id) + "-" + std::to_string(gb->class_id);
      }
      default: {
        const auto [ea, eb] = endpoints(gt, a, b);
        return std::to_string(detail::bin_of(detail::stratum_value(s, ea->box), opt.bin_edges)) +
               "x" +
               std::to_string(detail::bin_of(detail::stratum_value(s, eb->box), opt.bin_edges));
      }
    }
  };
  auto counts = group_counts(
      d, [&](const ScoredPrediction& p) { return key_of(p.task, p.label, p.gt, p.a, p.b); },
      [&](const GroundtruthEntry& g) { return key_of(g.task, g.label, g.pair, g.a, g.b); });

  // Strata that exist in principle are listed even when empty.
  std::vector<std::string> keys;
  switch (s) {
    case Stratum::kDifficulty:
      for (Difficulty x : kAllDifficulty) keys.push_back(name(x));
      break;
    case Stratum::kPredicate:
      break;  // handled per task below
    case Stratum::kClass:
      for (int c = 0; c < opt.class_vocab_size; ++c) keys.push_back(std::to_string(c));
      break;
    case Stratum::kClassPair:
      break;
    default: {
      const int bins = static_cast<int>(opt.bin_edges.size()) - 1;
      for (int i = 0; i < bins; ++i) {
        for (int j = 0; j < bins; ++j) keys.push_back(std::to_string(i) + "x" + std::to_string(j));
      }
    }
  }
  for (const auto& [k, v] : counts) {
    if (std::find(keys.begin(), keys.end(), k) == keys.end()) keys.push_back(k);
  }
  if (s != Stratum::kDifficulty && s != Stratum::kPredicate) std::sort(keys.begin(), keys.end());

  std::vector<StratumRow> rows;
  for (Task t : kAllTasks) {
    std::vector<std::string> task_keys = keys;
    if (s == Stratum::kPredicate) {
      task_keys.clear();
      for (int l = 0; l < 4; ++l) {
        if (t == Task::kAcrossDepth && l == code(DepthPredicate::kSameDepth)) continue;
        task_keys.push_back(label_name(t, l));
      }
    }
    for (const auto& k : task_keys) {
      StratumRow row{t, k, {}, std::nullopt};
      if (const auto it = counts.find(k); it != counts.end()) {
        row.counts = it->second[static_cast<int>(t)];
      }
      if (row.counts.groundtruth > 0) row.f1 = row.counts.f1();
      rows.push_back(std::move(row));
    }
  }
  return rows;
}

// ---------------------------------------------------------------------------
// Consistency.

struct ConsistencyReport {
  long depth_pairs = 0;
  long depth_symmetry_violations = 0;
  long occlusion_pairs = 0;
  long occlusion_symmetry_violations = 0;
  long transitivity_triples = 0;
  long transitivity_violations = 0;

  static double rate(long v, long n) { return n ? static_cast<double>(v) / n : 0.0; }
  double depth_symmetry_rate() const { return rate(depth_symmetry_violations, depth_pairs); }
  double occlusion_symmetry_rate() const {
    return rate(occlusion_symmetry_violations, occlusion_pairs);
  }
  double transitivity_rate() const {
    return rate(transitivity_violations, transitivity_triples);
  }
};

// Within-image predictions only. Unordered pairs with a single predicted
// order are not counted for symmetry. A qualifying triple whose a->c
// prediction is missing counts as a violation.
inline ConsistencyReport consistency_report(const PredictionSet& set) {
  std::map<std::pair<std::string, std::string>, const Prediction*> index;
  std::map<std::string, std::set<std::string>> objects_by_image;
  for (const auto& p : set.predictions) {
    if (p.setting != Setting::kWithin) continue;
    index[{p.object_id_a, p.object_id_b}] = &p;
    objects_by_image[p.image_id_a].insert(p.object_id_a);
    objects_by_image[p.image_id_a].insert(p.object_id_b);
  }
  ConsistencyReport r;
  for (const auto& [key, p] : index) {
    if (!(key.first < key.second)) continue;
    const auto rev = index.find({key.second, key.first});
    if (rev == index.end()) continue;
    ++r.depth_pairs;
    r.depth_symmetry_violations += rev->second->depth != flip_depth(p->depth);
    if (p->occlusion && rev->second->occlusion) {
      ++r.occlusion_pairs;
      r.occlusion_symmetry_violations += *rev->second->occlusion != flip_occlusion(*p->occlusion);
    }
  }
  auto leq = [&](const std::string& x, const std::string& y) {
    const auto it = index.find({x, y});
    return it != index.end() && (it->second->depth == DepthPredicate::kACloser ||
                                 it->second->depth == DepthPredicate::kSameDepth);
  };
  for (const auto& [image, ids] : objects_by_image) {
    const std::vector<std::string> v(ids.begin(), ids.end());
    for (const auto& a : v) {
      for (const auto& b : v) {
        if (a == b || !leq(a, b)) continue;
        for (const auto& c : v) {
          if (c == a || c == b || !leq(b, c)) continue;
          ++r.transitivity_triples;
          r.transitivity_violations += !leq(a, c);
        }
      }
    }
  }
  return r;
}

// ---------------------------------------------------------------------------
// Label bias.

struct BiasRow {
  std::string key;  // class id, or "a-b" for class pairs
  Task task;        // kWithinDepth stands for depth in both settings
  std::array<long, 4> counts{};
  long total() const { return counts[0] + counts[1] + counts[2] + counts[3]; }
  double fraction(int label) const {
    return total() ? static_cast<double>(counts[label]) / total() : 0.0;
  }
};

struct BiasReport {
  std::vector<BiasRow> by_class;
  std::vector<BiasRow> by_class_pair;
  // (task, label) -> top-k class keys by fraction.
  std::map<std::pair<Task, int>, std::vector<std::string>> top_classes;
  std::map<std::pair<Task, int>, std::vector<std::string>> top_class_pairs;
};

// Each relation is counted as given and mirrored, so a class's row describes
// it in the A position. Depth rows pool both settings; occlusion rows use
// within-image relations.
inline BiasReport bias_report(const std::vector<OrderedPairLabel>& relations,
                              const std::vector<ObjectInstance>& objects, int top_k = 6) {
  std::unordered_map<std::string, int> cls;
  for (const auto& o : objects) cls[o.object_id] = o.class_id;
  std::map<std::pair<std::string, Task>, BiasRow> classes, pairs;
  auto add = [&](std::map<std::pair<std::string, Task>, BiasRow>& m, const std::string& key,
                 Task t, int label) {
    auto& row = m[{key, t}];
    row.key = key;
    row.task = t;
    ++row.counts[label];
  };
  for (const auto& p : relations) {
    const auto a = cls.find(p.object_id_a), b = cls.find(p.object_id_b);
    if (a == cls.end() || b == cls.end()) {
      throw IntegrityError("bias report: relation " + p.pair_id + " references unknown objects");
    }
    const PairPredicates both[2] = {p.label, flip(p.label)};
    const int ends[2][2] = {{a->second, b->second}, {b->second, a->second}};
    for (int o = 0; o < 2; ++o) {
      const std::string ck = std::to_string(ends[o][0]);
      const std::string pk = ck + "-" + std::to_string(ends[o][1]);
      if (both[o].depth) {
        add(classes, ck, Task::kWithinDepth, code(*both[o].depth));
        add(pairs, pk, Task::kWithinDepth, code(*both[o].depth));
      }
      if (p.setting == Setting::kWithin && both[o].occlusion) {
        add(classes, ck, Task::kOcclusion, code(*both[o].occlusion));
        add(pairs, pk, Task::kOcclusion, code(*both[o].occlusion));
      }
    }
  }
  BiasReport r;
  for (auto& [k, row] : classes) r.by_class.push_back(row);
  for (auto& [k, row] : pairs) r.by_class_pair.push_back(row);
  auto top = [&](const std::vector<BiasRow>& rows, Task t, int label) {
    std::vector<const BiasRow*> v;
    for (const auto& row : rows) {
      if (row.task == t && row.counts[label] > 0) v.push_back(&row);
    }
    std::stable_sort(v.begin(), v.end(), [&](const BiasRow* x, const BiasRow* y) {
      return x->fraction(label) > y->fraction(label);
    });
    std::vector<std::string> keys;
    for (std::size_t i = 0; i < v.size() && static_cast<int>(i) < top_k; ++i) {
      keys.push_back(v[i]->key);
    }
    return keys;
  };
  for (Task t : {Task::kWithinDepth, Task::kOcclusion}) {
    for (int label = 0; label < 4; ++label) {
      r.top_classes[{t, label}] = top(r.by_class, t, label);
      r.top_class_pairs[{t, label}] = top(r.by_class_pair, t, label);
    }
  }
  return r;
}

// ---------------------------------------------------------------------------
// Error decomposition.

struct DecompositionResult {
  MetricsReport full;                  // detections + model predicates
  MetricsReport predicate_prediction;  // groundtruth boxes + model predicates
  MetricsReport object_detection;      // detections + perfect predicates
};

// Replaces the predicate of every prediction matched onto a labeled
// groundtruth relation with the groundtruth label.
inline PredictionSet with_oracle_predicates(const PredictionSet& set, const EvalContext& ctx) {
  const ScoreDetail d = score_detail(set, ctx);
  std::map<std::pair<std::string, std::string>, const OrderedPairLabel*> gt_of;
  for (const auto& p : d.predictions) {
    if (p.gt) gt_of[{p.a->object_id, p.b->object_id}] = p.gt;
  }
  PredictionSet out = set;
  out.model_name = set.model_name + "+oracle_predicates";
  for (auto& pr : out.predictions) {
    const auto it = gt_of.find({pr.object_id_a, pr.object_id_b});
    if (it == gt_of.end()) continue;
    const PairPredicates& truth = it->second->label;
    if (truth.depth && (ctx.matching.score_unsure_groundtruth ||
                        *truth.depth != DepthPredicate::kUnsure)) {
      pr.depth = *truth.depth;
    }
    if (pr.setting == Setting::kWithin && truth.occlusion) pr.occlusion = truth.occlusion;
  }
  return out;
}

using Predictor = std::function<PredictionSet(const std::vector<ObjectInstance>& objects)>;

// `detections` are raw detector outputs for the split; they are trimmed
// with prepare_detections before prediction.
inline DecompositionResult error_decomposition(const Predictor& predict,
                                               const std::vector<ObjectInstance>& detections,
                                               const EvalContext& ctx) {
  DecompositionResult r;
  const auto trimmed =
      prepare_detections(detections, ctx.groundtruth, ctx.filter, ctx.matching);
  const PredictionSet on_detections = predict(trimmed);
  r.full = score(on_detections, ctx);
  r.predicate_prediction = score(predict(ctx.groundtruth), ctx);
  r.object_detection = score(with_oracle_predicates(on_detections, ctx), ctx);
  return r;
}

// ---------------------------------------------------------------------------
// Reports.

inline constexpr const char* kMetricsHeader = "task,metric,stratum,value,count";

inline std::string encode_metrics(const MetricsReport& r,
                                  const std::vector<std::pair<Stratum, std::vector<StratumRow>>>&
                                      strata = {}) {
  std::string out = std::string(kMetricsHeader) + "\n";
  for (Task t : kAllTasks) {
    const Counts& c = r[t];
    out += csv_row({name(t), "precision", "all", format_double(c.precision()),
                    std::to_string(c.predicted)});
    out += csv_row({name(t), "recall", "all", format_double(c.recall()),
                    std::to_string(c.groundtruth)});
    out += csv_row({name(t), "f1", "all", format_double(c.f1()), std::to_string(c.tp)});
  }
  out += csv_row({"average", "f1", "all", format_double(r.average_f1()), "3"});
  for (const auto& [s, rows] : strata) {
    for (const auto& row : rows) {
      out += csv_row({name(row.task), "f1", std::string(name(s)) + "=" + row.key,
                      row.f1 ? format_double(*row.f1) : "",
                      std::to_string(row.counts.groundtruth)});
    }
  }
  return out;
}

inline constexpr const char* kConsistencyHeader = "metric,value,violations,total";

inline std::string encode_consistency(const ConsistencyReport& r) {
  std::string out = std::string(kConsistencyHeader) + "\n";
  out += csv_row({"depth_symmetry", format_double(r.depth_symmetry_rate()),
                  std::to_string(r.depth_symmetry_violations), std::to_string(r.depth_pairs)});
  out += csv_row({"occlusion_symmetry", format_double(r.occlusion_symmetry_rate()),
                  std::to_string(r.occlusion_symmetry_violations),
                  std::to_string(r.occlusion_pairs)});
  out += csv_row({"transitivity", format_double(r.transitivity_rate()),
                  std::to_string(r.transitivity_violations),
                  std::to_string(r.transitivity_triples)});
  return out;
}

inline constexpr const char* kBiasHeader = "table,key,task,label,fraction,count,rank";

inline std::string encode_bias(const BiasReport& r) {
  std::string out = std::string(kBiasHeader) + "\n";
  auto task_name = [](Task t) { return t == Task::kOcclusion ? "occlusion" : "depth"; };
  for (const auto* rows : {&r.by_class, &r.by_class_pair}) {
    const char* table = rows == &r.by_class ? "class" : "class_pair";
    for (const auto& row : *rows) {
      for (int l = 0; l < 4; ++l) {
        out += csv_row({table, row.key, task_name(row.task), label_name(row.task, l),
                        format_double(row.fraction(l)), std::to_string(row.counts[l]), ""});
      }
    }
  }
  for (const auto* tops : {&r.top_classes, &r.top_class_pairs}) {
    const char* table = tops == &r.top_classes ? "top_class" : "top_class_pair";
    for (const auto& [tl, keys] : *tops) {
      for (std::size_t i = 0; i < keys.size(); ++i) {
        out += csv_row({table, keys[i], task_name(tl.first), label_name(tl.first, tl.second),
                        "", "", std::to_string(i + 1)});
      }
    }
  }
  return out;
}

}  // namespace vrd25

#endif  // VRD25_EVALUATION_HPP_
