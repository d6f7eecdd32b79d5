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

// Dataset bundles: canonical CSV files, box/pair filtering and pair sampling.
//
// A bundle directory holds
//   images.csv     image_id,width_px,height_px,split,group
//   objects.csv    object_id,image_id,class_id,xmin,ymin,xmax,ymax,
//                  is_group_of,detector_score
//   relations.csv  pair_id,setting,image_id_a,object_id_a,image_id_b,
//                  object_id_b,depth,occlusion[,difficulty]
//   votes.csv      pair_id,rater_id,depth_vote,occlusion_vote,
//                  timestamp_unix_ms
//   bundle.cfg     provenance=synthetic|imported
// Empty depth / occlusion cells on an aggregated pair mean "no majority".

#ifndef VRD25_DATASET_HPP_
#define VRD25_DATASET_HPP_

#include <algorithm>
#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include "vrd25/aggregation.hpp"
#include "vrd25/core.hpp"
#include "vrd25/random.hpp"
#include "vrd25/text_io.hpp"

namespace vrd25 {

struct ClassInfo {
  int class_id = 0;
  std::string name;
  bool is_body_part = false;
  bool is_clothing = false;
  bool is_person = false;
};

struct ClassMetadata {
  std::vector<ClassInfo> classes;
  std::set<std::pair<int, int>> part_of;  // (part_class_id, whole_class_id)

  int vocabulary_size() const {
    int n = 0;
    for (const auto& c : classes) n = std::max(n, c.class_id + 1);
    return n;
  }

  std::optional<int> find(const std::string& name) const {
    for (const auto& c : classes) {
      if (c.name == name) return c.class_id;
    }
    return std::nullopt;
  }
};

inline ClassMetadata read_class_metadata(const std::filesystem::path& class_csv,
                                         const std::filesystem::path& part_of_csv) {
  ClassMetadata meta;
  const CsvTable t = CsvTable::read(class_csv);
  t.require({"class_id", "name", "is_body_part", "is_clothing", "is_person"});
  std::set<int> seen;
  for (std::size_t r = 0; r < t.size(); ++r) {
    ClassInfo c;
    c.class_id = static_cast<int>(t.as_int(r, "class_id"));
    if (c.class_id < 0) t.fail(r, "class_id", "negative class id");
    if (!seen.insert(c.class_id).second) t.fail(r, "class_id", "duplicate id");
    c.name = t.at(r, "name");
    c.is_body_part = t.as_bool(r, "is_body_part");
    c.is_clothing = t.as_bool(r, "is_clothing");
    c.is_person = t.as_bool(r, "is_person");
    meta.classes.push_back(std::move(c));
  }
  if (!part_of_csv.empty() && std::filesystem::exists(part_of_csv)) {
    const CsvTable p = CsvTable::read(part_of_csv);
    p.require({"part_class_id", "whole_class_id"});
    for (std::size_t r = 0; r < p.size(); ++r) {
      meta.part_of.insert({static_cast<int>(p.as_int(r, "part_class_id")),
                           static_cast<int>(p.as_int(r, "whole_class_id"))});
    }
  }
  return meta;
}

inline void write_class_metadata(const ClassMetadata& meta,
                                 const std::filesystem::path& class_csv,
                                 const std::filesystem::path& part_of_csv) {
  std::string out = "class_id,name,is_body_part,is_clothing,is_person\n";
  for (const auto& c : meta.classes) {
    out += csv_row({std::to_string(c.class_id), c.name,
                    c.is_body_part ? "1" : "0", c.is_clothing ? "1" : "0",
                    c.is_person ? "1" : "0"});
  }
  write_file_atomic(class_csv, out);
  std::string parts = "part_class_id,whole_class_id\n";
  for (const auto& [p, w] : meta.part_of) {
    parts += std::to_string(p) + "," + std::to_string(w) + "\n";
  }
  write_file_atomic(part_of_csv, parts);
}

struct FilterConfig {
  double min_area_frac = 0.02;
  double max_area_frac = 0.70;
  double pair_iou_max = 0.7;
  std::set<int> body_part_class_ids;
  std::set<int> clothing_class_ids;
  std::set<int> person_class_ids;
  std::set<std::pair<int, int>> part_of_table;

  void validate() const {
    if (!(0.0 <= min_area_frac && min_area_frac < max_area_frac &&
          max_area_frac <= 1.0)) {
      throw ValidationError("filter: need 0 <= min_area_frac < max_area_frac <= 1");
    }
    if (!(0.0 < pair_iou_max && pair_iou_max <= 1.0)) {
      throw ValidationError("filter: need 0 < pair_iou_max <= 1");
    }
  }

  static FilterConfig from_metadata(const ClassMetadata& meta) {
    FilterConfig f;
    for (const auto& c : meta.classes) {
      if (c.is_body_part) f.body_part_class_ids.insert(c.class_id);
      if (c.is_clothing) f.clothing_class_ids.insert(c.class_id);
      if (c.is_person) f.person_class_ids.insert(c.class_id);
    }
    f.part_of_table = meta.part_of;
    return f;
  }

  // Reads thresholds from a key=value file on top of `base`.
  static FilterConfig from_config(const KeyValueConfig& kv, FilterConfig base) {
    kv.check_known({"min_area_frac", "max_area_frac", "pair_iou_max"});
    base.min_area_frac = kv.get_double("min_area_frac", base.min_area_frac);
    base.max_area_frac = kv.get_double("max_area_frac", base.max_area_frac);
    base.pair_iou_max = kv.get_double("pair_iou_max", base.pair_iou_max);
    base.validate();
    return base;
  }
};

// Removes, in this order: group-of boxes; body-part and clothing boxes when a
// person box remains in the image; boxes whose area fraction is strictly
// below min_area_frac or strictly above max_area_frac.
inline std::vector<ObjectInstance> filter_objects(
    const std::vector<ObjectInstance>& objects, const FilterConfig& config) {
  std::vector<ObjectInstance> kept;
  for (const auto& o : objects) {
    if (!o.is_group_of) kept.push_back(o);
  }
  const bool has_person = std::any_of(kept.begin(), kept.end(), [&](const auto& o) {
    return config.person_class_ids.count(o.class_id) > 0;
  });
  if (has_person) {
    std::erase_if(kept, [&](const ObjectInstance& o) {
      return config.body_part_class_ids.count(o.class_id) > 0 ||
             config.clothing_class_ids.count(o.class_id) > 0;
    });
  }
  std::erase_if(kept, [&](const ObjectInstance& o) {
    const double a = o.box.area();
    return a < config.min_area_frac || a > config.max_area_frac;
  });
  return kept;
}

inline bool pair_admissible(const ObjectInstance& a, const ObjectInstance& b,
                            const FilterConfig& config) {
  if (iou(a.box, b.box) > config.pair_iou_max) return false;
  if (config.part_of_table.count({a.class_id, b.class_id}) ||
      config.part_of_table.count({b.class_id, a.class_id})) {
    return false;
  }
  return true;
}

// Admissible ordered pairs (indices into `objects`) of one image's filtered
// objects.
inline std::vector<std::pair<std::size_t, std::size_t>> filter_pairs(
    const std::vector<ObjectInstance>& objects, const FilterConfig& config) {
  std::vector<std::pair<std::size_t, std::size_t>> out;
  for (std::size_t i = 0; i < objects.size(); ++i) {
    for (std::size_t j = 0; j < objects.size(); ++j) {
      if (i != j && pair_admissible(objects[i], objects[j], config)) {
        out.emplace_back(i, j);
      }
    }
  }
  return out;
}

enum class Provenance { kSynthetic, kImported };

struct DatasetBundle {
  std::vector<ImageRecord> images;
  std::vector<ObjectInstance> objects;
  std::vector<OrderedPairLabel> pairs;
  std::vector<VoteRecord> votes;
  Provenance provenance = Provenance::kSynthetic;

  const ImageRecord* find_image(const std::string& id) const {
    for (const auto& im : images) {
      if (im.image_id == id) return &im;
    }
    return nullptr;
  }

  // Objects grouped by image id, in file order.
  std::map<std::string, std::vector<ObjectInstance>> objects_by_image() const {
    std::map<std::string, std::vector<ObjectInstance>> out;
    for (const auto& im : images) out[im.image_id];
    for (const auto& o : objects) out[o.image_id].push_back(o);
    return out;
  }

  std::vector<ImageRecord> images_in(Split split) const {
    std::vector<ImageRecord> out;
    for (const auto& im : images) {
      if (im.split == split) out.push_back(im);
    }
    return out;
  }

  friend bool operator==(const DatasetBundle&, const DatasetBundle&) = default;
};

// Deterministic, split-stable A/B assignment from the image id.
inline Group assign_group(const std::string& image_id) {
  return (fnv1a64(image_id) & 1u) ? Group::kB : Group::kA;
}

inline OrderedPairLabel make_pair(Setting setting, const ObjectInstance& a,
                                  const ObjectInstance& b) {
  OrderedPairLabel p;
  p.pair_id = pair_id_for(a.object_id, b.object_id);
  p.setting = setting;
  p.image_id_a = a.image_id;
  p.object_id_a = a.object_id;
  p.image_id_b = b.image_id;
  p.object_id_b = b.object_id;
  return p;
}

// Evaluation image pairs for the across-image setting: group-A and group-B
// images of `split`, each ordered by id hash, zipped together.
inline std::vector<std::pair<std::string, std::string>> designate_image_pairs(
    const std::vector<ImageRecord>& images, Split split) {
  std::vector<std::pair<std::uint64_t, std::string>> a, b;
  for (const auto& im : images) {
    if (im.split != split) continue;
    (im.group == Group::kA ? a : b).emplace_back(fnv1a64(im.image_id), im.image_id);
  }
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  std::vector<std::pair<std::string, std::string>> out;
  for (std::size_t i = 0; i < std::min(a.size(), b.size()); ++i) {
    out.emplace_back(a[i].second, b[i].second);
  }
  return out;
}

struct SampledPairs {
  std::vector<OrderedPairLabel> within;
  std::vector<OrderedPairLabel> across;
};

// One uniformly random admissible ordered pair per training image with at
// least two surviving objects; across images, a random perfect matching of
// group A onto group B with one random surviving object from each image.
inline SampledPairs sample_training_pairs(const DatasetBundle& bundle,
                                          const FilterConfig& config,
                                          std::uint64_t seed) {
  const auto by_image = bundle.objects_by_image();
  SampledPairs out;
  Rng within_rng(derive_seed(seed, "sample/within"));
  std::vector<std::string> group_a, group_b;
  for (const auto& im : bundle.images) {
    if (im.split != Split::kTrain) continue;
    (im.group == Group::kA ? group_a : group_b).push_back(im.image_id);
    const auto kept = filter_objects(by_image.at(im.image_id), config);
    const auto admissible = filter_pairs(kept, config);
    if (admissible.empty()) continue;
    const auto [i, j] = admissible[within_rng.below(admissible.size())];
    out.within.push_back(make_pair(Setting::kWithin, kept[i], kept[j]));
  }
  Rng across_rng(derive_seed(seed, "sample/across"));
  across_rng.shuffle(group_a);
  across_rng.shuffle(group_b);
  for (std::size_t k = 0; k < std::min(group_a.size(), group_b.size()); ++k) {
    const auto ka = filter_objects(by_image.at(group_a[k]), config);
    const auto kb = filter_objects(by_image.at(group_b[k]), config);
    if (ka.empty() || kb.empty()) continue;
    const auto& a = ka[across_rng.below(ka.size())];
    const auto& b = kb[across_rng.below(kb.size())];
    out.across.push_back(make_pair(Setting::kAcross, a, b));
  }
  return out;
}

// All admissible ordered within-image pairs of every `split` image, and all
// N_a x N_b cross pairs of every designated image pair.
inline SampledPairs exhaustive_eval_pairs(const DatasetBundle& bundle,
                                          const FilterConfig& config,
                                          Split split) {
  const auto by_image = bundle.objects_by_image();
  SampledPairs out;
  for (const auto& im : bundle.images) {
    if (im.split != split) continue;
    const auto kept = filter_objects(by_image.at(im.image_id), config);
    for (const auto& [i, j] : filter_pairs(kept, config)) {
      out.within.push_back(make_pair(Setting::kWithin, kept[i], kept[j]));
    }
  }
  for (const auto& [ia, ib] : designate_image_pairs(bundle.images, split)) {
    const auto ka = filter_objects(by_image.at(ia), config);
    const auto kb = filter_objects(by_image.at(ib), config);
    for (const auto& a : ka) {
      for (const auto& b : kb) out.across.push_back(make_pair(Setting::kAcross, a, b));
    }
  }
  return out;
}

// Ordered pairs a predictor must label over an already-filtered object list
// (groundtruth or trimmed detections): admissible within-image pairs of each
// `split` image and every cross pair of the designated image pairs.
inline SampledPairs candidate_pairs(const std::vector<ImageRecord>& images,
                                    const std::vector<ObjectInstance>& objects,
                                    const FilterConfig& config, Split split) {
  std::map<std::string, std::vector<ObjectInstance>> by_image;
  for (const auto& o : objects) by_image[o.image_id].push_back(o);
  auto of = [&](const std::string& id) -> const std::vector<ObjectInstance>& {
    static const std::vector<ObjectInstance> kNone;
    const auto it = by_image.find(id);
    return it == by_image.end() ? kNone : it->second;
  };
  SampledPairs out;
  for (const auto& im : images) {
    if (im.split != split) continue;
    const auto& objs = of(im.image_id);
    for (const auto& [i, j] : filter_pairs(objs, config)) {
      out.within.push_back(make_pair(Setting::kWithin, objs[i], objs[j]));
    }
  }
  for (const auto& [ia, ib] : designate_image_pairs(images, split)) {
    for (const auto& a : of(ia)) {
      for (const auto& b : of(ib)) out.across.push_back(make_pair(Setting::kAcross, a, b));
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// File formats.

inline constexpr const char* kImagesHeader = "image_id,width_px,height_px,split,group";
inline constexpr const char* kObjectsHeader =
    "object_id,image_id,class_id,xmin,ymin,xmax,ymax,is_group_of,detector_score";
inline constexpr const char* kVotesHeader =
    "pair_id,rater_id,depth_vote,occlusion_vote,timestamp_unix_ms";

inline std::string encode_images(const std::vector<ImageRecord>& images) {
  std::string out = std::string(kImagesHeader) + "\n";
  for (const auto& im : images) {
    out += csv_row({im.image_id, std::to_string(im.width_px),
                    std::to_string(im.height_px), name(im.split), name(im.group)});
  }
  return out;
}

inline std::string encode_objects(const std::vector<ObjectInstance>& objects) {
  std::string out = std::string(kObjectsHeader) + "\n";
  for (const auto& o : objects) {
    out += csv_row({o.object_id, o.image_id, std::to_string(o.class_id),
                    format_double(o.box.xmin()), format_double(o.box.ymin()),
                    format_double(o.box.xmax()), format_double(o.box.ymax()),
                    o.is_group_of ? "1" : "0",
                    o.detector_score ? format_double(*o.detector_score) : ""});
  }
  return out;
}

inline std::string encode_relations(const std::vector<OrderedPairLabel>& pairs,
                                    bool with_difficulty = true) {
  std::string out =
      "pair_id,setting,image_id_a,object_id_a,image_id_b,object_id_b,depth,occlusion";
  out += with_difficulty ? ",difficulty\n" : "\n";
  for (const auto& p : pairs) {
    std::vector<std::string> row = {
        p.pair_id, name(p.setting), p.image_id_a, p.object_id_a, p.image_id_b,
        p.object_id_b,
        p.label.depth ? std::to_string(code(*p.label.depth)) : "",
        p.label.occlusion ? std::to_string(code(*p.label.occlusion)) : ""};
    if (with_difficulty) row.push_back(p.difficulty ? name(*p.difficulty) : "");
    out += csv_row(row);
  }
  return out;
}

inline constexpr const char* kPredictionsHeader =
    "pair_id,setting,image_id_a,object_id_a,image_id_b,object_id_b,depth,occlusion,"
    "model_name";

inline std::string encode_predictions(const PredictionSet& set) {
  std::string out = std::string(kPredictionsHeader) + "\n";
  for (const auto& p : set.predictions) {
    out += csv_row({pair_id_for(p.object_id_a, p.object_id_b), name(p.setting),
                    p.image_id_a, p.object_id_a, p.image_id_b, p.object_id_b,
                    std::to_string(code(p.depth)),
                    p.occlusion ? std::to_string(code(*p.occlusion)) : "", set.model_name});
  }
  return out;
}

// Predictions carry no object list; callers attach the objects they were
// made over.
inline PredictionSet parse_predictions(const CsvTable& t) {
  t.require({"setting", "image_id_a", "object_id_a", "image_id_b", "object_id_b",
             "depth", "occlusion", "model_name"});
  PredictionSet set;
  for (std::size_t r = 0; r < t.size(); ++r) {
    Prediction p;
    try {
      p.setting = setting_from_name(t.at(r, "setting"));
    } catch (const ValidationError& e) {
      t.fail(r, "setting", e.what());
    }
    p.image_id_a = t.at(r, "image_id_a");
    p.object_id_a = t.at(r, "object_id_a");
    p.image_id_b = t.at(r, "image_id_b");
    p.object_id_b = t.at(r, "object_id_b");
    p.depth = *t.as_depth(r, "depth", false);
    p.occlusion = t.as_occlusion(r, "occlusion");
    if (check_vote(p.setting, p.depth, p.occlusion) != VoteCheck::kOk) {
      t.fail(r, "depth", describe(check_vote(p.setting, p.depth, p.occlusion)));
    }
    const std::string& model = t.at(r, "model_name");
    if (r == 0) {
      set.model_name = model;
    } else if (model != set.model_name) {
      t.fail(r, "model_name", "mixed model names in one predictions file");
    }
    set.predictions.push_back(std::move(p));
  }
  return set;
}

inline std::string encode_votes(const std::vector<VoteRecord>& votes) {
  std::string out = std::string(kVotesHeader) + "\n";
  for (const auto& v : votes) {
    out += csv_row({v.pair_id, v.rater_id, std::to_string(code(v.depth_vote)),
                    v.occlusion_vote ? std::to_string(code(*v.occlusion_vote)) : "",
                    std::to_string(v.timestamp_unix_ms)});
  }
  return out;
}

inline std::string encode_difficulty_report(
    const std::vector<DifficultyReportRow>& rows) {
  std::string out = "setting,scale,count,fraction\n";
  for (const auto& r : rows) {
    out += csv_row({name(r.setting), name(r.scale), std::to_string(r.count),
                    format_fixed(r.fraction)});
  }
  return out;
}

inline std::vector<ImageRecord> parse_images(const CsvTable& t) {
  t.require({"image_id", "width_px", "height_px", "split", "group"});
  std::vector<ImageRecord> out;
  std::unordered_set<std::string> seen;
  for (std::size_t r = 0; r < t.size(); ++r) {
    ImageRecord im;
    im.image_id = t.at(r, "image_id");
    if (im.image_id.empty()) t.fail(r, "image_id", "empty id");
    if (!seen.insert(im.image_id).second) t.fail(r, "image_id", "duplicate id");
    im.width_px = static_cast<int>(t.as_int(r, "width_px"));
    im.height_px = static_cast<int>(t.as_int(r, "height_px"));
    if (im.width_px <= 0) t.fail(r, "width_px", "must be positive");
    if (im.height_px <= 0) t.fail(r, "height_px", "must be positive");
    try {
      im.split = split_from_name(t.at(r, "split"));
    } catch (const ValidationError& e) {
      t.fail(r, "split", e.what());
    }
    try {
      im.group = group_from_name(t.at(r, "group"));
    } catch (const ValidationError& e) {
      t.fail(r, "group", e.what());
    }
    out.push_back(std::move(im));
  }
  return out;
}

inline std::vector<ObjectInstance> parse_objects(const CsvTable& t) {
  t.require({"object_id", "image_id", "class_id", "xmin", "ymin", "xmax", "ymax",
             "is_group_of", "detector_score"});
  std::vector<ObjectInstance> out;
  for (std::size_t r = 0; r < t.size(); ++r) {
    ObjectInstance o;
    o.object_id = t.at(r, "object_id");
    if (o.object_id.empty()) t.fail(r, "object_id", "empty id");
    o.image_id = t.at(r, "image_id");
    o.class_id = static_cast<int>(t.as_int(r, "class_id"));
    if (o.class_id < 0) t.fail(r, "class_id", "negative class id");
    try {
      o.box = Box(t.as_double(r, "xmin"), t.as_double(r, "ymin"),
                  t.as_double(r, "xmax"), t.as_double(r, "ymax"));
    } catch (const ValidationError& e) {
      t.fail(r, "xmin", e.what());
    }
    o.is_group_of = t.as_bool(r, "is_group_of");
    o.detector_score = t.as_optional_double(r, "detector_score");
    if (o.detector_score && (*o.detector_score < 0 || *o.detector_score > 1)) {
      t.fail(r, "detector_score", "must lie in [0,1]");
    }
    out.push_back(std::move(o));
  }
  return out;
}

inline std::vector<OrderedPairLabel> parse_relations(const CsvTable& t) {
  t.require({"pair_id", "setting", "image_id_a", "object_id_a", "image_id_b",
             "object_id_b", "depth", "occlusion"});
  const bool has_difficulty = t.has("difficulty");
  std::vector<OrderedPairLabel> out;
  for (std::size_t r = 0; r < t.size(); ++r) {
    OrderedPairLabel p;
    p.pair_id = t.at(r, "pair_id");
    try {
      p.setting = setting_from_name(t.at(r, "setting"));
    } catch (const ValidationError& e) {
      t.fail(r, "setting", e.what());
    }
    p.image_id_a = t.at(r, "image_id_a");
    p.object_id_a = t.at(r, "object_id_a");
    p.image_id_b = t.at(r, "image_id_b");
    p.object_id_b = t.at(r, "object_id_b");
    if (has_difficulty && !t.at(r, "difficulty").empty()) {
      try {
        p.difficulty = difficulty_from_name(t.at(r, "difficulty"));
      } catch (const ValidationError& e) {
        t.fail(r, "difficulty", e.what());
      }
    }
    p.label.depth = t.as_depth(r, "depth", true);  // empty: unlabeled or no majority
    p.label.occlusion = t.as_occlusion(r, "occlusion");
    try {
      validate_pair(p);
    } catch (const ValidationError& e) {
      t.fail(r, "setting", e.what());
    }
    out.push_back(std::move(p));
  }
  return out;
}

inline std::vector<VoteRecord> parse_votes(const CsvTable& t) {
  t.require({"pair_id", "rater_id", "depth_vote", "occlusion_vote",
             "timestamp_unix_ms"});
  std::vector<VoteRecord> out;
  for (std::size_t r = 0; r < t.size(); ++r) {
    VoteRecord v;
    v.pair_id = t.at(r, "pair_id");
    v.rater_id = t.at(r, "rater_id");
    v.depth_vote = *t.as_depth(r, "depth_vote", false);
    v.occlusion_vote = t.as_occlusion(r, "occlusion_vote");
    v.timestamp_unix_ms = t.as_int(r, "timestamp_unix_ms");
    out.push_back(std::move(v));
  }
  return out;
}

// Referential integrity; throws IntegrityError listing offending ids.
inline void check_integrity(const DatasetBundle& b) {
  std::unordered_set<std::string> image_ids;
  for (const auto& im : b.images) image_ids.insert(im.image_id);
  std::unordered_map<std::string, std::string> object_image;
  std::vector<std::string> bad;
  for (const auto& o : b.objects) {
    if (!image_ids.count(o.image_id)) {
      bad.push_back("object " + o.object_id + " -> image " + o.image_id);
    }
    if (!object_image.emplace(o.object_id, o.image_id).second) {
      bad.push_back("duplicate object " + o.object_id);
    }
  }
  std::unordered_set<std::string> pair_ids;
  std::unordered_map<std::string, Setting> pair_setting;
  for (const auto& p : b.pairs) {
    if (!pair_ids.insert(p.pair_id).second) bad.push_back("duplicate pair " + p.pair_id);
    pair_setting[p.pair_id] = p.setting;
    for (const auto& [oid, iid] : {std::pair{p.object_id_a, p.image_id_a},
                                   std::pair{p.object_id_b, p.image_id_b}}) {
      auto it = object_image.find(oid);
      if (it == object_image.end()) {
        bad.push_back("pair " + p.pair_id + " -> object " + oid);
      } else if (it->second != iid) {
        bad.push_back("pair " + p.pair_id + " -> object " + oid +
                      " not in image " + iid);
      }
    }
  }
  std::set<std::pair<std::string, std::string>> voted;
  for (const auto& v : b.votes) {
    auto it = pair_setting.find(v.pair_id);
    if (it == pair_setting.end()) {
      bad.push_back("vote " + v.rater_id + " -> pair " + v.pair_id);
      continue;
    }
    if (!voted.insert({v.pair_id, v.rater_id}).second) {
      bad.push_back("duplicate vote " + v.pair_id + "/" + v.rater_id);
    }
    if (check_vote(it->second, v.depth_vote, v.occlusion_vote) != VoteCheck::kOk) {
      bad.push_back("vote " + v.pair_id + "/" + v.rater_id + ": " +
                    describe(check_vote(it->second, v.depth_vote, v.occlusion_vote)));
    }
  }
  if (!bad.empty()) {
    std::string msg = "bundle integrity check failed:";
    const std::size_t shown = std::min<std::size_t>(bad.size(), 20);
    for (std::size_t i = 0; i < shown; ++i) msg += "\n  " + bad[i];
    if (bad.size() > shown) {
      msg += "\n  ... and " + std::to_string(bad.size() - shown) + " more";
    }
    throw IntegrityError(msg);
  }
}

inline DatasetBundle read_bundle(const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(dir)) throw ValidationError("not a bundle directory: " + dir.string());
  DatasetBundle b;
  b.images = parse_images(CsvTable::read(dir / "images.csv"));
  b.objects = parse_objects(CsvTable::read(dir / "objects.csv"));
  if (fs::exists(dir / "relations.csv")) {
    b.pairs = parse_relations(CsvTable::read(dir / "relations.csv"));
  }
  if (fs::exists(dir / "votes.csv")) {
    b.votes = parse_votes(CsvTable::read(dir / "votes.csv"));
  }
  if (fs::exists(dir / "bundle.cfg")) {
    const auto cfg = KeyValueConfig::read(dir / "bundle.cfg");
    const std::string prov = cfg.get_string("provenance", "synthetic");
    if (prov == "synthetic") {
      b.provenance = Provenance::kSynthetic;
    } else if (prov == "imported") {
      b.provenance = Provenance::kImported;
    } else {
      throw ValidationError((dir / "bundle.cfg").string() +
                            ": unknown provenance '" + prov + "'");
    }
  }
  check_integrity(b);
  return b;
}

inline void write_bundle(const DatasetBundle& b, const std::filesystem::path& dir) {
  check_integrity(b);
  std::filesystem::create_directories(dir);
  write_file_atomic(dir / "images.csv", encode_images(b.images));
  write_file_atomic(dir / "objects.csv", encode_objects(b.objects));
  write_file_atomic(dir / "relations.csv", encode_relations(b.pairs));
  write_file_atomic(dir / "votes.csv", encode_votes(b.votes));
  write_file_atomic(dir / "bundle.cfg",
                    std::string("provenance=") +
                        (b.provenance == Provenance::kSynthetic ? "synthetic"
                                                                : "imported") +
                        "\n");
}

}  // namespace vrd25

#endif  // VRD25_DATASET_HPP_
