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

// Canonical domain types and the predicate algebra shared by every module.
//
// Predicate codes are fixed for all files and wire messages:
//   depth     0=A_CLOSER 1=B_CLOSER 2=SAME_DEPTH 3=UNSURE
//   occlusion 0=NO_OCCLUSION 1=A_OCCLUDES_B 2=B_OCCLUDES_A 3=MUTUAL

#ifndef VRD25_CORE_HPP_
#define VRD25_CORE_HPP_

#include <algorithm>
#include <array>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace vrd25 {

// Input that violates a documented contract (bad file, bad flag, bad code).
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Dangling references between bundle tables.
class IntegrityError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

enum class DepthPredicate : std::uint8_t {
  kACloser = 0,
  kBCloser = 1,
  kSameDepth = 2,
  kUnsure = 3,
};

enum class OcclusionPredicate : std::uint8_t {
  kNoOcclusion = 0,
  kAOccludesB = 1,
  kBOccludesA = 2,
  kMutual = 3,
};

enum class Setting : std::uint8_t { kWithin = 0, kAcross = 1 };
enum class Split : std::uint8_t { kTrain = 0, kValidation = 1, kTest = 2 };
enum class Group : std::uint8_t { kA = 0, kB = 1 };

inline constexpr std::array<DepthPredicate, 4> kAllDepth = {
    DepthPredicate::kACloser, DepthPredicate::kBCloser,
    DepthPredicate::kSameDepth, DepthPredicate::kUnsure};
inline constexpr std::array<OcclusionPredicate, 4> kAllOcclusion = {
    OcclusionPredicate::kNoOcclusion, OcclusionPredicate::kAOccludesB,
    OcclusionPredicate::kBOccludesA, OcclusionPredicate::kMutual};

constexpr int code(DepthPredicate p) { return static_cast<int>(p); }
constexpr int code(OcclusionPredicate p) { return static_cast<int>(p); }

inline DepthPredicate depth_from_code(int c) {
  if (c < 0 || c > 3) {
    throw ValidationError("depth predicate code out of range: " +
                          std::to_string(c));
  }
  return static_cast<DepthPredicate>(c);
}

inline OcclusionPredicate occlusion_from_code(int c) {
  if (c < 0 || c > 3) {
    throw ValidationError("occlusion predicate code out of range: " +
                          std::to_string(c));
  }
  return static_cast<OcclusionPredicate>(c);
}

constexpr DepthPredicate flip_depth(DepthPredicate p) {
  switch (p) {
    case DepthPredicate::kACloser:
      return DepthPredicate::kBCloser;
    case DepthPredicate::kBCloser:
      return DepthPredicate::kACloser;
    default:
      return p;
  }
}

constexpr OcclusionPredicate flip_occlusion(OcclusionPredicate p) {
  switch (p) {
    case OcclusionPredicate::kAOccludesB:
      return OcclusionPredicate::kBOccludesA;
    case OcclusionPredicate::kBOccludesA:
      return OcclusionPredicate::kAOccludesB;
    default:
      return p;
  }
}

inline std::optional<OcclusionPredicate> flip_occlusion(
    const std::optional<OcclusionPredicate>& p) {
  if (!p) return std::nullopt;
  return flip_occlusion(*p);
}

inline const char* name(DepthPredicate p) {
  static constexpr const char* kNames[] = {"a_closer", "b_closer",
                                           "same_depth", "unsure"};
  return kNames[code(p)];
}

inline const char* name(OcclusionPredicate p) {
  static constexpr const char* kNames[] = {"no_occlusion", "a_occludes_b",
                                           "b_occludes_a", "mutual"};
  return kNames[code(p)];
}

inline const char* name(Setting s) {
  return s == Setting::kWithin ? "within" : "across";
}

inline const char* name(Split s) {
  static constexpr const char* kNames[] = {"train", "validation", "test"};
  return kNames[static_cast<int>(s)];
}

inline const char* name(Group g) { return g == Group::kA ? "A" : "B"; }

inline Setting setting_from_name(std::string_view s) {
  if (s == "within" || s == "WITHIN") return Setting::kWithin;
  if (s == "across" || s == "ACROSS") return Setting::kAcross;
  throw ValidationError("unknown setting: " + std::string(s));
}

inline Split split_from_name(std::string_view s) {
  if (s == "train") return Split::kTrain;
  if (s == "validation" || s == "val") return Split::kValidation;
  if (s == "test") return Split::kTest;
  throw ValidationError("unknown split: " + std::string(s));
}

inline Group group_from_name(std::string_view s) {
  if (s == "A") return Group::kA;
  if (s == "B") return Group::kB;
  throw ValidationError("unknown group: " + std::string(s));
}

// Axis-aligned box in normalized image coordinates, y increasing downward.
// Zero-area and out-of-range boxes are rejected at construction.
class Box {
 public:
  Box() = default;
  Box(double xmin, double ymin, double xmax, double ymax)
      : xmin_(xmin), ymin_(ymin), xmax_(xmax), ymax_(ymax) {
    if (!(0.0 <= xmin && xmin < xmax && xmax <= 1.0 && 0.0 <= ymin &&
          ymin < ymax && ymax <= 1.0)) {
      throw ValidationError("invalid box (" + std::to_string(xmin) + "," +
                            std::to_string(ymin) + "," + std::to_string(xmax) +
                            "," + std::to_string(ymax) + ")");
    }
  }

  double xmin() const { return xmin_; }
  double ymin() const { return ymin_; }
  double xmax() const { return xmax_; }
  double ymax() const { return ymax_; }
  double width() const { return xmax_ - xmin_; }
  double height() const { return ymax_ - ymin_; }
  double area() const { return width() * height(); }
  double center_x() const { return 0.5 * (xmin_ + xmax_); }
  double center_y() const { return 0.5 * (ymin_ + ymax_); }

  friend bool operator==(const Box&, const Box&) = default;

 private:
  double xmin_ = 0.0;
  double ymin_ = 0.0;
  double xmax_ = 1.0;
  double ymax_ = 1.0;
};

// Overlap rectangle of two boxes; zero extents when disjoint.
struct Overlap {
  double width = 0.0;
  double height = 0.0;
  double area() const { return width * height; }
};

inline Overlap overlap(const Box& a, const Box& b) {
  const double w =
      std::max(0.0, std::min(a.xmax(), b.xmax()) - std::max(a.xmin(), b.xmin()));
  const double h =
      std::max(0.0, std::min(a.ymax(), b.ymax()) - std::max(a.ymin(), b.ymin()));
  return {w, h};
}

inline double iou(const Box& a, const Box& b) {
  if (a == b) return 1.0;
  const double inter = overlap(a, b).area();
  return inter / (a.area() + b.area() - inter);
}

struct ImageRecord {
  std::string image_id;
  int width_px = 1;
  int height_px = 1;
  Split split = Split::kTrain;
  Group group = Group::kA;

  friend bool operator==(const ImageRecord&, const ImageRecord&) = default;
};

struct ObjectInstance {
  std::string object_id;
  std::string image_id;
  int class_id = 0;
  Box box;
  bool is_group_of = false;
  std::optional<double> detector_score;

  friend bool operator==(const ObjectInstance&, const ObjectInstance&) =
      default;
};

// Predicate pair attached to an ordered object pair. An empty depth (or an
// empty occlusion on a within-image pair) is the "no majority label" sentinel
// produced by aggregation.
struct PairPredicates {
  std::optional<DepthPredicate> depth;
  std::optional<OcclusionPredicate> occlusion;

  friend bool operator==(const PairPredicates&, const PairPredicates&) =
      default;
};

inline PairPredicates flip(const PairPredicates& p) {
  PairPredicates out;
  if (p.depth) out.depth = flip_depth(*p.depth);
  out.occlusion = flip_occlusion(p.occlusion);
  return out;
}

enum class Difficulty : std::uint8_t {
  kEasy = 0,
  kModerate = 1,
  kDifficult = 2,
  kInfeasible = 3,
  kAmbiguous = 4,
};

inline constexpr std::array<Difficulty, 5> kAllDifficulty = {
    Difficulty::kEasy, Difficulty::kModerate, Difficulty::kDifficult,
    Difficulty::kInfeasible, Difficulty::kAmbiguous};

inline const char* name(Difficulty d) {
  static constexpr const char* kNames[] = {"easy", "moderate", "difficult",
                                           "infeasible", "ambiguous"};
  return kNames[static_cast<int>(d)];
}

inline Difficulty difficulty_from_name(std::string_view s) {
  for (Difficulty d : kAllDifficulty) {
    if (s == name(d)) return d;
  }
  throw ValidationError("unknown difficulty: " + std::string(s));
}

struct OrderedPairLabel {
  std::string pair_id;
  Setting setting = Setting::kWithin;
  std::string image_id_a;
  std::string object_id_a;
  std::string image_id_b;
  std::string object_id_b;
  PairPredicates label;
  std::optional<Difficulty> difficulty;

  friend bool operator==(const OrderedPairLabel&, const OrderedPairLabel&) =
      default;
};

// Checks the setting invariants of a labelled pair. Aggregated labels may
// carry empty predicates (no majority); everything else must be complete.
inline void validate_pair(const OrderedPairLabel& p) {
  if (p.object_id_a == p.object_id_b && p.image_id_a == p.image_id_b) {
    throw ValidationError("pair " + p.pair_id + " relates an object to itself");
  }
  if (p.setting == Setting::kWithin) {
    if (p.image_id_a != p.image_id_b) {
      throw ValidationError("within-image pair " + p.pair_id +
                            " spans two images");
    }
    // A labelled pair without a difficulty must carry both predicates. A pair
    // with neither is an unannotated candidate.
    if (p.label.depth.has_value() != p.label.occlusion.has_value() && !p.difficulty) {
      throw ValidationError("within-image pair " + p.pair_id +
                            " is only partly labelled");
    }
  } else {
    if (p.image_id_a == p.image_id_b) {
      throw ValidationError("across-image pair " + p.pair_id +
                            " lies inside one image");
    }
    if (p.label.occlusion) {
      throw ValidationError("across-image pair " + p.pair_id +
                            " carries an occlusion label");
    }
    if (p.label.depth == DepthPredicate::kSameDepth) {
      throw ValidationError("across-image pair " + p.pair_id +
                            " is labelled same_depth");
    }
  }
}

enum class VoteCheck { kOk, kMissingOcclusion, kUnexpectedOcclusion,
                       kSameDepthAcross };

// Shared by the annotation service and the file readers so both paths accept
// exactly the same votes.
inline VoteCheck check_vote(Setting setting, DepthPredicate depth,
                            const std::optional<OcclusionPredicate>& occl) {
  if (setting == Setting::kWithin) {
    if (!occl) return VoteCheck::kMissingOcclusion;
    return VoteCheck::kOk;
  }
  if (occl) return VoteCheck::kUnexpectedOcclusion;
  if (depth == DepthPredicate::kSameDepth) return VoteCheck::kSameDepthAcross;
  return VoteCheck::kOk;
}

inline const char* describe(VoteCheck c) {
  switch (c) {
    case VoteCheck::kOk:
      return "ok";
    case VoteCheck::kMissingOcclusion:
      return "within-image vote requires an occlusion answer";
    case VoteCheck::kUnexpectedOcclusion:
      return "across-image vote must not carry an occlusion answer";
    case VoteCheck::kSameDepthAcross:
      return "same_depth is not allowed across images";
  }
  return "unknown";
}

// Key of an ordered object pair. Object ids are unique per dataset, but image
// ids are kept so across-image keys remain readable in reports.
struct PairKey {
  std::string object_a;
  std::string object_b;
  auto operator<=>(const PairKey&) const = default;
};

struct Prediction {
  Setting setting = Setting::kWithin;
  std::string image_id_a;
  std::string object_id_a;
  std::string image_id_b;
  std::string object_id_b;
  DepthPredicate depth = DepthPredicate::kUnsure;
  std::optional<OcclusionPredicate> occlusion;

  friend bool operator==(const Prediction&, const Prediction&) = default;
};

// A model's predictions plus the object list they are defined over.
struct PredictionSet {
  std::string model_name;
  std::vector<ObjectInstance> objects;
  std::vector<Prediction> predictions;
};

inline std::string pair_id_for(const std::string& object_a,
                               const std::string& object_b) {
  return object_a + "|" + object_b;
}

}  // namespace vrd25

#endif  // VRD25_CORE_HPP_
