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

// Pair-feature MLP: one shared rectifier hidden layer and two 4-way softmax
// heads (depth, occlusion), trained with Adam and manual backpropagation.
//
// Feature layout, in order, each block present only when enabled:
//   class       one-hot(class_a) | one-hot(class_b)              2C
//   bbox        box_a xmin,ymin,xmax,ymax | box_b ... |
//               overlap height,width,area                         11
//   depth       mean,std,min,max over box_a | over box_b |
//               over the whole image                              12
//   appearance  object_a | object_b | image                       3D
// Across-image pairs have a zero overlap block and image-level blocks
// averaged over the two images.
//
// Checkpoint (little-endian): "VRDM", u32 version, u64 feature-config hash,
// u32 flags, u32 C, u32 D, u32 input_dim, u32 hidden, f32 dropout,
// f32 l2, then float32 tensors, row-major: input_mean[in], input_scale[in],
// w1[hidden x in], b1[hidden], wd[4 x hidden], bd[4], wo[4 x hidden], bo[4].

#ifndef VRD25_MLP_HPP_
#define VRD25_MLP_HPP_

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <limits>
#include <map>
#include <optional>
#include <type_traits>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "vrd25/core.hpp"
#include "vrd25/dataset.hpp"
#include "vrd25/random.hpp"
#include "vrd25/raster_io.hpp"
#include "vrd25/text_io.hpp"

namespace vrd25 {

// ---------------------------------------------------------------------------
// Features.

struct FeatureConfig {
  bool use_class = false;
  bool use_bbox = true;
  bool use_depth = false;
  bool use_appearance = false;
  int class_vocab_size = 0;
  int appearance_dim = 0;

  void validate() const {
    if (!use_class && !use_bbox && !use_depth && !use_appearance) {
      throw ValidationError("feature config: enable at least one block");
    }
    if (use_class && class_vocab_size < 1) {
      throw ValidationError("feature config: class block needs class_vocab_size >= 1");
    }
    if (use_appearance && appearance_dim < 1) {
      throw ValidationError("feature config: appearance block needs appearance_dim >= 1");
    }
  }

  int dim() const {
    return (use_class ? 2 * class_vocab_size : 0) + (use_bbox ? 11 : 0) +
           (use_depth ? 12 : 0) + (use_appearance ? 3 * appearance_dim : 0);
  }

  // "B+C+D+A" style, letters in any order.
  std::string letters() const {
    std::string s;
    auto add = [&](bool on, char c) {
      if (!on) return;
      if (!s.empty()) s += '+';
      s += c;
    };
    add(use_bbox, 'B');
    add(use_class, 'C');
    add(use_depth, 'D');
    add(use_appearance, 'A');
    return s;
  }

  static FeatureConfig parse(std::string_view spec, int class_vocab_size,
                             int appearance_dim) {
    FeatureConfig f;
    f.use_bbox = false;
    for (char c : spec) {
      switch (c) {
        case 'B': f.use_bbox = true; break;
        case 'C': f.use_class = true; break;
        case 'D': f.use_depth = true; break;
        case 'A': f.use_appearance = true; break;
        case '+': break;
        default:
          throw ValidationError("feature spec '" + std::string(spec) +
                                "': expected letters from B, C, D, A joined by '+'");
      }
    }
    f.class_vocab_size = f.use_class ? class_vocab_size : 0;
    f.appearance_dim = f.use_appearance ? appearance_dim : 0;
    f.validate();
    return f;
  }

  std::uint64_t hash() const {
    return fnv1a64(letters() + "/" + std::to_string(class_vocab_size) + "/" +
                   std::to_string(appearance_dim));
  }

  friend bool operator==(const FeatureConfig&, const FeatureConfig&) = default;
};

// Precomputed per-image and per-object inputs. Only the blocks a config
// enables need their map.
struct FeatureArtifacts {
  const std::map<std::string, DepthMap>* depth_maps = nullptr;
  const std::map<std::string, std::vector<float>>* image_features = nullptr;
  const std::map<std::string, std::vector<float>>* object_features = nullptr;
};

class PairFeaturizer {
 public:
  PairFeaturizer(FeatureConfig config, FeatureArtifacts artifacts)
      : cfg_(std::move(config)), art_(artifacts) {
    cfg_.validate();
    if (cfg_.use_depth && !art_.depth_maps) {
      throw ValidationError("depth features need depth maps");
    }
    if (cfg_.use_appearance && (!art_.image_features || !art_.object_features)) {
      throw ValidationError("appearance features need image and object feature files");
    }
  }

  const FeatureConfig& config() const { return cfg_; }

  // Writes cfg.dim() values to `out`.
  template <typename Out>
  void operator()(const ObjectInstance& a, const ObjectInstance& b, Setting setting,
                  Out&& out) {
    (*this)(a, b, setting, a.box, b.box, std::forward<Out>(out));
  }

  // As above, with the bbox block taken from `box_a`/`box_b` instead of the
  // annotated boxes. Training jitter goes through here, so depth statistics
  // always describe the annotated box.
  template <typename Out>
  void operator()(const ObjectInstance& a, const ObjectInstance& b, Setting setting,
                  const Box& box_a, const Box& box_b, Out&& out) {
    int k = 0;
    auto put = [&](double v) { out[k++] = v; };
    if (cfg_.use_class) {
      for (const auto* o : {&a, &b}) {
        if (o->class_id < 0 || o->class_id >= cfg_.class_vocab_size) {
          throw ValidationError("class id " + std::to_string(o->class_id) + " of " +
                                o->object_id + " outside the class vocabulary");
        }
        for (int c = 0; c < cfg_.class_vocab_size; ++c) put(c == o->class_id ? 1.0 : 0.0);
      }
    }
    if (cfg_.use_bbox) {
      for (const Box* bx : {&box_a, &box_b}) {
        put(bx->xmin());
        put(bx->ymin());
        put(bx->xmax());
        put(bx->ymax());
      }
      const Overlap ov = setting == Setting::kWithin ? overlap(box_a, box_b) : Overlap{};
      put(ov.height);
      put(ov.width);
      put(ov.area());
    }
    if (cfg_.use_depth) {
      for (const auto* o : {&a, &b}) {
        const DepthStats s = box_depth_stats(depth_map(o->image_id), o->box);
        put(s.mean);
        put(s.stddev);
        put(s.min);
        put(s.max);
      }
      const DepthStats ia = image_stats(a.image_id), ib = image_stats(b.image_id);
      put(0.5 * (ia.mean + ib.mean));
      put(0.5 * (ia.stddev + ib.stddev));
      put(0.5 * (ia.min + ib.min));
      put(0.5 * (ia.max + ib.max));
    }
    if (cfg_.use_appearance) {
      for (const auto* o : {&a, &b}) {
        for (float v : vector_for(*art_.object_features, o->object_id, "object")) put(v);
      }
      const auto& fa = vector_for(*art_.image_features, a.image_id, "image");
      const auto& fb = vector_for(*art_.image_features, b.image_id, "image");
      for (int i = 0; i < cfg_.appearance_dim; ++i) put(0.5 * (fa[i] + fb[i]));
    }
  }

  std::vector<double> operator()(const ObjectInstance& a, const ObjectInstance& b,
                                 Setting setting) {
    std::vector<double> v(cfg_.dim());
    (*this)(a, b, setting, v);
    return v;
  }

 private:
  const DepthMap& depth_map(const std::string& image_id) const {
    const auto it = art_.depth_maps->find(image_id);
    if (it == art_.depth_maps->end()) {
      throw ValidationError("missing depth map for image " + image_id);
    }
    return it->second;
  }

  const DepthStats& image_stats(const std::string& image_id) {
    auto it = image_stats_.find(image_id);
    if (it == image_stats_.end()) {
      it = image_stats_.emplace(image_id, image_depth_stats(depth_map(image_id))).first;
    }
    return it->second;
  }

  const std::vector<float>& vector_for(const std::map<std::string, std::vector<float>>& m,
                                       const std::string& id, const char* what) const {
    const auto it = m.find(id);
    if (it == m.end()) {
      throw ValidationError(std::string("missing ") + what + " feature file for " + id);
    }
    if (static_cast<int>(it->second.size()) != cfg_.appearance_dim) {
      throw ValidationError(std::string(what) + " feature for " + id + " has dimension " +
                            std::to_string(it->second.size()) + ", expected " +
                            std::to_string(cfg_.appearance_dim));
    }
    return it->second;
  }

  FeatureConfig cfg_;
  FeatureArtifacts art_;
  std::unordered_map<std::string, DepthStats> image_stats_;
};

// ---------------------------------------------------------------------------
// Model.

template <typename S>
struct MlpModel {
  using Mat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>;
  using Vec = Eigen::Matrix<S, Eigen::Dynamic, 1>;

  FeatureConfig features;
  // Fixed input standardization x' = (x - mean) * scale.
  Vec input_mean;
  Vec input_scale;
  Mat w1;
  Vec b1;
  Mat wd;
  Vec bd;
  Mat wo;
  Vec bo;
  double dropout_rate = 0.5;
  double l2_weight = 1e-4;

  int input_dim() const { return static_cast<int>(w1.cols()); }
  int hidden_dim() const { return static_cast<int>(w1.rows()); }

  // He-normal first layer, 1/sqrt(hidden) heads, zero biases, identity
  // standardization.
  static MlpModel init(int input_dim, int hidden, Rng& rng) {
    if (input_dim < 1 || hidden < 1) throw ValidationError("model dimensions must be >= 1");
    MlpModel m;
    auto fill = [&](Mat& w, int rows, int cols, double sd) {
      w.resize(rows, cols);
      for (int i = 0; i < rows; ++i) {
        for (int j = 0; j < cols; ++j) w(i, j) = static_cast<S>(rng.normal(0.0, sd));
      }
    };
    fill(m.w1, hidden, input_dim, std::sqrt(2.0 / input_dim));
    fill(m.wd, 4, hidden, 1.0 / std::sqrt(static_cast<double>(hidden)));
    fill(m.wo, 4, hidden, 1.0 / std::sqrt(static_cast<double>(hidden)));
    m.b1 = Vec::Zero(hidden);
    m.bd = Vec::Zero(4);
    m.bo = Vec::Zero(4);
    m.input_mean = Vec::Zero(input_dim);
    m.input_scale = Vec::Ones(input_dim);
    return m;
  }

  template <typename T>
  MlpModel<T> cast() const {
    MlpModel<T> m;
    m.features = features;
    m.input_mean = input_mean.template cast<T>();
    m.input_scale = input_scale.template cast<T>();
    m.w1 = w1.template cast<T>();
    m.b1 = b1.template cast<T>();
    m.wd = wd.template cast<T>();
    m.bd = bd.template cast<T>();
    m.wo = wo.template cast<T>();
    m.bo = bo.template cast<T>();
    m.dropout_rate = dropout_rate;
    m.l2_weight = l2_weight;
    return m;
  }
};

template <typename S>
struct Gradients {
  typename MlpModel<S>::Mat w1, wd, wo;
  typename MlpModel<S>::Vec b1, bd, bo;
};

// Column-major batch: one column per example. Occlusion label -1 masks the
// occlusion head for that column.
template <typename S>
struct Batch {
  typename MlpModel<S>::Mat x;
  std::vector<int> depth;
  std::vector<int> occlusion;
};

struct LossParts {
  double depth = 0.0;
  double occlusion = 0.0;
  double l2 = 0.0;
  double total() const { return depth + occlusion + l2; }
};

template <typename S>
struct ForwardResult {
  typename MlpModel<S>::Mat z1;      // pre-activation
  typename MlpModel<S>::Mat hidden;  // after rectifier and dropout
  typename MlpModel<S>::Mat depth_logits;
  typename MlpModel<S>::Mat occlusion_logits;
  typename MlpModel<S>::Mat input;  // standardized
};

// Inverted dropout mask: entries 0 or 1/(1-rate).
template <typename S>
typename MlpModel<S>::Mat sample_dropout_mask(int hidden, int columns, double rate,
                                              Rng& rng) {
  typename MlpModel<S>::Mat m(hidden, columns);
  const S keep = rate < 1.0 ? static_cast<S>(1.0 / (1.0 - rate)) : S(0);
  for (int j = 0; j < columns; ++j) {
    for (int i = 0; i < hidden; ++i) m(i, j) = rng.uniform01() < rate ? S(0) : keep;
  }
  return m;
}

// Train mode is signalled by a dropout mask; without one the pass is the
// deterministic inference pass.
template <typename S>
ForwardResult<S> forward(const MlpModel<S>& model, const typename MlpModel<S>::Mat& x,
                         const typename MlpModel<S>::Mat* dropout_mask = nullptr) {
  if (x.rows() != model.input_dim()) {
    throw ValidationError("input has dimension " + std::to_string(x.rows()) +
                          ", model expects " + std::to_string(model.input_dim()));
  }
  ForwardResult<S> r;
  r.input = (x.colwise() - model.input_mean).array().colwise() * model.input_scale.array();
  r.z1 = (model.w1 * r.input).colwise() + model.b1;
  r.hidden = r.z1.cwiseMax(S(0));
  if (dropout_mask) {
    if (dropout_mask->rows() != r.hidden.rows() || dropout_mask->cols() != r.hidden.cols()) {
      throw ValidationError("dropout mask shape mismatch");
    }
    r.hidden = r.hidden.cwiseProduct(*dropout_mask);
  }
  r.depth_logits = (model.wd * r.hidden).colwise() + model.bd;
  r.occlusion_logits = (model.wo * r.hidden).colwise() + model.bo;
  return r;
}

namespace detail {

// Mean cross-entropy over `n` columns for the columns with labels >= 0, and
// d(loss)/d(logits) written to `grad`.
template <typename S>
double softmax_xent(const typename MlpModel<S>::Mat& logits, const std::vector<int>& labels,
                    int n, typename MlpModel<S>::Mat& grad) {
  grad = MlpModel<S>::Mat::Zero(logits.rows(), logits.cols());
  double loss = 0.0;
  for (int j = 0; j < logits.cols(); ++j) {
    const int y = labels[j];
    if (y < 0) continue;
    const S mx = logits.col(j).maxCoeff();
    const auto e = (logits.col(j).array() - mx).exp();
    const S sum = e.sum();
    loss += -(static_cast<double>(logits(y, j) - mx) - std::log(static_cast<double>(sum)));
    grad.col(j) = (e / sum).matrix() / static_cast<S>(n);
    grad(y, j) -= S(1) / static_cast<S>(n);
  }
  return loss / n;
}

}  // namespace detail

// Loss = mean depth CE + mean occlusion CE (masked columns contribute 0;
// both means divide by the batch size) + l2 * sum of squared weights.
// Gradients are written when `grads` is non-null.
template <typename S>
LossParts loss_and_grads(const MlpModel<S>& model, const Batch<S>& batch,
                         const typename MlpModel<S>::Mat* dropout_mask,
                         std::type_identity_t<Gradients<S>>* grads) {
  const int n = static_cast<int>(batch.x.cols());
  if (n == 0) throw ValidationError("empty batch");
  if (static_cast<int>(batch.depth.size()) != n ||
      static_cast<int>(batch.occlusion.size()) != n) {
    throw ValidationError("batch label count mismatch");
  }
  for (int j = 0; j < n; ++j) {
    if (batch.depth[j] < 0 || batch.depth[j] > 3) {
      throw ValidationError("depth label code " + std::to_string(batch.depth[j]) +
                            " out of range");
    }
    if (batch.occlusion[j] < -1 || batch.occlusion[j] > 3) {
      throw ValidationError("occlusion label code " + std::to_string(batch.occlusion[j]) +
                            " out of range");
    }
  }
  const ForwardResult<S> f = forward(model, batch.x, dropout_mask);
  typename MlpModel<S>::Mat gd, go;
  LossParts out;
  out.depth = detail::softmax_xent<S>(f.depth_logits, batch.depth, n, gd);
  out.occlusion = detail::softmax_xent<S>(f.occlusion_logits, batch.occlusion, n, go);
  out.l2 = model.l2_weight * (static_cast<double>(model.w1.squaredNorm()) +
                              static_cast<double>(model.wd.squaredNorm()) +
                              static_cast<double>(model.wo.squaredNorm()));
  if (!grads) return out;
  const S l2x2 = static_cast<S>(2.0 * model.l2_weight);
  grads->wd = gd * f.hidden.transpose() + l2x2 * model.wd;
  grads->bd = gd.rowwise().sum();
  grads->wo = go * f.hidden.transpose() + l2x2 * model.wo;
  grads->bo = go.rowwise().sum();
  typename MlpModel<S>::Mat dh = model.wd.transpose() * gd + model.wo.transpose() * go;
  if (dropout_mask) dh = dh.cwiseProduct(*dropout_mask);
  const typename MlpModel<S>::Mat dz =
      dh.cwiseProduct((f.z1.array() > S(0)).template cast<S>().matrix());
  grads->w1 = dz * f.input.transpose() + l2x2 * model.w1;
  grads->b1 = dz.rowwise().sum();
  return out;
}

template <typename S>
class Adam {
 public:
  explicit Adam(double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : lr_(lr), b1_(beta1), b2_(beta2), eps_(eps) {}

  void step(MlpModel<S>& m, const Gradients<S>& g) {
    ++t_;
    update(m.w1, g.w1, state_[0]);
    update(m.b1, g.b1, state_[1]);
    update(m.wd, g.wd, state_[2]);
    update(m.bd, g.bd, state_[3]);
    update(m.wo, g.wo, state_[4]);
    update(m.bo, g.bo, state_[5]);
  }

  long steps() const { return t_; }

 private:
  using Array = Eigen::Array<S, Eigen::Dynamic, Eigen::Dynamic>;
  struct Moments {
    Array first, second;
  };

  template <typename P, typename G>
  void update(P& param, const G& grad, Moments& s) {
    if (s.first.size() == 0) {
      s.first = Array::Zero(grad.rows(), grad.cols());
      s.second = Array::Zero(grad.rows(), grad.cols());
    }
    const Array g = grad.array();
    s.first = static_cast<S>(b1_) * s.first + static_cast<S>(1 - b1_) * g;
    s.second = static_cast<S>(b2_) * s.second + static_cast<S>(1 - b2_) * g.square();
    const S c1 = static_cast<S>(1 - std::pow(b1_, t_));
    const S c2 = static_cast<S>(1 - std::pow(b2_, t_));
    const Array delta =
        static_cast<S>(lr_) * (s.first / c1) / ((s.second / c2).sqrt() + static_cast<S>(eps_));
    param.array() -= delta;
  }

  double lr_, b1_, b2_, eps_;
  long t_ = 0;
  Moments state_[6];
};

// ---------------------------------------------------------------------------
// Training.

enum class TrainSetting { kWithin, kAcross, kJoint };

inline const char* name(TrainSetting s) {
  static constexpr const char* kNames[] = {"within", "across", "joint"};
  return kNames[static_cast<int>(s)];
}

inline TrainSetting train_setting_from_name(std::string_view s) {
  for (TrainSetting t : {TrainSetting::kWithin, TrainSetting::kAcross, TrainSetting::kJoint}) {
    if (s == name(t)) return t;
  }
  throw ValidationError("unknown training setting '" + std::string(s) +
                        "' (expected within, across or joint)");
}

struct TrainConfig {
  double learning_rate = 2e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  int batch_size = 32;
  long steps = 60000;
  std::uint64_t seed = 0;
  double box_jitter_frac = 0.10;
  bool swap_augmentation = true;
  TrainSetting setting = TrainSetting::kWithin;
  int hidden = 1024;
  double dropout_rate = 0.5;
  double l2_weight = 1e-4;
  bool standardize_inputs = true;
  int log_every = 100;

  void validate() const {
    if (steps < 1 || batch_size < 1) throw ValidationError("train: steps and batch_size >= 1");
    if (swap_augmentation && batch_size % 2 != 0) {
      throw ValidationError("train: swap augmentation needs an even batch_size");
    }
    if (!(box_jitter_frac >= 0 && box_jitter_frac < 0.5)) {
      throw ValidationError("train: box_jitter_frac must be in [0, 0.5)");
    }
    if (!(learning_rate > 0)) throw ValidationError("train: learning_rate > 0");
    if (!(dropout_rate >= 0 && dropout_rate < 1)) {
      throw ValidationError("train: dropout_rate must be in [0, 1)");
    }
    if (hidden < 1 || l2_weight < 0 || log_every < 1) {
      throw ValidationError("train: need hidden >= 1, l2_weight >= 0, log_every >= 1");
    }
  }

  static TrainConfig from_config(const KeyValueConfig& kv) {
    kv.check_known({"learning_rate", "beta1", "beta2", "epsilon", "batch_size", "steps",
                    "seed", "box_jitter_frac", "swap_augmentation", "setting", "hidden",
                    "dropout_rate", "l2_weight", "standardize_inputs", "log_every"});
    TrainConfig c;
    c.learning_rate = kv.get_double("learning_rate", c.learning_rate);
    c.beta1 = kv.get_double("beta1", c.beta1);
    c.beta2 = kv.get_double("beta2", c.beta2);
    c.epsilon = kv.get_double("epsilon", c.epsilon);
    c.batch_size = static_cast<int>(kv.get_int("batch_size", c.batch_size));
    c.steps = kv.get_int("steps", c.steps);
    c.seed = static_cast<std::uint64_t>(kv.get_int("seed", static_cast<long long>(c.seed)));
    c.box_jitter_frac = kv.get_double("box_jitter_frac", c.box_jitter_frac);
    c.swap_augmentation = kv.get_bool("swap_augmentation", c.swap_augmentation);
    c.setting = train_setting_from_name(kv.get_string("setting", name(c.setting)));
    c.hidden = static_cast<int>(kv.get_int("hidden", c.hidden));
    c.dropout_rate = kv.get_double("dropout_rate", c.dropout_rate);
    c.l2_weight = kv.get_double("l2_weight", c.l2_weight);
    c.standardize_inputs = kv.get_bool("standardize_inputs", c.standardize_inputs);
    c.log_every = static_cast<int>(kv.get_int("log_every", c.log_every));
    c.validate();
    return c;
  }
};

struct TrainingExample {
  ObjectInstance a;
  ObjectInstance b;
  Setting setting = Setting::kWithin;
  PairPredicates label;
};

// Training-split pairs of the chosen setting that carry a depth label.
inline std::vector<TrainingExample> training_examples(const DatasetBundle& bundle,
                                                      TrainSetting setting) {
  std::unordered_map<std::string, const ObjectInstance*> objects;
  for (const auto& o : bundle.objects) objects[o.object_id] = &o;
  std::unordered_map<std::string, Split> split_of;
  for (const auto& im : bundle.images) split_of[im.image_id] = im.split;
  std::vector<TrainingExample> out;
  for (const auto& p : bundle.pairs) {
    if (setting == TrainSetting::kWithin && p.setting != Setting::kWithin) continue;
    if (setting == TrainSetting::kAcross && p.setting != Setting::kAcross) continue;
    const auto sa = split_of.find(p.image_id_a), sb = split_of.find(p.image_id_b);
    if (sa == split_of.end() || sb == split_of.end() || sa->second != Split::kTrain ||
        sb->second != Split::kTrain || !p.label.depth) {
      continue;
    }
    const auto a = objects.find(p.object_id_a), b = objects.find(p.object_id_b);
    if (a == objects.end() || b == objects.end()) {
      throw IntegrityError("training pair " + p.pair_id + " references unknown objects");
    }
    out.push_back({*a->second, *b->second, p.setting, p.label});
  }
  return out;
}

// The example followed, when `swap` is set, by its swapped copy with the
// flipped label.
inline std::vector<TrainingExample> augment_rows(const std::vector<TrainingExample>& examples,
                                                 const std::vector<std::size_t>& picks,
                                                 bool swap) {
  std::vector<TrainingExample> rows;
  for (std::size_t i : picks) {
    const TrainingExample& e = examples.at(i);
    rows.push_back(e);
    if (swap) rows.push_back({e.b, e.a, e.setting, flip(e.label)});
  }
  return rows;
}

// Scales center-x, center-y, width and height each by an independent factor
// in [1 - frac, 1 + frac], clamped to the image. Degenerate results keep the
// original box.
inline Box jitter_box(const Box& b, double frac, Rng& rng) {
  if (frac <= 0) return b;
  const double cx = b.center_x() * (1 + rng.uniform(-frac, frac));
  const double cy = b.center_y() * (1 + rng.uniform(-frac, frac));
  const double w = b.width() * (1 + rng.uniform(-frac, frac));
  const double h = b.height() * (1 + rng.uniform(-frac, frac));
  const double x0 = std::clamp(cx - 0.5 * w, 0.0, 1.0), x1 = std::clamp(cx + 0.5 * w, 0.0, 1.0);
  const double y0 = std::clamp(cy - 0.5 * h, 0.0, 1.0), y1 = std::clamp(cy + 0.5 * h, 0.0, 1.0);
  if (!(x0 < x1 && y0 < y1)) return b;
  return Box(x0, y0, x1, y1);
}

// `bbox_boxes`, when given, supplies per-row (a, b) boxes for the bbox block.
template <typename S>
Batch<S> make_batch(PairFeaturizer& featurize, const std::vector<TrainingExample>& rows,
                    const std::vector<std::pair<Box, Box>>* bbox_boxes = nullptr) {
  Batch<S> batch;
  const int dim = featurize.config().dim();
  batch.x.resize(dim, static_cast<Eigen::Index>(rows.size()));
  for (std::size_t j = 0; j < rows.size(); ++j) {
    const auto& r = rows[j];
    const Box& ba = bbox_boxes ? (*bbox_boxes)[j].first : r.a.box;
    const Box& bb = bbox_boxes ? (*bbox_boxes)[j].second : r.b.box;
    featurize(r.a, r.b, r.setting, ba, bb, batch.x.col(static_cast<Eigen::Index>(j)));
    batch.depth.push_back(code(*r.label.depth));
    batch.occlusion.push_back(r.setting == Setting::kWithin && r.label.occlusion
                                  ? code(*r.label.occlusion)
                                  : -1);
  }
  return batch;
}

struct TrainResult {
  MlpModel<float> model;
  std::vector<LossParts> history;  // one entry per step
};

inline std::string encode_training_log(const std::vector<LossParts>& history,
                                       double learning_rate, int every) {
  std::string out = "step,loss_depth,loss_occl,l2,lr\n";
  for (std::size_t s = 0; s < history.size(); ++s) {
    if ((s + 1) % every != 0 && s + 1 != history.size()) continue;
    out += csv_row({std::to_string(s + 1), format_double(history[s].depth),
                    format_double(history[s].occlusion), format_double(history[s].l2),
                    format_double(learning_rate)});
  }
  return out;
}

inline TrainResult train_mlp(const std::vector<TrainingExample>& examples,
                             const FeatureConfig& features, const FeatureArtifacts& artifacts,
                             const TrainConfig& cfg) {
  cfg.validate();
  if (examples.empty()) throw ValidationError("no training examples for this setting");
  PairFeaturizer featurize(features, artifacts);
  Rng rng(derive_seed(cfg.seed, "mlp/train"));
  Rng init_rng(derive_seed(cfg.seed, "mlp/init"));

  TrainResult out;
  MlpModel<float>& model = out.model;
  model = MlpModel<float>::init(features.dim(), cfg.hidden, init_rng);
  model.features = features;
  model.dropout_rate = cfg.dropout_rate;
  model.l2_weight = cfg.l2_weight;
  if (cfg.standardize_inputs) {
    std::vector<std::size_t> all(examples.size());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    const Batch<double> full =
        make_batch<double>(featurize, augment_rows(examples, all, cfg.swap_augmentation));
    const Eigen::VectorXd mean = full.x.rowwise().mean();
    const Eigen::VectorXd sd =
        ((full.x.colwise() - mean).array().square().rowwise().mean()).sqrt();
    model.input_mean = mean.cast<float>();
    model.input_scale = sd.unaryExpr([](double s) { return s > 1e-12 ? 1.0 / s : 1.0; })
                            .cast<float>();
  }

  Adam<float> adam(cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.epsilon);
  Gradients<float> grads;
  const int picks_per_step = cfg.swap_augmentation ? cfg.batch_size / 2 : cfg.batch_size;
  std::vector<std::size_t> picks(picks_per_step);
  std::vector<std::pair<Box, Box>> jittered;
  out.history.reserve(static_cast<std::size_t>(cfg.steps));
  for (long step = 0; step < cfg.steps; ++step) {
    for (auto& p : picks) p = rng.below(examples.size());
    const auto rows = augment_rows(examples, picks, cfg.swap_augmentation);
    jittered.clear();
    for (const auto& r : rows) {
      const Box ja = jitter_box(r.a.box, cfg.box_jitter_frac, rng);
      jittered.emplace_back(ja, jitter_box(r.b.box, cfg.box_jitter_frac, rng));
    }
    const Batch<float> batch = make_batch<float>(featurize, rows, &jittered);
    const auto mask = sample_dropout_mask<float>(cfg.hidden, static_cast<int>(rows.size()),
                                                 cfg.dropout_rate, rng);
    out.history.push_back(loss_and_grads(model, batch, &mask, &grads));
    adam.step(model, grads);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Prediction.

// Argmax per head for every candidate pair; both orders are predicted
// independently. Across-image pairs mask the SAME_DEPTH logit and get no
// occlusion answer.
inline PredictionSet predict_mlp(const MlpModel<float>& model,
                                 const std::vector<ImageRecord>& images,
                                 const std::vector<ObjectInstance>& objects,
                                 const FilterConfig& filter, Split split,
                                 const FeatureArtifacts& artifacts) {
  PairFeaturizer featurize(model.features, artifacts);
  std::unordered_map<std::string, const ObjectInstance*> by_id;
  for (const auto& o : objects) by_id[o.object_id] = &o;
  const SampledPairs slots = candidate_pairs(images, objects, filter, split);
  PredictionSet set;
  set.model_name = "mlp_" + model.features.letters();
  set.objects = objects;
  constexpr std::size_t kChunk = 512;
  for (const auto* group : {&slots.within, &slots.across}) {
    for (std::size_t start = 0; start < group->size(); start += kChunk) {
      const std::size_t end = std::min(group->size(), start + kChunk);
      Eigen::MatrixXf x(model.input_dim(), static_cast<Eigen::Index>(end - start));
      for (std::size_t i = start; i < end; ++i) {
        const auto& s = (*group)[i];
        featurize(*by_id.at(s.object_id_a), *by_id.at(s.object_id_b), s.setting,
                  x.col(static_cast<Eigen::Index>(i - start)));
      }
      const auto f = forward(model, x);
      for (std::size_t i = start; i < end; ++i) {
        const auto& s = (*group)[i];
        const auto col = static_cast<Eigen::Index>(i - start);
        Eigen::Vector4f depth = f.depth_logits.col(col);
        if (s.setting == Setting::kAcross) {
          depth(code(DepthPredicate::kSameDepth)) = -std::numeric_limits<float>::infinity();
        }
        Eigen::Index d = 0, o = 0;
        depth.maxCoeff(&d);
        PairPredicates p;
        p.depth = depth_from_code(static_cast<int>(d));
        if (s.setting == Setting::kWithin) {
          f.occlusion_logits.col(col).maxCoeff(&o);
          p.occlusion = occlusion_from_code(static_cast<int>(o));
        }
        Prediction pred;
        pred.setting = s.setting;
        pred.image_id_a = s.image_id_a;
        pred.object_id_a = s.object_id_a;
        pred.image_id_b = s.image_id_b;
        pred.object_id_b = s.object_id_b;
        pred.depth = *p.depth;
        pred.occlusion = p.occlusion;
        set.predictions.push_back(std::move(pred));
      }
    }
  }
  return set;
}

// ---------------------------------------------------------------------------
// Checkpoints.

inline constexpr char kModelMagic[4] = {'V', 'R', 'D', 'M'};
inline constexpr std::uint32_t kModelVersion = 1;

inline std::string encode_model(const MlpModel<float>& m) {
  std::string out(kModelMagic, 4);
  detail::put_u32_le(out, kModelVersion);
  const std::uint64_t h = m.features.hash();
  detail::put_u32_le(out, static_cast<std::uint32_t>(h));
  detail::put_u32_le(out, static_cast<std::uint32_t>(h >> 32));
  const std::uint32_t flags = (m.features.use_class ? 1u : 0u) |
                              (m.features.use_bbox ? 2u : 0u) |
                              (m.features.use_depth ? 4u : 0u) |
                              (m.features.use_appearance ? 8u : 0u);
  detail::put_u32_le(out, flags);
  detail::put_u32_le(out, static_cast<std::uint32_t>(m.features.class_vocab_size));
  detail::put_u32_le(out, static_cast<std::uint32_t>(m.features.appearance_dim));
  detail::put_u32_le(out, static_cast<std::uint32_t>(m.input_dim()));
  detail::put_u32_le(out, static_cast<std::uint32_t>(m.hidden_dim()));
  detail::put_f32_le(out, static_cast<float>(m.dropout_rate));
  detail::put_f32_le(out, static_cast<float>(m.l2_weight));
  auto put_matrix = [&](const Eigen::MatrixXf& w) {
    for (Eigen::Index i = 0; i < w.rows(); ++i) {
      for (Eigen::Index j = 0; j < w.cols(); ++j) detail::put_f32_le(out, w(i, j));
    }
  };
  auto put_vector = [&](const Eigen::VectorXf& v) {
    for (Eigen::Index i = 0; i < v.size(); ++i) detail::put_f32_le(out, v(i));
  };
  put_vector(m.input_mean);
  put_vector(m.input_scale);
  put_matrix(m.w1);
  put_vector(m.b1);
  put_matrix(m.wd);
  put_vector(m.bd);
  put_matrix(m.wo);
  put_vector(m.bo);
  return out;
}

inline MlpModel<float> decode_model(const std::string& data, const std::string& source) {
  constexpr std::size_t kHeader = 44;
  if (data.size() < kHeader || std::memcmp(data.data(), kModelMagic, 4) != 0) {
    throw ValidationError(source + ": not a model checkpoint (bad magic)");
  }
  const auto* p = reinterpret_cast<const unsigned char*>(data.data());
  if (detail::get_u32_le(p + 4) != kModelVersion) {
    throw ValidationError(source + ": unsupported checkpoint version");
  }
  const std::uint64_t hash =
      detail::get_u32_le(p + 8) | (static_cast<std::uint64_t>(detail::get_u32_le(p + 12)) << 32);
  const std::uint32_t flags = detail::get_u32_le(p + 16);
  MlpModel<float> m;
  m.features.use_class = flags & 1u;
  m.features.use_bbox = flags & 2u;
  m.features.use_depth = flags & 4u;
  m.features.use_appearance = flags & 8u;
  m.features.class_vocab_size = static_cast<int>(detail::get_u32_le(p + 20));
  m.features.appearance_dim = static_cast<int>(detail::get_u32_le(p + 24));
  const int in = static_cast<int>(detail::get_u32_le(p + 28));
  const int hidden = static_cast<int>(detail::get_u32_le(p + 32));
  m.dropout_rate = detail::get_f32_le(p + 36);
  m.l2_weight = detail::get_f32_le(p + 40);
  if (m.features.hash() != hash || m.features.dim() != in) {
    throw ValidationError(source + ": feature configuration does not match its hash");
  }
  const std::size_t floats = 2 * static_cast<std::size_t>(in) +
                             static_cast<std::size_t>(hidden) * (in + 1) +
                             2 * (4 * static_cast<std::size_t>(hidden) + 4);
  if (data.size() != kHeader + 4 * floats) {
    throw ValidationError(source + ": checkpoint payload size mismatch");
  }
  std::size_t pos = kHeader;
  auto next = [&] {
    const float v = detail::get_f32_le(p + pos);
    pos += 4;
    return v;
  };
  auto get_matrix = [&](Eigen::MatrixXf& w, int rows, int cols) {
    w.resize(rows, cols);
    for (int i = 0; i < rows; ++i) {
      for (int j = 0; j < cols; ++j) w(i, j) = next();
    }
  };
  auto get_vector = [&](Eigen::VectorXf& v, int n) {
    v.resize(n);
    for (int i = 0; i < n; ++i) v(i) = next();
  };
  get_vector(m.input_mean, in);
  get_vector(m.input_scale, in);
  get_matrix(m.w1, hidden, in);
  get_vector(m.b1, hidden);
  get_matrix(m.wd, 4, hidden);
  get_vector(m.bd, 4);
  get_matrix(m.wo, 4, hidden);
  get_vector(m.bo, 4);
  return m;
}

inline void write_model(const MlpModel<float>& m, const std::filesystem::path& path) {
  write_file_atomic(path, encode_model(m));
}

inline MlpModel<float> read_model(const std::filesystem::path& path) {
  return decode_model(read_text_file(path), path.string());
}

}  // namespace vrd25

#endif  // VRD25_MLP_HPP_
