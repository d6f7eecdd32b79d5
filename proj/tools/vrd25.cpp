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

// vrd25: command-line front end. Every subcommand reads and validates its
// inputs, builds its outputs in a staging directory next to --out and
// renames it into place. Exit codes: 0 success, 1 invalid input, 2 runtime
// failure.

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

// Eigen (via mlp.hpp) must precede httplib: <resolv.h> defines a `_res`
// macro that collides with Eigen's internals.
#include "vrd25/mlp.hpp"

#include "CLI11.hpp"
#include "vrd25/aggregation.hpp"
#include "vrd25/annotation_service.hpp"
#include "vrd25/baselines.hpp"
#include "vrd25/core.hpp"
#include "vrd25/dataset.hpp"
#include "vrd25/evaluation.hpp"
#include "vrd25/import.hpp"
#include "vrd25/raster_io.hpp"
#include "vrd25/synthetic.hpp"
#include "vrd25/text_io.hpp"

namespace vrd25::cli {
namespace {

namespace fs = std::filesystem;

// Bundle directory layout beyond the dataset-io files.
constexpr const char* kDetectionsFile = "detections.csv";
constexpr const char* kTruthFile = "truth.csv";
constexpr const char* kFilterFile = "filter.cfg";
constexpr const char* kClassMetaFile = "class_metadata.csv";
constexpr const char* kPartOfFile = "part_of.csv";
constexpr const char* kDepthDir = "depth";
constexpr const char* kFeatureDir = "features";

// Output directory that only appears once complete.
class StagedDir {
 public:
  explicit StagedDir(fs::path target) : target_(std::move(target)) {
    staging_ = target_;
    staging_ += ".partial";
    fs::remove_all(staging_);
    fs::create_directories(staging_);
  }
  StagedDir(const StagedDir&) = delete;
  StagedDir& operator=(const StagedDir&) = delete;
  ~StagedDir() {
    if (!committed_) {
      std::error_code ec;
      fs::remove_all(staging_, ec);
    }
  }

  fs::path operator/(const fs::path& rel) const { return staging_ / rel; }
  const fs::path& path() const { return staging_; }

  void commit() {
    if (fs::exists(target_)) fs::remove_all(target_);
    if (target_.has_parent_path()) fs::create_directories(target_.parent_path());
    fs::rename(staging_, target_);
    committed_ = true;
  }

 private:
  fs::path target_;
  fs::path staging_;
  bool committed_ = false;
};

// Rejects an --out that would overwrite one of the inputs.
void check_output(const fs::path& out, const std::vector<fs::path>& inputs) {
  if (out.empty()) throw ValidationError("--out is required");
  const fs::path o = fs::weakly_canonical(out);
  for (const auto& in : inputs) {
    if (in.empty()) continue;
    const fs::path i = fs::weakly_canonical(in);
    auto [a, b] = std::mismatch(o.begin(), o.end(), i.begin(), i.end());
    if (a == o.end() || b == i.end()) {
      throw ValidationError("output " + out.string() + " overlaps input " + in.string());
    }
  }
}

std::optional<ClassMetadata> bundle_class_metadata(const fs::path& dir) {
  if (!fs::exists(dir / kClassMetaFile)) return std::nullopt;
  return read_class_metadata(dir / kClassMetaFile, dir / kPartOfFile);
}

// Class flags from the bundle's metadata, thresholds from its filter.cfg and
// then from `override_cfg`.
FilterConfig bundle_filter(const fs::path& dir, const fs::path& override_cfg = {}) {
  FilterConfig f;
  if (const auto meta = bundle_class_metadata(dir)) f = FilterConfig::from_metadata(*meta);
  if (fs::exists(dir / kFilterFile)) {
    f = FilterConfig::from_config(KeyValueConfig::read(dir / kFilterFile), f);
  }
  if (!override_cfg.empty()) f = FilterConfig::from_config(KeyValueConfig::read(override_cfg), f);
  return f;
}

std::string encode_filter(const FilterConfig& f) {
  return "min_area_frac=" + format_double(f.min_area_frac) +
         "\nmax_area_frac=" + format_double(f.max_area_frac) +
         "\npair_iou_max=" + format_double(f.pair_iou_max) + "\n";
}

// Carries class metadata and filter thresholds into a derived directory.
void copy_bundle_meta(const fs::path& from, const StagedDir& to, const FilterConfig& filter) {
  for (const char* f : {kClassMetaFile, kPartOfFile}) {
    if (fs::exists(from / f)) write_file_atomic(to / f, read_text_file(from / f));
  }
  write_file_atomic(to / kFilterFile, encode_filter(filter));
}

int class_vocab_size(const DatasetBundle& b, const fs::path& dir) {
  if (const auto meta = bundle_class_metadata(dir)) return meta->vocabulary_size();
  int n = 0;
  for (const auto& o : b.objects) n = std::max(n, o.class_id + 1);
  return n;
}

MatchingConfig matching_config(const fs::path& cfg) {
  return cfg.empty() ? MatchingConfig{} : MatchingConfig::from_config(KeyValueConfig::read(cfg));
}

std::vector<ObjectInstance> read_objects_file(const fs::path& path) {
  return parse_objects(CsvTable::read(path));
}

// Depth maps and appearance vectors found under an artifacts directory.
struct Artifacts {
  std::map<std::string, DepthMap> depth_maps;
  std::map<std::string, std::vector<float>> image_features;
  std::map<std::string, std::vector<float>> object_features;
  int appearance_dim = 0;

  FeatureArtifacts view() const { return {&depth_maps, &image_features, &object_features}; }
};

// Depth maps live in <dir>/depth when that exists, else directly in <dir>.
// Features are optional and only loaded on request.
Artifacts load_artifacts(const fs::path& dir, const std::vector<ImageRecord>& images,
                         const std::vector<std::vector<ObjectInstance>*>& objects,
                         bool want_depth, bool want_features) {
  Artifacts art;
  if (dir.empty()) return art;
  if (want_depth) {
    const fs::path depth_dir = fs::is_directory(dir / kDepthDir) ? dir / kDepthDir : dir;
    for (const auto& im : images) {
      if (const auto p = find_depth_map(depth_dir, im.image_id)) {
        art.depth_maps.emplace(im.image_id, read_depth_map(*p));
      }
    }
  }
  if (want_features) {
    const fs::path fdir = dir / kFeatureDir;
    auto check_dim = [&](const std::vector<float>& v, const fs::path& p) {
      if (art.appearance_dim == 0) art.appearance_dim = static_cast<int>(v.size());
      if (static_cast<int>(v.size()) != art.appearance_dim) {
        throw ValidationError(p.string() + ": feature dimension " + std::to_string(v.size()) +
                              " differs from " + std::to_string(art.appearance_dim));
      }
    };
    for (const auto& im : images) {
      const fs::path p = image_feature_path(fdir, im.image_id);
      if (!fs::exists(p)) continue;
      auto v = read_features(p);
      check_dim(v, p);
      art.image_features.emplace(im.image_id, std::move(v));
    }
    for (const auto* list : objects) {
      for (const auto& o : *list) {
        const fs::path p = object_feature_path(fdir, o.image_id, o.object_id);
        if (!fs::exists(p)) continue;
        auto v = read_features(p);
        check_dim(v, p);
        art.object_features.emplace(o.object_id, std::move(v));
      }
    }
  }
  return art;
}

// ---------------------------------------------------------------------------
// Models.

struct ModelSpec {
  std::string text;
  std::optional<Rule> rule;
  std::optional<MlpModel<float>> mlp;
  bool oracle = false;  // groundtruth predicates on matched pairs

  bool needs_depth() const {
    return (rule && *rule == Rule::kDepth) || (mlp && mlp->features.use_depth);
  }
  bool needs_features() const { return mlp && mlp->features.use_appearance; }
};

// "rule:size", "rule:location", "rule:depth", "rule:class", "mlp:<path>" or
// "oracle".
ModelSpec parse_model(const std::string& text) {
  ModelSpec m;
  m.text = text;
  if (text == "oracle") {
    m.oracle = true;
    m.rule = Rule::kSize;  // supplies the candidate slots
    return m;
  }
  const auto colon = text.find(':');
  const std::string kind = text.substr(0, colon);
  const std::string arg = colon == std::string::npos ? "" : text.substr(colon + 1);
  if (kind == "rule") {
    m.rule = arg == "class" ? Rule::kClassPrior : rule_from_name(arg);
  } else if (kind == "mlp") {
    if (arg.empty()) throw ValidationError("--model mlp:<checkpoint path>");
    m.mlp = read_model(arg);
  } else {
    throw ValidationError("unknown model '" + text + "' (expected rule:<name> or mlp:<path>)");
  }
  return m;
}

struct RuleFlags {
  fs::path margins;
  std::string anchor = "bottom";
  bool inverse_depth = false;

  RuleOptions options() const {
    RuleOptions o;
    if (!margins.empty()) o.margins = RuleMargins::from_config(KeyValueConfig::read(margins));
    if (anchor == "bottom") {
      o.anchor = LocationAnchor::kBottom;
    } else if (anchor == "center") {
      o.anchor = LocationAnchor::kCenter;
    } else {
      throw ValidationError("--anchor must be bottom or center");
    }
    o.depth_larger_is_closer = inverse_depth;
    return o;
  }
};

void add_rule_flags(CLI::App* app, RuleFlags& f) {
  app->add_option("--margins", f.margins, "Rule margins file (delta_s, delta_l, delta_d)")
      ->check(CLI::ExistingFile);
  app->add_option("--anchor", f.anchor, "Location rule anchor: bottom or center")
      ->capture_default_str();
  app->add_flag("--inverse-depth", f.inverse_depth,
                "Depth maps store larger values for nearer surfaces");
}

// Everything a predictor needs besides the object list.
struct Workspace {
  DatasetBundle bundle;
  FilterConfig filter;
  Artifacts artifacts;
  std::optional<ClassPriorTable> prior;
};

PredictionSet run_model(const ModelSpec& model, const Workspace& ws, const RuleOptions& opt,
                        const std::vector<ObjectInstance>& objects, const EvalContext& ctx,
                        std::vector<SkippedPair>* skipped = nullptr) {
  const Split split = ctx.split;
  if (model.oracle) {
    PredictionSet set = with_oracle_predicates(
        predict_with_rule(Rule::kSize, ws.bundle.images, objects, ws.filter, split).set, ctx);
    set.model_name = "oracle";
    return set;
  }
  if (model.mlp) {
    return predict_mlp(*model.mlp, ws.bundle.images, objects, ws.filter, split,
                       ws.artifacts.view());
  }
  RuleInputs in;
  in.prior = ws.prior ? &*ws.prior : nullptr;
  in.depth_maps = &ws.artifacts.depth_maps;
  RulePredictions r =
      predict_with_rule(*model.rule, ws.bundle.images, objects, ws.filter, split, opt, in);
  if (skipped) *skipped = std::move(r.skipped);
  return std::move(r.set);
}

Workspace open_workspace(const fs::path& bundle_dir, const fs::path& artifacts_dir,
                         const fs::path& filter_cfg, const std::vector<const ModelSpec*>& models,
                         std::vector<ObjectInstance>* detections) {
  Workspace ws;
  ws.bundle = read_bundle(bundle_dir);
  ws.filter = bundle_filter(bundle_dir, filter_cfg);
  bool depth = false, features = false, prior = false;
  for (const auto* m : models) {
    depth = depth || m->needs_depth();
    features = features || m->needs_features();
    prior = prior || (m->rule && *m->rule == Rule::kClassPrior);
  }
  std::vector<std::vector<ObjectInstance>*> lists = {&ws.bundle.objects};
  if (detections) lists.push_back(detections);
  ws.artifacts = load_artifacts(artifacts_dir.empty() ? bundle_dir : artifacts_dir,
                                ws.bundle.images, lists, depth, features);
  if (prior) ws.prior = build_class_prior(ws.bundle);
  return ws;
}

std::vector<ObjectInstance> load_detections(const fs::path& bundle_dir, const fs::path& file) {
  const fs::path p = file.empty() ? bundle_dir / kDetectionsFile : file;
  if (!fs::exists(p)) throw ValidationError("detections file not found: " + p.string());
  return read_objects_file(p);
}

// Objects a predictor runs on: filtered groundtruth, or filtered detections
// trimmed to the groundtruth count per image.
std::vector<ObjectInstance> split_objects(const EvalContext& ctx, const std::string& which,
                                          const std::vector<ObjectInstance>& detections) {
  if (which == "groundtruth") return ctx.groundtruth;
  if (which != "detections") throw ValidationError("--objects must be groundtruth or detections");
  std::set<std::string> in_split;
  for (const auto& im : ctx.images) {
    if (im.split == ctx.split) in_split.insert(im.image_id);
  }
  std::vector<ObjectInstance> dets;
  for (const auto& d : detections) {
    if (in_split.count(d.image_id)) dets.push_back(d);
  }
  return prepare_detections(dets, ctx.groundtruth, ctx.filter, ctx.matching);
}

void print_metrics(const std::string& label, const MetricsReport& r) {
  std::printf("%s:", label.c_str());
  for (Task t : kAllTasks) std::printf(" %s_f1=%.4f", name(t), r[t].f1());
  std::printf(" average_f1=%.4f\n", r.average_f1());
}

// ---------------------------------------------------------------------------
// Subcommands.

struct GenArgs {
  fs::path config;
  std::uint64_t seed = 0;
  fs::path out;
};

int cmd_gen(const GenArgs& a) {
  check_output(a.out, {a.config});
  const GeneratorConfig cfg = a.config.empty()
                                  ? GeneratorConfig{}
                                  : GeneratorConfig::from_config(KeyValueConfig::read(a.config));
  const SyntheticBundle sb = generate_bundle(cfg, a.seed);
  StagedDir out(a.out);
  write_bundle(sb.bundle, out.path());
  write_file_atomic(out / kTruthFile, encode_relations(sb.truth, false));
  write_file_atomic(out / kDetectionsFile, encode_objects(sb.detections));
  write_file_atomic(out / "difficulty_report.csv", encode_difficulty_report(sb.difficulty_report));
  write_file_atomic(out / kFilterFile, encode_filter(synthetic_filter(cfg.scene)));
  fs::create_directories(out / kDepthDir);
  for (const auto& [id, map] : sb.depth_maps) {
    write_file_atomic(out / kDepthDir / (id + ".pfm"), encode_pfm(map));
  }
  if (!sb.image_features.empty()) {
    const fs::path fdir = out / kFeatureDir;
    for (const auto& [id, v] : sb.image_features) {
      fs::create_directories(fdir / id);
      write_file_atomic(image_feature_path(fdir, id), encode_features(v));
    }
    std::map<std::string, std::string> image_of;
    for (const auto* list : {&sb.bundle.objects, &sb.detections}) {
      for (const auto& o : *list) image_of[o.object_id] = o.image_id;
    }
    for (const auto& [id, v] : sb.object_features) {
      write_file_atomic(object_feature_path(fdir, image_of.at(id), id), encode_features(v));
    }
  }
  out.commit();
  std::printf("generated %zu images, %zu objects, %zu pairs, %zu votes, %zu detections\n",
              sb.bundle.images.size(), sb.bundle.objects.size(), sb.bundle.pairs.size(),
              sb.bundle.votes.size(), sb.detections.size());
  return 0;
}

struct ImportArgs {
  fs::path release_dir;
  fs::path class_meta;
  fs::path part_of;
  fs::path out;
};

int cmd_import(const ImportArgs& a) {
  check_output(a.out, {a.release_dir, a.class_meta});
  const fs::path part_of =
      a.part_of.empty() ? a.class_meta.parent_path() / kPartOfFile : a.part_of;
  const ClassMetadata meta = read_class_metadata(a.class_meta, part_of);
  StagedDir out(a.out);
  const ImportResult r = import_public_release(a.release_dir, meta, out / "rejects.csv");
  write_bundle(r.bundle, out.path());
  write_class_metadata(meta, out / kClassMetaFile, out / kPartOfFile);
  write_file_atomic(out / kFilterFile, encode_filter(FilterConfig{}));
  out.commit();
  std::printf("imported %zu images, %zu objects, %zu relations; %zu rows rejected\n",
              r.bundle.images.size(), r.bundle.objects.size(), r.bundle.pairs.size(), r.rejects);
  return 0;
}

struct FilterArgs {
  fs::path in;
  fs::path config;
  fs::path out;
};

int cmd_filter(const FilterArgs& a) {
  check_output(a.out, {a.in, a.config});
  const DatasetBundle b = read_bundle(a.in);
  const FilterConfig filter = bundle_filter(a.in, a.config);
  DatasetBundle kept;
  kept.images = b.images;
  kept.provenance = b.provenance;
  std::map<std::string, const ObjectInstance*> survivors;
  for (const auto& [image, objs] : b.objects_by_image()) {
    for (auto& o : filter_objects(objs, filter)) kept.objects.push_back(std::move(o));
  }
  for (const auto& o : kept.objects) survivors[o.object_id] = &o;
  std::map<Setting, std::pair<long, long>> pair_counts;
  std::set<std::string> kept_pairs;
  for (const auto& p : b.pairs) {
    auto& [before, after] = pair_counts[p.setting];
    ++before;
    const auto ia = survivors.find(p.object_id_a), ib = survivors.find(p.object_id_b);
    if (ia == survivors.end() || ib == survivors.end()) continue;
    if (p.setting == Setting::kWithin && !pair_admissible(*ia->second, *ib->second, filter)) {
      continue;
    }
    ++after;
    kept.pairs.push_back(p);
    kept_pairs.insert(p.pair_id);
  }
  for (const auto& v : b.votes) {
    if (kept_pairs.count(v.pair_id)) kept.votes.push_back(v);
  }

  StagedDir out(a.out);
  write_bundle(kept, out.path());
  copy_bundle_meta(a.in, out, filter);
  std::string report = "item,before,after\n";
  report += csv_row({"objects", std::to_string(b.objects.size()),
                     std::to_string(kept.objects.size())});
  for (Setting s : {Setting::kWithin, Setting::kAcross}) {
    report += csv_row({std::string(name(s)) + "_pairs", std::to_string(pair_counts[s].first),
                       std::to_string(pair_counts[s].second)});
  }
  report += csv_row({"votes", std::to_string(b.votes.size()), std::to_string(kept.votes.size())});
  write_file_atomic(out / "survival_report.csv", report);
  out.commit();
  std::printf("kept %zu of %zu objects and %zu of %zu pairs\n", kept.objects.size(),
              b.objects.size(), kept.pairs.size(), b.pairs.size());
  return 0;
}

struct SampleArgs {
  fs::path in;
  std::uint64_t seed = 0;
  std::string setting = "both";
  std::string split = "train";
  fs::path out;
};

// Writes an annotation task directory: the bundle's images and objects plus
// unlabeled candidate pairs.
int cmd_sample(const SampleArgs& a) {
  check_output(a.out, {a.in});
  const DatasetBundle b = read_bundle(a.in);
  const FilterConfig filter = bundle_filter(a.in);
  const Split split = split_from_name(a.split);
  if (a.setting != "within" && a.setting != "across" && a.setting != "both") {
    throw ValidationError("--setting must be within, across or both");
  }
  const SampledPairs sampled = split == Split::kTrain ? sample_training_pairs(b, filter, a.seed)
                                                      : exhaustive_eval_pairs(b, filter, split);
  DatasetBundle tasks;
  tasks.images = b.images;
  tasks.objects = b.objects;
  tasks.provenance = b.provenance;
  if (a.setting != "across") tasks.pairs = sampled.within;
  if (a.setting != "within") {
    tasks.pairs.insert(tasks.pairs.end(), sampled.across.begin(), sampled.across.end());
  }
  StagedDir out(a.out);
  write_bundle(tasks, out.path());
  copy_bundle_meta(a.in, out, filter);
  out.commit();
  std::printf("sampled %zu within-image and %zu across-image pairs from %s\n",
              a.setting == "across" ? 0 : sampled.within.size(),
              a.setting == "within" ? 0 : sampled.across.size(), name(split));
  return 0;
}

struct AggregateArgs {
  fs::path votes;
  fs::path pairs;
  int required_votes_eval = 5;
  fs::path out;
};

int cmd_aggregate(const AggregateArgs& a) {
  check_output(a.out, {a.votes, a.pairs});
  if (a.required_votes_eval < 1) throw ValidationError("--required-votes-eval >= 1");
  DatasetBundle b = read_bundle(a.pairs);
  b.votes = parse_votes(CsvTable::read(a.votes));
  check_integrity(b);
  std::map<std::string, Split> split_of;
  for (const auto& im : b.images) split_of[im.image_id] = im.split;
  const AggregationResult r =
      aggregate_bundle(b.pairs, b.votes, [&](const OrderedPairLabel& p) {
        return split_of.at(p.image_id_a) == Split::kTrain ? 1 : a.required_votes_eval;
      });
  DatasetBundle labelled;
  labelled.images = b.images;
  labelled.objects = b.objects;
  labelled.provenance = b.provenance;
  labelled.pairs = r.relations;
  std::set<std::string> kept;
  for (const auto& p : r.relations) kept.insert(p.pair_id);
  for (const auto& v : b.votes) {
    if (kept.count(v.pair_id)) labelled.votes.push_back(v);
  }
  StagedDir out(a.out);
  write_bundle(labelled, out.path());
  copy_bundle_meta(a.pairs, out, bundle_filter(a.pairs));
  write_file_atomic(out / "difficulty_report.csv", encode_difficulty_report(r.report));
  std::string ex = "pair_id,reason\n";
  for (const auto& e : r.exceptions) ex += csv_row({e.pair_id, e.reason});
  write_file_atomic(out / "aggregation_exceptions.csv", ex);
  out.commit();
  std::printf("aggregated %zu pairs; %zu exceptions\n", r.relations.size(), r.exceptions.size());
  if (!r.exceptions.empty()) {
    std::fprintf(stderr, "warning: %zu pairs left out, see aggregation_exceptions.csv\n",
                 r.exceptions.size());
  }
  return 0;
}

struct TrainArgs {
  fs::path in;
  fs::path artifacts;
  std::string features = "B+C+D+A";
  std::string setting;
  fs::path train_config;
  std::optional<long> steps;
  std::optional<std::uint64_t> seed;
  fs::path out_model;
  fs::path out_log;
};

int cmd_train(const TrainArgs& a) {
  check_output(a.out_model, {a.in, a.artifacts, a.train_config});
  TrainConfig cfg = a.train_config.empty()
                        ? TrainConfig{}
                        : TrainConfig::from_config(KeyValueConfig::read(a.train_config));
  if (!a.setting.empty()) cfg.setting = train_setting_from_name(a.setting);
  if (a.steps) cfg.steps = *a.steps;
  if (a.seed) cfg.seed = *a.seed;
  cfg.validate();
  std::string letters = a.features;
  std::replace(letters.begin(), letters.end(), ',', '+');

  DatasetBundle b = read_bundle(a.in);
  const FeatureConfig probe = FeatureConfig::parse(letters, 1, 1);
  const Artifacts art = load_artifacts(a.artifacts.empty() ? a.in : a.artifacts, b.images,
                                       {&b.objects}, probe.use_depth, probe.use_appearance);
  if (probe.use_appearance && art.appearance_dim == 0) {
    throw ValidationError("appearance features requested but none found under " +
                          (a.artifacts.empty() ? a.in : a.artifacts).string());
  }
  const FeatureConfig features =
      FeatureConfig::parse(letters, class_vocab_size(b, a.in), art.appearance_dim);
  const auto examples = training_examples(b, cfg.setting);
  const TrainResult r = train_mlp(examples, features, art.view(), cfg);

  fs::path log = a.out_log;
  if (log.empty()) {
    log = a.out_model;
    log += ".log.csv";
  }
  if (a.out_model.has_parent_path()) fs::create_directories(a.out_model.parent_path());
  write_model(r.model, a.out_model);
  write_file_atomic(log, encode_training_log(r.history, cfg.learning_rate, cfg.log_every));
  const auto& last = r.history.back();
  std::printf("trained %s on %zu %s examples for %ld steps; final loss depth=%.4f occl=%.4f\n",
              features.letters().c_str(), examples.size(), name(cfg.setting), cfg.steps,
              last.depth, last.occlusion);
  return 0;
}

struct PredictArgs {
  std::string model;
  fs::path in;
  fs::path artifacts;
  fs::path detections;
  std::string objects = "groundtruth";
  std::string split = "test";
  fs::path filter_config;
  fs::path matching_config;
  RuleFlags rule;
  fs::path out;
};

int cmd_predict(const PredictArgs& a) {
  check_output(a.out, {a.in, a.artifacts});
  const ModelSpec model = parse_model(a.model);
  const RuleOptions opt = a.rule.options();
  std::vector<ObjectInstance> dets;
  if (a.objects == "detections") dets = load_detections(a.in, a.detections);
  const Workspace ws = open_workspace(a.in, a.artifacts, a.filter_config, {&model}, &dets);
  const EvalContext ctx = make_eval_context(ws.bundle, ws.filter, split_from_name(a.split),
                                            matching_config(a.matching_config));
  const auto objects = split_objects(ctx, a.objects, dets);
  std::vector<SkippedPair> skipped;
  const PredictionSet set = run_model(model, ws, opt, objects, ctx, &skipped);

  StagedDir out(a.out);
  write_file_atomic(out / "predictions.csv", encode_predictions(set));
  write_file_atomic(out / "objects.csv", encode_objects(set.objects));
  std::string sk = "pair_id,reason\n";
  for (const auto& s : skipped) sk += csv_row({s.pair_id, s.reason});
  write_file_atomic(out / "skipped.csv", sk);
  out.commit();
  std::printf("%s: %zu predictions over %zu objects; %zu pairs skipped\n", set.model_name.c_str(),
              set.predictions.size(), set.objects.size(), skipped.size());
  return 0;
}

PredictionSet read_prediction_dir(const fs::path& dir) {
  PredictionSet set = parse_predictions(CsvTable::read(dir / "predictions.csv"));
  set.objects = read_objects_file(dir / "objects.csv");
  return set;
}

struct EvalArgs {
  fs::path pred;
  fs::path gt;
  fs::path matching_config;
  fs::path filter_config;
  std::string split = "test";
  fs::path out;
};

int cmd_eval(const EvalArgs& a) {
  check_output(a.out, {a.pred, a.gt});
  const PredictionSet set = read_prediction_dir(a.pred);
  const DatasetBundle b = read_bundle(a.gt);
  const EvalContext ctx = make_eval_context(b, bundle_filter(a.gt, a.filter_config),
                                            split_from_name(a.split),
                                            matching_config(a.matching_config));
  const MetricsReport report = score(set, ctx);
  StagedDir out(a.out);
  write_file_atomic(out / "metrics_report.csv", encode_metrics(report));
  write_file_atomic(out / "consistency_report.csv", encode_consistency(consistency_report(set)));
  out.commit();
  print_metrics(set.model_name, report);
  if (report.dropped_inadmissible > 0) {
    std::fprintf(stderr, "warning: %ld predictions on inadmissible pairs were dropped\n",
                 report.dropped_inadmissible);
  }
  return 0;
}

struct AnalyzeArgs {
  fs::path pred;
  fs::path gt;
  std::string strata = "difficulty,predicate,size,ypos,xpos,class";
  fs::path matching_config;
  std::string split = "test";
  int top_k = 6;
  fs::path out;
};

Stratum parse_stratum(const std::string& s) {
  if (s == "ypos") return Stratum::kVertical;
  if (s == "xpos") return Stratum::kHorizontal;
  return stratum_from_name(s);
}

int cmd_analyze(const AnalyzeArgs& a) {
  check_output(a.out, {a.pred, a.gt});
  std::vector<Stratum> strata;
  std::stringstream ss(a.strata);
  for (std::string tok; std::getline(ss, tok, ',');) {
    if (!tok.empty()) strata.push_back(parse_stratum(tok));
  }
  const PredictionSet set = read_prediction_dir(a.pred);
  const DatasetBundle b = read_bundle(a.gt);
  const EvalContext ctx = make_eval_context(b, bundle_filter(a.gt), split_from_name(a.split),
                                            matching_config(a.matching_config));
  const ScoreDetail detail = score_detail(set, ctx);
  StrataOptions opt;
  opt.class_vocab_size = class_vocab_size(b, a.gt);
  std::vector<std::pair<Stratum, std::vector<StratumRow>>> rows;
  for (Stratum s : strata) rows.emplace_back(s, stratified_report(detail, s, opt));
  const MetricsReport report = summarize(detail);

  StagedDir out(a.out);
  write_file_atomic(out / "strata_report.csv", encode_metrics(report, rows));
  write_file_atomic(out / "bias_report.csv", encode_bias(bias_report(ctx.relations, b.objects,
                                                                    a.top_k)));
  write_file_atomic(out / "consistency_report.csv", encode_consistency(consistency_report(set)));
  out.commit();
  print_metrics(set.model_name, report);
  return 0;
}

struct SweepArgs {
  std::string rule = "location";
  std::string param = "delta_l";
  std::string grid = "0:0.1:0.005";
  fs::path val;
  fs::path artifacts;
  fs::path margins;
  std::string split = "validation";
  std::string anchor = "bottom";
  bool inverse_depth = false;
  fs::path out;
};

std::vector<double> parse_grid(const std::string& g) {
  double lo = 0, hi = 0, step = 0;
  char c1 = 0, c2 = 0;
  std::istringstream in(g);
  if (!(in >> lo >> c1 >> hi >> c2 >> step) || c1 != ':' || c2 != ':' || !in.eof()) {
    throw ValidationError("--grid expects lo:hi:step, got '" + g + "'");
  }
  if (!(step > 0) || hi < lo) throw ValidationError("--grid needs step > 0 and hi >= lo");
  const long n = std::lround(std::floor((hi - lo) / step + 1e-9)) + 1;
  if (n > 100000) throw ValidationError("--grid has too many points");
  std::vector<double> out;
  for (long i = 0; i < n; ++i) out.push_back(lo + static_cast<double>(i) * step);
  return out;
}

// Picks the grid value with the highest average F1 on the split; ties go to
// the smaller value.
int cmd_sweep(const SweepArgs& a) {
  check_output(a.out, {a.val, a.artifacts, a.margins});
  if (a.val.empty()) throw ValidationError("--val bundle is required");
  const ModelSpec model = parse_model("rule:" + a.rule);
  if (a.param != "delta_s" && a.param != "delta_l" && a.param != "delta_d" &&
      a.param != "occlusion_overlap_threshold") {
    throw ValidationError("--param must be delta_s, delta_l, delta_d or "
                          "occlusion_overlap_threshold");
  }
  const std::vector<double> grid = parse_grid(a.grid);
  RuleFlags flags{a.margins, a.anchor, a.inverse_depth};
  const RuleOptions base = flags.options();
  const Workspace ws = open_workspace(a.val, a.artifacts, {}, {&model}, nullptr);
  const EvalContext ctx = make_eval_context(ws.bundle, ws.filter, split_from_name(a.split));

  std::string table = "value";
  for (Task t : kAllTasks) table += std::string(",") + name(t) + "_f1";
  table += ",average_f1\n";
  std::optional<std::pair<double, double>> best;  // (value, score)
  for (double v : grid) {
    RuleOptions opt = base;
    RuleMargins& m = opt.margins;
    (a.param == "delta_s"   ? m.delta_s
     : a.param == "delta_l" ? m.delta_l
     : a.param == "delta_d" ? m.delta_d
                            : m.occlusion_overlap_threshold) = v;
    const MetricsReport r = score(run_model(model, ws, opt, ctx.groundtruth, ctx), ctx);
    std::vector<std::string> row = {format_double(v)};
    for (Task t : kAllTasks) row.push_back(format_double(r[t].f1()));
    row.push_back(format_double(r.average_f1()));
    table += csv_row(row);
    if (!best || r.average_f1() > best->second) best = {v, r.average_f1()};
  }
  RuleMargins chosen = base.margins;
  (a.param == "delta_s"   ? chosen.delta_s
   : a.param == "delta_l" ? chosen.delta_l
   : a.param == "delta_d" ? chosen.delta_d
                          : chosen.occlusion_overlap_threshold) = best->first;
  StagedDir out(a.out);
  write_file_atomic(out / "sweep.csv", table);
  write_file_atomic(out / "best_margins.cfg",
                    "delta_s=" + format_double(chosen.delta_s) +
                        "\ndelta_l=" + format_double(chosen.delta_l) +
                        "\ndelta_d=" + format_double(chosen.delta_d) +
                        "\nocclusion_overlap_threshold=" +
                        format_double(chosen.occlusion_overlap_threshold) + "\n");
  out.commit();
  std::printf("best %s=%s average_f1=%.4f over %zu grid points\n", a.param.c_str(),
              format_double(best->first).c_str(), best->second, grid.size());
  return 0;
}

struct DecomposeArgs {
  std::string model;
  fs::path in;
  fs::path artifacts;
  fs::path detections;
  fs::path matching_config;
  std::string split = "test";
  RuleFlags rule;
  fs::path out;
};

int cmd_decompose(const DecomposeArgs& a) {
  check_output(a.out, {a.in, a.artifacts, a.detections});
  const ModelSpec model = parse_model(a.model);
  const RuleOptions opt = a.rule.options();
  std::vector<ObjectInstance> dets = load_detections(a.in, a.detections);
  const Workspace ws = open_workspace(a.in, a.artifacts, {}, {&model}, &dets);
  const EvalContext ctx = make_eval_context(ws.bundle, ws.filter, split_from_name(a.split),
                                            matching_config(a.matching_config));
  std::set<std::string> in_split;
  for (const auto& im : ctx.images) {
    if (im.split == ctx.split) in_split.insert(im.image_id);
  }
  std::erase_if(dets, [&](const ObjectInstance& d) { return !in_split.count(d.image_id); });
  const DecompositionResult r = error_decomposition(
      [&](const std::vector<ObjectInstance>& objs) {
        return run_model(model, ws, opt, objs, ctx);
      },
      dets, ctx);

  std::string table = "variant,task,f1\n";
  for (const auto& [variant, rep] :
       {std::pair<const char*, const MetricsReport*>{"full", &r.full},
        {"predicate_prediction", &r.predicate_prediction},
        {"object_detection", &r.object_detection}}) {
    for (Task t : kAllTasks) table += csv_row({variant, name(t), format_double((*rep)[t].f1())});
    table += csv_row({variant, "average", format_double(rep->average_f1())});
  }
  StagedDir out(a.out);
  write_file_atomic(out / "decomposition.csv", table);
  out.commit();
  print_metrics("full", r.full);
  print_metrics("predicate_prediction", r.predicate_prediction);
  print_metrics("object_detection", r.object_detection);
  return 0;
}

struct TransferArgs {
  std::string model_within;
  std::string model_across;
  std::string model_joint;
  fs::path in;
  fs::path artifacts;
  std::string split = "test";
  fs::path out;
};

// Depth F1 of each model on each setting, with groundtruth boxes.
int cmd_transfer(const TransferArgs& a) {
  check_output(a.out, {a.in, a.artifacts});
  const std::pair<const char*, ModelSpec> models[] = {
      {"within", parse_model(a.model_within)},
      {"across", parse_model(a.model_across)},
      {"joint", parse_model(a.model_joint)}};
  const Workspace ws =
      open_workspace(a.in, a.artifacts, {}, {&models[0].second, &models[1].second,
                                             &models[2].second}, nullptr);
  const EvalContext ctx = make_eval_context(ws.bundle, ws.filter, split_from_name(a.split));
  std::string table = "model,within,across\n";
  for (const auto& [label, spec] : models) {
    const MetricsReport r = score(run_model(spec, ws, {}, ctx.groundtruth, ctx), ctx);
    table += csv_row({label, format_double(r[Task::kWithinDepth].f1()),
                      format_double(r[Task::kAcrossDepth].f1())});
    std::printf("%-7s within=%.4f across=%.4f\n", label, r[Task::kWithinDepth].f1(),
                r[Task::kAcrossDepth].f1());
  }
  StagedDir out(a.out);
  write_file_atomic(out / "transfer.csv", table);
  out.commit();
  return 0;
}

struct ServeArgs {
  std::string host = "127.0.0.1";
  int port = 8080;
  fs::path data_dir;
  fs::path images_dir;
  int required_votes_eval = 5;
};

int cmd_serve(const ServeArgs& a) {
  ServiceConfig cfg;
  cfg.data_dir = a.data_dir;
  cfg.images_dir = a.images_dir.empty() ? a.data_dir / "images" : a.images_dir;
  cfg.required_votes_eval = a.required_votes_eval;
  AnnotationStore store(cfg);
  AnnotationServer server(store);
  const Progress p = store.progress();
  std::printf("serving %ld open tasks (%ld closed) on http://%s:%d\n", p.open, p.closed,
              a.host.c_str(), a.port);
  std::fflush(stdout);
  server.run(a.host, a.port);
  return 0;
}

int run(int argc, char** argv) {
  CLI::App app{"2.5D visual relationship benchmark toolkit"};
  app.require_subcommand(1);
  std::function<int()> action;

  GenArgs gen;
  auto* g = app.add_subcommand("gen", "Generate a synthetic bundle with depth maps and votes");
  g->add_option("--config", gen.config, "Generator config (key=value)")->check(CLI::ExistingFile);
  g->add_option("--seed", gen.seed, "Generator seed")->capture_default_str();
  g->add_option("--out", gen.out, "Output bundle directory")->required();
  g->callback([&] { action = [&] { return cmd_gen(gen); }; });

  ImportArgs imp;
  auto* i = app.add_subcommand("import", "Import the public release into a canonical bundle");
  i->add_option("--release-dir", imp.release_dir, "Release directory")
      ->required()
      ->check(CLI::ExistingDirectory);
  i->add_option("--class-meta", imp.class_meta, "class_metadata.csv")
      ->required()
      ->check(CLI::ExistingFile);
  i->add_option("--part-of", imp.part_of, "part_of.csv (default: next to --class-meta)");
  i->add_option("--out", imp.out, "Output bundle directory")->required();
  i->callback([&] { action = [&] { return cmd_import(imp); }; });

  FilterArgs fil;
  auto* f = app.add_subcommand("filter", "Apply object and pair filters to a bundle");
  f->add_option("--in", fil.in, "Input bundle")->required()->check(CLI::ExistingDirectory);
  f->add_option("--config", fil.config, "Filter thresholds (key=value)")
      ->check(CLI::ExistingFile);
  f->add_option("--out", fil.out, "Output bundle directory")->required();
  f->callback([&] { action = [&] { return cmd_filter(fil); }; });

  SampleArgs sam;
  auto* s = app.add_subcommand("sample", "Sample training pairs or enumerate evaluation pairs");
  s->add_option("--in", sam.in, "Input bundle")->required()->check(CLI::ExistingDirectory);
  s->add_option("--seed", sam.seed, "Sampling seed")->capture_default_str();
  s->add_option("--setting", sam.setting, "within, across or both")->capture_default_str();
  s->add_option("--split", sam.split, "train samples; validation/test enumerate")
      ->capture_default_str();
  s->add_option("--out", sam.out, "Output task directory")->required();
  s->callback([&] { action = [&] { return cmd_sample(sam); }; });

  AggregateArgs agg;
  auto* ag = app.add_subcommand("aggregate", "Aggregate votes into labels and difficulty");
  ag->add_option("--votes", agg.votes, "votes.csv")->required()->check(CLI::ExistingFile);
  ag->add_option("--pairs", agg.pairs, "Task directory the votes were collected on")
      ->required()
      ->check(CLI::ExistingDirectory);
  ag->add_option("--required-votes-eval", agg.required_votes_eval,
                 "Votes per evaluation pair")->capture_default_str();
  ag->add_option("--out", agg.out, "Output bundle directory")->required();
  ag->callback([&] { action = [&] { return cmd_aggregate(agg); }; });

  TrainArgs tr;
  auto* t = app.add_subcommand("train", "Train the MLP baseline");
  t->add_option("--in", tr.in, "Training bundle")->required()->check(CLI::ExistingDirectory);
  t->add_option("--artifacts", tr.artifacts, "Depth/feature directory (default: --in)");
  t->add_option("--features", tr.features, "Feature blocks, e.g. B,D or B+C+D+A")
      ->capture_default_str();
  t->add_option("--setting", tr.setting, "within, across or joint (overrides config)");
  t->add_option("--train-config", tr.train_config, "Training config (key=value)")
      ->check(CLI::ExistingFile);
  t->add_option("--steps", tr.steps, "Override the number of steps");
  t->add_option("--seed", tr.seed, "Override the training seed");
  t->add_option("--out-model", tr.out_model, "Checkpoint path")->required();
  t->add_option("--out-log", tr.out_log, "Training log (default: <out-model>.log.csv)");
  t->callback([&] { action = [&] { return cmd_train(tr); }; });

  PredictArgs pr;
  auto* p = app.add_subcommand("predict", "Predict relations with a rule or a trained MLP");
  p->add_option("--model", pr.model, "rule:size|rule:location|rule:depth|rule:class|mlp:<path>|oracle")
      ->required();
  p->add_option("--in", pr.in, "Bundle")->required()->check(CLI::ExistingDirectory);
  p->add_option("--artifacts", pr.artifacts, "Depth/feature directory (default: --in)");
  p->add_option("--objects", pr.objects, "groundtruth or detections")->capture_default_str();
  p->add_option("--detections", pr.detections, "Detections file (default: <in>/detections.csv)");
  p->add_option("--split", pr.split, "Split to predict")->capture_default_str();
  p->add_option("--filter-config", pr.filter_config, "Filter overrides")
      ->check(CLI::ExistingFile);
  p->add_option("--matching-config", pr.matching_config, "Matching config (detection trimming)")
      ->check(CLI::ExistingFile);
  add_rule_flags(p, pr.rule);
  p->add_option("--out", pr.out, "Output prediction directory")->required();
  p->callback([&] { action = [&] { return cmd_predict(pr); }; });

  EvalArgs ev;
  auto* e = app.add_subcommand("eval", "Score predictions against a groundtruth bundle");
  e->add_option("--pred", ev.pred, "Prediction directory")->required()
      ->check(CLI::ExistingDirectory);
  e->add_option("--gt", ev.gt, "Groundtruth bundle")->required()->check(CLI::ExistingDirectory);
  e->add_option("--matching-config", ev.matching_config, "Matching config (key=value)")
      ->check(CLI::ExistingFile);
  e->add_option("--filter-config", ev.filter_config, "Filter overrides")
      ->check(CLI::ExistingFile);
  e->add_option("--split", ev.split, "Split to score")->capture_default_str();
  e->add_option("--out", ev.out, "Output report directory")->required();
  e->callback([&] { action = [&] { return cmd_eval(ev); }; });

  AnalyzeArgs an;
  auto* az = app.add_subcommand("analyze", "Stratified, bias and consistency reports");
  az->add_option("--pred", an.pred, "Prediction directory")->required()
      ->check(CLI::ExistingDirectory);
  az->add_option("--gt", an.gt, "Groundtruth bundle")->required()->check(CLI::ExistingDirectory);
  az->add_option("--strata", an.strata,
                 "Comma list of difficulty,predicate,size,ypos,xpos,class,class_pair")
      ->capture_default_str();
  az->add_option("--matching-config", an.matching_config, "Matching config (key=value)")
      ->check(CLI::ExistingFile);
  az->add_option("--split", an.split, "Split to analyze")->capture_default_str();
  az->add_option("--top-k", an.top_k, "Rows per bias ranking")->capture_default_str();
  az->add_option("--out", an.out, "Output report directory")->required();
  az->callback([&] { action = [&] { return cmd_analyze(an); }; });

  SweepArgs sw;
  auto* w = app.add_subcommand("sweep", "Grid-search a rule margin on the validation split");
  w->add_option("--rule", sw.rule, "size, location or depth")->capture_default_str();
  w->add_option("--param", sw.param, "Margin to sweep")->capture_default_str();
  w->add_option("--grid", sw.grid, "lo:hi:step")->capture_default_str();
  w->add_option("--val", sw.val, "Bundle with a validation split")->required()
      ->check(CLI::ExistingDirectory);
  w->add_option("--artifacts", sw.artifacts, "Depth directory (default: --val)");
  w->add_option("--margins", sw.margins, "Margins for the parameters not swept")
      ->check(CLI::ExistingFile);
  w->add_option("--split", sw.split, "Split to sweep on")->capture_default_str();
  w->add_option("--anchor", sw.anchor, "Location rule anchor: bottom or center")
      ->capture_default_str();
  w->add_flag("--inverse-depth", sw.inverse_depth,
              "Depth maps store larger values for nearer surfaces");
  w->add_option("--out", sw.out, "Output directory")->required();
  w->callback([&] { action = [&] { return cmd_sweep(sw); }; });

  DecomposeArgs de;
  auto* d = app.add_subcommand("decompose", "Split error into detection and predicate parts");
  d->add_option("--model", de.model, "rule:<name> or mlp:<path>")->required();
  d->add_option("--in", de.in, "Bundle")->required()->check(CLI::ExistingDirectory);
  d->add_option("--artifacts", de.artifacts, "Depth/feature directory (default: --in)");
  d->add_option("--detections", de.detections, "Detections file (default: <in>/detections.csv)");
  d->add_option("--matching-config", de.matching_config, "Matching config (key=value)")
      ->check(CLI::ExistingFile);
  d->add_option("--split", de.split, "Split to score")->capture_default_str();
  add_rule_flags(d, de.rule);
  d->add_option("--out", de.out, "Output directory")->required();
  d->callback([&] { action = [&] { return cmd_decompose(de); }; });

  TransferArgs tf;
  auto* x = app.add_subcommand("transfer", "Cross-setting evaluation matrix");
  x->add_option("--model-within", tf.model_within, "Model trained within images")->required();
  x->add_option("--model-across", tf.model_across, "Model trained across images")->required();
  x->add_option("--model-joint", tf.model_joint, "Model trained on both")->required();
  x->add_option("--in", tf.in, "Bundle")->required()->check(CLI::ExistingDirectory);
  x->add_option("--artifacts", tf.artifacts, "Depth/feature directory (default: --in)");
  x->add_option("--split", tf.split, "Split to score")->capture_default_str();
  x->add_option("--out", tf.out, "Output directory")->required();
  x->callback([&] { action = [&] { return cmd_transfer(tf); }; });

  ServeArgs sv;
  auto* srv = app.add_subcommand("serve", "Run the annotation service");
  srv->add_option("--host", sv.host, "Bind address")->capture_default_str();
  srv->add_option("--port", sv.port, "Port (0 picks a free one)")->capture_default_str();
  srv->add_option("--data-dir", sv.data_dir, "Task directory (see sample)")
      ->required()
      ->check(CLI::ExistingDirectory);
  srv->add_option("--images-dir", sv.images_dir, "Image files (default: <data-dir>/images)");
  srv->add_option("--required-votes-eval", sv.required_votes_eval, "Votes per evaluation pair")
      ->capture_default_str();
  srv->callback([&] { action = [&] { return cmd_serve(sv); }; });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& err) {
    return app.exit(err) == 0 ? 0 : 1;
  }
  return action();
}

}  // namespace
}  // namespace vrd25::cli

int main(int argc, char** argv) {
  try {
    return vrd25::cli::run(argc, argv);
  } catch (const vrd25::ValidationError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "runtime error: %s\n", e.what());
    return 2;
  }
}
