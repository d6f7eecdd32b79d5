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

// Importer for the public 2.5VRD release layout.
//
// A release directory holds CSV relation files whose names carry the setting
// ("within" / "across") and split ("train" / "validation" / "val" / "test"),
// for example within_image_test.csv. Columns are found by header name, with
// the aliases in release_aliases(), so column order does not matter.
// Boxes are normalized OpenImages-style (xmin,xmax,ymin,ymax) and entities
// may be class names or class ids. Predicates may be codes or phrases
// ("a is closer", "mutual occlusion", ...).
//
// An optional *objects*.csv file lists every box, including ones without a
// relation; when absent, objects are collected from the relation rows.

#ifndef VRD25_IMPORT_HPP_
#define VRD25_IMPORT_HPP_

#include <algorithm>
#include <cctype>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "vrd25/core.hpp"
#include "vrd25/dataset.hpp"
#include "vrd25/text_io.hpp"

namespace vrd25 {

namespace detail {

// Canonical field -> accepted header names, in lookup order. `#` stands for
// the endpoint suffix ("1"/"a" and "2"/"b").
inline const std::vector<std::pair<std::string, std::vector<std::string>>>&
release_aliases() {
  static const std::vector<std::pair<std::string, std::vector<std::string>>> kAliases = {
      {"image_id", {"image_id_#", "image_#", "imageid_#", "image_id"}},
      {"object_id", {"object_id_#", "box_id_#", "object_id"}},
      {"entity", {"entity_#", "class_#", "label_#", "class_name_#", "class_id_#", "entity"}},
      {"xmin", {"xmin_#", "x_min_#", "xmin"}},
      {"xmax", {"xmax_#", "x_max_#", "xmax"}},
      {"ymin", {"ymin_#", "y_min_#", "ymin"}},
      {"ymax", {"ymax_#", "y_max_#", "ymax"}},
      {"is_group_of", {"is_group_of_#", "isgroupof_#", "is_group_of"}},
      {"width", {"width_#", "image_width_#", "width_px_#", "width", "image_width"}},
      {"height", {"height_#", "image_height_#", "height_px_#", "height", "image_height"}},
  };
  return kAliases;
}

inline std::string lower(std::string s) {
  for (auto& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

// Lowercase, with '_' and '-' read as spaces and runs of spaces collapsed.
inline std::string normalize_token(const std::string& s) {
  std::string out;
  for (char c : lower(s)) {
    if (c == '_' || c == '-') c = ' ';
    if (c == ' ' && (out.empty() || out.back() == ' ')) continue;
    out += c;
  }
  while (!out.empty() && out.back() == ' ') out.pop_back();
  return out;
}

inline std::optional<DepthPredicate> parse_depth_token(const std::string& raw) {
  static const std::map<std::string, DepthPredicate> kTokens = {
      {"0", DepthPredicate::kACloser},      {"a closer", DepthPredicate::kACloser},
      {"a is closer", DepthPredicate::kACloser}, {"closer", DepthPredicate::kACloser},
      {"1", DepthPredicate::kBCloser},      {"b closer", DepthPredicate::kBCloser},
      {"b is closer", DepthPredicate::kBCloser}, {"a is farther", DepthPredicate::kBCloser},
      {"farther", DepthPredicate::kBCloser}, {"2", DepthPredicate::kSameDepth},
      {"same depth", DepthPredicate::kSameDepth}, {"same", DepthPredicate::kSameDepth},
      {"3", DepthPredicate::kUnsure},       {"unsure", DepthPredicate::kUnsure}};
  auto it = kTokens.find(normalize_token(raw));
  if (it == kTokens.end()) return std::nullopt;
  return it->second;
}

inline std::optional<OcclusionPredicate> parse_occlusion_token(const std::string& raw) {
  static const std::map<std::string, OcclusionPredicate> kTokens = {
      {"0", OcclusionPredicate::kNoOcclusion},
      {"no occlusion", OcclusionPredicate::kNoOcclusion},
      {"none", OcclusionPredicate::kNoOcclusion},
      {"1", OcclusionPredicate::kAOccludesB},
      {"a occludes b", OcclusionPredicate::kAOccludesB},
      {"occludes", OcclusionPredicate::kAOccludesB},
      {"2", OcclusionPredicate::kBOccludesA},
      {"b occludes a", OcclusionPredicate::kBOccludesA},
      {"occluded by", OcclusionPredicate::kBOccludesA},
      {"3", OcclusionPredicate::kMutual},
      {"mutual", OcclusionPredicate::kMutual},
      {"mutual occlusion", OcclusionPredicate::kMutual}};
  auto it = kTokens.find(normalize_token(raw));
  if (it == kTokens.end()) return std::nullopt;
  return it->second;
}

inline std::optional<Split> split_from_filename(const std::string& stem) {
  const std::string s = lower(stem);
  if (s.find("train") != std::string::npos) return Split::kTrain;
  if (s.find("validation") != std::string::npos || s.find("val") != std::string::npos) {
    return Split::kValidation;
  }
  if (s.find("test") != std::string::npos) return Split::kTest;
  return std::nullopt;
}

// Column index for a canonical field and endpoint, or -1.
inline int find_column(const CsvTable& t, const std::string& field, char endpoint) {
  for (const auto& [canonical, names] : release_aliases()) {
    if (canonical != field) continue;
    for (const auto& pattern : names) {
      const std::size_t hash = pattern.find('#');
      if (hash == std::string::npos) {
        if (auto c = t.column(pattern)) return *c;
        continue;
      }
      const std::string suffixes = endpoint == 'a' ? "1a" : "2b";
      for (char s : suffixes) {
        std::string name = pattern;
        name[hash] = s;
        if (auto c = t.column(name)) return *c;
      }
    }
  }
  return -1;
}

struct EndpointColumns {
  int image_id = -1, object_id = -1, entity = -1;
  int xmin = -1, xmax = -1, ymin = -1, ymax = -1;
  int is_group_of = -1, width = -1, height = -1;
};

inline EndpointColumns endpoint_columns(const CsvTable& t, char endpoint) {
  EndpointColumns c;
  c.image_id = find_column(t, "image_id", endpoint);
  c.object_id = find_column(t, "object_id", endpoint);
  c.entity = find_column(t, "entity", endpoint);
  c.xmin = find_column(t, "xmin", endpoint);
  c.xmax = find_column(t, "xmax", endpoint);
  c.ymin = find_column(t, "ymin", endpoint);
  c.ymax = find_column(t, "ymax", endpoint);
  c.is_group_of = find_column(t, "is_group_of", endpoint);
  c.width = find_column(t, "width", endpoint);
  c.height = find_column(t, "height", endpoint);
  return c;
}

inline void require_columns(const CsvTable& t, const EndpointColumns& c,
                            const std::string& which) {
  std::vector<std::string> missing;
  if (c.image_id < 0) missing.push_back("image_id");
  if (c.entity < 0) missing.push_back("entity");
  if (c.xmin < 0 || c.xmax < 0 || c.ymin < 0 || c.ymax < 0) missing.push_back("box");
  if (missing.empty()) return;
  std::string msg = t.source() + ": unrecognized schema version; no column for";
  for (const auto& m : missing) msg += " " + m + "_" + which;
  throw ValidationError(msg);
}

}  // namespace detail

struct ImportResult {
  DatasetBundle bundle;
  std::size_t rejects = 0;
};

// Maps a release directory onto the canonical bundle. Rows that cannot be
// mapped are appended to `rejects_path` as file,line,reason.
inline ImportResult import_public_release(const std::filesystem::path& dir,
                                          const ClassMetadata& meta,
                                          const std::filesystem::path& rejects_path) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(dir)) {
    throw ValidationError("release directory not found: " + dir.string());
  }
  if (meta.classes.empty()) throw ValidationError("class vocabulary is empty");

  std::vector<fs::path> objects_files, relation_files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!entry.is_regular_file() || entry.path().extension() != ".csv") continue;
    if (fs::equivalent(entry.path().parent_path(), rejects_path.parent_path()) &&
        entry.path().filename() == rejects_path.filename()) {
      continue;
    }
    const std::string stem = detail::lower(entry.path().stem().string());
    if (stem.find("object") != std::string::npos) {
      objects_files.push_back(entry.path());
    } else if (stem.find("within") != std::string::npos ||
               stem.find("across") != std::string::npos) {
      relation_files.push_back(entry.path());
    }
  }
  if (objects_files.empty() && relation_files.empty()) {
    throw ValidationError("no annotation files found in " + dir.string());
  }
  // Train, validation, test; within before across; then by name.
  auto file_rank = [](const fs::path& p) {
    const std::string stem = detail::lower(p.stem().string());
    const auto split = detail::split_from_filename(stem);
    const int s = split ? static_cast<int>(*split) : 3;
    const int setting = stem.find("across") != std::string::npos ? 1 : 0;
    return std::tuple(s, setting, p.filename().string());
  };
  auto by_rank = [&](const fs::path& a, const fs::path& b) { return file_rank(a) < file_rank(b); };
  std::sort(objects_files.begin(), objects_files.end(), by_rank);
  std::sort(relation_files.begin(), relation_files.end(), by_rank);

  ImportResult result;
  DatasetBundle& b = result.bundle;
  b.provenance = Provenance::kImported;
  std::string rejects = "file,line,reason\n";
  auto reject = [&](const CsvTable& t, std::size_t r, const std::string& why) {
    rejects += csv_row({fs::path(t.source()).filename().string(), std::to_string(t.line(r)), why});
    ++result.rejects;
  };

  std::map<std::string, std::size_t> image_index;
  std::map<std::string, std::size_t> object_index;
  // (image, class, box) -> object id, for rows without object ids.
  std::map<std::string, std::string> object_by_key;
  std::map<std::string, int> objects_per_image;

  auto resolve_class = [&](const std::string& raw) -> std::optional<int> {
    if (auto id = meta.find(raw)) return id;
    long long v = 0;
    auto res = std::from_chars(raw.data(), raw.data() + raw.size(), v);
    if (!raw.empty() && res.ec == std::errc() && res.ptr == raw.data() + raw.size() &&
        v >= 0 && v < meta.vocabulary_size()) {
      return static_cast<int>(v);
    }
    return std::nullopt;
  };

  // Reads one endpoint; registers image and object. Returns object id or a
  // reason string prefixed with '!'.
  auto read_endpoint = [&](const CsvTable& t, std::size_t r,
                           const detail::EndpointColumns& c, Split split) -> std::string {
    const std::string image_id = t.at(r, c.image_id);
    if (image_id.empty()) return "!empty image id";
    const std::string entity = t.at(r, c.entity);
    const auto cls = resolve_class(entity);
    if (!cls) return "!unknown entity '" + entity + "'";
    double v[4];
    const int cols[4] = {c.xmin, c.ymin, c.xmax, c.ymax};
    for (int k = 0; k < 4; ++k) {
      const std::string& s = t.at(r, cols[k]);
      auto res = std::from_chars(s.data(), s.data() + s.size(), v[k]);
      if (s.empty() || res.ec != std::errc() || res.ptr != s.data() + s.size()) {
        return "!bad box coordinate '" + s + "'";
      }
    }
    Box box;
    try {
      box = Box(v[0], v[1], v[2], v[3]);
    } catch (const ValidationError& e) {
      return std::string("!") + e.what();
    }
    if (!image_index.count(image_id)) {
      ImageRecord im;
      im.image_id = image_id;
      im.split = split;
      im.group = assign_group(image_id);
      im.width_px = c.width >= 0 && !t.at(r, c.width).empty()
                        ? static_cast<int>(t.as_int(r, t.header()[c.width]))
                        : 1;
      im.height_px = c.height >= 0 && !t.at(r, c.height).empty()
                         ? static_cast<int>(t.as_int(r, t.header()[c.height]))
                         : 1;
      if (im.width_px <= 0 || im.height_px <= 0) return "!non-positive image size";
      image_index[image_id] = b.images.size();
      b.images.push_back(im);
    }
    std::string object_id = c.object_id >= 0 ? t.at(r, c.object_id) : "";
    const std::string key = image_id + "\x1f" + std::to_string(*cls) + "\x1f" +
                            format_double(box.xmin()) + "," + format_double(box.ymin()) +
                            "," + format_double(box.xmax()) + "," + format_double(box.ymax());
    if (object_id.empty()) {
      auto it = object_by_key.find(key);
      if (it != object_by_key.end()) return it->second;
      object_id = image_id + "#" + std::to_string(objects_per_image[image_id]++);
    }
    if (!object_index.count(object_id)) {
      ObjectInstance o;
      o.object_id = object_id;
      o.image_id = image_id;
      o.class_id = *cls;
      o.box = box;
      o.is_group_of = c.is_group_of >= 0 && detail::lower(t.at(r, c.is_group_of)) != "0" &&
                      detail::lower(t.at(r, c.is_group_of)) != "false" &&
                      !t.at(r, c.is_group_of).empty();
      object_index[object_id] = b.objects.size();
      object_by_key[key] = object_id;
      b.objects.push_back(std::move(o));
    } else {
      const ObjectInstance& known = b.objects[object_index[object_id]];
      if (known.image_id != image_id || known.box != box || known.class_id != *cls) {
        return "!object " + object_id + " redefined with a different box or class";
      }
    }
    return object_id;
  };

  for (const auto& path : objects_files) {
    const CsvTable t = CsvTable::read(path);
    const auto cols = detail::endpoint_columns(t, 'a');
    detail::require_columns(t, cols, "1");
    const int split_col = t.column("split").value_or(-1);
    const auto file_split = detail::split_from_filename(path.stem().string());
    for (std::size_t r = 0; r < t.size(); ++r) {
      Split split = file_split.value_or(Split::kTest);
      if (split_col >= 0) {
        try {
          split = split_from_name(t.at(r, split_col));
        } catch (const ValidationError& e) {
          reject(t, r, e.what());
          continue;
        }
      }
      const std::string id = read_endpoint(t, r, cols, split);
      if (!id.empty() && id[0] == '!') reject(t, r, id.substr(1));
    }
  }

  std::map<std::string, bool> pair_seen;
  for (const auto& path : relation_files) {
    const CsvTable t = CsvTable::read(path);
    const std::string stem = detail::lower(path.stem().string());
    const Setting setting =
        stem.find("across") != std::string::npos ? Setting::kAcross : Setting::kWithin;
    const auto file_split = detail::split_from_filename(stem);
    const auto ca = detail::endpoint_columns(t, 'a');
    auto cb = detail::endpoint_columns(t, 'b');
    detail::require_columns(t, ca, "1");
    // Within-image files may carry a single image id column.
    if (cb.image_id < 0 && setting == Setting::kWithin) cb.image_id = ca.image_id;
    if (cb.width < 0) cb.width = ca.width;
    if (cb.height < 0) cb.height = ca.height;
    detail::require_columns(t, cb, "2");
    const int depth_col = t.column("depth").value_or(t.column("depth_label").value_or(-1));
    const int occl_col =
        t.column("occlusion").value_or(t.column("occlusion_label").value_or(-1));
    if (depth_col < 0) {
      throw ValidationError(t.source() + ": unrecognized schema version; no depth column");
    }
    if (setting == Setting::kWithin && occl_col < 0) {
      throw ValidationError(t.source() + ": unrecognized schema version; no occlusion column");
    }
    const int difficulty_col = t.column("difficulty").value_or(-1);
    const int pair_col = t.column("pair_id").value_or(-1);
    const int split_col = t.column("split").value_or(-1);
    for (std::size_t r = 0; r < t.size(); ++r) {
      Split split = file_split.value_or(Split::kTest);
      if (split_col >= 0) {
        try {
          split = split_from_name(t.at(r, split_col));
        } catch (const ValidationError& e) {
          reject(t, r, e.what());
          continue;
        }
      }
      OrderedPairLabel p;
      p.setting = setting;
      if (difficulty_col >= 0 && !t.at(r, difficulty_col).empty()) {
        try {
          p.difficulty = difficulty_from_name(detail::lower(t.at(r, difficulty_col)));
        } catch (const ValidationError& e) {
          reject(t, r, e.what());
          continue;
        }
      }
      const std::string depth_raw = t.at(r, depth_col);
      if (depth_raw.empty() && p.difficulty == Difficulty::kAmbiguous) {
        p.label.depth.reset();
      } else if (auto d = detail::parse_depth_token(depth_raw)) {
        p.label.depth = d;
      } else {
        reject(t, r, "unmapped depth '" + depth_raw + "'");
        continue;
      }
      if (setting == Setting::kWithin) {
        const std::string occl_raw = t.at(r, occl_col);
        if (occl_raw.empty() && p.difficulty) {
          p.label.occlusion.reset();
        } else if (auto o = detail::parse_occlusion_token(occl_raw)) {
          p.label.occlusion = o;
        } else {
          reject(t, r, "unmapped occlusion '" + occl_raw + "'");
          continue;
        }
      } else if (occl_col >= 0 && !t.at(r, occl_col).empty()) {
        reject(t, r, "across-image row carries an occlusion label");
        continue;
      }
      const std::string a = read_endpoint(t, r, ca, split);
      if (!a.empty() && a[0] == '!') {
        reject(t, r, a.substr(1));
        continue;
      }
      const std::string bb = read_endpoint(t, r, cb, split);
      if (!bb.empty() && bb[0] == '!') {
        reject(t, r, bb.substr(1));
        continue;
      }
      p.object_id_a = a;
      p.object_id_b = bb;
      p.image_id_a = b.objects[object_index[a]].image_id;
      p.image_id_b = b.objects[object_index[bb]].image_id;
      p.pair_id = pair_col >= 0 && !t.at(r, pair_col).empty() ? t.at(r, pair_col)
                                                              : pair_id_for(a, bb);
      try {
        validate_pair(p);
      } catch (const ValidationError& e) {
        reject(t, r, e.what());
        continue;
      }
      if (pair_seen[p.pair_id]) {
        reject(t, r, "duplicate pair " + p.pair_id);
        continue;
      }
      pair_seen[p.pair_id] = true;
      b.pairs.push_back(std::move(p));
    }
  }
  write_file_atomic(rejects_path, rejects);
  check_integrity(b);
  return result;
}

// Loads the vocabulary files, then imports.
inline ImportResult import_public_release(const std::filesystem::path& dir,
                                          const std::filesystem::path& class_csv,
                                          const std::filesystem::path& part_of_csv,
                                          const std::filesystem::path& rejects_path) {
  if (!std::filesystem::exists(class_csv)) {
    throw ValidationError("class vocabulary file not found: " + class_csv.string());
  }
  return import_public_release(dir, read_class_metadata(class_csv, part_of_csv),
                               rejects_path);
}

// Writes `bundle` in the release layout read by import_public_release: one
// objects file listing every box and one relation file per setting and split.
// Votes are not part of the release layout.
inline void export_release_shape(const DatasetBundle& bundle, const ClassMetadata& meta,
                                 const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  std::map<int, std::string> class_name;
  for (const auto& c : meta.classes) class_name[c.class_id] = c.name;
  auto entity = [&](int cls) {
    auto it = class_name.find(cls);
    return it == class_name.end() ? std::to_string(cls) : it->second;
  };
  std::map<std::string, const ImageRecord*> images;
  for (const auto& im : bundle.images) images[im.image_id] = &im;
  std::map<std::string, const ObjectInstance*> objects;
  for (const auto& o : bundle.objects) objects[o.object_id] = &o;

  std::string obj_csv =
      "image_id,object_id,entity,xmin,xmax,ymin,ymax,is_group_of,width,height,split\n";
  for (const auto& o : bundle.objects) {
    const ImageRecord& im = *images.at(o.image_id);
    obj_csv += csv_row({o.image_id, o.object_id, entity(o.class_id), format_double(o.box.xmin()),
                        format_double(o.box.xmax()), format_double(o.box.ymin()),
                        format_double(o.box.ymax()), o.is_group_of ? "1" : "0",
                        std::to_string(im.width_px), std::to_string(im.height_px),
                        name(im.split)});
  }
  write_file_atomic(dir / "objects.csv", obj_csv);

  const std::string endpoint_header =
      "image_id_#,object_id_#,entity_#,xmin_#,xmax_#,ymin_#,ymax_#";
  auto header_for = [&](char n) {
    std::string h = endpoint_header;
    for (auto& c : h) {
      if (c == '#') c = n;
    }
    return h;
  };
  for (Split split : {Split::kTrain, Split::kValidation, Split::kTest}) {
    for (Setting setting : {Setting::kWithin, Setting::kAcross}) {
      std::string out = "pair_id," + header_for('1') + "," + header_for('2') +
                        ",depth,occlusion,difficulty\n";
      bool any = false;
      for (const auto& p : bundle.pairs) {
        if (p.setting != setting || images.at(p.image_id_a)->split != split) continue;
        any = true;
        std::vector<std::string> row = {p.pair_id};
        for (const auto* o : {objects.at(p.object_id_a), objects.at(p.object_id_b)}) {
          for (auto& f : std::vector<std::string>{
                   o->image_id, o->object_id, entity(o->class_id), format_double(o->box.xmin()),
                   format_double(o->box.xmax()), format_double(o->box.ymin()),
                   format_double(o->box.ymax())}) {
            row.push_back(std::move(f));
          }
        }
        row.push_back(p.label.depth ? std::to_string(code(*p.label.depth)) : "");
        row.push_back(p.label.occlusion ? std::to_string(code(*p.label.occlusion)) : "");
        row.push_back(p.difficulty ? name(*p.difficulty) : "");
        out += csv_row(row);
      }
      if (!any) continue;
      write_file_atomic(dir / (std::string(setting == Setting::kWithin ? "within" : "across") +
                               "_image_" + name(split) + ".csv"),
                        out);
    }
  }
}

}  // namespace vrd25

#endif  // VRD25_IMPORT_HPP_
