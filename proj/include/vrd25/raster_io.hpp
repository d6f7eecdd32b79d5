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

// Dense depth maps (PFM / scaled 16-bit PGM) and appearance feature vectors
// (.feat files).

#ifndef VRD25_RASTER_IO_HPP_
#define VRD25_RASTER_IO_HPP_

#include <algorithm>
#include <bit>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "vrd25/core.hpp"
#include "vrd25/text_io.hpp"

namespace vrd25 {

// Row-major depth image, row 0 at the top.
struct DepthMap {
  int width = 0;
  int height = 0;
  std::vector<float> values;

  DepthMap() = default;
  DepthMap(int w, int h, float fill)
      : width(w), height(h), values(static_cast<std::size_t>(w) * h, fill) {}

  float at(int x, int y) const {
    return values[static_cast<std::size_t>(y) * width + x];
  }
  float& at(int x, int y) {
    return values[static_cast<std::size_t>(y) * width + x];
  }

  friend bool operator==(const DepthMap&, const DepthMap&) = default;
};

struct DepthStats {
  double mean = 0.0;
  double stddev = 0.0;
  double min = 0.0;
  double max = 0.0;
};

// Statistics over the pixels whose centers fall inside `box`. A box too small
// to contain a pixel center falls back to the pixel under its center.
inline DepthStats box_depth_stats(const DepthMap& map, const Box& box) {
  const int x0 = std::max(0, static_cast<int>(std::ceil(box.xmin() * map.width - 0.5)));
  const int x1 = std::min(map.width, static_cast<int>(std::ceil(box.xmax() * map.width - 0.5)));
  const int y0 = std::max(0, static_cast<int>(std::ceil(box.ymin() * map.height - 0.5)));
  const int y1 = std::min(map.height, static_cast<int>(std::ceil(box.ymax() * map.height - 0.5)));
  double sum = 0.0, sum_sq = 0.0;
  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  long n = 0;
  for (int y = y0; y < y1; ++y) {
    for (int x = x0; x < x1; ++x) {
      const double v = map.at(x, y);
      sum += v;
      sum_sq += v * v;
      lo = std::min(lo, v);
      hi = std::max(hi, v);
      ++n;
    }
  }
  if (n == 0) {
    const int cx = std::clamp(static_cast<int>(box.center_x() * map.width), 0,
                              map.width - 1);
    const int cy = std::clamp(static_cast<int>(box.center_y() * map.height), 0,
                              map.height - 1);
    const double v = map.at(cx, cy);
    return {v, 0.0, v, v};
  }
  const double mean = sum / n;
  const double var = std::max(0.0, sum_sq / n - mean * mean);
  return {mean, std::sqrt(var), lo, hi};
}

inline DepthStats image_depth_stats(const DepthMap& map) {
  return box_depth_stats(map, Box(0.0, 0.0, 1.0, 1.0));
}

namespace detail {

inline void put_u32_le(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out += static_cast<char>((v >> (8 * i)) & 0xFF);
}

inline std::uint32_t get_u32_le(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) |
         (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) |
         (static_cast<std::uint32_t>(p[3]) << 24);
}

inline void put_f32_le(std::string& out, float f) {
  put_u32_le(out, std::bit_cast<std::uint32_t>(f));
}

inline float get_f32_le(const unsigned char* p) {
  return std::bit_cast<float>(get_u32_le(p));
}

// Reads one whitespace-delimited header token, skipping '#' comment lines.
inline std::string next_token(const std::string& data, std::size_t& pos,
                              std::string* comment = nullptr) {
  while (pos < data.size()) {
    const char c = data[pos];
    if (c == '#') {
      const std::size_t end = data.find('\n', pos);
      if (comment) *comment += data.substr(pos + 1, end - pos - 1) + "\n";
      pos = end == std::string::npos ? data.size() : end + 1;
    } else if (std::isspace(static_cast<unsigned char>(c))) {
      ++pos;
    } else {
      break;
    }
  }
  std::size_t start = pos;
  while (pos < data.size() && !std::isspace(static_cast<unsigned char>(data[pos]))) {
    ++pos;
  }
  return data.substr(start, pos - start);
}

}  // namespace detail

// Little-endian single-channel PFM (negative scale), rows stored bottom-up.
inline std::string encode_pfm(const DepthMap& map) {
  std::string out = "Pf\n" + std::to_string(map.width) + " " +
                    std::to_string(map.height) + "\n-1.0\n";
  out.reserve(out.size() + map.values.size() * 4);
  for (int y = map.height - 1; y >= 0; --y) {
    for (int x = 0; x < map.width; ++x) detail::put_f32_le(out, map.at(x, y));
  }
  return out;
}

inline DepthMap decode_pfm(const std::string& data, const std::string& source) {
  std::size_t pos = 0;
  if (detail::next_token(data, pos) != "Pf") {
    throw ValidationError(source + ": not a single-channel PFM file");
  }
  const int w = std::stoi(detail::next_token(data, pos));
  const int h = std::stoi(detail::next_token(data, pos));
  const double scale = std::stod(detail::next_token(data, pos));
  ++pos;  // single whitespace after the scale
  if (w <= 0 || h <= 0) throw ValidationError(source + ": bad PFM dimensions");
  if (scale >= 0) {
    throw ValidationError(source + ": big-endian PFM is not supported");
  }
  if (data.size() - pos < static_cast<std::size_t>(w) * h * 4) {
    throw ValidationError(source + ": truncated PFM payload");
  }
  DepthMap map(w, h, 0.0f);
  const auto* p = reinterpret_cast<const unsigned char*>(data.data() + pos);
  for (int y = h - 1; y >= 0; --y) {
    for (int x = 0; x < w; ++x, p += 4) map.at(x, y) = detail::get_f32_le(p);
  }
  return map;
}

// 16-bit binary PGM; depth = stored value * scale, with the scale carried in
// a "# scale=<s>" comment line.
inline std::string encode_pgm16(const DepthMap& map, double scale) {
  std::string out = "P5\n# scale=" + format_double(scale) + "\n" +
                    std::to_string(map.width) + " " +
                    std::to_string(map.height) + "\n65535\n";
  for (float v : map.values) {
    const double q = std::clamp(std::round(v / scale), 0.0, 65535.0);
    const auto u = static_cast<std::uint16_t>(q);
    out += static_cast<char>(u >> 8);
    out += static_cast<char>(u & 0xFF);
  }
  return out;
}

inline DepthMap decode_pgm16(const std::string& data, const std::string& source) {
  std::size_t pos = 0;
  std::string comments;
  if (detail::next_token(data, pos, &comments) != "P5") {
    throw ValidationError(source + ": not a binary PGM file");
  }
  const int w = std::stoi(detail::next_token(data, pos, &comments));
  const int h = std::stoi(detail::next_token(data, pos, &comments));
  const int maxval = std::stoi(detail::next_token(data, pos, &comments));
  ++pos;
  if (maxval < 256) throw ValidationError(source + ": PGM is not 16-bit");
  double scale = 1.0;
  if (auto k = comments.find("scale="); k != std::string::npos) {
    scale = std::stod(comments.substr(k + 6));
  } else {
    throw ValidationError(source + ": PGM lacks a scale header line");
  }
  if (data.size() - pos < static_cast<std::size_t>(w) * h * 2) {
    throw ValidationError(source + ": truncated PGM payload");
  }
  DepthMap map(w, h, 0.0f);
  const auto* p = reinterpret_cast<const unsigned char*>(data.data() + pos);
  for (auto& v : map.values) {
    v = static_cast<float>(((p[0] << 8) | p[1]) * scale);
    p += 2;
  }
  return map;
}

inline DepthMap read_depth_map(const std::filesystem::path& path) {
  const std::string data = read_text_file(path);
  if (path.extension() == ".pgm") return decode_pgm16(data, path.string());
  return decode_pfm(data, path.string());
}

// Looks for <dir>/<image_id>.pfm, then .pgm.
inline std::optional<std::filesystem::path> find_depth_map(
    const std::filesystem::path& dir, const std::string& image_id) {
  for (const char* ext : {".pfm", ".pgm"}) {
    auto p = dir / (image_id + ext);
    if (std::filesystem::exists(p)) return p;
  }
  return std::nullopt;
}

inline constexpr char kFeatureMagic[4] = {'V', 'R', 'D', 'F'};
inline constexpr std::uint32_t kFeatureVersion = 1;

inline std::string encode_features(const std::vector<float>& v) {
  std::string out(kFeatureMagic, 4);
  detail::put_u32_le(out, kFeatureVersion);
  detail::put_u32_le(out, static_cast<std::uint32_t>(v.size()));
  detail::put_u32_le(out, 0);
  for (float f : v) detail::put_f32_le(out, f);
  return out;
}

inline std::vector<float> decode_features(const std::string& data,
                                          const std::string& source) {
  if (data.size() < 16 || std::memcmp(data.data(), kFeatureMagic, 4) != 0) {
    throw ValidationError(source + ": bad feature file magic");
  }
  const auto* p = reinterpret_cast<const unsigned char*>(data.data());
  if (detail::get_u32_le(p + 4) != kFeatureVersion) {
    throw ValidationError(source + ": unsupported feature file version");
  }
  const std::uint32_t dim = detail::get_u32_le(p + 8);
  if (data.size() != 16 + static_cast<std::size_t>(dim) * 4) {
    throw ValidationError(source + ": feature payload size mismatch");
  }
  std::vector<float> v(dim);
  for (std::uint32_t i = 0; i < dim; ++i) v[i] = detail::get_f32_le(p + 16 + 4 * i);
  return v;
}

inline std::vector<float> read_features(const std::filesystem::path& path) {
  return decode_features(read_text_file(path), path.string());
}

inline std::filesystem::path image_feature_path(const std::filesystem::path& dir,
                                                const std::string& image_id) {
  return dir / (image_id + ".feat");
}

inline std::filesystem::path object_feature_path(const std::filesystem::path& dir,
                                                 const std::string& image_id,
                                                 const std::string& object_id) {
  return dir / image_id / (object_id + ".feat");
}

}  // namespace vrd25

#endif  // VRD25_RASTER_IO_HPP_
