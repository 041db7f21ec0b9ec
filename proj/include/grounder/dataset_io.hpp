//
// Copyright 2026 The Grounder Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
//

#ifndef GROUNDER_DATASET_IO_HPP
#define GROUNDER_DATASET_IO_HPP

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "grounder/common.hpp"
#include "grounder/world.hpp"

namespace grounder {

using ordered_json = nlohmann::ordered_json;

// ---------------------------------------------------------------------------
// Small file helpers.
// ---------------------------------------------------------------------------

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open file: " + path);
  std::string data((std::istreambuf_iterator<char>(in)),
                   std::istreambuf_iterator<char>());
  return data;
}

inline void write_file(const std::string& path, const std::string& data) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ValidationError("cannot write file: " + path);
  out.write(data.data(), static_cast<std::streamsize>(data.size()));
  if (!out) throw ValidationError("write failed: " + path);
}

inline std::uint64_t fnv1a64_file(const std::string& path) {
  std::string data = read_file(path);
  return fnv1a64(data.data(), data.size());
}

// ---------------------------------------------------------------------------
// Record file: one JSON object per line. Rasters live in a separate binary
// file keyed by scene_id so the text records stay diffable.
// ---------------------------------------------------------------------------

inline ordered_json record_to_json(const SceneSample& s) {
  ordered_json j;
  j["scene_id"] = s.scene_id;
  ordered_json objs = ordered_json::array();
  for (const auto& o : s.objects) {
    ordered_json jo;
    jo["id"] = o.id;
    jo["shape"] = to_string(o.shape);
    jo["color"] = to_string(o.color);
    jo["size"] = to_string(o.size);
    jo["cell"] = {o.row, o.col};
    jo["box"] = {o.box.x1, o.box.y1, o.box.x2, o.box.y2};
    objs.push_back(jo);
  }
  j["objects"] = objs;
  j["expression"] = s.expression;
  if (s.exists) {
    j["target_id"] = s.target_id;
    j["gt_box"] = {s.gt_box.x1, s.gt_box.y1, s.gt_box.x2, s.gt_box.y2};
  } else {
    j["target_id"] = nullptr;
    j["gt_box"] = nullptr;
  }
  j["exists"] = s.exists;
  j["variant_kind"] = to_string(s.variant_kind);
  return j;
}

inline SceneSample record_from_json(const ordered_json& j) {
  SceneSample s;
  try {
    s.scene_id = j.at("scene_id").get<std::uint64_t>();
    for (const auto& jo : j.at("objects")) {
      ShapeObject o;
      o.id = jo.at("id").get<int>();
      o.shape = shape_from_string(jo.at("shape").get<std::string>());
      o.color = color_from_string(jo.at("color").get<std::string>());
      o.size = size_from_string(jo.at("size").get<std::string>());
      o.row = jo.at("cell").at(0).get<int>();
      o.col = jo.at("cell").at(1).get<int>();
      const auto& b = jo.at("box");
      o.box = {b.at(0).get<int>(), b.at(1).get<int>(), b.at(2).get<int>(),
               b.at(3).get<int>()};
      s.objects.push_back(o);
    }
    s.expression = j.at("expression").get<std::string>();
    s.exists = j.at("exists").get<bool>();
    if (s.exists) {
      s.target_id = j.at("target_id").get<int>();
      const auto& b = j.at("gt_box");
      s.gt_box = {b.at(0).get<int>(), b.at(1).get<int>(), b.at(2).get<int>(),
                  b.at(3).get<int>()};
    } else {
      s.target_id = -1;
      s.gt_box = PixelBox{};
    }
    s.variant_kind = variant_kind_from_string(j.at("variant_kind").get<std::string>());
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("bad dataset record: ") + e.what());
  }
  return s;
}

inline void save_records(const std::string& path,
                         const std::vector<SceneSample>& samples) {
  std::string out;
  for (const auto& s : samples) {
    out += record_to_json(s).dump();
    out += '\n';
  }
  write_file(path, out);
}

inline std::vector<SceneSample> load_records(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open record file: " + path);
  std::vector<SceneSample> out;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    ordered_json j;
    try {
      j = ordered_json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(path + ":" + std::to_string(lineno) + ": " + e.what());
    }
    out.push_back(record_from_json(j));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Raster file: magic, record count, floats per record, then per record the
// scene_id (u64) and the raw float32 payload. Little-endian (x86 hosts).
// ---------------------------------------------------------------------------

inline constexpr char kRasterMagic[8] = {'G', 'R', 'R', 'A', 'S', 'T', 'R', '1'};

inline void save_rasters(const std::string& path,
                         const std::vector<SceneSample>& samples) {
  if (samples.empty()) throw ValidationError("save_rasters: no samples");
  const std::uint32_t floats_per = static_cast<std::uint32_t>(samples[0].raster.size());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ValidationError("cannot write raster file: " + path);
  out.write(kRasterMagic, 8);
  const std::uint32_t count = static_cast<std::uint32_t>(samples.size());
  out.write(reinterpret_cast<const char*>(&count), 4);
  out.write(reinterpret_cast<const char*>(&floats_per), 4);
  for (const auto& s : samples) {
    if (s.raster.size() != floats_per)
      throw ValidationError("save_rasters: inconsistent raster size");
    out.write(reinterpret_cast<const char*>(&s.scene_id), 8);
    out.write(reinterpret_cast<const char*>(s.raster.data()),
              static_cast<std::streamsize>(sizeof(float) * floats_per));
  }
  if (!out) throw ValidationError("raster write failed: " + path);
}

inline std::map<std::uint64_t, std::vector<float>> load_rasters(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open raster file: " + path);
  char magic[8];
  in.read(magic, 8);
  if (!in || std::memcmp(magic, kRasterMagic, 8) != 0)
    throw ParseError("bad raster file magic: " + path);
  std::uint32_t count = 0, floats_per = 0;
  in.read(reinterpret_cast<char*>(&count), 4);
  in.read(reinterpret_cast<char*>(&floats_per), 4);
  std::map<std::uint64_t, std::vector<float>> out;
  for (std::uint32_t i = 0; i < count; ++i) {
    std::uint64_t scene_id = 0;
    in.read(reinterpret_cast<char*>(&scene_id), 8);
    std::vector<float> data(floats_per);
    in.read(reinterpret_cast<char*>(data.data()),
            static_cast<std::streamsize>(sizeof(float) * floats_per));
    if (!in) throw ParseError("truncated raster file: " + path);
    if (!out.emplace(scene_id, std::move(data)).second)
      throw ParseError("duplicate scene_id in raster file: " + path);
  }
  return out;
}

inline void attach_rasters(std::vector<SceneSample>& samples,
                           const std::map<std::uint64_t, std::vector<float>>& rasters) {
  for (auto& s : samples) {
    auto it = rasters.find(s.scene_id);
    if (it == rasters.end())
      throw ParseError("no raster for scene_id " + std::to_string(s.scene_id));
    s.raster = it->second;
  }
}

// ---------------------------------------------------------------------------
// Dataset manifest: split composition and file paths, one JSON document.
// ---------------------------------------------------------------------------

struct SplitInfo {
  std::string name;
  std::string records_path;  // relative to the manifest's directory
  std::string rasters_path;
  int total = 0;
  std::map<std::string, int> counts;  // per variant_kind
};

struct DatasetManifest {
  std::uint64_t seed = 0;
  int image_size = 64;
  std::vector<SplitInfo> splits;

  const SplitInfo* find_split(const std::string& name) const {
    for (const auto& s : splits)
      if (s.name == name) return &s;
    return nullptr;
  }
};

inline std::map<std::string, int> count_variants(const std::vector<SceneSample>& samples) {
  std::map<std::string, int> counts;
  for (const auto& s : samples) counts[to_string(s.variant_kind)]++;
  return counts;
}

inline void save_dataset_manifest(const std::string& path, const DatasetManifest& m) {
  ordered_json j;
  j["seed"] = m.seed;
  j["image_size"] = m.image_size;
  ordered_json splits = ordered_json::array();
  int total = 0;
  for (const auto& s : m.splits) {
    ordered_json js;
    js["split"] = s.name;
    js["records"] = s.records_path;
    js["rasters"] = s.rasters_path;
    js["total"] = s.total;
    js["counts"] = s.counts;
    splits.push_back(js);
    total += s.total;
  }
  j["splits"] = splits;
  j["total_records"] = total;
  write_file(path, j.dump(2) + "\n");
}

inline DatasetManifest load_dataset_manifest(const std::string& path) {
  DatasetManifest m;
  ordered_json j;
  try {
    j = ordered_json::parse(read_file(path));
    m.seed = j.at("seed").get<std::uint64_t>();
    m.image_size = j.at("image_size").get<int>();
    for (const auto& js : j.at("splits")) {
      SplitInfo s;
      s.name = js.at("split").get<std::string>();
      s.records_path = js.at("records").get<std::string>();
      s.rasters_path = js.at("rasters").get<std::string>();
      s.total = js.at("total").get<int>();
      for (const auto& [k, v] : js.at("counts").items())
        s.counts[k] = v.get<int>();
      m.splits.push_back(s);
    }
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("bad dataset manifest: ") + e.what());
  }
  return m;
}

// Loads a split's records with rasters attached. Paths in the manifest are
// relative to the manifest file's directory.
inline std::vector<SceneSample> load_split(const std::string& manifest_path,
                                           const std::string& split_name) {
  DatasetManifest m = load_dataset_manifest(manifest_path);
  const SplitInfo* info = m.find_split(split_name);
  if (!info) throw ValidationError("manifest has no split named " + split_name);
  std::filesystem::path dir = std::filesystem::path(manifest_path).parent_path();
  std::vector<SceneSample> samples = load_records((dir / info->records_path).string());
  attach_rasters(samples, load_rasters((dir / info->rasters_path).string()));
  if (static_cast<int>(samples.size()) != info->total)
    throw ParseError("split " + split_name + ": manifest count mismatch");
  return samples;
}

// ---------------------------------------------------------------------------
// Prediction file: one JSON object per line, boxes in pixel corner coords.
// `exists` may be absent (box-only baselines); scorers then treat the
// prediction as exists=true. `score` is optional on load for foreign files.
// ---------------------------------------------------------------------------

struct PredRecord {
  std::uint64_t id = 0;  // joins with SceneSample.scene_id
  std::optional<bool> exists;
  std::optional<double> score;
  std::array<double, 4> box{0, 0, 0, 0};  // pixel x1, y1, x2, y2
};

inline void save_predictions(const std::string& path,
                             const std::vector<PredRecord>& preds) {
  std::string out;
  for (const auto& p : preds) {
    ordered_json j;
    j["id"] = p.id;
    if (p.exists.has_value()) j["exists"] = *p.exists;
    if (p.score.has_value()) j["score"] = *p.score;
    j["box"] = {p.box[0], p.box[1], p.box[2], p.box[3]};
    out += j.dump();
    out += '\n';
  }
  write_file(path, out);
}

inline std::vector<PredRecord> load_predictions(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open prediction file: " + path);
  std::vector<PredRecord> out;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      ordered_json j = ordered_json::parse(line);
      PredRecord p;
      p.id = j.contains("id") ? j.at("id").get<std::uint64_t>()
                              : j.at("scene_id").get<std::uint64_t>();
      if (j.contains("exists")) p.exists = j.at("exists").get<bool>();
      if (j.contains("score")) p.score = j.at("score").get<double>();
      const auto& b = j.at("box");
      p.box = {b.at(0).get<double>(), b.at(1).get<double>(), b.at(2).get<double>(),
               b.at(3).get<double>()};
      out.push_back(p);
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(path + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace grounder

#endif  // GROUNDER_DATASET_IO_HPP
