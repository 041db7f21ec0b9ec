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

#ifndef GROUNDER_EVALKIT_HPP
#define GROUNDER_EVALKIT_HPP

#include <algorithm>
#include <array>
#include <iomanip>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "grounder/common.hpp"
#include "grounder/dataset_io.hpp"
#include "grounder/losses.hpp"
#include "grounder/world.hpp"

namespace grounder {

// ---------------------------------------------------------------------------
// Scoring protocol: a regular sample is correct iff the prediction exists and
// the boxes overlap with IoU strictly above the threshold; a false-alarm
// sample is correct iff the prediction rejects. Predictions without an
// exists flag are forced to exists=true (box-only baselines), unless the
// optional score-threshold rejection mode is enabled.
// ---------------------------------------------------------------------------

struct EvalRecord {
  std::uint64_t id = 0;
  bool gt_exists = false;
  std::optional<std::array<double, 4>> gt_box;  // pixel corners
  std::optional<bool> pred_exists;
  std::optional<double> pred_score;
  std::array<double, 4> pred_box{0, 0, 0, 0};  // pixel corners
  VariantKind kind = VariantKind::kRegular;
};

struct MetricsReport {
  std::optional<double> acc1_regular;  // absent when no regular records
  std::optional<double> r_fad;         // absent when no false-alarm records
  double r_mix = 0.0;
  int regular_all = 0, regular_acc = 0;
  int fa_all = 0, fa_acc = 0;
  // per variant kind: (correct, total)
  std::map<std::string, std::pair<int, int>> per_kind;
};

struct ScoreOptions {
  double iou_threshold = 0.5;
  // When set, predictions lacking an exists flag reject iff score < value.
  std::optional<double> score_reject;
};

inline bool score_sample(const EvalRecord& rec, const ScoreOptions& opt = {}) {
  bool exists;
  if (rec.pred_exists.has_value()) {
    exists = *rec.pred_exists;
  } else if (opt.score_reject.has_value() && rec.pred_score.has_value()) {
    exists = *rec.pred_score >= *opt.score_reject;
  } else {
    exists = true;  // box-only protocol
  }
  if (!rec.gt_exists) return !exists;
  if (!rec.gt_box.has_value())
    throw ValidationError("score_sample: regular record without gt box");
  if (!exists) return false;
  return iou_corners(rec.pred_box, *rec.gt_box) > opt.iou_threshold;
}

inline MetricsReport compute_metrics(const std::vector<EvalRecord>& records,
                                     const ScoreOptions& opt = {}) {
  if (records.empty()) throw ValidationError("compute_metrics: no records");
  MetricsReport rep;
  for (const auto& rec : records) {
    const bool correct = score_sample(rec, opt);
    auto& [acc, total] = rep.per_kind[to_string(rec.kind)];
    ++total;
    if (correct) ++acc;
    if (rec.gt_exists) {
      ++rep.regular_all;
      if (correct) ++rep.regular_acc;
    } else {
      ++rep.fa_all;
      if (correct) ++rep.fa_acc;
    }
  }
  if (rep.regular_all > 0)
    rep.acc1_regular = static_cast<double>(rep.regular_acc) / rep.regular_all;
  if (rep.fa_all > 0)
    rep.r_fad = static_cast<double>(rep.fa_acc) / rep.fa_all;
  rep.r_mix = static_cast<double>(rep.fa_acc + rep.regular_acc) /
              (rep.fa_all + rep.regular_all);
  return rep;
}

// Joins predictions to ground-truth samples by id (each gt id must appear
// exactly once) and aggregates.
inline MetricsReport evaluate_records(const std::vector<SceneSample>& gt,
                                      const std::vector<PredRecord>& preds,
                                      const ScoreOptions& opt = {}) {
  std::map<std::uint64_t, const PredRecord*> by_id;
  std::set<std::uint64_t> dup;
  for (const auto& p : preds) {
    if (!by_id.emplace(p.id, &p).second) dup.insert(p.id);
  }
  if (!dup.empty()) {
    std::string ids;
    for (auto d : dup) ids += (ids.empty() ? "" : ", ") + std::to_string(d);
    throw ValidationError("duplicate prediction ids: " + ids);
  }
  std::vector<std::uint64_t> missing;
  std::vector<EvalRecord> records;
  for (const auto& s : gt) {
    auto it = by_id.find(s.scene_id);
    if (it == by_id.end()) {
      missing.push_back(s.scene_id);
      continue;
    }
    const PredRecord& p = *it->second;
    EvalRecord rec;
    rec.id = s.scene_id;
    rec.gt_exists = s.exists;
    if (s.exists)
      rec.gt_box = std::array<double, 4>{
          static_cast<double>(s.gt_box.x1), static_cast<double>(s.gt_box.y1),
          static_cast<double>(s.gt_box.x2), static_cast<double>(s.gt_box.y2)};
    rec.pred_exists = p.exists;
    rec.pred_score = p.score;
    rec.pred_box = p.box;
    rec.kind = s.variant_kind;
    records.push_back(rec);
  }
  if (!missing.empty()) {
    std::string ids;
    for (auto m : missing) ids += (ids.empty() ? "" : ", ") + std::to_string(m);
    throw ValidationError("missing prediction ids: " + ids);
  }
  return compute_metrics(records, opt);
}

inline MetricsReport evaluate_file(const std::string& pred_path,
                                   const std::string& manifest_path,
                                   const std::string& split_name,
                                   const ScoreOptions& opt = {}) {
  DatasetManifest m = load_dataset_manifest(manifest_path);
  const SplitInfo* info = m.find_split(split_name);
  if (!info) throw ValidationError("manifest has no split named " + split_name);
  std::filesystem::path dir = std::filesystem::path(manifest_path).parent_path();
  std::vector<SceneSample> gt = load_records((dir / info->records_path).string());
  return evaluate_records(gt, load_predictions(pred_path), opt);
}

// ---------------------------------------------------------------------------
// Report rendering.
// ---------------------------------------------------------------------------

inline ordered_json report_to_json(const MetricsReport& r) {
  ordered_json j;
  if (r.acc1_regular) j["acc1_regular"] = *r.acc1_regular;
  else j["acc1_regular"] = nullptr;
  if (r.r_fad) j["r_fad"] = *r.r_fad;
  else j["r_fad"] = nullptr;
  j["r_mix"] = r.r_mix;
  j["regular_acc"] = r.regular_acc;
  j["regular_all"] = r.regular_all;
  j["fa_acc"] = r.fa_acc;
  j["fa_all"] = r.fa_all;
  ordered_json kinds;
  for (const auto& [kind, ct] : r.per_kind) {
    kinds[kind] = {{"correct", ct.first}, {"total", ct.second}};
  }
  j["per_kind"] = kinds;
  return j;
}

inline std::string format_report(const MetricsReport& r) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(4);
  auto line = [&](const std::string& name, const std::optional<double>& v,
                  int acc, int all) {
    os << std::left << std::setw(22) << name;
    if (v) os << std::setw(8) << *v;
    else os << std::setw(8) << "n/a";
    os << acc << "/" << all << "\n";
  };
  line("acc1_regular", r.acc1_regular, r.regular_acc, r.regular_all);
  line("r_fad", r.r_fad, r.fa_acc, r.fa_all);
  line("r_mix", r.r_mix, r.fa_acc + r.regular_acc, r.fa_all + r.regular_all);
  for (const auto& [kind, ct] : r.per_kind) {
    os << "  " << std::left << std::setw(20) << kind << ct.first << "/"
       << ct.second << "\n";
  }
  return os.str();
}

}  // namespace grounder

#endif  // GROUNDER_EVALKIT_HPP
