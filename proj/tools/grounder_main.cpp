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
// Command-line entry point: dataset generation, training, evaluation,
// inference, and heatmap visualization behind one binary.
//

#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "grounder/checkpoint.hpp"
#include "grounder/dataset_io.hpp"
#include "grounder/evalkit.hpp"
#include "grounder/model.hpp"
#include "grounder/trainkit.hpp"
#include "grounder/viz.hpp"
#include "grounder/world.hpp"

namespace fs = std::filesystem;
using namespace grounder;

namespace {

// Every command ends by writing <out>/run_manifest.json: the resolved
// configuration, the seed, and a content hash per artifact. No timestamps,
// so identical runs produce identical manifests.
void write_run_manifest(const std::string& out_dir, const std::string& command,
                        std::uint64_t seed, const ordered_json& config_echo,
                        const std::vector<std::string>& artifact_names) {
  ordered_json m;
  m["command"] = command;
  m["seed"] = seed;
  m["config"] = config_echo;
  ordered_json arts = ordered_json::object();
  for (const auto& name : artifact_names)
    arts[name] = hex64(fnv1a64_file((fs::path(out_dir) / name).string()));
  m["artifacts"] = arts;
  write_file((fs::path(out_dir) / "run_manifest.json").string(), m.dump(2) + "\n");
}

ordered_json kv_to_json(const std::vector<std::pair<std::string, std::string>>& kv) {
  ordered_json j = ordered_json::object();
  for (const auto& [k, v] : kv) j[k] = v;
  return j;
}

// ---------------------------------------------------------------------------
// gen: build train/val/test splits of the synthetic benchmark.
// Train mixes regular and random-mismatch samples 1:1; val/test are half
// regular and half false alarms spread over all five variant kinds.
// ---------------------------------------------------------------------------

struct GenArgs {
  std::uint64_t seed = 1;
  std::string out = ".";
  int train = 2000;
  int test = 400;
  int val = 0;
  int image_size = 64;
  int grid = 4;
};

int run_gen(const GenArgs& a) {
  if (a.train < 0 || a.test < 0 || a.val < 0)
    throw ValidationError("gen: split sizes must be non-negative");
  if (a.train + a.test + a.val == 0)
    throw ValidationError("gen: nothing to generate");
  WorldConfig wc;
  wc.image_size = a.image_size;
  wc.grid = a.grid;
  wc.validate();
  fs::create_directories(a.out);

  DatasetManifest dm;
  dm.seed = a.seed;
  dm.image_size = a.image_size;

  struct Plan {
    std::string name;
    std::uint32_t tag;
    std::uint64_t id_base;
    SplitSpec spec;
  };
  auto eval_spec = [](int n) {
    SplitSpec s;
    s.regular = n - n / 2;
    s.fa_counts = spread_fa_kinds(n / 2);
    return s;
  };
  SplitSpec train_spec;
  train_spec.regular = a.train - a.train / 2;
  train_spec.fa_counts[VariantKind::kRandomMismatch] = a.train / 2;

  std::vector<Plan> plans;
  if (a.train > 0) plans.push_back({"train", 1, 1000000, train_spec});
  if (a.val > 0) plans.push_back({"val", 2, 2000000, eval_spec(a.val)});
  if (a.test > 0) plans.push_back({"test", 3, 3000000, eval_spec(a.test)});

  std::vector<std::string> artifacts;
  int total = 0;
  for (const auto& p : plans) {
    std::vector<SceneSample> samples =
        build_split(a.seed, p.tag, p.spec, wc, p.id_base);
    SplitInfo info;
    info.name = p.name;
    info.records_path = p.name + ".jsonl";
    info.rasters_path = p.name + ".rasters";
    info.total = static_cast<int>(samples.size());
    info.counts = count_variants(samples);
    save_records((fs::path(a.out) / info.records_path).string(), samples);
    save_rasters((fs::path(a.out) / info.rasters_path).string(), samples);
    dm.splits.push_back(info);
    artifacts.push_back(info.records_path);
    artifacts.push_back(info.rasters_path);
    total += info.total;
    std::cout << p.name << ": " << info.total << " records\n";
  }
  save_dataset_manifest((fs::path(a.out) / "dataset_manifest.json").string(), dm);
  artifacts.push_back("dataset_manifest.json");

  ordered_json echo;
  echo["train"] = a.train;
  echo["test"] = a.test;
  echo["val"] = a.val;
  echo["image_size"] = a.image_size;
  echo["grid"] = a.grid;
  echo["records"] = total;
  write_run_manifest(a.out, "gen", a.seed, echo, artifacts);
  std::cout << "total: " << total << " records -> " << a.out << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

struct TrainArgs {
  std::string data;
  std::string out = ".";
  std::string config_path;
  std::string ablation;
  bool has_seed = false;
  std::uint64_t seed = 1;
  int epochs = -1;
  int batch = -1;
  double lr = -1;
};

int run_train(const TrainArgs& a) {
  TrainConfig tc;
  if (!a.config_path.empty()) tc = TrainConfig::parse(read_file(a.config_path));
  if (a.has_seed) tc.seed = a.seed;
  if (a.epochs > 0) tc.epochs = a.epochs;
  if (a.batch > 0) tc.batch_size = a.batch;
  if (a.lr >= 0) tc.lr = a.lr;

  if (!a.ablation.empty()) {
    bool found = false;
    std::string names;
    for (auto& [name, cfg] : ablate(tc)) {
      names += (names.empty() ? "" : ", ") + name;
      if (name == a.ablation) {
        tc = cfg;
        found = true;
      }
    }
    if (!found)
      throw ValidationError("train: unknown ablation '" + a.ablation +
                            "' (choose from: " + names + ")");
  }

  const std::string manifest_path =
      (fs::path(a.data) / "dataset_manifest.json").string();
  DatasetManifest dm = load_dataset_manifest(manifest_path);
  tc.model.image_size = dm.image_size;  // the dataset fixes the raster size
  tc.validate();

  std::vector<SceneSample> train_set = load_split(manifest_path, "train");
  std::vector<SceneSample> val_set;
  if (dm.find_split("val")) val_set = load_split(manifest_path, "val");

  fs::create_directories(a.out);
  Lexicon lex = Lexicon::builtin();
  IrvgModel<float> model(tc.model, lex, tc.seed);

  std::ofstream step_log((fs::path(a.out) / "train_log.jsonl").string());
  std::ofstream epoch_log((fs::path(a.out) / "epochs.jsonl").string());
  if (!step_log || !epoch_log)
    throw ValidationError("train: cannot open log files under " + a.out);

  const std::string ckpt = (fs::path(a.out) / "checkpoint.bin").string();
  TrainResult res =
      train_model(model, train_set, val_set, tc, ckpt, &step_log, &epoch_log);
  step_log.close();
  epoch_log.close();
  write_file((fs::path(a.out) / "config.txt").string(), tc.serialize());

  ordered_json echo = kv_to_json(parse_kv_text(tc.serialize()));
  write_run_manifest(a.out, "train", tc.seed, echo,
                     {"checkpoint.bin", "train_log.jsonl", "epochs.jsonl",
                      "config.txt"});

  std::cout << "trained " << tc.epochs << " epochs, best epoch " << res.best_epoch
            << "\n";
  if (res.best_val) std::cout << format_report(*res.best_val);
  std::cout << "checkpoint: " << ckpt << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// infer: run a checkpoint over a split (optionally a subset of ids) and emit
// a predictions file in pixel coordinates.
// ---------------------------------------------------------------------------

struct InferArgs {
  std::string ckpt;
  std::string data;
  std::string split = "test";
  std::string out = ".";
  std::vector<std::uint64_t> ids;
  bool has_tau = false;
  double tau = 0.5;
  std::uint64_t seed = 1;
};

int run_infer(const InferArgs& a) {
  Lexicon lex = Lexicon::builtin();
  IrvgModel<float> model = load_checkpoint<float>(a.ckpt, lex);
  if (a.has_tau) {
    if (!(a.tau > 0.0 && a.tau < 1.0))
      throw ValidationError("infer: tau must lie in (0,1)");
    model.cfg.tau = a.tau;
  }
  const std::string manifest_path =
      (fs::path(a.data) / "dataset_manifest.json").string();
  std::vector<SceneSample> samples = load_split(manifest_path, a.split);
  if (!a.ids.empty()) {
    std::vector<SceneSample> picked;
    for (std::uint64_t id : a.ids) {
      bool found = false;
      for (const auto& s : samples)
        if (s.scene_id == id) {
          picked.push_back(s);
          found = true;
          break;
        }
      if (!found)
        throw ValidationError("infer: id " + std::to_string(id) + " not in split " +
                              a.split);
    }
    samples = std::move(picked);
  }
  std::vector<PredRecord> preds = predict_samples(model, samples);
  fs::create_directories(a.out);
  save_predictions((fs::path(a.out) / "predictions.jsonl").string(), preds);

  ordered_json echo;
  echo["ckpt"] = a.ckpt;
  echo["split"] = a.split;
  echo["tau"] = model.cfg.tau;
  echo["records"] = preds.size();
  write_run_manifest(a.out, "infer", a.seed, echo, {"predictions.jsonl"});
  std::cout << preds.size() << " predictions -> "
            << (fs::path(a.out) / "predictions.jsonl").string() << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// eval: score a predictions file against a split.
// ---------------------------------------------------------------------------

struct EvalArgs {
  std::string pred;
  std::string data;
  std::string split = "test";
  std::string out = ".";
  bool has_reject = false;
  double score_reject = 0.5;
  std::uint64_t seed = 1;
};

int run_eval(const EvalArgs& a) {
  ScoreOptions opt;
  if (a.has_reject) opt.score_reject = a.score_reject;
  const std::string manifest_path =
      (fs::path(a.data) / "dataset_manifest.json").string();
  MetricsReport rep = evaluate_file(a.pred, manifest_path, a.split, opt);
  fs::create_directories(a.out);
  write_file((fs::path(a.out) / "report.json").string(),
             report_to_json(rep).dump(2) + "\n");

  ordered_json echo;
  echo["pred"] = a.pred;
  echo["split"] = a.split;
  if (a.has_reject) echo["score_reject"] = a.score_reject;
  write_run_manifest(a.out, "eval", a.seed, echo, {"report.json"});
  std::cout << format_report(rep);
  return 0;
}

// ---------------------------------------------------------------------------
// viz: render the scene with predicted/ground-truth boxes plus the fused and
// per-variant centerpoint heatmaps; the fused argmax cell gets a crosshair.
// ---------------------------------------------------------------------------

struct VizArgs {
  std::string ckpt;
  std::string data;
  std::string split = "test";
  std::uint64_t id = 0;
  std::string out = ".";
  std::uint64_t seed = 1;
};

int run_viz(const VizArgs& a) {
  Lexicon lex = Lexicon::builtin();
  IrvgModel<float> model = load_checkpoint<float>(a.ckpt, lex);
  const std::string manifest_path =
      (fs::path(a.data) / "dataset_manifest.json").string();
  std::vector<SceneSample> samples = load_split(manifest_path, a.split);
  const SceneSample* sample = nullptr;
  for (const auto& s : samples)
    if (s.scene_id == a.id) sample = &s;
  if (!sample)
    throw ValidationError("viz: id " + std::to_string(a.id) + " not in split " +
                          a.split);

  ForwardResult<float> fwd = model.forward(sample->raster, sample->expression,
                                           /*train=*/false, nullptr, nullptr,
                                           /*want_heatmaps=*/true);
  if (!fwd.fused_heatmap)
    throw ValidationError("viz: checkpoint has no centerpoint branch");
  const int S = model.cfg.image_size;
  fs::create_directories(a.out);
  std::vector<std::string> artifacts;

  // Scene with boxes: ground truth green, prediction red.
  Prediction pred = decide(fwd.stages.back().exist_logits->val,
                           fwd.stages.back().boxes->val, model.cfg.tau);
  std::vector<std::uint8_t> rgb = raster_to_rgb(sample->raster, S);
  if (sample->exists) draw_box_outline(rgb, S, sample->gt_box, 40, 220, 40);
  auto pc = to_pixel_corners(pred.box, S);
  draw_box_outline(rgb, S, PixelBox{pc[0], pc[1], pc[2], pc[3]}, 230, 40, 40);
  const std::string scene_name = "scene_" + std::to_string(a.id) + ".ppm";
  write_ppm((fs::path(a.out) / scene_name).string(), rgb, S, S);
  artifacts.push_back(scene_name);

  // Fused heatmap with the argmax cell's center marked: white center pixel,
  // black crosshair arms.
  const Tensor<float>& fused = fwd.fused_heatmap->val;
  CenterTarget am = argmax_cell(fused);
  const int sy = S / fused.dim(0), sx = S / fused.dim(1);
  const int cy = am.row * sy + sy / 2, cx = am.col * sx + sx / 2;
  std::vector<std::uint8_t> gray = heatmap_to_gray(fused, S);
  for (int d = 1; d <= 3; ++d) {
    for (auto [x, y] : {std::pair{cx - d, cy}, std::pair{cx + d, cy},
                        std::pair{cx, cy - d}, std::pair{cx, cy + d}})
      if (x >= 0 && y >= 0 && x < S && y < S)
        gray[static_cast<std::size_t>(y * S + x)] = 0;
  }
  gray[static_cast<std::size_t>(cy * S + cx)] = 255;
  write_pgm((fs::path(a.out) / "heatmap_fused.pgm").string(), gray, S, S);
  artifacts.push_back("heatmap_fused.pgm");

  for (std::size_t k = 0; k < fwd.variant_heatmaps.size(); ++k) {
    const std::string name = "heatmap_variant_" + std::to_string(k) + ".pgm";
    write_pgm((fs::path(a.out) / name).string(),
              heatmap_to_gray(fwd.variant_heatmaps[k]->val, S), S, S);
    artifacts.push_back(name);
  }

  ordered_json summary;
  summary["id"] = a.id;
  summary["expression"] = sample->expression;
  summary["argmax"] = {{"row", am.row}, {"col", am.col}};
  summary["center_px"] = {{"x", cx}, {"y", cy}};
  summary["prediction"] = {{"exists", pred.exists},
                           {"score", pred.score},
                           {"box", {pc[0], pc[1], pc[2], pc[3]}}};
  ordered_json variants = ordered_json::array();
  variants.push_back(fwd.masked.full.text());
  for (const auto& v : fwd.masked.variants) variants.push_back(v.text());
  summary["variants"] = variants;
  write_file((fs::path(a.out) / "viz_summary.json").string(),
             summary.dump(2) + "\n");
  artifacts.push_back("viz_summary.json");

  ordered_json echo;
  echo["ckpt"] = a.ckpt;
  echo["split"] = a.split;
  echo["id"] = a.id;
  write_run_manifest(a.out, "viz", a.seed, echo, artifacts);
  std::cout << "wrote " << artifacts.size() << " files -> " << a.out << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"synthetic-scene visual grounding toolkit"};
  app.require_subcommand(1);

  GenArgs ga;
  auto* gen = app.add_subcommand("gen", "generate dataset splits");
  gen->add_option("--seed", ga.seed, "dataset seed");
  gen->add_option("--out", ga.out, "output directory");
  gen->add_option("--train", ga.train, "training split size");
  gen->add_option("--test", ga.test, "test split size");
  gen->add_option("--val", ga.val, "validation split size (0 = none)");
  gen->add_option("--image-size", ga.image_size, "raster side in pixels");
  gen->add_option("--grid", ga.grid, "placement grid side");

  TrainArgs ta;
  auto* train = app.add_subcommand("train", "train a model");
  train->add_option("--data", ta.data, "dataset directory")->required();
  train->add_option("--out", ta.out, "output directory");
  train->add_option("--config", ta.config_path, "flat key-value config file");
  train->add_option("--ablation", ta.ablation, "named ablation configuration");
  auto* seed_opt = train->add_option("--seed", ta.seed, "training seed");
  train->add_option("--epochs", ta.epochs, "override epoch count");
  train->add_option("--batch", ta.batch, "override batch size");
  train->add_option("--lr", ta.lr, "override learning rate");

  InferArgs ia;
  auto* infer = app.add_subcommand("infer", "run a checkpoint over a split");
  infer->add_option("--ckpt", ia.ckpt, "checkpoint file")->required();
  infer->add_option("--data", ia.data, "dataset directory")->required();
  infer->add_option("--split", ia.split, "split name");
  infer->add_option("--out", ia.out, "output directory");
  infer->add_option("--id", ia.ids, "restrict to these scene ids");
  auto* tau_opt = infer->add_option("--tau", ia.tau, "existence threshold");
  infer->add_option("--seed", ia.seed, "recorded in the run manifest");

  EvalArgs ea;
  auto* eval = app.add_subcommand("eval", "score a predictions file");
  eval->add_option("--pred", ea.pred, "predictions file")->required();
  eval->add_option("--data", ea.data, "dataset directory")->required();
  eval->add_option("--split", ea.split, "split name");
  eval->add_option("--out", ea.out, "output directory");
  auto* rej_opt =
      eval->add_option("--score-reject", ea.score_reject,
                       "treat predictions below this score as non-existent");
  eval->add_option("--seed", ea.seed, "recorded in the run manifest");

  VizArgs va;
  auto* viz = app.add_subcommand("viz", "render heatmaps for one sample");
  viz->add_option("--ckpt", va.ckpt, "checkpoint file")->required();
  viz->add_option("--data", va.data, "dataset directory")->required();
  viz->add_option("--split", va.split, "split name");
  viz->add_option("--id", va.id, "scene id to render")->required();
  viz->add_option("--out", va.out, "output directory");
  viz->add_option("--seed", va.seed, "recorded in the run manifest");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 1;  // bad flags are validation errors
  }

  try {
    if (gen->parsed()) return run_gen(ga);
    if (train->parsed()) {
      ta.has_seed = seed_opt->count() > 0;
      return run_train(ta);
    }
    if (infer->parsed()) {
      ia.has_tau = tau_opt->count() > 0;
      return run_infer(ia);
    }
    if (eval->parsed()) {
      ea.has_reject = rej_opt->count() > 0;
      return run_eval(ea);
    }
    if (viz->parsed()) return run_viz(va);
    std::cerr << "error: no subcommand\n";
    return 1;
  } catch (const ValidationError& e) {
    std::cerr << "validation error: " << e.what() << "\n";
    return 1;
  } catch (const ParseError& e) {
    std::cerr << "validation error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "runtime error: " << e.what() << "\n";
    return 2;
  }
}
