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

#ifndef GROUNDER_TRAINKIT_HPP
#define GROUNDER_TRAINKIT_HPP

#include <cmath>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include "grounder/checkpoint.hpp"
#include "grounder/common.hpp"
#include "grounder/dataset_io.hpp"
#include "grounder/evalkit.hpp"
#include "grounder/model.hpp"

namespace grounder {

// ---------------------------------------------------------------------------
// Training configuration: model dims/flags plus optimizer schedule, written
// and read as a flat key-value text file.
// ---------------------------------------------------------------------------

struct TrainConfig {
  ModelConfig model;
  double lr = 3e-4;
  double weight_decay = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  int batch_size = 16;
  int epochs = 30;
  std::uint64_t seed = 1;

  void validate() const {
    model.validate();
    if (lr < 0) throw ValidationError("config: lr must be non-negative");
    if (weight_decay < 0) throw ValidationError("config: weight_decay must be non-negative");
    if (batch_size < 1) throw ValidationError("config: batch_size must be positive");
    if (epochs < 1) throw ValidationError("config: epochs must be positive");
  }

  std::string serialize() const {
    std::vector<std::pair<std::string, std::string>> kv;
    serialize_model_config(model, kv);
    kv.emplace_back("lr", format_double(lr));
    kv.emplace_back("weight_decay", format_double(weight_decay));
    kv.emplace_back("beta1", format_double(beta1));
    kv.emplace_back("beta2", format_double(beta2));
    kv.emplace_back("eps", format_double(eps));
    kv.emplace_back("batch_size", std::to_string(batch_size));
    kv.emplace_back("epochs", std::to_string(epochs));
    kv.emplace_back("seed", std::to_string(seed));
    std::string out;
    for (const auto& [k, v] : kv) out += k + " = " + v + "\n";
    return out;
  }

  static TrainConfig parse(const std::string& text) {
    TrainConfig c;
    for (const auto& [k, v] : parse_kv_text(text)) {
      if (apply_model_config_key(c.model, k, v)) continue;
      try {
        if (k == "lr") c.lr = std::stod(v);
        else if (k == "weight_decay") c.weight_decay = std::stod(v);
        else if (k == "beta1") c.beta1 = std::stod(v);
        else if (k == "beta2") c.beta2 = std::stod(v);
        else if (k == "eps") c.eps = std::stod(v);
        else if (k == "batch_size") c.batch_size = std::stoi(v);
        else if (k == "epochs") c.epochs = std::stoi(v);
        else if (k == "seed") c.seed = std::stoull(v);
        else throw ParseError("unknown config key: " + k);
      } catch (const ParseError&) {
        throw;
      } catch (...) {
        throw ParseError("config: bad value for " + k + ": " + v);
      }
    }
    return c;
  }
};

// ---------------------------------------------------------------------------
// Adam with decoupled weight decay, state ordered like the parameter store.
// ---------------------------------------------------------------------------

template <Real T>
class AdamW {
 public:
  AdamW(ParamStore<T>& params, double lr, double weight_decay, double beta1,
        double beta2, double eps)
      : params_(params), lr_(lr), wd_(weight_decay), b1_(beta1), b2_(beta2), eps_(eps) {
    for (const auto& name : params.names()) {
      const Tensor<T>& v = params.get(name)->val;
      m_.push_back(Tensor<T>::zeros(v.shape()));
      v_.push_back(Tensor<T>::zeros(v.shape()));
    }
  }

  void step() {
    ++t_;
    const double bc1 = 1.0 - std::pow(b1_, t_);
    const double bc2 = 1.0 - std::pow(b2_, t_);
    std::size_t idx = 0;
    for (const auto& name : params_.names()) {
      auto node = params_.get(name);
      node->ensure_grad();
      Tensor<T>& p = node->val;
      const Tensor<T>& g = node->grad;
      Tensor<T>& m = m_[idx];
      Tensor<T>& v = v_[idx];
      for (int i = 0; i < p.numel(); ++i) {
        const double gi = static_cast<double>(g[i]);
        const double mi = b1_ * static_cast<double>(m[i]) + (1.0 - b1_) * gi;
        const double vi = b2_ * static_cast<double>(v[i]) + (1.0 - b2_) * gi * gi;
        m[i] = static_cast<T>(mi);
        v[i] = static_cast<T>(vi);
        const double update = (mi / bc1) / (std::sqrt(vi / bc2) + eps_);
        p[i] = static_cast<T>(static_cast<double>(p[i]) -
                              lr_ * (update + wd_ * static_cast<double>(p[i])));
      }
      ++idx;
    }
  }

  long steps_taken() const { return t_; }

 private:
  ParamStore<T>& params_;
  double lr_, wd_, b1_, b2_, eps_;
  long t_ = 0;
  std::vector<Tensor<T>> m_, v_;
};

// ---------------------------------------------------------------------------
// Inference over a sample list, producing prediction records in pixel coords.
// ---------------------------------------------------------------------------

template <Real T>
std::vector<PredRecord> predict_samples(const IrvgModel<T>& model,
                                        const std::vector<SceneSample>& samples) {
  std::vector<PredRecord> out;
  out.reserve(samples.size());
  for (const auto& s : samples) {
    Prediction p = model.infer(s.raster, s.expression);
    PredRecord r;
    r.id = s.scene_id;
    r.exists = p.exists;
    r.score = p.score;
    r.box = to_pixel_corners(p.box, model.cfg.image_size);
    out.push_back(r);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Training loop. Globally shuffled batches, gradient averaging within a
// batch, per-epoch validation, best checkpoint by R_mix. Deterministic given
// the config seed: shuffling, dropout and mixture noise all derive from it.
// ---------------------------------------------------------------------------

struct EpochStats {
  int epoch = 0;
  double mean_cls = 0, mean_reg = 0, mean_key = 0, mean_total = 0;
  std::optional<MetricsReport> val;
};

struct TrainResult {
  std::vector<EpochStats> history;
  int best_epoch = -1;
  std::optional<MetricsReport> best_val;
};

template <Real T>
TrainResult train_model(IrvgModel<T>& model, const std::vector<SceneSample>& train_set,
                        const std::vector<SceneSample>& val_set,
                        const TrainConfig& tc, const std::string& best_ckpt_path,
                        std::ostream* step_log = nullptr,
                        std::ostream* epoch_log = nullptr) {
  tc.validate();
  if (train_set.empty()) throw ValidationError("train: empty training set");
  AdamW<T> opt(model.params, tc.lr, tc.weight_decay, tc.beta1, tc.beta2, tc.eps);
  model.params.zero_grads();

  TrainResult result;
  double best_rmix = -1.0;
  long global_step = 0;

  std::vector<int> order(train_set.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);

  for (int epoch = 0; epoch < tc.epochs; ++epoch) {
    Rng shuffle_rng(derive_seed(tc.seed, 0x5F0Full + static_cast<std::uint64_t>(epoch)));
    for (int i = static_cast<int>(order.size()) - 1; i > 0; --i)
      std::swap(order[static_cast<std::size_t>(i)],
                order[static_cast<std::size_t>(shuffle_rng.uniform_int(i + 1))]);

    EpochStats stats;
    stats.epoch = epoch;
    std::size_t cursor = 0;
    while (cursor < order.size()) {
      const std::size_t batch_end =
          std::min(order.size(), cursor + static_cast<std::size_t>(tc.batch_size));
      const int bsz = static_cast<int>(batch_end - cursor);
      double step_cls = 0, step_reg = 0, step_key = 0, step_total = 0;
      for (std::size_t bi = cursor; bi < batch_end; ++bi) {
        const SceneSample& s = train_set[static_cast<std::size_t>(order[bi])];
        const std::uint64_t step_tag =
            (static_cast<std::uint64_t>(epoch) << 32) ^ static_cast<std::uint64_t>(bi);
        Rng drop_rng(derive_seed(tc.seed, 0xD609ull ^ step_tag));
        Rng mix_rng(derive_seed(tc.seed, 0x313Dull ^ step_tag));
        // False alarms contribute only the classification term; skip the
        // centerpoint branch entirely for them.
        ForwardResult<T> fwd = model.forward(s.raster, s.expression, /*train=*/true,
                                             &drop_rng, &mix_rng,
                                             /*want_heatmaps=*/s.exists);
        NormBox gt = s.exists ? normalize_box(s.gt_box, model.cfg.image_size) : NormBox{};
        LossBreakdown<T> lb = model.loss(fwd, s.exists, gt);
        const double v_cls = lb.cls(), v_reg = lb.reg(), v_key = lb.key(),
                     v_total = lb.value();
        if (!std::isfinite(v_cls) || !std::isfinite(v_reg) || !std::isfinite(v_key))
          throw ValidationError(
              "train: non-finite loss at step " + std::to_string(global_step) +
              " (cls=" + format_double(v_cls) + " reg=" + format_double(v_reg) +
              " key=" + format_double(v_key) + ")");
        step_cls += v_cls;
        step_reg += v_reg;
        step_key += v_key;
        step_total += v_total;
        ag::backward(ag::scale(lb.total, static_cast<T>(1.0 / bsz)));
      }
      opt.step();
      model.params.zero_grads();
      if (step_log) {
        ordered_json j;
        j["step"] = global_step;
        j["l_cls"] = step_cls / bsz;
        j["l_reg"] = step_reg / bsz;
        j["l_key"] = step_key / bsz;
        j["total"] = step_total / bsz;
        (*step_log) << j.dump() << "\n";
      }
      stats.mean_cls += step_cls;
      stats.mean_reg += step_reg;
      stats.mean_key += step_key;
      stats.mean_total += step_total;
      ++global_step;
      cursor = batch_end;
    }
    const double n = static_cast<double>(train_set.size());
    stats.mean_cls /= n;
    stats.mean_reg /= n;
    stats.mean_key /= n;
    stats.mean_total /= n;

    if (!val_set.empty()) {
      MetricsReport rep = evaluate_records(val_set, predict_samples(model, val_set));
      stats.val = rep;
      if (rep.r_mix > best_rmix) {
        best_rmix = rep.r_mix;
        result.best_epoch = epoch;
        result.best_val = rep;
        if (!best_ckpt_path.empty()) save_checkpoint(best_ckpt_path, model);
      }
    }
    if (epoch_log) {
      ordered_json j;
      j["epoch"] = epoch;
      j["train_total"] = stats.mean_total;
      j["train_cls"] = stats.mean_cls;
      j["train_reg"] = stats.mean_reg;
      j["train_key"] = stats.mean_key;
      if (stats.val) {
        j["val"] = report_to_json(*stats.val);
      }
      (*epoch_log) << j.dump() << "\n";
    }
    result.history.push_back(std::move(stats));
  }

  // Without a validation split the final parameters are the result.
  if (val_set.empty()) {
    result.best_epoch = tc.epochs - 1;
    if (!best_ckpt_path.empty()) save_checkpoint(best_ckpt_path, model);
  }
  return result;
}

// ---------------------------------------------------------------------------
// Ablation grid mirroring the experiment structure: component on/off plus
// masking and random-embedding removals. Exactly six configurations.
// ---------------------------------------------------------------------------

inline std::vector<std::pair<std::string, TrainConfig>> ablate(const TrainConfig& base) {
  base.validate();
  std::vector<std::pair<std::string, TrainConfig>> out;
  auto push = [&](const std::string& name, auto mutate) {
    TrainConfig c = base;
    mutate(c);
    c.validate();
    out.emplace_back(name, c);
  };
  push("baseline", [](TrainConfig& c) {
    c.model.use_mrcs = false;
    c.model.use_masking = false;
    c.model.imvf_stages = 1;
  });
  push("imvf", [](TrainConfig& c) {
    c.model.use_mrcs = false;
    c.model.use_masking = false;
  });
  push("mrcs", [](TrainConfig& c) { c.model.imvf_stages = 1; });
  push("full", [](TrainConfig&) {});
  push("wo_masked", [](TrainConfig& c) { c.model.use_masking = false; });
  push("no_random", [](TrainConfig& c) { c.model.use_random_embedding = false; });
  return out;
}

}  // namespace grounder

#endif  // GROUNDER_TRAINKIT_HPP
