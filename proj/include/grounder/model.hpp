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

#ifndef GROUNDER_MODEL_HPP
#define GROUNDER_MODEL_HPP

#include <array>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "grounder/common.hpp"
#include "grounder/imvf.hpp"
#include "grounder/losses.hpp"
#include "grounder/mfsd.hpp"
#include "grounder/mrcs.hpp"
#include "grounder/nn/encoders.hpp"
#include "grounder/textpipe.hpp"
#include "grounder/world.hpp"

namespace grounder {

// ---------------------------------------------------------------------------
// Model configuration. The ablation flags map onto the experiment grid:
// use_mrcs gates the centerpoint branch, use_masking the augmentation set,
// imvf_stages the fusion depth, use_random_embedding the mixture's random
// block, fusion_mode the stage-fusion operator.
// ---------------------------------------------------------------------------

struct ModelConfig {
  int dim = 64;
  int heads = 4;
  int image_size = 64;
  int text_len = 12;
  int queries = 4;          // K
  int decoder_stages = 4;   // N
  int imvf_stages = 4;
  int vocab = 0;            // filled from the lexicon when 0
  double dropout = 0.1;
  double tau = 0.5;
  bool use_mrcs = true;
  bool use_masking = true;
  bool use_random_embedding = true;
  bool mixture_literal_batch = false;
  bool reg_best_query_only = false;
  bool image_pe = true;
  int mask_max_group = 3;  // 2 caps masking at the first two priority groups
  FusionMode fusion_mode = FusionMode::kMax;
  LossWeights weights;

  int feat_h() const { return image_size / 8; }
  int feat_w() const { return image_size / 8; }

  // Random tokens seen by the mixture. The literal batch-axis reading keeps
  // the random embedding in a separate batch element, which a per-sample
  // forward never attends to — computationally the same as no random block.
  int random_tokens() const {
    return (use_random_embedding && !mixture_literal_batch) ? text_len : 0;
  }

  void validate() const {
    if (dim < 4 || dim % 4 != 0) throw ValidationError("config: dim must be a positive multiple of 4");
    if (heads < 1 || dim % heads != 0)
      throw ValidationError("config: dim must be divisible by heads");
    if (image_size < 8 || image_size % 8 != 0)
      throw ValidationError("config: image_size must be a positive multiple of 8");
    if (text_len < 1) throw ValidationError("config: text_len must be positive");
    if (queries < 1) throw ValidationError("config: queries must be positive");
    if (decoder_stages < 1) throw ValidationError("config: decoder_stages must be positive");
    if (imvf_stages < 1) throw ValidationError("config: imvf_stages must be positive");
    if (dropout < 0.0 || dropout >= 1.0) throw ValidationError("config: dropout out of [0,1)");
    if (tau <= 0.0 || tau >= 1.0) throw ValidationError("config: tau out of (0,1)");
    if (use_masking && !use_mrcs)
      throw ValidationError("config: use_masking requires use_mrcs");
    if (mask_max_group != 2 && mask_max_group != 3)
      throw ValidationError("config: mask_max_group must be 2 or 3");
    if (weights.giou < 0 || weights.l1 < 0 || weights.reg < 0 || weights.key < 0)
      throw ValidationError("config: loss weights must be non-negative");
  }
};

// ---------------------------------------------------------------------------
// Flat key-value (de)serialization, shared by config files and checkpoint
// config echoes. Format: one "key = value" per line; '#' starts a comment.
// ---------------------------------------------------------------------------

inline std::string format_double(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

inline std::vector<std::pair<std::string, std::string>> parse_kv_text(
    const std::string& text) {
  std::vector<std::pair<std::string, std::string>> out;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  auto trim = [](std::string s) {
    const char* ws = " \t\r";
    auto b = s.find_first_not_of(ws);
    if (b == std::string::npos) return std::string();
    auto e = s.find_last_not_of(ws);
    return s.substr(b, e - b + 1);
  };
  while (std::getline(in, line)) {
    ++lineno;
    std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    auto eq = t.find('=');
    if (eq == std::string::npos)
      throw ParseError("config line " + std::to_string(lineno) + ": missing '='");
    std::string key = trim(t.substr(0, eq));
    std::string val = trim(t.substr(eq + 1));
    if (key.empty()) throw ParseError("config line " + std::to_string(lineno) + ": empty key");
    out.emplace_back(key, val);
  }
  return out;
}

inline void serialize_model_config(const ModelConfig& c,
                                   std::vector<std::pair<std::string, std::string>>& kv) {
  auto add = [&](const std::string& k, const std::string& v) { kv.emplace_back(k, v); };
  add("dim", std::to_string(c.dim));
  add("heads", std::to_string(c.heads));
  add("image_size", std::to_string(c.image_size));
  add("text_len", std::to_string(c.text_len));
  add("queries", std::to_string(c.queries));
  add("decoder_stages", std::to_string(c.decoder_stages));
  add("imvf_stages", std::to_string(c.imvf_stages));
  add("vocab", std::to_string(c.vocab));
  add("dropout", format_double(c.dropout));
  add("tau", format_double(c.tau));
  add("use_mrcs", c.use_mrcs ? "true" : "false");
  add("use_masking", c.use_masking ? "true" : "false");
  add("use_random_embedding", c.use_random_embedding ? "true" : "false");
  add("mixture_literal_batch", c.mixture_literal_batch ? "true" : "false");
  add("reg_best_query_only", c.reg_best_query_only ? "true" : "false");
  add("image_pe", c.image_pe ? "true" : "false");
  add("mask_max_group", std::to_string(c.mask_max_group));
  add("fusion_mode", to_string(c.fusion_mode));
  add("lambda_giou", format_double(c.weights.giou));
  add("lambda_l1", format_double(c.weights.l1));
  add("lambda_reg", format_double(c.weights.reg));
  add("lambda_key", format_double(c.weights.key));
}

// Applies one key to a ModelConfig; returns false for keys it does not own.
inline bool apply_model_config_key(ModelConfig& c, const std::string& key,
                                   const std::string& val) {
  auto as_int = [&] {
    try {
      return std::stoi(val);
    } catch (...) {
      throw ParseError("config: bad integer for " + key + ": " + val);
    }
  };
  auto as_double = [&] {
    try {
      return std::stod(val);
    } catch (...) {
      throw ParseError("config: bad number for " + key + ": " + val);
    }
  };
  auto as_bool = [&] {
    if (val == "true" || val == "1") return true;
    if (val == "false" || val == "0") return false;
    throw ParseError("config: bad boolean for " + key + ": " + val);
  };
  if (key == "dim") c.dim = as_int();
  else if (key == "heads") c.heads = as_int();
  else if (key == "image_size") c.image_size = as_int();
  else if (key == "text_len") c.text_len = as_int();
  else if (key == "queries") c.queries = as_int();
  else if (key == "decoder_stages") c.decoder_stages = as_int();
  else if (key == "imvf_stages") c.imvf_stages = as_int();
  else if (key == "vocab") c.vocab = as_int();
  else if (key == "dropout") c.dropout = as_double();
  else if (key == "tau") c.tau = as_double();
  else if (key == "use_mrcs") c.use_mrcs = as_bool();
  else if (key == "use_masking") c.use_masking = as_bool();
  else if (key == "use_random_embedding") c.use_random_embedding = as_bool();
  else if (key == "mixture_literal_batch") c.mixture_literal_batch = as_bool();
  else if (key == "reg_best_query_only") c.reg_best_query_only = as_bool();
  else if (key == "image_pe") c.image_pe = as_bool();
  else if (key == "mask_max_group") c.mask_max_group = as_int();
  else if (key == "fusion_mode") c.fusion_mode = fusion_mode_from_string(val);
  else if (key == "lambda_giou") c.weights.giou = as_double();
  else if (key == "lambda_l1") c.weights.l1 = as_double();
  else if (key == "lambda_reg") c.weights.reg = as_double();
  else if (key == "lambda_key") c.weights.key = as_double();
  else return false;
  return true;
}

inline NormBox normalize_box(const PixelBox& b, int image_size) {
  const double s = image_size;
  return NormBox{b.cx() / s, b.cy() / s, b.width() / s, b.height() / s};
}

inline std::array<double, 4> to_pixel_corners(const NormBox& b, int image_size) {
  auto c = b.corners();
  return {c[0] * image_size, c[1] * image_size, c[2] * image_size, c[3] * image_size};
}

// ---------------------------------------------------------------------------
// Full model.
// ---------------------------------------------------------------------------

template <Real T>
struct ForwardResult {
  std::vector<StageOutput<T>> stages;     // N decoder stages
  Var<T> fused_heatmap;                   // H×W; null when MRCS skipped
  std::vector<Var<T>> variant_heatmaps;   // full text first, then masks
  MaskedSet masked;
};

template <Real T>
struct LossBreakdown {
  Var<T> l_cls, l_reg, l_key, total;  // l_reg/l_key null when gated off

  double cls() const { return static_cast<double>(ag::value_of(l_cls)); }
  double reg() const { return l_reg ? static_cast<double>(ag::value_of(l_reg)) : 0.0; }
  double key() const { return l_key ? static_cast<double>(ag::value_of(l_key)) : 0.0; }
  double value() const { return static_cast<double>(ag::value_of(total)); }
};

template <Real T>
class IrvgModel {
 public:
  static constexpr std::uint64_t kInitTag = 0x1217ull;
  static constexpr std::uint64_t kFrozenMixTag = 0xF12Full;

  IrvgModel(const ModelConfig& config, const Lexicon& lexicon, std::uint64_t seed)
      : cfg(config), lex(lexicon), seed_(seed) {
    if (cfg.vocab == 0) cfg.vocab = lex.size();
    cfg.validate();
    if (cfg.vocab < lex.size())
      throw ValidationError("model: vocab smaller than lexicon");
    Rng rng(derive_seed(seed, kInitTag));
    image_enc = ImageEncoder<T>(params, "img", cfg.dim, cfg.image_size,
                                cfg.image_pe, rng);
    text_enc = TextEncoder<T>(params, "txt", cfg.vocab, cfg.dim, cfg.text_len,
                              cfg.heads, rng);
    if (cfg.use_mrcs)
      mrcs.emplace(params, "mrcs", cfg.dim, cfg.feat_h(), cfg.feat_w(), cfg.heads, rng);
    imvf = Imvf<T>(params, "imvf", cfg.dim, cfg.heads, cfg.imvf_stages,
                   cfg.dropout, cfg.fusion_mode, rng);
    mfsd = Mfsd<T>(params, "mfsd", cfg.dim, cfg.heads, cfg.queries,
                   cfg.decoder_stages, rng);
    const int l_r = cfg.random_tokens();
    if (l_r > 0) {
      Rng frz(derive_seed(seed, kFrozenMixTag));
      frozen_noise_ = Tensor<T>({l_r, cfg.dim});
      const T s = static_cast<T>(1.0 / std::sqrt(static_cast<double>(cfg.dim)));
      for (int i = 0; i < frozen_noise_.numel(); ++i)
        frozen_noise_[i] = static_cast<T>(frz.normal()) * s;
    }
  }

  std::uint64_t seed() const { return seed_; }

  PaddedIds pad(const TokenSeq& seq) const { return pad_to_length(seq, cfg.text_len); }

  // One sample end to end. In train mode dropout uses `drop_rng` and the
  // mixture's random block is redrawn from `mix_rng`; at inference dropout is
  // off and the frozen seeded draw is used. `want_heatmaps` controls whether
  // the centerpoint branch runs (prediction does not depend on it).
  ForwardResult<T> forward(const std::vector<float>& raster,
                           const std::string& expression, bool train,
                           Rng* drop_rng, Rng* mix_rng,
                           bool want_heatmaps = true) const {
    if (train && (drop_rng == nullptr || mix_rng == nullptr))
      throw ValidationError("model: train mode needs dropout and mixture rngs");
    ForwardResult<T> r;
    Var<T> vis = image_enc(raster);
    TokenSeq full = tokenize(expression, lex);
    PaddedIds padded = pad(full);
    TextEncoderOut<T> txt = text_enc(padded);

    if (cfg.use_mrcs && want_heatmaps) {
      r.masked.full = full;
      if (cfg.use_masking) r.masked = mask_variants(full, cfg.mask_max_group);
      std::vector<Var<T>> heatmaps;
      heatmaps.push_back(mrcs->heatmap(mrcs->align(vis, txt.tokens, txt.valid)));
      for (const auto& variant : r.masked.variants) {
        TextEncoderOut<T> tv = text_enc(pad(variant));
        heatmaps.push_back(mrcs->heatmap(mrcs->align(vis, tv.tokens, tv.valid)));
      }
      r.variant_heatmaps = heatmaps;
      r.fused_heatmap = fuse_heatmaps(heatmaps);
    }

    Var<T> fused = imvf.forward(vis, txt.tokens, txt.valid,
                                train ? drop_rng : nullptr);
    MixtureEmbedding<T> mixture =
        train ? make_mixture(txt.tokens, *mix_rng, cfg.random_tokens())
              : make_mixture_fixed(txt.tokens, frozen_noise_);
    r.stages = mfsd.forward(mixture, fused, vis);
    return r;
  }

  // Assembles the training loss. Regression and centerpoint terms are gated
  // off when no target exists; classification alone trains rejection.
  LossBreakdown<T> loss(const ForwardResult<T>& r, bool exists,
                        const NormBox& gt) const {
    std::vector<Var<T>> logits, boxes;
    for (const auto& st : r.stages) {
      logits.push_back(st.exist_logits);
      boxes.push_back(st.boxes);
    }
    LossBreakdown<T> out;
    out.l_cls = l_cls_graph(logits, exists);
    if (exists) {
      std::vector<int> best;
      if (cfg.reg_best_query_only) {
        for (const auto& st : r.stages) {
          int b = 0;
          for (int i = 1; i < st.exist_logits->val.numel(); ++i)
            if (st.exist_logits->val[i] > st.exist_logits->val[b]) b = i;
          best.push_back(b);
        }
      }
      out.l_reg = l_reg_graph(boxes, gt, cfg.weights, best);
      if (r.fused_heatmap) {
        CenterTarget ct = center_target_for_box(
            gt.cx * cfg.image_size, gt.cy * cfg.image_size, cfg.image_size,
            cfg.feat_h(), cfg.feat_w());
        out.l_key = l_key_graph(r.fused_heatmap, ct);
      }
    }
    out.total = total_loss_graph(out.l_cls, out.l_reg, out.l_key, cfg.weights);
    return out;
  }

  Prediction infer(const std::vector<float>& raster,
                   const std::string& expression) const {
    ForwardResult<T> r = forward(raster, expression, /*train=*/false, nullptr,
                                 nullptr, /*want_heatmaps=*/false);
    const StageOutput<T>& last = r.stages.back();
    return decide(last.exist_logits->val, last.boxes->val, cfg.tau);
  }

  ModelConfig cfg;
  Lexicon lex;
  ParamStore<T> params;
  ImageEncoder<T> image_enc;
  TextEncoder<T> text_enc;
  std::optional<MrcsHead<T>> mrcs;
  Imvf<T> imvf;
  Mfsd<T> mfsd;

 private:
  std::uint64_t seed_ = 0;
  Tensor<T> frozen_noise_;
};

}  // namespace grounder

#endif  // GROUNDER_MODEL_HPP
