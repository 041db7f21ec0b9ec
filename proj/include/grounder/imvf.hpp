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

#ifndef GROUNDER_IMVF_HPP
#define GROUNDER_IMVF_HPP

#include <string>
#include <vector>

#include "grounder/common.hpp"
#include "grounder/nn/layers.hpp"

namespace grounder {

// ---------------------------------------------------------------------------
// Iterative multi-level vision-language fusion. Each stage re-enhances the
// base text embedding (two FC layers with dropout between), cross-attends the
// current visual map onto it, self-attends with the visual map as values, and
// sums the three terms. The next stage consumes the previous stage's output;
// the module output fuses all stage maps element-wise.
// ---------------------------------------------------------------------------

enum class FusionMode { kMax, kSum, kProduct };

inline const char* to_string(FusionMode m) {
  switch (m) {
    case FusionMode::kMax: return "max";
    case FusionMode::kSum: return "sum";
    case FusionMode::kProduct: return "product";
  }
  return "";
}

inline FusionMode fusion_mode_from_string(const std::string& s) {
  if (s == "max") return FusionMode::kMax;
  if (s == "sum") return FusionMode::kSum;
  if (s == "product") return FusionMode::kProduct;
  throw ParseError("unknown fusion mode: " + s);
}

template <Real T>
struct ImvfStage {
  Ffn<T> mtfe_ffn;  // FC → ReLU → dropout → FC, width C throughout
  Mha<T> cross, self_attn;

  ImvfStage() = default;
  ImvfStage(ParamStore<T>& ps, const std::string& prefix, int dim, int heads,
            double dropout, Rng& rng)
      : mtfe_ffn(ps, prefix + ".mtfe", dim, dim, dim, rng, dropout),
        cross(ps, prefix + ".cross", dim, heads, rng),
        self_attn(ps, prefix + ".self", dim, heads, rng) {}

  // Text enhancement; PAD rows pass through untouched.
  Var<T> mtfe(const Var<T>& text_base, const std::vector<char>& valid,
              Rng* drop_rng) const {
    Var<T> t = mtfe_ffn(text_base, drop_rng);
    return ag::select_rows(valid, t, text_base);
  }

  // One fusion step: F_g = cross(vis → text); F_c = self(F_g keys, vis
  // values); output F_m = vis + F_g + F_c.
  Var<T> fuse(const Var<T>& vis_tokens, const Var<T>& text,
              const std::vector<char>& text_valid) const {
    Var<T> f_g = cross(vis_tokens, text, text, text_valid);
    Var<T> f_c = self_attn(f_g, f_g, vis_tokens);
    return ag::add(ag::add(vis_tokens, f_g), f_c);
  }
};

template <Real T>
struct Imvf {
  FusionMode mode = FusionMode::kMax;
  std::vector<ImvfStage<T>> stages;

  Imvf() = default;
  Imvf(ParamStore<T>& ps, const std::string& prefix, int dim, int heads,
       int n_stages, double dropout, FusionMode mode_, Rng& rng)
      : mode(mode_) {
    if (n_stages < 1) throw ValidationError("imvf: need at least one stage");
    for (int i = 0; i < n_stages; ++i)
      stages.emplace_back(ps, prefix + ".s" + std::to_string(i), dim, heads,
                          dropout, rng);
  }

  // vis_tokens: (H·W)×C; text_base: L×C. Each stage re-reads text_base.
  // `stage_maps` (optional) receives every F_m for inspection.
  Var<T> forward(const Var<T>& vis_tokens, const Var<T>& text_base,
                 const std::vector<char>& text_valid, Rng* drop_rng,
                 std::vector<Var<T>>* stage_maps = nullptr) const {
    std::vector<Var<T>> maps;
    Var<T> cur = vis_tokens;
    for (const auto& st : stages) {
      Var<T> text_i = st.mtfe(text_base, text_valid, drop_rng);
      cur = st.fuse(cur, text_i, text_valid);
      maps.push_back(cur);
    }
    if (stage_maps) *stage_maps = maps;
    switch (mode) {
      case FusionMode::kMax:
        return maps.size() == 1 ? maps[0] : ag::max_fuse(maps);
      case FusionMode::kSum: {
        Var<T> acc = maps[0];
        for (std::size_t i = 1; i < maps.size(); ++i) acc = ag::add(acc, maps[i]);
        return acc;
      }
      case FusionMode::kProduct: {
        Var<T> acc = maps[0];
        for (std::size_t i = 1; i < maps.size(); ++i) acc = ag::mul(acc, maps[i]);
        return acc;
      }
    }
    throw ValidationError("imvf: bad fusion mode");
  }
};

}  // namespace grounder

#endif  // GROUNDER_IMVF_HPP
