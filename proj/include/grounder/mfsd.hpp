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

#ifndef GROUNDER_MFSD_HPP
#define GROUNDER_MFSD_HPP

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "grounder/common.hpp"
#include "grounder/losses.hpp"
#include "grounder/nn/layers.hpp"

namespace grounder {

// ---------------------------------------------------------------------------
// False-alarm sensitive decoder. Learnable queries first attend to a mixture
// of textual and random tokens, then to the fused and raw visual tokens; a
// residual FFN yields the stage feature, from which per-query existence
// logits and sigmoid-squashed boxes are read. Stages chain through the stage
// feature, with heads applied at every stage (deep supervision).
// ---------------------------------------------------------------------------

template <Real T>
struct MixtureEmbedding {
  Var<T> tokens;            // (L + L_r)×C
  std::vector<char> valid;  // all true by construction
  int text_len = 0;
  int random_len = 0;
};

// Concatenates the text tokens with `l_r` random tokens (i.i.d. standard
// normal scaled by 1/sqrt(C)) along the token axis. All rows marked valid.
template <Real T>
MixtureEmbedding<T> make_mixture(const Var<T>& text, Rng& rng, int l_r) {
  const int l = text->val.rows();
  const int c = text->val.cols();
  MixtureEmbedding<T> m;
  m.text_len = l;
  m.random_len = l_r;
  if (l_r == 0) {
    m.tokens = text;
  } else {
    Tensor<T> noise({l_r, c});
    const T s = static_cast<T>(1.0 / std::sqrt(static_cast<double>(c)));
    for (int i = 0; i < noise.numel(); ++i)
      noise[i] = static_cast<T>(rng.normal()) * s;
    m.tokens = ag::concat_rows<T>({text, ag::constant(std::move(noise))});
  }
  m.valid.assign(static_cast<std::size_t>(l + l_r), 1);
  return m;
}

// Same layout with a caller-supplied random block (the frozen draw used at
// inference).
template <Real T>
MixtureEmbedding<T> make_mixture_fixed(const Var<T>& text, const Tensor<T>& noise) {
  const int l = text->val.rows();
  MixtureEmbedding<T> m;
  m.text_len = l;
  m.random_len = noise.numel() == 0 ? 0 : noise.rows();
  m.tokens = m.random_len == 0
                 ? text
                 : ag::concat_rows<T>({text, ag::constant(noise)});
  m.valid.assign(static_cast<std::size_t>(l + m.random_len), 1);
  return m;
}

template <Real T>
struct StageOutput {
  Var<T> r_feature;     // K×C
  Var<T> exist_logits;  // K×1
  Var<T> boxes;         // K×4, each coordinate in (0,1)
};

template <Real T>
struct MfsdStage {
  Mha<T> attn_mixture, attn_visual;
  Ffn<T> ffn;
  Dense<T> cls_head, reg_head;

  MfsdStage() = default;
  MfsdStage(ParamStore<T>& ps, const std::string& prefix, int dim, int heads,
            Rng& rng)
      : attn_mixture(ps, prefix + ".mix", dim, heads, rng),
        attn_visual(ps, prefix + ".vis", dim, heads, rng),
        ffn(ps, prefix + ".ffn", dim, dim, dim, rng),
        cls_head(ps, prefix + ".cls", dim, 1, rng),
        reg_head(ps, prefix + ".reg", dim, 4, rng) {}

  StageOutput<T> forward(const Var<T>& q_in, const MixtureEmbedding<T>& mixture,
                         const Var<T>& visual_keys) const {
    Var<T> e = attn_mixture(q_in, mixture.tokens, mixture.tokens, mixture.valid);
    Var<T> a = attn_visual(e, visual_keys, visual_keys);
    StageOutput<T> out;
    out.r_feature = ag::add(a, ffn(a));
    out.exist_logits = cls_head(out.r_feature);
    out.boxes = ag::sigmoid(reg_head(out.r_feature));
    return out;
  }
};

template <Real T>
struct Mfsd {
  Var<T> queries;  // K×C learnable
  std::vector<MfsdStage<T>> stages;

  Mfsd() = default;
  Mfsd(ParamStore<T>& ps, const std::string& prefix, int dim, int heads,
       int n_queries, int n_stages, Rng& rng)
      : queries(ps.add(prefix + ".queries",
                       normal_init<T>({n_queries, dim},
                                      1.0 / std::sqrt(static_cast<double>(dim)), rng))) {
    if (n_queries < 1) throw ValidationError("mfsd: need at least one query");
    if (n_stages < 1) throw ValidationError("mfsd: need at least one stage");
    for (int i = 0; i < n_stages; ++i)
      stages.emplace_back(ps, prefix + ".s" + std::to_string(i), dim, heads, rng);
  }

  // fused/vis tokens: (H·W)×C each; the second attention sees their 2·H·W row
  // concatenation. Stage t+1 queries with stage t's feature.
  std::vector<StageOutput<T>> forward(const MixtureEmbedding<T>& mixture,
                                      const Var<T>& fused_tokens,
                                      const Var<T>& vis_tokens) const {
    Var<T> visual_keys = ag::concat_rows<T>({fused_tokens, vis_tokens});
    std::vector<StageOutput<T>> outs;
    Var<T> q = queries;
    for (const auto& st : stages) {
      StageOutput<T> o = st.forward(q, mixture, visual_keys);
      outs.push_back(o);
      q = o.r_feature;
    }
    return outs;
  }
};

// ---------------------------------------------------------------------------
// Final decision: best query of the last stage by sigmoid score, threshold at
// tau (boundary inclusive), ties to the lowest query index.
// ---------------------------------------------------------------------------

struct Prediction {
  bool exists = false;
  double score = 0.0;
  NormBox box;
};

template <Real T>
Prediction decide(const Tensor<T>& exist_logits /*K×1*/,
                  const Tensor<T>& boxes /*K×4*/, double tau) {
  if (tau <= 0.0 || tau >= 1.0) throw ValidationError("decide: tau out of (0,1)");
  const int k = exist_logits.numel();
  if (k < 1 || boxes.rows() != k || boxes.cols() != 4)
    throw ValidationError("decide: shape mismatch");
  int best = 0;
  for (int i = 1; i < k; ++i)
    if (exist_logits[i] > exist_logits[best]) best = i;
  Prediction p;
  p.score = 1.0 / (1.0 + std::exp(-static_cast<double>(exist_logits[best])));
  p.exists = p.score >= tau;
  p.box = NormBox{static_cast<double>(boxes(best, 0)), static_cast<double>(boxes(best, 1)),
                  static_cast<double>(boxes(best, 2)), static_cast<double>(boxes(best, 3))};
  return p;
}

}  // namespace grounder

#endif  // GROUNDER_MFSD_HPP
