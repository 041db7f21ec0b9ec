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

#ifndef GROUNDER_NN_ENCODERS_HPP
#define GROUNDER_NN_ENCODERS_HPP

#include <cmath>
#include <string>
#include <vector>

#include "grounder/common.hpp"
#include "grounder/nn/layers.hpp"
#include "grounder/textpipe.hpp"

namespace grounder {

// ---------------------------------------------------------------------------
// Fixed 2D sinusoidal positional encoding, (H·W)×C with the first C/2 columns
// encoding x and the rest y.
// ---------------------------------------------------------------------------

template <Real T>
Tensor<T> sinusoidal_pe_2d(int h, int w, int c) {
  if (c % 4 != 0) throw ValidationError("positional encoding needs dim % 4 == 0");
  Tensor<T> pe({h * w, c});
  const int half = c / 2;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const int row = y * w + x;
      for (int i = 0; i < half / 2; ++i) {
        const double freq = std::pow(10000.0, -2.0 * i / half);
        pe(row, 2 * i) = static_cast<T>(std::sin(x * freq));
        pe(row, 2 * i + 1) = static_cast<T>(std::cos(x * freq));
        pe(row, half + 2 * i) = static_cast<T>(std::sin(y * freq));
        pe(row, half + 2 * i + 1) = static_cast<T>(std::cos(y * freq));
      }
    }
  }
  return pe;
}

// ---------------------------------------------------------------------------
// Visual encoder: three stride-2 conv+ReLU blocks, 3 → C/4 → C/2 → C, so a
// S×S input becomes a (S/8)² token grid. Output is token-major (H·W)×C.
// ---------------------------------------------------------------------------

template <Real T>
struct ImageEncoder {
  int dim = 0;
  int image_size = 0;
  int out_h = 0, out_w = 0;
  bool with_pe = true;
  ConvLayer<T> c1, c2, c3;
  Var<T> pe;  // constant, (H·W)×C

  ImageEncoder() = default;
  ImageEncoder(ParamStore<T>& ps, const std::string& prefix, int dim_,
               int image_size_, bool with_pe_, Rng& rng)
      : dim(dim_),
        image_size(image_size_),
        out_h(image_size_ / 8),
        out_w(image_size_ / 8),
        with_pe(with_pe_),
        c1(ps, prefix + ".c1", 3, dim_ / 4, 3, 2, 1, rng),
        c2(ps, prefix + ".c2", dim_ / 4, dim_ / 2, 3, 2, 1, rng),
        c3(ps, prefix + ".c3", dim_ / 2, dim_, 3, 2, 1, rng) {
    if (dim_ % 4 != 0) throw ValidationError("image encoder dim must be divisible by 4");
    if (image_size_ % 8 != 0)
      throw ValidationError("image size must be divisible by 8");
    pe = ag::constant(sinusoidal_pe_2d<T>(out_h, out_w, dim_));
  }

  // raster: 3·S·S floats channel-major. Returns visual tokens (H·W)×C.
  Var<T> operator()(const std::vector<float>& raster) const {
    const int s = image_size;
    if (static_cast<int>(raster.size()) != 3 * s * s)
      throw ValidationError("image encoder: raster size mismatch");
    Tensor<T> x({3, s, s});
    for (std::size_t i = 0; i < raster.size(); ++i)
      x[static_cast<int>(i)] = static_cast<T>(raster[i]);
    Var<T> v = ag::constant(std::move(x));
    v = ag::relu(c1(v));
    v = ag::relu(c2(v));
    v = ag::relu(c3(v));                            // C × H × W
    Var<T> flat = ag::reshape(v, {dim, out_h * out_w});
    Var<T> tokens = ag::transpose(flat);            // (H·W) × C
    if (with_pe) tokens = ag::add(tokens, pe);
    return tokens;
  }
};

// ---------------------------------------------------------------------------
// Text encoder: token embedding plus learned positional embedding, one
// self-attention block and a feed-forward block, both residual. PAD columns
// stay masked via the validity vector.
// ---------------------------------------------------------------------------

template <Real T>
struct TextEncoderOut {
  Var<T> tokens;  // L×C
  std::vector<char> valid;
};

template <Real T>
struct TextEncoder {
  int dim = 0;
  int max_len = 0;
  Var<T> table;  // V×C
  Var<T> pos;    // L_max×C, learned
  Mha<T> attn;
  Ffn<T> ffn;

  TextEncoder() = default;
  TextEncoder(ParamStore<T>& ps, const std::string& prefix, int vocab, int dim_,
              int max_len_, int heads, Rng& rng)
      : dim(dim_),
        max_len(max_len_),
        table(ps.add(prefix + ".embed",
                     normal_init<T>({vocab, dim_}, 1.0 / std::sqrt(static_cast<double>(dim_)), rng))),
        pos(ps.add(prefix + ".pos",
                   normal_init<T>({max_len_, dim_}, 1.0 / std::sqrt(static_cast<double>(dim_)), rng))),
        attn(ps, prefix + ".attn", dim_, heads, rng),
        ffn(ps, prefix + ".ffn", dim_, dim_, dim_, rng) {}

  Var<T> embed(const PaddedIds& ids) const {
    if (static_cast<int>(ids.ids.size()) != max_len)
      throw ValidationError("text encoder: sequence not padded to max length");
    return ag::add(ag::embedding_rows(table, ids.ids), pos);
  }

  TextEncoderOut<T> operator()(const PaddedIds& ids) const {
    Var<T> emb = embed(ids);
    Var<T> h = ag::add(emb, attn(emb, emb, emb, ids.valid));
    Var<T> out = ag::add(h, ffn(h));
    return {out, ids.valid};
  }
};

}  // namespace grounder

#endif  // GROUNDER_NN_ENCODERS_HPP
