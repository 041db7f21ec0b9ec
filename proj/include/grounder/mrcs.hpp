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

#ifndef GROUNDER_MRCS_HPP
#define GROUNDER_MRCS_HPP

#include <string>
#include <utility>
#include <vector>

#include "grounder/common.hpp"
#include "grounder/nn/layers.hpp"

namespace grounder {

// ---------------------------------------------------------------------------
// Masked-reference centerpoint supervision: aligns each text variant with the
// visual tokens (cross-attention then self-attention, summed), maps the
// aligned tokens to a centerpoint heatmap, fuses variant heatmaps by
// element-wise max, and scores the ground-truth center cell with a softmax
// cross entropy over all cells. Parameters are shared across variants.
// ---------------------------------------------------------------------------

struct CenterTarget {
  int row = 0, col = 0;
};

// Maps a pixel-space box center onto the feature grid.
inline CenterTarget center_target_for_box(double cx, double cy, int image_size,
                                          int grid_h, int grid_w) {
  const double stride_y = static_cast<double>(image_size) / grid_h;
  const double stride_x = static_cast<double>(image_size) / grid_w;
  CenterTarget t;
  t.row = std::min(grid_h - 1, std::max(0, static_cast<int>(cy / stride_y)));
  t.col = std::min(grid_w - 1, std::max(0, static_cast<int>(cx / stride_x)));
  return t;
}

template <Real T>
struct MrcsHead {
  int dim = 0, grid_h = 0, grid_w = 0;
  Mha<T> cross, self_attn;
  ConvLayer<T> conv1, conv2;

  MrcsHead() = default;
  MrcsHead(ParamStore<T>& ps, const std::string& prefix, int dim_, int grid_h_,
           int grid_w_, int heads, Rng& rng)
      : dim(dim_),
        grid_h(grid_h_),
        grid_w(grid_w_),
        cross(ps, prefix + ".cross", dim_, heads, rng),
        self_attn(ps, prefix + ".self", dim_, heads, rng),
        conv1(ps, prefix + ".conv1", dim_, dim_ / 2, 3, 1, 1, rng),
        conv2(ps, prefix + ".conv2", dim_ / 2, 1, 3, 1, 1, rng) {}

  // vis: (H·W)×C tokens; text: L×C with validity. Output: (H·W)×C, the sum of
  // the cross-attention and self-attention outputs (no skip from vis).
  Var<T> align(const Var<T>& vis, const Var<T>& text,
               const std::vector<char>& text_valid) const {
    Var<T> a1 = cross(vis, text, text, text_valid);
    Var<T> a2 = self_attn(a1, a1, a1);
    return ag::add(a1, a2);
  }

  // aligned: (H·W)×C → heatmap logits H×W via two 3×3 convs (C→C/2→1).
  Var<T> heatmap(const Var<T>& aligned) const {
    Var<T> chw = ag::reshape(ag::transpose(aligned), {dim, grid_h, grid_w});
    Var<T> mid = ag::relu(conv1(chw));
    Var<T> logits = conv2(mid);  // 1×H×W
    return ag::reshape(logits, {grid_h, grid_w});
  }
};

// Element-wise max over variant heatmaps; ties route gradient to the first
// variant in list order.
template <Real T>
Var<T> fuse_heatmaps(const std::vector<Var<T>>& variant_logits) {
  if (variant_logits.empty()) throw ValidationError("fuse_heatmaps: empty list");
  if (variant_logits.size() == 1) return variant_logits[0];
  return ag::max_fuse(variant_logits);
}

// Row-major first-occurrence argmax over an H×W tensor.
template <Real T>
CenterTarget argmax_cell(const Tensor<T>& heatmap) {
  if (heatmap.ndim() != 2) throw ValidationError("argmax_cell: need 2D heatmap");
  CenterTarget best{0, 0};
  T best_v = heatmap(0, 0);
  for (int r = 0; r < heatmap.rows(); ++r) {
    for (int c = 0; c < heatmap.cols(); ++c) {
      if (heatmap(r, c) > best_v) {
        best_v = heatmap(r, c);
        best = {r, c};
      }
    }
  }
  return best;
}

// Softmax cross entropy over all H·W cells against the target cell. Only
// meaningful when a target exists; callers gate false-alarm samples off.
template <Real T>
Var<T> l_key_graph(const Var<T>& fused, const CenterTarget& target) {
  const int h = fused->val.dim(0);
  const int w = fused->val.dim(1);
  if (target.row < 0 || target.row >= h || target.col < 0 || target.col >= w)
    throw ValidationError("l_key: center target out of bounds");
  return ag::softmax_ce_index(fused, target.row * w + target.col);
}

}  // namespace grounder

#endif  // GROUNDER_MRCS_HPP
