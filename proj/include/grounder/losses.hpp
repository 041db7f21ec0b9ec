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

#ifndef GROUNDER_LOSSES_HPP
#define GROUNDER_LOSSES_HPP

#include <array>
#include <cmath>
#include <optional>
#include <vector>

#include "grounder/common.hpp"
#include "grounder/nn/autograd.hpp"

namespace grounder {

// ---------------------------------------------------------------------------
// Box geometry on plain numbers (used by the evaluator) and as differentiable
// graph constructions (used by the regression loss).
// ---------------------------------------------------------------------------

struct NormBox {
  double cx = 0, cy = 0, w = 0, h = 0;

  std::array<double, 4> corners() const {
    return {cx - 0.5 * w, cy - 0.5 * h, cx + 0.5 * w, cy + 0.5 * h};
  }
};

struct LossWeights {
  double giou = 3.0;
  double l1 = 7.0;
  double reg = 2.0;
  double key = 5.0;
};

// Corner boxes (x1,y1,x2,y2), any consistent unit.
inline double iou_corners(const std::array<double, 4>& a,
                          const std::array<double, 4>& b) {
  const double aw = a[2] - a[0], ah = a[3] - a[1];
  const double bw = b[2] - b[0], bh = b[3] - b[1];
  if (aw <= 0 || ah <= 0 || bw <= 0 || bh <= 0)
    throw ValidationError("iou: zero-area box");
  const double ix = std::max(0.0, std::min(a[2], b[2]) - std::max(a[0], b[0]));
  const double iy = std::max(0.0, std::min(a[3], b[3]) - std::max(a[1], b[1]));
  const double inter = ix * iy;
  const double uni = aw * ah + bw * bh - inter;
  return inter / uni;
}

inline double giou_loss_corners(const std::array<double, 4>& a,
                                const std::array<double, 4>& b) {
  const double i = iou_corners(a, b);
  const double aw = a[2] - a[0], ah = a[3] - a[1];
  const double bw = b[2] - b[0], bh = b[3] - b[1];
  const double ix = std::max(0.0, std::min(a[2], b[2]) - std::max(a[0], b[0]));
  const double iy = std::max(0.0, std::min(a[3], b[3]) - std::max(a[1], b[1]));
  const double uni = aw * ah + bw * bh - ix * iy;
  const double ex = std::max(a[2], b[2]) - std::min(a[0], b[0]);
  const double ey = std::max(a[3], b[3]) - std::min(a[1], b[1]);
  const double encl = ex * ey;
  const double giou = i - (encl - uni) / encl;
  return 1.0 - giou;
}

inline double iou(const NormBox& a, const NormBox& b) {
  return iou_corners(a.corners(), b.corners());
}

inline double giou_loss(const NormBox& a, const NormBox& b) {
  return giou_loss_corners(a.corners(), b.corners());
}

// ---------------------------------------------------------------------------
// Graph-side constructions. A predicted box is a 1×4 row (cx,cy,w,h); the
// ground truth enters as constants.
// ---------------------------------------------------------------------------

namespace lossdetail {

template <Real T>
Var<T> scalar_const(T v) {
  return ag::constant(Tensor<T>({1, 1}, {v}));  // 1×1 to match column slices
}

template <Real T>
struct BoxVars {
  Var<T> x1, y1, x2, y2, area;
};

template <Real T>
BoxVars<T> corners_graph(const Var<T>& row /*1×4 cxcywh*/) {
  Var<T> cx = ag::slice_cols(row, 0, 1);
  Var<T> cy = ag::slice_cols(row, 1, 2);
  Var<T> w = ag::slice_cols(row, 2, 3);
  Var<T> h = ag::slice_cols(row, 3, 4);
  Var<T> hw = ag::scale(w, T(0.5));
  Var<T> hh = ag::scale(h, T(0.5));
  BoxVars<T> b;
  b.x1 = ag::sub(cx, hw);
  b.y1 = ag::sub(cy, hh);
  b.x2 = ag::add(cx, hw);
  b.y2 = ag::add(cy, hh);
  b.area = ag::mul(w, h);
  return b;
}

template <Real T>
BoxVars<T> corners_const(const NormBox& g) {
  auto c = g.corners();
  BoxVars<T> b;
  b.x1 = scalar_const<T>(static_cast<T>(c[0]));
  b.y1 = scalar_const<T>(static_cast<T>(c[1]));
  b.x2 = scalar_const<T>(static_cast<T>(c[2]));
  b.y2 = scalar_const<T>(static_cast<T>(c[3]));
  b.area = scalar_const<T>(static_cast<T>(g.w * g.h));
  return b;
}

}  // namespace lossdetail

// Differentiable 1 − GIoU between a predicted 1×4 row and a fixed gt box.
template <Real T>
Var<T> giou_loss_graph(const Var<T>& pred_row, const NormBox& gt) {
  using namespace lossdetail;
  BoxVars<T> p = corners_graph<T>(pred_row);
  BoxVars<T> g = corners_const<T>(gt);
  Var<T> iw = ag::relu(ag::sub(ag::elem_min(p.x2, g.x2), ag::elem_max(p.x1, g.x1)));
  Var<T> ih = ag::relu(ag::sub(ag::elem_min(p.y2, g.y2), ag::elem_max(p.y1, g.y1)));
  Var<T> inter = ag::mul(iw, ih);
  Var<T> uni = ag::sub(ag::add(p.area, g.area), inter);
  Var<T> iou_v = ag::div(inter, uni);
  Var<T> ew = ag::sub(ag::elem_max(p.x2, g.x2), ag::elem_min(p.x1, g.x1));
  Var<T> eh = ag::sub(ag::elem_max(p.y2, g.y2), ag::elem_min(p.y1, g.y1));
  Var<T> encl = ag::mul(ew, eh);
  Var<T> waste = ag::div(ag::sub(encl, uni), encl);
  // loss = 1 − iou + (encl − union)/encl, flattened to match other scalars
  return ag::reshape(ag::add_const(ag::add(ag::scale(iou_v, T(-1)), waste), T(1)), {1});
}

// Mean absolute coordinate difference between a 1×4 row and a fixed gt box.
template <Real T>
Var<T> l1_loss_graph(const Var<T>& pred_row, const NormBox& gt) {
  Tensor<T> g({1, 4});
  g[0] = static_cast<T>(gt.cx);
  g[1] = static_cast<T>(gt.cy);
  g[2] = static_cast<T>(gt.w);
  g[3] = static_cast<T>(gt.h);
  return ag::mean(ag::abs(ag::sub(pred_row, ag::constant(std::move(g)))));
}

// Existence classification: binary CE of every query's logit against the
// sample's exists flag, summed over stages and queries.
template <Real T>
Var<T> l_cls_graph(const std::vector<Var<T>>& exist_logits_per_stage, bool exists) {
  if (exist_logits_per_stage.empty())
    throw ValidationError("l_cls: no stage outputs");
  Var<T> total;
  const T y = exists ? T(1) : T(0);
  for (const auto& logits : exist_logits_per_stage) {
    Var<T> term = ag::sum(ag::bce_logits(logits, y));
    total = total ? ag::add(total, term) : term;
  }
  return total;
}

// Box regression: Σ over stages and supervised queries of
// λ_giou·(1−GIoU) + λ_l1·L1. `best_query` restricts stage t's sum to one
// query (the best-query-only variant); empty means all queries.
template <Real T>
Var<T> l_reg_graph(const std::vector<Var<T>>& boxes_per_stage /*K×4 each*/,
                   const NormBox& gt, const LossWeights& w,
                   const std::vector<int>& best_query = {}) {
  if (boxes_per_stage.empty()) throw ValidationError("l_reg: no stage outputs");
  if (!best_query.empty() && best_query.size() != boxes_per_stage.size())
    throw ValidationError("l_reg: best_query size mismatch");
  Var<T> total;
  for (std::size_t t = 0; t < boxes_per_stage.size(); ++t) {
    const Var<T>& boxes = boxes_per_stage[t];
    const int k = boxes->val.rows();
    for (int i = 0; i < k; ++i) {
      if (!best_query.empty() && best_query[t] != i) continue;
      Var<T> row = ag::slice_rows(boxes, i, i + 1);
      Var<T> term = ag::add(ag::scale(giou_loss_graph(row, gt), static_cast<T>(w.giou)),
                            ag::scale(l1_loss_graph(row, gt), static_cast<T>(w.l1)));
      total = total ? ag::add(total, term) : term;
    }
  }
  return total;
}

// L = l_cls + λ_reg·l_reg + λ_key·l_key; null components count as zero.
template <Real T>
Var<T> total_loss_graph(const Var<T>& l_cls, const Var<T>& l_reg,
                        const Var<T>& l_key, const LossWeights& w) {
  if (!l_cls) throw ValidationError("total_loss: missing classification term");
  Var<T> total = l_cls;
  if (l_reg) total = ag::add(total, ag::scale(l_reg, static_cast<T>(w.reg)));
  if (l_key) total = ag::add(total, ag::scale(l_key, static_cast<T>(w.key)));
  if (!std::isfinite(static_cast<double>(ag::value_of(total))))
    throw ValidationError("total_loss: non-finite value");
  return total;
}

// Plain-number variant for logging and tests.
inline double total_loss(double l_cls, double l_reg, double l_key,
                         const LossWeights& w) {
  double v = l_cls + w.reg * l_reg + w.key * l_key;
  if (!std::isfinite(v)) throw ValidationError("total_loss: non-finite value");
  return v;
}

}  // namespace grounder

#endif  // GROUNDER_LOSSES_HPP
