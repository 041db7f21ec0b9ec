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

#ifndef GROUNDER_NN_LAYERS_HPP
#define GROUNDER_NN_LAYERS_HPP

#include <cmath>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "grounder/common.hpp"
#include "grounder/nn/autograd.hpp"
#include "grounder/nn/tensor.hpp"

namespace grounder {

// ---------------------------------------------------------------------------
// Parameter store: ordered, named leaf variables. The order is the creation
// order, which fixes checkpoint layout and optimizer state indexing.
// ---------------------------------------------------------------------------

template <Real T>
class ParamStore {
 public:
  Var<T> add(const std::string& name, Tensor<T> init) {
    if (by_name_.count(name)) throw ValidationError("duplicate parameter: " + name);
    Var<T> v = ag::leaf(std::move(init), true);
    names_.push_back(name);
    by_name_[name] = v;
    return v;
  }

  Var<T> get(const std::string& name) const {
    auto it = by_name_.find(name);
    if (it == by_name_.end()) throw ValidationError("unknown parameter: " + name);
    return it->second;
  }

  bool has(const std::string& name) const { return by_name_.count(name) != 0; }
  const std::vector<std::string>& names() const { return names_; }
  std::size_t size() const { return names_.size(); }

  std::size_t total_scalars() const {
    std::size_t n = 0;
    for (const auto& name : names_) n += by_name_.at(name)->val.numel();
    return n;
  }

  void zero_grads() {
    for (const auto& name : names_) by_name_.at(name)->zero_grad();
  }

 private:
  std::vector<std::string> names_;
  std::map<std::string, Var<T>> by_name_;
};

// ---------------------------------------------------------------------------
// Initializers.
// ---------------------------------------------------------------------------

template <Real T>
Tensor<T> xavier_uniform(int rows, int cols, Rng& rng) {
  Tensor<T> t({rows, cols});
  const double a = std::sqrt(6.0 / (rows + cols));
  for (auto& x : t.vec()) x = static_cast<T>((rng.uniform() * 2.0 - 1.0) * a);
  return t;
}

template <Real T>
Tensor<T> normal_init(const std::vector<int>& shape, double stddev, Rng& rng) {
  Tensor<T> t(shape);
  for (auto& x : t.vec()) x = static_cast<T>(rng.normal() * stddev);
  return t;
}

template <Real T>
Tensor<T> zeros_init(const std::vector<int>& shape) {
  Tensor<T> t(shape);
  return t;
}

// ---------------------------------------------------------------------------
// Dense: y = x · Wᵀ + b with W stored (out × in).
// ---------------------------------------------------------------------------

template <Real T>
struct Dense {
  Var<T> W, b;

  Dense() = default;
  Dense(ParamStore<T>& ps, const std::string& prefix, int in, int out, Rng& rng)
      : W(ps.add(prefix + ".w", xavier_uniform<T>(out, in, rng))),
        b(ps.add(prefix + ".b", zeros_init<T>({1, out}))) {}

  Var<T> operator()(const Var<T>& x) const {
    return ag::add_bias_rows(ag::matmul_bt(x, W), b);
  }
};

// ---------------------------------------------------------------------------
// Multi-head attention over row-major token matrices (rows = tokens,
// cols = model dim). PAD keys are excluded from the softmax via `key_valid`.
// ---------------------------------------------------------------------------

template <Real T>
struct Mha {
  int heads = 1;
  int dim = 0;
  Dense<T> wq, wk, wv, wo;

  Mha() = default;
  Mha(ParamStore<T>& ps, const std::string& prefix, int dim_, int heads_, Rng& rng)
      : heads(heads_),
        dim(dim_),
        wq(ps, prefix + ".q", dim_, dim_, rng),
        wk(ps, prefix + ".k", dim_, dim_, rng),
        wv(ps, prefix + ".v", dim_, dim_, rng),
        wo(ps, prefix + ".o", dim_, dim_, rng) {
    if (dim_ % heads_ != 0)
      throw ValidationError("mha: dim must be divisible by heads");
  }

  // q: Nq×C, k/v: Nk×C. `key_valid` has one flag per key row (all-valid when
  // empty). Returns Nq×C.
  Var<T> operator()(const Var<T>& q, const Var<T>& k, const Var<T>& v,
                    const std::vector<char>& key_valid = {}) const {
    const int dh = dim / heads;
    const T scale = static_cast<T>(1.0 / std::sqrt(static_cast<double>(dh)));
    std::vector<char> valid = key_valid;
    if (valid.empty()) valid.assign(static_cast<std::size_t>(k->val.rows()), 1);
    Var<T> pq = wq(q);
    Var<T> pk = wk(k);
    Var<T> pv = wv(v);
    std::vector<Var<T>> head_outs;
    head_outs.reserve(static_cast<std::size_t>(heads));
    for (int h = 0; h < heads; ++h) {
      Var<T> qh = ag::slice_cols(pq, h * dh, (h + 1) * dh);
      Var<T> kh = ag::slice_cols(pk, h * dh, (h + 1) * dh);
      Var<T> vh = ag::slice_cols(pv, h * dh, (h + 1) * dh);
      Var<T> logits = ag::scale(ag::matmul_bt(qh, kh), scale);
      Var<T> attn = ag::softmax_rows_masked(logits, valid);
      head_outs.push_back(ag::matmul(attn, vh));
    }
    Var<T> cat = head_outs.size() == 1 ? head_outs[0] : ag::concat_cols(head_outs);
    return wo(cat);
  }
};

// ---------------------------------------------------------------------------
// Two-layer feed-forward with ReLU; optional inverted dropout after the
// nonlinearity (active only when a train-mode rng is supplied).
// ---------------------------------------------------------------------------

template <Real T>
struct Ffn {
  Dense<T> fc1, fc2;
  double dropout_rate = 0.0;

  Ffn() = default;
  Ffn(ParamStore<T>& ps, const std::string& prefix, int in, int hidden, int out,
      Rng& rng, double dropout = 0.0)
      : fc1(ps, prefix + ".fc1", in, hidden, rng),
        fc2(ps, prefix + ".fc2", hidden, out, rng),
        dropout_rate(dropout) {}

  Var<T> operator()(const Var<T>& x, Rng* drop_rng = nullptr) const {
    Var<T> h = ag::relu(fc1(x));
    if (drop_rng != nullptr && dropout_rate > 0.0)
      h = ag::dropout(h, dropout_rate, *drop_rng, /*train=*/true);
    return fc2(h);
  }
};

// ---------------------------------------------------------------------------
// 3×3 (or k×k) convolution block; weight stored (C_out × C_in·k·k).
// ---------------------------------------------------------------------------

template <Real T>
struct ConvLayer {
  Var<T> W, b;
  int in_ch = 0, out_ch = 0, ksize = 3, stride = 1, pad = 1;

  ConvLayer() = default;
  ConvLayer(ParamStore<T>& ps, const std::string& prefix, int in_ch_, int out_ch_,
            int ksize_, int stride_, int pad_, Rng& rng)
      : in_ch(in_ch_), out_ch(out_ch_), ksize(ksize_), stride(stride_), pad(pad_) {
    const int fan_in = in_ch_ * ksize_ * ksize_;
    const int fan_out = out_ch_ * ksize_ * ksize_;
    Tensor<T> w({out_ch_, fan_in});
    const double a = std::sqrt(6.0 / (fan_in + fan_out));
    for (auto& x : w.vec()) x = static_cast<T>((rng.uniform() * 2.0 - 1.0) * a);
    W = ps.add(prefix + ".w", std::move(w));
    b = ps.add(prefix + ".b", zeros_init<T>({1, out_ch_}));
  }

  // x: C_in×H×W (3D); returns C_out×H'×W'.
  Var<T> operator()(const Var<T>& x) const {
    return ag::conv2d(x, W, b, ksize, stride, pad);
  }
};

}  // namespace grounder

#endif  // GROUNDER_NN_LAYERS_HPP
