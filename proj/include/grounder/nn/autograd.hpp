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

#ifndef GROUNDER_NN_AUTOGRAD_HPP
#define GROUNDER_NN_AUTOGRAD_HPP

#include <algorithm>
#include <cassert>
#include <functional>
#include <memory>
#include <unordered_set>
#include <utility>
#include <vector>

#include "grounder/common.hpp"
#include "grounder/nn/tensor.hpp"

namespace grounder {

// ---------------------------------------------------------------------------
// Reverse-mode autograd over Tensor<T>. Graphs are built per forward pass;
// parameters are persistent leaves whose grads accumulate until zeroed by
// the optimizer. Single-threaded by contract.
// ---------------------------------------------------------------------------

template <Real T>
struct Node;

template <Real T>
using Var = std::shared_ptr<Node<T>>;

template <Real T>
struct Node {
  Tensor<T> val;
  Tensor<T> grad;  // sized lazily on first accumulation
  bool requires_grad = false;
  std::vector<Var<T>> parents;
  std::function<void(Node<T>&)> backward_fn;

  void ensure_grad() {
    if (!grad.same_shape(val)) grad = Tensor<T>::zeros(val.shape());
  }
  void zero_grad() {
    if (grad.same_shape(val)) grad.fill(T(0));
  }
};

namespace ag {

template <Real T>
Var<T> leaf(Tensor<T> value, bool requires_grad) {
  auto n = std::make_shared<Node<T>>();
  n->val = std::move(value);
  n->requires_grad = requires_grad;
  return n;
}

template <Real T>
Var<T> constant(Tensor<T> value) {
  return leaf(std::move(value), false);
}

template <Real T>
Var<T> make_op(Tensor<T> value, std::vector<Var<T>> parents,
               std::function<void(Node<T>&)> backward_fn) {
  auto n = std::make_shared<Node<T>>();
  n->val = std::move(value);
  for (const auto& p : parents) {
    if (p->requires_grad) {
      n->requires_grad = true;
      break;
    }
  }
  n->parents = std::move(parents);
  if (n->requires_grad) n->backward_fn = std::move(backward_fn);
  return n;
}

template <Real T>
void accumulate(Node<T>* p, const Tensor<T>& g) {
  if (!p->requires_grad) return;
  p->ensure_grad();
  p->grad.add_inplace(g);
}

// Runs reverse-mode accumulation from a scalar output.
template <Real T>
void backward(const Var<T>& out) {
  assert(out->val.numel() == 1);
  std::vector<Node<T>*> order;
  std::unordered_set<Node<T>*> seen;
  std::vector<std::pair<Node<T>*, std::size_t>> stack;
  stack.emplace_back(out.get(), 0);
  seen.insert(out.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node<T>* p = node->parents[next].get();
      ++next;
      if (p->requires_grad && !seen.count(p)) {
        seen.insert(p);
        stack.emplace_back(p, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  out->ensure_grad();
  out->grad.fill(T(1));
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node<T>* n = *it;
    if (n->backward_fn) n->backward_fn(*n);
  }
}

template <Real T>
T value_of(const Var<T>& v) {
  assert(v->val.numel() == 1);
  return v->val[0];
}

// ---- elementwise -----------------------------------------------------------

template <Real T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
  assert(a->val.same_shape(b->val));
  Tensor<T> out = a->val;
  out.add_inplace(b->val);
  Node<T>* pa = a.get();
  Node<T>* pb = b.get();
  return make_op<T>(std::move(out), {a, b}, [pa, pb](Node<T>& n) {
    accumulate(pa, n.grad);
    accumulate(pb, n.grad);
  });
}

template <Real T>
Var<T> sub(const Var<T>& a, const Var<T>& b) {
  assert(a->val.same_shape(b->val));
  Tensor<T> out = a->val;
  for (int i = 0; i < out.numel(); ++i) out[i] -= b->val[i];
  Node<T>* pa = a.get();
  Node<T>* pb = b.get();
  return make_op<T>(std::move(out), {a, b}, [pa, pb](Node<T>& n) {
    accumulate(pa, n.grad);
    if (pb->requires_grad) {
      Tensor<T> g = n.grad;
      for (int i = 0; i < g.numel(); ++i) g[i] = -g[i];
      accumulate(pb, g);
    }
  });
}

template <Real T>
Var<T> mul(const Var<T>& a, const Var<T>& b) {
  assert(a->val.same_shape(b->val));
  Tensor<T> out = a->val;
  for (int i = 0; i < out.numel(); ++i) out[i] *= b->val[i];
  Node<T>* pa = a.get();
  Node<T>* pb = b.get();
  return make_op<T>(std::move(out), {a, b}, [pa, pb](Node<T>& n) {
    if (pa->requires_grad) {
      Tensor<T> g = n.grad;
      for (int i = 0; i < g.numel(); ++i) g[i] *= pb->val[i];
      accumulate(pa, g);
    }
    if (pb->requires_grad) {
      Tensor<T> g = n.grad;
      for (int i = 0; i < g.numel(); ++i) g[i] *= pa->val[i];
      accumulate(pb, g);
    }
  });
}

template <Real T>
Var<T> div(const Var<T>& a, const Var<T>& b) {
  assert(a->val.same_shape(b->val));
  Tensor<T> out = a->val;
  for (int i = 0; i < out.numel(); ++i) out[i] /= b->val[i];
  Node<T>* pa = a.get();
  Node<T>* pb = b.get();
  return make_op<T>(std::move(out), {a, b}, [pa, pb](Node<T>& n) {
    if (pa->requires_grad) {
      Tensor<T> g = n.grad;
      for (int i = 0; i < g.numel(); ++i) g[i] /= pb->val[i];
      accumulate(pa, g);
    }
    if (pb->requires_grad) {
      Tensor<T> g = n.grad;
      for (int i = 0; i < g.numel(); ++i) {
        T bv = pb->val[i];
        g[i] *= -pa->val[i] / (bv * bv);
      }
      accumulate(pb, g);
    }
  });
}

template <Real T>
Var<T> scale(const Var<T>& a, T s) {
  Tensor<T> out = a->val;
  for (int i = 0; i < out.numel(); ++i) out[i] *= s;
  Node<T>* pa = a.get();
  return make_op<T>(std::move(out), {a}, [pa, s](Node<T>& n) {
    if (pa->requires_grad) {
      Tensor<T> g = n.grad;
      for (int i = 0; i < g.numel(); ++i) g[i] *= s;
      accumulate(pa, g);
    }
  });
}

template <Real T>
Var<T> add_const(const Var<T>& a, T c) {
  Tensor<T> out = a->val;
  for (int i = 0; i < out.numel(); ++i) out[i] += c;
  Node<T>* pa = a.get();
  return make_op<T>(std::move(out), {a},
                    [pa](Node<T>& n) { accumulate(pa, n.grad); });
}

template <Real T>
Var<T> relu(const Var<T>& a) {
  Tensor<T> out = a->val;
  for (int i = 0; i < out.numel(); ++i) out[i] = std::max(out[i], T(0));
  Node<T>* pa = a.get();
  return make_op<T>(std::move(out), {a}, [pa](Node<T>& n) {
    if (!pa->requires_grad) return;
    Tensor<T> g = n.grad;
    for (int i = 0; i < g.numel(); ++i) {
      if (pa->val[i] <= T(0)) g[i] = T(0);
    }
    accumulate(pa, g);
  });
}

template <Real T>
Var<T> sigmoid(const Var<T>& a) {
  Tensor<T> out = a->val;
  for (int i = 0; i < out.numel(); ++i) out[i] = T(1) / (T(1) + std::exp(-out[i]));
  Tensor<T> saved = out;
  Node<T>* pa = a.get();
  return make_op<T>(std::move(out), {a}, [pa, saved = std::move(saved)](Node<T>& n) {
    if (!pa->requires_grad) return;
    Tensor<T> g = n.grad;
    for (int i = 0; i < g.numel(); ++i) g[i] *= saved[i] * (T(1) - saved[i]);
    accumulate(pa, g);
  });
}

// Subgradient at 0 is 0.
template <Real T>
Var<T> abs(const Var<T>& a) {
  Tensor<T> out = a->val;
  for (int i = 0; i < out.numel(); ++i) out[i] = std::abs(out[i]);
  Node<T>* pa = a.get();
  return make_op<T>(std::move(out), {a}, [pa](Node<T>& n) {
    if (!pa->requires_grad) return;
    Tensor<T> g = n.grad;
    for (int i = 0; i < g.numel(); ++i) {
      T x = pa->val[i];
      g[i] *= (x > T(0)) ? T(1) : (x < T(0) ? T(-1) : T(0));
    }
    accumulate(pa, g);
  });
}

// Elementwise min/max; ties route the subgradient to the first argument.
template <Real T>
Var<T> elem_max(const Var<T>& a, const Var<T>& b) {
  assert(a->val.same_shape(b->val));
  Tensor<T> out = a->val;
  std::vector<char> from_a(static_cast<std::size_t>(out.numel()));
  for (int i = 0; i < out.numel(); ++i) {
    from_a[static_cast<std::size_t>(i)] = a->val[i] >= b->val[i];
    out[i] = from_a[static_cast<std::size_t>(i)] ? a->val[i] : b->val[i];
  }
  Node<T>* pa = a.get();
  Node<T>* pb = b.get();
  return make_op<T>(std::move(out), {a, b},
                    [pa, pb, from_a = std::move(from_a)](Node<T>& n) {
                      Tensor<T> ga = n.grad;
                      Tensor<T> gb = n.grad;
                      for (int i = 0; i < n.grad.numel(); ++i) {
                        if (from_a[static_cast<std::size_t>(i)]) gb[i] = T(0);
                        else ga[i] = T(0);
                      }
                      accumulate(pa, ga);
                      accumulate(pb, gb);
                    });
}

template <Real T>
Var<T> elem_min(const Var<T>& a, const Var<T>& b) {
  assert(a->val.same_shape(b->val));
  Tensor<T> out = a->val;
  std::vector<char> from_a(static_cast<std::size_t>(out.numel()));
  for (int i = 0; i < out.numel(); ++i) {
    from_a[static_cast<std::size_t>(i)] = a->val[i] <= b->val[i];
    out[i] = from_a[static_cast<std::size_t>(i)] ? a->val[i] : b->val[i];
  }
  Node<T>* pa = a.get();
  Node<T>* pb = b.get();
  return make_op<T>(std::move(out), {a, b},
                    [pa, pb, from_a = std::move(from_a)](Node<T>& n) {
                      Tensor<T> ga = n.grad;
                      Tensor<T> gb = n.grad;
                      for (int i = 0; i < n.grad.numel(); ++i) {
                        if (from_a[static_cast<std::size_t>(i)]) gb[i] = T(0);
                        else ga[i] = T(0);
                      }
                      accumulate(pa, ga);
                      accumulate(pb, gb);
                    });
}

// Elementwise max over a nonempty list; per cell the subgradient goes to the
// first operand attaining the max (list order).
template <Real T>
Var<T> max_fuse(const std::vector<Var<T>>& xs) {
  if (xs.empty()) throw ValidationError("max_fuse: empty operand list");
  Tensor<T> out = xs[0]->val;
  std::vector<std::uint8_t> which(static_cast<std::size_t>(out.numel()), 0);
  for (std::size_t k = 1; k < xs.size(); ++k) {
    assert(xs[k]->val.same_shape(out));
    for (int i = 0; i < out.numel(); ++i) {
      if (xs[k]->val[i] > out[i]) {
        out[i] = xs[k]->val[i];
        which[static_cast<std::size_t>(i)] = static_cast<std::uint8_t>(k);
      }
    }
  }
  std::vector<Node<T>*> raw;
  raw.reserve(xs.size());
  for (const auto& x : xs) raw.push_back(x.get());
  return make_op<T>(std::move(out), xs,
                    [raw, which = std::move(which)](Node<T>& n) {
                      for (std::size_t k = 0; k < raw.size(); ++k) {
                        if (!raw[k]->requires_grad) continue;
                        Tensor<T> g = Tensor<T>::zeros(n.grad.shape());
                        for (int i = 0; i < n.grad.numel(); ++i) {
                          if (which[static_cast<std::size_t>(i)] == k) g[i] = n.grad[i];
                        }
                        accumulate(raw[k], g);
                      }
                    });
}

// ---- shape ops -------------------------------------------------------------

template <Real T>
Var<T> reshape(const Var<T>& a, std::vector<int> shape) {
  Tensor<T> out = a->val.reshaped(shape);
  Node<T>* pa = a.get();
  std::vector<int> in_shape = a->val.shape();
  return make_op<T>(std::move(out), {a},
                    [pa, in_shape = std::move(in_shape)](Node<T>& n) {
                      accumulate(pa, n.grad.reshaped(in_shape));
                    });
}

template <Real T>
Var<T> transpose(const Var<T>& a) {
  assert(a->val.ndim() == 2);
  Tensor<T> out({a->val.cols(), a->val.rows()});
  out.mat() = a->val.mat().transpose();
  Node<T>* pa = a.get();
  return make_op<T>(std::move(out), {a}, [pa](Node<T>& n) {
    if (!pa->requires_grad) return;
    Tensor<T> g({n.grad.cols(), n.grad.rows()});
    g.mat() = n.grad.mat().transpose();
    accumulate(pa, g);
  });
}

template <Real T>
Var<T> slice_rows(const Var<T>& a, int r0, int r1) {
  assert(a->val.ndim() == 2 && 0 <= r0 && r0 < r1 && r1 <= a->val.rows());
  int cols = a->val.cols();
  Tensor<T> out({r1 - r0, cols});
  std::copy_n(a->val.data() + static_cast<std::size_t>(r0) * cols,
              static_cast<std::size_t>(r1 - r0) * cols, out.data());
  Node<T>* pa = a.get();
  return make_op<T>(std::move(out), {a}, [pa, r0, cols](Node<T>& n) {
    if (!pa->requires_grad) return;
    pa->ensure_grad();
    for (int r = 0; r < n.grad.rows(); ++r)
      for (int c = 0; c < cols; ++c) pa->grad(r0 + r, c) += n.grad(r, c);
  });
}

template <Real T>
Var<T> concat_rows(const std::vector<Var<T>>& xs) {
  assert(!xs.empty());
  int cols = xs[0]->val.cols();
  int rows = 0;
  for (const auto& x : xs) {
    assert(x->val.ndim() == 2 && x->val.cols() == cols);
    rows += x->val.rows();
  }
  Tensor<T> out({rows, cols});
  int r = 0;
  for (const auto& x : xs) {
    std::copy_n(x->val.data(), static_cast<std::size_t>(x->val.numel()),
                out.data() + static_cast<std::size_t>(r) * cols);
    r += x->val.rows();
  }
  std::vector<Node<T>*> raw;
  std::vector<int> row_of;
  for (const auto& x : xs) {
    raw.push_back(x.get());
    row_of.push_back(x->val.rows());
  }
  return make_op<T>(std::move(out), xs,
                    [raw, row_of = std::move(row_of), cols](Node<T>& n) {
                      int r0 = 0;
                      for (std::size_t k = 0; k < raw.size(); ++k) {
                        if (raw[k]->requires_grad) {
                          Tensor<T> g({row_of[k], cols});
                          std::copy_n(n.grad.data() + static_cast<std::size_t>(r0) * cols,
                                      static_cast<std::size_t>(g.numel()), g.data());
                          accumulate(raw[k], g);
                        }
                        r0 += row_of[k];
                      }
                    });
}

template <Real T>
Var<T> slice_cols(const Var<T>& a, int c0, int c1) {
  assert(a->val.ndim() == 2 && 0 <= c0 && c0 < c1 && c1 <= a->val.cols());
  Tensor<T> out({a->val.rows(), c1 - c0});
  for (int r = 0; r < out.rows(); ++r)
    for (int c = 0; c < out.cols(); ++c) out(r, c) = a->val(r, c0 + c);
  Node<T>* pa = a.get();
  return make_op<T>(std::move(out), {a}, [pa, c0](Node<T>& n) {
    if (!pa->requires_grad) return;
    pa->ensure_grad();
    for (int r = 0; r < n.grad.rows(); ++r)
      for (int c = 0; c < n.grad.cols(); ++c) pa->grad(r, c0 + c) += n.grad(r, c);
  });
}

template <Real T>
Var<T> concat_cols(const std::vector<Var<T>>& xs) {
  assert(!xs.empty());
  int rows = xs[0]->val.rows();
  int cols = 0;
  for (const auto& x : xs) {
    assert(x->val.ndim() == 2 && x->val.rows() == rows);
    cols += x->val.cols();
  }
  Tensor<T> out({rows, cols});
  int c0 = 0;
  for (const auto& x : xs) {
    for (int r = 0; r < rows; ++r)
      for (int c = 0; c < x->val.cols(); ++c) out(r, c0 + c) = x->val(r, c);
    c0 += x->val.cols();
  }
  std::vector<Node<T>*> raw;
  std::vector<int> col_of;
  for (const auto& x : xs) {
    raw.push_back(x.get());
    col_of.push_back(x->val.cols());
  }
  return make_op<T>(std::move(out), xs,
                    [raw, col_of = std::move(col_of), rows](Node<T>& n) {
                      int c0 = 0;
                      for (std::size_t k = 0; k < raw.size(); ++k) {
                        if (raw[k]->requires_grad) {
                          Tensor<T> g({rows, col_of[k]});
                          for (int r = 0; r < rows; ++r)
                            for (int c = 0; c < col_of[k]; ++c)
                              g(r, c) = n.grad(r, c0 + c);
                          accumulate(raw[k], g);
                        }
                        c0 += col_of[k];
                      }
                    });
}

// ---- linear algebra --------------------------------------------------------

template <Real T>
Var<T> matmul(const Var<T>& a, const Var<T>& b) {
  Tensor<T> out = matmul_nn(a->val, b->val);
  Node<T>* pa = a.get();
  Node<T>* pb = b.get();
  return make_op<T>(std::move(out), {a, b}, [pa, pb](Node<T>& n) {
    if (pa->requires_grad) accumulate(pa, matmul_nt(n.grad, pb->val));
    if (pb->requires_grad) accumulate(pb, matmul_tn(pa->val, n.grad));
  });
}

// a (MxC) @ b(NxC)^T -> MxN
template <Real T>
Var<T> matmul_bt(const Var<T>& a, const Var<T>& b) {
  Tensor<T> out = matmul_nt(a->val, b->val);
  Node<T>* pa = a.get();
  Node<T>* pb = b.get();
  return make_op<T>(std::move(out), {a, b}, [pa, pb](Node<T>& n) {
    if (pa->requires_grad) accumulate(pa, matmul_nn(n.grad, pb->val));
    if (pb->requires_grad) accumulate(pb, matmul_tn(n.grad, pa->val));
  });
}

// x (MxC) + row vector b (C), broadcast over rows.
template <Real T>
Var<T> add_bias_rows(const Var<T>& x, const Var<T>& b) {
  assert(x->val.ndim() == 2 && b->val.numel() == x->val.cols());
  Tensor<T> out = x->val;
  for (int r = 0; r < out.rows(); ++r)
    for (int c = 0; c < out.cols(); ++c) out(r, c) += b->val[c];
  Node<T>* px = x.get();
  Node<T>* pb = b.get();
  return make_op<T>(std::move(out), {x, b}, [px, pb](Node<T>& n) {
    accumulate(px, n.grad);
    if (pb->requires_grad) {
      Tensor<T> g(pb->val.shape());
      for (int r = 0; r < n.grad.rows(); ++r)
        for (int c = 0; c < n.grad.cols(); ++c) g[c] += n.grad(r, c);
      accumulate(pb, g);
    }
  });
}

// ---- reductions ------------------------------------------------------------

template <Real T>
Var<T> sum(const Var<T>& a) {
  T s = 0;
  for (int i = 0; i < a->val.numel(); ++i) s += a->val[i];
  Node<T>* pa = a.get();
  return make_op<T>(Tensor<T>::scalar(s), {a}, [pa](Node<T>& n) {
    if (!pa->requires_grad) return;
    Tensor<T> g = Tensor<T>::full(pa->val.shape(), n.grad[0]);
    accumulate(pa, g);
  });
}

template <Real T>
Var<T> mean(const Var<T>& a) {
  return scale(sum(a), T(1) / static_cast<T>(a->val.numel()));
}

// ---- softmax / losses ------------------------------------------------------

// Row-wise softmax over valid key columns; invalid columns get probability 0.
// valid.size() must equal the column count and contain at least one true.
template <Real T>
Var<T> softmax_rows_masked(const Var<T>& a, const std::vector<char>& valid) {
  assert(a->val.ndim() == 2);
  const int rows = a->val.rows();
  const int cols = a->val.cols();
  assert(static_cast<int>(valid.size()) == cols);
  if (std::find(valid.begin(), valid.end(), char(1)) == valid.end())
    throw ValidationError("softmax: all keys masked");
  Tensor<T> out({rows, cols});
  for (int r = 0; r < rows; ++r) {
    T m = -std::numeric_limits<T>::infinity();
    for (int c = 0; c < cols; ++c)
      if (valid[static_cast<std::size_t>(c)]) m = std::max(m, a->val(r, c));
    T z = 0;
    for (int c = 0; c < cols; ++c) {
      if (valid[static_cast<std::size_t>(c)]) {
        out(r, c) = std::exp(a->val(r, c) - m);
        z += out(r, c);
      } else {
        out(r, c) = T(0);
      }
    }
    for (int c = 0; c < cols; ++c) out(r, c) /= z;
  }
  Tensor<T> saved = out;
  Node<T>* pa = a.get();
  return make_op<T>(std::move(out), {a},
                    [pa, saved = std::move(saved)](Node<T>& n) {
                      if (!pa->requires_grad) return;
                      const int rows = n.grad.rows();
                      const int cols = n.grad.cols();
                      Tensor<T> g({rows, cols});
                      for (int r = 0; r < rows; ++r) {
                        T dot = 0;
                        for (int c = 0; c < cols; ++c)
                          dot += n.grad(r, c) * saved(r, c);
                        for (int c = 0; c < cols; ++c)
                          g(r, c) = saved(r, c) * (n.grad(r, c) - dot);
                      }
                      accumulate(pa, g);
                    });
}

// Softmax cross entropy of a flat logit vector against one target index.
template <Real T>
Var<T> softmax_ce_index(const Var<T>& z, int target) {
  const int n = z->val.numel();
  assert(0 <= target && target < n);
  T m = -std::numeric_limits<T>::infinity();
  for (int i = 0; i < n; ++i) m = std::max(m, z->val[i]);
  T s = 0;
  for (int i = 0; i < n; ++i) s += std::exp(z->val[i] - m);
  T loss = m + std::log(s) - z->val[target];
  Tensor<T> probs(z->val.shape());
  for (int i = 0; i < n; ++i) probs[i] = std::exp(z->val[i] - m) / s;
  Node<T>* pz = z.get();
  return make_op<T>(Tensor<T>::scalar(loss), {z},
                    [pz, target, probs = std::move(probs)](Node<T>& n) {
                      if (!pz->requires_grad) return;
                      Tensor<T> g = probs;
                      g[target] -= T(1);
                      for (int i = 0; i < g.numel(); ++i) g[i] *= n.grad[0];
                      accumulate(pz, g);
                    });
}

// Elementwise binary cross entropy on logits against a constant target in
// {0,1}; logits are clipped to +-30 for the value, the gradient uses
// sigmoid(clipped z) - y.
template <Real T>
Var<T> bce_logits(const Var<T>& z, T y) {
  constexpr T kClip = T(30);
  Tensor<T> out(z->val.shape());
  Tensor<T> dz(z->val.shape());
  for (int i = 0; i < out.numel(); ++i) {
    T zi = std::clamp(z->val[i], -kClip, kClip);
    out[i] = std::max(zi, T(0)) - zi * y + std::log1p(std::exp(-std::abs(zi)));
    dz[i] = T(1) / (T(1) + std::exp(-zi)) - y;
  }
  Node<T>* pz = z.get();
  return make_op<T>(std::move(out), {z}, [pz, dz = std::move(dz)](Node<T>& n) {
    if (!pz->requires_grad) return;
    Tensor<T> g = n.grad;
    for (int i = 0; i < g.numel(); ++i) g[i] *= dz[i];
    accumulate(pz, g);
  });
}

// ---- stochastic / masking --------------------------------------------------

// Inverted dropout; identity when train is false or rate == 0.
template <Real T>
Var<T> dropout(const Var<T>& a, double rate, Rng& rng, bool train) {
  if (!train || rate <= 0.0) return a;
  const T keep = T(1) - static_cast<T>(rate);
  Tensor<T> mask(a->val.shape());
  for (int i = 0; i < mask.numel(); ++i)
    mask[i] = (rng.uniform() >= rate) ? T(1) / keep : T(0);
  Tensor<T> out = a->val;
  for (int i = 0; i < out.numel(); ++i) out[i] *= mask[i];
  Node<T>* pa = a.get();
  return make_op<T>(std::move(out), {a},
                    [pa, mask = std::move(mask)](Node<T>& n) {
                      if (!pa->requires_grad) return;
                      Tensor<T> g = n.grad;
                      for (int i = 0; i < g.numel(); ++i) g[i] *= mask[i];
                      accumulate(pa, g);
                    });
}

// Per-row select: rows with valid true come from y, others from x.
template <Real T>
Var<T> select_rows(const std::vector<char>& valid, const Var<T>& y,
                   const Var<T>& x) {
  assert(y->val.same_shape(x->val) && y->val.ndim() == 2);
  const int rows = y->val.rows();
  const int cols = y->val.cols();
  assert(static_cast<int>(valid.size()) == rows);
  Tensor<T> out({rows, cols});
  for (int r = 0; r < rows; ++r) {
    const Tensor<T>& src = valid[static_cast<std::size_t>(r)] ? y->val : x->val;
    for (int c = 0; c < cols; ++c) out(r, c) = src(r, c);
  }
  Node<T>* py = y.get();
  Node<T>* px = x.get();
  return make_op<T>(std::move(out), {y, x}, [py, px, valid](Node<T>& n) {
    const int rows = n.grad.rows();
    const int cols = n.grad.cols();
    Tensor<T> gy({rows, cols});
    Tensor<T> gx({rows, cols});
    for (int r = 0; r < rows; ++r) {
      Tensor<T>& dst = valid[static_cast<std::size_t>(r)] ? gy : gx;
      for (int c = 0; c < cols; ++c) dst(r, c) = n.grad(r, c);
    }
    accumulate(py, gy);
    accumulate(px, gx);
  });
}

// ---- convolution -----------------------------------------------------------

namespace detail {

// im2col for square kernels, zero padding. Output: (H_out*W_out) x (C_in*k*k).
template <Real T>
Tensor<T> im2col(const Tensor<T>& x, int k, int stride, int pad, int h_out,
                 int w_out) {
  const int c_in = x.dim(0);
  const int h = x.dim(1);
  const int w = x.dim(2);
  Tensor<T> cols({h_out * w_out, c_in * k * k});
  for (int oy = 0; oy < h_out; ++oy) {
    for (int ox = 0; ox < w_out; ++ox) {
      T* row = cols.data() + static_cast<std::size_t>(oy * w_out + ox) * c_in * k * k;
      int idx = 0;
      for (int c = 0; c < c_in; ++c) {
        for (int ky = 0; ky < k; ++ky) {
          int iy = oy * stride - pad + ky;
          for (int kx = 0; kx < k; ++kx, ++idx) {
            int ix = ox * stride - pad + kx;
            row[idx] = (iy >= 0 && iy < h && ix >= 0 && ix < w) ? x.at3(c, iy, ix)
                                                                : T(0);
          }
        }
      }
    }
  }
  return cols;
}

template <Real T>
void col2im_accum(const Tensor<T>& cols, int c_in, int h, int w, int k,
                  int stride, int pad, int h_out, int w_out, Tensor<T>& dx) {
  for (int oy = 0; oy < h_out; ++oy) {
    for (int ox = 0; ox < w_out; ++ox) {
      const T* row =
          cols.data() + static_cast<std::size_t>(oy * w_out + ox) * c_in * k * k;
      int idx = 0;
      for (int c = 0; c < c_in; ++c) {
        for (int ky = 0; ky < k; ++ky) {
          int iy = oy * stride - pad + ky;
          for (int kx = 0; kx < k; ++kx, ++idx) {
            int ix = ox * stride - pad + kx;
            if (iy >= 0 && iy < h && ix >= 0 && ix < w) dx.at3(c, iy, ix) += row[idx];
          }
        }
      }
    }
  }
}

}  // namespace detail

// 2D convolution. x: C_in x H x W; w: C_out x (C_in*k*k); b: C_out.
// Output: C_out x H_out x W_out.
template <Real T>
Var<T> conv2d(const Var<T>& x, const Var<T>& w, const Var<T>& b, int k,
              int stride, int pad) {
  assert(x->val.ndim() == 3 && w->val.ndim() == 2);
  const int c_in = x->val.dim(0);
  const int h = x->val.dim(1);
  const int wd = x->val.dim(2);
  const int c_out = w->val.rows();
  assert(w->val.cols() == c_in * k * k);
  assert(b->val.numel() == c_out);
  const int h_out = (h + 2 * pad - k) / stride + 1;
  const int w_out = (wd + 2 * pad - k) / stride + 1;

  Tensor<T> cols = detail::im2col(x->val, k, stride, pad, h_out, w_out);
  Tensor<T> y2 = matmul_nt(w->val, cols);  // C_out x (H_out*W_out)
  for (int c = 0; c < c_out; ++c)
    for (int i = 0; i < h_out * w_out; ++i) y2(c, i) += b->val[c];
  Tensor<T> out = y2.reshaped({c_out, h_out, w_out});

  Node<T>* px = x.get();
  Node<T>* pw = w.get();
  Node<T>* pb = b.get();
  return make_op<T>(
      std::move(out), {x, w, b},
      [px, pw, pb, cols = std::move(cols), c_in, h, wd, k, stride, pad, h_out,
       w_out](Node<T>& n) {
        const int c_out = n.val.dim(0);
        Tensor<T> dy2 = n.grad.reshaped({c_out, h_out * w_out});
        if (pb->requires_grad) {
          Tensor<T> db(pb->val.shape());
          for (int c = 0; c < c_out; ++c)
            for (int i = 0; i < h_out * w_out; ++i) db[c] += dy2(c, i);
          accumulate(pb, db);
        }
        if (pw->requires_grad) accumulate(pw, matmul_nn(dy2, cols));
        if (px->requires_grad) {
          Tensor<T> dcols = matmul_tn(dy2, pw->val);  // (HW) x (C_in*k*k)
          Tensor<T> dx = Tensor<T>::zeros({c_in, h, wd});
          detail::col2im_accum(dcols, c_in, h, wd, k, stride, pad, h_out, w_out,
                               dx);
          accumulate(px, dx);
        }
      });
}

// ---- embedding -------------------------------------------------------------

// Gathers rows of table (V x C) by token id; backward scatter-adds.
template <Real T>
Var<T> embedding_rows(const Var<T>& table, const std::vector<int>& ids) {
  assert(table->val.ndim() == 2);
  const int vocab = table->val.rows();
  const int c = table->val.cols();
  Tensor<T> out({static_cast<int>(ids.size()), c});
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || ids[i] >= vocab)
      throw ValidationError("embedding: token id out of range");
    for (int j = 0; j < c; ++j) out(static_cast<int>(i), j) = table->val(ids[i], j);
  }
  Node<T>* pt = table.get();
  return make_op<T>(std::move(out), {table}, [pt, ids](Node<T>& n) {
    if (!pt->requires_grad) return;
    pt->ensure_grad();
    for (std::size_t i = 0; i < ids.size(); ++i)
      for (int j = 0; j < n.grad.cols(); ++j)
        pt->grad(ids[i], j) += n.grad(static_cast<int>(i), j);
  });
}

}  // namespace ag
}  // namespace grounder

#endif  // GROUNDER_NN_AUTOGRAD_HPP
