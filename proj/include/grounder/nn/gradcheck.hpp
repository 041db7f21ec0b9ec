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

#ifndef GROUNDER_NN_GRADCHECK_HPP
#define GROUNDER_NN_GRADCHECK_HPP

#include <cmath>
#include <cstdint>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "grounder/common.hpp"
#include "grounder/nn/layers.hpp"

namespace grounder {

// ---------------------------------------------------------------------------
// Reverse-mode gradients versus central finite differences, per parameter
// block. The loss closure must be deterministic: every invocation has to
// rebuild the same graph on the current parameter values (re-seed any noise
// inside the closure).
// ---------------------------------------------------------------------------

struct GradCheckEntry {
  std::string name;
  double max_rel_err = 0.0;
  double analytic_at_worst = 0.0;
  double numeric_at_worst = 0.0;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> entries;
  double max_rel_err = 0.0;
  std::string worst_block;

  bool pass(double tol) const { return max_rel_err <= tol; }

  std::string summary() const {
    std::ostringstream os;
    os << "max_rel_err=" << max_rel_err << " worst=" << worst_block << "\n";
    for (const auto& e : entries)
      os << "  " << e.name << " rel=" << e.max_rel_err
         << " analytic=" << e.analytic_at_worst << " numeric=" << e.numeric_at_worst
         << "\n";
    return os.str();
  }
};

// make_loss() builds the graph and returns the scalar loss node. Probes
// min(numel, samples_per_block) coordinates per block, chosen by a seeded rng
// so runs are repeatable.
template <Real T>
GradCheckReport grad_check(ParamStore<T>& params,
                           const std::function<Var<T>()>& make_loss,
                           double step = 1e-4, int samples_per_block = 6,
                           std::uint64_t seed = 17) {
  params.zero_grads();
  Var<T> loss = make_loss();
  ag::backward(loss);

  GradCheckReport report;
  for (const auto& name : params.names()) {
    auto node = params.get(name);
    node->ensure_grad();
    const Tensor<T> analytic = node->grad;  // copy before further evaluations
    Tensor<T>& value = node->val;

    Rng rng(derive_seed(seed, fnv1a64(name.data(), name.size())));
    const int n = value.numel();
    const int probes = std::min(n, samples_per_block);
    std::vector<int> picked;
    picked.reserve(static_cast<std::size_t>(probes));
    while (static_cast<int>(picked.size()) < probes) {
      int idx = static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(n)));
      bool seen = false;
      for (int p : picked) seen = seen || (p == idx);
      if (!seen) picked.push_back(idx);
    }

    GradCheckEntry entry;
    entry.name = name;
    for (int idx : picked) {
      const T original = value[idx];
      value[idx] = static_cast<T>(static_cast<double>(original) + step);
      const double up = static_cast<double>(ag::value_of(make_loss()));
      value[idx] = static_cast<T>(static_cast<double>(original) - step);
      const double down = static_cast<double>(ag::value_of(make_loss()));
      value[idx] = original;

      const double numeric = (up - down) / (2.0 * step);
      const double a = static_cast<double>(analytic[idx]);
      const double denom = std::max({1e-6, std::fabs(a), std::fabs(numeric)});
      const double rel = std::fabs(a - numeric) / denom;
      if (rel > entry.max_rel_err) {
        entry.max_rel_err = rel;
        entry.analytic_at_worst = a;
        entry.numeric_at_worst = numeric;
      }
    }
    if (entry.max_rel_err > report.max_rel_err) {
      report.max_rel_err = entry.max_rel_err;
      report.worst_block = name;
    }
    report.entries.push_back(std::move(entry));
  }
  params.zero_grads();
  return report;
}

}  // namespace grounder

#endif  // GROUNDER_NN_GRADCHECK_HPP
