#pragma once

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <vector>

#include "posg/errors.hpp"
#include "posg/rng.hpp"

namespace posg {

// A normalized probability vector over an explicit, strictly increasing id
// support. The shared currency of the output heads, the sampling stages and
// the entropy oracle.
struct CategoricalDist {
  std::vector<std::int32_t> support;  // strictly increasing ids
  std::vector<double> probs;          // matching probabilities, sum 1

  CategoricalDist() = default;
  CategoricalDist(std::vector<std::int32_t> ids, std::vector<double> p)
      : support(std::move(ids)), probs(std::move(p)) {}

  // Full support 0..n-1.
  static CategoricalDist dense(std::vector<double> p) {
    CategoricalDist d;
    d.support.resize(p.size());
    std::iota(d.support.begin(), d.support.end(), 0);
    d.probs = std::move(p);
    return d;
  }

  std::size_t size() const { return support.size(); }

  double sum() const { return std::accumulate(probs.begin(), probs.end(), 0.0); }

  // Probability of an id; 0 when outside the support.
  double prob_of(std::int32_t id) const {
    const auto it = std::lower_bound(support.begin(), support.end(), id);
    if (it == support.end() || *it != id) return 0.0;
    return probs[static_cast<std::size_t>(it - support.begin())];
  }

  bool contains(std::int32_t id) const {
    return std::binary_search(support.begin(), support.end(), id);
  }

  // Sample an id from the distribution.
  std::int32_t sample(Rng& rng) const {
    if (support.empty()) throw InvalidArgument("sample: empty distribution");
    return support[rng.discrete(probs)];
  }

  // Checks the structural invariants: sorted duplicate-free support,
  // non-negative probabilities, total within tol of 1.
  void check(double tol = 1e-9) const {
    if (support.size() != probs.size())
      throw InvalidArgument("CategoricalDist: support/probs size mismatch");
    if (support.empty()) throw InvalidArgument("CategoricalDist: empty support");
    for (std::size_t i = 1; i < support.size(); ++i)
      if (support[i] <= support[i - 1])
        throw InvalidArgument("CategoricalDist: support not strictly increasing");
    for (double p : probs)
      if (!(p >= 0.0)) throw InvalidArgument("CategoricalDist: negative probability");
    const double total = sum();
    if (std::abs(total - 1.0) > tol)
      throw InvalidArgument("CategoricalDist: probabilities sum to " + std::to_string(total));
  }
};

}  // namespace posg
