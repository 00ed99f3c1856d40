#pragma once

#include <span>
#include <vector>

#include "posg/corpus.hpp"
#include "posg/dist.hpp"
#include "posg/net.hpp"

namespace posg::heads {

// Softmax over exp(h . w_x) for the whole vocabulary.
CategoricalDist mle_distribution(const net::ModelParams& params, std::span<const double> h);

// Softmax over exp(h . o_p) for the tag inventory.
CategoricalDist pos_distribution(const net::ModelParams& params, std::span<const double> h);

// Softmax over exp(h . w_x) restricted to the cell of tag pos; tokens outside
// the cell have implied probability zero.
CategoricalDist token_distribution_given_pos(const net::ModelParams& params,
                                             const corpus::PosPartition& partition,
                                             std::span<const double> h, std::int32_t pos);

// The factored joint: a tag distribution and, for every tag, a conditional
// token distribution over that tag's cell. Conditionals are stored per cell;
// a dense |P| x |V| table is never formed.
struct JointDist {
  CategoricalDist pos;                        // over the full inventory
  std::vector<CategoricalDist> conditionals;  // aligned with pos.support

  const CategoricalDist& conditional_for(std::int32_t pos_id) const;
  void check(double tol = 1e-9) const;  // joint sums to 1, supports inside cells
};

JointDist joint_distribution(const net::ModelParams& params,
                             const corpus::PosPartition& partition, std::span<const double> h);

// p(x) = sum over tags of p(tag) * p(x | tag).
CategoricalDist marginal_token_distribution(const JointDist& joint);

// Mean per-token factored objective: -(1/T) sum_t [log p(tag_t | .) +
// log p(x_t | tag_t, .)]. hidden.row(t) scores the pair (gold_tokens[t],
// gold_pos[t]). Throws DataError when a gold token lies outside its gold
// tag's cell.
double posg_loss(const net::ModelParams& params, const corpus::PosPartition& partition,
                 const Matrix& hidden, std::span<const std::int32_t> gold_tokens,
                 std::span<const std::int32_t> gold_pos);

// Same contract for the plain softmax objective; the |P| = 1 reduction of the
// factored loss must match it.
double mle_loss(const net::ModelParams& params, const Matrix& hidden,
                std::span<const std::int32_t> gold_tokens);

}  // namespace posg::heads
