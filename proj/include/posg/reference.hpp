#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "posg/kernels.hpp"
#include "posg/net.hpp"

namespace posg::reference {

// Straight-line, single-threaded re-implementations used as oracles by the
// test suite and as the serial side of the kernel benchmark. Deliberately
// written against the math, not against the production code paths.

// c = a * b with plain triple loop.
Matrix matmul_serial(const Matrix& a, const Matrix& b);

// Evaluation-mode forward pass (no dropout); one hidden state per position.
Matrix forward_serial(const net::ModelParams& params, const net::ModelConfig& config,
                      std::span<const std::int32_t> tokens);

}  // namespace posg::reference
