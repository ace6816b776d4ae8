// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <random>

#include <Eigen/Core>

namespace dsg {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

using Rng = std::mt19937_64;

// Stream splitting: every (base seed, stream index) pair maps to an
// independent engine seed through two rounds of splitmix64. Trajectory i of a
// batch always uses stream i, so results do not depend on how the batch is
// scheduled across threads.
std::uint64_t splitmix64(std::uint64_t x);
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream);
Rng make_rng(std::uint64_t base, std::uint64_t stream);

/// One N(0, 1) draw (ziggurat).
double standard_normal(Rng& rng);
void fill_standard_normal(Rng& rng, Eigen::Ref<Vector> out);
Vector standard_normal_vector(Rng& rng, Eigen::Index n);

double uniform01(Rng& rng);

}  // namespace dsg
