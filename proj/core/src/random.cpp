// SPDX-License-Identifier: Apache-2.0
#include "dsg/random.hpp"

#include <boost/random/normal_distribution.hpp>
#include <boost/random/uniform_01.hpp>

namespace dsg {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream) {
  return splitmix64(splitmix64(base) ^ (stream * 0xD1B54A32D192ED03ULL + 0x8CB92BA72F3D8DD7ULL));
}

Rng make_rng(std::uint64_t base, std::uint64_t stream) { return Rng(derive_seed(base, stream)); }

// boost's ziggurat sampler keeps no state between calls, so a fresh
// distribution object per call yields the same stream as a long-lived one.
double standard_normal(Rng& rng) {
  boost::random::normal_distribution<double> dist;
  return dist(rng);
}

void fill_standard_normal(Rng& rng, Eigen::Ref<Vector> out) {
  boost::random::normal_distribution<double> dist;
  for (Eigen::Index i = 0; i < out.size(); ++i) out[i] = dist(rng);
}

Vector standard_normal_vector(Rng& rng, Eigen::Index n) {
  Vector v(n);
  fill_standard_normal(rng, v);
  return v;
}

double uniform01(Rng& rng) {
  boost::random::uniform_01<double> dist;
  return dist(rng);
}

}  // namespace dsg
