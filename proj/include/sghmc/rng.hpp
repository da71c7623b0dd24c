#pragma once

#include <cstdint>
#include <random>
#include <string_view>

#include "sghmc/types.hpp"

namespace sghmc {

// Stream key derivation: stream id = mix(master, fnv1a(tag), replica).
// Every random stream in the library is created through this function so a
// run is reproducible from its master seed alone.
std::uint64_t derive_seed(std::uint64_t master, std::string_view tag,
                          std::uint64_t replica = 0);

std::uint64_t splitmix64(std::uint64_t x);

class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

  double normal() { return normal_(engine_); }
  double uniform() { return uniform_(engine_); }
  // Uniform on {0, ..., n-1}.
  std::size_t index(std::size_t n) {
    return std::uniform_int_distribution<std::size_t>(0, n - 1)(engine_);
  }

  void fill_normal(Vector& out) {
    for (Eigen::Index i = 0; i < out.size(); ++i) out[i] = normal_(engine_);
  }
  Vector normal_vector(Eigen::Index dim) {
    Vector out(dim);
    fill_normal(out);
    return out;
  }
  // Uniform direction on the unit sphere.
  Vector unit_vector(Eigen::Index dim);
  // Uniform point in the centred ball of the given radius.
  Vector in_ball(Eigen::Index dim, double radius);

  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
  std::uniform_real_distribution<double> uniform_{0.0, 1.0};
};

}  // namespace sghmc
