#include "sghmc/rng.hpp"

#include <cmath>

namespace sghmc {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t derive_seed(std::uint64_t master, std::string_view tag,
                          std::uint64_t replica) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : tag) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return splitmix64(splitmix64(master ^ splitmix64(h)) + replica);
}

Vector Rng::unit_vector(Eigen::Index dim) {
  Vector u(dim);
  double n = 0.0;
  do {
    fill_normal(u);
    n = u.norm();
  } while (n == 0.0);
  return u / n;
}

Vector Rng::in_ball(Eigen::Index dim, double radius) {
  const double r = radius * std::pow(uniform(), 1.0 / static_cast<double>(dim));
  return r * unit_vector(dim);
}

}  // namespace sghmc
