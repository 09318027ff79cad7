#include "scoretune/random.hpp"

namespace scoretune {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t k) {
  return splitmix64(base ^ splitmix64(k + 0x9e3779b97f4a7c15ULL));
}

void fill_standard_normal(Rng& rng, std::span<double> out) {
  std::normal_distribution<double> n01(0.0, 1.0);
  for (double& v : out) v = n01(rng);
}

void fill_standard_normal(Rng& rng, Matrix& out) {
  fill_standard_normal(rng, std::span<double>(out.data(), static_cast<std::size_t>(out.size())));
}

void fill_standard_normal(Rng& rng, Vector& out) {
  fill_standard_normal(rng, std::span<double>(out.data(), static_cast<std::size_t>(out.size())));
}

}  // namespace scoretune
