#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace homsync {

/// Seeded generator. Every consumer draws from its own named substream of the
/// run seed, so enabling or disabling one subsystem never shifts the draws
/// seen by another.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

  static std::uint64_t derive_seed(std::uint64_t root, std::string_view name);
  static Rng substream(std::uint64_t root, std::string_view name) { return Rng(derive_seed(root, name)); }

  double uniform() { return std::uniform_real_distribution<double>(0.0, 1.0)(engine_); }
  double normal() { return normal_(engine_); }
  double exponential(double rate) { return std::exponential_distribution<double>(rate)(engine_); }
  std::uint64_t poisson(double mean);

  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
};

}  // namespace homsync
