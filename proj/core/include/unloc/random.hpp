#pragma once

#include <cstdint>
#include <random>

#include "unloc/autograd.hpp"

namespace unloc {

/// Seeded generator shared by initialisers, samplers and data generation.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  double normal(double mean = 0.0, double stddev = 1.0) {
    return std::normal_distribution<double>(mean, stddev)(engine_);
  }
  double uniform(double lo = 0.0, double hi = 1.0) {
    return std::uniform_real_distribution<double>(lo, hi)(engine_);
  }
  /// Uniform integer in [lo, hi].
  int uniform_int(int lo, int hi) {
    return std::uniform_int_distribution<int>(lo, hi)(engine_);
  }
  std::uint64_t next() { return engine_(); }

  ag::Matrix normal_matrix(Eigen::Index rows, Eigen::Index cols, double stddev) {
    ag::Matrix m(rows, cols);
    for (Eigen::Index i = 0; i < m.size(); ++i) {
      m.data()[i] = static_cast<float>(normal(0.0, stddev));
    }
    return m;
  }

  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
};

}  // namespace unloc
