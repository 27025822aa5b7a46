#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <optional>
#include <random>
#include <string>

namespace ddbc {

// Deterministic random source. All distributions are implemented on top of
// the raw mt19937_64 stream (no std::*_distribution, whose output is
// implementation-defined), so a seed pins the generated bytes.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  // Uniform double in [0, 1) with 53-bit resolution.
  double uniform() {
    return static_cast<double>(gen_() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Standard normal via Box-Muller; caches the second variate.
  double gaussian() {
    if (spare_) {
      const double v = *spare_;
      spare_.reset();
      return v;
    }
    const double u1 = 1.0 - uniform();  // (0, 1]: keeps log() finite
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    spare_ = r * std::sin(2.0 * M_PI * u2);
    return r * std::cos(2.0 * M_PI * u2);
  }

  Eigen::VectorXd gaussian_vector(int k) {
    Eigen::VectorXd v(k);
    for (int i = 0; i < k; ++i) v(i) = gaussian();
    return v;
  }

  Eigen::MatrixXd gaussian_matrix(int rows, int cols) {
    Eigen::MatrixXd m(rows, cols);
    for (int i = 0; i < rows; ++i)
      for (int j = 0; j < cols; ++j) m(i, j) = gaussian();
    return m;
  }

  // Uniform direction on the unit sphere in R^k.
  Eigen::VectorXd unit_sphere(int k) {
    Eigen::VectorXd v = gaussian_vector(k);
    double norm = v.norm();
    while (norm < 1e-12) {
      v = gaussian_vector(k);
      norm = v.norm();
    }
    return v / norm;
  }

  // Uniform sample in the closed ball of the given radius in R^k.
  Eigen::VectorXd uniform_ball(int k, double radius) {
    const Eigen::VectorXd dir = unit_sphere(k);
    const double r = radius * std::pow(uniform(), 1.0 / k);
    return r * dir;
  }

 private:
  std::mt19937_64 gen_;
  std::optional<double> spare_;
};

// Seed resolution: the BILIN_SEED environment variable overrides any
// caller-provided seed; defaults to `fallback` when neither is set.
inline std::uint64_t resolve_seed(std::optional<std::uint64_t> cli_seed,
                                  std::uint64_t fallback = 0) {
  if (const char* env = std::getenv("BILIN_SEED")) {
    char* end = nullptr;
    const unsigned long long v = std::strtoull(env, &end, 10);
    if (end != env && *end == '\0') return static_cast<std::uint64_t>(v);
  }
  return cli_seed.value_or(fallback);
}

}  // namespace ddbc
