#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace trident {

template <class Scalar>
using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <class Scalar>
using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

using MatD = Mat<double>;
using MatF = Mat<float>;
using VecD = Vec<double>;
using VecF = Vec<float>;

// Row-major batch layout used by the network stack: one row per sample (or
// per spatial position for feature maps), one column per feature/channel.
using RowMat = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowMatD = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Thrown when an operation's preconditions are violated.
class contract_error : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

inline void require(bool cond, const std::string& msg) {
  if (!cond) throw contract_error(msg);
}

/// Seeded random stream. Same seed and call sequence give identical outputs
/// on one platform. Streams are not shareable across threads; fork one per
/// worker instead.
class RngStream {
 public:
  explicit RngStream(std::uint64_t seed) : seed_(seed), state_(mix(seed)) {}

  std::uint64_t seed() const { return seed_; }
  std::uint64_t position() const { return position_; }

  /// Uniform draw in [lo, hi).
  double uniform(double lo = 0.0, double hi = 1.0) {
    return lo + (hi - lo) * next_unit();
  }

  /// Standard normal via Box-Muller (two uniform draws per call).
  double normal(double mean = 0.0, double stddev = 1.0) {
    double u1 = next_unit();
    while (u1 <= 0.0) u1 = next_unit();
    const double u2 = next_unit();
    const double r = std::sqrt(-2.0 * std::log(u1));
    return mean + stddev * r * std::cos(6.283185307179586 * u2);
  }

  /// Uniform integer in [0, bound).
  std::uint64_t integer(std::uint64_t bound) {
    return static_cast<std::uint64_t>(next_unit() * static_cast<double>(bound)) % bound;
  }

  bool bernoulli(double p) { return next_unit() < p; }

  /// Independent child stream; deterministic in (seed, id).
  RngStream fork(std::uint64_t id) const { return RngStream(mix(seed_ ^ mix(id + 0x9e3779b97f4a7c15ULL))); }

  template <class T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      const std::size_t j = static_cast<std::size_t>(integer(i));
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  // splitmix64
  static std::uint64_t mix(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
  }

  double next_unit() {
    ++position_;
    state_ = mix(state_);
    return static_cast<double>(state_ >> 11) * 0x1.0p-53;
  }

  std::uint64_t seed_;
  std::uint64_t position_ = 0;
  std::uint64_t state_;
};

}  // namespace trident
