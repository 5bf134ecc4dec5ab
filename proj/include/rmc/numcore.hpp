#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <numeric>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "rmc/errors.hpp"

namespace rmc {

using Real = double;

enum class Norm { linf, l2, l1 };

inline std::string_view norm_name(Norm p) {
  switch (p) {
    case Norm::linf: return "linf";
    case Norm::l2: return "l2";
    case Norm::l1: return "l1";
  }
  return "?";
}

inline Norm parse_norm(std::string_view s) {
  if (s == "linf" || s == "inf" || s == "l∞") return Norm::linf;
  if (s == "l2") return Norm::l2;
  if (s == "l1") return Norm::l1;
  throw UsageError("unknown norm '" + std::string(s) + "' (expected linf, l2 or l1)");
}

// Dense row-major tensor of doubles.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> shape, Real fill = 0.0)
      : shape_(std::move(shape)), data_(count(shape_), fill) {}
  Tensor(std::vector<std::size_t> shape, std::vector<Real> data)
      : shape_(std::move(shape)), data_(std::move(data)) {
    require(count(shape_) == data_.size(), "tensor data length does not match shape");
  }

  static Tensor vector(std::vector<Real> v) {
    const std::size_t n = v.size();
    return Tensor({n}, std::move(v));
  }

  const std::vector<std::size_t>& shape() const { return shape_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }
  std::size_t rows() const { return shape_.empty() ? 0 : shape_.front(); }
  // Elements per leading-axis slice.
  std::size_t row_size() const { return shape_.empty() || shape_[0] == 0 ? 0 : data_.size() / shape_[0]; }

  Real& operator[](std::size_t i) { return data_[i]; }
  Real operator[](std::size_t i) const { return data_[i]; }

  std::span<Real> values() { return data_; }
  std::span<const Real> values() const { return data_; }
  std::span<Real> row(std::size_t r) { return values().subspan(r * row_size(), row_size()); }
  std::span<const Real> row(std::size_t r) const { return values().subspan(r * row_size(), row_size()); }

  const std::vector<Real>& data() const { return data_; }
  std::vector<Real>& data() { return data_; }

  bool all_finite() const {
    return std::all_of(data_.begin(), data_.end(), [](Real v) { return std::isfinite(v); });
  }

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  static std::size_t count(const std::vector<std::size_t>& shape) {
    for (auto e : shape) require(e > 0, "tensor extents must be positive");
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
  }

  std::vector<std::size_t> shape_;
  std::vector<Real> data_;
};

inline Real lp_norm(std::span<const Real> v, Norm p) {
  require(!v.empty(), "lp_norm of an empty vector");
  Real acc = 0.0;
  switch (p) {
    case Norm::linf:
      for (Real x : v) acc = std::max(acc, std::abs(x));
      return acc;
    case Norm::l2:
      for (Real x : v) acc += x * x;
      return std::sqrt(acc);
    case Norm::l1:
      for (Real x : v) acc += std::abs(x);
      return acc;
  }
  return acc;
}

inline Real lp_norm(const Tensor& v, Norm p) { return lp_norm(v.values(), p); }

inline Real dot(std::span<const Real> a, std::span<const Real> b) {
  require(a.size() == b.size(), "dot: length mismatch");
  return std::inner_product(a.begin(), a.end(), b.begin(), Real{0});
}

// Finalizer of splitmix64; also used to derive independent stream seeds.
constexpr std::uint64_t splitmix64_mix(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

class RngStream {
 public:
  explicit RngStream(std::uint64_t seed) : state_(seed) {}

  // Child stream for task `index`; state' = mix(seed ^ index).
  static RngStream derive(std::uint64_t master_seed, std::uint64_t index) {
    return RngStream(splitmix64_mix(master_seed ^ index));
  }

  std::uint64_t next_u64() {
    state_ += 0x9e3779b97f4a7c15ULL;
    return splitmix64_mix(state_);
  }

  // Top 53 bits scaled into [0, 1).
  Real uniform() { return static_cast<Real>(next_u64() >> 11) * 0x1.0p-53; }

  Real uniform(Real lo, Real hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n).
  std::size_t index(std::size_t n) {
    auto i = static_cast<std::size_t>(uniform() * static_cast<Real>(n));
    return std::min(i, n - 1);
  }

  // Box-Muller; consumes two uniforms per call.
  Real normal() {
    const Real u1 = 1.0 - uniform();
    const Real u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
  }

  template <class T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[index(i)]);
  }

  std::uint64_t state() const { return state_; }

 private:
  std::uint64_t state_;
};

}  // namespace rmc
