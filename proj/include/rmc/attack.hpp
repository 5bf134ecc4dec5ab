#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <span>
#include <vector>

#include "rmc/model.hpp"

namespace rmc {

// One perturbation model: an lp ball of radius delta explored with `steps`
// steepest-ascent iterations of size alpha.
struct AttackSpec {
  Norm p = Norm::linf;
  Real delta = 0.0;
  int steps = 10;
  Real alpha = 0.0;
  int l1_k = 1;

  // Step size defaults to 2 * delta / steps.
  static AttackSpec make(Norm p, Real delta, int steps, int l1_k = 1) {
    AttackSpec s{p, delta, steps, steps > 0 ? 2.0 * delta / steps : 0.0, l1_k};
    s.validate();
    return s;
  }

  void validate() const {
    require(std::isfinite(delta) && delta >= 0.0, "attack budget must be finite and nonnegative");
    require(steps >= 0, "attack step count must be nonnegative");
    require(std::isfinite(alpha) && alpha >= 0.0, "attack step size must be finite and nonnegative");
    require(l1_k >= 1, "l1 top-coordinate count must be at least 1");
  }

  friend bool operator==(const AttackSpec&, const AttackSpec&) = default;
};

struct DomainBox {
  Real lo = 0.0;
  Real hi = 1.0;
};

namespace detail {

inline Real sign(Real v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

// Euclidean projection onto {w : |w|_1 <= radius} by sorting magnitudes
// and soft-thresholding at the simplex threshold.
inline void project_l1_ball(std::span<Real> v, Real radius) {
  if (lp_norm(v, Norm::l1) <= radius) return;
  if (radius <= 0.0) {
    std::fill(v.begin(), v.end(), 0.0);
    return;
  }
  std::vector<Real> u(v.size());
  std::transform(v.begin(), v.end(), u.begin(), [](Real x) { return std::abs(x); });
  std::sort(u.begin(), u.end(), std::greater<>());
  Real cum = 0.0;
  Real theta = 0.0;
  for (std::size_t j = 0; j < u.size(); ++j) {
    cum += u[j];
    const Real cand = (cum - radius) / static_cast<Real>(j + 1);
    if (u[j] - cand > 0.0) theta = cand;
  }
  for (Real& x : v) x = sign(x) * std::max(std::abs(x) - theta, 0.0);
}

inline void project_ball(std::span<Real> eps, Norm p, Real delta) {
  switch (p) {
    case Norm::linf:
      for (Real& e : eps) e = std::clamp(e, -delta, delta);
      return;
    case Norm::l2: {
      const Real n = lp_norm(eps, Norm::l2);
      if (n > delta) {
        if (delta <= 0.0) {
          std::fill(eps.begin(), eps.end(), 0.0);
        } else {
          const Real s = delta / n;
          for (Real& e : eps) e *= s;
        }
      }
      return;
    }
    case Norm::l1:
      project_l1_ball(eps, delta);
      return;
  }
}

}  // namespace detail

// Steepest-ascent direction of size alpha under the spec's norm, for one sample.
inline std::vector<Real> steepest_step(std::span<const Real> grad, const AttackSpec& spec) {
  std::vector<Real> step(grad.size(), 0.0);
  switch (spec.p) {
    case Norm::linf:
      for (std::size_t i = 0; i < grad.size(); ++i) step[i] = spec.alpha * detail::sign(grad[i]);
      break;
    case Norm::l2: {
      const Real n = lp_norm(grad, Norm::l2);
      if (n > 0.0)
        for (std::size_t i = 0; i < grad.size(); ++i) step[i] = spec.alpha * grad[i] / n;
      break;
    }
    case Norm::l1: {
      const std::size_t k = std::min<std::size_t>(static_cast<std::size_t>(spec.l1_k), grad.size());
      std::vector<std::size_t> idx(grad.size());
      std::iota(idx.begin(), idx.end(), std::size_t{0});
      std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k), idx.end(),
                        [&](std::size_t a, std::size_t b) {
                          const Real ga = std::abs(grad[a]), gb = std::abs(grad[b]);
                          return ga > gb || (ga == gb && a < b);
                        });
      const Real mass = spec.alpha / static_cast<Real>(k);
      for (std::size_t j = 0; j < k; ++j) step[idx[j]] = mass * detail::sign(grad[idx[j]]);
      break;
    }
  }
  return step;
}

// Projects eps onto the spec's lp ball, then clamps x + eps into the box.
inline std::vector<Real> project(std::span<const Real> eps, std::span<const Real> x, const AttackSpec& spec,
                                 const DomainBox& box = {}) {
  require(eps.size() == x.size(), "project: perturbation and input shapes differ");
  std::vector<Real> out(eps.begin(), eps.end());
  detail::project_ball(out, spec.p, spec.delta);
  // Only coordinates that leave the box move, so interior points stay bit-exact.
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (x[i] + out[i] > box.hi) {
      out[i] = box.hi - x[i];
    } else if (x[i] + out[i] < box.lo) {
      out[i] = box.lo - x[i];
    }
  }
  if (!out.empty() && lp_norm(out, spec.p) > spec.delta + 1e-12) detail::project_ball(out, spec.p, spec.delta);
  return out;
}

inline Tensor project(const Tensor& eps, const Tensor& x, const AttackSpec& spec, const DomainBox& box = {}) {
  require(eps.shape() == x.shape(), "project: perturbation and input shapes differ");
  Tensor out = eps;
  for (std::size_t r = 0; r < x.rows(); ++r) {
    const auto p = project(eps.row(r), x.row(r), spec, box);
    std::copy(p.begin(), p.end(), out.row(r).begin());
  }
  return out;
}

namespace detail {

inline Tensor add(const Tensor& a, const Tensor& b) {
  Tensor out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += b[i];
  return out;
}

// project(eps + steepest_step(grad)) row by row.
inline Tensor ascent_candidate(const Tensor& eps, const Tensor& grad, const Tensor& x, const AttackSpec& spec,
                               const DomainBox& box) {
  Tensor out = eps;
  for (std::size_t r = 0; r < x.rows(); ++r) {
    auto step = steepest_step(grad.row(r), spec);
    const auto e = eps.row(r);
    for (std::size_t i = 0; i < step.size(); ++i) step[i] += e[i];
    const auto p = project(step, x.row(r), spec, box);
    std::copy(p.begin(), p.end(), out.row(r).begin());
  }
  return out;
}

}  // namespace detail

// Single-norm projected steepest ascent from eps = 0. Returns x + eps.
inline Tensor pgd_attack(const ModelParams& params, const Tensor& x, std::span<const Label> y, const AttackSpec& spec,
                         const DomainBox& box = {}) {
  detail::check_batch(params, x, y);
  spec.validate();
  Tensor eps(x.shape(), 0.0);
  if (spec.delta == 0.0) return x;
  for (int j = 0; j < spec.steps; ++j) {
    const Tensor g = input_grad(params, detail::add(x, eps), y);
    eps = detail::ascent_candidate(eps, g, x, spec, box);
  }
  return detail::add(x, eps);
}

// One MSD iteration: every spec proposes a candidate from the shared eps and
// each sample keeps the candidate with the largest loss (first index on ties).
struct MsdStep {
  std::vector<Tensor> candidates;               // one per spec
  std::vector<std::vector<Real>> losses;        // [spec][sample]
  std::vector<std::size_t> chosen;              // per sample
  Tensor next_eps;
};

inline MsdStep msd_step(const ModelParams& params, const Tensor& x, std::span<const Label> y, const Tensor& eps,
                        std::span<const AttackSpec> specs, const DomainBox& box = {}) {
  require(!specs.empty(), "msd needs at least one attack spec");
  MsdStep st;
  const Tensor g = input_grad(params, detail::add(x, eps), y);
  for (const auto& s : specs) {
    st.candidates.push_back(detail::ascent_candidate(eps, g, x, s, box));
    st.losses.push_back(sample_losses(params, detail::add(x, st.candidates.back()), y));
  }
  st.chosen.assign(x.rows(), 0);
  st.next_eps = st.candidates.front();
  for (std::size_t r = 0; r < x.rows(); ++r) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < specs.size(); ++i)
      if (st.losses[i][r] > st.losses[best][r]) best = i;
    st.chosen[r] = best;
    if (best != 0) {
      const auto src = st.candidates[best].row(r);
      std::copy(src.begin(), src.end(), st.next_eps.row(r).begin());
    }
  }
  return st;
}

// Multi steepest descent over the union of the specs' balls. Iteration count is
// the maximum of the specs' step counts.
inline Tensor msd_attack(const ModelParams& params, const Tensor& x, std::span<const Label> y,
                         std::span<const AttackSpec> specs, const DomainBox& box = {}) {
  require(!specs.empty(), "msd needs at least one attack spec");
  detail::check_batch(params, x, y);
  int steps = 0;
  for (const auto& s : specs) {
    s.validate();
    steps = std::max(steps, s.steps);
  }
  if (specs.size() == 1) {
    // Same trajectory as pgd; skip the redundant candidate loss evaluation.
    return pgd_attack(params, x, y, specs.front(), box);
  }
  Tensor eps(x.shape(), 0.0);
  for (int j = 0; j < steps; ++j) eps = msd_step(params, x, y, eps, specs, box).next_eps;
  return detail::add(x, eps);
}

}  // namespace rmc
