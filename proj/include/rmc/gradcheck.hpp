#pragma once

#include <string>
#include <vector>

#include "rmc/model.hpp"

namespace rmc {

struct GradCheckReport {
  Real max_rel_err = 0.0;
  std::size_t checked = 0;
  std::size_t skipped = 0;  // coordinates whose perturbation crossed a ReLU kink
};

namespace detail {

// ReLU on/off pattern of every hidden unit; a change between +h and -h means
// the loss is not smooth across the finite-difference stencil.
inline std::vector<char> relu_pattern(const ModelParams& p, const Tensor& x) {
  const auto tr = forward_trace(p, x);
  std::vector<char> pat;
  for (std::size_t k = 0; k + 1 < p.arch.layers.size(); ++k)
    for (Real v : tr.acts[k + 1]) pat.push_back(v > 0.0);
  return pat;
}

inline Real rel_err(Real a, Real b) { return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-6}); }

}  // namespace detail

// Compares param_grad and input_grad against central differences with step h.
inline GradCheckReport gradcheck(const ArchSpec& arch, std::uint64_t seed, std::size_t batch = 4, Real h = 1e-5) {
  arch.validate();
  RngStream rng = RngStream::derive(seed, 0x9c);
  ModelParams params = init_params(arch, rng);
  for (std::size_t i = 0; i < params.flat.size(); ++i) params.flat[i] += 0.1 * rng.normal();
  Tensor x({batch, arch.input_dim()});
  for (auto& v : x.values()) v = rng.uniform();
  std::vector<Label> y(batch);
  for (auto& l : y) l = static_cast<Label>(rng.index(arch.num_classes()));

  GradCheckReport rep;
  const Tensor pg = param_grad(params, x, y);
  for (std::size_t i = 0; i < params.flat.size(); ++i) {
    ModelParams plus = params, minus = params;
    plus.flat[i] += h;
    minus.flat[i] -= h;
    if (detail::relu_pattern(plus, x) != detail::relu_pattern(minus, x)) {
      ++rep.skipped;
      continue;
    }
    const Real fd = (forward_loss(plus, x, y).loss - forward_loss(minus, x, y).loss) / (2.0 * h);
    rep.max_rel_err = std::max(rep.max_rel_err, detail::rel_err(pg[i], fd));
    ++rep.checked;
  }

  // Input gradient is per-sample; perturb one sample at a time and difference its own loss.
  const Tensor ig = input_grad(params, x, y);
  for (std::size_t i = 0; i < x.size(); ++i) {
    const std::size_t s = i / arch.input_dim();
    Tensor plus = x, minus = x;
    plus[i] += h;
    minus[i] -= h;
    if (detail::relu_pattern(params, plus) != detail::relu_pattern(params, minus)) {
      ++rep.skipped;
      continue;
    }
    const Real fd = (sample_losses(params, plus, y)[s] - sample_losses(params, minus, y)[s]) / (2.0 * h);
    rep.max_rel_err = std::max(rep.max_rel_err, detail::rel_err(ig[i], fd));
    ++rep.checked;
  }
  return rep;
}

// Shapes used by the gradient acceptance check.
inline std::vector<ArchSpec> gradcheck_shapes() {
  return {ArchSpec::mlp({8, 16, 3}), ArchSpec::mlp({8, 32, 32, 3}), ArchSpec::mlp({4, 12, 10, 8, 5})};
}

}  // namespace rmc
