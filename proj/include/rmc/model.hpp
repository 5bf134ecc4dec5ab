#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "rmc/errors.hpp"
#include "rmc/numcore.hpp"

namespace rmc {

using Label = std::int32_t;

enum class Activation { relu, identity };

struct DenseLayer {
  std::size_t in_dim = 0;
  std::size_t out_dim = 0;
  Activation activation = Activation::relu;

  std::size_t param_count() const { return in_dim * out_dim + out_dim; }
  friend bool operator==(const DenseLayer&, const DenseLayer&) = default;
};

struct ArchSpec {
  std::vector<DenseLayer> layers;

  std::size_t input_dim() const { return layers.front().in_dim; }
  std::size_t num_classes() const { return layers.back().out_dim; }

  std::size_t param_count() const {
    std::size_t n = 0;
    for (const auto& l : layers) n += l.param_count();
    return n;
  }

  void validate() const {
    require(!layers.empty(), "architecture has no layers");
    for (std::size_t k = 0; k < layers.size(); ++k) {
      require(layers[k].in_dim > 0 && layers[k].out_dim > 0, "layer dimensions must be positive");
      if (k + 1 < layers.size())
        require(layers[k].out_dim == layers[k + 1].in_dim, "layer dimensions do not chain");
    }
    require(layers.back().activation == Activation::identity, "final layer must emit logits (identity activation)");
    require(num_classes() >= 2, "need at least two classes");
  }

  // "8-32-32-3": ReLU hidden layers, identity output layer.
  static ArchSpec mlp(const std::vector<std::size_t>& dims) {
    require(dims.size() >= 2, "architecture needs at least input and output dims");
    ArchSpec a;
    for (std::size_t k = 0; k + 1 < dims.size(); ++k)
      a.layers.push_back({dims[k], dims[k + 1], k + 2 == dims.size() ? Activation::identity : Activation::relu});
    a.validate();
    return a;
  }

  static ArchSpec parse(const std::string& text) {
    std::vector<std::size_t> dims;
    std::stringstream ss(text);
    std::string tok;
    while (std::getline(ss, tok, '-')) {
      std::size_t used = 0;
      unsigned long v = 0;
      try {
        v = std::stoul(tok, &used);
      } catch (const std::exception&) {
        used = 0;
      }
      require(used == tok.size() && used > 0 && v > 0, "malformed architecture '" + text + "' (expected e.g. 8-32-3)");
      dims.push_back(v);
    }
    return mlp(dims);
  }

  std::string to_string() const {
    std::string s = std::to_string(input_dim());
    for (const auto& l : layers) s += "-" + std::to_string(l.out_dim);
    return s;
  }

  friend bool operator==(const ArchSpec&, const ArchSpec&) = default;
};

struct ModelParams {
  ArchSpec arch;
  Tensor flat;

  ModelParams() = default;
  ModelParams(ArchSpec a, Tensor f) : arch(std::move(a)), flat(std::move(f)) {
    arch.validate();
    require(flat.size() == arch.param_count(), "parameter vector length does not match architecture");
  }

  static ModelParams zeros(const ArchSpec& a) { return {a, Tensor({a.param_count()}, 0.0)}; }

  friend bool operator==(const ModelParams&, const ModelParams&) = default;
};

// He-uniform weights, zero biases.
inline ModelParams init_params(const ArchSpec& arch, RngStream& rng) {
  auto p = ModelParams::zeros(arch);
  std::size_t off = 0;
  for (const auto& l : arch.layers) {
    const Real bound = std::sqrt(6.0 / static_cast<Real>(l.in_dim));
    for (std::size_t i = 0; i < l.in_dim * l.out_dim; ++i) p.flat[off + i] = rng.uniform(-bound, bound);
    off += l.param_count();
  }
  return p;
}

struct ForwardResult {
  Real loss = 0.0;
  Tensor logits;
};

namespace detail {

inline void check_batch(const ModelParams& params, const Tensor& x, std::span<const Label> y) {
  require(x.shape().size() == 2, "input batch must be a 2-D tensor (n x d)");
  require(x.shape()[1] == params.arch.input_dim(), "input width " + std::to_string(x.shape()[1]) +
                                                       " does not match architecture input " +
                                                       std::to_string(params.arch.input_dim()));
  require(y.size() == x.rows(), "label count does not match batch size");
  const auto c = static_cast<Label>(params.arch.num_classes());
  for (Label l : y) require(l >= 0 && l < c, "label out of range");
}

// Forward pass keeping every layer's post-activation output for backprop.
// acts[0] is the input, acts[k+1] is layer k's output.
struct Trace {
  std::vector<std::vector<Real>> acts;
  std::size_t n = 0;
};

inline Trace forward_trace(const ModelParams& params, const Tensor& x) {
  Trace tr;
  tr.n = x.rows();
  tr.acts.reserve(params.arch.layers.size() + 1);
  tr.acts.push_back(x.data());
  const Real* w = params.flat.values().data();
  for (const auto& l : params.arch.layers) {
    const Real* b = w + l.in_dim * l.out_dim;
    const auto& in = tr.acts.back();
    std::vector<Real> out(tr.n * l.out_dim);
    for (std::size_t s = 0; s < tr.n; ++s) {
      const Real* xi = in.data() + s * l.in_dim;
      Real* yo = out.data() + s * l.out_dim;
      for (std::size_t o = 0; o < l.out_dim; ++o) {
        const Real* wr = w + o * l.in_dim;
        Real z = b[o];
        for (std::size_t i = 0; i < l.in_dim; ++i) z += wr[i] * xi[i];
        yo[o] = (l.activation == Activation::relu && z < 0.0) ? 0.0 : z;
      }
    }
    tr.acts.push_back(std::move(out));
    w = b + l.out_dim;
  }
  return tr;
}

// Softmax cross-entropy per sample. Writes (softmax - onehot) into dlogits.
inline std::vector<Real> softmax_xent(std::span<const Real> logits, std::size_t classes,
                                      std::span<const Label> y, std::vector<Real>* dlogits) {
  const std::size_t n = y.size();
  std::vector<Real> losses(n);
  if (dlogits) dlogits->assign(n * classes, 0.0);
  for (std::size_t s = 0; s < n; ++s) {
    const Real* z = logits.data() + s * classes;
    Real m = z[0];
    for (std::size_t c = 1; c < classes; ++c) m = std::max(m, z[c]);
    Real sum = 0.0;
    for (std::size_t c = 0; c < classes; ++c) sum += std::exp(z[c] - m);
    const Real lse = m + std::log(sum);
    losses[s] = lse - z[y[s]];
    if (dlogits) {
      Real* g = dlogits->data() + s * classes;
      for (std::size_t c = 0; c < classes; ++c) g[c] = std::exp(z[c] - lse);
      g[y[s]] -= 1.0;
    }
  }
  return losses;
}

// Backpropagates dout (gradient w.r.t. the logits) through the network.
// Accumulates parameter gradients into pgrad when non-null; returns the input gradient
// when want_input is set.
inline std::vector<Real> backward(const ModelParams& params, const Trace& tr, std::vector<Real> dout,
                                  std::vector<Real>* pgrad, bool want_input) {
  const auto& layers = params.arch.layers;
  std::vector<std::size_t> offsets(layers.size());
  std::size_t off = 0;
  for (std::size_t k = 0; k < layers.size(); ++k) {
    offsets[k] = off;
    off += layers[k].param_count();
  }
  const std::size_t n = tr.n;
  for (std::size_t k = layers.size(); k-- > 0;) {
    const auto& l = layers[k];
    const Real* w = params.flat.values().data() + offsets[k];
    const auto& out = tr.acts[k + 1];
    const auto& in = tr.acts[k];
    if (l.activation == Activation::relu)
      for (std::size_t i = 0; i < dout.size(); ++i)
        if (out[i] <= 0.0) dout[i] = 0.0;
    if (pgrad) {
      Real* gw = pgrad->data() + offsets[k];
      Real* gb = gw + l.in_dim * l.out_dim;
      for (std::size_t s = 0; s < n; ++s) {
        const Real* xi = in.data() + s * l.in_dim;
        const Real* d = dout.data() + s * l.out_dim;
        for (std::size_t o = 0; o < l.out_dim; ++o) {
          if (d[o] == 0.0) continue;
          Real* gr = gw + o * l.in_dim;
          for (std::size_t i = 0; i < l.in_dim; ++i) gr[i] += d[o] * xi[i];
          gb[o] += d[o];
        }
      }
    }
    if (k == 0 && !want_input) return {};
    std::vector<Real> din(n * l.in_dim, 0.0);
    for (std::size_t s = 0; s < n; ++s) {
      const Real* d = dout.data() + s * l.out_dim;
      Real* di = din.data() + s * l.in_dim;
      for (std::size_t o = 0; o < l.out_dim; ++o) {
        if (d[o] == 0.0) continue;
        const Real* wr = w + o * l.in_dim;
        for (std::size_t i = 0; i < l.in_dim; ++i) di[i] += d[o] * wr[i];
      }
    }
    dout = std::move(din);
  }
  return dout;
}

}  // namespace detail

inline Tensor logits(const ModelParams& params, const Tensor& x) {
  require(x.shape().size() == 2 && x.shape()[1] == params.arch.input_dim(), "input shape does not match architecture");
  auto tr = detail::forward_trace(params, x);
  return Tensor({x.rows(), params.arch.num_classes()}, std::move(tr.acts.back()));
}

// Per-sample softmax cross-entropy.
inline std::vector<Real> sample_losses(const ModelParams& params, const Tensor& x, std::span<const Label> y) {
  detail::check_batch(params, x, y);
  const auto tr = detail::forward_trace(params, x);
  return detail::softmax_xent(tr.acts.back(), params.arch.num_classes(), y, nullptr);
}

// Mean softmax cross-entropy over the batch plus the raw logits.
inline ForwardResult forward_loss(const ModelParams& params, const Tensor& x, std::span<const Label> y) {
  detail::check_batch(params, x, y);
  auto tr = detail::forward_trace(params, x);
  const auto losses = detail::softmax_xent(tr.acts.back(), params.arch.num_classes(), y, nullptr);
  Real sum = 0.0;
  for (Real l : losses) sum += l;
  return {sum / static_cast<Real>(losses.size()), Tensor({x.rows(), params.arch.num_classes()}, std::move(tr.acts.back()))};
}

// Gradient of the mean batch loss w.r.t. the flat parameter vector.
inline Tensor param_grad(const ModelParams& params, const Tensor& x, std::span<const Label> y) {
  detail::check_batch(params, x, y);
  const auto tr = detail::forward_trace(params, x);
  std::vector<Real> dlogits;
  detail::softmax_xent(tr.acts.back(), params.arch.num_classes(), y, &dlogits);
  const Real inv_n = 1.0 / static_cast<Real>(tr.n);
  for (Real& g : dlogits) g *= inv_n;
  std::vector<Real> grad(params.flat.size(), 0.0);
  detail::backward(params, tr, std::move(dlogits), &grad, false);
  return Tensor::vector(std::move(grad));
}

// Gradient of each sample's own loss w.r.t. that sample's input (n x d).
inline Tensor input_grad(const ModelParams& params, const Tensor& x, std::span<const Label> y) {
  detail::check_batch(params, x, y);
  const auto tr = detail::forward_trace(params, x);
  std::vector<Real> dlogits;
  detail::softmax_xent(tr.acts.back(), params.arch.num_classes(), y, &dlogits);
  return Tensor(x.shape(), detail::backward(params, tr, std::move(dlogits), nullptr, true));
}

inline std::vector<Label> predict(const ModelParams& params, const Tensor& x) {
  const Tensor z = logits(params, x);
  const std::size_t c = params.arch.num_classes();
  std::vector<Label> out(x.rows());
  for (std::size_t s = 0; s < out.size(); ++s) {
    const auto r = z.row(s);
    out[s] = static_cast<Label>(std::max_element(r.begin(), r.begin() + static_cast<std::ptrdiff_t>(c)) - r.begin());
  }
  return out;
}

}  // namespace rmc
