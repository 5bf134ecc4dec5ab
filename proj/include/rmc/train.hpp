#pragma once

#include <chrono>
#include <functional>
#include <numeric>
#include <span>
#include <utility>
#include <vector>

#include "rmc/attack.hpp"
#include "rmc/curve.hpp"
#include "rmc/data.hpp"

namespace rmc {

struct TrainConfig {
  Real lr = 0.1;
  int epochs = 0;
  std::size_t batch_size = 64;
  std::uint64_t seed = 0;
  bool shuffle = true;

  void validate(const Dataset& data) const {
    require(std::isfinite(lr) && lr > 0.0, "learning rate must be positive");
    require(epochs >= 0, "epoch count must be nonnegative");
    require(batch_size >= 1, "batch size must be positive");
    require(batch_size <= data.size(), "batch size exceeds dataset size");
  }
};

struct EpochRecord {
  int epoch = 0;
  Real train_loss = 0.0;  // mean loss on the (perturbed) batches seen this epoch
  Real wall_seconds = 0.0;
};

struct TrainResult {
  ModelParams params;
  std::vector<EpochRecord> log;
};

struct CurveTrainResult {
  CurveParams curve;
  std::vector<EpochRecord> log;
};

// Called with (clean batch, perturbed batch, labels) for every crafted batch.
using BatchObserver = std::function<void(const Tensor&, const Tensor&, std::span<const Label>)>;

// No attack for an empty list, pgd for one spec, msd otherwise.
inline Tensor craft_batch(const ModelParams& params, const Tensor& x, std::span<const Label> y,
                          std::span<const AttackSpec> specs, const DomainBox& box = {}) {
  if (specs.empty()) return x;
  if (specs.size() == 1) return pgd_attack(params, x, y, specs.front(), box);
  return msd_attack(params, x, y, specs, box);
}

namespace detail {

inline std::vector<std::size_t> epoch_order(std::size_t n, const TrainConfig& cfg, RngStream& rng) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  if (cfg.shuffle) rng.shuffle(order);
  return order;
}

// Runs cfg.epochs of minibatch passes. step(bx, by, rng) performs one update and
// returns the batch loss; the epoch stream is seed-derived per epoch.
template <class Step>
std::vector<EpochRecord> run_epochs(const Dataset& data, const TrainConfig& cfg, Step&& step) {
  std::vector<EpochRecord> log;
  const auto start = std::chrono::steady_clock::now();
  for (int e = 0; e < cfg.epochs; ++e) {
    RngStream rng = RngStream::derive(cfg.seed, static_cast<std::uint64_t>(e));
    const auto order = epoch_order(data.size(), cfg, rng);
    Real loss_sum = 0.0;
    std::size_t seen = 0;
    for (std::size_t b = 0; b < order.size(); b += cfg.batch_size) {
      const std::size_t len = std::min(cfg.batch_size, order.size() - b);
      auto [bx, by] = data.gather(std::span(order).subspan(b, len));
      loss_sum += step(bx, by, rng) * static_cast<Real>(len);
      seen += len;
    }
    const std::chrono::duration<Real> dt = std::chrono::steady_clock::now() - start;
    log.push_back({e, loss_sum / static_cast<Real>(seen), dt.count()});
  }
  return log;
}

inline void sgd_update(Tensor& params, const Tensor& grad, Real lr) {
  for (std::size_t i = 0; i < params.size(); ++i) params[i] -= lr * grad[i];
}

}  // namespace detail

// Minibatch SGD on worst-case perturbed batches. An empty spec list is
// standard training, one spec is lp-AT, several specs train against MSD.
inline TrainResult adversarial_train(const ModelParams& init, const Dataset& data, const TrainConfig& cfg,
                                     std::span<const AttackSpec> specs, const DomainBox& box = {},
                                     const BatchObserver& observer = {}) {
  cfg.validate(data);
  require(data.dim() == init.arch.input_dim(), "dataset width does not match architecture input");
  require(data.classes <= init.arch.num_classes(), "dataset has more classes than the architecture outputs");
  for (const auto& s : specs) s.validate();
  TrainResult out{init, {}};
  out.log = detail::run_epochs(data, cfg, [&](const Tensor& bx, const std::vector<Label>& by, RngStream&) {
    const Tensor adv = craft_batch(out.params, bx, by, specs, box);
    if (observer) observer(bx, adv, by);
    const Real loss = forward_loss(out.params, adv, by).loss;
    detail::sgd_update(out.params.flat, param_grad(out.params, adv, by), cfg.lr);
    return loss;
  });
  return out;
}

// Trains the Bezier control point between two frozen endpoints: each batch
// samples t ~ U(0,1), attacks phi(t) and steps the control point along
// 2t(1-t) * grad. An empty spec list is plain (non-robust) mode connectivity.
inline CurveTrainResult rmc_train(const ModelParams& a, const ModelParams& b, const Dataset& data,
                                  const TrainConfig& cfg, std::span<const AttackSpec> specs,
                                  const DomainBox& box = {}, const BatchObserver& observer = {}) {
  require(a.arch == b.arch, "rmc endpoints have different architectures");
  cfg.validate(data);
  require(data.dim() == a.arch.input_dim(), "dataset width does not match architecture input");
  for (const auto& s : specs) s.validate();
  CurveTrainResult out{CurveParams::segment(a, b), {}};
  out.log = detail::run_epochs(data, cfg, [&](const Tensor& bx, const std::vector<Label>& by, RngStream& rng) {
    const Real t = rng.uniform();
    const ModelParams point = curve_point(out.curve, t);
    const Tensor adv = craft_batch(point, bx, by, specs, box);
    if (observer) observer(bx, adv, by);
    const Real loss = forward_loss(point, adv, by).loss;
    const Tensor g = control_grad(param_grad(point, adv, by), t, point.flat.size());
    detail::sgd_update(out.curve.theta_control.flat, g, cfg.lr);
    return loss;
  });
  return out;
}

// (base, base fine-tuned for cfg_few.epochs under spec_new): a self-generated
// endpoint pair for a subsequent rmc_train.
inline std::pair<ModelParams, ModelParams> srmc_endpoints(const ModelParams& base, const Dataset& data,
                                                          const TrainConfig& cfg_few, const AttackSpec& spec_new,
                                                          const DomainBox& box = {}) {
  const std::vector<AttackSpec> specs{spec_new};
  auto tuned = adversarial_train(base, data, cfg_few, specs, box);
  return {base, std::move(tuned.params)};
}

}  // namespace rmc
