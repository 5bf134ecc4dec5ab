#pragma once

#include <array>
#include <charconv>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "rmc/attack.hpp"
#include "rmc/curve.hpp"
#include "rmc/data.hpp"

namespace rmc {

using CorrectMask = std::vector<char>;

inline CorrectMask correct_mask(const ModelParams& params, const Tensor& x, std::span<const Label> y) {
  const auto pred = predict(params, x);
  CorrectMask m(y.size());
  for (std::size_t i = 0; i < y.size(); ++i) m[i] = pred[i] == y[i];
  return m;
}

inline Real mask_fraction(const CorrectMask& m) {
  std::size_t c = 0;
  for (char v : m) c += v ? 1 : 0;
  return static_cast<Real>(c) / static_cast<Real>(m.size());
}

inline Real standard_accuracy(const ModelParams& params, const Dataset& data) {
  require(data.size() > 0, "cannot evaluate on an empty dataset");
  return mask_fraction(correct_mask(params, data.x, data.y));
}

// Per-sample correctness after an lp-PGD attack.
inline CorrectMask robust_mask(const ModelParams& params, const Dataset& data, const AttackSpec& spec,
                               const DomainBox& box = {}) {
  require(data.size() > 0, "cannot evaluate on an empty dataset");
  return correct_mask(params, pgd_attack(params, data.x, data.y, spec, box), data.y);
}

inline Real robust_accuracy(const ModelParams& params, const Dataset& data, const AttackSpec& spec,
                            const DomainBox& box = {}) {
  return mask_fraction(robust_mask(params, data, spec, box));
}

// Dataset-wise worst case: the smallest per-attack accuracy.
inline Real dlr(const ModelParams& params, const Dataset& data, std::span<const AttackSpec> specs,
                const DomainBox& box = {}) {
  require(!specs.empty(), "dlr needs at least one attack spec");
  Real worst = 1.0;
  for (const auto& s : specs) worst = std::min(worst, robust_accuracy(params, data, s, box));
  return worst;
}

// Sample-wise worst case: correct under every attack at once.
inline Real union_from_masks(std::span<const CorrectMask> masks) {
  require(!masks.empty(), "union accuracy needs at least one attack");
  CorrectMask all = masks.front();
  for (const auto& m : masks.subspan(1))
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = all[i] && m[i];
  return mask_fraction(all);
}

inline Real union_accuracy(const ModelParams& params, const Dataset& data, std::span<const AttackSpec> specs,
                           const DomainBox& box = {}) {
  require(!specs.empty(), "union accuracy needs at least one attack spec");
  std::vector<CorrectMask> masks;
  for (const auto& s : specs) masks.push_back(robust_mask(params, data, s, box));
  return union_from_masks(masks);
}

inline Real msd_accuracy(const ModelParams& params, const Dataset& data, std::span<const AttackSpec> specs,
                         const DomainBox& box = {}) {
  require(data.size() > 0, "cannot evaluate on an empty dataset");
  return mask_fraction(correct_mask(params, msd_attack(params, data.x, data.y, specs, box), data.y));
}

struct EvalReport {
  Real std_acc = 0.0;
  std::array<std::optional<Real>, 3> per_norm{};  // indexed by Norm
  Real dlr = 0.0;
  Real union_acc = 0.0;
  Real msd_acc = 0.0;
  Real loss_clean = 0.0;

  std::optional<Real> acc(Norm p) const { return per_norm[static_cast<std::size_t>(p)]; }
  friend bool operator==(const EvalReport&, const EvalReport&) = default;
};

// All metrics for one model; each per-norm attack runs once and feeds dlr and union.
inline EvalReport evaluate(const ModelParams& params, const Dataset& data, std::span<const AttackSpec> specs,
                           const DomainBox& box = {}) {
  require(!specs.empty(), "evaluation needs at least one attack spec");
  require(data.size() > 0, "cannot evaluate on an empty dataset");
  for (std::size_t i = 0; i < specs.size(); ++i)
    for (std::size_t j = i + 1; j < specs.size(); ++j)
      require(specs[i].p != specs[j].p, "evaluation specs must use distinct norms");
  EvalReport r;
  const auto fwd = forward_loss(params, data.x, data.y);
  r.loss_clean = fwd.loss;
  r.std_acc = standard_accuracy(params, data);
  std::vector<CorrectMask> masks;
  r.dlr = 1.0;
  for (const auto& s : specs) {
    masks.push_back(robust_mask(params, data, s, box));
    const Real a = mask_fraction(masks.back());
    r.per_norm[static_cast<std::size_t>(s.p)] = a;
    r.dlr = std::min(r.dlr, a);
  }
  r.union_acc = union_from_masks(masks);
  r.msd_acc = msd_accuracy(params, data, specs, box);
  return r;
}

struct SweepRow {
  Real t = 0.0;
  EvalReport report;
  friend bool operator==(const SweepRow&, const SweepRow&) = default;
};

struct SweepTable {
  std::vector<SweepRow> rows;
  std::size_t grid_n = 0;

  static constexpr const char* kHeader = "t,std_acc,acc_linf,acc_l2,acc_l1,dlr,union_acc,msd_acc,loss_clean";

  // Row with the largest dlr; the smallest t wins ties.
  const SweepRow& best() const {
    require(!rows.empty(), "sweep table is empty");
    std::size_t k = 0;
    for (std::size_t i = 1; i < rows.size(); ++i)
      if (rows[i].report.dlr > rows[k].report.dlr) k = i;
    return rows[k];
  }

  std::string to_csv() const;
  friend bool operator==(const SweepTable&, const SweepTable&) = default;
};

// Shortest decimal string that parses back to the same double.
inline std::string format_real(Real v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

inline std::string SweepTable::to_csv() const {
  std::string out = std::string(kHeader) + "\n";
  for (const auto& row : rows) {
    const auto& r = row.report;
    out += format_real(row.t) + "," + format_real(r.std_acc);
    for (Norm p : {Norm::linf, Norm::l2, Norm::l1}) {
      out += ",";
      if (auto a = r.acc(p)) out += format_real(*a);
    }
    out += "," + format_real(r.dlr) + "," + format_real(r.union_acc) + "," + format_real(r.msd_acc) + "," +
           format_real(r.loss_clean) + "\n";
  }
  return out;
}

// Evaluates the curve at t_k = k / (grid_n - 1).
inline SweepTable path_sweep(const CurveParams& curve, const Dataset& data, std::span<const AttackSpec> specs,
                             std::size_t grid_n, const DomainBox& box = {}) {
  require(grid_n >= 3, "sweep grid needs at least 3 points");
  SweepTable table;
  table.grid_n = grid_n;
  for (std::size_t k = 0; k < grid_n; ++k) {
    const Real t = k + 1 == grid_n ? 1.0 : static_cast<Real>(k) / static_cast<Real>(grid_n - 1);
    table.rows.push_back({t, evaluate(curve_point(curve, t), data, specs, box)});
  }
  return table;
}

}  // namespace rmc
