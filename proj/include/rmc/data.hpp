#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "rmc/model.hpp"

namespace rmc {

enum class Split { train, test };

inline std::string split_name(Split s) { return s == Split::train ? "train" : "test"; }

struct GenMeta {
  std::string kind;  // gaussian_blobs | two_rings
  std::uint64_t seed = 0;
  std::size_t n_total = 0;
  Real noise = 0.0;

  friend bool operator==(const GenMeta&, const GenMeta&) = default;
};

// Labeled examples with every feature in [0, 1].
struct Dataset {
  Tensor x;  // n x d
  std::vector<Label> y;
  std::size_t classes = 0;
  Split split = Split::train;
  GenMeta meta;

  std::size_t size() const { return y.size(); }
  std::size_t dim() const { return x.shape().size() == 2 ? x.shape()[1] : 0; }

  void validate() const {
    require(!y.empty(), "dataset is empty");
    require(x.shape().size() == 2 && x.rows() == y.size(), "dataset features and labels disagree in length");
    require(classes >= 2, "dataset needs at least two classes");
    for (Real v : x.values()) require(v >= 0.0 && v <= 1.0, "dataset feature outside [0, 1]");
    for (Label l : y) require(l >= 0 && static_cast<std::size_t>(l) < classes, "dataset label out of range");
  }

  // Copies the listed rows into a fresh batch.
  std::pair<Tensor, std::vector<Label>> gather(std::span<const std::size_t> idx) const {
    const std::size_t d = dim();
    Tensor bx({idx.size(), d});
    std::vector<Label> by(idx.size());
    for (std::size_t r = 0; r < idx.size(); ++r) {
      const auto src = x.row(idx[r]);
      std::copy(src.begin(), src.end(), bx.row(r).begin());
      by[r] = y[idx[r]];
    }
    return {std::move(bx), std::move(by)};
  }

  friend bool operator==(const Dataset&, const Dataset&) = default;
};

struct DatasetPair {
  Dataset train;
  Dataset test;
};

enum class DatasetKind { gaussian_blobs, two_rings };

// Blob centers sit at 0.5 +- kCenterOffset on every coordinate (random sign
// patterns), so class boundaries are dense directions.
inline constexpr Real kCenterOffset = 0.15;

inline DatasetKind parse_dataset_kind(const std::string& s) {
  if (s == "gaussian_blobs") return DatasetKind::gaussian_blobs;
  if (s == "two_rings") return DatasetKind::two_rings;
  throw UsageError("unknown dataset kind '" + s + "' (expected gaussian_blobs or two_rings)");
}

// Class-balanced synthetic data, rescaled per coordinate into [0.1, 0.9],
// with a stratified 80/20 train/test split.
inline DatasetPair generate_dataset(DatasetKind kind, std::size_t n, std::size_t d, std::size_t classes, Real noise,
                                    std::uint64_t seed) {
  require(classes >= 2, "need at least two classes");
  require(n >= 2 * classes, "n must be at least twice the class count");
  require(d >= 2, "feature dimension must be at least 2");
  require(std::isfinite(noise) && noise >= 0.0, "noise must be finite and nonnegative");

  RngStream centers_rng = RngStream::derive(seed, 1);
  RngStream sample_rng = RngStream::derive(seed, 2);
  RngStream order_rng = RngStream::derive(seed, 3);

  std::vector<std::size_t> per_class(classes, n / classes);
  for (std::size_t c = 0; c < n % classes; ++c) ++per_class[c];

  // Sign patterns pairwise at least d/2 apart in Hamming distance where the
  // rejection budget allows; the best draw is kept otherwise.
  std::vector<std::vector<Real>> centers(classes, std::vector<Real>(d));
  {
    std::vector<std::vector<char>> best;
    std::size_t best_min = 0;
    for (int attempt = 0; attempt < 200 && best_min < (d + 1) / 2; ++attempt) {
      std::vector<std::vector<char>> pats(classes, std::vector<char>(d));
      for (auto& pat : pats)
        for (auto& b : pat) b = centers_rng.uniform() < 0.5;
      std::size_t min_ham = d;
      for (std::size_t a = 0; a < classes; ++a)
        for (std::size_t b = a + 1; b < classes; ++b) {
          std::size_t h = 0;
          for (std::size_t i = 0; i < d; ++i) h += pats[a][i] != pats[b][i];
          min_ham = std::min(min_ham, h);
        }
      if (best.empty() || min_ham > best_min) {
        best = std::move(pats);
        best_min = min_ham;
      }
    }
    for (std::size_t c = 0; c < classes; ++c)
      for (std::size_t i = 0; i < d; ++i) centers[c][i] = 0.5 + (best[c][i] ? kCenterOffset : -kCenterOffset);
  }

  // Raw samples grouped by class.
  std::vector<std::vector<std::vector<Real>>> raw(classes);
  for (std::size_t c = 0; c < classes; ++c) {
    for (std::size_t k = 0; k < per_class[c]; ++k) {
      std::vector<Real> p(d);
      if (kind == DatasetKind::gaussian_blobs) {
        for (std::size_t i = 0; i < d; ++i) p[i] = centers[c][i] + noise * sample_rng.normal();
      } else {
        // Concentric rings in the first two coordinates, radius grows with the class.
        const Real angle = 2.0 * 3.14159265358979323846 * sample_rng.uniform();
        const Real radius = static_cast<Real>(c + 1) / static_cast<Real>(classes) + noise * sample_rng.normal();
        p[0] = radius * std::cos(angle);
        p[1] = radius * std::sin(angle);
        for (std::size_t i = 2; i < d; ++i) p[i] = noise * sample_rng.normal();
      }
      raw[c].push_back(std::move(p));
    }
  }

  std::vector<Real> lo(d, std::numeric_limits<Real>::infinity());
  std::vector<Real> hi(d, -std::numeric_limits<Real>::infinity());
  for (const auto& cls : raw)
    for (const auto& p : cls)
      for (std::size_t i = 0; i < d; ++i) {
        lo[i] = std::min(lo[i], p[i]);
        hi[i] = std::max(hi[i], p[i]);
      }
  auto rescale = [&](Real v, std::size_t i) {
    const Real span = hi[i] - lo[i];
    const Real r = span > 0.0 ? 0.1 + 0.8 * (v - lo[i]) / span : 0.5;
    return std::clamp(r, 0.1, 0.9);
  };

  std::vector<std::pair<std::size_t, std::size_t>> train_ids, test_ids;  // (class, index)
  for (std::size_t c = 0; c < classes; ++c) {
    const std::size_t n_train = (per_class[c] * 4 + 2) / 5;
    for (std::size_t k = 0; k < per_class[c]; ++k) (k < n_train ? train_ids : test_ids).emplace_back(c, k);
  }
  order_rng.shuffle(train_ids);
  order_rng.shuffle(test_ids);

  const GenMeta meta{kind == DatasetKind::gaussian_blobs ? "gaussian_blobs" : "two_rings", seed, n, noise};
  auto build = [&](const std::vector<std::pair<std::size_t, std::size_t>>& ids, Split split) {
    Dataset ds;
    ds.x = Tensor({ids.size(), d});
    ds.y.resize(ids.size());
    ds.classes = classes;
    ds.split = split;
    ds.meta = meta;
    for (std::size_t r = 0; r < ids.size(); ++r) {
      const auto& p = raw[ids[r].first][ids[r].second];
      auto row = ds.x.row(r);
      for (std::size_t i = 0; i < d; ++i) row[i] = rescale(p[i], i);
      ds.y[r] = static_cast<Label>(ids[r].first);
    }
    return ds;
  };
  return {build(train_ids, Split::train), build(test_ids, Split::test)};
}

}  // namespace rmc
