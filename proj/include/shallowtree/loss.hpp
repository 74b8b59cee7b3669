#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "shallowtree/dataset.hpp"
#include "shallowtree/error.hpp"

namespace shallowtree {

/// Class counts for a leaf. The running maximum is exact because sweeps only
/// ever add samples to a stats object.
struct ClassCounts {
  std::vector<std::int64_t> counts;
  std::int64_t total = 0;
  std::int64_t max_count = 0;
};

/// Count, per-dimension sum and summed squared norm of the targets in a leaf.
struct MomentSums {
  std::int64_t count = 0;
  std::vector<double> sum;
  double sum_sq = 0.0;
};

/// 0-1 loss: a leaf costs its size minus its majority count.
class MisclassificationLoss {
 public:
  using Stats = ClassCounts;

  explicit MisclassificationLoss(const Dataset& ds) : labels_(ds.labels().data()), classes_(ds.num_classes()) {}

  Stats make() const { return Stats{std::vector<std::int64_t>(classes_, 0), 0, 0}; }
  void clear(Stats& s) const {
    std::fill(s.counts.begin(), s.counts.end(), 0);
    s.total = 0;
    s.max_count = 0;
  }
  void add(Stats& s, std::uint32_t i) const {
    auto c = ++s.counts[labels_[i]];
    ++s.total;
    if (c > s.max_count) s.max_count = c;
  }
  void merge(Stats& into, const Stats& from) const {
    into.total += from.total;
    into.max_count = 0;
    for (std::size_t c = 0; c < into.counts.size(); ++c) {
      into.counts[c] += from.counts[c];
      into.max_count = std::max(into.max_count, into.counts[c]);
    }
  }
  double loss(const Stats& s) const { return static_cast<double>(s.total - s.max_count); }

 private:
  const int* labels_;
  std::size_t classes_;
};

/// Squared error against the leaf mean, via sum_sq - |sum|^2 / count.
/// Cancellation can make the difference slightly negative; it is clamped to 0.
class SquaredLoss {
 public:
  using Stats = MomentSums;

  explicit SquaredLoss(const Dataset& ds) : ds_(&ds), m_(ds.m()) {}

  Stats make() const { return Stats{0, std::vector<double>(m_, 0.0), 0.0}; }
  void clear(Stats& s) const {
    s.count = 0;
    std::fill(s.sum.begin(), s.sum.end(), 0.0);
    s.sum_sq = 0.0;
  }
  void add(Stats& s, std::uint32_t i) const {
    auto y = ds_->target(i);
    ++s.count;
    for (std::size_t k = 0; k < m_; ++k) {
      s.sum[k] += y[k];
      s.sum_sq += y[k] * y[k];
    }
  }
  void merge(Stats& into, const Stats& from) const {
    into.count += from.count;
    for (std::size_t k = 0; k < m_; ++k) into.sum[k] += from.sum[k];
    into.sum_sq += from.sum_sq;
  }
  double loss(const Stats& s) const {
    if (s.count == 0) return 0.0;
    double norm = 0.0;
    for (double v : s.sum) norm += v * v;
    double l = s.sum_sq - norm / static_cast<double>(s.count);
    return l > 0.0 ? l : 0.0;
  }

 private:
  const Dataset* ds_;
  std::size_t m_;
};

/// Calls `fn` with the loss policy matching the dataset's task.
template <class Fn>
decltype(auto) with_loss(const Dataset& ds, Fn&& fn) {
  if (ds.is_classification()) return fn(MisclassificationLoss(ds));
  return fn(SquaredLoss(ds));
}

struct StumpResult {
  double loss = 0.0;
  std::uint32_t t = 0;  // smallest minimizing threshold index
};

struct SplitLosses {
  std::uint32_t t = 0;
  double left = 0.0;
  double right = 0.0;
};

/// Stump sweeps over sample lists. Holds scratch buffers, so one engine per
/// thread; the dataset and index it points at are shared read-only.
template <class Loss>
class StumpEngine {
 public:
  StumpEngine(const Dataset& ds, const FeatureIndex& fi)
      : ds_(&ds), fi_(&fi), loss_(ds), left_(loss_.make()), right_(loss_.make()), mark_(ds.n(), 0) {}

  const Dataset& dataset() const { return *ds_; }
  const FeatureIndex& index() const { return *fi_; }
  const Loss& policy() const { return loss_; }

  double leaf(std::span<const std::uint32_t> I) {
    loss_.clear(left_);
    for (auto i : I) loss_.add(left_, i);
    return loss_.loss(left_);
  }

  /// Writes the members of I into `out` in ascending order of feature f (ties by id).
  /// Uses a mark-and-scan over the global order for large I and a sort for small I.
  void order(std::span<const std::uint32_t> I, std::size_t f, std::vector<std::uint32_t>& out) {
    out.clear();
    const auto& col = (*fi_)[f];
    const std::size_t n = ds_->n();
    const std::size_t m = I.size();
    if (m == 0) return;
    if (m == n) {
      out.assign(col.sorted.begin(), col.sorted.end());
      return;
    }
    std::size_t lg = 1;
    while ((std::size_t{1} << lg) < m) ++lg;
    if (m * lg * 2 < n) {
      keys_.clear();
      for (auto i : I) keys_.push_back((std::uint64_t{col.rank[i]} << 32) | i);
      std::sort(keys_.begin(), keys_.end());
      for (auto k : keys_) out.push_back(static_cast<std::uint32_t>(k & 0xffffffffu));
      return;
    }
    for (auto i : I) mark_[i] = 1;
    for (auto i : col.sorted) {
      if (mark_[i]) out.push_back(i);
    }
    for (auto i : I) mark_[i] = 0;
  }

  /// Best stump on `ordered` (already sorted by feature f) with threshold index in [t_lo, t_hi].
  StumpResult stump_sorted(std::span<const std::uint32_t> ordered, std::size_t f, std::uint32_t t_lo,
                           std::uint32_t t_hi) {
    const auto& rank = (*fi_)[f].rank;
    const std::uint32_t u = (*fi_)[f].u();
    const std::size_t len = ordered.size();
    StumpResult best{0.0, t_lo};
    if (len == 0) return best;

    // Boundary k separates ordered[0..k) from ordered[k..len); its admissible
    // thresholds are [lo_k, hi_k].
    auto lo_at = [&](std::size_t k) -> std::uint32_t { return k == 0 ? 0u : rank[ordered[k - 1]]; };
    auto hi_at = [&](std::size_t k) -> std::uint32_t { return k == len ? u : rank[ordered[k]] - 1; };
    auto usable = [&](std::size_t k) {
      if (k != 0 && k != len && rank[ordered[k - 1]] == rank[ordered[k]]) return false;
      return lo_at(k) <= t_hi && hi_at(k) >= t_lo;
    };

    suffix_.assign(len + 1, 0.0);
    loss_.clear(right_);
    for (std::size_t k = len; k-- > 0;) {
      loss_.add(right_, ordered[k]);
      if (usable(k)) suffix_[k] = loss_.loss(right_);
    }
    loss_.clear(left_);
    bool found = false;
    for (std::size_t k = 0; k <= len; ++k) {
      if (k > 0) loss_.add(left_, ordered[k - 1]);
      if (!usable(k)) continue;
      double v = loss_.loss(left_) + (k == len ? 0.0 : suffix_[k]);
      if (!found || v < best.loss) {
        best.loss = v;
        best.t = std::max(lo_at(k), t_lo);
        found = true;
      }
    }
    return best;
  }

  StumpResult stump(std::span<const std::uint32_t> I, std::size_t f) {
    return stump_range(I, f, 0, (*fi_)[f].u());
  }

  StumpResult stump_range(std::span<const std::uint32_t> I, std::size_t f, std::uint32_t t_lo,
                          std::uint32_t t_hi) {
    require(f < fi_->p(), "feature out of range");
    require(t_lo <= t_hi && t_hi <= fi_->u(f), "stump range needs 0 <= tLo <= tHi <= u(f)");
    order(I, f, ordered_);
    return stump_sorted(ordered_, f, t_lo, t_hi);
  }

  /// Left/right leaf losses at every distinct split of I along feature f
  /// (thresholds that induce the same partition collapse to the smallest one).
  std::vector<SplitLosses> prefix(std::span<const std::uint32_t> I, std::size_t f) {
    order(I, f, ordered_);
    const auto& rank = (*fi_)[f].rank;
    const std::size_t len = ordered_.size();
    std::vector<SplitLosses> out;
    if (len == 0) return out;
    suffix_.assign(len + 1, 0.0);
    loss_.clear(right_);
    for (std::size_t k = len; k-- > 0;) {
      loss_.add(right_, ordered_[k]);
      suffix_[k] = loss_.loss(right_);
    }
    loss_.clear(left_);
    for (std::size_t k = 0; k <= len; ++k) {
      if (k > 0) loss_.add(left_, ordered_[k - 1]);
      if (k != 0 && k != len && rank[ordered_[k - 1]] == rank[ordered_[k]]) continue;
      out.push_back({k == 0 ? 0u : rank[ordered_[k - 1]], loss_.loss(left_), k == len ? 0.0 : suffix_[k]});
    }
    return out;
  }

 private:
  const Dataset* ds_;
  const FeatureIndex* fi_;
  Loss loss_;
  typename Loss::Stats left_;
  typename Loss::Stats right_;
  std::vector<double> suffix_;
  std::vector<std::uint8_t> mark_;
  std::vector<std::uint64_t> keys_;
  std::vector<std::uint32_t> ordered_;
};

// Convenience entry points that dispatch on the dataset's task.

inline double leaf_loss(std::span<const std::uint32_t> I, const Dataset& ds) {
  return with_loss(ds, [&](auto loss) {
    auto s = loss.make();
    for (auto i : I) loss.add(s, i);
    return loss.loss(s);
  });
}

inline std::vector<SplitLosses> prefix_leaf_losses(std::span<const std::uint32_t> I, std::size_t f,
                                                   const Dataset& ds, const FeatureIndex& fi) {
  return with_loss(ds, [&](auto loss) {
    StumpEngine<decltype(loss)> eng(ds, fi);
    return eng.prefix(I, f);
  });
}

inline StumpResult stump_loss(std::span<const std::uint32_t> I, std::size_t f, const Dataset& ds,
                              const FeatureIndex& fi) {
  return with_loss(ds, [&](auto loss) {
    StumpEngine<decltype(loss)> eng(ds, fi);
    return eng.stump(I, f);
  });
}

inline StumpResult stump_loss_range(std::span<const std::uint32_t> I, std::size_t f, std::uint32_t t_lo,
                                    std::uint32_t t_hi, const Dataset& ds, const FeatureIndex& fi) {
  return with_loss(ds, [&](auto loss) {
    StumpEngine<decltype(loss)> eng(ds, fi);
    return eng.stump_range(I, f, t_lo, t_hi);
  });
}

}  // namespace shallowtree
