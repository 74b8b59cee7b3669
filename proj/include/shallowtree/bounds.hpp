#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <vector>

#include "shallowtree/dataset.hpp"
#include "shallowtree/error.hpp"
#include "shallowtree/loss.hpp"
#include "shallowtree/tree.hpp"

namespace shallowtree {

/// The depth-2 search subspace: root feature f0 with threshold index in
/// [a, b], left child splitting on f1, right child on f2.
struct ParamBox {
  std::size_t f0 = 0;
  std::uint32_t a = 0;
  std::uint32_t b = 0;
  std::size_t f1 = 0;
  std::size_t f2 = 0;
};

struct BoundValue {
  double value = 0.0;
  std::optional<Tree> witness;
};

enum class BoundKind { kW0, kW1, kW2, kL2 };

inline const char* to_string(BoundKind k) {
  switch (k) {
    case BoundKind::kW0: return "w0";
    case BoundKind::kW1: return "w1";
    case BoundKind::kW2: return "w2";
    case BoundKind::kL2: return "l2";
  }
  return "?";
}

/// t_0 = a, t_s = b, t_j = floor(a + j (b - a) / s).
inline std::vector<std::uint32_t> equi_spaced(std::uint32_t a, std::uint32_t b, std::uint32_t s) {
  require(b >= a && s >= 1 && s <= b - a, "equi_spaced needs 1 <= s <= b - a");
  std::vector<std::uint32_t> t(s + 1);
  const std::uint64_t len = b - a;
  for (std::uint32_t j = 0; j <= s; ++j) t[j] = a + static_cast<std::uint32_t>(len * j / s);
  return t;
}

/// A sample collection with what is known about its order, so range
/// selections can slice instead of filter.
struct SampleBase {
  std::span<const std::uint32_t> ids;
  int ordered_by = -1;  // feature whose order `ids` follows, or -1
  bool full = false;    // ids is every sample
};

/// One scan configuration: left part (0, left_hi], right part (right_lo, u]
/// along the scan feature; `root_t` is the threshold a witness would use.
struct ScanConfig {
  std::uint32_t left_hi = 0;
  std::uint32_t right_lo = 0;
  std::uint32_t root_t = 0;
};

/// Stump losses for every configuration and every requested child feature.
struct ScanTable {
  std::vector<ScanConfig> configs;
  std::vector<std::size_t> left_features;
  std::vector<std::size_t> right_features;
  std::vector<double> left_loss;   // [k * |left_features| + i]
  std::vector<std::uint32_t> left_t;
  std::vector<double> right_loss;  // [k * |right_features| + i]
  std::vector<std::uint32_t> right_t;

  std::size_t size() const { return configs.size(); }
  double l(std::size_t k, std::size_t i) const { return left_loss[k * left_features.size() + i]; }
  double r(std::size_t k, std::size_t i) const { return right_loss[k * right_features.size() + i]; }
};

/// min over configurations of left(f1) + right(f2), for every (f1, f2) cell.
struct PairMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> value;
  std::vector<std::uint32_t> arg;  // minimizing configuration

  double at(std::size_t i, std::size_t j) const { return value[i * cols + j]; }
};

/// Shared evaluator for the depth-2 loss, its quantile upper bound and the
/// lower bounds. Stateful scratch; use one per thread.
template <class Loss>
class BoundEngine {
 public:
  BoundEngine(const Dataset& ds, const FeatureIndex& fi) : stumps_(ds, fi), ds_(&ds), fi_(&fi) {}

  const Dataset& dataset() const { return *ds_; }
  const FeatureIndex& index() const { return *fi_; }
  StumpEngine<Loss>& stumps() { return stumps_; }

  SampleBase whole() const { return SampleBase{(*fi_)[0].sorted, 0, true}; }

  SampleBase base_of(std::span<const std::uint32_t> I) const {
    return SampleBase{I, -1, I.size() == ds_->n()};
  }

  /// Members of `base` with g-rank in (lo, hi]. Slices when possible, otherwise
  /// filters into `buf`.
  SampleBase select(const SampleBase& base, std::size_t g, std::uint32_t lo, std::uint32_t hi,
                    std::vector<std::uint32_t>& buf) const {
    const auto& col = (*fi_)[g];
    if (hi <= lo) return SampleBase{{}, static_cast<int>(g), false};
    if (base.full) return SampleBase{col.slice(lo, hi), static_cast<int>(g), false};
    if (base.ordered_by == static_cast<int>(g)) {
      const auto& rank = col.rank;
      auto first = std::partition_point(base.ids.begin(), base.ids.end(),
                                        [&](std::uint32_t i) { return rank[i] <= lo; });
      auto last = std::partition_point(first, base.ids.end(), [&](std::uint32_t i) { return rank[i] <= hi; });
      return SampleBase{{first, last}, static_cast<int>(g), false};
    }
    buf.clear();
    const auto& rank = col.rank;
    for (auto i : base.ids) {
      if (rank[i] > lo && rank[i] <= hi) buf.push_back(i);
    }
    return SampleBase{buf, base.ordered_by, false};
  }

  StumpResult stump_of(const SampleBase& s, std::size_t f) {
    if (s.full) return stumps_.stump_sorted((*fi_)[f].sorted, f, 0, (*fi_)[f].u());
    if (s.ordered_by == static_cast<int>(f)) return stumps_.stump_sorted(s.ids, f, 0, (*fi_)[f].u());
    stumps_.order(s.ids, f, order_buf_);
    return stumps_.stump_sorted(order_buf_, f, 0, (*fi_)[f].u());
  }

  /// Fills stump losses for each configuration. Left parts grow and right
  /// parts shrink along `configs`, so equal sizes mean equal sets and the
  /// previous row is reused.
  ScanTable scan(const SampleBase& base, std::size_t g, std::vector<ScanConfig> configs,
                 std::span<const std::size_t> left_features, std::span<const std::size_t> right_features) {
    ScanTable t;
    t.configs = std::move(configs);
    t.left_features.assign(left_features.begin(), left_features.end());
    t.right_features.assign(right_features.begin(), right_features.end());
    const std::size_t K = t.configs.size();
    const std::size_t nl = left_features.size();
    const std::size_t nr = right_features.size();
    t.left_loss.assign(K * nl, 0.0);
    t.left_t.assign(K * nl, 0);
    t.right_loss.assign(K * nr, 0.0);
    t.right_t.assign(K * nr, 0);
    const std::uint32_t u = (*fi_)[g].u();
    std::size_t prev_left = std::numeric_limits<std::size_t>::max();
    std::size_t prev_right = std::numeric_limits<std::size_t>::max();
    for (std::size_t k = 0; k < K; ++k) {
      const auto& c = t.configs[k];
      if (nl > 0) {
        auto sel = select(base, g, 0, c.left_hi, sel_buf_);
        if (k > 0 && sel.ids.size() == prev_left) {
          std::copy_n(t.left_loss.begin() + (k - 1) * nl, nl, t.left_loss.begin() + k * nl);
          std::copy_n(t.left_t.begin() + (k - 1) * nl, nl, t.left_t.begin() + k * nl);
        } else {
          for (std::size_t i = 0; i < nl; ++i) {
            auto r = stump_of(sel, left_features[i]);
            t.left_loss[k * nl + i] = r.loss;
            t.left_t[k * nl + i] = r.t;
          }
        }
        prev_left = sel.ids.size();
      }
      if (nr > 0) {
        auto sel = select(base, g, c.right_lo, u, sel_buf_);
        if (k > 0 && sel.ids.size() == prev_right) {
          std::copy_n(t.right_loss.begin() + (k - 1) * nr, nr, t.right_loss.begin() + k * nr);
          std::copy_n(t.right_t.begin() + (k - 1) * nr, nr, t.right_t.begin() + k * nr);
        } else {
          for (std::size_t i = 0; i < nr; ++i) {
            auto r = stump_of(sel, right_features[i]);
            t.right_loss[k * nr + i] = r.loss;
            t.right_t[k * nr + i] = r.t;
          }
        }
        prev_right = sel.ids.size();
      }
    }
    return t;
  }

  static PairMatrix min_pairs(const ScanTable& t) {
    PairMatrix m;
    m.rows = t.left_features.size();
    m.cols = t.right_features.size();
    m.value.assign(m.rows * m.cols, std::numeric_limits<double>::infinity());
    m.arg.assign(m.rows * m.cols, 0);
    for (std::size_t k = 0; k < t.size(); ++k) {
      for (std::size_t i = 0; i < m.rows; ++i) {
        const double li = t.l(k, i);
        for (std::size_t j = 0; j < m.cols; ++j) {
          const double v = li + t.r(k, j);
          auto& cell = m.value[i * m.cols + j];
          if (v < cell) {
            cell = v;
            m.arg[i * m.cols + j] = static_cast<std::uint32_t>(k);
          }
        }
      }
    }
    return m;
  }

  // Configuration builders. Every one is a list of (left (0,x], right (y,u]).

  /// Exact depth-2 sweep: every root threshold in [a, b].
  static std::vector<ScanConfig> sweep_configs(std::uint32_t a, std::uint32_t b) {
    std::vector<ScanConfig> c;
    for (std::uint32_t t = a; t <= b; ++t) c.push_back({t, t, t});
    return c;
  }
  /// Quantile upper bound: root threshold restricted to the s-equi-spaced points.
  static std::vector<ScanConfig> quantile_configs(std::uint32_t a, std::uint32_t b, std::uint32_t s) {
    std::vector<ScanConfig> c;
    for (auto t : equi_spaced(a, b, s)) c.push_back({t, t, t});
    return c;
  }
  /// Quantile-dropped lower bound: the j-th term drops samples in (t_{j-1}, t_j].
  static std::vector<ScanConfig> dropped_configs(std::uint32_t a, std::uint32_t b, std::uint32_t s) {
    auto q = equi_spaced(a, b, s);
    std::vector<ScanConfig> c;
    for (std::uint32_t j = 1; j <= s; ++j) c.push_back({q[j - 1], q[j], q[j - 1]});
    return c;
  }

  /// Matrix of W(base, (g, [a,b], f1, f2)) over f1 in F1, f2 in F2.
  /// `s_inner` is the s' of the quantile-dropped bound (ignored otherwise).
  PairMatrix lower_matrix(const SampleBase& base, std::size_t g, std::uint32_t a, std::uint32_t b,
                          BoundKind kind, std::uint32_t s_inner, std::span<const std::size_t> F1,
                          std::span<const std::size_t> F2) {
    if (kind == BoundKind::kL2) return min_pairs(scan(base, g, sweep_configs(a, b), F1, F2));
    PairMatrix out = min_pairs(scan(base, g, {ScanConfig{a, b, a}}, F1, F2));
    if (kind == BoundKind::kW0 || a == b) return out;
    auto mid = select(base, g, a, b, mid_buf_);
    std::vector<std::uint32_t> mid_copy;
    if (mid.ids.data() == mid_buf_.data()) {
      mid_copy.assign(mid.ids.begin(), mid.ids.end());
      mid.ids = mid_copy;
    }
    PairMatrix inner;
    if (kind == BoundKind::kW1) {
      inner = min_pairs(scan(mid, g, dropped_configs(a, b, s_inner), F1, F2));
    } else {
      inner = min_pairs(scan(mid, g, sweep_configs(a, b), F1, F2));
    }
    for (std::size_t c = 0; c < out.value.size(); ++c) out.value[c] += inner.value[c];
    return out;
  }

  /// Plan of the depth-2 tree behind cell (i, j) of a sweep/quantile matrix.
  static Plan witness_plan(std::size_t g, const ScanTable& t, const PairMatrix& m, std::size_t i, std::size_t j) {
    const std::size_t k = m.arg[i * m.cols + j];
    const auto nl = t.left_features.size();
    const auto nr = t.right_features.size();
    return Plan::split(g, t.configs[k].root_t, Plan::stump(t.left_features[i], t.left_t[k * nl + i]),
                       Plan::stump(t.right_features[j], t.right_t[k * nr + j]));
  }

 private:
  StumpEngine<Loss> stumps_;
  const Dataset* ds_;
  const FeatureIndex* fi_;
  std::vector<std::uint32_t> sel_buf_;
  std::vector<std::uint32_t> mid_buf_;
  std::vector<std::uint32_t> order_buf_;
};

// ---------------------------------------------------------------------------
// Single-box operations on an explicit sample set.

namespace detail {

inline void check_box(const FeatureIndex& fi, const ParamBox& phi) {
  require(phi.f0 < fi.p() && phi.f1 < fi.p() && phi.f2 < fi.p(), "ParamBox feature out of range");
  require(phi.a <= phi.b && phi.b <= fi.u(phi.f0), "ParamBox needs 0 <= a <= b <= u(f0)");
}

template <class Fn>
decltype(auto) with_engine(const Dataset& ds, const FeatureIndex& fi, Fn&& fn) {
  return with_loss(ds, [&](auto loss) {
    BoundEngine<decltype(loss)> eng(ds, fi);
    return fn(eng);
  });
}

}  // namespace detail

/// Exact L2(I, phi) with its witness tree (smallest minimizing root threshold).
inline BoundValue depth2_exact(std::span<const std::uint32_t> I, const ParamBox& phi, const Dataset& ds,
                               const FeatureIndex& fi) {
  detail::check_box(fi, phi);
  return detail::with_engine(ds, fi, [&](auto& eng) {
    const std::size_t F1[] = {phi.f1};
    const std::size_t F2[] = {phi.f2};
    auto table = eng.scan(eng.base_of(I), phi.f0, eng.sweep_configs(phi.a, phi.b), F1, F2);
    auto m = eng.min_pairs(table);
    auto plan = eng.witness_plan(phi.f0, table, m, 0, 0);
    return BoundValue{m.at(0, 0), materialize(plan, ds, fi, I)};
  });
}

/// V_s(I, phi): the depth-2 loss with the root threshold limited to the
/// s-equi-spaced points of [a, b]. Never below depth2_exact.
inline BoundValue upper_vs(std::span<const std::uint32_t> I, const ParamBox& phi, std::uint32_t s,
                           const Dataset& ds, const FeatureIndex& fi) {
  detail::check_box(fi, phi);
  require(s >= 1 && s <= phi.b - phi.a, "upper_vs needs 1 <= s <= b - a");
  return detail::with_engine(ds, fi, [&](auto& eng) {
    const std::size_t F1[] = {phi.f1};
    const std::size_t F2[] = {phi.f2};
    auto table = eng.scan(eng.base_of(I), phi.f0, eng.quantile_configs(phi.a, phi.b, s), F1, F2);
    auto m = eng.min_pairs(table);
    auto plan = eng.witness_plan(phi.f0, table, m, 0, 0);
    return BoundValue{m.at(0, 0), materialize(plan, ds, fi, I)};
  });
}

/// W0: drop the samples between midpoints a and b, fit stumps on both ends.
inline double lower_w0(std::span<const std::uint32_t> I, const ParamBox& phi, const Dataset& ds,
                       const FeatureIndex& fi) {
  detail::check_box(fi, phi);
  return detail::with_engine(ds, fi, [&](auto& eng) {
    const std::size_t F1[] = {phi.f1};
    const std::size_t F2[] = {phi.f2};
    return eng.lower_matrix(eng.base_of(I), phi.f0, phi.a, phi.b, BoundKind::kW0, 1, F1, F2).at(0, 0);
  });
}

/// L-hat-2: min over j of the split objective with (t_{j-1}, t_j] dropped.
inline double hat_l2(std::span<const std::uint32_t> I, const ParamBox& phi, std::uint32_t s_inner,
                     const Dataset& ds, const FeatureIndex& fi) {
  detail::check_box(fi, phi);
  require(s_inner >= 1 && s_inner <= phi.b - phi.a, "hat_l2 needs 1 <= s' <= b - a");
  return detail::with_engine(ds, fi, [&](auto& eng) {
    const std::size_t F1[] = {phi.f1};
    const std::size_t F2[] = {phi.f2};
    auto table = eng.scan(eng.base_of(I), phi.f0, eng.dropped_configs(phi.a, phi.b, s_inner), F1, F2);
    return eng.min_pairs(table).at(0, 0);
  });
}

/// W_{1,s'} = W0 + L-hat-2 of the dropped middle.
inline double lower_w1(std::span<const std::uint32_t> I, const ParamBox& phi, std::uint32_t s_inner,
                       const Dataset& ds, const FeatureIndex& fi) {
  detail::check_box(fi, phi);
  require(s_inner >= 1 && s_inner <= phi.b - phi.a, "lower_w1 needs 1 <= s' <= b - a");
  return detail::with_engine(ds, fi, [&](auto& eng) {
    const std::size_t F1[] = {phi.f1};
    const std::size_t F2[] = {phi.f2};
    return eng.lower_matrix(eng.base_of(I), phi.f0, phi.a, phi.b, BoundKind::kW1, s_inner, F1, F2).at(0, 0);
  });
}

/// W2 = W0 + exact L2 of the dropped middle.
inline double lower_w2(std::span<const std::uint32_t> I, const ParamBox& phi, const Dataset& ds,
                       const FeatureIndex& fi) {
  detail::check_box(fi, phi);
  return detail::with_engine(ds, fi, [&](auto& eng) {
    const std::size_t F1[] = {phi.f1};
    const std::size_t F2[] = {phi.f2};
    return eng.lower_matrix(eng.base_of(I), phi.f0, phi.a, phi.b, BoundKind::kW2, 1, F1, F2).at(0, 0);
  });
}

}  // namespace shallowtree
