#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numeric>
#include <utility>
#include <vector>

#include "shallowtree/bnb2.hpp"
#include "shallowtree/bounds.hpp"
#include "shallowtree/dataset.hpp"
#include "shallowtree/error.hpp"
#include "shallowtree/heuristics.hpp"
#include "shallowtree/tree.hpp"

namespace shallowtree {

/// Depth-2 subtree parameters sharing a child feature and interval; `pairs`
/// is a p x p mask over (left grandchild feature, right grandchild feature).
struct PhiGroup {
  std::size_t f = 0;
  std::uint32_t a = 0;
  std::uint32_t b = 0;
  std::vector<std::uint8_t> pairs;

  std::size_t count() const { return static_cast<std::size_t>(std::count(pairs.begin(), pairs.end(), 1)); }
};

using PhiSet = std::vector<PhiGroup>;

struct D3Tuple {
  std::size_t f0 = 0;
  std::uint32_t a0 = 0;
  std::uint32_t b0 = 0;
  PhiSet phi1;
  PhiSet phi2;
  double lower_bound = 0.0;
};

struct AliveSet3 {
  std::vector<D3Tuple> tuples;
  int iteration = 0;
};

inline PhiSet full_phi(const FeatureIndex& fi) {
  const std::size_t p = fi.p();
  PhiSet phi;
  for (std::size_t f = 0; f < p; ++f) phi.push_back(PhiGroup{f, 0, fi.u(f), std::vector<std::uint8_t>(p * p, 1)});
  return phi;
}

inline AliveSet3 init_alive3(const Dataset& ds, const FeatureIndex& fi) {
  (void)ds;
  AliveSet3 al;
  const PhiSet phi = full_phi(fi);
  for (std::size_t f0 = 0; f0 < fi.p(); ++f0) al.tuples.push_back(D3Tuple{f0, 0, fi.u(f0), phi, phi, 0.0});
  return al;
}

namespace detail {

struct GroupAxes {
  std::vector<std::size_t> rows;
  std::vector<std::size_t> cols;
};

inline GroupAxes axes_of(const PhiGroup& g, std::size_t p) {
  GroupAxes ax;
  for (std::size_t f1 = 0; f1 < p; ++f1) {
    for (std::size_t f2 = 0; f2 < p; ++f2) {
      if (g.pairs[f1 * p + f2]) {
        ax.rows.push_back(f1);
        break;
      }
    }
  }
  for (std::size_t f2 = 0; f2 < p; ++f2) {
    for (std::size_t f1 = 0; f1 < p; ++f1) {
      if (g.pairs[f1 * p + f2]) {
        ax.cols.push_back(f2);
        break;
      }
    }
  }
  return ax;
}

/// Smallest masked cell of m; returns {value, i, j}.
struct Cell {
  double value = std::numeric_limits<double>::infinity();
  std::size_t i = 0;
  std::size_t j = 0;
};

inline Cell masked_min(const PairMatrix& m, const PhiGroup& g, const GroupAxes& ax, std::size_t p) {
  Cell c;
  for (std::size_t i = 0; i < m.rows; ++i) {
    for (std::size_t j = 0; j < m.cols; ++j) {
      if (g.pairs[ax.rows[i] * p + ax.cols[j]] && m.at(i, j) < c.value) c = Cell{m.at(i, j), i, j};
    }
  }
  return c;
}

inline SampleBase left_part(const FeatureIndex& fi, std::size_t f0, std::uint32_t t) {
  return SampleBase{fi[f0].slice(0, t), static_cast<int>(f0), t == fi.u(f0)};
}

inline SampleBase right_part(const FeatureIndex& fi, std::size_t f0, std::uint32_t t) {
  return SampleBase{fi[f0].slice(t, fi.u(f0)), static_cast<int>(f0), t == 0};
}

/// Upper bound (quantile V when the interval is long enough, exact otherwise)
/// or exact value, minimized over the group's pairs, with its plan.
template <class Loss>
PlanValue group_value(BoundEngine<Loss>& eng, const SampleBase& base, const PhiGroup& g, std::uint32_t s,
                      bool exact_only) {
  const std::size_t p = eng.index().p();
  const auto ax = axes_of(g, p);
  auto configs = (!exact_only && s <= g.b - g.a) ? BoundEngine<Loss>::quantile_configs(g.a, g.b, s)
                                                 : BoundEngine<Loss>::sweep_configs(g.a, g.b);
  auto table = eng.scan(base, g.f, std::move(configs), ax.rows, ax.cols);
  auto m = BoundEngine<Loss>::min_pairs(table);
  auto c = masked_min(m, g, ax, p);
  return PlanValue{c.value, BoundEngine<Loss>::witness_plan(g.f, table, m, c.i, c.j)};
}

template <class Loss>
PlanValue best_over(BoundEngine<Loss>& eng, const SampleBase& base, const PhiSet& phi, std::uint32_t s,
                    bool exact_only) {
  PlanValue best;
  for (const auto& g : phi) {
    auto v = group_value(eng, base, g, s, exact_only);
    if (v.value < best.value) best = std::move(v);
  }
  return best;
}

template <class Loss>
double min_lower(BoundEngine<Loss>& eng, const SampleBase& base, const PhiSet& phi, const SolveOptions& opts) {
  const std::size_t p = eng.index().p();
  double best = std::numeric_limits<double>::infinity();
  for (const auto& g : phi) {
    const auto ax = axes_of(g, p);
    auto m = bound_matrix(eng, base, g.f, g.a, g.b, opts, ax.rows, ax.cols);
    best = std::min(best, masked_min(m, g, ax, p).value);
  }
  return best;
}

struct Step1 {
  double value = std::numeric_limits<double>::infinity();
  Plan plan;
  std::vector<double> min_v1;  // per equi-spaced root threshold
  std::vector<double> min_v2;
};

template <class Loss>
Step1 step1(BoundEngine<Loss>& eng, const D3Tuple& tup, std::uint32_t s) {
  const auto& fi = eng.index();
  const auto t = equi_spaced(tup.a0, tup.b0, s);
  Step1 out;
  out.min_v1.resize(s + 1);
  out.min_v2.resize(s + 1);
  for (std::uint32_t j = 0; j <= s; ++j) {
    auto l = best_over(eng, left_part(fi, tup.f0, t[j]), tup.phi1, s, false);
    auto r = best_over(eng, right_part(fi, tup.f0, t[j]), tup.phi2, s, false);
    out.min_v1[j] = l.value;
    out.min_v2[j] = r.value;
    if (l.value + r.value < out.value) {
      out.value = l.value + r.value;
      out.plan = Plan::split(tup.f0, t[j], l.plan, r.plan);
    }
  }
  return out;
}

/// Merges groups with the same (f, a, b) key by uniting their pair masks.
inline PhiSet merge_groups(PhiSet phi) {
  std::sort(phi.begin(), phi.end(), [](const PhiGroup& x, const PhiGroup& y) {
    return std::tie(x.f, x.a, x.b) < std::tie(y.f, y.a, y.b);
  });
  PhiSet out;
  for (auto& g : phi) {
    if (!out.empty() && out.back().f == g.f && out.back().a == g.a && out.back().b == g.b) {
      for (std::size_t k = 0; k < g.pairs.size(); ++k) out.back().pairs[k] |= g.pairs[k];
    } else {
      out.push_back(std::move(g));
    }
  }
  return out;
}

/// Refines every group of `phi` and keeps the child pairs passing both tests:
/// W <= v_cap and W + other_min <= U. Reports the smallest kept W.
template <class Loss>
PhiSet refine_side(BoundEngine<Loss>& eng, const SampleBase& base, const PhiSet& phi, double v_cap,
                   double other_min, double U, const SolveOptions& opts, double& kept_min) {
  const std::size_t p = eng.index().p();
  const bool exact = eng.dataset().is_classification();
  const double tol = opts.prune_tolerance;
  kept_min = std::numeric_limits<double>::infinity();
  PhiSet out;
  for (const auto& g : phi) {
    std::vector<std::pair<std::uint32_t, std::uint32_t>> pieces;
    if (g.b - g.a > opts.s) {
      const auto c = equi_spaced(g.a, g.b, opts.s);
      for (std::uint32_t k = 1; k <= opts.s; ++k) pieces.emplace_back(c[k - 1], c[k]);
    } else {
      pieces.emplace_back(g.a, g.b);
    }
    const auto ax = axes_of(g, p);
    for (auto [a, b] : pieces) {
      auto m = bound_matrix(eng, base, g.f, a, b, opts, ax.rows, ax.cols);
      PhiGroup child{g.f, a, b, std::vector<std::uint8_t>(p * p, 0)};
      bool any = false;
      for (std::size_t i = 0; i < m.rows; ++i) {
        for (std::size_t j = 0; j < m.cols; ++j) {
          const std::size_t key = ax.rows[i] * p + ax.cols[j];
          if (!g.pairs[key]) continue;
          const double w = m.at(i, j);
          if (keeps(w, v_cap, exact, tol) && keeps(w + other_min, U, exact, tol)) {
            child.pairs[key] = 1;
            any = true;
            kept_min = std::min(kept_min, w);
          }
        }
      }
      if (any) out.push_back(std::move(child));
    }
  }
  return merge_groups(std::move(out));
}

}  // namespace detail

/// Upper bound from the s+1 equi-spaced root thresholds with the best
/// depth-2 subtree (by V) on each side, and its depth-3 witness.
template <class Loss>
std::pair<double, Tree> step1_upper_d3(BoundEngine<Loss>& eng, const D3Tuple& tup, std::uint32_t s) {
  require(tup.b0 - tup.a0 > s, "step1_upper_d3 needs b0 - a0 > s");
  auto r = detail::step1(eng, tup, s);
  const auto& ds = eng.dataset();
  return {r.value, materialize(r.plan, ds, eng.index(), all_samples(ds.n()))};
}

struct PruneOutcome {
  std::vector<D3Tuple> children;
  std::uint64_t pruned = 0;
};

template <class Loss>
PruneOutcome step2_prune_d3_with(BoundEngine<Loss>& eng, const D3Tuple& tup, double U,
                                 const std::vector<double>& min_v1, const std::vector<double>& min_v2,
                                 const SolveOptions& opts) {
  const auto& fi = eng.index();
  const auto t = equi_spaced(tup.a0, tup.b0, opts.s);
  PruneOutcome out;
  for (std::uint32_t j = 1; j <= opts.s; ++j) {
    const auto lset = detail::left_part(fi, tup.f0, t[j - 1]);
    const auto rset = detail::right_part(fi, tup.f0, t[j]);
    const double w1 = detail::min_lower(eng, lset, tup.phi1, opts);
    const double w2 = detail::min_lower(eng, rset, tup.phi2, opts);
    double kept1 = 0, kept2 = 0;
    auto phi1 = detail::refine_side(eng, lset, tup.phi1, min_v1[j], w2, U, opts, kept1);
    if (phi1.empty()) {
      ++out.pruned;
      continue;
    }
    auto phi2 = detail::refine_side(eng, rset, tup.phi2, min_v2[j - 1], w1, U, opts, kept2);
    if (phi2.empty()) {
      ++out.pruned;
      continue;
    }
    out.children.push_back(
        D3Tuple{tup.f0, t[j - 1], t[j], std::move(phi1), std::move(phi2), std::max(tup.lower_bound, kept1 + kept2)});
  }
  return out;
}

/// Prunes a tuple with b0 - a0 > s into at most s sub-tuples.
template <class Loss>
PruneOutcome step2_prune_d3(BoundEngine<Loss>& eng, const D3Tuple& tup, double U, const SolveOptions& opts) {
  require(tup.b0 - tup.a0 > opts.s, "step2_prune_d3 needs b0 - a0 > s");
  auto s1 = detail::step1(eng, tup, opts.s);
  return step2_prune_d3_with(eng, tup, U, s1.min_v1, s1.min_v2, opts);
}

/// Exact minimum over a tuple: every root threshold, every group and pair.
template <class Loss>
std::pair<double, Tree> resolve_tuple(BoundEngine<Loss>& eng, const D3Tuple& tup) {
  const auto& fi = eng.index();
  const auto& ds = eng.dataset();
  detail::PlanValue best, left, right;
  std::size_t left_size = std::numeric_limits<std::size_t>::max();
  std::size_t right_size = left_size;
  for (std::uint32_t t = tup.a0; t <= tup.b0; ++t) {
    const auto lb = detail::left_part(fi, tup.f0, t);
    const auto rb = detail::right_part(fi, tup.f0, t);
    if (lb.ids.size() != left_size) left = detail::best_over(eng, lb, tup.phi1, 0, true);
    if (rb.ids.size() != right_size) right = detail::best_over(eng, rb, tup.phi2, 0, true);
    left_size = lb.ids.size();
    right_size = rb.ids.size();
    if (left.value + right.value < best.value) {
      best.value = left.value + right.value;
      best.plan = Plan::split(tup.f0, t, left.plan, right.plan);
    }
  }
  return {best.value, materialize(best.plan, ds, fi, all_samples(ds.n()))};
}

template <class Loss>
SolveResult solve_depth3_with(const Dataset& ds, const FeatureIndex& fi, const SolveOptions& opts) {
  require(opts.s >= 2, "s must be at least 2");
  const detail::Deadline deadline(opts.time_limit);
  auto greedy = greedy_tree(ds, fi, 3);
  detail::Incumbent inc(greedy.loss, greedy.tree);
  const bool exact = ds.is_classification();

  SolveResult res;
  AliveSet3 alive = init_alive3(ds, fi);
  const unsigned workers = std::max(1u, opts.workers);
  std::vector<BoundEngine<Loss>> engines;
  engines.reserve(workers);
  for (unsigned w = 0; w < workers; ++w) engines.emplace_back(ds, fi);

  bool timed_out = false;
  double pending_lb = std::numeric_limits<double>::infinity();
  while (!alive.tuples.empty()) {
    ++alive.iteration;
    const std::size_t count = alive.tuples.size();
    std::vector<std::vector<D3Tuple>> produced(count);
    std::vector<char> done(count, 0);
    std::atomic<std::uint64_t> explored{0}, pruned{0};
    const bool finished = detail::run_level(count, workers, deadline, [&](unsigned w, std::size_t k) {
      auto& eng = engines[w];
      const auto& tup = alive.tuples[k];
      if (!detail::keeps(tup.lower_bound, inc.value(), exact, opts.prune_tolerance)) {
        ++pruned;
      } else if (tup.b0 - tup.a0 <= opts.s) {
        auto [v, tree] = resolve_tuple(eng, tup);
        inc.offer(v, tree);
      } else {
        auto s1 = detail::step1(eng, tup, opts.s);
        if (s1.value < inc.value()) {
          inc.offer(s1.value, materialize(s1.plan, ds, fi, all_samples(ds.n())));
        }
        if (deadline.passed()) return;
        auto outcome = step2_prune_d3_with(eng, tup, inc.value(), s1.min_v1, s1.min_v2, opts);
        pruned += outcome.pruned;
        produced[k] = std::move(outcome.children);
      }
      ++explored;
      done[k] = 1;
    });
    res.boxes_explored += explored;
    res.boxes_pruned += pruned;
    std::vector<D3Tuple> next;
    bool incomplete = !finished;
    for (std::size_t k = 0; k < count; ++k) {
      if (!done[k]) {
        pending_lb = std::min(pending_lb, alive.tuples[k].lower_bound);
        incomplete = true;
      }
      for (auto& c : produced[k]) next.push_back(std::move(c));
    }
    if (!incomplete && opts.max_alive > 0 && next.size() > opts.max_alive) {
      // Over budget: settle the least promising tuples now.
      std::stable_sort(next.begin(), next.end(),
                       [](const D3Tuple& x, const D3Tuple& y) { return x.lower_bound < y.lower_bound; });
      std::vector<D3Tuple> excess(std::make_move_iterator(next.begin() + static_cast<std::ptrdiff_t>(opts.max_alive)),
                                  std::make_move_iterator(next.end()));
      next.resize(opts.max_alive);
      std::vector<char> settled(excess.size(), 0);
      detail::run_level(excess.size(), workers, deadline, [&](unsigned w, std::size_t k) {
        if (detail::keeps(excess[k].lower_bound, inc.value(), exact, opts.prune_tolerance)) {
          auto [v, tree] = resolve_tuple(engines[w], excess[k]);
          inc.offer(v, tree);
        }
        settled[k] = 1;
      });
      for (std::size_t k = 0; k < excess.size(); ++k) {
        if (!settled[k]) next.push_back(std::move(excess[k]));
      }
      res.boxes_explored += excess.size();
    }
    alive.tuples = std::move(next);
    if (incomplete || (deadline.passed() && !alive.tuples.empty())) {
      timed_out = true;
      break;
    }
  }

  res.iterations = alive.iteration;
  res.objective = inc.value();
  res.tree = inc.tree();
  if (timed_out) {
    res.status = SolveStatus::kTimeLimit;
    double lb = pending_lb;
    for (const auto& t : alive.tuples) lb = std::min(lb, t.lower_bound);
    res.lower_bound = std::min(lb, res.objective);
  } else {
    res.lower_bound = res.objective;
  }
  return res;
}

/// Optimal depth-3 tree by quantile branch-and-bound over grouped subtree sets.
inline SolveResult solve_depth3(const Dataset& ds, const FeatureIndex& fi, const SolveOptions& opts = {}) {
  return with_loss(ds, [&](auto loss) { return solve_depth3_with<decltype(loss)>(ds, fi, opts); });
}

inline SolveResult solve_depth3(const Dataset& ds, const SolveOptions& opts = {}) {
  const auto fi = build_feature_index(ds);
  return solve_depth3(ds, fi, opts);
}

}  // namespace shallowtree
