#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <mutex>
#include <optional>
#include <thread>
#include <utility>
#include <vector>

#include "shallowtree/bounds.hpp"
#include "shallowtree/dataset.hpp"
#include "shallowtree/error.hpp"
#include "shallowtree/heuristics.hpp"
#include "shallowtree/loss.hpp"
#include "shallowtree/tree.hpp"

namespace shallowtree {

struct SearchBox {
  std::size_t f0 = 0;
  std::uint32_t a = 0;
  std::uint32_t b = 0;
  std::vector<std::size_t> F1;
  std::vector<std::size_t> F2;
  double lower_bound = 0.0;  // valid lower bound on every tree in the box
};

struct AliveSet {
  std::vector<SearchBox> boxes;
  int iteration = 0;
};

enum class SolveStatus { kOptimal, kTimeLimit };

inline const char* to_string(SolveStatus s) { return s == SolveStatus::kOptimal ? "optimal" : "timeLimit"; }

struct SolveOptions {
  std::uint32_t s = 3;
  BoundKind bound = BoundKind::kW1;
  double prune_tolerance = 1e-10;          // regression only
  std::optional<double> time_limit;        // seconds
  unsigned workers = 1;
  std::size_t max_alive = 0;               // depth 3 only; 0 means unlimited
};

struct SolveResult {
  Tree tree;
  double objective = 0.0;
  double lower_bound = 0.0;
  SolveStatus status = SolveStatus::kOptimal;
  int iterations = 0;
  std::uint64_t boxes_explored = 0;
  std::uint64_t boxes_pruned = 0;
};

/// One box per root feature over its full threshold range and all child features.
inline AliveSet init_alive(const Dataset& ds, const FeatureIndex& fi) {
  (void)ds;
  AliveSet al;
  std::vector<std::size_t> all(fi.p());
  for (std::size_t f = 0; f < fi.p(); ++f) all[f] = f;
  for (std::size_t f0 = 0; f0 < fi.p(); ++f0) al.boxes.push_back(SearchBox{f0, 0, fi.u(f0), all, all, 0.0});
  return al;
}

namespace detail {

/// True when `lower` cannot rule out a tree of loss `upper`.
inline bool keeps(double lower, double upper, bool exact, double tol) {
  if (exact) return lower <= upper;
  return lower <= upper * (1.0 + tol) + tol;
}

/// s' = floor(0.6 n s / len), clamped to [1, len]; 0 means "use W0".
inline std::uint32_t inner_quantiles(std::size_t n, std::uint32_t s, std::uint32_t len) {
  if (len == 0) return 0;
  const double raw = std::floor(0.6 * static_cast<double>(n) * static_cast<double>(s) / static_cast<double>(len));
  if (raw < 1.0) return 0;
  return static_cast<std::uint32_t>(std::min<double>(raw, len));
}

/// Lower-bound matrix with the dynamic s' rule applied.
template <class Loss>
PairMatrix bound_matrix(BoundEngine<Loss>& eng, const SampleBase& base, std::size_t g, std::uint32_t a,
                        std::uint32_t b, const SolveOptions& opts, std::span<const std::size_t> F1,
                        std::span<const std::size_t> F2) {
  BoundKind kind = opts.bound;
  std::uint32_t s_inner = 1;
  if (kind == BoundKind::kW1) {
    s_inner = inner_quantiles(base.ids.size(), opts.s, b - a);
    if (s_inner == 0) kind = BoundKind::kW0;
  }
  return eng.lower_matrix(base, g, a, b, kind, s_inner, F1, F2);
}

using Clock = std::chrono::steady_clock;

struct Deadline {
  std::optional<Clock::time_point> at;
  explicit Deadline(const std::optional<double>& seconds) {
    if (seconds) at = Clock::now() + std::chrono::duration_cast<Clock::duration>(std::chrono::duration<double>(*seconds));
  }
  bool passed() const { return at && Clock::now() >= *at; }
};

/// Best-so-far solution shared between workers.
class Incumbent {
 public:
  Incumbent(double value, Tree tree) : value_(value), tree_(std::move(tree)) {}
  double value() const {
    std::lock_guard lock(mu_);
    return value_;
  }
  bool offer(double value, const Tree& tree) {
    std::lock_guard lock(mu_);
    if (!(value < value_)) return false;
    value_ = value;
    tree_ = tree;
    return true;
  }
  Tree tree() const {
    std::lock_guard lock(mu_);
    return tree_;
  }

 private:
  mutable std::mutex mu_;
  double value_;
  Tree tree_;
};

/// Runs fn(worker, index) for every index in [0, count) on `workers` threads.
/// Returns false if `stop` fired before every index was started.
template <class Fn>
bool run_level(std::size_t count, unsigned workers, const Deadline& deadline, Fn&& fn) {
  std::atomic<std::size_t> next{0};
  std::atomic<bool> stopped{false};
  auto body = [&](unsigned w) {
    for (;;) {
      if (deadline.passed()) {
        stopped = true;
        return;
      }
      const std::size_t k = next.fetch_add(1);
      if (k >= count) return;
      fn(w, k);
    }
  };
  if (workers <= 1 || count <= 1) {
    body(0);
  } else {
    std::vector<std::thread> pool;
    const unsigned used = static_cast<unsigned>(std::min<std::size_t>(workers, count));
    for (unsigned w = 0; w < used; ++w) pool.emplace_back(body, w);
    for (auto& t : pool) t.join();
  }
  return !stopped;
}

inline double cell_min(const PairMatrix& m) {
  double v = std::numeric_limits<double>::infinity();
  for (double x : m.value) v = std::min(v, x);
  return v;
}

}  // namespace detail

struct BoxOutcome {
  std::vector<SearchBox> children;
  bool abandoned = false;  // deadline hit mid-box; children are incomplete
  std::optional<std::pair<double, Tree>> improved;
  std::uint64_t pruned = 0;  // child boxes discarded by the bound
};

/// Quantile step on a box with b - a > s: tries the s+1 equi-spaced root
/// thresholds as an upper bound, then keeps for each sub-interval only the
/// child features whose lower bound can still reach the incumbent.
template <class Loss>
BoxOutcome process_box(BoundEngine<Loss>& eng, const SearchBox& box, double U, const SolveOptions& opts,
                       const detail::Deadline* deadline = nullptr) {
  require(box.b - box.a > opts.s, "process_box needs b - a > s");
  const Dataset& ds = eng.dataset();
  const bool exact = ds.is_classification();
  const SampleBase whole = eng.whole();
  BoxOutcome out;

  // Step 1: upper bound at the equi-spaced thresholds.
  auto table = eng.scan(whole, box.f0, BoundEngine<Loss>::quantile_configs(box.a, box.b, opts.s), box.F1, box.F2);
  auto vm = BoundEngine<Loss>::min_pairs(table);
  double u_best = std::numeric_limits<double>::infinity();
  std::size_t bi = 0, bj = 0;
  for (std::size_t i = 0; i < vm.rows; ++i) {
    for (std::size_t j = 0; j < vm.cols; ++j) {
      if (vm.at(i, j) < u_best) {
        u_best = vm.at(i, j);
        bi = i;
        bj = j;
      }
    }
  }
  if (u_best < U) {
    auto plan = BoundEngine<Loss>::witness_plan(box.f0, table, vm, bi, bj);
    out.improved.emplace(u_best, materialize(plan, ds, eng.index(), all_samples(ds.n())));
  }
  const double u_star = std::min(U, u_best);

  // Step 2: prune child features per sub-interval.
  const auto t = equi_spaced(box.a, box.b, opts.s);
  for (std::uint32_t j = 1; j <= opts.s; ++j) {
    if (deadline && deadline->passed()) {
      out.abandoned = true;
      out.children.clear();
      return out;
    }
    auto wm = detail::bound_matrix(eng, whole, box.f0, t[j - 1], t[j], opts, box.F1, box.F2);
    std::vector<double> row_min(wm.rows, std::numeric_limits<double>::infinity());
    std::vector<double> col_min(wm.cols, std::numeric_limits<double>::infinity());
    for (std::size_t i = 0; i < wm.rows; ++i) {
      for (std::size_t k = 0; k < wm.cols; ++k) {
        row_min[i] = std::min(row_min[i], wm.at(i, k));
        col_min[k] = std::min(col_min[k], wm.at(i, k));
      }
    }
    SearchBox child{box.f0, t[j - 1], t[j], {}, {}, 0.0};
    std::vector<std::size_t> rows, cols;
    for (std::size_t i = 0; i < wm.rows; ++i) {
      if (detail::keeps(row_min[i], u_star, exact, opts.prune_tolerance)) {
        child.F1.push_back(box.F1[i]);
        rows.push_back(i);
      }
    }
    for (std::size_t k = 0; k < wm.cols; ++k) {
      if (detail::keeps(col_min[k], u_star, exact, opts.prune_tolerance)) {
        child.F2.push_back(box.F2[k]);
        cols.push_back(k);
      }
    }
    if (child.F1.empty() || child.F2.empty()) {
      ++out.pruned;
      continue;
    }
    double lb = std::numeric_limits<double>::infinity();
    for (auto i : rows) {
      for (auto k : cols) lb = std::min(lb, wm.at(i, k));
    }
    child.lower_bound = std::max(box.lower_bound, lb);
    out.children.push_back(std::move(child));
  }
  return out;
}

/// Exact minimum over a short box: every threshold in [a, b], every listed pair.
template <class Loss>
std::pair<double, Tree> resolve_box(BoundEngine<Loss>& eng, const SearchBox& box) {
  const Dataset& ds = eng.dataset();
  auto table = eng.scan(eng.whole(), box.f0, BoundEngine<Loss>::sweep_configs(box.a, box.b), box.F1, box.F2);
  auto m = BoundEngine<Loss>::min_pairs(table);
  double best = std::numeric_limits<double>::infinity();
  std::size_t bi = 0, bj = 0;
  for (std::size_t i = 0; i < m.rows; ++i) {
    for (std::size_t j = 0; j < m.cols; ++j) {
      if (m.at(i, j) < best) {
        best = m.at(i, j);
        bi = i;
        bj = j;
      }
    }
  }
  auto plan = BoundEngine<Loss>::witness_plan(box.f0, table, m, bi, bj);
  return {best, materialize(plan, ds, eng.index(), all_samples(ds.n()))};
}

template <class Loss>
SolveResult solve_depth2_with(const Dataset& ds, const FeatureIndex& fi, const SolveOptions& opts) {
  require(opts.s >= 2, "s must be at least 2");
  const detail::Deadline deadline(opts.time_limit);
  auto greedy = greedy_tree(ds, fi, 2);
  detail::Incumbent inc(greedy.loss, greedy.tree);
  const bool exact = ds.is_classification();

  SolveResult res;
  AliveSet alive = init_alive(ds, fi);
  const unsigned workers = std::max(1u, opts.workers);
  std::vector<BoundEngine<Loss>> engines;
  engines.reserve(workers);
  for (unsigned w = 0; w < workers; ++w) engines.emplace_back(ds, fi);

  bool timed_out = false;
  double pending_lb = std::numeric_limits<double>::infinity();
  while (!alive.boxes.empty()) {
    ++alive.iteration;
    const std::size_t count = alive.boxes.size();
    std::vector<std::vector<SearchBox>> produced(count);
    std::vector<char> done(count, 0);
    std::atomic<std::uint64_t> explored{0}, pruned{0};
    const bool finished = detail::run_level(count, workers, deadline, [&](unsigned w, std::size_t k) {
      auto& eng = engines[w];
      const auto& box = alive.boxes[k];
      const double U = inc.value();
      if (!detail::keeps(box.lower_bound, U, exact, opts.prune_tolerance)) {
        ++pruned;
      } else if (box.b - box.a <= opts.s) {
        auto [v, tree] = resolve_box(eng, box);
        inc.offer(v, tree);
      } else {
        auto outcome = process_box(eng, box, U, opts, &deadline);
        if (outcome.improved) inc.offer(outcome.improved->first, outcome.improved->second);
        if (outcome.abandoned) return;
        pruned += outcome.pruned;
        produced[k] = std::move(outcome.children);
      }
      ++explored;
      done[k] = 1;
    });
    res.boxes_explored += explored;
    res.boxes_pruned += pruned;
    std::vector<SearchBox> next;
    bool incomplete = !finished;
    for (std::size_t k = 0; k < count; ++k) {
      if (!done[k]) {
        pending_lb = std::min(pending_lb, alive.boxes[k].lower_bound);
        incomplete = true;
      }
      for (auto& c : produced[k]) next.push_back(std::move(c));
    }
    alive.boxes = std::move(next);
    if (incomplete || (deadline.passed() && !alive.boxes.empty())) {
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
    for (const auto& b : alive.boxes) lb = std::min(lb, b.lower_bound);
    res.lower_bound = std::min(lb, res.objective);
  } else {
    res.lower_bound = res.objective;
  }
  return res;
}

/// Optimal depth-2 tree by quantile branch-and-bound.
inline SolveResult solve_depth2(const Dataset& ds, const FeatureIndex& fi, const SolveOptions& opts = {}) {
  return with_loss(ds, [&](auto loss) { return solve_depth2_with<decltype(loss)>(ds, fi, opts); });
}

inline SolveResult solve_depth2(const Dataset& ds, const SolveOptions& opts = {}) {
  const auto fi = build_feature_index(ds);
  return solve_depth2(ds, fi, opts);
}

}  // namespace shallowtree
