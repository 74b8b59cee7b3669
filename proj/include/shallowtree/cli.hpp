#pragma once

#include <charconv>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "shallowtree/bnb2.hpp"
#include "shallowtree/bnb3.hpp"
#include "shallowtree/dataset.hpp"
#include "shallowtree/error.hpp"
#include "shallowtree/heuristics.hpp"
#include "shallowtree/synthetic.hpp"
#include "shallowtree/tree.hpp"

namespace shallowtree::cli {

enum ExitCode : int {
  kExitOptimal = 0,
  kExitInternal = 1,
  kExitTimeLimit = 2,
  kExitUsage = 3,
  kExitBudget = 4,
};

/// Shortest decimal text that reads back to the same double.
inline std::string fmt(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return ec == std::errc() ? std::string(buf, ptr) : std::string("nan");
}

inline std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream in(s);
  while (std::getline(in, cur, ',')) {
    if (!cur.empty()) out.push_back(cur);
  }
  return out;
}

inline Task parse_task(const std::string& s) {
  return s == "regression" ? Task::kRegression : Task::kClassification;
}

inline BoundKind parse_bound(const std::string& s) {
  if (s == "w0") return BoundKind::kW0;
  if (s == "w2") return BoundKind::kW2;
  if (s == "l2") return BoundKind::kL2;
  return BoundKind::kW1;
}

/// Ordered key=value lines; rendered as aligned text or raw lines.
class Report {
 public:
  void add(const std::string& key, const std::string& value) { rows_.emplace_back(key, value); }
  void add(const std::string& key, double value) { add(key, fmt(value)); }

  void write(std::ostream& out, bool machine) const {
    std::size_t width = 0;
    for (const auto& [k, v] : rows_) width = std::max(width, k.size());
    for (const auto& [k, v] : rows_) {
      if (machine) {
        out << k << '=' << v << '\n';
      } else {
        out << k << std::string(width - k.size() + 2, ' ') << v << '\n';
      }
    }
  }

 private:
  std::vector<std::pair<std::string, std::string>> rows_;
};

struct DataFlags {
  std::string csv;
  std::string task = "classification";
  std::string target;
};

inline void add_data_flags(CLI::App* cmd, DataFlags& f, bool need_task) {
  cmd->add_option("--csv", f.csv, "Input CSV with a header row")->required()->check(CLI::ExistingFile);
  auto* t = cmd->add_option("--task", f.task, "classification or regression")
                ->check(CLI::IsMember({"classification", "regression"}));
  if (need_task) t->required();
  cmd->add_option("--target", f.target, "Target column name(s), comma separated")->required();
}

inline Dataset load(const DataFlags& f) {
  return load_csv(f.csv, CsvSchema{parse_task(f.task), split_list(f.target)});
}

inline void write_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write '" + path + "'");
  out << text;
  if (!out) throw DataError("cannot write '" + path + "'");
}

inline double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

inline SolveResult solve(const Dataset& ds, const FeatureIndex& fi, int depth, const SolveOptions& opts) {
  return depth == 2 ? solve_depth2(ds, fi, opts) : solve_depth3(ds, fi, opts);
}

/// Entry point shared by the executable and the tests.
inline int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Optimal shallow decision trees by quantile branch-and-bound"};
  app.name("shallowtree");
  app.require_subcommand(1);

  // train
  DataFlags train_data;
  int train_depth = 2;
  std::uint32_t train_s = 3;
  std::string train_bound = "w1";
  std::optional<double> time_limit;
  std::string train_out;
  std::string train_report = "text";
  unsigned train_workers = 1;
  std::size_t max_alive = 0;
  auto* train = app.add_subcommand("train", "Fit an optimal depth-2 or depth-3 tree");
  add_data_flags(train, train_data, true);
  train->add_option("--depth", train_depth, "Tree depth")->required()->check(CLI::IsMember({2, 3}));
  train->add_option("--s", train_s, "Quantiles per refinement")->check(CLI::Range(2u, 1000000u));
  train->add_option("--bound", train_bound, "Lower bound: w0, w1, w2 or l2")
      ->check(CLI::IsMember({"w0", "w1", "w2", "l2"}));
  train->add_option("--time-limit", time_limit, "Seconds before returning the incumbent")
      ->check(CLI::NonNegativeNumber);
  train->add_option("--out", train_out, "Write the model JSON here");
  train->add_option("--report", train_report, "text or machine")->check(CLI::IsMember({"text", "machine"}));
  train->add_option("--workers", train_workers, "Parallel workers (1 is deterministic)")->check(CLI::Range(1u, 1024u));
  train->add_option("--max-alive", max_alive, "Depth 3: cap on alive tuples (0 = none)");

  // oracle
  DataFlags oracle_data;
  int oracle_depth = 2;
  double budget = default_oracle_budget();
  std::string oracle_out;
  std::string oracle_report = "text";
  auto* oracle = app.add_subcommand("oracle", "Exhaustive search (small instances only)");
  add_data_flags(oracle, oracle_data, true);
  oracle->add_option("--depth", oracle_depth, "Tree depth")->required()->check(CLI::IsMember({2, 3}));
  oracle->add_option("--budget", budget, "Refuse when (n*p)^depth exceeds this")->check(CLI::PositiveNumber);
  oracle->add_option("--out", oracle_out, "Write the model JSON here");
  oracle->add_option("--report", oracle_report, "text or machine")->check(CLI::IsMember({"text", "machine"}));

  // eval
  std::string eval_model;
  DataFlags eval_data;
  std::string eval_report = "text";
  auto* evalc = app.add_subcommand("eval", "Score a saved model on a CSV");
  evalc->add_option("--model", eval_model, "Model JSON")->required()->check(CLI::ExistingFile);
  add_data_flags(evalc, eval_data, false);
  evalc->add_option("--report", eval_report, "text or machine")->check(CLI::IsMember({"text", "machine"}));

  // bench
  std::string bench_csv;
  std::string bench_task = "classification";
  std::string bench_target;
  int bench_depth = 2;
  std::string bench_bounds = "w0,w1,w2,l2";
  std::uint64_t seed = 0;
  std::size_t bench_n = 2000;
  std::size_t bench_p = 5;
  std::uint32_t bench_s = 3;
  std::string bench_report = "text";
  auto* bench = app.add_subcommand("bench", "Compare lower bounds on one dataset");
  bench->add_option("--csv", bench_csv, "Input CSV (synthetic data when omitted)")->check(CLI::ExistingFile);
  bench->add_option("--task", bench_task, "classification or regression")
      ->check(CLI::IsMember({"classification", "regression"}));
  bench->add_option("--target", bench_target, "Target column name(s), comma separated");
  bench->add_option("--depth", bench_depth, "Tree depth")->check(CLI::IsMember({2, 3}));
  bench->add_option("--bounds", bench_bounds, "Comma separated subset of w0,w1,w2,l2");
  bench->add_option("--seed", seed, "Seed for synthetic data");
  bench->add_option("--n", bench_n, "Synthetic sample count")->check(CLI::PositiveNumber);
  bench->add_option("--p", bench_p, "Synthetic feature count")->check(CLI::PositiveNumber);
  bench->add_option("--s", bench_s, "Quantiles per refinement")->check(CLI::Range(2u, 1000000u));
  bench->add_option("--report", bench_report, "text or machine")->check(CLI::IsMember({"text", "machine"}));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err) == 0 ? kExitOptimal : kExitUsage;
  }

  try {
    if (train->parsed()) {
      const auto start = std::chrono::steady_clock::now();
      const Dataset ds = load(train_data);
      const auto fi = build_feature_index(ds);
      SolveOptions opts;
      opts.s = train_s;
      opts.bound = parse_bound(train_bound);
      opts.time_limit = time_limit;
      opts.workers = train_workers;
      opts.max_alive = max_alive;
      const auto res = solve(ds, fi, train_depth, opts);
      if (!train_out.empty()) write_file(train_out, serialize(res.tree));
      Report r;
      r.add("status", to_string(res.status));
      r.add("objective", res.objective);
      r.add("lower_bound", res.lower_bound);
      r.add("iterations", std::to_string(res.iterations));
      r.add("boxes_explored", std::to_string(res.boxes_explored));
      r.add("boxes_pruned", std::to_string(res.boxes_pruned));
      r.add("wall_time_s", seconds_since(start));
      r.add("depth", std::to_string(train_depth));
      r.add("bound", to_string(opts.bound));
      r.add("s", std::to_string(opts.s));
      r.add("csv", train_data.csv);
      r.add("model", train_out.empty() ? "-" : train_out);
      r.write(out, train_report == "machine");
      return res.status == SolveStatus::kOptimal ? kExitOptimal : kExitTimeLimit;
    }
    if (oracle->parsed()) {
      const auto start = std::chrono::steady_clock::now();
      const Dataset ds = load(oracle_data);
      const auto fi = build_feature_index(ds);
      const auto res = brute_force(ds, fi, oracle_depth, budget);
      if (!oracle_out.empty()) write_file(oracle_out, serialize(res.tree));
      Report r;
      r.add("status", "optimal");
      r.add("objective", res.objective);
      r.add("wall_time_s", seconds_since(start));
      r.add("depth", std::to_string(oracle_depth));
      r.add("csv", oracle_data.csv);
      r.add("model", oracle_out.empty() ? "-" : oracle_out);
      r.write(out, oracle_report == "machine");
      return kExitOptimal;
    }
    if (evalc->parsed()) {
      std::ifstream in(eval_model, std::ios::binary);
      std::ostringstream buf;
      buf << in.rdbuf();
      const Tree tree = deserialize(buf.str());
      DataFlags flags = eval_data;
      flags.task = to_string(tree.task);
      const Dataset ds = load(flags);
      const double loss = evaluate(tree, ds);
      Report r;
      r.add("loss", loss);
      r.add("n", std::to_string(ds.n()));
      if (ds.is_classification()) {
        const auto correct = static_cast<std::size_t>(ds.n() - static_cast<std::size_t>(loss));
        r.add("correct", std::to_string(correct));
        r.add("accuracy", static_cast<double>(correct) / static_cast<double>(ds.n()));
      }
      r.write(out, eval_report == "machine");
      return kExitOptimal;
    }
    if (bench->parsed()) {
      std::vector<BoundKind> kinds;
      for (const auto& name : split_list(bench_bounds)) {
        if (name != "w0" && name != "w1" && name != "w2" && name != "l2") {
          err << "error: --bounds: unknown bound '" << name << "'\n";
          return kExitUsage;
        }
        kinds.push_back(parse_bound(name));
      }
      if (kinds.empty()) {
        err << "error: --bounds: no bound given\n";
        return kExitUsage;
      }
      Dataset ds = [&] {
        if (bench_csv.empty()) return make_synthetic(bench_n, bench_p, parse_task(bench_task), seed);
        if (bench_target.empty()) throw CLI::RequiredError("--target");
        return load(DataFlags{bench_csv, bench_task, bench_target});
      }();
      const auto fi = build_feature_index(ds);
      Report r;
      std::optional<double> first;
      bool agree = true;
      for (auto kind : kinds) {
        SolveOptions opts;
        opts.s = bench_s;
        opts.bound = kind;
        const auto start = std::chrono::steady_clock::now();
        const auto res = solve(ds, fi, bench_depth, opts);
        const double secs = seconds_since(start);
        const std::string k = to_string(kind);
        r.add(k + ".objective", res.objective);
        r.add(k + ".wall_time_s", secs);
        r.add(k + ".iterations", std::to_string(res.iterations));
        r.add(k + ".boxes_explored", std::to_string(res.boxes_explored));
        if (!first) {
          first = res.objective;
        } else if (ds.is_classification() ? res.objective != *first
                                          : std::abs(res.objective - *first) > 1e-9 * (1.0 + std::abs(*first))) {
          agree = false;
        }
      }
      r.add("agree", agree ? "yes" : "no");
      r.write(out, bench_report == "machine");
      if (!agree) {
        err << "error: objectives differ across bounds\n";
        return kExitInternal;
      }
      return kExitOptimal;
    }
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const BudgetExceeded& e) {
    err << "error: " << e.what() << '\n';
    return kExitBudget;
  } catch (const DataError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const ModelFormatError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const ContractViolation& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << '\n';
    return kExitInternal;
  }
  return kExitUsage;
}

}  // namespace shallowtree::cli
