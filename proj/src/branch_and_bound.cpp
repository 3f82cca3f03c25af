#include "ecodrive/branch_and_bound.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <memory>
#include <queue>
#include <cstdio>
#include <cstdlib>

#include "ecodrive/lp_simplex.hpp"

namespace ecodrive::solver {

namespace {

using mip::kInf;

struct BoundChange {
  int col;
  double lb, ub;
};

struct Node {
  long id = 0;
  double bound = -kInf;  // parent LP objective (lower bound for children)
  int depth = 0;
  std::vector<BoundChange> changes;  // cumulative from root
  std::shared_ptr<const lp::Basis> warm_basis;
};

struct NodeOrder {
  bool operator()(const std::shared_ptr<Node>& a, const std::shared_ptr<Node>& b) const {
    if (a->bound != b->bound) return a->bound > b->bound;  // min-heap on bound
    return a->id > b->id;
  }
};

lp::LpProblem to_lp(const mip::ProblemSpec& spec) {
  lp::LpProblem p;
  const int n = spec.n_vars();
  const int m = spec.n_rows();
  p.obj.resize(n);
  p.col_lb.resize(n);
  p.col_ub.resize(n);
  for (int j = 0; j < n; ++j) {
    p.obj[j] = spec.vars[j].obj;
    p.col_lb[j] = spec.vars[j].lb;
    p.col_ub[j] = spec.vars[j].ub;
  }
  p.row_lb.resize(m);
  p.row_ub.resize(m);
  // Build CSC by transposing the row-wise spec.
  std::vector<std::vector<std::pair<int, double>>> cols(n);
  for (int i = 0; i < m; ++i) {
    p.row_lb[i] = spec.rows[i].lb;
    p.row_ub[i] = spec.rows[i].ub;
    for (const auto& e : spec.rows[i].entries) cols[e.var].emplace_back(i, e.coef);
  }
  p.a.n_rows = m;
  for (int j = 0; j < n; ++j) p.a.add_column(cols[j]);
  p.obj_offset = spec.obj_offset;
  return p;
}

struct Frac {
  int col = -1;
  double score = 0.0;
  double value = 0.0;
};

Frac most_fractional_binary(const mip::ProblemSpec& spec, const std::vector<double>& x,
                            double tol) {
  Frac best;
  for (int j = 0; j < spec.n_vars(); ++j) {
    if (!spec.vars[j].is_binary) continue;
    const double f = x[j] - std::floor(x[j]);
    const double dist = std::min(f, 1.0 - f);
    if (dist > tol && dist > best.score) {
      best.score = dist;
      best.col = j;
      best.value = x[j];
    }
  }
  return best;
}

struct SosViolation {
  int set = -1;
  double violation = 0.0;
  int split = 0;  // breakpoint index for the set split
};

SosViolation most_violated_sos2(const mip::ProblemSpec& spec, const std::vector<double>& x,
                                double tol) {
  SosViolation best;
  for (size_t s = 0; s < spec.sos2_sets.size(); ++s) {
    const auto& vars = spec.sos2_sets[s].vars;
    const int len = static_cast<int>(vars.size());
    int first = -1, last = -1;
    double total = 0.0, centroid = 0.0, best_pair = 0.0;
    for (int i = 0; i < len; ++i) {
      const double v = x[vars[i]];
      if (v > tol) {
        if (first < 0) first = i;
        last = i;
      }
      total += std::max(0.0, v);
      centroid += std::max(0.0, v) * i;
    }
    if (first < 0 || last - first <= 1 || total <= tol) continue;
    for (int i = 0; i + 1 < len; ++i) {
      best_pair = std::max(best_pair, std::max(0.0, x[vars[i]]) + std::max(0.0, x[vars[i + 1]]));
    }
    const double viol = 1.0 - best_pair / total;
    if (viol > best.violation) {
      best.violation = viol;
      best.set = static_cast<int>(s);
      int split = static_cast<int>(std::lround(centroid / total));
      split = std::clamp(split, first + 1, last - 1);
      best.split = split;
    }
  }
  return best;
}

class BranchAndBound {
 public:
  BranchAndBound(const mip::ProblemSpec& spec, const SolverLimits& limits,
                 const std::vector<double>* warm_start, const PrimalHeuristic& heuristic,
                 const lp::Basis* root_basis, lp::Basis* out_root_basis)
      : spec_(spec), limits_(limits), heuristic_(heuristic), root_basis_(root_basis),
        out_root_basis_(out_root_basis), lp_(to_lp(spec)), solver_(lp_) {
    if (warm_start != nullptr) seed_incumbent(*warm_start);
  }

  MipResult run();

 private:
  void seed_incumbent(const std::vector<double>& x) {
    if (static_cast<int>(x.size()) != spec_.n_vars()) return;
    if (spec_.max_violation(x) > 1e-6) return;
    if (!spec_.integer_feasible(x, limits_.int_tol)) return;
    const double obj = spec_.objective_value(x);
    if (!has_incumbent_ || obj < incumbent_obj_) {
      has_incumbent_ = true;
      incumbent_obj_ = obj;
      incumbent_ = x;
    }
  }

  bool out_of_budget(MipStatus* why) {
    if (limits_.time_budget_s > 0.0) {
      const double el = std::chrono::duration<double>(clock_now() - start_).count();
      if (el > limits_.time_budget_s) {
        *why = MipStatus::kTimeLimit;
        return true;
      }
    }
    if (limits_.work_limit > 0 && lp_iterations_ > limits_.work_limit) {
      *why = MipStatus::kWorkLimit;
      return true;
    }
    if (limits_.node_limit > 0 && nodes_ >= limits_.node_limit) {
      *why = MipStatus::kNodeLimit;
      return true;
    }
    return false;
  }

  static std::chrono::steady_clock::time_point clock_now() {
    return std::chrono::steady_clock::now();
  }

  void apply_changes(const std::vector<BoundChange>& changes) {
    for (const auto& c : changes) solver_.set_col_bounds(c.col, c.lb, c.ub);
  }

  void revert_changes(const std::vector<BoundChange>& changes) {
    for (const auto& c : changes) {
      solver_.set_col_bounds(c.col, spec_.vars[c.col].lb, spec_.vars[c.col].ub);
    }
  }

  // Children of a node, cheapest-looking first for the plunge.
  std::vector<std::shared_ptr<Node>> branch(const Node& node, const std::vector<double>& x,
                                            std::shared_ptr<const lp::Basis> basis,
                                            double node_bound);

  const mip::ProblemSpec& spec_;
  SolverLimits limits_;
  PrimalHeuristic heuristic_;
  const lp::Basis* root_basis_ = nullptr;
  lp::Basis* out_root_basis_ = nullptr;
  lp::LpProblem lp_;
  lp::SimplexSolver solver_;

  std::priority_queue<std::shared_ptr<Node>, std::vector<std::shared_ptr<Node>>, NodeOrder> open_;
  bool has_incumbent_ = false;
  double incumbent_obj_ = kInf;
  std::vector<double> incumbent_;
  long nodes_ = 0;
  long lp_iterations_ = 0;
  long next_id_ = 1;
  std::chrono::steady_clock::time_point start_;
};

std::vector<std::shared_ptr<Node>> BranchAndBound::branch(
    const Node& node, const std::vector<double>& x, std::shared_ptr<const lp::Basis> basis,
    double node_bound) {
  std::vector<std::shared_ptr<Node>> kids;
  const Frac frac = most_fractional_binary(spec_, x, limits_.int_tol);
  if (frac.col >= 0) {
    const int preferred = frac.value >= 0.5 ? 1 : 0;
    for (int pass = 0; pass < 2; ++pass) {
      const int fix = pass == 0 ? preferred : 1 - preferred;
      auto kid = std::make_shared<Node>();
      kid->id = next_id_++;
      kid->bound = node_bound;
      kid->depth = node.depth + 1;
      kid->changes = node.changes;
      kid->changes.push_back({frac.col, static_cast<double>(fix), static_cast<double>(fix)});
      kid->warm_basis = basis;
      kids.push_back(std::move(kid));
    }
    return kids;
  }
  const SosViolation sos = most_violated_sos2(spec_, x, limits_.int_tol);
  if (sos.set >= 0) {
    const auto& vars = spec_.sos2_sets[sos.set].vars;
    // Left child: zero weights strictly right of the split breakpoint.
    // Right child: zero weights strictly left of it.
    for (int pass = 0; pass < 2; ++pass) {
      auto kid = std::make_shared<Node>();
      kid->id = next_id_++;
      kid->bound = node_bound;
      kid->depth = node.depth + 1;
      kid->changes = node.changes;
      for (int i = 0; i < static_cast<int>(vars.size()); ++i) {
        const bool zero = pass == 0 ? i > sos.split : i < sos.split;
        if (zero) kid->changes.push_back({vars[i], 0.0, 0.0});
      }
      kid->warm_basis = basis;
      kids.push_back(std::move(kid));
    }
  }
  return kids;
}

MipResult BranchAndBound::run() {
  start_ = clock_now();
  MipResult res;

  auto root = std::make_shared<Node>();
  root->id = 0;
  root->bound = -kInf;
  open_.push(root);

  double best_open_bound = -kInf;
  MipStatus stop_reason = MipStatus::kOptimal;
  bool stopped = false;

  // Plunge stack processed before returning to the best-first heap.
  std::vector<std::shared_ptr<Node>> plunge;

  while (true) {
    std::shared_ptr<Node> node;
    if (!plunge.empty()) {
      node = plunge.back();
      plunge.pop_back();
    } else if (!open_.empty()) {
      node = open_.top();
      open_.pop();
    } else {
      break;
    }

    // Global bound: everything still open is at least this good.
    double frontier = node->bound;
    if (!open_.empty()) frontier = std::min(frontier, open_.top()->bound);
    for (const auto& p : plunge) frontier = std::min(frontier, p->bound);
    best_open_bound = frontier;

    if (has_incumbent_) {
      const double gap = (incumbent_obj_ - best_open_bound) /
                         std::max(1.0, std::abs(incumbent_obj_));
      if (best_open_bound > -kInf && gap <= limits_.gap_tol) {
        stopped = true;
        stop_reason = gap <= 1e-9 ? MipStatus::kOptimal : MipStatus::kGapLimit;
        break;
      }
      if (node->bound >= incumbent_obj_ - 1e-9) continue;  // pruned by bound
    }

    MipStatus why;
    if (out_of_budget(&why)) {
      stopped = true;
      stop_reason = why;
      break;
    }

    ++nodes_;
    apply_changes(node->changes);
    if (limits_.work_limit > 0) {
      solver_.set_iteration_budget(std::max(200L, limits_.work_limit - lp_iterations_));
    }
    lp::LpResult rel;
    if (node->warm_basis) {
      rel = solver_.solve_from(*node->warm_basis);
    } else if (node->id == 0 && root_basis_ != nullptr) {
      rel = solver_.solve_from(*root_basis_);
    } else if (node->id == 0) {
      rel = solver_.solve();
    } else {
      rel = solver_.solve_from(solver_.basis());
    }
    revert_changes(node->changes);
    if (std::getenv("ECODRIVE_BB_DEBUG") != nullptr) {
      std::fprintf(stderr, "node %ld depth %d iters %ld status %d obj %.4f changes %zu\n",
                   node->id, node->depth, solver_.iterations() - lp_iterations_,
                   (int)rel.status, rel.objective, node->changes.size());
    }
    lp_iterations_ = solver_.iterations();
    if (node->id == 0 && out_root_basis_ != nullptr && rel.status == lp::LpStatus::kOptimal) {
      *out_root_basis_ = solver_.basis();
    }

    if (rel.status == lp::LpStatus::kInfeasible) continue;
    if (rel.status == lp::LpStatus::kUnbounded) {
      // The relaxation admits unbounded descent; report and stop.
      res.status = MipStatus::kNoIncumbent;
      res.best_bound = -kInf;
      res.nodes = nodes_;
      res.lp_iterations = lp_iterations_;
      res.solve_seconds = std::chrono::duration<double>(clock_now() - start_).count();
      return res;
    }
    if (rel.status != lp::LpStatus::kOptimal) continue;  // numerical trouble: drop node

    const double bound = rel.objective;
    if (has_incumbent_ && bound >= incumbent_obj_ - 1e-9) continue;

    if (spec_.integer_feasible(rel.x, limits_.int_tol)) {
      if (!has_incumbent_ || bound < incumbent_obj_) {
        has_incumbent_ = true;
        incumbent_obj_ = bound;
        incumbent_ = rel.x;
      }
      continue;
    }

    if (heuristic_ && (node->depth <= 1 || nodes_ % 8 == 1)) {
      std::vector<double> candidate;
      if (heuristic_(rel.x, &candidate)) seed_incumbent(candidate);
    }

    auto basis = std::make_shared<lp::Basis>(solver_.basis());
    auto kids = branch(*node, rel.x, basis, bound);
    if (kids.empty()) {
      // Fractional but nothing to branch on: numerically integral.
      if (!has_incumbent_ || bound < incumbent_obj_) {
        has_incumbent_ = true;
        incumbent_obj_ = bound;
        incumbent_ = rel.x;
      }
      continue;
    }
    // Depth-first plunge on the preferred child, sibling to the heap.
    plunge.push_back(kids[0]);
    for (size_t i = 1; i < kids.size(); ++i) open_.push(kids[i]);
  }

  if (!stopped) {
    best_open_bound = has_incumbent_ ? incumbent_obj_ : kInf;
    stop_reason = has_incumbent_ ? MipStatus::kOptimal : MipStatus::kInfeasible;
  }

  res.nodes = nodes_;
  res.lp_iterations = lp_iterations_;
  res.solve_seconds = std::chrono::duration<double>(clock_now() - start_).count();
  res.has_incumbent = has_incumbent_;
  if (has_incumbent_) {
    res.values = incumbent_;
    res.objective = incumbent_obj_;
    res.best_bound = stopped ? best_open_bound : incumbent_obj_;
    res.best_bound = std::min(res.best_bound, incumbent_obj_);
    res.rel_gap = (res.objective - res.best_bound) / std::max(1.0, std::abs(res.objective));
    res.status = stop_reason;
  } else {
    // Limits hit before any integer-feasible point: keep the limit status,
    // has_incumbent stays false.
    res.status = stopped ? stop_reason : MipStatus::kInfeasible;
    if (stopped && stop_reason == MipStatus::kOptimal) res.status = MipStatus::kNoIncumbent;
    res.best_bound = stopped ? best_open_bound : kInf;
    res.rel_gap = kInf;
  }
  return res;
}

}  // namespace

std::string MipResult::status_string() const {
  switch (status) {
    case MipStatus::kOptimal: return "optimal";
    case MipStatus::kGapLimit: return "gap-limit";
    case MipStatus::kNodeLimit: return "node-limit";
    case MipStatus::kTimeLimit: return "time-limit";
    case MipStatus::kWorkLimit: return "work-limit";
    case MipStatus::kInfeasible: return "infeasible";
    case MipStatus::kNoIncumbent: return "no-incumbent";
  }
  return "unknown";
}

MipResult solve(const mip::ProblemSpec& spec, const SolverLimits& limits,
                const std::vector<double>* warm_start, const PrimalHeuristic& heuristic,
                const lp::Basis* root_basis, lp::Basis* out_root_basis) {
  BranchAndBound bb(spec, limits, warm_start, heuristic, root_basis, out_root_basis);
  return bb.run();
}

}  // namespace ecodrive::solver
