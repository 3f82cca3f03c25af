#include "ecodrive/lp_simplex.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <cstdio>
#include <cstdlib>

namespace ecodrive::lp {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();

double pow2_round(double v) {
  if (v <= 0.0 || !std::isfinite(v)) return 1.0;
  return std::exp2(std::round(std::log2(v)));
}
}  // namespace

void SparseMatrix::add_column(const std::vector<std::pair<int, double>>& entries) {
  if (col_start.empty()) col_start.push_back(0);
  for (const auto& [r, v] : entries) {
    if (v != 0.0) {
      row_index.push_back(r);
      value.push_back(v);
    }
  }
  col_start.push_back(static_cast<int>(row_index.size()));
  ++n_cols;
}

// ---------------------------------------------------------------------------
// Sparse LU of the basis (Gilbert-Peierls left-looking, partial pivoting).
// ---------------------------------------------------------------------------
struct SimplexSolver::Lu {
  int m = 0;
  std::vector<int> pivrow;   // step -> original row
  std::vector<int> pstep;    // original row -> step, -1 if none
  std::vector<double> pivval;
  std::vector<std::vector<std::pair<int, double>>> lcol;  // per step: (row, val)
  std::vector<std::vector<std::pair<int, double>>> ucol;  // per step: (earlier step, val)
  std::vector<int> step_of_slot, slot_of_step;

  std::vector<double> work;
  std::vector<int> touched, stack, order, dfs_pos_;
  std::vector<char> visited;

  std::vector<int> singular_slots;
  std::vector<int> unpivoted_rows;

  void dfs(int row) {
    stack.clear();
    stack.push_back(row);
    dfs_pos_.assign(1, 0);
    while (!stack.empty()) {
      const int r = stack.back();
      if (!visited[r]) {
        visited[r] = 1;
        touched.push_back(r);
      }
      const int st = pstep[r];
      bool descended = false;
      if (st >= 0) {
        auto& col = lcol[st];
        int& p = dfs_pos_.back();
        while (p < static_cast<int>(col.size())) {
          const int child = col[p].first;
          ++p;
          if (!visited[child]) {
            stack.push_back(child);
            dfs_pos_.push_back(0);
            descended = true;
            break;
          }
        }
      }
      if (!descended) {
        order.push_back(r);
        stack.pop_back();
        dfs_pos_.pop_back();
      }
    }
  }

  bool factor(const std::vector<std::vector<std::pair<int, double>>>& cols) {
    m = static_cast<int>(cols.size());
    pivrow.assign(m, -1);
    pstep.assign(m, -1);
    pivval.assign(m, 0.0);
    lcol.assign(m, {});
    ucol.assign(m, {});
    step_of_slot.assign(m, -1);
    slot_of_step.assign(m, -1);
    work.assign(m, 0.0);
    visited.assign(m, 0);
    singular_slots.clear();
    unpivoted_rows.clear();

    std::vector<int> slot_order(m);
    std::iota(slot_order.begin(), slot_order.end(), 0);
    std::stable_sort(slot_order.begin(), slot_order.end(),
                     [&](int a, int b) { return cols[a].size() < cols[b].size(); });

    int step = 0;
    for (int slot : slot_order) {
      touched.clear();
      order.clear();
      for (const auto& [r, v] : cols[slot]) {
        if (!visited[r]) dfs(r);
        work[r] += v;
      }
      for (auto it = order.rbegin(); it != order.rend(); ++it) {
        const int r = *it;
        const int st = pstep[r];
        const double val = work[r];
        if (st >= 0 && val != 0.0) {
          for (const auto& [rr, lv] : lcol[st]) work[rr] -= lv * val;
        }
      }
      int piv = -1;
      double best = 0.0;
      for (int r : touched) {
        if (pstep[r] >= 0) continue;
        const double a = std::abs(work[r]);
        if (a > best) {
          best = a;
          piv = r;
        }
      }
      if (piv < 0 || best < 1e-11) {
        singular_slots.push_back(slot);
        for (int r : touched) {
          work[r] = 0.0;
          visited[r] = 0;
        }
        continue;
      }
      auto& lc = lcol[step];
      auto& uc = ucol[step];
      const double pv = work[piv];
      for (int r : touched) {
        const double v = work[r];
        if (v != 0.0 && r != piv) {
          if (pstep[r] >= 0) uc.emplace_back(pstep[r], v);
          else lc.emplace_back(r, v / pv);
        }
        work[r] = 0.0;
        visited[r] = 0;
      }
      pivval[step] = pv;
      pivrow[step] = piv;
      pstep[piv] = step;
      step_of_slot[slot] = step;
      slot_of_step[step] = slot;
      ++step;
    }

    if (!singular_slots.empty()) {
      for (int r = 0; r < m; ++r) {
        if (pstep[r] < 0) unpivoted_rows.push_back(r);
      }
      return false;
    }
    return true;
  }

  void solve(std::vector<double>& rhs, std::vector<double>& out_slot) const {
    for (int k = 0; k < m; ++k) {
      const double t = rhs[pivrow[k]];
      if (t != 0.0) {
        for (const auto& [r, lv] : lcol[k]) rhs[r] -= lv * t;
      }
    }
    static thread_local std::vector<double> zs;
    zs.assign(m, 0.0);
    for (int k = m - 1; k >= 0; --k) {
      const double z = rhs[pivrow[k]] / pivval[k];
      zs[k] = z;
      if (z != 0.0) {
        for (const auto& [s, uv] : ucol[k]) rhs[pivrow[s]] -= uv * z;
      }
    }
    for (int k = 0; k < m; ++k) out_slot[slot_of_step[k]] = zs[k];
  }

  void solve_transpose(const std::vector<double>& c_slot, std::vector<double>& y_row) const {
    static thread_local std::vector<double> w;
    w.assign(m, 0.0);
    for (int k = 0; k < m; ++k) {
      double acc = c_slot[slot_of_step[k]];
      for (const auto& [s, uv] : ucol[k]) acc -= uv * w[s];
      w[k] = acc / pivval[k];
    }
    for (int k = m - 1; k >= 0; --k) {
      double acc = w[k];
      for (const auto& [rr, lv] : lcol[k]) acc -= lv * y_row[rr];
      y_row[pivrow[k]] = acc;
    }
  }
};

// ---------------------------------------------------------------------------

SimplexSolver::~SimplexSolver() = default;

SimplexSolver::SimplexSolver(const LpProblem& problem, SimplexOptions options)
    : p_(problem), opt_(options) {
  m_ = p_.a.n_rows;
  n_ = p_.a.n_cols;

  // Geometric-mean equilibration, rounded to powers of two so scaling is
  // exactly invertible. x_scaled = x / col_scale; rows divided by row_scale.
  row_scale_.assign(m_, 1.0);
  col_scale_.assign(n_, 1.0);
  for (int pass = 0; pass < 2; ++pass) {
    std::vector<double> rmax(m_, 0.0), rmin(m_, kInf);
    for (int j = 0; j < n_; ++j) {
      for (int k = p_.a.col_start[j]; k < p_.a.col_start[j + 1]; ++k) {
        const double a = std::abs(p_.a.value[k]) * col_scale_[j] / row_scale_[p_.a.row_index[k]];
        if (a > 0) {
          rmax[p_.a.row_index[k]] = std::max(rmax[p_.a.row_index[k]], a);
          rmin[p_.a.row_index[k]] = std::min(rmin[p_.a.row_index[k]], a);
        }
      }
    }
    for (int i = 0; i < m_; ++i) {
      if (rmax[i] > 0) row_scale_[i] *= pow2_round(std::sqrt(rmax[i] * rmin[i]));
    }
    std::vector<double> cmax(n_, 0.0), cmin(n_, kInf);
    for (int j = 0; j < n_; ++j) {
      for (int k = p_.a.col_start[j]; k < p_.a.col_start[j + 1]; ++k) {
        const double a = std::abs(p_.a.value[k]) * col_scale_[j] / row_scale_[p_.a.row_index[k]];
        if (a > 0) {
          cmax[j] = std::max(cmax[j], a);
          cmin[j] = std::min(cmin[j], a);
        }
      }
    }
    for (int j = 0; j < n_; ++j) {
      if (cmax[j] > 0) col_scale_[j] /= pow2_round(std::sqrt(cmax[j] * cmin[j]));
    }
  }

  // Scaled copies of matrix and data.
  a_ = p_.a;
  for (int j = 0; j < n_; ++j) {
    for (int k = a_.col_start[j]; k < a_.col_start[j + 1]; ++k) {
      a_.value[k] = p_.a.value[k] * col_scale_[j] / row_scale_[a_.row_index[k]];
    }
  }
  lb_.resize(n_ + m_);
  ub_.resize(n_ + m_);
  cost_.assign(n_ + m_, 0.0);
  for (int j = 0; j < n_; ++j) {
    lb_[j] = p_.col_lb[j] / col_scale_[j];
    ub_[j] = p_.col_ub[j] / col_scale_[j];
    cost_[j] = p_.obj[j] * col_scale_[j];
  }
  for (int i = 0; i < m_; ++i) {
    lb_[n_ + i] = p_.row_lb[i] / row_scale_[i];
    ub_[n_ + i] = p_.row_ub[i] / row_scale_[i];
  }
  lu_ = std::make_unique<Lu>();
  reset_to_slack_basis();
}

void SimplexSolver::set_col_bounds(int col, double lb, double ub) {
  lb_[col] = lb / col_scale_[col];
  ub_[col] = ub / col_scale_[col];
}

void SimplexSolver::column_of(int col, std::vector<std::pair<int, double>>& out) const {
  out.clear();
  if (col < n_) {
    for (int k = a_.col_start[col]; k < a_.col_start[col + 1]; ++k) {
      out.emplace_back(a_.row_index[k], a_.value[k]);
    }
  } else {
    out.emplace_back(col - n_, -1.0);
  }
}

void SimplexSolver::reset_to_slack_basis() {
  basis_.basic.resize(m_);
  basis_.status.assign(n_ + m_, VarStatus::kAtLower);
  for (int i = 0; i < m_; ++i) {
    basis_.basic[i] = n_ + i;
    basis_.status[n_ + i] = VarStatus::kBasic;
  }
  for (int j = 0; j < n_; ++j) {
    if (lb_[j] > -kInf) basis_.status[j] = VarStatus::kAtLower;
    else if (ub_[j] < kInf) basis_.status[j] = VarStatus::kAtUpper;
    else basis_.status[j] = VarStatus::kFreeZero;
  }
}

void SimplexSolver::load_basis(const Basis& warm) {
  if (static_cast<int>(warm.basic.size()) != m_ ||
      static_cast<int>(warm.status.size()) != n_ + m_) {
    reset_to_slack_basis();
    return;
  }
  std::vector<char> seen(n_ + m_, 0);
  bool ok = true;
  for (int i = 0; i < m_ && ok; ++i) {
    const int c = warm.basic[i];
    if (c < 0 || c >= n_ + m_ || seen[c]) ok = false;
    else seen[c] = 1;
  }
  if (!ok) {
    reset_to_slack_basis();
    return;
  }
  basis_ = warm;
  for (int i = 0; i < m_; ++i) basis_.status[basis_.basic[i]] = VarStatus::kBasic;
  for (int j = 0; j < n_ + m_; ++j) {
    if (basis_.status[j] == VarStatus::kBasic && !seen[j]) {
      basis_.status[j] = lb_[j] > -kInf ? VarStatus::kAtLower
                         : ub_[j] < kInf ? VarStatus::kAtUpper
                                         : VarStatus::kFreeZero;
    }
    if (basis_.status[j] == VarStatus::kAtLower && lb_[j] == -kInf) {
      basis_.status[j] = ub_[j] < kInf ? VarStatus::kAtUpper : VarStatus::kFreeZero;
    }
    if (basis_.status[j] == VarStatus::kAtUpper && ub_[j] == kInf) {
      basis_.status[j] = lb_[j] > -kInf ? VarStatus::kAtLower : VarStatus::kFreeZero;
    }
  }
}

bool SimplexSolver::factorize() {
  for (int attempt = 0; attempt < 4; ++attempt) {
    std::vector<std::vector<std::pair<int, double>>> cols(m_);
    std::vector<std::pair<int, double>> col;
    for (int i = 0; i < m_; ++i) {
      column_of(basis_.basic[i], col);
      cols[i] = col;
    }
    if (lu_->factor(cols)) {
      etas_.clear();
      return true;
    }
    for (size_t k = 0; k < lu_->singular_slots.size(); ++k) {
      const int slot = lu_->singular_slots[k];
      const int row = lu_->unpivoted_rows[k];
      const int out_col = basis_.basic[slot];
      basis_.status[out_col] = lb_[out_col] > -kInf ? VarStatus::kAtLower
                               : ub_[out_col] < kInf ? VarStatus::kAtUpper
                                                     : VarStatus::kFreeZero;
      basis_.basic[slot] = n_ + row;
      basis_.status[n_ + row] = VarStatus::kBasic;
    }
  }
  return false;
}

void SimplexSolver::compute_basic_values() {
  slot_of_.assign(n_ + m_, -1);
  for (int i = 0; i < m_; ++i) slot_of_[basis_.basic[i]] = i;

  x_.assign(n_ + m_, 0.0);
  for (int j = 0; j < n_ + m_; ++j) {
    switch (basis_.status[j]) {
      case VarStatus::kAtLower: x_[j] = lb_[j]; break;
      case VarStatus::kAtUpper: x_[j] = ub_[j]; break;
      default: x_[j] = 0.0;
    }
  }
  std::vector<double> rhs(m_, 0.0);
  std::vector<std::pair<int, double>> col;
  for (int j = 0; j < n_ + m_; ++j) {
    if (basis_.status[j] == VarStatus::kBasic || x_[j] == 0.0) continue;
    column_of(j, col);
    for (const auto& [r, v] : col) rhs[r] -= v * x_[j];
  }
  std::vector<double> xb(m_, 0.0);
  lu_->solve(rhs, xb);
  for (const auto& e : etas_) {
    const double t = xb[e.slot] / e.pivot;
    for (const auto& [i, v] : e.col) xb[i] -= v * t;
    xb[e.slot] = t;
  }
  for (int i = 0; i < m_; ++i) x_[basis_.basic[i]] = xb[i];
}

void SimplexSolver::ftran(std::vector<double>& v) const {
  static thread_local std::vector<double> out;
  out.assign(m_, 0.0);
  lu_->solve(v, out);
  for (const auto& e : etas_) {
    const double t = out[e.slot] / e.pivot;
    for (const auto& [i, val] : e.col) out[i] -= val * t;
    out[e.slot] = t;
  }
  v = out;
}

void SimplexSolver::btran(std::vector<double>& v) const {
  static thread_local std::vector<double> c;
  c = v;
  for (auto it = etas_.rbegin(); it != etas_.rend(); ++it) {
    double acc = c[it->slot];
    for (const auto& [i, val] : it->col) acc -= val * c[i];
    c[it->slot] = acc / it->pivot;
  }
  lu_->solve_transpose(c, v);
}

double SimplexSolver::bound_violation(int col) const {
  if (x_[col] < lb_[col]) return lb_[col] - x_[col];
  if (x_[col] > ub_[col]) return x_[col] - ub_[col];
  return 0.0;
}

LpResult SimplexSolver::extract(LpStatus status) {
  LpResult res;
  res.status = status;
  res.iterations = total_iterations_;
  res.x.assign(n_, 0.0);
  for (int j = 0; j < n_; ++j) res.x[j] = x_[j] * col_scale_[j];
  res.row_activity.assign(m_, 0.0);
  for (int j = 0; j < n_; ++j) {
    if (res.x[j] == 0.0) continue;
    for (int k = p_.a.col_start[j]; k < p_.a.col_start[j + 1]; ++k) {
      res.row_activity[p_.a.row_index[k]] += p_.a.value[k] * res.x[j];
    }
  }
  std::vector<double> cb(m_, 0.0);
  for (int i = 0; i < m_; ++i) cb[i] = cost_[basis_.basic[i]];
  btran(cb);
  res.dual.assign(m_, 0.0);
  for (int i = 0; i < m_; ++i) res.dual[i] = cb[i] / row_scale_[i];
  res.reduced_cost.assign(n_, 0.0);
  for (int j = 0; j < n_; ++j) {
    double d = p_.obj[j];
    for (int k = p_.a.col_start[j]; k < p_.a.col_start[j + 1]; ++k) {
      d -= p_.a.value[k] * res.dual[p_.a.row_index[k]];
    }
    res.reduced_cost[j] = d;
  }
  double obj = p_.obj_offset;
  for (int j = 0; j < n_; ++j) obj += p_.obj[j] * res.x[j];
  res.objective = obj;
  return res;
}

LpResult SimplexSolver::solve() {
  reset_to_slack_basis();
  return run();
}

LpResult SimplexSolver::solve_from(const Basis& warm) {
  load_basis(warm);
  return run();
}

// Reduced cost of one column against duals y (scaled space).
double SimplexSolver::reduced_cost_of(int j, const std::vector<double>& y, bool phase1) const {
  double d = phase1 ? 0.0 : cost_[j];
  if (j < n_) {
    for (int k = a_.col_start[j]; k < a_.col_start[j + 1]; ++k) {
      d -= a_.value[k] * y[a_.row_index[k]];
    }
  } else {
    d += y[j - n_];
  }
  return d;
}

// Dual simplex reoptimization: the current basis must be dual feasible
// (within tolerance). Drives out primal bound violations while keeping the
// reduced-cost sign conditions, using the same eta/LU machinery.
bool SimplexSolver::run_dual(std::vector<double>& dvec, long* iters) {
  std::vector<double> rho(m_), z(m_), rhs(m_);
  std::vector<std::pair<int, double>> col;
  const long cap = 6L * m_ + 200;
  long done = 0;

  while (done < cap) {
    // Leaving variable: the basic with the largest bound violation.
    int slot = -1;
    bool below = false;
    double worst = opt_.feas_tol;
    for (int i = 0; i < m_; ++i) {
      const int c = basis_.basic[i];
      const double lo_v = lb_[c] - x_[c];
      const double hi_v = x_[c] - ub_[c];
      if (lo_v > worst) {
        worst = lo_v;
        slot = i;
        below = true;
      }
      if (hi_v > worst) {
        worst = hi_v;
        slot = i;
        below = false;
      }
    }
    if (slot < 0) return true;  // primal feasible

    // Pivot row of this slot.
    std::fill(rho.begin(), rho.end(), 0.0);
    rho[slot] = 1.0;
    btran(rho);

    // Dual ratio test. Candidates move the leaving basic toward its bound:
    // below: x_B[slot] must increase; above: decrease.
    int enter = -1;
    double best_ratio = kInf;
    double best_alpha = 0.0;
    for (int j = 0; j < n_ + m_; ++j) {
      const VarStatus st = basis_.status[j];
      if (st == VarStatus::kBasic) continue;
      double alpha;
      if (j < n_) {
        double acc = 0.0;
        for (int k = a_.col_start[j]; k < a_.col_start[j + 1]; ++k) {
          acc += a_.value[k] * rho[a_.row_index[k]];
        }
        alpha = acc;
      } else {
        alpha = -rho[j - n_];
      }
      if (std::abs(alpha) <= 1e-9) continue;
      // x_B[slot] change per unit entering movement = -alpha * dir_j.
      double ratio;
      if (st == VarStatus::kAtLower || st == VarStatus::kFreeZero) {
        const bool ok = below ? alpha < 0 : alpha > 0;
        if (!ok && st != VarStatus::kFreeZero) continue;
        ratio = std::abs(dvec[j] / alpha);
      } else {  // AtUpper: entering decreases
        const bool ok = below ? alpha > 0 : alpha < 0;
        if (!ok) continue;
        ratio = std::abs(dvec[j] / alpha);
      }
      if (ratio < best_ratio - 1e-12 ||
          (ratio < best_ratio + 1e-12 && std::abs(alpha) > std::abs(best_alpha))) {
        best_ratio = ratio;
        best_alpha = alpha;
        enter = j;
      }
    }
    if (enter < 0) return true;  // dual unbounded => primal infeasible; let primal phase 1 decide

    // Primal step: move entering so the leaving basic lands on its bound.
    std::fill(rhs.begin(), rhs.end(), 0.0);
    column_of(enter, col);
    for (const auto& [r, v] : col) rhs[r] = v;
    ftran(rhs);
    z = rhs;
    const double alpha_q = z[slot];
    if (std::abs(alpha_q) < 1e-10) {
      if (!factorize()) return false;
      compute_basic_values();
      ++done;
      continue;
    }
    const int leave_col = basis_.basic[slot];
    const double target = below ? lb_[leave_col] : ub_[leave_col];
    const double delta_q = (x_[leave_col] - target) / alpha_q;  // signed entering movement

    for (int i = 0; i < m_; ++i) {
      if (z[i] != 0.0) x_[basis_.basic[i]] -= delta_q * z[i];
    }
    const double start = basis_.status[enter] == VarStatus::kAtUpper ? ub_[enter]
                         : basis_.status[enter] == VarStatus::kAtLower ? lb_[enter]
                                                                       : 0.0;
    x_[enter] = start + delta_q;
    x_[leave_col] = target;
    basis_.status[leave_col] = below ? VarStatus::kAtLower : VarStatus::kAtUpper;
    basis_.basic[slot] = enter;
    basis_.status[enter] = VarStatus::kBasic;
    slot_of_[leave_col] = -1;
    slot_of_[enter] = slot;

    // Reduced-cost update through the pivot row (same algebra as primal).
    const double dq_over_alpha = dvec[enter] / alpha_q;
    for (int j = 0; j < n_ + m_; ++j) {
      if (basis_.status[j] == VarStatus::kBasic) continue;
      double arj;
      if (j < n_) {
        double acc = 0.0;
        for (int k = a_.col_start[j]; k < a_.col_start[j + 1]; ++k) {
          acc += a_.value[k] * rho[a_.row_index[k]];
        }
        arj = acc;
      } else {
        arj = -rho[j - n_];
      }
      if (arj != 0.0) dvec[j] -= dq_over_alpha * arj;
    }
    dvec[leave_col] = -dq_over_alpha;
    dvec[enter] = 0.0;

    Eta e;
    e.slot = slot;
    e.pivot = alpha_q;
    for (int i = 0; i < m_; ++i) {
      if (i != slot && z[i] != 0.0) e.col.emplace_back(i, z[i]);
    }
    etas_.push_back(std::move(e));
    if (static_cast<int>(etas_.size()) >= opt_.refactor_interval) {
      if (!factorize()) return false;
      compute_basic_values();
    }
    ++done;
    ++total_iterations_;
    if (iters != nullptr) ++(*iters);
  }
  return false;  // iteration cap; primal takes over
}

LpResult SimplexSolver::run() {
  long dbg_p1 = 0, dbg_p2 = 0, dbg_degen = 0, dbg_flips = 0;
  const bool dbg = std::getenv("ECODRIVE_LP_DEBUG") != nullptr;
  if (!factorize()) return extract(LpStatus::kNumericalFailure);
  compute_basic_values();

  // A dual-feasible but primal-infeasible start (the typical warm basis after
  // branching or a new MPC cycle) reoptimizes far faster with dual pivots.
  {
    bool primal_infeasible = false;
    for (int i = 0; i < m_ && !primal_infeasible; ++i) {
      if (bound_violation(basis_.basic[i]) > opt_.feas_tol) primal_infeasible = true;
    }
    if (primal_infeasible) {
      std::vector<double> cb0(m_), y0(m_);
      for (int i = 0; i < m_; ++i) cb0[i] = cost_[basis_.basic[i]];
      y0 = cb0;
      btran(y0);
      std::vector<double> d0(n_ + m_, 0.0);
      bool dual_feasible = true;
      for (int j = 0; j < n_ + m_ && dual_feasible; ++j) {
        const VarStatus st = basis_.status[j];
        if (st == VarStatus::kBasic) continue;
        d0[j] = reduced_cost_of(j, y0, false);
        if (st == VarStatus::kAtLower && d0[j] < -1e-7) dual_feasible = false;
        if (st == VarStatus::kAtUpper && d0[j] > 1e-7) dual_feasible = false;
        if (st == VarStatus::kFreeZero && std::abs(d0[j]) > 1e-7) dual_feasible = false;
      }
      if (dual_feasible) run_dual(d0, nullptr);
    }
  }

  std::vector<double> cb(m_), y(m_), rhs(m_), z(m_), rho(m_);
  std::vector<double> dvec(n_ + m_, 0.0), gamma(n_ + m_, 1.0);
  std::vector<std::pair<int, double>> col;
  bool bland = false;
  int stall = 0;
  long iters_this_call = 0;
  bool d_valid = false;

  auto phase1_active = [&]() {
    for (int i = 0; i < m_; ++i) {
      if (bound_violation(basis_.basic[i]) > opt_.feas_tol) return true;
    }
    return false;
  };

  bool phase1 = phase1_active();

  auto refresh_duals = [&](bool ph1) {
    for (int i = 0; i < m_; ++i) {
      const int c = basis_.basic[i];
      if (ph1) {
        cb[i] = x_[c] < lb_[c] - opt_.feas_tol ? -1.0
               : x_[c] > ub_[c] + opt_.feas_tol ? 1.0
                                                : 0.0;
      } else {
        cb[i] = cost_[c];
      }
    }
    y = cb;
    btran(y);
    for (int j = 0; j < n_ + m_; ++j) {
      if (basis_.status[j] == VarStatus::kBasic) dvec[j] = 0.0;
      else dvec[j] = reduced_cost_of(j, y, ph1);
    }
  };

  refresh_duals(phase1);
  d_valid = true;

  const long iter_cap = iteration_budget_ > 0
                            ? std::min(iteration_budget_, opt_.iteration_limit)
                            : opt_.iteration_limit;
  iteration_budget_ = 0;
  while (true) {
    if (iters_this_call >= iter_cap) return extract(LpStatus::kIterationLimit);

    if (phase1) {
      refresh_duals(true);  // composite costs shift as violations change
    } else if (!d_valid) {
      refresh_duals(false);
      d_valid = true;
    }

    // --- pricing: devex-weighted most negative reduced cost ---------------
    int enter = -1, enter_dir = 0;
    double best_score = 0.0;
    for (int j = 0; j < n_ + m_; ++j) {
      const VarStatus st = basis_.status[j];
      if (st == VarStatus::kBasic) continue;
      const double d = dvec[j];
      int dir = 0;
      if (st == VarStatus::kAtLower && d < -opt_.dual_tol) dir = 1;
      else if (st == VarStatus::kAtUpper && d > opt_.dual_tol) dir = -1;
      else if (st == VarStatus::kFreeZero && std::abs(d) > opt_.dual_tol) dir = d < 0 ? 1 : -1;
      if (dir == 0) continue;
      if (bland) {
        enter = j;
        enter_dir = dir;
        break;
      }
      const double score = d * d / gamma[j];
      if (score > best_score) {
        best_score = score;
        enter = j;
        enter_dir = dir;
      }
    }

    if (enter < 0) {
      if (phase1) {
        if (phase1_active()) return extract(LpStatus::kInfeasible);
        phase1 = false;
        refresh_duals(false);
        continue;
      }
      if (dbg) {
        std::fprintf(stderr, "  lp: p1=%ld p2=%ld degen=%ld flips=%ld\n", dbg_p1, dbg_p2,
                     dbg_degen, dbg_flips);
      }
      return extract(LpStatus::kOptimal);
    }
    const double d_enter = dvec[enter];

    // --- FTRAN entering column -------------------------------------------
    std::fill(rhs.begin(), rhs.end(), 0.0);
    column_of(enter, col);
    for (const auto& [r, v] : col) rhs[r] = v;
    ftran(rhs);
    z = rhs;

    const double theta_limit = ub_[enter] - lb_[enter];
    int leave_slot = -1;
    bool leave_at_upper = false;
    double theta = theta_limit;

    if (phase1) {
      // Long-step composite ratio test: pass breakpoints while the
      // infeasibility-sum slope stays negative.
      struct Break {
        double t;
        double wabs;
        int slot;
        bool at_upper;
      };
      static thread_local std::vector<Break> breaks;
      breaks.clear();
      for (int i = 0; i < m_; ++i) {
        const double w = enter_dir * z[i];
        if (std::abs(w) <= opt_.pivot_tol) continue;
        const int c = basis_.basic[i];
        const double xv = x_[c], lo = lb_[c], hi = ub_[c];
        if (w > 0) {  // falling
          if (xv > hi + opt_.feas_tol && hi > -kInf) breaks.push_back({(xv - hi) / w, w, i, true});
          if (lo > -kInf && xv >= lo - opt_.feas_tol) {
            breaks.push_back({std::max(0.0, (xv - lo) / w), w, i, false});
          }
        } else {  // rising
          const double wa = -w;
          if (xv < lo - opt_.feas_tol && lo > -kInf) breaks.push_back({(lo - xv) / wa, wa, i, false});
          if (hi < kInf && xv <= hi + opt_.feas_tol) {
            breaks.push_back({std::max(0.0, (hi - xv) / wa), wa, i, true});
          }
        }
      }
      std::sort(breaks.begin(), breaks.end(), [](const Break& a, const Break& b) {
        if (a.t != b.t) return a.t < b.t;
        return a.slot < b.slot;
      });
      double slope = d_enter < 0 ? d_enter : -std::abs(d_enter);
      for (const auto& br : breaks) {
        if (br.t > theta_limit) break;
        slope += br.wabs;
        leave_slot = br.slot;
        leave_at_upper = br.at_upper;
        theta = br.t;
        if (slope >= -1e-12) break;
      }
      if (leave_slot < 0) {
        if (theta_limit == kInf) return extract(LpStatus::kNumericalFailure);
        theta = theta_limit;
      }
    } else {
      // Harris two-pass ratio test on feasible basics.
      const double relax = opt_.feas_tol;
      double theta_max = theta_limit;
      double strict_min = kInf;
      int strict_slot = -1;
      bool strict_up = false;
      for (int i = 0; i < m_; ++i) {
        const double w = enter_dir * z[i];
        const int c = basis_.basic[i];
        if (w > opt_.pivot_tol && lb_[c] > -kInf) {
          theta_max = std::min(theta_max, (x_[c] - lb_[c] + relax) / w);
          const double t = std::max(0.0, (x_[c] - lb_[c]) / w);
          if (t < strict_min) {
            strict_min = t;
            strict_slot = i;
            strict_up = false;
          }
        } else if (w < -opt_.pivot_tol && ub_[c] < kInf) {
          theta_max = std::min(theta_max, (ub_[c] - x_[c] + relax) / (-w));
          const double t = std::max(0.0, (ub_[c] - x_[c]) / (-w));
          if (t < strict_min) {
            strict_min = t;
            strict_slot = i;
            strict_up = true;
          }
        }
      }
      if (theta_max < theta_limit || theta_limit == kInf) {
        if (bland) {
          if (strict_slot >= 0) {
            double tmin = kInf;
            for (int i = 0; i < m_; ++i) {
              const double w = enter_dir * z[i];
              const int c = basis_.basic[i];
              double t;
              bool up;
              if (w > opt_.pivot_tol && lb_[c] > -kInf) {
                t = std::max(0.0, (x_[c] - lb_[c]) / w);
                up = false;
              } else if (w < -opt_.pivot_tol && ub_[c] < kInf) {
                t = std::max(0.0, (ub_[c] - x_[c]) / (-w));
                up = true;
              } else {
                continue;
              }
              if (t < tmin - 1e-30 ||
                  (t < tmin + 1e-30 &&
                   (leave_slot < 0 || basis_.basic[i] < basis_.basic[leave_slot]))) {
                tmin = t;
                leave_slot = i;
                leave_at_upper = up;
                theta = t;
              }
            }
          }
        } else {
          double best_w = 0.0;
          for (int i = 0; i < m_; ++i) {
            const double w = enter_dir * z[i];
            const int c = basis_.basic[i];
            double t;
            bool up;
            if (w > opt_.pivot_tol && lb_[c] > -kInf) {
              t = std::max(0.0, (x_[c] - lb_[c]) / w);
              up = false;
            } else if (w < -opt_.pivot_tol && ub_[c] < kInf) {
              t = std::max(0.0, (ub_[c] - x_[c]) / (-w));
              up = true;
            } else {
              continue;
            }
            if (t <= theta_max + 1e-30) {
              const double aw = std::abs(w);
              if (aw > best_w) {
                best_w = aw;
                leave_slot = i;
                leave_at_upper = up;
                theta = t;
              }
            }
          }
          if (leave_slot < 0 && strict_slot >= 0) {
            leave_slot = strict_slot;
            leave_at_upper = strict_up;
            theta = strict_min;
          }
        }
        if (leave_slot < 0 && theta_limit == kInf) return extract(LpStatus::kUnbounded);
        if (leave_slot < 0) theta = theta_limit;
      }
    }

    theta = std::max(0.0, theta);
    if (dbg) {
      if (phase1) ++dbg_p1; else ++dbg_p2;
      if (theta <= 1e-12) ++dbg_degen;
      if (leave_slot < 0) ++dbg_flips;
    }

    if (theta != 0.0) {
      for (int i = 0; i < m_; ++i) {
        const double w = enter_dir * z[i];
        if (w != 0.0) x_[basis_.basic[i]] -= theta * w;
      }
    }
    ++iters_this_call;
    ++total_iterations_;

    if (leave_slot < 0) {
      x_[enter] = enter_dir > 0 ? ub_[enter] : lb_[enter];
      basis_.status[enter] = enter_dir > 0 ? VarStatus::kAtUpper : VarStatus::kAtLower;
      stall = 0;
      continue;
    }

    const int leave_col = basis_.basic[leave_slot];
    x_[leave_col] = leave_at_upper ? ub_[leave_col] : lb_[leave_col];

    const double start = basis_.status[enter] == VarStatus::kAtUpper ? ub_[enter]
                         : basis_.status[enter] == VarStatus::kAtLower ? lb_[enter]
                                                                       : 0.0;
    x_[enter] = start + enter_dir * theta;
    basis_.status[leave_col] = leave_at_upper ? VarStatus::kAtUpper : VarStatus::kAtLower;
    basis_.basic[leave_slot] = enter;
    basis_.status[enter] = VarStatus::kBasic;
    slot_of_[leave_col] = -1;
    slot_of_[enter] = leave_slot;

    const double alpha_q = z[leave_slot];

    // Phase-2 incremental devex + reduced cost update via the pivot row.
    if (!phase1 && d_valid && std::abs(alpha_q) > 1e-11) {
      std::fill(rho.begin(), rho.end(), 0.0);
      rho[leave_slot] = 1.0;
      btran(rho);  // rho = B^-T e_r of the OLD basis? (basis already updated)
      // NOTE: basis_ arrays were updated above, but the factorization (lu_ +
      // etas_) still represents the old basis until the eta below is pushed,
      // so this BTRAN is against the old basis as required.
      const double ratio = dvec[enter] / alpha_q;
      const double gq = std::max(gamma[enter], 1.0);
      for (int j = 0; j < n_ + m_; ++j) {
        if (basis_.status[j] == VarStatus::kBasic) continue;
        double arj;
        if (j < n_) {
          double acc = 0.0;
          for (int k = a_.col_start[j]; k < a_.col_start[j + 1]; ++k) {
            acc += a_.value[k] * rho[a_.row_index[k]];
          }
          arj = acc;
        } else {
          arj = -rho[j - n_];
        }
        if (arj != 0.0) {
          dvec[j] -= ratio * arj;
          const double cand = (arj / alpha_q) * (arj / alpha_q) * gq;
          if (cand > gamma[j]) gamma[j] = cand;
        }
      }
      dvec[leave_col] = -ratio;
      gamma[leave_col] = std::max(gq / (alpha_q * alpha_q), 1.0);
      dvec[enter] = 0.0;
    } else if (!phase1) {
      d_valid = false;
    }

    if (std::abs(alpha_q) < 1e-11) {
      if (!factorize()) return extract(LpStatus::kNumericalFailure);
      compute_basic_values();
      d_valid = false;
    } else {
      Eta e;
      e.slot = leave_slot;
      e.pivot = alpha_q;
      for (int i = 0; i < m_; ++i) {
        if (i != leave_slot && z[i] != 0.0) e.col.emplace_back(i, z[i]);
      }
      etas_.push_back(std::move(e));
      if (static_cast<int>(etas_.size()) >= opt_.refactor_interval) {
        if (!factorize()) return extract(LpStatus::kNumericalFailure);
        compute_basic_values();
        d_valid = false;
      }
    }

    if (theta <= 1e-12) {
      if (++stall > opt_.stall_limit) {
        bland = true;
        d_valid = false;
      }
    } else {
      stall = 0;
      if (bland) {
        bland = false;
        d_valid = false;
      }
    }

    if (phase1 && !phase1_active()) {
      phase1 = false;
      refresh_duals(false);
      d_valid = true;
    }
  }
}

}  // namespace ecodrive::lp
