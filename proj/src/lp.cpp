/*
 * SPDX-FileCopyrightText: Copyright (c) 2026, The finebal Authors. All rights reserved.
 * SPDX-License-Identifier: Apache-2.0
 */
#include "finebal/lp.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include <Eigen/Dense>

namespace finebal::lp {

// ---------------------------------------------------------------------------
// LinearProgram

LinearProgram::LinearProgram(int num_vars, double lo, double hi) {
  if (num_vars < 0) throw LpError("negative variable count");
  for (int j = 0; j < num_vars; ++j) add_variable(lo, hi);
}

int LinearProgram::add_variable(double lo, double hi, double cost, std::string name) {
  if (std::isnan(lo) || std::isnan(hi) || lo > hi || lo == kInf || hi == -kInf)
    throw LpError("invalid variable bounds");
  if (!std::isfinite(cost)) throw LpError("objective coefficient must be finite");
  cost_.push_back(cost);
  lo_.push_back(lo);
  hi_.push_back(hi);
  names_.push_back(std::move(name));
  return num_vars() - 1;
}

void LinearProgram::check_var(int var) const {
  if (var < 0 || var >= num_vars())
    throw LpError("variable index " + std::to_string(var) + " out of range");
}

void LinearProgram::set_cost(int var, double cost) {
  check_var(var);
  if (!std::isfinite(cost)) throw LpError("objective coefficient must be finite");
  cost_[var] = cost;
}

void LinearProgram::set_bounds(int var, double lo, double hi) {
  check_var(var);
  if (std::isnan(lo) || std::isnan(hi) || lo > hi || lo == kInf || hi == -kInf)
    throw LpError("invalid variable bounds");
  lo_[var] = lo;
  hi_[var] = hi;
}

void LinearProgram::set_name(int var, std::string name) {
  check_var(var);
  names_[var] = std::move(name);
}

std::string LinearProgram::var_name(int var) const {
  check_var(var);
  return names_[var].empty() ? "x" + std::to_string(var) : names_[var];
}

void LinearProgram::add_constraint(std::vector<Term> terms, Relation relation, double rhs) {
  if (!std::isfinite(rhs)) throw LpError("constraint right-hand side must be finite");
  std::map<int, double> merged;
  for (const auto& t : terms) {
    check_var(t.var);
    if (!std::isfinite(t.coef)) throw LpError("constraint coefficient must be finite");
    merged[t.var] += t.coef;
  }
  Constraint c{{}, relation, rhs};
  for (auto [var, coef] : merged) {
    if (coef != 0.0) c.terms.push_back({var, coef});
  }
  rows_.push_back(std::move(c));
}

void LinearProgram::add_dense_constraint(std::span<const double> row, Relation relation,
                                         double rhs) {
  if (static_cast<int>(row.size()) != num_vars())
    throw LpError("dense constraint row has wrong length");
  std::vector<Term> terms;
  for (int j = 0; j < num_vars(); ++j) {
    if (row[j] != 0.0) terms.push_back({j, row[j]});
  }
  add_constraint(std::move(terms), relation, rhs);
}

double LinearProgram::objective_value(std::span<const double> x) const {
  double v = 0.0;
  for (int j = 0; j < num_vars(); ++j) v += cost_[j] * x[j];
  return v;
}

double LinearProgram::row_activity(int row, std::span<const double> x) const {
  double a = 0.0;
  for (const auto& t : rows_.at(row).terms) a += t.coef * x[t.var];
  return a;
}

double LinearProgram::max_row_violation(std::span<const double> x) const {
  double worst = 0.0;
  for (int i = 0; i < num_constraints(); ++i) {
    const double a = row_activity(i, x);
    const double b = rows_[i].rhs;
    double viol = 0.0;
    switch (rows_[i].relation) {
      case Relation::LessEqual: viol = a - b; break;
      case Relation::GreaterEqual: viol = b - a; break;
      case Relation::Equal: viol = std::abs(a - b); break;
    }
    worst = std::max(worst, viol);
  }
  return worst;
}

double LinearProgram::max_bound_violation(std::span<const double> x) const {
  double worst = 0.0;
  for (int j = 0; j < num_vars(); ++j) {
    worst = std::max({worst, lo_[j] - x[j], x[j] - hi_[j]});
  }
  return worst;
}

double LinearProgram::max_violation(std::span<const double> x) const {
  return std::max(max_row_violation(x), max_bound_violation(x));
}

std::size_t LinearProgram::num_nonzeros() const {
  std::size_t nnz = 0;
  for (const auto& r : rows_) nnz += r.terms.size();
  return nnz;
}

const char* to_string(LpStatus s) {
  switch (s) {
    case LpStatus::Optimal: return "Optimal";
    case LpStatus::Infeasible: return "Infeasible";
    case LpStatus::Unbounded: return "Unbounded";
  }
  return "?";
}

// ---------------------------------------------------------------------------
// Simplex

struct SimplexSolver::Impl {
  SimplexOptions opt;
  int n = 0;  // structural
  int m = 0;  // rows
  // Structural columns in compressed form.
  std::vector<int> col_start, row_index;
  std::vector<double> value;
  std::vector<double> cost;         // size n
  std::vector<double> base_lo, base_hi;  // size n + m

  // Working state for one solve.
  std::vector<double> lo, hi, x;
  std::vector<VarStatus> status;
  std::vector<int> head;
  Eigen::MatrixXd binv;
  int price_cursor = 0;

  explicit Impl(const LinearProgram& lp, SimplexOptions o) : opt(o) {
    n = lp.num_vars();
    m = lp.num_constraints();
    if (n == 0) throw LpError("linear program has no variables");
    std::vector<std::vector<std::pair<int, double>>> cols(n);
    for (int i = 0; i < m; ++i) {
      for (const auto& t : lp.constraint(i).terms) cols[t.var].push_back({i, t.coef});
    }
    col_start.push_back(0);
    for (int j = 0; j < n; ++j) {
      for (auto [i, a] : cols[j]) {
        row_index.push_back(i);
        value.push_back(a);
      }
      col_start.push_back(static_cast<int>(row_index.size()));
    }
    cost = lp.objective();
    base_lo = lp.lower();
    base_hi = lp.upper();
    base_lo.resize(n + m);
    base_hi.resize(n + m);
    for (int i = 0; i < m; ++i) {
      const auto& c = lp.constraint(i);
      switch (c.relation) {
        case Relation::LessEqual:
          base_lo[n + i] = -kInf;
          base_hi[n + i] = c.rhs;
          break;
        case Relation::GreaterEqual:
          base_lo[n + i] = c.rhs;
          base_hi[n + i] = kInf;
          break;
        case Relation::Equal:
          base_lo[n + i] = c.rhs;
          base_hi[n + i] = c.rhs;
          break;
      }
    }
  }

  // y . column j
  double dot_column(const Eigen::VectorXd& y, int j) const {
    if (j >= n) return -y[j - n];
    double s = 0.0;
    for (int k = col_start[j]; k < col_start[j + 1]; ++k) s += y[row_index[k]] * value[k];
    return s;
  }

  // binv * column j
  void ftran(int j, Eigen::VectorXd& out) const {
    out.setZero(m);
    if (j >= n) {
      out = -binv.col(j - n);
      return;
    }
    for (int k = col_start[j]; k < col_start[j + 1]; ++k) out += value[k] * binv.col(row_index[k]);
  }

  static VarStatus nonbasic_status(double l, double h) {
    if (l == h) return VarStatus::Fixed;
    if (std::isfinite(l)) return VarStatus::AtLower;
    if (std::isfinite(h)) return VarStatus::AtUpper;
    return VarStatus::Free;
  }

  void place_nonbasic(int j) {
    switch (status[j]) {
      case VarStatus::AtLower:
        if (!std::isfinite(lo[j])) status[j] = nonbasic_status(lo[j], hi[j]);
        break;
      case VarStatus::AtUpper:
        if (!std::isfinite(hi[j])) status[j] = nonbasic_status(lo[j], hi[j]);
        break;
      case VarStatus::Fixed:
        if (lo[j] != hi[j]) status[j] = nonbasic_status(lo[j], hi[j]);
        break;
      case VarStatus::Free:
        if (std::isfinite(lo[j]) || std::isfinite(hi[j])) status[j] = nonbasic_status(lo[j], hi[j]);
        break;
      case VarStatus::Basic: return;
    }
    if (lo[j] == hi[j]) status[j] = VarStatus::Fixed;
    switch (status[j]) {
      case VarStatus::AtLower:
      case VarStatus::Fixed: x[j] = lo[j]; break;
      case VarStatus::AtUpper: x[j] = hi[j]; break;
      case VarStatus::Free: x[j] = 0.0; break;
      case VarStatus::Basic: break;
    }
  }

  void cold_start() {
    status.assign(n + m, VarStatus::AtLower);
    head.resize(m);
    for (int j = 0; j < n; ++j) {
      status[j] = nonbasic_status(lo[j], hi[j]);
      place_nonbasic(j);
    }
    for (int i = 0; i < m; ++i) {
      head[i] = n + i;
      status[n + i] = VarStatus::Basic;
    }
  }

  bool refactor() {
    if (m == 0) {
      binv.resize(0, 0);
      return true;
    }
    Eigen::MatrixXd B = Eigen::MatrixXd::Zero(m, m);
    for (int r = 0; r < m; ++r) {
      const int j = head[r];
      if (j >= n) {
        B(j - n, r) = -1.0;
      } else {
        for (int k = col_start[j]; k < col_start[j + 1]; ++k) B(row_index[k], r) = value[k];
      }
    }
    Eigen::FullPivLU<Eigen::MatrixXd> lu(B);
    if (!lu.isInvertible()) return false;
    binv = lu.inverse();
    return true;
  }

  void compute_basic_values() {
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(m);
    for (int j = 0; j < n + m; ++j) {
      if (status[j] == VarStatus::Basic || x[j] == 0.0) continue;
      if (j >= n) {
        rhs[j - n] += x[j];
      } else {
        for (int k = col_start[j]; k < col_start[j + 1]; ++k) rhs[row_index[k]] -= value[k] * x[j];
      }
    }
    Eigen::VectorXd xb = binv * rhs;
    for (int r = 0; r < m; ++r) x[head[r]] = xb[r];
  }

  // Residual of [A | -I] x = 0.
  double residual() const {
    std::vector<double> r(m, 0.0);
    for (int j = 0; j < n; ++j) {
      for (int k = col_start[j]; k < col_start[j + 1]; ++k) r[row_index[k]] += value[k] * x[j];
    }
    double worst = 0.0;
    for (int i = 0; i < m; ++i) worst = std::max(worst, std::abs(r[i] - x[n + i]));
    return worst;
  }

  double infeasibility(int j) const {
    const double tol = opt.feasibility_tol;
    if (x[j] < lo[j] - tol) return lo[j] - x[j];
    if (x[j] > hi[j] + tol) return x[j] - hi[j];
    return 0.0;
  }

  LpSolution run(std::span<const double> lower, std::span<const double> upper, const Basis* warm) {
    if (static_cast<int>(lower.size()) != n || static_cast<int>(upper.size()) != n)
      throw LpError("bound vectors have wrong length");
    lo = base_lo;
    hi = base_hi;
    for (int j = 0; j < n; ++j) {
      if (std::isnan(lower[j]) || std::isnan(upper[j]) || lower[j] > upper[j])
        throw LpError("invalid bounds for variable " + std::to_string(j));
      lo[j] = lower[j];
      hi[j] = upper[j];
    }
    x.assign(n + m, 0.0);
    price_cursor = 0;

    bool started = false;
    if (warm && static_cast<int>(warm->status.size()) == n + m &&
        static_cast<int>(warm->head.size()) == m) {
      status = warm->status;
      head = warm->head;
      for (int j = 0; j < n + m; ++j) place_nonbasic(j);
      started = refactor();
    }
    if (!started) {
      cold_start();
      if (!refactor()) throw NumericalError("slack basis is singular");
    }
    compute_basic_values();

    const long max_iter =
        opt.max_iterations > 0 ? opt.max_iterations : 50L * (n + m) + 100000L;
    long iter = 0;
    long since_refactor = 0;
    long degenerate_run = 0;
    bool bland = false;
    int recoveries = 0;
    Eigen::VectorXd cb(m), y(m), alpha(m);

    LpSolution sol;
    for (;;) {
      if (iter >= max_iter) throw NumericalError("simplex iteration limit reached");
      if (since_refactor >= opt.refactor_interval) {
        if (!refactor()) throw NumericalError("basis became singular");
        compute_basic_values();
        since_refactor = 0;
      }

      double total_inf = 0.0;
      for (int r = 0; r < m; ++r) total_inf += infeasibility(head[r]);
      const bool phase1 = total_inf > 0.0;

      for (int r = 0; r < m; ++r) {
        const int j = head[r];
        if (phase1) {
          const double tol = opt.feasibility_tol;
          cb[r] = x[j] < lo[j] - tol ? -1.0 : (x[j] > hi[j] + tol ? 1.0 : 0.0);
        } else {
          cb[r] = j < n ? cost[j] : 0.0;
        }
      }
      y = binv.transpose() * cb;

      // Pricing: full Dantzig on small programs, cyclic blocks on wide ones.
      int enter = -1;
      double best = 0.0;
      double enter_d = 0.0;
      const int total = n + m;
      const bool partial = !bland && opt.pricing_block > 0 && total > 4 * opt.pricing_block;
      const int block = partial ? opt.pricing_block : total;
      int scanned = 0;
      int j = partial ? price_cursor : 0;
      for (; scanned < total; ++scanned, j = j + 1 == total ? 0 : j + 1) {
        if (partial && scanned > 0 && scanned % block == 0 && enter >= 0) break;
        const VarStatus s = status[j];
        if (s == VarStatus::Basic || s == VarStatus::Fixed) continue;
        const double cj = (!phase1 && j < n) ? cost[j] : 0.0;
        const double d = cj - dot_column(y, j);
        bool eligible = false;
        switch (s) {
          case VarStatus::AtLower: eligible = d < -opt.optimality_tol; break;
          case VarStatus::AtUpper: eligible = d > opt.optimality_tol; break;
          case VarStatus::Free: eligible = std::abs(d) > opt.optimality_tol; break;
          default: break;
        }
        if (!eligible) continue;
        if (bland) {
          enter = j;
          enter_d = d;
          break;
        }
        if (std::abs(d) > best) {
          best = std::abs(d);
          enter = j;
          enter_d = d;
        }
      }
      if (partial) price_cursor = j;

      if (enter < 0) {
        // Verify with a fresh factorization before declaring termination.
        if (since_refactor > 0) {
          if (!refactor()) throw NumericalError("basis became singular");
          compute_basic_values();
          since_refactor = 0;
          if (residual() > opt.instability_tol)
            throw NumericalError("feasibility residual exceeds tolerance after refactorization");
          continue;
        }
        if (phase1) {
          sol.status = LpStatus::Infeasible;
        } else {
          sol.status = LpStatus::Optimal;
        }
        break;
      }

      ftran(enter, alpha);
      const double dir = enter_d < 0.0 ? 1.0 : -1.0;

      // Ratio test: two passes, the second picks the largest pivot among
      // near-minimal ratios (Bland mode: smallest variable index).
      double t_own = dir > 0 ? hi[enter] - x[enter] : x[enter] - lo[enter];
      auto limit_of = [&](int r, double& t, bool& at_lower) -> bool {
        const double a = alpha[r];
        if (std::abs(a) <= opt.pivot_tol) return false;
        const double rate = -dir * a;
        const int j = head[r];
        const double tol = opt.feasibility_tol;
        if (rate < 0.0) {
          if (phase1 && x[j] > hi[j] + tol) {
            at_lower = false;  // becomes feasible at its upper bound
          } else if (x[j] < lo[j] - tol || !std::isfinite(lo[j])) {
            return false;
          } else {
            at_lower = true;
          }
          const double bound = at_lower ? lo[j] : hi[j];
          t = std::max(0.0, (x[j] - bound) / -rate);
        } else {
          if (phase1 && x[j] < lo[j] - tol) {
            at_lower = true;
          } else if (x[j] > hi[j] + tol || !std::isfinite(hi[j])) {
            return false;
          } else {
            at_lower = false;
          }
          const double bound = at_lower ? lo[j] : hi[j];
          t = std::max(0.0, (bound - x[j]) / rate);
        }
        return true;
      };
      double t_min = kInf;
      for (int r = 0; r < m; ++r) {
        double t;
        bool low;
        if (limit_of(r, t, low)) t_min = std::min(t_min, t);
      }
      int leave = -1;
      bool leave_at_lower = false;
      double step = t_own;
      if (t_min < kInf && t_min <= t_own) {
        const double slack = bland ? 1e-12 : 1e-9 * std::max(1.0, t_min);
        double best_pivot = -1.0;
        for (int r = 0; r < m; ++r) {
          double t;
          bool low;
          if (!limit_of(r, t, low) || t > t_min + slack) continue;
          const bool take = bland ? (leave < 0 || head[r] < head[leave])
                                  : std::abs(alpha[r]) > best_pivot;
          if (take) {
            best_pivot = std::abs(alpha[r]);
            leave = r;
            leave_at_lower = low;
            step = t;
          }
        }
      }
      if (!std::isfinite(step)) {
        if (phase1) throw NumericalError("unbounded ray in phase 1");
        sol.status = LpStatus::Unbounded;
        break;
      }

      // Update primal values.
      x[enter] += dir * step;
      if (step != 0.0) {
        for (int r = 0; r < m; ++r) x[head[r]] -= dir * alpha[r] * step;
      }
      ++iter;
      ++since_refactor;
      // Steps that barely move the objective count as degenerate: rounding
      // noise in x otherwise keeps resetting the anti-cycling counter.
      if (std::abs(enter_d) * step <= 1e-9) {
        if (++degenerate_run >= opt.bland_after_degenerate) bland = true;
      } else {
        degenerate_run = 0;
        bland = false;
      }

      if (leave < 0) {
        status[enter] = dir > 0 ? VarStatus::AtUpper : VarStatus::AtLower;
        x[enter] = dir > 0 ? hi[enter] : lo[enter];
        continue;
      }

      const int out = head[leave];
      if (lo[out] == hi[out]) {
        status[out] = VarStatus::Fixed;
        x[out] = lo[out];
      } else if (leave_at_lower) {
        status[out] = VarStatus::AtLower;
        x[out] = lo[out];
      } else {
        status[out] = VarStatus::AtUpper;
        x[out] = hi[out];
      }
      if (!std::isfinite(x[out])) throw NumericalError("leaving variable has no finite bound");
      head[leave] = enter;
      status[enter] = VarStatus::Basic;

      // Eta update of the dense inverse.
      const double piv = alpha[leave];
      if (std::abs(piv) < opt.pivot_tol) {
        if (++recoveries > 5) throw NumericalError("pivot too small");
        if (!refactor()) throw NumericalError("basis became singular");
        compute_basic_values();
        since_refactor = 0;
        continue;
      }
      binv.row(leave) /= piv;
      for (int r = 0; r < m; ++r) {
        if (r == leave || alpha[r] == 0.0) continue;
        binv.row(r) -= alpha[r] * binv.row(leave);
      }
    }

    sol.iterations = iter;
    sol.x.assign(x.begin(), x.begin() + n);
    sol.objective_value = 0.0;
    for (int j = 0; j < n; ++j) sol.objective_value += cost[j] * sol.x[j];
    sol.final_basis.status = status;
    sol.final_basis.head = head;
    sol.basis = head;
    std::sort(sol.basis.begin(), sol.basis.end());
    if (sol.status == LpStatus::Optimal) {
      for (int r = 0; r < m; ++r) cb[r] = head[r] < n ? cost[head[r]] : 0.0;
      y = binv.transpose() * cb;
      sol.row_duals.assign(y.data(), y.data() + m);
      sol.reduced_costs.resize(n);
      for (int j = 0; j < n; ++j)
        sol.reduced_costs[j] = status[j] == VarStatus::Basic ? 0.0 : cost[j] - dot_column(y, j);
      sol.is_vertex = true;
      for (int j = 0; j < n; ++j) {
        if (status[j] == VarStatus::Free) sol.is_vertex = false;
      }
    }
    return sol;
  }
};

SimplexSolver::SimplexSolver(const LinearProgram& lp, SimplexOptions options)
    : impl_(std::make_unique<Impl>(lp, options)) {}
SimplexSolver::~SimplexSolver() = default;
SimplexSolver::SimplexSolver(SimplexSolver&&) noexcept = default;
SimplexSolver& SimplexSolver::operator=(SimplexSolver&&) noexcept = default;

LpSolution SimplexSolver::solve() {
  std::span<const double> lo(impl_->base_lo.data(), impl_->n);
  std::span<const double> hi(impl_->base_hi.data(), impl_->n);
  std::vector<double> l(lo.begin(), lo.end()), h(hi.begin(), hi.end());
  return impl_->run(l, h, nullptr);
}

LpSolution SimplexSolver::solve(std::span<const double> lower, std::span<const double> upper,
                                const Basis* warm) {
  return impl_->run(lower, upper, warm);
}

int SimplexSolver::num_vars() const { return impl_->n; }
int SimplexSolver::num_rows() const { return impl_->m; }

LpSolution solve_lp(const LinearProgram& lp, const SimplexOptions& options) {
  SimplexSolver solver(lp, options);
  return solver.solve();
}

}  // namespace finebal::lp
