/*
 * SPDX-FileCopyrightText: Copyright (c) 2026, The finebal Authors. All rights reserved.
 * SPDX-License-Identifier: Apache-2.0
 */
#include "finebal/vertices.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <map>
#include <string>
#include <unordered_set>

#include <Eigen/Dense>

namespace finebal::lp {

int VertexSet::find(const std::vector<double>& point, double tol) const {
  for (std::size_t v = 0; v < vertices.size(); ++v) {
    const auto& w = vertices[v];
    if (w.size() != point.size()) continue;
    bool same = true;
    for (std::size_t j = 0; j < w.size() && same; ++j) same = std::abs(w[j] - point[j]) <= tol;
    if (same) return static_cast<int>(v);
  }
  return -1;
}

namespace {

constexpr double kRedundancyTol = 1e-9;
constexpr double kRatioTol = 1e-9;
constexpr double kPivotTol = 1e-9;

// Drops inequality rows and finite bounds implied by the remaining system.
LinearProgram prune_redundant(const LinearProgram& lp, int& rows_dropped, int& bounds_dropped) {
  const int n = lp.num_vars();
  std::vector<double> lo = lp.lower(), hi = lp.upper();
  std::vector<bool> keep(lp.num_constraints(), true);

  auto build = [&](int skip_row) {
    LinearProgram out;
    for (int j = 0; j < n; ++j) out.add_variable(lo[j], hi[j]);
    for (int i = 0; i < lp.num_constraints(); ++i) {
      if (!keep[i] || i == skip_row) continue;
      const auto& c = lp.constraint(i);
      out.add_constraint(c.terms, c.relation, c.rhs);
    }
    return out;
  };

  for (int i = 0; i < lp.num_constraints(); ++i) {
    const auto& c = lp.constraint(i);
    if (c.relation == Relation::Equal) continue;
    LinearProgram probe = build(i);
    // Push the row's activity toward violation.
    const double sign = c.relation == Relation::LessEqual ? -1.0 : 1.0;
    for (const auto& t : c.terms) probe.set_cost(t.var, sign * t.coef);
    auto sol = solve_lp(probe);
    if (sol.status != LpStatus::Optimal) continue;
    const double activity = sign * sol.objective_value;
    const bool implied = c.relation == Relation::LessEqual ? activity <= c.rhs + kRedundancyTol
                                                          : activity >= c.rhs - kRedundancyTol;
    if (implied) {
      keep[i] = false;
      ++rows_dropped;
    }
  }
  for (int j = 0; j < n; ++j) {
    for (int side = 0; side < 2; ++side) {
      const double bound = side == 0 ? lo[j] : hi[j];
      if (!std::isfinite(bound)) continue;
      const double saved = bound;
      (side == 0 ? lo[j] : hi[j]) = side == 0 ? -kInf : kInf;
      LinearProgram probe = build(-1);
      probe.set_cost(j, side == 0 ? 1.0 : -1.0);
      auto sol = solve_lp(probe);
      bool implied = false;
      if (sol.status == LpStatus::Optimal) {
        implied = side == 0 ? sol.x[j] >= saved - kRedundancyTol
                            : sol.x[j] <= saved + kRedundancyTol;
      }
      if (implied) {
        ++bounds_dropped;
      } else {
        (side == 0 ? lo[j] : hi[j]) = saved;
      }
    }
  }
  return build(-1);
}

// Dense view of [A | -I] for a small program.
struct DenseSystem {
  int n = 0, m = 0;
  Eigen::MatrixXd full;  // m x (n + m)
  std::vector<double> lo, hi;

  explicit DenseSystem(const LinearProgram& lp) : n(lp.num_vars()), m(lp.num_constraints()) {
    full = Eigen::MatrixXd::Zero(m, n + m);
    lo = lp.lower();
    hi = lp.upper();
    lo.resize(n + m);
    hi.resize(n + m);
    for (int i = 0; i < m; ++i) {
      const auto& c = lp.constraint(i);
      for (const auto& t : c.terms) full(i, t.var) = t.coef;
      full(i, n + i) = -1.0;
      lo[n + i] = c.relation == Relation::LessEqual ? -kInf : c.rhs;
      hi[n + i] = c.relation == Relation::GreaterEqual ? kInf : c.rhs;
    }
  }
  bool is_free(int j) const { return std::isinf(lo[j]) && std::isinf(hi[j]); }
};

struct State {
  std::vector<VarStatus> status;
  std::vector<int> basic;  // sorted
};

std::string key_of(const std::vector<VarStatus>& status) {
  return std::string(reinterpret_cast<const char*>(status.data()), status.size());
}

// Factorizes the basis and fills every variable's value. False if singular.
bool evaluate(const DenseSystem& sys, const State& s, Eigen::MatrixXd& binv,
              std::vector<double>& x) {
  const int N = sys.n + sys.m;
  x.assign(N, 0.0);
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(sys.m);
  for (int j = 0; j < N; ++j) {
    switch (s.status[j]) {
      case VarStatus::AtLower:
      case VarStatus::Fixed: x[j] = sys.lo[j]; break;
      case VarStatus::AtUpper: x[j] = sys.hi[j]; break;
      default: break;
    }
    if (s.status[j] != VarStatus::Basic && x[j] != 0.0) rhs -= sys.full.col(j) * x[j];
  }
  if (sys.m == 0) {
    binv.resize(0, 0);
    return true;
  }
  Eigen::MatrixXd B(sys.m, sys.m);
  for (int r = 0; r < sys.m; ++r) B.col(r) = sys.full.col(s.basic[r]);
  Eigen::FullPivLU<Eigen::MatrixXd> lu(B);
  if (!lu.isInvertible()) return false;
  binv = lu.inverse();
  Eigen::VectorXd xb = binv * rhs;
  for (int r = 0; r < sys.m; ++r) x[s.basic[r]] = xb[r];
  return true;
}

// Blocking step for basic row r when the entering variable moves by +t*dir.
// Returns false when that basic variable does not block.
bool block(const DenseSystem& sys, int var, double xv, double alpha, double dir, double& t,
           bool& at_lower) {
  if (std::abs(alpha) <= kPivotTol || sys.is_free(var)) return false;
  const double rate = -dir * alpha;
  if (rate < 0.0) {
    if (!std::isfinite(sys.lo[var])) return false;
    at_lower = true;
    t = std::max(0.0, (xv - sys.lo[var]) / -rate);
  } else {
    if (!std::isfinite(sys.hi[var])) return false;
    at_lower = false;
    t = std::max(0.0, (sys.hi[var] - xv) / rate);
  }
  return true;
}

State pivot(const DenseSystem& sys, const State& s, int enter, int leave_var, bool at_lower) {
  State next = s;
  next.status[enter] = VarStatus::Basic;
  if (sys.lo[leave_var] == sys.hi[leave_var]) {
    next.status[leave_var] = VarStatus::Fixed;
  } else {
    next.status[leave_var] = at_lower ? VarStatus::AtLower : VarStatus::AtUpper;
  }
  auto it = std::find(next.basic.begin(), next.basic.end(), leave_var);
  *it = enter;
  std::sort(next.basic.begin(), next.basic.end());
  return next;
}

}  // namespace

VertexSet enumerate_vertices(const LinearProgram& input, const EnumerationOptions& options) {
  if (input.num_vars() > options.max_vars)
    throw EnumerationError("vertex enumeration is limited to " +
                           std::to_string(options.max_vars) + " variables, program has " +
                           std::to_string(input.num_vars()));
  VertexSet result;
  {
    LinearProgram feas = input;
    for (int j = 0; j < feas.num_vars(); ++j) feas.set_cost(j, 0.0);
    if (solve_lp(feas).status != LpStatus::Optimal) return result;
  }

  LinearProgram lp = prune_redundant(input, result.redundant_rows, result.redundant_bounds);
  for (int j = 0; j < lp.num_vars(); ++j) lp.set_cost(j, 0.0);
  const DenseSystem sys(lp);
  const int n = sys.n, m = sys.m, N = n + m;

  // Pointed iff the free columns are linearly independent.
  std::vector<int> free_vars;
  for (int j = 0; j < n; ++j) {
    if (sys.is_free(j)) free_vars.push_back(j);
  }
  if (!free_vars.empty()) {
    Eigen::MatrixXd F(m, free_vars.size());
    for (std::size_t k = 0; k < free_vars.size(); ++k) F.col(k) = sys.full.col(free_vars[k]);
    Eigen::FullPivLU<Eigen::MatrixXd> lu(F);
    if (lu.rank() < static_cast<int>(free_vars.size())) {
      result.pointed = false;
      return result;
    }
  }

  // Feasible starting basis.
  auto start = solve_lp(lp);
  if (start.status != LpStatus::Optimal) return result;
  State state{start.final_basis.status, start.final_basis.head};
  std::sort(state.basic.begin(), state.basic.end());

  Eigen::MatrixXd binv;
  std::vector<double> x;
  // Move free variables into the basis; they never leave afterwards.
  for (int j : free_vars) {
    if (state.status[j] == VarStatus::Basic) continue;
    if (!evaluate(sys, state, binv, x)) throw EnumerationError("singular starting basis");
    Eigen::VectorXd alpha = binv * sys.full.col(j);
    bool moved = false;
    for (double dir : {1.0, -1.0}) {
      double best = kInf;
      int leave = -1;
      bool leave_lower = false;
      for (int r = 0; r < m; ++r) {
        double t;
        bool low;
        const int var = state.basic[r];
        if (block(sys, var, x[var], alpha[r], dir, t, low) && t < best - kRatioTol) {
          best = t;
          leave = var;
          leave_lower = low;
        }
      }
      if (leave >= 0) {
        state = pivot(sys, state, j, leave, leave_lower);
        moved = true;
        break;
      }
    }
    if (!moved) {
      result.pointed = false;
      return result;
    }
  }

  std::unordered_set<std::string> seen;
  std::deque<State> queue;
  seen.insert(key_of(state.status));
  queue.push_back(std::move(state));

  std::map<std::vector<long long>, int> by_key;
  auto record = [&](const std::vector<double>& point) {
    std::vector<long long> key(point.size());
    for (std::size_t j = 0; j < point.size(); ++j)
      key[j] = std::llround(point[j] / options.dedup_tol);
    if (by_key.count(key)) return;
    if (result.find(point, options.dedup_tol) >= 0) return;
    by_key.emplace(std::move(key), static_cast<int>(result.vertices.size()));
    result.vertices.push_back(point);
  };

  while (!queue.empty()) {
    State s = std::move(queue.front());
    queue.pop_front();
    ++result.bases_visited;
    if (!evaluate(sys, s, binv, x)) continue;
    bool feasible = true;
    for (int j = 0; j < N && feasible; ++j) {
      feasible = x[j] >= sys.lo[j] - 1e-7 && x[j] <= sys.hi[j] + 1e-7;
    }
    if (!feasible) continue;
    record(std::vector<double>(x.begin(), x.begin() + n));

    auto push = [&](State next) {
      if (!seen.insert(key_of(next.status)).second) return;
      if (static_cast<long>(seen.size()) > options.basis_budget)
        throw EnumerationError("basis budget of " + std::to_string(options.basis_budget) +
                               " exceeded during vertex enumeration");
      queue.push_back(std::move(next));
    };

    for (int j = 0; j < N; ++j) {
      const VarStatus st = s.status[j];
      if (st == VarStatus::Basic) continue;
      Eigen::VectorXd alpha = m > 0 ? Eigen::VectorXd(binv * sys.full.col(j)) : Eigen::VectorXd();
      std::vector<double> dirs;
      if (st == VarStatus::AtLower) dirs = {1.0};
      if (st == VarStatus::AtUpper) dirs = {-1.0};
      if (st == VarStatus::Fixed) dirs = {1.0, -1.0};
      for (double dir : dirs) {
        const double own = st == VarStatus::Fixed ? 0.0 : sys.hi[j] - sys.lo[j];
        std::vector<double> t(m, kInf);
        std::vector<bool> low(m, false);
        double best = own;
        for (int r = 0; r < m; ++r) {
          bool l;
          double tr;
          const int var = s.basic[r];
          if (block(sys, var, x[var], alpha[r], dir, tr, l)) {
            t[r] = tr;
            low[r] = l;
            best = std::min(best, tr);
          }
        }
        if (!std::isfinite(best)) continue;  // extreme ray
        for (int r = 0; r < m; ++r) {
          if (t[r] <= best + kRatioTol) push(pivot(sys, s, j, s.basic[r], low[r]));
        }
        if (st != VarStatus::Fixed && own <= best + kRatioTol) {
          State flip = s;
          flip.status[j] = st == VarStatus::AtLower ? VarStatus::AtUpper : VarStatus::AtLower;
          push(std::move(flip));
        }
      }
    }
  }

  std::sort(result.vertices.begin(), result.vertices.end());
  for (const auto& v : result.vertices) {
    bool frac = false;
    for (double c : v) {
      if (std::abs(c - std::round(c)) > options.integrality_tol) frac = true;
    }
    result.fractional.push_back(frac);
    (frac ? result.fractional_count : result.integral_count)++;
  }
  return result;
}

}  // namespace finebal::lp
