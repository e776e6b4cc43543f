/*
 * SPDX-FileCopyrightText: Copyright (c) 2026, The finebal Authors. All rights reserved.
 * SPDX-License-Identifier: Apache-2.0
 */
#pragma once

#include <cstdint>
#include <limits>
#include <memory>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace finebal::lp {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

/// Malformed program (bad index, non-finite rhs, ...).
class LpError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// The simplex lost accuracy it could not recover by refactorizing.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Relation { LessEqual, Equal, GreaterEqual };

struct Term {
  int var;
  double coef;
};

struct Constraint {
  std::vector<Term> terms;
  Relation relation;
  double rhs;
};

/// min c'x  s.t.  rows (<=, =, >=) and lo <= x <= hi.
class LinearProgram {
 public:
  LinearProgram() = default;
  explicit LinearProgram(int num_vars, double lo = 0.0, double hi = kInf);

  int add_variable(double lo, double hi, double cost = 0.0, std::string name = {});
  void set_cost(int var, double cost);
  void set_bounds(int var, double lo, double hi);
  void set_name(int var, std::string name);

  /// Duplicate variable indices within a row are summed.
  void add_constraint(std::vector<Term> terms, Relation relation, double rhs);
  void add_dense_constraint(std::span<const double> row, Relation relation, double rhs);

  int num_vars() const { return static_cast<int>(cost_.size()); }
  int num_constraints() const { return static_cast<int>(rows_.size()); }
  const std::vector<double>& objective() const { return cost_; }
  const std::vector<double>& lower() const { return lo_; }
  const std::vector<double>& upper() const { return hi_; }
  const std::vector<Constraint>& constraints() const { return rows_; }
  const Constraint& constraint(int i) const { return rows_.at(i); }
  /// Name used in model dumps; defaults to x<j>.
  std::string var_name(int var) const;

  double objective_value(std::span<const double> x) const;
  double row_activity(int row, std::span<const double> x) const;
  /// Largest violation over rows and bounds (0 when feasible).
  double max_violation(std::span<const double> x) const;
  double max_row_violation(std::span<const double> x) const;
  double max_bound_violation(std::span<const double> x) const;

  std::size_t num_nonzeros() const;

 private:
  void check_var(int var) const;

  std::vector<double> cost_, lo_, hi_;
  std::vector<std::string> names_;
  std::vector<Constraint> rows_;
};

enum class LpStatus { Optimal, Infeasible, Unbounded };
const char* to_string(LpStatus s);

enum class VarStatus : std::uint8_t { Basic, AtLower, AtUpper, Free, Fixed };

/// Basis over structural variables 0..n-1 followed by one logical per row.
/// Row i's logical r_i satisfies a_i x - r_i = 0 with bounds from the row's
/// relation, so every variable index >= n names a row.
struct Basis {
  std::vector<VarStatus> status;  // size n + m
  std::vector<int> head;          // basic variable per row position, size m
  bool empty() const { return status.empty(); }
};

struct LpSolution {
  LpStatus status = LpStatus::Infeasible;
  std::vector<double> x;
  double objective_value = 0.0;
  std::vector<int> basis;  // sorted basic variable indices (structural and logical)
  bool is_vertex = false;
  std::vector<double> row_duals;      // y with reduced cost d = c - A'y
  std::vector<double> reduced_costs;  // structural variables
  long iterations = 0;
  Basis final_basis;  // reusable as a warm start
};

struct SimplexOptions {
  double feasibility_tol = 1e-8;
  double optimality_tol = 1e-8;
  double pivot_tol = 1e-9;
  long bland_after_degenerate = 1000;
  int refactor_interval = 100;
  double instability_tol = 1e-6;
  long max_iterations = 0;  // 0: automatic
  // Columns priced per block when the program has more than four blocks of
  // columns; pricing resumes where the previous iteration stopped.
  int pricing_block = 1024;
};

/// Two-phase bounded-variable revised simplex with a dense basis inverse.
/// Holds the constraint matrix so repeated solves can change bounds and
/// start from an earlier basis.
class SimplexSolver {
 public:
  explicit SimplexSolver(const LinearProgram& lp, SimplexOptions options = {});
  ~SimplexSolver();
  SimplexSolver(SimplexSolver&&) noexcept;
  SimplexSolver& operator=(SimplexSolver&&) noexcept;

  LpSolution solve();
  /// Solves with replacement structural bounds, optionally warm-started.
  LpSolution solve(std::span<const double> lower, std::span<const double> upper,
                   const Basis* warm = nullptr);

  int num_vars() const;
  int num_rows() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

LpSolution solve_lp(const LinearProgram& lp, const SimplexOptions& options = {});

/// Writes the program in CPLEX LP text format.
void write_lp_format(const LinearProgram& lp, std::ostream& out);

}  // namespace finebal::lp
