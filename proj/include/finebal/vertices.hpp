/*
 * SPDX-FileCopyrightText: Copyright (c) 2026, The finebal Authors. All rights reserved.
 * SPDX-License-Identifier: Apache-2.0
 */
#pragma once

#include <stdexcept>
#include <vector>

#include "finebal/lp.hpp"

namespace finebal::lp {

class EnumerationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct EnumerationOptions {
  int max_vars = 25;
  long basis_budget = 10'000'000;
  double integrality_tol = 1e-7;
  double dedup_tol = 1e-7;
};

struct VertexSet {
  std::vector<std::vector<double>> vertices;  // lexicographically sorted
  std::vector<bool> fractional;               // parallel to vertices
  int integral_count = 0;
  int fractional_count = 0;
  // Search metadata.
  long bases_visited = 0;
  int redundant_rows = 0;
  int redundant_bounds = 0;
  bool pointed = true;

  std::size_t size() const { return vertices.size(); }
  /// Index of a vertex within `tol` of `point`, or -1.
  int find(const std::vector<double>& point, double tol = 1e-7) const;
};

/// All extreme points of the feasible region of `lp` (the objective is
/// ignored). Walks the graph of feasible bases by simplex pivots, including
/// degenerate ones, after dropping constraints and bounds that are implied by
/// the rest. Returns an empty set for infeasible or non-pointed regions.
VertexSet enumerate_vertices(const LinearProgram& lp, const EnumerationOptions& options = {});

}  // namespace finebal::lp
