/*
 * SPDX-FileCopyrightText: Copyright (c) 2026, The finebal Authors. All rights reserved.
 * SPDX-License-Identifier: Apache-2.0
 */
#pragma once

#include <limits>
#include <ostream>
#include <vector>

#include "finebal/model.hpp"

namespace finebal {

struct BnbConfig {
  double time_limit = std::numeric_limits<double>::infinity();  // seconds
  long node_limit = std::numeric_limits<long>::max();
  double integrality_tol = 1e-6;
  // Every integral point has an integer objective, so a node is pruned once
  // its bound cannot beat the incumbent by at least one.
  bool objective_integral = true;
  // Improve the rounded root selection by exchanging one selected unit for
  // an unselected one, with sideways moves to cross plateaus.
  bool swap_search = true;
  long swap_moves = 1000;
  bool verbose = false;
  std::ostream* log = nullptr;  // verbose sink; std::clog when null

  void validate() const;
};

enum class MipStatus { Optimal, Feasible, Infeasible };
const char* to_string(MipStatus s);

struct MipSolution {
  MipStatus status = MipStatus::Infeasible;
  std::vector<double> x;  // integer variables rounded
  double objective_value = std::numeric_limits<double>::infinity();
  double best_bound = -std::numeric_limits<double>::infinity();
  double gap = std::numeric_limits<double>::infinity();  // objective - bound
  long node_count = 0;
  double root_lp_value = std::numeric_limits<double>::quiet_NaN();
  bool root_integral = false;
  double wall_time = 0.0;
  std::vector<int> selection;  // level positions used by x
  // Incumbent objective after each improvement and the global bound after each
  // node, for monotonicity checks.
  std::vector<double> incumbent_trace;
  std::vector<double> bound_trace;
};

/// Branch and bound over the binary matching variables of `model`.
MipSolution solve_mip(const MatchModel& model, const BnbConfig& cfg = {});

}  // namespace finebal
