/*
 * SPDX-FileCopyrightText: Copyright (c) 2026, The finebal Authors. All rights reserved.
 * SPDX-License-Identifier: Apache-2.0
 */
#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "finebal/data.hpp"
#include "finebal/design.hpp"

namespace finebal {

class InferenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Complete blocks: one outcome per group and level; levels[0] is the baseline.
struct MatchedGroups {
  std::vector<std::string> levels;
  std::vector<std::string> group_ids;
  std::vector<std::vector<double>> values;  // [group][level]

  int num_groups() const { return static_cast<int>(values.size()); }
  int num_levels() const { return static_cast<int>(levels.size()); }
  int level_index(const std::string& label) const;
  void validate() const;

  /// Group t holds the outcome of each level's unit paired with template row t.
  static MatchedGroups from_design(const MatchedDesign& design, const Dataset& data,
                                   const std::string& outcome);
};

/// outcome(u) - outcome(baseline) per group.
std::vector<double> pair_differences(const MatchedGroups& groups, int u);
std::vector<double> pair_differences(const MatchedGroups& groups, const std::string& level);

/// Median of the Walsh averages (d_i + d_j) / 2, i <= j.
double hodges_lehmann(std::span<const double> d);

/// Index C such that [W_(C), W_(N+1-C)] (1-based order statistics of the N
/// Walsh averages) is a two-sided signed-rank interval at level alpha. Exact
/// null for n <= 50, normal approximation beyond; clamped to [1, (N+1)/2].
long long signed_rank_order(int n, double alpha);
std::pair<double, double> signed_rank_interval(std::span<const double> d, double alpha);

struct ContrastOptions {
  double alpha = 0.05;
  long mc_draws = 100000;
  std::uint64_t seed = 1;
  int workers = 1;
};

struct ContrastEstimate {
  std::string level;
  double estimate = 0.0;
  double lo = 0.0, hi = 0.0;
  double rank_sum = 0.0;
  double rank_difference = 0.0;  // R_u - R_baseline
  bool significant = false;
};

struct ContrastResult {
  std::string baseline;
  double baseline_rank_sum = 0.0;
  std::vector<ContrastEstimate> contrasts;  // one per non-baseline level
  double critical_value = 0.0;             // r*, in rank units
  double adjusted_alpha = 0.0;             // per-contrast level used for the intervals
  long mc_draws = 0;
  std::vector<double> null_max;            // sorted Monte Carlo draws of max_u |R_u - R_1|

  /// Monte Carlo estimate of P(max_u |R_u - R_1| >= c).
  double tail_probability(double c) const;
};

/// Many-to-one rank comparison against the baseline with experiment-wise
/// level alpha. The null is sampled in chunks keyed by (seed, chunk index),
/// so results do not depend on the worker count.
ContrastResult simultaneous_contrasts(const MatchedGroups& groups, const ContrastOptions& opts = {});

struct SensitivityResult {
  std::string level;
  std::optional<double> gamma_critical;  // empty when every difference is zero
  bool capped = false;                   // still significant at the search cap
  double alpha = 0.05;
  int direction = 0;                     // +1: positive effect tested, -1: negative
  double p_value = 1.0;                  // at gamma = 1
};

/// Upper bound on the one-sided signed-rank p-value when hidden bias can
/// multiply the odds of exposure by gamma.
double rosenbaum_upper_p(std::span<const double> d, double gamma, int direction);

/// Largest gamma in [1, 1000] with upper p < alpha, by bisection to 0.01.
SensitivityResult rosenbaum_gamma(std::span<const double> d, double alpha = 0.05);

/// level,<outcome>_estimate,<outcome>_ci_lo,<outcome>_ci_hi,<outcome>_significant,...
std::string contrast_table(const std::vector<std::string>& outcomes,
                           const std::vector<ContrastResult>& results);
/// level,<outcome>_gamma_c,<outcome>_direction,<outcome>_capped,...
std::string sensitivity_table(const std::vector<std::string>& outcomes,
                              const std::vector<std::vector<SensitivityResult>>& results);

}  // namespace finebal
