/*
 * SPDX-FileCopyrightText: Copyright (c) 2026, The finebal Authors. All rights reserved.
 * SPDX-License-Identifier: Apache-2.0
 */
#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "finebal/data.hpp"
#include "finebal/mip.hpp"
#include "json.hpp"

namespace finebal {

class DesignError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Mean of every category indicator over `subset`, in flat (p, k) order.
std::vector<double> indicator_means(std::span<const Unit> units,
                                    std::span<const std::int32_t> subset,
                                    const CovariateSchema& schema);

/// Rank-based covariance of the indicator columns over a reference set.
/// Each column is replaced by its midranks, the covariance of the ranks is
/// rescaled so every diagonal entry equals the variance of 1..n, and the
/// result is pseudo-inverted. Constant columns are dropped.
struct RankCovariance {
  int reference_size = 0;
  std::vector<int> columns;   // flat indicator indices kept
  std::vector<int> excluded;  // constant over the reference
  Eigen::MatrixXd inverse;    // pseudo-inverse over `columns`, in rank units

  static RankCovariance fit(std::span<const Unit> units, std::span<const std::int32_t> reference,
                            const CovariateSchema& schema);
  /// Distance between two indicator mean vectors.
  double distance(std::span<const double> a, std::span<const double> b) const;
};

double robust_mahalanobis(std::span<const double> a, std::span<const double> b,
                          std::span<const Unit> units, std::span<const std::int32_t> reference,
                          const CovariateSchema& schema);

struct TemplateChoice {
  UnitSet sample;  // sorted dataset indices
  double distance = 0.0;
  int candidates_evaluated = 0;
  std::uint64_t rng_seed = 0;
  int winner = 0;  // index of the chosen draw
  std::vector<double> candidate_distances;
  std::vector<int> excluded_columns;
};

/// Draws R samples of size T without replacement and keeps the one closest
/// to the population profile (first drawn on ties).
TemplateChoice select_template(std::span<const Unit> units, std::span<const std::int32_t> population,
                               int T, int R, std::uint64_t seed, const CovariateSchema& schema);

struct LevelMatch {
  UnitSet selected;  // sorted dataset indices
  long long objective = 0;
  MipStatus status = MipStatus::Infeasible;
  long node_count = 0;
  double root_lp_value = 0.0;
  double gap = 0.0;
  double wall_time = 0.0;
};

LevelMatch match_level(std::span<const Unit> units, std::span<const std::int32_t> template_units,
                       std::span<const std::int32_t> level_units, const CovariateSchema& schema,
                       const BnbConfig& cfg = {});

/// Number of covariates on which two units disagree.
int hamming(const Unit& a, const Unit& b);

/// Minimum-Hamming bijection between template rows and selected units;
/// result[t] is a position in `selected`. Among optimal bijections the
/// lexicographically smallest is returned.
std::vector<int> rematch(std::span<const Unit> units, std::span<const std::int32_t> template_units,
                         std::span<const std::int32_t> selected);

/// Optimal assignment on an integer cost matrix (row-major n x n); same
/// tie-breaking as rematch.
std::vector<int> solve_assignment(std::span<const long long> cost, int n);

struct LevelDesign {
  std::string label;
  LevelMatch match;
  // pairs[t] = dataset index of the unit paired with template row t.
  UnitSet pairs;
  long long pairing_cost = 0;
};

struct MatchedDesign {
  TemplateChoice template_choice;
  std::vector<LevelDesign> levels;  // dataset level order

  const UnitSet& template_units() const { return template_choice.sample; }
  /// Per-level selected ids, pairings and objectives; no timing fields.
  nlohmann::json to_json(const Dataset& data) const;
  static MatchedDesign from_json(const nlohmann::json& j, const Dataset& data);
  /// One row per template unit, one column of matched ids per level.
  std::string groups_csv(const Dataset& data) const;
};

struct DesignConfig {
  int template_size = 1000;
  int candidates = 500;
  std::uint64_t seed = 1;
  int workers = 1;
  BnbConfig bnb;
};

/// Template over all units, then per-level matching and rematching; levels
/// run concurrently on up to cfg.workers threads.
MatchedDesign build_design(const Dataset& data, const DesignConfig& cfg);
/// Same, with a fixed template.
MatchedDesign build_design(const Dataset& data, TemplateChoice choice, const DesignConfig& cfg);

}  // namespace finebal
