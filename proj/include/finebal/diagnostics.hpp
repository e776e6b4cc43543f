/*
 * SPDX-FileCopyrightText: Copyright (c) 2026, The finebal Authors. All rights reserved.
 * SPDX-License-Identifier: Apache-2.0
 */
#pragma once

#include <span>
#include <string>
#include <vector>

#include "finebal/data.hpp"
#include "finebal/design.hpp"
#include "json.hpp"

namespace finebal {

struct BalanceRow {
  int covariate = 0;
  int category = 0;
  int template_count = 0;
  std::vector<int> level_counts;  // one per design level
  std::vector<bool> flagged;      // level count differs from the template
};

struct BalanceTable {
  int T = 0;
  std::vector<std::string> level_labels;
  std::vector<BalanceRow> rows;              // covariate-major, category order
  std::vector<long long> total_deviation;   // sum |template - level| per level

  bool balanced() const;
  /// covariate,category,template,<level>... with one row per category.
  std::string to_csv(const CovariateSchema& schema) const;
  nlohmann::json to_json(const CovariateSchema& schema) const;
};

BalanceTable balance_table(const MatchedDesign& design, const Dataset& data);

/// (mean1 - mean2) / pooled_sd; a zero denominator yields 0 when the means
/// agree and is indeterminate otherwise.
struct Smd {
  double value = 0.0;
  bool indeterminate = false;
};
Smd standardized_difference(double mean1, double mean2, double pooled_sd);

/// Pooled SD sqrt((s1^2 + s2^2) / 2) of an indicator over two groups, with
/// sample variances.
double pooled_sd(std::span<const Unit> units, std::span<const std::int32_t> g1,
                 std::span<const std::int32_t> g2, int covariate, int category);

/// Before and after standardized differences for one indicator. Both use the
/// pooled SD of the before groups.
std::pair<Smd, Smd> smd(std::span<const Unit> units, std::span<const std::int32_t> before1,
                        std::span<const std::int32_t> before2,
                        std::span<const std::int32_t> after1,
                        std::span<const std::int32_t> after2, int covariate, int category);

struct SmdRow {
  std::string level;
  int covariate = 0;
  int category = 0;
  Smd before, after;
};

/// Per level and indicator: level units vs template before matching, the
/// selected units vs template after.
struct SmdReport {
  std::vector<SmdRow> rows;

  bool all_after_zero() const;
  /// level,covariate,category,before,after (indeterminate cells are "NA").
  std::string to_csv(const CovariateSchema& schema) const;
  /// indicator,level,before,after for plotting.
  std::string plot_data(const CovariateSchema& schema) const;
  nlohmann::json to_json(const CovariateSchema& schema) const;
};

SmdReport smd_report(const MatchedDesign& design, const Dataset& data);

}  // namespace finebal
