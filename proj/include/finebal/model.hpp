/*
 * SPDX-FileCopyrightText: Copyright (c) 2026, The finebal Authors. All rights reserved.
 * SPDX-License-Identifier: Apache-2.0
 */
#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "finebal/data.hpp"
#include "finebal/lp.hpp"
#include "json.hpp"

namespace finebal {

/// Fine-balance matching formulations of one exposure level against a template.
///
///  PairAssignment: binary m[t,l] per (template unit, level unit) with every
///    template row matched once and every level unit used at most once.
///  PairTotal: the same variables with the per-row equalities replaced by a
///    single total sum(m) = T.
///  UnitSelection: one binary z[l] per level unit with sum(z) = T.
///
/// All three minimize sum v[p,k] with |count_{p,k} - N_{p,k}| <= v[p,k]
/// written as two inequalities.
enum class FormulationKind { PairAssignment, PairTotal, UnitSelection };

const char* to_string(FormulationKind kind);
FormulationKind formulation_from_string(const std::string& s);

struct FormulationStats {
  long long n_vars = 0;
  long long n_constraints = 0;          // linear rows, both halves of each |.| row
  long long n_logical_constraints = 0;  // counting each |.| <= v once
  long long n_integer = 0;
  long long n_nonzeros = 0;
  long long predicted_memory_bytes = 0;

  nlohmann::json to_json() const;
};

/// Sizes of a formulation, computed without building it.
FormulationStats predict_stats(FormulationKind kind, long long T, long long L,
                               const CovariateSchema& schema);

struct ModelOptions {
  // Largest T*L accepted for the pair formulations.
  long long max_pair_vars = 5'000'000;
};

class ModelError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Thrown before allocation when a pair formulation exceeds the size cap.
class SizeGuardError : public ModelError {
 public:
  SizeGuardError(const std::string& what, FormulationStats predicted)
      : ModelError(what), predicted_(predicted) {}
  const FormulationStats& predicted() const { return predicted_; }

 private:
  FormulationStats predicted_;
};

class MatchModel {
 public:
  FormulationKind kind() const { return kind_; }
  const lp::LinearProgram& lp() const { return lp_; }
  const std::vector<int>& integer_vars() const { return integer_vars_; }
  int T() const { return T_; }
  int L() const { return L_; }
  const CategoryCounts& targets() const { return targets_; }
  const CovariateSchema& schema() const { return schema_; }
  const FormulationStats& stats() const { return stats_; }
  /// Dataset indices of the template and level units, in model order.
  const UnitSet& template_units() const { return template_; }
  const UnitSet& level_units() const { return level_; }
  /// Covariate category indices of level position l.
  const std::vector<std::int32_t>& level_covariates(int l) const { return level_x_.at(l); }
  const std::vector<std::int32_t>& template_covariates(int t) const { return template_x_.at(t); }

  // Variable layout: [z block | v block] or [m block row-major | v block].
  int z_var(int l) const;
  int m_var(int t, int l) const;
  int v_var(int p, int k) const;
  int num_v() const { return schema_.total_categories(); }
  int v_offset() const { return v_offset_; }

  /// Semantic name of a variable: z[l], m[t,l] or v[p,k].
  std::string var_name(int var) const;
  /// Inverse of var_name; nullopt if the name does not denote a variable.
  std::optional<int> var_index(const std::string& name) const;
  /// Copy of the relaxation with semantic variable names, for dumps.
  lp::LinearProgram named_program() const;

  /// Level positions (0..L-1) used by a point with integral matching variables.
  std::vector<int> selection_of(std::span<const double> x) const;
  /// Integral point for a selection of level positions. Pair formulations pair
  /// the j-th template row with the j-th selected unit. v is set to the exact
  /// imbalance.
  std::vector<double> point_from_selection(std::span<const int> positions) const;
  /// Rounds the matching variables and recomputes v exactly.
  std::vector<double> complete_point(std::span<const double> x) const;
  /// Category counts of a selection of level positions.
  CategoryCounts counts_of(std::span<const int> positions) const;

 private:
  friend MatchModel build_model(FormulationKind, std::span<const Unit>, std::span<const std::int32_t>,
                                std::span<const std::int32_t>, const CovariateSchema&,
                                const ModelOptions&);
  FormulationKind kind_ = FormulationKind::UnitSelection;
  lp::LinearProgram lp_;
  std::vector<int> integer_vars_;
  int T_ = 0, L_ = 0;
  int v_offset_ = 0;
  CategoryCounts targets_;
  CovariateSchema schema_;
  FormulationStats stats_;
  UnitSet template_, level_;
  std::vector<std::vector<std::int32_t>> level_x_;  // covariates of each level unit
  std::vector<std::vector<std::int32_t>> template_x_;
};

MatchModel build_model(FormulationKind kind, std::span<const Unit> units,
                       std::span<const std::int32_t> template_units,
                       std::span<const std::int32_t> level_units, const CovariateSchema& schema,
                       const ModelOptions& options = {});

/// Exact total imbalance sum |count_{p,k}(selection) - N_{p,k}|.
long long objective_of(std::span<const Unit> units, std::span<const std::int32_t> selection,
                       const CategoryCounts& template_counts, const CovariateSchema& schema);

/// Fractional template-to-unit masses with z[l] = sum_t m[t,l].
struct Assignment {
  int T = 0, L = 0;
  std::map<std::pair<int, int>, double> m;  // (t, l) -> mass, zeros omitted
  std::vector<double> z;

  double at(int t, int l) const;
  double row_sum(int t) const;
  double column_sum(int l) const;
};

/// Splits z (sum T, entries in [0,1]) into template rows by filling rows in
/// unit order; a unit straddling a row boundary is split between the two rows.
Assignment disaggregate(std::span<const double> z, int T);

/// z[l] = sum_t m[t,l] for a point of a pair formulation.
std::vector<double> aggregate(const MatchModel& pair_model, std::span<const double> x);

/// Optimal value of the relaxation.
double relaxation_value(const MatchModel& model);
/// mip_optimum minus the relaxation optimum.
double lp_gap(const MatchModel& model, double mip_optimum);

}  // namespace finebal
