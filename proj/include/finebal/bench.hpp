/*
 * SPDX-FileCopyrightText: Copyright (c) 2026, The finebal Authors. All rights reserved.
 * SPDX-License-Identifier: Apache-2.0
 */
#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "finebal/data.hpp"
#include "finebal/mip.hpp"
#include "finebal/model.hpp"
#include "json.hpp"

namespace finebal {

/// Fourteen student and school covariates, 78 categories in total, with an
/// exposure column and two outcomes (attendance, psu).
SchemaConfig study_schema();

struct StudyConfig {
  std::vector<int> level_sizes;     // level labels are "1", "2", ...
  std::uint64_t seed = 1;
  double attendance_effect = 1.5;   // attendance points lost per level step
  double psu_effect = 0.0;
  double confounding = 0.5;         // SES shift from the first to the last level, in SD
  double noise = 1.0;               // multiplies outcome noise; 0 gives exact outcomes
};

/// Level sizes for 3, 5 or 10 exposure levels, multiplied by `scale`.
StudyConfig study_preset(int levels, double scale = 1.0);

struct Study {
  SchemaConfig config;
  Dataset data;
  std::vector<double> pga;  // per unit shaking intensity; NaN for unexposed units
  UnitSet template_units;   // set by superset_study only
};

/// Units with correlated covariates driven by a latent SES score, an
/// exposure-dependent SES shift, and outcomes with a planted level effect.
Study generate_study(const StudyConfig& cfg);

/// T unexposed template units; every level holds a shuffled copy of the
/// template (fresh ids) plus `extra` random units.
Study superset_study(int levels, int T, int extra, std::uint64_t seed);

/// Keeps the originals and appends factor-1 copies whose covariate indices are
/// shifted by a uniform draw from {-1, 0, +1} and clamped. Copy c draws from a
/// stream keyed by (seed, c), so larger factors extend smaller ones.
std::vector<Unit> replicate_and_perturb(std::span<const Unit> level, const CovariateSchema& schema,
                                        int factor, std::uint64_t seed);

struct ScalingSpec {
  std::string level;                 // level of the base dataset to enlarge
  std::vector<int> copy_factors = {1};
  std::vector<int> template_sizes = {1000};
  std::uint64_t seed = 1;            // template draws and perturbation
  int candidates = 1;                // template candidates per size
  BnbConfig bnb;
  void validate(const Dataset& base) const;
  nlohmann::json to_json() const;
};

struct BenchRecord {
  int T = 0;
  long long L = 0;
  int factor = 1;
  double build_time = 0.0;  // seconds
  double solve_time = 0.0;
  long long objective = -1;
  long node_count = 0;
  std::string status;       // solver status or the error message of a failed cell
};

/// One record per (template size, factor) cell, run sequentially.
std::vector<BenchRecord> run_scaling(const Dataset& base, const ScalingSpec& spec);

/// T,L,factor,build_time,solve_time,objective,node_count,status
std::string records_csv(const std::vector<BenchRecord>& records);
/// Rows are template sizes, columns exposure sizes, cells solve minutes.
std::string records_grid(const std::vector<BenchRecord>& records);
/// Seeds, machine descriptor and config hash; no timings.
nlohmann::json scaling_manifest(const ScalingSpec& spec);

/// Least-squares slope of log(y) on log(x).
double loglog_slope(std::span<const double> x, std::span<const double> y);

}  // namespace finebal
