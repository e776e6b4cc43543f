/*
 * SPDX-FileCopyrightText: Copyright (c) 2026, The finebal Authors. All rights reserved.
 * SPDX-License-Identifier: Apache-2.0
 */
#pragma once

#include <vector>

#include "finebal/data.hpp"
#include "finebal/model.hpp"
#include "finebal/vertices.hpp"
#include "json.hpp"

namespace finebal {

/// Small matching instance: units plus the template and level index sets.
struct ToyInstance {
  CovariateSchema schema;
  std::vector<Unit> units;
  UnitSet template_units;
  UnitSet level_units;
};

/// Three covariates with three categories each, template (1,1,1), (2,2,2),
/// (3,3,3) and six level units whose selection polytope has the all-halves
/// point as a vertex.
ToyInstance nonintegral_instance();

/// Vertices of a unit-selection relaxation with sum(z) = T and, for
/// comparison, with sum(z) = 1. Each entry lists counts and every vertex as
/// z and v blocks; "all_halves" is the index of the vertex with every z = 1/2
/// and v = 0, or -1.
nlohmann::json polytope_report(const MatchModel& model, const lp::EnumerationOptions& options = {});

}  // namespace finebal
