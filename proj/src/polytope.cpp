/*
 * SPDX-FileCopyrightText: Copyright (c) 2026, The finebal Authors. All rights reserved.
 * SPDX-License-Identifier: Apache-2.0
 */
#include "finebal/polytope.hpp"

#include <string>

namespace finebal {

ToyInstance nonintegral_instance() {
  ToyInstance in;
  std::vector<Covariate> covs(3);
  for (int p = 0; p < 3; ++p) {
    covs[p].name = "c" + std::to_string(p + 1);
    covs[p].categories = {"1", "2", "3"};
  }
  in.schema = CovariateSchema(covs);
  const std::vector<std::vector<std::int32_t>> tmpl = {{0, 0, 0}, {1, 1, 1}, {2, 2, 2}};
  const std::vector<std::vector<std::int32_t>> level = {{0, 0, 0}, {2, 2, 2}, {0, 1, 2},
                                                        {2, 1, 0}, {1, 0, 1}, {1, 2, 1}};
  auto push = [&](const std::string& id, const std::vector<std::int32_t>& x, UnitSet& set) {
    Unit u;
    u.id = id;
    u.x = x;
    set.push_back(static_cast<std::int32_t>(in.units.size()));
    in.units.push_back(std::move(u));
  };
  for (std::size_t i = 0; i < tmpl.size(); ++i) push("t" + std::to_string(i + 1), tmpl[i], in.template_units);
  for (std::size_t i = 0; i < level.size(); ++i) push("l" + std::to_string(i + 1), level[i], in.level_units);
  return in;
}

namespace {

lp::LinearProgram with_cardinality(const lp::LinearProgram& src, double total) {
  lp::LinearProgram out;
  for (int j = 0; j < src.num_vars(); ++j) out.add_variable(src.lower()[j], src.upper()[j], src.objective()[j]);
  const int last = src.num_constraints() - 1;
  for (int i = 0; i <= last; ++i) {
    const auto& c = src.constraint(i);
    out.add_constraint(c.terms, c.relation, i == last ? total : c.rhs);
  }
  return out;
}

nlohmann::json describe(const MatchModel& model, const lp::VertexSet& vs, int total) {
  const int L = model.L();
  std::vector<double> half(model.lp().num_vars(), 0.0);
  for (int l = 0; l < L; ++l) half[l] = 0.5;
  nlohmann::json j;
  j["sum_z"] = total;
  j["vertices"] = vs.size();
  j["fractional"] = vs.fractional_count;
  j["integral"] = vs.integral_count;
  j["all_halves"] = vs.find(half);
  j["points"] = nlohmann::json::array();
  for (std::size_t i = 0; i < vs.size(); ++i) {
    const auto& x = vs.vertices[i];
    std::vector<double> z(x.begin(), x.begin() + L), v(x.begin() + model.v_offset(), x.end());
    j["points"].push_back({{"z", z}, {"v", v}, {"fractional", static_cast<bool>(vs.fractional[i])}});
  }
  return j;
}

}  // namespace

nlohmann::json polytope_report(const MatchModel& model, const lp::EnumerationOptions& options) {
  if (model.kind() != FormulationKind::UnitSelection)
    throw ModelError("vertex report needs the unit-selection formulation");
  nlohmann::json j;
  j["T"] = model.T();
  j["L"] = model.L();
  j["num_v"] = model.num_v();
  j["conventions"] = nlohmann::json::array();
  j["conventions"].push_back(describe(model, lp::enumerate_vertices(model.lp(), options), model.T()));
  if (model.T() != 1)
    j["conventions"].push_back(
        describe(model, lp::enumerate_vertices(with_cardinality(model.lp(), 1.0), options), 1));
  return j;
}

}  // namespace finebal
