/*
 * SPDX-FileCopyrightText: Copyright (c) 2026, The finebal Authors. All rights reserved.
 * SPDX-License-Identifier: Apache-2.0
 */
#include "finebal/diagnostics.hpp"

#include <charconv>
#include <cmath>
#include <limits>

namespace finebal {

namespace {

std::string num(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

std::string smd_cell(const Smd& s) { return s.indeterminate ? "NA" : num(s.value); }

nlohmann::json smd_json(const Smd& s) {
  return s.indeterminate ? nlohmann::json(nullptr) : nlohmann::json(s.value);
}

double indicator_mean(std::span<const Unit> units, std::span<const std::int32_t> g, int p, int k) {
  if (g.empty()) return 0.0;
  double hits = 0.0;
  for (auto i : g) hits += units[i].x[p] == k;
  return hits / static_cast<double>(g.size());
}

double indicator_var(std::span<const Unit> units, std::span<const std::int32_t> g, int p, int k) {
  const double n = static_cast<double>(g.size());
  if (n < 2) return 0.0;
  const double m = indicator_mean(units, g, p, k);
  return n * m * (1.0 - m) / (n - 1.0);
}

}  // namespace

bool BalanceTable::balanced() const {
  for (auto d : total_deviation) {
    if (d != 0) return false;
  }
  return true;
}

std::string BalanceTable::to_csv(const CovariateSchema& schema) const {
  std::string out = "covariate,category,template";
  for (const auto& l : level_labels) out += "," + csv_escape(l);
  out += "\n";
  for (const auto& r : rows) {
    const auto& cov = schema.covariate(r.covariate);
    out += csv_escape(cov.name) + "," + csv_escape(cov.categories[r.category]) + "," +
           std::to_string(r.template_count);
    for (int c : r.level_counts) out += "," + std::to_string(c);
    out += "\n";
  }
  return out;
}

nlohmann::json BalanceTable::to_json(const CovariateSchema& schema) const {
  nlohmann::json j;
  j["template_size"] = T;
  j["levels"] = level_labels;
  j["total_deviation"] = total_deviation;
  j["rows"] = nlohmann::json::array();
  for (const auto& r : rows) {
    const auto& cov = schema.covariate(r.covariate);
    nlohmann::json flags = nlohmann::json::array();
    for (bool f : r.flagged) flags.push_back(f);
    j["rows"].push_back({{"covariate", cov.name},
                         {"category", cov.categories[r.category]},
                         {"template", r.template_count},
                         {"levels", r.level_counts},
                         {"flagged", flags}});
  }
  return j;
}

BalanceTable balance_table(const MatchedDesign& design, const Dataset& data) {
  const auto& schema = data.schema();
  BalanceTable t;
  t.T = static_cast<int>(design.template_units().size());
  const auto tc = category_counts(data, design.template_units());
  std::vector<CategoryCounts> lc;
  for (const auto& lv : design.levels) {
    t.level_labels.push_back(lv.label);
    lc.push_back(category_counts(data, lv.match.selected));
  }
  t.total_deviation.assign(lc.size(), 0);
  for (int p = 0; p < schema.num_covariates(); ++p) {
    for (int k = 0; k < schema.covariate(p).num_categories(); ++k) {
      BalanceRow r;
      r.covariate = p;
      r.category = k;
      r.template_count = tc.count(p, k);
      for (std::size_t u = 0; u < lc.size(); ++u) {
        const int c = lc[u].count(p, k);
        r.level_counts.push_back(c);
        r.flagged.push_back(c != r.template_count);
        t.total_deviation[u] += std::abs(c - r.template_count);
      }
      t.rows.push_back(std::move(r));
    }
  }
  return t;
}

Smd standardized_difference(double mean1, double mean2, double sd) {
  if (sd > 0.0) return {(mean1 - mean2) / sd, false};
  if (mean1 == mean2) return {0.0, false};
  return {std::numeric_limits<double>::quiet_NaN(), true};
}

double pooled_sd(std::span<const Unit> units, std::span<const std::int32_t> g1,
                 std::span<const std::int32_t> g2, int p, int k) {
  return std::sqrt((indicator_var(units, g1, p, k) + indicator_var(units, g2, p, k)) / 2.0);
}

std::pair<Smd, Smd> smd(std::span<const Unit> units, std::span<const std::int32_t> before1,
                        std::span<const std::int32_t> before2,
                        std::span<const std::int32_t> after1,
                        std::span<const std::int32_t> after2, int p, int k) {
  const double sd = pooled_sd(units, before1, before2, p, k);
  return {standardized_difference(indicator_mean(units, before1, p, k),
                                  indicator_mean(units, before2, p, k), sd),
          standardized_difference(indicator_mean(units, after1, p, k),
                                  indicator_mean(units, after2, p, k), sd)};
}

bool SmdReport::all_after_zero() const {
  for (const auto& r : rows) {
    if (r.after.indeterminate || r.after.value != 0.0) return false;
  }
  return true;
}

std::string SmdReport::to_csv(const CovariateSchema& schema) const {
  std::string out = "level,covariate,category,before,after\n";
  for (const auto& r : rows) {
    const auto& cov = schema.covariate(r.covariate);
    out += csv_escape(r.level) + "," + csv_escape(cov.name) + "," +
           csv_escape(cov.categories[r.category]) + "," + smd_cell(r.before) + "," +
           smd_cell(r.after) + "\n";
  }
  return out;
}

std::string SmdReport::plot_data(const CovariateSchema& schema) const {
  std::string out = "indicator,level,before,after\n";
  for (const auto& r : rows) {
    const auto& cov = schema.covariate(r.covariate);
    out += csv_escape(cov.name + "=" + cov.categories[r.category]) + "," + csv_escape(r.level) +
           "," + smd_cell(r.before) + "," + smd_cell(r.after) + "\n";
  }
  return out;
}

nlohmann::json SmdReport::to_json(const CovariateSchema& schema) const {
  nlohmann::json j = nlohmann::json::array();
  for (const auto& r : rows) {
    const auto& cov = schema.covariate(r.covariate);
    j.push_back({{"level", r.level},
                 {"covariate", cov.name},
                 {"category", cov.categories[r.category]},
                 {"before", smd_json(r.before)},
                 {"after", smd_json(r.after)}});
  }
  return j;
}

SmdReport smd_report(const MatchedDesign& design, const Dataset& data) {
  SmdReport rep;
  const auto& schema = data.schema();
  const auto& tmpl = design.template_units();
  for (const auto& lv : design.levels) {
    const UnitSet& level = data.level(lv.label);
    for (int p = 0; p < schema.num_covariates(); ++p) {
      for (int k = 0; k < schema.covariate(p).num_categories(); ++k) {
        auto [b, a] = smd(data.units(), level, tmpl, lv.match.selected, tmpl, p, k);
        rep.rows.push_back({lv.label, p, k, b, a});
      }
    }
  }
  return rep;
}

}  // namespace finebal
