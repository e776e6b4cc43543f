#include <random>

#include "doctest.h"
#include "finebal/diagnostics.hpp"
#include "fixtures.hpp"

using namespace finebal;

namespace {

Dataset small_study() {
  std::mt19937_64 rng(8);
  std::vector<Unit> units;
  const std::vector<std::string> order = {"low", "high"};
  for (int u = 0; u < 2; ++u) {
    for (int i = 0; i < 25; ++i) {
      auto x = std::vector<std::int32_t>{static_cast<int>(rng() % 2), static_cast<int>(rng() % 3),
                                         static_cast<int>((rng() % 4 + u) % 4)};
      auto unit = fixtures::make_unit(order[u] + std::to_string(i), x);
      unit.exposure = order[u];
      units.push_back(unit);
    }
  }
  return Dataset(fixtures::make_schema({2, 3, 4}), units, order);
}

}  // namespace

TEST_CASE("standardized difference arithmetic") {
  CHECK(standardized_difference(0.6, 0.4, 0.5).value == doctest::Approx(0.4));
  CHECK_FALSE(standardized_difference(0.6, 0.4, 0.5).indeterminate);
  const auto same = standardized_difference(0.3, 0.3, 0.0);
  CHECK(same.value == 0.0);
  CHECK_FALSE(same.indeterminate);
  CHECK(standardized_difference(0.3, 0.2, 0.0).indeterminate);
}

TEST_CASE("before/after use the pooled SD of the before groups") {
  // Indicator of category 2 on one binary covariate.
  std::vector<Unit> units;
  for (int c : {1, 1, 0, 0, 1, 0, 0, 0, 1, 0})
    units.push_back(fixtures::make_unit(std::to_string(units.size()), {c}));
  const UnitSet b1 = {0, 1, 2, 3}, b2 = {4, 5, 6, 7}, a1 = {0, 2}, a2 = {8, 9};
  // Means 0.5 and 0.25; sample variances 1/3 and 1/4.
  const double sd = std::sqrt((1.0 / 3 + 0.25) / 2);
  CHECK(pooled_sd(units, b1, b2, 0, 1) == doctest::Approx(sd));
  const auto [before, after] = smd(units, b1, b2, a1, a2, 0, 1);
  CHECK(before.value == doctest::Approx(0.25 / sd));
  CHECK(after.value == doctest::Approx(0.0));

  // Constant indicator in both before groups.
  const UnitSet c1 = {2, 3}, c2 = {5, 6};
  const auto [cb, ca] = smd(units, c1, c2, c1, UnitSet{0}, 0, 1);
  CHECK(cb.value == 0.0);
  CHECK_FALSE(cb.indeterminate);
  CHECK(ca.indeterminate);
}

TEST_CASE("balance table and SMD report on a matched design") {
  const auto ds = small_study();
  DesignConfig cfg;
  cfg.template_size = 6;
  cfg.candidates = 5;
  const auto design = build_design(ds, cfg);
  const auto table = balance_table(design, ds);
  CHECK(table.T == 6);
  CHECK(table.rows.size() == 9);
  for (std::size_t u = 0; u < design.levels.size(); ++u)
    CHECK(table.total_deviation[u] == design.levels[u].match.objective);
  for (const auto& r : table.rows) {
    for (std::size_t u = 0; u < r.level_counts.size(); ++u)
      CHECK(r.flagged[u] == (r.level_counts[u] != r.template_count));
  }
  const auto csv = table.to_csv(ds.schema());
  CHECK(csv.substr(0, csv.find('\n')) == "covariate,category,template,low,high");
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 10);
  CHECK(table.to_json(ds.schema())["rows"].size() == 9);

  const auto rep = smd_report(design, ds);
  CHECK(rep.rows.size() == 18);
  if (table.balanced()) CHECK(rep.all_after_zero());
  for (const auto& r : rep.rows) {
    if (r.after.indeterminate) continue;
    const auto& row = table.rows[ds.schema().flat_index(r.covariate, r.category)];
    const int u = r.level == "low" ? 0 : 1;
    if (row.level_counts[u] == row.template_count) CHECK(r.after.value == 0.0);
  }
  const auto plot = rep.plot_data(ds.schema());
  CHECK(plot.substr(0, plot.find('\n')) == "indicator,level,before,after");
  CHECK(plot.find("c0=1,low,") != std::string::npos);
  CHECK(rep.to_json(ds.schema()).size() == 18);
}

TEST_CASE("imbalanced cells are flagged") {
  const auto in = fixtures::nonintegral();
  std::vector<Unit> units = in.units;
  for (auto t : in.template_units) units[t].exposure = "t";
  for (auto l : in.level_units) units[l].exposure = "lv";
  const Dataset ds(in.schema, units, {"lv", "t"});
  MatchedDesign d;
  d.template_choice.sample = in.template_units;
  LevelDesign lv;
  lv.label = "lv";
  lv.match.selected = {3, 4, 5};  // objective 4
  lv.match.objective = 4;
  lv.pairs = lv.match.selected;
  d.levels.push_back(lv);
  const auto table = balance_table(d, ds);
  CHECK(table.total_deviation[0] == 4);
  CHECK_FALSE(table.balanced());
  int flagged = 0;
  for (const auto& r : table.rows) flagged += r.flagged[0];
  CHECK(flagged == 4);
}
