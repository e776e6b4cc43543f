#include <algorithm>
#include <numeric>
#include <random>
#include <sstream>

#include "doctest.h"
#include "finebal/mip.hpp"
#include "fixtures.hpp"

using namespace finebal;

namespace {

MatchModel selection_model(const fixtures::Instance& in,
                           FormulationKind kind = FormulationKind::UnitSelection) {
  return build_model(kind, in.units, in.template_units, in.level_units, in.schema);
}

}  // namespace

TEST_CASE("non-integral instance: optimum equals exhaustive minimum") {
  const auto in = fixtures::nonintegral();
  const auto sol = solve_mip(selection_model(in));
  CHECK(sol.status == MipStatus::Optimal);
  CHECK(sol.objective_value == 2.0);
  CHECK(sol.root_lp_value == doctest::Approx(0.0));
  CHECK(sol.selection.size() == 3);
  CHECK(sol.gap == 0.0);
}

TEST_CASE("two-covariate and nested instances solve at the root") {
  std::mt19937_64 rng(17);
  for (int rep = 0; rep < 30; ++rep) {
    const int T = 2 + static_cast<int>(rng() % 6);
    const auto in = fixtures::random_instance(rng, T, T + 10, {4, 5});
    const auto sol = solve_mip(selection_model(in));
    CHECK(sol.node_count == 1);
    CHECK(sol.root_integral);
  }
  for (int rep = 0; rep < 30; ++rep) {
    const int T = 2 + static_cast<int>(rng() % 6);
    const auto in = fixtures::nested_instance(rng, T, T + 10);
    const auto sol = solve_mip(selection_model(in));
    CHECK(sol.node_count == 1);
    CHECK(sol.root_integral);
  }
}

TEST_CASE("template contained in the level gives zero") {
  std::mt19937_64 rng(2);
  auto in = fixtures::random_instance(rng, 5, 12, {3, 3, 4, 2});
  for (int t = 0; t < 5; ++t) in.level_units[2 * t + 1] = in.template_units[t];
  const auto sol = solve_mip(selection_model(in));
  CHECK(sol.status == MipStatus::Optimal);
  CHECK(sol.objective_value == 0.0);
}

TEST_CASE("a level holding copies of the template is solved at the root") {
  // Many covariates and a large template: the relaxation is degenerate at 0,
  // so only an incumbent of 0 closes the tree.
  std::mt19937_64 rng(8);
  auto in = fixtures::random_instance(rng, 150, 250, {2, 3, 5, 5, 6, 5, 10, 10, 10, 3, 2, 2, 5, 10});
  std::vector<std::int32_t> slots(in.level_units.size());
  std::iota(slots.begin(), slots.end(), 0);
  std::shuffle(slots.begin(), slots.end(), rng);
  for (int t = 0; t < 150; ++t) {
    auto copy = in.units[in.template_units[t]];
    copy.id = "copy" + std::to_string(t);
    in.units[in.level_units[slots[t]]] = copy;
  }
  BnbConfig cfg;
  cfg.node_limit = 1;
  const auto sol = solve_mip(selection_model(in), cfg);
  CHECK(sol.objective_value == 0.0);
  CHECK(sol.status == MipStatus::Optimal);
  CHECK(sol.node_count == 1);
}

TEST_CASE("oracle equivalence, traces and determinism") {
  std::mt19937_64 rng(33);
  for (int rep = 0; rep < 40; ++rep) {
    const int T = 2 + static_cast<int>(rng() % 4);
    const int L = T + 2 + static_cast<int>(rng() % 7);
    const auto in = fixtures::random_instance(rng, T, L, {3, 3, 3, 2});
    const auto model = selection_model(in);
    const auto a = solve_mip(model);
    const auto b = solve_mip(model);
    REQUIRE(a.status == MipStatus::Optimal);
    CHECK(a.objective_value == static_cast<double>(fixtures::brute_force_min(in)));
    CHECK(a.objective_value >= a.root_lp_value - 1e-7);
    CHECK(a.selection == b.selection);
    CHECK(a.node_count == b.node_count);
    for (std::size_t i = 1; i < a.incumbent_trace.size(); ++i)
      CHECK(a.incumbent_trace[i] <= a.incumbent_trace[i - 1]);
    for (std::size_t i = 1; i < a.bound_trace.size(); ++i)
      CHECK(a.bound_trace[i] >= a.bound_trace[i - 1] - 1e-12);
    for (int j : model.integer_vars()) CHECK((a.x[j] == 0.0 || a.x[j] == 1.0));
  }
}

TEST_CASE("swap search only changes the starting incumbent") {
  std::mt19937_64 rng(17);
  BnbConfig off;
  off.swap_search = false;
  int improved = 0;
  for (int rep = 0; rep < 60; ++rep) {
    const int T = 3 + static_cast<int>(rng() % 4);
    const int L = T + 2 + static_cast<int>(rng() % 8);
    const auto in = fixtures::random_instance(rng, T, L, {3, 3, 2, 4});
    const auto model = selection_model(in);
    const auto with = solve_mip(model);
    const auto without = solve_mip(model, off);
    REQUIRE(with.status == MipStatus::Optimal);
    REQUIRE(without.status == MipStatus::Optimal);
    CHECK(with.objective_value == without.objective_value);
    CHECK(with.objective_value == fixtures::brute_force_min(in));
    CHECK(with.incumbent_trace.front() <= without.incumbent_trace.front());
    improved += with.incumbent_trace.front() < without.incumbent_trace.front();
  }
  CHECK(improved > 0);
}

TEST_CASE("pair formulations reach the same optimum") {
  std::mt19937_64 rng(8);
  for (int rep = 0; rep < 10; ++rep) {
    const int T = 2 + static_cast<int>(rng() % 2);
    const auto in = fixtures::random_instance(rng, T, T + 3, {3, 3, 2});
    const double best = static_cast<double>(fixtures::brute_force_min(in));
    for (auto kind : {FormulationKind::PairAssignment, FormulationKind::PairTotal}) {
      const auto sol = solve_mip(selection_model(in, kind));
      CHECK(sol.status == MipStatus::Optimal);
      CHECK(sol.objective_value == best);
    }
  }
}

TEST_CASE("limits give a feasible status with a gap") {
  std::mt19937_64 rng(12);
  // Search for an instance that needs branching, then cap the nodes.
  for (int rep = 0; rep < 200; ++rep) {
    const auto in = fixtures::random_instance(rng, 4, 10, {3, 3, 3, 3});
    const auto model = selection_model(in);
    const auto full = solve_mip(model);
    if (full.node_count < 3) continue;
    BnbConfig cfg;
    cfg.node_limit = 1;
    const auto capped = solve_mip(model, cfg);
    CHECK(capped.status == MipStatus::Feasible);
    CHECK(capped.node_count == 1);
    CHECK(capped.gap >= 0.0);
    CHECK(capped.objective_value >= full.objective_value);
    return;
  }
  FAIL("no instance required branching");
}

TEST_CASE("config validation and verbose log") {
  BnbConfig bad;
  bad.time_limit = 0.0;
  CHECK_THROWS_AS(bad.validate(), ModelError);
  bad = {};
  bad.node_limit = 0;
  CHECK_THROWS_AS(bad.validate(), ModelError);

  std::ostringstream log;
  BnbConfig cfg;
  cfg.verbose = true;
  cfg.log = &log;
  solve_mip(selection_model(fixtures::nonintegral()), cfg);
  std::istringstream lines(log.str());
  std::string header, line;
  std::getline(lines, header);
  CHECK(header == "node\tbound\tincumbent\ttime");
  int rows = 0;
  while (std::getline(lines, line)) {
    CHECK(std::count(line.begin(), line.end(), '\t') == 3);
    ++rows;
  }
  CHECK(rows >= 2);
}
