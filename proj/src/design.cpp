/*
 * SPDX-FileCopyrightText: Copyright (c) 2026, The finebal Authors. All rights reserved.
 * SPDX-License-Identifier: Apache-2.0
 */
#include "finebal/design.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <deque>
#include <exception>
#include <limits>
#include <mutex>
#include <random>
#include <thread>

#include <boost/random/uniform_int_distribution.hpp>

namespace finebal {

std::vector<double> indicator_means(std::span<const Unit> units,
                                    std::span<const std::int32_t> subset,
                                    const CovariateSchema& schema) {
  std::vector<double> out(schema.total_categories(), 0.0);
  if (subset.empty()) return out;
  for (auto i : subset) {
    for (int p = 0; p < schema.num_covariates(); ++p) out[schema.flat_index(p, units[i].x[p])] += 1.0;
  }
  for (double& v : out) v /= static_cast<double>(subset.size());
  return out;
}

RankCovariance RankCovariance::fit(std::span<const Unit> units,
                                   std::span<const std::int32_t> reference,
                                   const CovariateSchema& schema) {
  if (reference.empty()) throw DesignError("reference set is empty");
  const int K = schema.total_categories();
  const int P = schema.num_covariates();
  const double n = static_cast<double>(reference.size());

  // Co-occurrence counts of indicator pairs.
  Eigen::MatrixXd co = Eigen::MatrixXd::Zero(K, K);
  std::vector<int> active(P);
  for (auto i : reference) {
    for (int p = 0; p < P; ++p) active[p] = schema.flat_index(p, units[i].x[p]);
    for (int a : active) {
      for (int b : active) co(a, b) += 1.0;
    }
  }

  RankCovariance rc;
  rc.reference_size = static_cast<int>(reference.size());
  for (int c = 0; c < K; ++c) {
    if (co(c, c) == 0.0 || co(c, c) == n) {
      rc.excluded.push_back(c);
    } else {
      rc.columns.push_back(c);
    }
  }
  const int m = static_cast<int>(rc.columns.size());
  if (m == 0) return rc;

  // A binary column's midranks are r0 + (n/2) * indicator, so the rank
  // covariance is (n/2)^2 times the indicator covariance.
  const double scale = (n / 2.0) * (n / 2.0);
  Eigen::MatrixXd cov(m, m);
  for (int a = 0; a < m; ++a) {
    for (int b = 0; b < m; ++b) {
      const int ca = rc.columns[a], cb = rc.columns[b];
      cov(a, b) = scale * (co(ca, cb) - co(ca, ca) * co(cb, cb) / n) / (n - 1.0);
    }
  }
  const double untied = n * (n + 1.0) / 12.0;
  Eigen::VectorXd d(m);
  for (int a = 0; a < m; ++a) d[a] = std::sqrt(untied / cov(a, a));
  const Eigen::MatrixXd adjusted = d.asDiagonal() * cov * d.asDiagonal();

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(adjusted);
  const double cutoff = 1e-8 * adjusted.diagonal().mean();
  Eigen::VectorXd inv_vals(m);
  for (int a = 0; a < m; ++a) {
    const double lambda = eig.eigenvalues()[a];
    inv_vals[a] = lambda > cutoff ? 1.0 / lambda : 0.0;
  }
  rc.inverse = eig.eigenvectors() * inv_vals.asDiagonal() * eig.eigenvectors().transpose();
  return rc;
}

double RankCovariance::distance(std::span<const double> a, std::span<const double> b) const {
  const int m = static_cast<int>(columns.size());
  if (m == 0) return 0.0;
  const double half = reference_size / 2.0;
  Eigen::VectorXd delta(m);
  for (int j = 0; j < m; ++j) delta[j] = half * (a[columns[j]] - b[columns[j]]);
  return std::max(0.0, delta.dot(inverse * delta));
}

double robust_mahalanobis(std::span<const double> a, std::span<const double> b,
                          std::span<const Unit> units, std::span<const std::int32_t> reference,
                          const CovariateSchema& schema) {
  const auto K = static_cast<std::size_t>(schema.total_categories());
  if (a.size() != K || b.size() != K) throw DesignError("mean vectors have wrong length");
  return RankCovariance::fit(units, reference, schema).distance(a, b);
}

TemplateChoice select_template(std::span<const Unit> units, std::span<const std::int32_t> population,
                               int T, int R, std::uint64_t seed, const CovariateSchema& schema) {
  const int N = static_cast<int>(population.size());
  if (T < 1) throw DesignError("template size must be positive");
  if (R < 1) throw DesignError("candidate count must be positive");
  if (T > N)
    throw DesignError("template size " + std::to_string(T) + " exceeds population size " +
                      std::to_string(N));

  const RankCovariance rc = RankCovariance::fit(units, population, schema);
  const auto target = indicator_means(units, population, schema);

  std::mt19937_64 rng(seed);
  std::vector<std::int32_t> pool(population.begin(), population.end());
  TemplateChoice best;
  best.rng_seed = seed;
  best.excluded_columns = rc.excluded;
  best.distance = std::numeric_limits<double>::infinity();
  for (int r = 0; r < R; ++r) {
    // Partial Fisher-Yates: the first T slots become a uniform sample.
    for (int i = 0; i < T; ++i) {
      boost::random::uniform_int_distribution<int> pick(i, N - 1);
      std::swap(pool[i], pool[pick(rng)]);
    }
    UnitSet sample(pool.begin(), pool.begin() + T);
    const double dist = rc.distance(indicator_means(units, sample, schema), target);
    best.candidate_distances.push_back(dist);
    if (dist < best.distance) {
      std::sort(sample.begin(), sample.end());
      best.sample = std::move(sample);
      best.distance = dist;
      best.winner = r;
    }
  }
  best.candidates_evaluated = R;
  return best;
}

LevelMatch match_level(std::span<const Unit> units, std::span<const std::int32_t> template_units,
                       std::span<const std::int32_t> level_units, const CovariateSchema& schema,
                       const BnbConfig& cfg) {
  if (template_units.size() > level_units.size())
    throw DesignError("level has " + std::to_string(level_units.size()) +
                      " units, fewer than the template size " +
                      std::to_string(template_units.size()));
  const MatchModel model =
      build_model(FormulationKind::UnitSelection, units, template_units, level_units, schema);
  const MipSolution sol = solve_mip(model, cfg);
  if (sol.status == MipStatus::Infeasible) throw DesignError("level matching problem is infeasible");
  LevelMatch out;
  for (int pos : sol.selection) out.selected.push_back(level_units[pos]);
  std::sort(out.selected.begin(), out.selected.end());
  out.objective = objective_of(units, out.selected, model.targets(), schema);
  out.status = sol.status;
  out.node_count = sol.node_count;
  out.root_lp_value = sol.root_lp_value;
  out.gap = sol.gap;
  out.wall_time = sol.wall_time;
  return out;
}

int hamming(const Unit& a, const Unit& b) {
  int d = 0;
  for (std::size_t p = 0; p < a.x.size(); ++p) d += a.x[p] != b.x[p];
  return d;
}

std::vector<int> solve_assignment(std::span<const long long> cost, int n) {
  if (n < 0 || cost.size() != static_cast<std::size_t>(n) * n)
    throw DesignError("cost matrix has wrong size");
  if (n == 0) return {};
  auto c = [&](int i, int j) { return cost[static_cast<std::size_t>(i) * n + j]; };

  // Shortest augmenting paths with potentials (1-based, column 0 is a sentinel).
  const long long inf = std::numeric_limits<long long>::max() / 4;
  std::vector<long long> u(n + 1, 0), v(n + 1, 0), minv(n + 1);
  std::vector<int> owner(n + 1, 0), way(n + 1, 0);
  std::vector<char> used(n + 1);
  for (int i = 1; i <= n; ++i) {
    owner[0] = i;
    int j0 = 0;
    std::fill(minv.begin(), minv.end(), inf);
    std::fill(used.begin(), used.end(), 0);
    do {
      used[j0] = 1;
      const int i0 = owner[j0];
      long long delta = inf;
      int j1 = 0;
      for (int j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const long long cur = c(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (int j = 0; j <= n; ++j) {
        if (used[j]) {
          u[owner[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (owner[j0] != 0);
    do {
      const int j1 = way[j0];
      owner[j0] = owner[j1];
      j0 = j1;
    } while (j0);
  }

  // Every optimal bijection uses only zero-reduced-cost edges, so the
  // lexicographically smallest one is found by improving rows in order along
  // alternating cycles of tight edges.
  std::vector<int> col_of(n), row_of(n);
  for (int j = 1; j <= n; ++j) {
    col_of[owner[j] - 1] = j - 1;
    row_of[j - 1] = owner[j] - 1;
  }
  std::vector<char> tight(static_cast<std::size_t>(n) * n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) tight[static_cast<std::size_t>(i) * n + j] = c(i, j) - u[i + 1] - v[j + 1] == 0;
  }
  auto is_tight = [&](int i, int j) { return tight[static_cast<std::size_t>(i) * n + j] != 0; };

  std::vector<int> next_col(n), parent(n);
  std::vector<char> seen(n);
  std::deque<int> queue;
  for (int t = 0; t < n; ++t) {
    const int g = col_of[t];
    bool any = false;
    for (int j = 0; j < g && !any; ++j) any = is_tight(t, j) && row_of[j] > t;
    if (!any) continue;
    // Rows after t that can release column g through an alternating path.
    std::fill(seen.begin(), seen.end(), 0);
    queue.clear();
    for (int r = t + 1; r < n; ++r) {
      if (is_tight(r, g)) {
        seen[r] = 1;
        next_col[r] = g;
        parent[r] = -1;
        queue.push_back(r);
      }
    }
    while (!queue.empty()) {
      const int r = queue.front();
      queue.pop_front();
      const int col = col_of[r];
      for (int r2 = t + 1; r2 < n; ++r2) {
        if (!seen[r2] && is_tight(r2, col)) {
          seen[r2] = 1;
          next_col[r2] = col;
          parent[r2] = r;
          queue.push_back(r2);
        }
      }
    }
    int best = -1;
    for (int j = 0; j < g; ++j) {
      if (is_tight(t, j) && row_of[j] > t && seen[row_of[j]]) {
        best = j;
        break;
      }
    }
    if (best < 0) continue;
    std::vector<std::pair<int, int>> moves;
    for (int r = row_of[best]; r >= 0; r = parent[r]) moves.push_back({r, next_col[r]});
    for (auto [r, col] : moves) {
      col_of[r] = col;
      row_of[col] = r;
    }
    col_of[t] = best;
    row_of[best] = t;
  }
  return col_of;
}

std::vector<int> rematch(std::span<const Unit> units, std::span<const std::int32_t> template_units,
                         std::span<const std::int32_t> selected) {
  const int n = static_cast<int>(template_units.size());
  if (selected.size() != template_units.size())
    throw DesignError("rematch needs equal sizes, got " + std::to_string(n) + " template and " +
                      std::to_string(selected.size()) + " selected units");
  std::vector<long long> cost(static_cast<std::size_t>(n) * n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j)
      cost[static_cast<std::size_t>(i) * n + j] = hamming(units[template_units[i]], units[selected[j]]);
  }
  return solve_assignment(cost, n);
}

// ---------------------------------------------------------------------------

nlohmann::json MatchedDesign::to_json(const Dataset& data) const {
  auto ids = [&](const UnitSet& s) {
    nlohmann::json a = nlohmann::json::array();
    for (auto i : s) a.push_back(data.unit(i).id);
    return a;
  };
  nlohmann::json j;
  const auto& tc = template_choice;
  j["template"] = {{"ids", ids(tc.sample)},
                   {"distance", tc.distance},
                   {"candidates_evaluated", tc.candidates_evaluated},
                   {"seed", tc.rng_seed},
                   {"winner", tc.winner},
                   {"excluded_columns", tc.excluded_columns}};
  j["levels"] = nlohmann::json::array();
  for (const auto& lv : levels) {
    j["levels"].push_back({{"label", lv.label},
                           {"objective", lv.match.objective},
                           {"status", to_string(lv.match.status)},
                           {"node_count", lv.match.node_count},
                           {"root_lp_value", lv.match.root_lp_value},
                           {"selected", ids(lv.match.selected)},
                           {"pairs", ids(lv.pairs)},
                           {"pairing_cost", lv.pairing_cost}});
  }
  return j;
}

MatchedDesign MatchedDesign::from_json(const nlohmann::json& j, const Dataset& data) {
  auto ids = [&](const nlohmann::json& a) {
    UnitSet s;
    for (const auto& id : a) {
      const auto i = data.find_id(id.get<std::string>());
      if (i < 0) throw DesignError("design references unknown unit id '" + id.get<std::string>() + "'");
      s.push_back(i);
    }
    return s;
  };
  try {
    MatchedDesign d;
    const auto& t = j.at("template");
    d.template_choice.sample = ids(t.at("ids"));
    d.template_choice.distance = t.value("distance", 0.0);
    d.template_choice.candidates_evaluated = t.value("candidates_evaluated", 0);
    d.template_choice.rng_seed = t.value("seed", std::uint64_t{0});
    d.template_choice.winner = t.value("winner", 0);
    d.template_choice.excluded_columns = t.value("excluded_columns", std::vector<int>{});
    for (const auto& l : j.at("levels")) {
      LevelDesign lv;
      lv.label = l.at("label").get<std::string>();
      lv.match.objective = l.at("objective").get<long long>();
      const std::string st = l.value("status", "Optimal");
      lv.match.status = st == "Optimal"    ? MipStatus::Optimal
                        : st == "Feasible" ? MipStatus::Feasible
                                           : MipStatus::Infeasible;
      lv.match.node_count = l.value("node_count", 0L);
      lv.match.root_lp_value = l.value("root_lp_value", 0.0);
      lv.match.selected = ids(l.at("selected"));
      lv.pairs = ids(l.at("pairs"));
      lv.pairing_cost = l.value("pairing_cost", 0LL);
      if (lv.pairs.size() != d.template_choice.sample.size())
        throw DesignError("level '" + lv.label + "' pairs do not cover the template");
      d.levels.push_back(std::move(lv));
    }
    return d;
  } catch (const nlohmann::json::exception& e) {
    throw DesignError(std::string("malformed design file: ") + e.what());
  }
}

std::string MatchedDesign::groups_csv(const Dataset& data) const {
  std::string out = "template_id";
  for (const auto& lv : levels) out += "," + csv_escape(lv.label);
  out += "\n";
  for (std::size_t t = 0; t < template_units().size(); ++t) {
    out += csv_escape(data.unit(template_units()[t]).id);
    for (const auto& lv : levels) out += "," + csv_escape(data.unit(lv.pairs[t]).id);
    out += "\n";
  }
  return out;
}

MatchedDesign build_design(const Dataset& data, const DesignConfig& cfg) {
  for (const auto& label : data.levels()) {
    if (static_cast<int>(data.level(label).size()) < cfg.template_size)
      throw DesignError("level '" + label + "' has " + std::to_string(data.level(label).size()) +
                        " units, fewer than the template size " +
                        std::to_string(cfg.template_size));
  }
  const UnitSet population = data.all_units();
  TemplateChoice choice = select_template(data.units(), population, cfg.template_size,
                                          cfg.candidates, cfg.seed, data.schema());
  return build_design(data, std::move(choice), cfg);
}

MatchedDesign build_design(const Dataset& data, TemplateChoice choice, const DesignConfig& cfg) {
  const int T = static_cast<int>(choice.sample.size());
  for (const auto& label : data.levels()) {
    if (static_cast<int>(data.level(label).size()) < T)
      throw DesignError("level '" + label + "' has " + std::to_string(data.level(label).size()) +
                        " units, fewer than the template size " + std::to_string(T));
  }
  MatchedDesign design;
  design.template_choice = std::move(choice);
  const auto& levels = data.levels();
  design.levels.resize(levels.size());

  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto work = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= levels.size()) return;
      try {
        LevelDesign& lv = design.levels[i];
        lv.label = levels[i];
        const UnitSet& level = data.level(levels[i]);
        lv.match = match_level(data.units(), design.template_units(), level, data.schema(), cfg.bnb);
        const auto pairing = rematch(data.units(), design.template_units(), lv.match.selected);
        lv.pairs.resize(T);
        for (int t = 0; t < T; ++t) {
          lv.pairs[t] = lv.match.selected[pairing[t]];
          lv.pairing_cost += hamming(data.unit(design.template_units()[t]), data.unit(lv.pairs[t]));
        }
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  const int workers = std::max(1, std::min<int>(cfg.workers, static_cast<int>(levels.size())));
  if (workers == 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) pool.emplace_back(work);
    for (auto& th : pool) th.join();
  }
  if (failure) std::rethrow_exception(failure);
  return design;
}

}  // namespace finebal
