/*
 * SPDX-FileCopyrightText: Copyright (c) 2026, The finebal Authors. All rights reserved.
 * SPDX-License-Identifier: Apache-2.0
 */
#include "finebal/mip.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <iostream>
#include <limits>
#include <map>
#include <memory>
#include <numeric>
#include <optional>
#include <random>
#include <tuple>

namespace finebal {

void BnbConfig::validate() const {
  if (!(time_limit > 0.0)) throw ModelError("time limit must be positive");
  if (node_limit < 1) throw ModelError("node limit must be positive");
  if (!(integrality_tol > 0.0 && integrality_tol < 0.5))
    throw ModelError("integrality tolerance must lie in (0, 0.5)");
}

const char* to_string(MipStatus s) {
  switch (s) {
    case MipStatus::Optimal: return "Optimal";
    case MipStatus::Feasible: return "Feasible";
    case MipStatus::Infeasible: return "Infeasible";
  }
  return "?";
}

namespace {

struct Node {
  long id = 0;
  int depth = 0;
  double bound = -lp::kInf;
  std::vector<std::pair<int, bool>> fixings;  // (var, fixed to one)
  std::shared_ptr<const lp::Basis> basis;
};

// Best bound first; among equal bounds the deeper node, then the older one.
using OpenKey = std::tuple<double, int, long>;

double objective_of_point(const MatchModel& model, const std::vector<double>& x) {
  double s = 0.0;
  for (int c = 0; c < model.num_v(); ++c) s += x[model.v_offset() + c];
  return s;
}

// Top-T units by relaxation value, ties to the lower position.
std::vector<int> rounding_heuristic(const MatchModel& model, const std::vector<double>& x) {
  std::vector<double> score;
  if (model.kind() == FormulationKind::UnitSelection) {
    score.assign(x.begin(), x.begin() + model.L());
  } else {
    score = aggregate(model, x);
  }
  std::vector<int> order(model.L());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return score[a] > score[b]; });
  order.resize(model.T());
  std::sort(order.begin(), order.end());
  return order;
}

// Pairs each template unit with an unused level unit of identical covariates,
// then fills the remaining slots from `fallback` in order. Returns `fallback`
// unchanged when no template unit has a twin.
std::vector<int> profile_seed(const MatchModel& model, const std::vector<int>& fallback) {
  std::map<std::vector<std::int32_t>, std::vector<int>> twins;
  for (int l = model.L() - 1; l >= 0; --l) twins[model.level_covariates(l)].push_back(l);
  std::vector<char> used(model.L(), 0);
  std::vector<int> sel;
  for (int t = 0; t < model.T(); ++t) {
    auto it = twins.find(model.template_covariates(t));
    if (it == twins.end() || it->second.empty()) continue;
    sel.push_back(it->second.back());
    used[sel.back()] = 1;
    it->second.pop_back();
  }
  if (sel.empty()) return fallback;
  for (int l : fallback) {
    if (static_cast<int>(sel.size()) == model.T()) break;
    if (!used[l]) {
      used[l] = 1;
      sel.push_back(l);
    }
  }
  std::sort(sel.begin(), sel.end());
  return sel;
}

// Exchanges one selected unit i for an unselected unit j on the exact
// imbalance. With gap d_c = count_c - target_c, covariate p contributes 0 to
// the change when i and j share its category, else
// (|d-1| - |d|) at i's category plus (|d+1| - |d|) at j's, one of -2, 0, +2.
// Only covariates where i sits in an over-full category can give -2, so a
// strict improvement needs i in an over-full and j in an under-full category;
// sideways swaps are searched among the same pairs, and a pair is dropped
// once its +2 terms outweigh the -2 terms still possible. Improving swaps are taken first,
// then sideways ones, then the cheapest uphill one; recently moved units are
// tabu for the latter two. The best selection seen is returned.
std::vector<int> swap_search(const MatchModel& model, std::vector<int> sel, long max_moves) {
  const auto& schema = model.schema();
  const int P = schema.num_covariates(), L = model.L(), T = static_cast<int>(sel.size());
  std::vector<int> flat(static_cast<std::size_t>(L) * P);
  for (int l = 0; l < L; ++l) {
    const auto& x = model.level_covariates(l);
    for (int p = 0; p < P; ++p) flat[static_cast<std::size_t>(l) * P + p] = schema.flat_index(p, x[p]);
  }
  auto cats = [&](int l) { return flat.data() + static_cast<std::size_t>(l) * P; };
  std::vector<int> d(schema.total_categories());
  for (int p = 0; p < P; ++p)
    for (int k = 0; k < model.targets().num_categories(p); ++k)
      d[schema.flat_index(p, k)] = -model.targets().count(p, k);
  std::vector<char> in(L, 0);
  for (int l : sel) {
    in[l] = 1;
    for (int p = 0; p < P; ++p) ++d[cats(l)[p]];
  }
  std::vector<int> out;
  for (int l = 0; l < L; ++l)
    if (!in[l]) out.push_back(l);
  auto objective = [&] {
    long long o = 0;
    for (int v : d) o += std::abs(v);
    return o;
  };
  // Change from swapping i out and j in; stops early (returning a value
  // above `cap`) once the +2 terms exceed the -2 terms still available.
  auto delta_of = [&](const int* ci, const int* cj, int over, int cap) {
    int delta = 0, neg_left = 2 * over;
    for (int p = 0; p < P; ++p) {
      if (ci[p] == cj[p]) {
        if (d[ci[p]] > 0) neg_left -= 2;
        continue;
      }
      const int di = d[ci[p]], dj = d[cj[p]];
      if (di > 0) neg_left -= 2;
      delta += (di > 0 ? -1 : 1) + (dj < 0 ? -1 : 1);
      if (delta - neg_left > cap) return cap + 1;
    }
    return delta;
  };

  std::mt19937_64 rng(0x5eed);
  std::vector<long> moved_at(L, -1'000'000);
  const long tenure = std::max(7, T / 10);
  std::vector<int> best = sel;
  long long best_obj = objective();
  std::vector<int> order, cand;
  for (long move = 0; move < max_moves && best_obj > 0; ++move) {
    // Selected positions whose unit sits in an over-full category.
    order.clear();
    for (int s = 0; s < T; ++s) {
      const int* ci = cats(sel[s]);
      for (int p = 0; p < P; ++p) {
        if (d[ci[p]] > 0) {
          order.push_back(s);
          break;
        }
      }
    }
    if (order.empty()) break;
    std::shuffle(order.begin(), order.end(), rng);
    // Unselected positions with an under-full category.
    cand.clear();
    for (std::size_t q = 0; q < out.size(); ++q) {
      const int* cj = cats(out[q]);
      for (int p = 0; p < P; ++p) {
        if (d[cj[p]] < 0) {
          cand.push_back(static_cast<int>(q));
          break;
        }
      }
    }
    int from = -1, to = -1, side_from = -1, side_to = -1;
    for (int s : order) {
      const int* ci = cats(sel[s]);
      int over = 0;
      for (int p = 0; p < P; ++p) over += d[ci[p]] > 0;
      const bool i_free = move - moved_at[sel[s]] > tenure;
      const int cap = i_free && side_from < 0 ? 0 : -1;
      for (int q : cand) {
        const int j = out[q];
        const int delta = delta_of(ci, cats(j), over, cap);
        if (delta < 0) {
          from = s;
          to = q;
          break;
        }
        if (delta == 0 && cap == 0 && side_from < 0 && move - moved_at[j] > tenure) {
          side_from = s;
          side_to = q;
        }
      }
      if (from >= 0) break;
    }
    if (from < 0 && side_from >= 0) {
      from = side_from;
      to = side_to;
    }
    if (from < 0) {
      // Local minimum: the least damaging swap for the first free unit.
      for (int s : order) {
        if (move - moved_at[sel[s]] > tenure) {
          from = s;
          break;
        }
      }
      if (from < 0) break;
      const int* ci = cats(sel[from]);
      int over = 0;
      for (int p = 0; p < P; ++p) over += d[ci[p]] > 0;
      int best_delta = std::numeric_limits<int>::max();
      for (std::size_t q = 0; q < out.size(); ++q) {
        if (move - moved_at[out[q]] <= tenure) continue;
        const int delta = delta_of(ci, cats(out[q]), over, best_delta - 1);
        if (delta < best_delta) {
          best_delta = delta;
          to = static_cast<int>(q);
        }
      }
      if (to < 0) break;
    }
    const int i = sel[from], j = out[to];
    for (int p = 0; p < P; ++p) {
      --d[cats(i)[p]];
      ++d[cats(j)[p]];
    }
    in[i] = 0;
    in[j] = 1;
    sel[from] = j;
    out[to] = i;
    moved_at[i] = moved_at[j] = move;
    const long long obj = objective();
    if (obj < best_obj) {
      best_obj = obj;
      best = sel;
    }
  }
  std::sort(best.begin(), best.end());
  return best;
}

}  // namespace

MipSolution solve_mip(const MatchModel& model, const BnbConfig& cfg) {
  cfg.validate();
  using clock = std::chrono::steady_clock;
  const auto started = clock::now();
  auto elapsed = [&] { return std::chrono::duration<double>(clock::now() - started).count(); };
  std::ostream& log = cfg.log ? *cfg.log : std::clog;

  MipSolution out;
  const auto& prog = model.lp();
  lp::SimplexSolver solver(prog);
  const std::vector<double> root_lo = prog.lower(), root_hi = prog.upper();

  std::vector<double> incumbent;
  double inc_value = lp::kInf;
  auto prunable = [&](double bound) {
    if (incumbent.empty()) return false;
    return cfg.objective_integral ? bound > inc_value - 1.0 + 1e-6 : bound >= inc_value - 1e-9;
  };
  auto offer = [&](std::vector<double> x) {
    const double v = objective_of_point(model, x);
    if (v < inc_value - 1e-9) {
      inc_value = v;
      incumbent = std::move(x);
      out.incumbent_trace.push_back(v);
      return true;
    }
    return false;
  };
  auto log_line = [&](long node, double bound) {
    if (!cfg.verbose) return;
    log << node << '\t' << bound << '\t' << inc_value << '\t' << elapsed() << '\n';
  };
  if (cfg.verbose) log << "node\tbound\tincumbent\ttime\n";

  std::map<OpenKey, Node> open;
  std::optional<Node> next = Node{};
  long next_id = 1;
  bool tree_incumbent = false;  // the dive ends at the first integral node
  bool stopped = false;
  double last_bound = -lp::kInf;

  auto global_bound = [&]() {
    double b = lp::kInf;
    if (next) b = std::min(b, next->bound);
    if (!open.empty()) b = std::min(b, std::get<0>(open.begin()->first));
    if (!std::isfinite(b)) b = inc_value;
    // Pruned subtrees cannot hold anything better than the incumbent.
    return std::min(b, inc_value);
  };

  std::vector<double> lo, hi;
  for (;;) {
    Node node;
    if (next) {
      node = std::move(*next);
      next.reset();
    } else if (!open.empty()) {
      auto it = open.begin();
      node = std::move(it->second);
      open.erase(it);
    } else {
      break;
    }
    if (prunable(node.bound)) continue;
    if (out.node_count >= cfg.node_limit || elapsed() > cfg.time_limit) {
      next = std::move(node);
      stopped = true;
      break;
    }

    lo = root_lo;
    hi = root_hi;
    for (auto [var, one] : node.fixings) lo[var] = hi[var] = one ? 1.0 : 0.0;
    const auto sol = solver.solve(lo, hi, node.basis.get());
    ++out.node_count;
    const bool root = node.id == 0;

    if (sol.status != lp::LpStatus::Optimal) {
      if (root) {
        out.status = MipStatus::Infeasible;
        out.wall_time = elapsed();
        return out;
      }
      last_bound = global_bound();
      out.bound_trace.push_back(last_bound);
      continue;
    }
    const double bound = std::max(node.bound, sol.objective_value);
    if (root) {
      out.root_lp_value = sol.objective_value;
      auto sel = rounding_heuristic(model, sol.x);
      auto seeded = profile_seed(model, sel);
      const bool distinct = seeded != sel;
      if (cfg.swap_search) sel = swap_search(model, std::move(sel), cfg.swap_moves);
      offer(model.point_from_selection(sel));
      if (distinct && inc_value > 0.0) {
        if (cfg.swap_search) seeded = swap_search(model, std::move(seeded), cfg.swap_moves);
        offer(model.point_from_selection(seeded));
      }
      log_line(0, bound);
    }

    int branch = -1;
    double best_frac = cfg.integrality_tol;
    for (int j : model.integer_vars()) {
      const double f = std::abs(sol.x[j] - std::round(sol.x[j]));
      if (f > best_frac) {
        best_frac = f;
        branch = j;
      }
    }
    if (branch < 0) {
      if (root) out.root_integral = true;
      tree_incumbent = true;
      if (offer(model.complete_point(sol.x))) log_line(out.node_count, bound);
    } else if (!prunable(bound)) {
      auto basis = std::make_shared<const lp::Basis>(sol.final_basis);
      Node up{next_id++, node.depth + 1, bound, node.fixings, basis};
      up.fixings.push_back({branch, true});
      Node down{next_id++, node.depth + 1, bound, node.fixings, basis};
      down.fixings.push_back({branch, false});
      // The dive fixes units into the selection: each up-branch commits one
      // more of the T slots, so an integral node is at most T levels down.
      if (!tree_incumbent) {
        next = std::move(up);
        open.emplace(OpenKey{down.bound, -down.depth, down.id}, std::move(down));
      } else {
        open.emplace(OpenKey{up.bound, -up.depth, up.id}, std::move(up));
        open.emplace(OpenKey{down.bound, -down.depth, down.id}, std::move(down));
      }
    }
    last_bound = global_bound();
    out.bound_trace.push_back(last_bound);
    if (cfg.verbose && out.node_count % 1000 == 0) log_line(out.node_count, last_bound);
  }

  out.wall_time = elapsed();
  if (incumbent.empty()) {
    // Limits hit before any integral point; T <= L makes the heuristic succeed
    // at the root, so this only happens when the root itself was not solved.
    out.status = stopped ? MipStatus::Feasible : MipStatus::Infeasible;
    return out;
  }
  out.x = incumbent;
  out.objective_value = inc_value;
  out.selection = model.selection_of(out.x);
  if (stopped) {
    out.status = MipStatus::Feasible;
    out.best_bound = global_bound();
  } else {
    out.status = MipStatus::Optimal;
    out.best_bound = inc_value;
  }
  out.gap = out.objective_value - out.best_bound;
  log_line(out.node_count, out.best_bound);
  return out;
}

}  // namespace finebal
