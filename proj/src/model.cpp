/*
 * SPDX-FileCopyrightText: Copyright (c) 2026, The finebal Authors. All rights reserved.
 * SPDX-License-Identifier: Apache-2.0
 */
#include "finebal/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <regex>

namespace finebal {

using lp::Relation;
using lp::Term;

const char* to_string(FormulationKind kind) {
  switch (kind) {
    case FormulationKind::PairAssignment: return "pair-assignment";
    case FormulationKind::PairTotal: return "pair-total";
    case FormulationKind::UnitSelection: return "unit-selection";
  }
  return "?";
}

FormulationKind formulation_from_string(const std::string& s) {
  for (auto k : {FormulationKind::PairAssignment, FormulationKind::PairTotal,
                 FormulationKind::UnitSelection}) {
    if (s == to_string(k)) return k;
  }
  throw ModelError("unknown formulation '" + s + "'");
}

nlohmann::json FormulationStats::to_json() const {
  return {{"n_vars", n_vars},
          {"n_constraints", n_constraints},
          {"n_logical_constraints", n_logical_constraints},
          {"n_integer", n_integer},
          {"n_nonzeros", n_nonzeros},
          {"predicted_memory_bytes", predicted_memory_bytes}};
}

FormulationStats predict_stats(FormulationKind kind, long long T, long long L,
                               const CovariateSchema& schema) {
  const long long K = schema.total_categories();
  const long long P = schema.num_covariates();
  FormulationStats s;
  switch (kind) {
    case FormulationKind::UnitSelection:
      s.n_integer = L;
      s.n_logical_constraints = K + 1;
      s.n_constraints = 2 * K + 1;
      s.n_nonzeros = L * (2 * P + 1) + 2 * K;
      break;
    case FormulationKind::PairAssignment:
      s.n_integer = T * L;
      s.n_logical_constraints = K + L + T;
      s.n_constraints = 2 * K + L + T;
      s.n_nonzeros = T * L * (2 * P + 2) + 2 * K;
      break;
    case FormulationKind::PairTotal:
      s.n_integer = T * L;
      s.n_logical_constraints = K + L + 1;
      s.n_constraints = 2 * K + L + 1;
      s.n_nonzeros = T * L * (2 * P + 2) + 2 * K;
      break;
  }
  s.n_vars = s.n_integer + K;
  // Row-wise and column-wise copies of the matrix (index + value), per-variable
  // cost/bounds/state, and the dense basis inverse.
  s.predicted_memory_bytes = s.n_nonzeros * 24 + s.n_vars * 48 + s.n_constraints * 64 +
                             s.n_constraints * s.n_constraints * 8;
  return s;
}

// ---------------------------------------------------------------------------

int MatchModel::z_var(int l) const {
  if (kind_ != FormulationKind::UnitSelection) throw ModelError("model has no z variables");
  if (l < 0 || l >= L_) throw ModelError("level position out of range");
  return l;
}

int MatchModel::m_var(int t, int l) const {
  if (kind_ == FormulationKind::UnitSelection) throw ModelError("model has no m variables");
  if (t < 0 || t >= T_ || l < 0 || l >= L_) throw ModelError("pair index out of range");
  return t * L_ + l;
}

int MatchModel::v_var(int p, int k) const {
  if (p < 0 || p >= schema_.num_covariates() || k < 0 ||
      k >= schema_.covariate(p).num_categories())
    throw ModelError("category index out of range");
  return v_offset_ + schema_.flat_index(p, k);
}

std::string MatchModel::var_name(int var) const {
  if (var < 0 || var >= lp_.num_vars()) throw ModelError("variable index out of range");
  if (var >= v_offset_) {
    const int flat = var - v_offset_;
    int p = 0;
    while (p + 1 < schema_.num_covariates() && schema_.offset(p + 1) <= flat) ++p;
    return "v[" + std::to_string(p) + "," + std::to_string(flat - schema_.offset(p)) + "]";
  }
  if (kind_ == FormulationKind::UnitSelection) return "z[" + std::to_string(var) + "]";
  return "m[" + std::to_string(var / L_) + "," + std::to_string(var % L_) + "]";
}

std::optional<int> MatchModel::var_index(const std::string& name) const {
  static const std::regex one(R"(([zv])\[(\d+)\])");
  static const std::regex two(R"(([mv])\[(\d+),(\d+)\])");
  std::smatch mt;
  try {
    if (std::regex_match(name, mt, one) && mt[1] == "z") {
      if (kind_ != FormulationKind::UnitSelection) return std::nullopt;
      const int l = std::stoi(mt[2]);
      if (l >= L_) return std::nullopt;
      return l;
    }
    if (std::regex_match(name, mt, two)) {
      const int a = std::stoi(mt[2]), b = std::stoi(mt[3]);
      if (mt[1] == "v") return v_var(a, b);
      if (kind_ == FormulationKind::UnitSelection) return std::nullopt;
      return m_var(a, b);
    }
  } catch (const ModelError&) {
  } catch (const std::out_of_range&) {
  }
  return std::nullopt;
}

lp::LinearProgram MatchModel::named_program() const {
  lp::LinearProgram out = lp_;
  for (int j = 0; j < out.num_vars(); ++j) out.set_name(j, var_name(j));
  return out;
}

std::vector<int> MatchModel::selection_of(std::span<const double> x) const {
  std::vector<int> out;
  if (kind_ == FormulationKind::UnitSelection) {
    for (int l = 0; l < L_; ++l) {
      if (x[l] > 0.5) out.push_back(l);
    }
  } else {
    std::vector<double> col(L_, 0.0);
    for (int t = 0; t < T_; ++t) {
      for (int l = 0; l < L_; ++l) col[l] += x[t * L_ + l];
    }
    for (int l = 0; l < L_; ++l) {
      if (col[l] > 0.5) out.push_back(l);
    }
  }
  return out;
}

CategoryCounts MatchModel::counts_of(std::span<const int> positions) const {
  CategoryCounts c = targets_;
  for (int p = 0; p < c.num_covariates(); ++p) {
    for (int k = 0; k < c.num_categories(p); ++k) c.at(p, k) = 0;
  }
  for (int l : positions) {
    for (int p = 0; p < schema_.num_covariates(); ++p) ++c.at(p, level_x_.at(l)[p]);
  }
  return c;
}

std::vector<double> MatchModel::point_from_selection(std::span<const int> positions) const {
  std::vector<double> x(lp_.num_vars(), 0.0);
  std::vector<int> sorted(positions.begin(), positions.end());
  std::sort(sorted.begin(), sorted.end());
  if (kind_ == FormulationKind::UnitSelection) {
    for (int l : sorted) x[l] = 1.0;
  } else {
    if (static_cast<int>(sorted.size()) > T_) throw ModelError("selection larger than template");
    for (std::size_t j = 0; j < sorted.size(); ++j) x[j * L_ + sorted[j]] = 1.0;
  }
  const CategoryCounts c = counts_of(sorted);
  for (int p = 0; p < schema_.num_covariates(); ++p) {
    for (int k = 0; k < schema_.covariate(p).num_categories(); ++k)
      x[v_var(p, k)] = std::abs(c.count(p, k) - targets_.count(p, k));
  }
  return x;
}

std::vector<double> MatchModel::complete_point(std::span<const double> x) const {
  std::vector<double> out(x.begin(), x.end());
  std::vector<int> used(L_, 0);
  if (kind_ == FormulationKind::UnitSelection) {
    for (int l = 0; l < L_; ++l) {
      out[l] = std::round(out[l]);
      used[l] = static_cast<int>(out[l]);
    }
  } else {
    for (int j = 0; j < v_offset_; ++j) {
      out[j] = std::round(out[j]);
      used[j % L_] += static_cast<int>(out[j]);
    }
  }
  CategoryCounts c = counts_of({});
  for (int l = 0; l < L_; ++l) {
    for (int p = 0; p < schema_.num_covariates(); ++p) c.at(p, level_x_[l][p]) += used[l];
  }
  for (int p = 0; p < schema_.num_covariates(); ++p) {
    for (int k = 0; k < schema_.covariate(p).num_categories(); ++k)
      out[v_var(p, k)] = std::abs(c.count(p, k) - targets_.count(p, k));
  }
  return out;
}

MatchModel build_model(FormulationKind kind, std::span<const Unit> units,
                       std::span<const std::int32_t> template_units,
                       std::span<const std::int32_t> level_units, const CovariateSchema& schema,
                       const ModelOptions& options) {
  const long long T = static_cast<long long>(template_units.size());
  const long long L = static_cast<long long>(level_units.size());
  if (T == 0) throw ModelError("template is empty");
  if (L == 0) throw ModelError("exposure level is empty");
  if (T > L)
    throw ModelError("template size " + std::to_string(T) + " exceeds level size " +
                     std::to_string(L));

  const FormulationStats stats = predict_stats(kind, T, L, schema);
  if (kind != FormulationKind::UnitSelection && T * L > options.max_pair_vars) {
    char buf[512];
    std::snprintf(buf, sizeof buf,
                  "%s formulation refused: T*L = %lld pair variables exceeds the cap of %lld; "
                  "predicted %lld variables, %lld constraints, %lld nonzeros, %.1f GiB",
                  to_string(kind), T * L, options.max_pair_vars, stats.n_vars,
                  stats.n_constraints, stats.n_nonzeros,
                  static_cast<double>(stats.predicted_memory_bytes) / (1024.0 * 1024 * 1024));
    throw SizeGuardError(buf, stats);
  }

  MatchModel mdl;
  mdl.kind_ = kind;
  mdl.T_ = static_cast<int>(T);
  mdl.L_ = static_cast<int>(L);
  mdl.schema_ = schema;
  mdl.stats_ = stats;
  mdl.template_.assign(template_units.begin(), template_units.end());
  mdl.level_.assign(level_units.begin(), level_units.end());
  mdl.targets_ = category_counts(units, template_units, schema);
  const int P = schema.num_covariates();
  for (auto i : level_units) {
    const Unit& u = units[i];
    if (static_cast<int>(u.x.size()) != P) throw ModelError("unit '" + u.id + "' has wrong arity");
    mdl.level_x_.push_back(u.x);
  }
  for (auto i : template_units) {
    const Unit& u = units[i];
    if (static_cast<int>(u.x.size()) != P) throw ModelError("unit '" + u.id + "' has wrong arity");
    mdl.template_x_.push_back(u.x);
  }

  const bool pair = kind != FormulationKind::UnitSelection;
  const long long n_match = pair ? T * L : L;
  auto& prog = mdl.lp_;
  for (long long j = 0; j < n_match; ++j) prog.add_variable(0.0, 1.0, 0.0);
  mdl.v_offset_ = static_cast<int>(n_match);
  for (int c = 0; c < schema.total_categories(); ++c) prog.add_variable(0.0, lp::kInf, 1.0);
  mdl.integer_vars_.resize(n_match);
  for (long long j = 0; j < n_match; ++j) mdl.integer_vars_[j] = static_cast<int>(j);

  // Level positions per (p, k).
  std::vector<std::vector<int>> members(schema.total_categories());
  for (int l = 0; l < L; ++l) {
    for (int p = 0; p < P; ++p) members[schema.flat_index(p, mdl.level_x_[l][p])].push_back(l);
  }

  for (int p = 0; p < P; ++p) {
    for (int k = 0; k < schema.covariate(p).num_categories(); ++k) {
      const int flat = schema.flat_index(p, k);
      std::vector<Term> terms;
      for (int l : members[flat]) {
        if (pair) {
          for (int t = 0; t < T; ++t) terms.push_back({static_cast<int>(t * L + l), 1.0});
        } else {
          terms.push_back({l, 1.0});
        }
      }
      const double N = mdl.targets_.count(p, k);
      const int v = mdl.v_offset_ + flat;
      auto upper = terms;
      upper.push_back({v, -1.0});
      prog.add_constraint(std::move(upper), Relation::LessEqual, N);
      terms.push_back({v, 1.0});
      prog.add_constraint(std::move(terms), Relation::GreaterEqual, N);
    }
  }

  if (!pair) {
    std::vector<Term> sum;
    for (int l = 0; l < L; ++l) sum.push_back({l, 1.0});
    prog.add_constraint(std::move(sum), Relation::Equal, static_cast<double>(T));
    return mdl;
  }
  for (int l = 0; l < L; ++l) {
    std::vector<Term> col;
    for (int t = 0; t < T; ++t) col.push_back({static_cast<int>(t * L + l), 1.0});
    prog.add_constraint(std::move(col), Relation::LessEqual, 1.0);
  }
  if (kind == FormulationKind::PairAssignment) {
    for (int t = 0; t < T; ++t) {
      std::vector<Term> row;
      for (int l = 0; l < L; ++l) row.push_back({static_cast<int>(t * L + l), 1.0});
      prog.add_constraint(std::move(row), Relation::Equal, 1.0);
    }
  } else {
    std::vector<Term> all;
    for (long long j = 0; j < n_match; ++j) all.push_back({static_cast<int>(j), 1.0});
    prog.add_constraint(std::move(all), Relation::Equal, static_cast<double>(T));
  }
  return mdl;
}

long long objective_of(std::span<const Unit> units, std::span<const std::int32_t> selection,
                       const CategoryCounts& template_counts, const CovariateSchema& schema) {
  if (static_cast<int>(selection.size()) != template_counts.total())
    throw ModelError("selection has " + std::to_string(selection.size()) +
                     " units, template has " + std::to_string(template_counts.total()));
  const CategoryCounts c = category_counts(units, selection, schema);
  long long total = 0;
  for (std::size_t i = 0; i < c.flat().size(); ++i)
    total += std::abs(c.flat()[i] - template_counts.flat()[i]);
  return total;
}

// ---------------------------------------------------------------------------

double Assignment::at(int t, int l) const {
  auto it = m.find({t, l});
  return it == m.end() ? 0.0 : it->second;
}

double Assignment::row_sum(int t) const {
  double s = 0.0;
  for (const auto& [key, val] : m) {
    if (key.first == t) s += val;
  }
  return s;
}

double Assignment::column_sum(int l) const {
  double s = 0.0;
  for (const auto& [key, val] : m) {
    if (key.second == l) s += val;
  }
  return s;
}

Assignment disaggregate(std::span<const double> z, int T) {
  constexpr double tol = 1e-9;
  if (T < 1) throw ModelError("template size must be positive");
  double total = 0.0;
  for (double v : z) {
    if (!(v >= -tol && v <= 1.0 + tol)) throw ModelError("z entry outside [0, 1]");
    total += v;
  }
  if (std::abs(total - T) > tol)
    throw ModelError("z sums to " + std::to_string(total) + ", expected " + std::to_string(T));

  Assignment a;
  a.T = T;
  a.L = static_cast<int>(z.size());
  a.z.assign(z.begin(), z.end());
  int row = 0;
  double room = 1.0;  // mass still needed by the current template row
  for (int l = 0; l < a.L; ++l) {
    double mass = std::clamp(z[l], 0.0, 1.0);
    while (mass > 1e-15) {
      if (row >= T) {
        if (mass > tol) throw ModelError("z mass exceeds template size");
        break;
      }
      const double put = std::min(mass, room);
      a.m[{row, l}] += put;
      mass -= put;
      room -= put;
      if (room <= 1e-12) {
        ++row;
        room = 1.0;
      }
    }
  }
  // Rounding can leave the last row a hair short; its deficit is below tol.
  return a;
}

std::vector<double> aggregate(const MatchModel& model, std::span<const double> x) {
  if (model.kind() == FormulationKind::UnitSelection)
    throw ModelError("aggregate needs a pair formulation");
  std::vector<double> z(model.L(), 0.0);
  for (int t = 0; t < model.T(); ++t) {
    for (int l = 0; l < model.L(); ++l) z[l] += x[model.m_var(t, l)];
  }
  return z;
}

double relaxation_value(const MatchModel& model) {
  const auto sol = lp::solve_lp(model.lp());
  if (sol.status != lp::LpStatus::Optimal)
    throw ModelError(std::string("relaxation is ") + lp::to_string(sol.status));
  return sol.objective_value;
}

double lp_gap(const MatchModel& model, double mip_optimum) {
  return mip_optimum - relaxation_value(model);
}

}  // namespace finebal
