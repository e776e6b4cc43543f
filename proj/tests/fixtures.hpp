// Shared instance builders and brute-force oracles for the test binaries.
#pragma once

#include <algorithm>
#include <cstdint>
#include <functional>
#include <limits>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "finebal/data.hpp"
#include "finebal/lp.hpp"
#include "finebal/model.hpp"

namespace fixtures {

using finebal::CovariateSchema;
using finebal::Unit;
using finebal::UnitSet;

inline CovariateSchema make_schema(const std::vector<int>& cats) {
  std::vector<finebal::Covariate> covs;
  for (std::size_t p = 0; p < cats.size(); ++p) {
    finebal::Covariate c;
    c.name = "c" + std::to_string(p);
    for (int k = 0; k < cats[p]; ++k) c.categories.push_back(std::to_string(k + 1));
    covs.push_back(c);
  }
  return CovariateSchema(covs);
}

inline Unit make_unit(const std::string& id, std::vector<std::int32_t> x) {
  Unit u;
  u.id = id;
  u.x = std::move(x);
  return u;
}

/// Template units then level units, with the index sets for each.
struct Instance {
  CovariateSchema schema;
  std::vector<Unit> units;
  UnitSet template_units;
  UnitSet level_units;
};

// Three covariates with three categories. Template rows (1,1,1), (2,2,2),
// (3,3,3) give every category a target count of one; the six level units are
// the classic non-integral arrangement.
inline Instance nonintegral() {
  Instance in;
  in.schema = make_schema({3, 3, 3});
  const std::vector<std::vector<std::int32_t>> tmpl = {{0, 0, 0}, {1, 1, 1}, {2, 2, 2}};
  const std::vector<std::vector<std::int32_t>> level = {{0, 0, 0}, {2, 2, 2}, {0, 1, 2},
                                                        {2, 1, 0}, {1, 0, 1}, {1, 2, 1}};
  for (std::size_t i = 0; i < tmpl.size(); ++i) {
    in.template_units.push_back(static_cast<std::int32_t>(in.units.size()));
    in.units.push_back(make_unit("t" + std::to_string(i + 1), tmpl[i]));
  }
  for (std::size_t i = 0; i < level.size(); ++i) {
    in.level_units.push_back(static_cast<std::int32_t>(in.units.size()));
    in.units.push_back(make_unit("l" + std::to_string(i + 1), level[i]));
  }
  return in;
}

inline Instance random_instance(std::mt19937_64& rng, int T, int L, const std::vector<int>& cats) {
  Instance in;
  in.schema = make_schema(cats);
  auto draw = [&] {
    std::vector<std::int32_t> x;
    for (int k : cats) x.push_back(static_cast<std::int32_t>(rng() % k));
    return x;
  };
  for (int t = 0; t < T; ++t) {
    in.template_units.push_back(static_cast<std::int32_t>(in.units.size()));
    in.units.push_back(make_unit("t" + std::to_string(t), draw()));
  }
  for (int l = 0; l < L; ++l) {
    in.level_units.push_back(static_cast<std::int32_t>(in.units.size()));
    in.units.push_back(make_unit("l" + std::to_string(l), draw()));
  }
  return in;
}

// Level units whose later covariates refine the earlier ones: the category of
// covariate p+1 determines that of covariate p.
inline Instance nested_instance(std::mt19937_64& rng, int T, int L) {
  Instance in;
  in.schema = make_schema({2, 4, 8});
  auto draw = [&] {
    const int fine = static_cast<int>(rng() % 8);
    return std::vector<std::int32_t>{fine / 4, fine / 2, fine};
  };
  for (int t = 0; t < T; ++t) {
    in.template_units.push_back(static_cast<std::int32_t>(in.units.size()));
    in.units.push_back(make_unit("t" + std::to_string(t), draw()));
  }
  for (int l = 0; l < L; ++l) {
    in.level_units.push_back(static_cast<std::int32_t>(in.units.size()));
    in.units.push_back(make_unit("l" + std::to_string(l), draw()));
  }
  return in;
}

/// Copy of `lp` with one row's right-hand side replaced.
inline finebal::lp::LinearProgram with_rhs(const finebal::lp::LinearProgram& lp, int row, double rhs) {
  finebal::lp::LinearProgram out;
  for (int j = 0; j < lp.num_vars(); ++j)
    out.add_variable(lp.lower()[j], lp.upper()[j], lp.objective()[j]);
  for (int i = 0; i < lp.num_constraints(); ++i) {
    const auto& c = lp.constraint(i);
    out.add_constraint(c.terms, c.relation, i == row ? rhs : c.rhs);
  }
  return out;
}

/// Calls f on every size-k subset of {0..n-1}, in lexicographic order.
inline void for_each_subset(int n, int k, const std::function<void(const std::vector<int>&)>& f) {
  std::vector<int> idx(k);
  for (int i = 0; i < k; ++i) idx[i] = i;
  for (;;) {
    f(idx);
    int i = k - 1;
    while (i >= 0 && idx[i] == n - k + i) --i;
    if (i < 0) return;
    ++idx[i];
    for (int j = i + 1; j < k; ++j) idx[j] = idx[j - 1] + 1;
  }
}

/// Exhaustive minimum of the exact imbalance over all size-T selections.
inline long long brute_force_min(const Instance& in) {
  const auto targets = finebal::category_counts(in.units, in.template_units, in.schema);
  long long best = std::numeric_limits<long long>::max();
  for_each_subset(static_cast<int>(in.level_units.size()), static_cast<int>(in.template_units.size()),
                  [&](const std::vector<int>& pos) {
                    UnitSet sel;
                    for (int p : pos) sel.push_back(in.level_units[p]);
                    best = std::min(best, finebal::objective_of(in.units, sel, targets, in.schema));
                  });
  return best;
}

/// Pair-formulation point carrying the masses of `a` and the given v block.
inline std::vector<double> pair_point_from(const finebal::MatchModel& pair, const finebal::Assignment& a,
                                           std::span<const double> v) {
  std::vector<double> x(pair.lp().num_vars(), 0.0);
  for (const auto& [key, mass] : a.m) x[pair.m_var(key.first, key.second)] = mass;
  for (int c = 0; c < pair.num_v(); ++c) x[pair.v_offset() + c] = v[c];
  return x;
}

inline double binomial(int n, int k) {
  double r = 1.0;
  for (int i = 1; i <= k; ++i) r = r * (n - k + i) / i;
  return r;
}

}  // namespace fixtures
