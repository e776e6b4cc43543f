/*
 * SPDX-FileCopyrightText: Copyright (c) 2026, The finebal Authors. All rights reserved.
 * SPDX-License-Identifier: Apache-2.0
 */
#include "finebal/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <random>
#include <set>

#include <boost/math/distributions/normal.hpp>
#include <boost/random/normal_distribution.hpp>
#include <boost/random/uniform_01.hpp>
#include <boost/random/uniform_int_distribution.hpp>

#include "finebal/design.hpp"
#include "finebal/manifest.hpp"

namespace finebal {

namespace {

using Rng = std::mt19937_64;

// Covariate positions in study_schema().
enum Cov {
  kGender, kIndigenous, kFatherEdu, kMotherEdu, kIncome, kBooks, kAttendance, kGpa, kSimce,
  kSchoolType, kRural, kCatholic, kSchoolSes, kSchoolSimce, kNumCov
};

const char* kSchemaJson = R"({
  "id_column": "id",
  "exposure_column": "exposure",
  "outcomes": ["attendance", "psu"],
  "covariates": [
    {"name": "gender", "categories": ["F", "M"]},
    {"name": "indigenous", "categories": ["no", "yes"], "missing_category": "Missing", "missing_values": ["", "NA"]},
    {"name": "father_edu", "categories": ["primary", "secondary", "technical", "university"], "missing_category": "Missing", "missing_values": ["", "NA"]},
    {"name": "mother_edu", "categories": ["primary", "secondary", "technical", "university"], "missing_category": "Missing", "missing_values": ["", "NA"]},
    {"name": "income", "categories": ["q1", "q2", "q3", "q4", "q5"], "missing_category": "Missing", "missing_values": ["", "NA"]},
    {"name": "books", "categories": ["0-10", "11-50", "51-100", "100+"], "missing_category": "Missing", "missing_values": ["", "NA"]},
    {"name": "attendance_decile", "categories": ["1", "2", "3", "4", "5", "6", "7", "8", "9", "10"]},
    {"name": "gpa_decile", "categories": ["1", "2", "3", "4", "5", "6", "7", "8", "9", "10"]},
    {"name": "simce_decile", "categories": ["1", "2", "3", "4", "5", "6", "7", "8", "9", "10"]},
    {"name": "school_type", "categories": ["public", "voucher", "private"]},
    {"name": "rural", "categories": ["urban", "rural"]},
    {"name": "catholic", "categories": ["no", "yes"]},
    {"name": "school_ses", "categories": ["A", "B", "C", "D", "E"]},
    {"name": "school_simce_decile", "categories": ["1", "2", "3", "4", "5", "6", "7", "8", "9", "10"]}
  ]
})";

double normal(Rng& rng) { return boost::random::normal_distribution<double>(0.0, 1.0)(rng); }
double uniform(Rng& rng) { return boost::random::uniform_01<double>()(rng); }

// Equal-probability category of a standard normal score.
int ordinal(double score, int K) {
  const double p = boost::math::cdf(boost::math::normal(), score);
  return std::clamp(static_cast<int>(p * K), 0, K - 1);
}

// Score with correlation `a` to the latent SES.
double loaded(Rng& rng, double ses, double a) { return a * ses + std::sqrt(1.0 - a * a) * normal(rng); }

std::vector<std::int32_t> draw_covariates(Rng& rng, double ses) {
  std::vector<std::int32_t> x(kNumCov);
  auto missing_or = [&](int value, int K) { return uniform(rng) < 0.04 ? K : value; };
  x[kGender] = uniform(rng) < 0.49 ? 1 : 0;
  x[kIndigenous] = missing_or(uniform(rng) < 0.1 ? 1 : 0, 2);
  x[kFatherEdu] = missing_or(ordinal(loaded(rng, ses, 0.6), 4), 4);
  x[kMotherEdu] = missing_or(ordinal(loaded(rng, ses, 0.6), 4), 4);
  x[kIncome] = missing_or(ordinal(loaded(rng, ses, 0.7), 5), 5);
  x[kBooks] = missing_or(ordinal(loaded(rng, ses, 0.5), 4), 4);
  x[kAttendance] = ordinal(loaded(rng, ses, 0.3), 10);
  x[kGpa] = ordinal(loaded(rng, ses, 0.3), 10);
  x[kSimce] = ordinal(loaded(rng, ses, 0.6), 10);
  x[kSchoolType] = ordinal(loaded(rng, ses, 0.5), 3);
  x[kRural] = ordinal(-loaded(rng, ses, 0.4) - 0.8, 2);
  x[kCatholic] = uniform(rng) < 0.3 ? 1 : 0;
  x[kSchoolSes] = ordinal(loaded(rng, ses, 0.7), 5);
  x[kSchoolSimce] = ordinal(loaded(rng, ses, 0.6), 10);
  return x;
}

// Outcomes depend on observed covariates, noise and the level step.
void add_outcomes(Rng& rng, Unit& u, int step, double att_effect, double psu_effect, double noise) {
  const auto& x = u.x;
  const double att_base = 80.0 + x[kAttendance] + 0.5 * x[kGpa] + 0.5 * x[kSchoolSes];
  const double psu_base = 440.0 + 10.0 * x[kSimce] + 6.0 * x[kSchoolSimce] + 8.0 * x[kGpa];
  const double e1 = normal(rng), e2 = normal(rng);
  u.outcomes["attendance"] = std::clamp(att_base + noise * 4.0 * e1 - att_effect * step, 0.0, 100.0);
  u.outcomes["psu"] = psu_base + noise * 60.0 * e2 + psu_effect * step;
}

std::string padded(const char* prefix, long long i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%s%07lld", prefix, i);
  return buf;
}

double pga_for(Rng& rng, int level, int levels) {
  if (levels == 3) {
    static constexpr double edges[] = {0.02, 0.08, 0.25, 0.65};
    return edges[level] + (edges[level + 1] - edges[level]) * uniform(rng);
  }
  const double w = 0.63 / levels;
  return 0.02 + w * (level + uniform(rng));
}

std::string fmt(double v, const char* spec) {
  char buf[64];
  std::snprintf(buf, sizeof buf, spec, v);
  return buf;
}

}  // namespace

SchemaConfig study_schema() { return SchemaConfig::from_json(nlohmann::json::parse(kSchemaJson)); }

StudyConfig study_preset(int levels, double scale) {
  static const std::map<int, std::vector<int>> sizes = {
      {3, {18208, 70118, 32953}},
      {5, {22075, 25977, 24896, 24279, 24052}},
      {10, {12084, 9991, 12513, 13464, 13119, 11777, 12813, 11466, 12071, 11981}}};
  auto it = sizes.find(levels);
  if (it == sizes.end()) throw DataError("presets exist for 3, 5 and 10 levels, not " + std::to_string(levels));
  if (!(scale > 0.0)) throw DataError("preset scale must be positive");
  StudyConfig cfg;
  for (int s : it->second) cfg.level_sizes.push_back(std::max(1, static_cast<int>(std::lround(s * scale))));
  return cfg;
}

Study generate_study(const StudyConfig& cfg) {
  const int U = static_cast<int>(cfg.level_sizes.size());
  if (U < 1) throw DataError("study needs at least one level");
  for (int s : cfg.level_sizes) {
    if (s < 1) throw DataError("level sizes must be positive");
  }
  SchemaConfig config = study_schema();
  std::vector<std::string> order;
  for (int u = 0; u < U; ++u) order.push_back(std::to_string(u + 1));
  config.level_order = order;

  Rng rng(cfg.seed);
  std::vector<Unit> units;
  std::vector<double> pga;
  long long id = 0;
  for (int u = 0; u < U; ++u) {
    const double shift = U > 1 ? cfg.confounding * u / (U - 1) : 0.0;
    for (int i = 0; i < cfg.level_sizes[u]; ++i) {
      Unit unit;
      unit.id = padded("s", ++id);
      unit.x = draw_covariates(rng, normal(rng) - shift);
      unit.exposure = order[u];
      add_outcomes(rng, unit, u, cfg.attendance_effect, cfg.psu_effect, cfg.noise);
      pga.push_back(pga_for(rng, u, U));
      units.push_back(std::move(unit));
    }
  }
  Dataset data(CovariateSchema(config.covariates), std::move(units), order);
  return {config, std::move(data), std::move(pga), {}};
}

Study superset_study(int levels, int T, int extra, std::uint64_t seed) {
  if (levels < 1 || T < 1 || extra < 0) throw DataError("invalid superset study dimensions");
  SchemaConfig config = study_schema();
  std::vector<std::string> order;
  for (int u = 0; u < levels; ++u) order.push_back(std::to_string(u + 1));
  config.level_order = order;

  Rng rng(seed);
  std::vector<Unit> units;
  std::vector<double> pga;
  UnitSet tmpl;
  for (int t = 0; t < T; ++t) {
    Unit unit;
    unit.id = padded("t", t + 1);
    unit.x = draw_covariates(rng, normal(rng));
    tmpl.push_back(static_cast<std::int32_t>(units.size()));
    units.push_back(std::move(unit));
    pga.push_back(std::numeric_limits<double>::quiet_NaN());
  }
  long long id = 0;
  for (int u = 0; u < levels; ++u) {
    std::vector<std::vector<std::int32_t>> xs;
    for (int t = 0; t < T; ++t) xs.push_back(units[tmpl[t]].x);
    const double shift = levels > 1 ? 0.5 * u / (levels - 1) : 0.0;
    for (int e = 0; e < extra; ++e) xs.push_back(draw_covariates(rng, normal(rng) - shift));
    for (int i = static_cast<int>(xs.size()) - 1; i > 0; --i)
      std::swap(xs[i], xs[boost::random::uniform_int_distribution<int>(0, i)(rng)]);
    for (auto& x : xs) {
      Unit unit;
      unit.id = padded("s", ++id);
      unit.x = std::move(x);
      unit.exposure = order[u];
      add_outcomes(rng, unit, u, 1.5, 0.0, 1.0);
      units.push_back(std::move(unit));
      pga.push_back(pga_for(rng, u, levels));
    }
  }
  Dataset data(CovariateSchema(config.covariates), std::move(units), order);
  return {config, std::move(data), std::move(pga), std::move(tmpl)};
}

std::vector<Unit> replicate_and_perturb(std::span<const Unit> level, const CovariateSchema& schema,
                                        int factor, std::uint64_t seed) {
  if (factor < 1) throw DataError("copy factor must be at least 1");
  std::vector<Unit> out(level.begin(), level.end());
  out.reserve(level.size() * static_cast<std::size_t>(factor));
  for (int c = 1; c < factor; ++c) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(c)};
    Rng rng(seq);
    boost::random::uniform_int_distribution<int> step(-1, 1);
    for (const Unit& src : level) {
      Unit u = src;
      u.id = src.id + "~" + std::to_string(c);
      for (int p = 0; p < schema.num_covariates(); ++p)
        u.x[p] = std::clamp(u.x[p] + step(rng), 0, schema.covariate(p).num_categories() - 1);
      out.push_back(std::move(u));
    }
  }
  return out;
}

void ScalingSpec::validate(const Dataset& base) const {
  if (copy_factors.empty() || template_sizes.empty())
    throw DataError("scaling grid needs at least one factor and one template size");
  const auto& lv = base.level(level);
  for (int f : copy_factors) {
    if (f < 1) throw DataError("copy factors must be at least 1");
  }
  for (int T : template_sizes) {
    if (T < 1) throw DataError("template sizes must be positive");
    if (static_cast<std::size_t>(T) > lv.size())
      throw DataError("template size " + std::to_string(T) + " exceeds level '" + level + "' (" +
                      std::to_string(lv.size()) + " units)");
  }
  if (candidates < 1) throw DataError("candidate count must be positive");
  bnb.validate();
}

nlohmann::json ScalingSpec::to_json() const {
  nlohmann::json j = {{"level", level},
                      {"copy_factors", copy_factors},
                      {"template_sizes", template_sizes},
                      {"seed", seed},
                      {"candidates", candidates}};
  if (std::isfinite(bnb.time_limit)) j["time_limit"] = bnb.time_limit;
  if (bnb.node_limit != std::numeric_limits<long>::max()) j["node_limit"] = bnb.node_limit;
  return j;
}

std::vector<BenchRecord> run_scaling(const Dataset& base, const ScalingSpec& spec) {
  spec.validate(base);
  using clock = std::chrono::steady_clock;
  const auto& schema = base.schema();
  const UnitSet& level = base.level(spec.level);
  std::vector<Unit> originals;
  for (auto i : level) originals.push_back(base.unit(i));
  const int max_factor = *std::max_element(spec.copy_factors.begin(), spec.copy_factors.end());
  auto enlarged = replicate_and_perturb(originals, schema, max_factor, spec.seed);

  // Base units followed by every perturbed copy; a factor uses a prefix of the copies.
  std::vector<Unit> units(base.units().begin(), base.units().end());
  const auto copies_at = static_cast<std::int32_t>(units.size());
  units.insert(units.end(), enlarged.begin() + static_cast<std::ptrdiff_t>(originals.size()), enlarged.end());
  enlarged.clear();

  const UnitSet population = base.all_units();
  std::vector<BenchRecord> records;
  for (int T : spec.template_sizes) {
    const auto choice = select_template(base.units(), population, T, spec.candidates, spec.seed, schema);
    for (int f : spec.copy_factors) {
      UnitSet lv = level;
      const auto extra = static_cast<std::int32_t>(originals.size() * static_cast<std::size_t>(f - 1));
      for (std::int32_t i = 0; i < extra; ++i) lv.push_back(copies_at + i);
      BenchRecord rec;
      rec.T = T;
      rec.L = static_cast<long long>(lv.size());
      rec.factor = f;
      try {
        const auto t0 = clock::now();
        const MatchModel model =
            build_model(FormulationKind::UnitSelection, units, choice.sample, lv, schema);
        const auto t1 = clock::now();
        rec.build_time = std::chrono::duration<double>(t1 - t0).count();
        const MipSolution sol = solve_mip(model, spec.bnb);
        rec.solve_time = std::chrono::duration<double>(clock::now() - t1).count();
        rec.node_count = sol.node_count;
        rec.status = to_string(sol.status);
        if (sol.status != MipStatus::Infeasible) rec.objective = std::llround(sol.objective_value);
      } catch (const std::exception& e) {
        rec.status = std::string("error: ") + e.what();
      }
      records.push_back(std::move(rec));
    }
  }
  return records;
}

std::string records_csv(const std::vector<BenchRecord>& records) {
  std::string out = "T,L,factor,build_time,solve_time,objective,node_count,status\n";
  for (const auto& r : records) {
    out += std::to_string(r.T) + "," + std::to_string(r.L) + "," + std::to_string(r.factor) + "," +
           fmt(r.build_time, "%.6f") + "," + fmt(r.solve_time, "%.6f") + "," +
           std::to_string(r.objective) + "," + std::to_string(r.node_count) + "," +
           csv_escape(r.status) + "\n";
  }
  return out;
}

std::string records_grid(const std::vector<BenchRecord>& records) {
  std::set<int> Ts;
  std::set<long long> Ls;
  std::map<std::pair<int, long long>, const BenchRecord*> cell;
  for (const auto& r : records) {
    Ts.insert(r.T);
    Ls.insert(r.L);
    cell[{r.T, r.L}] = &r;
  }
  std::string out = "T";
  for (auto L : Ls) out += "," + std::to_string(L);
  out += "\n";
  for (int T : Ts) {
    out += std::to_string(T);
    for (auto L : Ls) {
      auto it = cell.find({T, L});
      const bool ok = it != cell.end() && it->second->status.rfind("error", 0) != 0;
      out += "," + (ok ? fmt(it->second->solve_time / 60.0, "%.4f") : std::string("NA"));
    }
    out += "\n";
  }
  return out;
}

nlohmann::json scaling_manifest(const ScalingSpec& spec) {
  const auto cfg = spec.to_json();
  return {{"config", cfg},
          {"config_hash", sha256_hex(cfg.dump())},
          {"seeds", {{"template", spec.seed}, {"perturbation", spec.seed}}},
          {"machine", machine_descriptor()}};
}

double loglog_slope(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2) throw DataError("slope needs at least two points");
  double mx = 0, my = 0;
  const double n = static_cast<double>(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!(x[i] > 0 && y[i] > 0)) throw DataError("log-log slope needs positive values");
    mx += std::log(x[i]) / n;
    my += std::log(y[i]) / n;
  }
  double sxy = 0, sxx = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = std::log(x[i]) - mx;
    sxy += dx * (std::log(y[i]) - my);
    sxx += dx * dx;
  }
  if (sxx == 0.0) throw DataError("log-log slope needs distinct x values");
  return sxy / sxx;
}

}  // namespace finebal
