#include <algorithm>
#include <cmath>
#include <map>
#include <random>

#include "doctest.h"
#include "finebal/inference.hpp"
#include "fixtures.hpp"

using namespace finebal;

namespace {

double brute_hl(const std::vector<double>& d) {
  std::vector<double> w;
  for (std::size_t i = 0; i < d.size(); ++i)
    for (std::size_t j = i; j < d.size(); ++j) w.push_back((d[i] + d[j]) / 2.0);
  std::sort(w.begin(), w.end());
  const std::size_t N = w.size();
  return N % 2 ? w[N / 2] : (w[N / 2 - 1] + w[N / 2]) / 2.0;
}

MatchedGroups random_groups(std::mt19937_64& rng, int n, int L, const std::vector<double>& shift = {}) {
  std::normal_distribution<double> noise(0.0, 1.0);
  MatchedGroups g;
  for (int u = 0; u < L; ++u) g.levels.push_back("lv" + std::to_string(u + 1));
  for (int i = 0; i < n; ++i) {
    std::vector<double> row;
    for (int u = 0; u < L; ++u) row.push_back(noise(rng) + (shift.empty() ? 0.0 : shift[u]));
    g.values.push_back(row);
  }
  return g;
}

// Exhaustive null of |R_2 - R_1| for two levels: every group either keeps or
// swaps its two ranks.
std::map<int, double> exact_two_level_null(const MatchedGroups& g) {
  const int n = g.num_groups();
  std::vector<int> sign(n);
  for (int i = 0; i < n; ++i) {
    const double a = g.values[i][0], b = g.values[i][1];
    sign[i] = a < b ? 1 : (a > b ? -1 : 0);  // R_2 - R_1 contribution
  }
  std::map<int, double> mass;
  for (long mask = 0; mask < (1L << n); ++mask) {
    int s = 0;
    for (int i = 0; i < n; ++i) s += (mask >> i & 1) ? sign[i] : -sign[i];
    mass[std::abs(s)] += 1.0 / static_cast<double>(1L << n);
  }
  return mass;
}

double exact_tail(const std::map<int, double>& mass, double c) {
  double p = 0.0;
  for (auto [v, m] : mass)
    if (v >= c - 1e-9) p += m;
  return p;
}

}  // namespace

TEST_CASE("Hodges-Lehmann examples") {
  CHECK(hodges_lehmann(std::vector<double>{1, 2, 3}) == 2.0);
  CHECK(hodges_lehmann(std::vector<double>{7.5}) == 7.5);
  CHECK(hodges_lehmann(std::vector<double>{-3, -1, 0, 1, 3}) == 0.0);
  CHECK(hodges_lehmann(std::vector<double>{0, 1}) == 0.5);
  CHECK_THROWS_AS(hodges_lehmann(std::vector<double>{}), InferenceError);
}

TEST_CASE("Hodges-Lehmann matches Walsh-average brute force") {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> nd(0.0, 3.0);
  for (int rep = 0; rep < 1000; ++rep) {
    const int n = 1 + static_cast<int>(rng() % 40);
    std::vector<double> d(n);
    for (auto& v : d) v = rep % 2 ? std::round(nd(rng)) : nd(rng);
    CHECK(hodges_lehmann(d) == brute_hl(d));
    // Integer data and shifts keep the equivariance check exact.
    if (rep % 2) {
      std::vector<double> s = d;
      for (auto& v : s) v += 4.0;
      CHECK(hodges_lehmann(s) == hodges_lehmann(d) + 4.0);
    }
  }
}

TEST_CASE("signed-rank order statistic matches the exhaustive sign-flip null") {
  CHECK(signed_rank_order(10, 0.05) == 9);
  for (int n = 1; n <= 12; ++n) {
    const long long N = static_cast<long long>(n) * (n + 1) / 2;
    std::vector<double> mass(N + 1, 0.0);
    for (long mask = 0; mask < (1L << n); ++mask) {
      long long s = 0;
      for (int i = 0; i < n; ++i)
        if (mask >> i & 1) s += i + 1;
      mass[s] += 1.0 / static_cast<double>(1L << n);
    }
    for (double alpha : {0.01, 0.05, 0.1, 0.3}) {
      const long long C = signed_rank_order(n, alpha);
      // Upper critical value t = N + 1 - C: P(T >= t) <= alpha/2 < P(T >= t - 1).
      const long long t = N + 1 - C;
      double tail = 0.0, tail_before = 0.0;
      for (long long s = 0; s <= N; ++s) {
        if (s >= t) tail += mass[s];
        if (s >= t - 1) tail_before += mass[s];
      }
      if (C > 1) {
        CHECK(tail <= alpha / 2 + 1e-12);
        CHECK(tail_before > alpha / 2);
      } else {
        CHECK(tail_before > alpha / 2 - 1e-12);
      }
    }
  }
  // Exact and normal branches meet smoothly.
  CHECK(std::abs(signed_rank_order(50, 0.05) - signed_rank_order(51, 0.05)) < 60);
  CHECK_THROWS_AS(signed_rank_order(0, 0.05), InferenceError);
}

TEST_CASE("pair differences") {
  MatchedGroups g;
  g.levels = {"a", "b", "c"};
  g.values = {{1, 1, 4}, {2, 2, 5}, {0.5, 0.5, 3.5}};
  CHECK(pair_differences(g, "b") == std::vector<double>{0, 0, 0});
  CHECK(pair_differences(g, 2) == std::vector<double>{3, 3, 3});
  CHECK(hodges_lehmann(pair_differences(g, 2)) == 3.0);
  CHECK_THROWS_AS(pair_differences(g, 0), InferenceError);
  CHECK_THROWS_AS(pair_differences(g, "zz"), InferenceError);

  // From a design: a missing outcome names the unit, level and outcome.
  std::vector<Unit> units;
  for (int i = 0; i < 6; ++i) {
    auto u = fixtures::make_unit("u" + std::to_string(i), {i % 2});
    u.exposure = i < 3 ? "low" : "high";
    if (i != 4) u.outcomes["att"] = 10.0 * i;
    units.push_back(u);
  }
  const Dataset ds(fixtures::make_schema({2}), units, {"low", "high"});
  MatchedDesign d;
  d.template_choice.sample = {0, 1};
  d.levels.push_back({"low", {}, {0, 1}, 0});
  d.levels.push_back({"high", {}, {3, 5}, 0});
  const auto mg = MatchedGroups::from_design(d, ds, "att");
  CHECK(mg.group_ids == std::vector<std::string>{"u0", "u1"});
  CHECK(pair_differences(mg, 1) == std::vector<double>{30, 40});
  d.levels[1].pairs = {4, 5};
  try {
    MatchedGroups::from_design(d, ds, "att");
    FAIL("expected InferenceError");
  } catch (const InferenceError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("'u4'") != std::string::npos);
    CHECK(msg.find("'high'") != std::string::npos);
    CHECK(msg.find("'att'") != std::string::npos);
  }
}

TEST_CASE("contrast preconditions and exact null") {
  std::mt19937_64 rng(2);
  auto g = random_groups(rng, 10, 3);
  CHECK_THROWS_AS(simultaneous_contrasts(g, {0.05, 999, 1, 1}), InferenceError);
  CHECK_THROWS_AS(simultaneous_contrasts(g, {0.0, 1000, 1, 1}), InferenceError);
  CHECK_THROWS_AS(simultaneous_contrasts(g, {1.0, 1000, 1, 1}), InferenceError);
  auto bad = g;
  bad.values[3].pop_back();
  CHECK_THROWS_AS(simultaneous_contrasts(bad, {0.05, 1000, 1, 1}), InferenceError);

  // Identical outcomes at every level.
  for (auto& row : g.values) std::fill(row.begin(), row.end(), row[0]);
  for (double alpha : {0.01, 0.2, 0.9}) {
    const auto r = simultaneous_contrasts(g, {alpha, 2000, 4, 1});
    for (const auto& c : r.contrasts) {
      CHECK_FALSE(c.significant);
      CHECK(c.estimate == 0.0);
      CHECK(c.lo == 0.0);
      CHECK(c.hi == 0.0);
    }
  }
}

TEST_CASE("two levels: Monte Carlo null agrees with the exhaustive permutation null") {
  std::mt19937_64 rng(3);
  const long B = 40000;
  int compared = 0;
  for (int n : {5, 8, 12}) {
    auto g = random_groups(rng, n, 2, {0.0, 0.4});
    g.values[0][1] = g.values[0][0];  // one tied group
    const auto mass = exact_two_level_null(g);
    const auto r = simultaneous_contrasts(g, {0.1, B, 7, 2});
    for (auto [v, m] : mass) {
      const double p = exact_tail(mass, v);
      const double se = std::sqrt(p * (1 - p) / B);
      CHECK(std::abs(r.tail_probability(v) - p) <= 3 * se + 1e-12);
    }
    // Exact critical value at an alpha that is not near any exact tail.
    for (double alpha : {0.05, 0.1, 0.2}) {
      bool clear = true;
      for (auto [v, m] : mass) {
        const double p = exact_tail(mass, v);
        clear = clear && std::abs(p - alpha) > 4 * std::sqrt(alpha * (1 - alpha) / B);
      }
      if (!clear) continue;
      ++compared;
      double exact_r = 1e9;
      for (auto [v, m] : mass)
        if (exact_tail(mass, v) <= alpha) exact_r = std::min(exact_r, static_cast<double>(v));
      const auto ra = simultaneous_contrasts(g, {alpha, B, 7, 1});
      // Compare significance decisions at every attainable statistic value.
      for (auto [v, m] : mass) CHECK((v >= ra.critical_value) == (v >= exact_r));
    }
  }
  CHECK(compared >= 3);
}

TEST_CASE("family-wise error under the global null") {
  std::mt19937_64 rng(4);
  const int reps = 1000;
  const double alpha = 0.05;
  int rejected = 0;
  for (int rep = 0; rep < reps; ++rep) {
    const auto g = random_groups(rng, 15, 4);
    const auto r = simultaneous_contrasts(g, {alpha, 1000, static_cast<std::uint64_t>(rep) + 1, 1});
    rejected += std::any_of(r.contrasts.begin(), r.contrasts.end(),
                            [](const ContrastEstimate& c) { return c.significant; });
  }
  const double rate = static_cast<double>(rejected) / reps;
  CHECK(rate <= alpha + 3 * std::sqrt(alpha * (1 - alpha) / reps));
}

TEST_CASE("contrast intervals: ordering, nesting, workers, planted effects") {
  std::mt19937_64 rng(5);
  const auto att = random_groups(rng, 60, 5, {0.0, -0.5, -1.0, -1.5, -2.0});
  const auto psu = random_groups(rng, 60, 5);
  const auto base = simultaneous_contrasts(att, {0.05, 5000, 9, 1});
  const auto par = simultaneous_contrasts(att, {0.05, 5000, 9, 4});
  CHECK(base.null_max == par.null_max);
  CHECK(base.critical_value == par.critical_value);
  for (std::size_t c = 0; c < base.contrasts.size(); ++c) {
    CHECK(base.contrasts[c].lo == par.contrasts[c].lo);
    CHECK(base.contrasts[c].significant == par.contrasts[c].significant);
  }

  double prev_lo = -1e9, prev_hi = 1e9;
  for (double alpha : {0.01, 0.05, 0.1, 0.3}) {
    const auto r = simultaneous_contrasts(att, {alpha, 5000, 9, 1});
    CHECK(r.adjusted_alpha <= alpha + 1e-12);
    const auto& c = r.contrasts[0];
    CHECK(c.lo >= prev_lo);  // wider intervals at smaller alpha
    CHECK(c.hi <= prev_hi);
    prev_lo = c.lo;
    prev_hi = c.hi;
  }

  for (std::size_t c = 0; c < base.contrasts.size(); ++c) {
    const auto& e = base.contrasts[c];
    CHECK(e.lo <= e.estimate);
    CHECK(e.estimate <= e.hi);
    if (c > 0) CHECK(e.estimate < base.contrasts[c - 1].estimate);
  }
  CHECK(base.contrasts.back().significant);
  CHECK(base.contrasts.back().hi < 0.0);
  const auto flat = simultaneous_contrasts(psu, {0.05, 5000, 9, 1});
  for (const auto& e : flat.contrasts) {
    CHECK(e.lo <= 0.0);
    CHECK(e.hi >= 0.0);
  }
  const auto table = contrast_table({"attendance", "psu"}, {base, flat});
  CHECK(table.substr(0, table.find('\n')) ==
        "level,attendance_estimate,attendance_ci_lo,attendance_ci_hi,attendance_significant,"
        "psu_estimate,psu_ci_lo,psu_ci_hi,psu_significant");
  CHECK(std::count(table.begin(), table.end(), '\n') == 5);
}

TEST_CASE("sensitivity: gamma = 1 is the usual signed-rank test") {
  std::mt19937_64 rng(6);
  std::normal_distribution<double> nd(0.3, 1.0);
  for (int rep = 0; rep < 50; ++rep) {
    std::vector<double> d(30 + rep);
    for (auto& v : d) v = std::round(nd(rng) * 4) / 4;  // ties and zeros
    // Independent computation: midranks of nonzero |d|, T+ and its null moments.
    std::vector<std::pair<double, bool>> nz;
    for (double v : d)
      if (v != 0) nz.push_back({std::abs(v), v > 0});
    std::sort(nz.begin(), nz.end());
    double tplus = 0, sq = 0, tot = 0;
    for (std::size_t i = 0; i < nz.size();) {
      std::size_t j = i;
      while (j < nz.size() && nz[j].first == nz[i].first) ++j;
      const double q = (i + 1 + j) / 2.0;
      for (std::size_t k = i; k < j; ++k) {
        tot += q;
        sq += q * q;
        if (nz[k].second) tplus += q;
      }
      i = j;
    }
    const double z = (tplus - 0.5 - tot / 2) / std::sqrt(sq / 4);
    const double expected = 1.0 - 0.5 * (1.0 + std::erf(z / std::sqrt(2.0)));
    CHECK(std::abs(rosenbaum_upper_p(d, 1.0, 1) - expected) < 1e-9);
  }
}

TEST_CASE("sensitivity: monotone p, bracketing, invariance, scale") {
  std::mt19937_64 rng(7);
  std::normal_distribution<double> nd(0.5, 1.0);
  std::vector<double> d(300);
  for (auto& v : d) v = nd(rng);
  const auto r = rosenbaum_gamma(d, 0.05);
  REQUIRE(r.gamma_critical);
  CHECK(r.direction == 1);
  CHECK(*r.gamma_critical > 1.0);
  double prev = 0.0;
  for (double g = 1.0; g < 20.0; g += 0.25) {
    const double p = rosenbaum_upper_p(d, g, 1);
    CHECK(p >= prev - 1e-15);
    prev = p;
  }
  CHECK(rosenbaum_upper_p(d, *r.gamma_critical, 1) < 0.05);
  CHECK(rosenbaum_upper_p(d, *r.gamma_critical + 0.01, 1) >= 0.05);

  auto doubled = d;
  for (auto& v : doubled) v *= 2.0;
  CHECK(rosenbaum_gamma(doubled, 0.05).gamma_critical == r.gamma_critical);
  auto negated = d;
  for (auto& v : negated) v = -v;
  const auto rn = rosenbaum_gamma(negated, 0.05);
  CHECK(rn.direction == -1);
  CHECK(rn.gamma_critical == r.gamma_critical);

  // Larger shifts never lower the critical gamma.
  double last = 1.0;
  for (double shift : {0.0, 0.2, 0.4, 0.8}) {
    auto s = d;
    for (auto& v : s) v += shift;
    const double gc = *rosenbaum_gamma(s, 0.05).gamma_critical;
    CHECK(gc >= last);
    last = gc;
  }

  // A strong planted effect over 1000 pairs reaches the tens.
  std::normal_distribution<double> strong(1.25, 1.0);
  std::vector<double> big(1000);
  for (auto& v : big) v = strong(rng);
  const auto rs = rosenbaum_gamma(big, 0.05);
  CHECK(*rs.gamma_critical >= 10.0);
  CHECK(*rs.gamma_critical < 100.0);

  std::normal_distribution<double> none(0.0, 1.0);
  std::vector<double> weak(20);
  for (auto& v : weak) v = none(rng);
  const auto rw = rosenbaum_gamma(weak, 0.05);
  if (rw.p_value >= 0.05) CHECK(*rw.gamma_critical == 1.0);

  const auto zero = rosenbaum_gamma(std::vector<double>(10, 0.0), 0.05);
  CHECK_FALSE(zero.gamma_critical.has_value());
  CHECK_THROWS_AS(rosenbaum_upper_p(std::vector<double>(3, 0.0), 1.0, 1), InferenceError);

  SensitivityResult a = r, b = rs;
  a.level = b.level = "lv2";
  const auto table = sensitivity_table({"attendance", "psu"}, {{a}, {b}});
  CHECK(table.substr(0, table.find('\n')) ==
        "level,attendance_gamma_c,attendance_direction,attendance_capped,psu_gamma_c,psu_direction,psu_capped");
}
