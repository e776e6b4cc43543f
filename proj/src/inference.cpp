/*
 * SPDX-FileCopyrightText: Copyright (c) 2026, The finebal Authors. All rights reserved.
 * SPDX-License-Identifier: Apache-2.0
 */
#include "finebal/inference.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <exception>
#include <mutex>
#include <numeric>
#include <random>
#include <thread>

#include <boost/math/distributions/normal.hpp>
#include <boost/random/uniform_int_distribution.hpp>

namespace finebal {

namespace {

constexpr long kChunk = 1024;

std::string num(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

// Twice the midranks of `v`, so ties stay integral.
std::vector<int> doubled_midranks(std::span<const double> v) {
  const int n = static_cast<int>(v.size());
  std::vector<int> order(n), out(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return v[a] < v[b]; });
  for (int i = 0; i < n;) {
    int j = i;
    while (j + 1 < n && v[order[j + 1]] == v[order[i]]) ++j;
    for (int k = i; k <= j; ++k) out[order[k]] = i + j + 2;
    i = j + 1;
  }
  return out;
}

std::vector<double> walsh_averages(std::span<const double> d) {
  std::vector<double> w;
  w.reserve(d.size() * (d.size() + 1) / 2);
  for (std::size_t i = 0; i < d.size(); ++i) {
    for (std::size_t j = i; j < d.size(); ++j) w.push_back((d[i] + d[j]) / 2.0);
  }
  return w;
}

double order_stat(std::vector<double>& w, long long k) {  // 1-based
  auto it = w.begin() + (k - 1);
  std::nth_element(w.begin(), it, w.end());
  return *it;
}

template <class F>
void parallel_for(long count, int workers, F&& body) {
  workers = std::max(1, std::min<int>(workers, static_cast<int>(std::min<long>(count, 256))));
  if (workers == 1) {
    for (long i = 0; i < count; ++i) body(i);
    return;
  }
  std::atomic<long> next{0};
  std::exception_ptr err;
  std::mutex mu;
  std::vector<std::thread> pool;
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (long i; (i = next.fetch_add(1)) < count;) {
        try {
          body(i);
        } catch (...) {
          std::lock_guard lock(mu);
          if (!err) err = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (err) std::rethrow_exception(err);
}

}  // namespace

int MatchedGroups::level_index(const std::string& label) const {
  for (int u = 0; u < num_levels(); ++u) {
    if (levels[u] == label) return u;
  }
  throw InferenceError("unknown level '" + label + "'");
}

void MatchedGroups::validate() const {
  if (num_levels() < 2) throw InferenceError("need at least two levels");
  if (num_groups() < 2) throw InferenceError("need at least two matched groups");
  if (!group_ids.empty() && group_ids.size() != values.size())
    throw InferenceError("group id count does not match the number of groups");
  for (int g = 0; g < num_groups(); ++g) {
    if (static_cast<int>(values[g].size()) != num_levels())
      throw InferenceError("group " + std::to_string(g) + " is not a complete block");
    for (double v : values[g]) {
      if (!std::isfinite(v)) throw InferenceError("group " + std::to_string(g) + " has a non-finite outcome");
    }
  }
}

MatchedGroups MatchedGroups::from_design(const MatchedDesign& design, const Dataset& data,
                                         const std::string& outcome) {
  MatchedGroups g;
  for (const auto& lv : design.levels) g.levels.push_back(lv.label);
  const auto& tmpl = design.template_units();
  for (std::size_t t = 0; t < tmpl.size(); ++t) {
    g.group_ids.push_back(data.unit(tmpl[t]).id);
    std::vector<double> row;
    for (const auto& lv : design.levels) {
      const Unit& unit = data.unit(lv.pairs.at(t));
      auto it = unit.outcomes.find(outcome);
      if (it == unit.outcomes.end())
        throw InferenceError("unit '" + unit.id + "' in level '" + lv.label +
                             "' has no value for outcome '" + outcome + "'");
      row.push_back(it->second);
    }
    g.values.push_back(std::move(row));
  }
  g.validate();
  return g;
}

std::vector<double> pair_differences(const MatchedGroups& groups, int u) {
  if (u <= 0 || u >= groups.num_levels())
    throw InferenceError("contrast level must differ from the baseline");
  std::vector<double> d;
  d.reserve(groups.values.size());
  for (const auto& row : groups.values) {
    if (static_cast<int>(row.size()) != groups.num_levels())
      throw InferenceError("incomplete block in matched groups");
    d.push_back(row[u] - row[0]);
  }
  return d;
}

std::vector<double> pair_differences(const MatchedGroups& groups, const std::string& level) {
  return pair_differences(groups, groups.level_index(level));
}

double hodges_lehmann(std::span<const double> d) {
  if (d.empty()) throw InferenceError("hodges_lehmann needs at least one difference");
  auto w = walsh_averages(d);
  const long long N = static_cast<long long>(w.size());
  if (N % 2 == 1) return order_stat(w, (N + 1) / 2);
  const double hi = order_stat(w, N / 2 + 1);
  const double lo = *std::max_element(w.begin(), w.begin() + N / 2);
  return (lo + hi) / 2.0;
}

long long signed_rank_order(int n, double alpha) {
  if (n < 1) throw InferenceError("signed-rank interval needs at least one difference");
  if (!(alpha > 0.0 && alpha < 1.0)) throw InferenceError("alpha must lie in (0, 1)");
  const long long N = static_cast<long long>(n) * (n + 1) / 2;
  long long C;
  if (n <= 50) {
    // Null distribution of the positive-rank sum.
    std::vector<double> p(N + 1, 0.0);
    p[0] = 1.0;
    for (int i = 1; i <= n; ++i) {
      for (long long s = static_cast<long long>(i) * (i + 1) / 2; s >= 0; --s)
        p[s] = 0.5 * p[s] + (s >= i ? 0.5 * p[s - i] : 0.0);
    }
    long long t = N + 1;
    double tail = 0.0;
    for (long long s = N; s >= 0; --s) {
      tail += p[s];
      if (tail > alpha / 2.0) break;
      t = s;
    }
    C = N + 1 - t;
  } else {
    const double z = boost::math::quantile(boost::math::normal(), 1.0 - alpha / 2.0);
    const double sd = std::sqrt(static_cast<double>(n) * (n + 1) * (2.0 * n + 1) / 24.0);
    C = std::llround(static_cast<double>(N) / 2.0 - z * sd);
  }
  return std::clamp<long long>(C, 1, (N + 1) / 2);
}

std::pair<double, double> signed_rank_interval(std::span<const double> d, double alpha) {
  const long long C = signed_rank_order(static_cast<int>(d.size()), alpha);
  auto w = walsh_averages(d);
  const long long N = static_cast<long long>(w.size());
  const double lo = order_stat(w, C);
  const double hi = order_stat(w, N + 1 - C);
  return {lo, hi};
}

double ContrastResult::tail_probability(double c) const {
  if (null_max.empty()) return 0.0;
  const auto it = std::lower_bound(null_max.begin(), null_max.end(), c - 1e-9);
  return static_cast<double>(null_max.end() - it) / static_cast<double>(null_max.size());
}

ContrastResult simultaneous_contrasts(const MatchedGroups& groups, const ContrastOptions& opts) {
  groups.validate();
  if (!(opts.alpha > 0.0 && opts.alpha < 1.0)) throw InferenceError("alpha must lie in (0, 1)");
  if (opts.mc_draws < 1000)
    throw InferenceError("mc_draws must be at least 1000, got " + std::to_string(opts.mc_draws));
  const int n = groups.num_groups();
  const int L = groups.num_levels();
  const int C = L - 1;
  const long B = opts.mc_draws;

  std::vector<std::vector<int>> ranks(n);
  std::vector<long long> sums(L, 0);
  for (int g = 0; g < n; ++g) {
    ranks[g] = doubled_midranks(groups.values[g]);
    for (int u = 0; u < L; ++u) sums[u] += ranks[g][u];
  }

  // Null: each group's ranks permuted uniformly, independently.
  std::vector<long long> absdiff(static_cast<std::size_t>(B) * C);
  const long chunks = (B + kChunk - 1) / kChunk;
  parallel_for(chunks, opts.workers, [&](long chunk) {
    std::seed_seq seq{static_cast<std::uint32_t>(opts.seed), static_cast<std::uint32_t>(opts.seed >> 32),
                      static_cast<std::uint32_t>(chunk), static_cast<std::uint32_t>(chunk >> 32)};
    std::mt19937_64 rng(seq);
    std::vector<int> perm(L);
    std::vector<long long> s(L);
    const long end = std::min(B, (chunk + 1) * kChunk);
    for (long b = chunk * kChunk; b < end; ++b) {
      std::fill(s.begin(), s.end(), 0);
      for (int g = 0; g < n; ++g) {
        perm = ranks[g];
        for (int i = L - 1; i > 0; --i) {
          boost::random::uniform_int_distribution<int> pick(0, i);
          std::swap(perm[i], perm[pick(rng)]);
        }
        for (int u = 0; u < L; ++u) s[u] += perm[u];
      }
      for (int u = 1; u < L; ++u) absdiff[static_cast<std::size_t>(b) * C + (u - 1)] = std::llabs(s[u] - s[0]);
    }
  });

  std::vector<long long> maxes(B);
  for (long b = 0; b < B; ++b) {
    const auto* row = &absdiff[static_cast<std::size_t>(b) * C];
    maxes[b] = *std::max_element(row, row + C);
  }
  std::sort(maxes.begin(), maxes.end());

  // r*: one lattice step above the largest value whose tail still exceeds alpha.
  long long above = maxes.front();
  for (long i = 0; i < B;) {
    long j = i;
    while (j + 1 < B && maxes[j + 1] == maxes[i]) ++j;
    if (static_cast<double>(B - i) > opts.alpha * static_cast<double>(B)) above = maxes[i];
    i = j + 1;
  }
  const long long critical = above + 1;

  long long hits = 0;
  for (auto v : absdiff) hits += v >= critical;
  const double adjusted =
      std::max(1.0 / static_cast<double>(B), static_cast<double>(hits) / (static_cast<double>(B) * C));

  ContrastResult res;
  res.baseline = groups.levels[0];
  res.baseline_rank_sum = static_cast<double>(sums[0]) / 2.0;
  res.critical_value = static_cast<double>(critical) / 2.0;
  res.adjusted_alpha = adjusted;
  res.mc_draws = B;
  res.null_max.reserve(B);
  for (auto v : maxes) res.null_max.push_back(static_cast<double>(v) / 2.0);
  for (int u = 1; u < L; ++u) {
    const auto d = pair_differences(groups, u);
    ContrastEstimate e;
    e.level = groups.levels[u];
    e.estimate = hodges_lehmann(d);
    std::tie(e.lo, e.hi) = signed_rank_interval(d, adjusted);
    e.rank_sum = static_cast<double>(sums[u]) / 2.0;
    e.rank_difference = static_cast<double>(sums[u] - sums[0]) / 2.0;
    e.significant = std::llabs(sums[u] - sums[0]) >= critical;
    res.contrasts.push_back(std::move(e));
  }
  return res;
}

namespace {

struct SignedRanks {
  double positive = 0.0;  // sum of ranks of positive differences
  double total = 0.0;
  double squares = 0.0;
  int count = 0;
};

SignedRanks signed_ranks(std::span<const double> d) {
  std::vector<double> mag;
  std::vector<bool> pos;
  for (double v : d) {
    if (!std::isfinite(v)) throw InferenceError("differences must be finite");
    if (v == 0.0) continue;
    mag.push_back(std::abs(v));
    pos.push_back(v > 0.0);
  }
  const auto r2 = doubled_midranks(mag);
  SignedRanks s;
  s.count = static_cast<int>(mag.size());
  for (int i = 0; i < s.count; ++i) {
    const double q = r2[i] / 2.0;
    s.total += q;
    s.squares += q * q;
    if (pos[i]) s.positive += q;
  }
  return s;
}

double upper_p(const SignedRanks& s, double gamma, int direction) {
  const double stat = direction > 0 ? s.positive : s.total - s.positive;
  const double theta = gamma / (1.0 + gamma);
  const double mean = theta * s.total;
  const double sd = std::sqrt(gamma / ((1.0 + gamma) * (1.0 + gamma)) * s.squares);
  return 0.5 * std::erfc((stat - 0.5 - mean) / (sd * std::sqrt(2.0)));
}

}  // namespace

double rosenbaum_upper_p(std::span<const double> d, double gamma, int direction) {
  if (!(gamma >= 1.0)) throw InferenceError("gamma must be at least 1");
  if (direction != 1 && direction != -1) throw InferenceError("direction must be +1 or -1");
  const auto s = signed_ranks(d);
  if (s.count == 0) throw InferenceError("all differences are zero");
  return upper_p(s, gamma, direction);
}

SensitivityResult rosenbaum_gamma(std::span<const double> d, double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw InferenceError("alpha must lie in (0, 1)");
  SensitivityResult r;
  r.alpha = alpha;
  const auto s = signed_ranks(d);
  if (s.count == 0) return r;  // undefined
  r.direction = s.positive >= s.total / 2.0 ? 1 : -1;
  r.p_value = upper_p(s, 1.0, r.direction);
  if (r.p_value >= alpha) {
    r.gamma_critical = 1.0;
    return r;
  }
  double lo = 1.0, hi = 1000.0;
  if (upper_p(s, hi, r.direction) < alpha) {
    r.gamma_critical = hi;
    r.capped = true;
    return r;
  }
  while (hi - lo > 0.01) {
    const double mid = (lo + hi) / 2.0;
    (upper_p(s, mid, r.direction) < alpha ? lo : hi) = mid;
  }
  r.gamma_critical = lo;
  return r;
}

std::string contrast_table(const std::vector<std::string>& outcomes,
                           const std::vector<ContrastResult>& results) {
  if (outcomes.size() != results.size() || results.empty())
    throw InferenceError("one contrast result per outcome is required");
  std::string out = "level";
  for (const auto& o : outcomes) {
    out += "," + csv_escape(o + "_estimate") + "," + csv_escape(o + "_ci_lo") + "," +
           csv_escape(o + "_ci_hi") + "," + csv_escape(o + "_significant");
  }
  out += "\n";
  for (std::size_t c = 0; c < results[0].contrasts.size(); ++c) {
    out += csv_escape(results[0].contrasts[c].level);
    for (const auto& r : results) {
      const auto& e = r.contrasts.at(c);
      out += "," + num(e.estimate) + "," + num(e.lo) + "," + num(e.hi) + "," +
             (e.significant ? "1" : "0");
    }
    out += "\n";
  }
  return out;
}

std::string sensitivity_table(const std::vector<std::string>& outcomes,
                              const std::vector<std::vector<SensitivityResult>>& results) {
  if (outcomes.size() != results.size() || results.empty())
    throw InferenceError("one sensitivity result list per outcome is required");
  std::string out = "level";
  for (const auto& o : outcomes) {
    out += "," + csv_escape(o + "_gamma_c") + "," + csv_escape(o + "_direction") + "," +
           csv_escape(o + "_capped");
  }
  out += "\n";
  for (std::size_t c = 0; c < results[0].size(); ++c) {
    out += csv_escape(results[0][c].level);
    for (const auto& r : results) {
      const auto& s = r.at(c);
      out += "," + (s.gamma_critical ? num(*s.gamma_critical) : std::string("NA")) + "," +
             std::to_string(s.direction) + "," + (s.capped ? "1" : "0");
    }
    out += "\n";
  }
  return out;
}

}  // namespace finebal
