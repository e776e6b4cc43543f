/*
 * SPDX-FileCopyrightText: Copyright (c) 2026, The finebal Authors. All rights reserved.
 * SPDX-License-Identifier: Apache-2.0
 */
// CPLEX LP text writer. Grammar of the emitted subset:
//
//   file      := "Minimize" NL " obj:" expr NL
//                "Subject To" NL { " c<i>:" expr rel number NL }
//                "Bounds" NL { bound NL } "End" NL
//   expr      := { sign number " " name }      (at most 8 terms per line)
//   rel       := "<=" | "=" | ">="
//   bound     := name " free" | lo " <= " name " <= " hi | name " >= " lo
//              | name " <= " hi | name " = " value
//
// Names keep [A-Za-z0-9_.]; anything else becomes '_'. Numbers use the
// shortest round-trip decimal form.
#include <charconv>
#include <cmath>

#include "finebal/lp.hpp"

namespace finebal::lp {
namespace {

std::string number(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

std::string sanitize(const std::string& name) {
  std::string out;
  for (char c : name) {
    const bool ok = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') ||
                    c == '_' || c == '.';
    out.push_back(ok ? c : '_');
  }
  while (out.size() > 1 && out.back() == '_') out.pop_back();
  if (out.empty() || (out[0] >= '0' && out[0] <= '9') || out[0] == '.') out.insert(0, "x_");
  return out;
}

void write_expr(std::ostream& out, const std::vector<Term>& terms,
                const std::vector<std::string>& names) {
  if (terms.empty()) {
    out << " 0 " << names[0];
    return;
  }
  int on_line = 0;
  for (const auto& t : terms) {
    if (on_line == 8) {
      out << "\n   ";
      on_line = 0;
    }
    out << (t.coef < 0 ? " - " : " + ") << number(std::abs(t.coef)) << ' ' << names[t.var];
    ++on_line;
  }
}

}  // namespace

void write_lp_format(const LinearProgram& lp, std::ostream& out) {
  std::vector<std::string> names;
  for (int j = 0; j < lp.num_vars(); ++j) names.push_back(sanitize(lp.var_name(j)));

  std::vector<Term> obj;
  for (int j = 0; j < lp.num_vars(); ++j) {
    if (lp.objective()[j] != 0.0) obj.push_back({j, lp.objective()[j]});
  }
  out << "Minimize\n obj:";
  write_expr(out, obj, names);
  out << "\nSubject To\n";
  for (int i = 0; i < lp.num_constraints(); ++i) {
    const auto& c = lp.constraint(i);
    out << " c" << i << ':';
    write_expr(out, c.terms, names);
    switch (c.relation) {
      case Relation::LessEqual: out << " <= "; break;
      case Relation::Equal: out << " = "; break;
      case Relation::GreaterEqual: out << " >= "; break;
    }
    out << number(c.rhs) << '\n';
  }
  out << "Bounds\n";
  for (int j = 0; j < lp.num_vars(); ++j) {
    const double lo = lp.lower()[j];
    const double hi = lp.upper()[j];
    const std::string& nm = names[j];
    if (lo == hi) {
      out << ' ' << nm << " = " << number(lo) << '\n';
    } else if (std::isinf(lo) && std::isinf(hi)) {
      out << ' ' << nm << " free\n";
    } else if (std::isinf(lo)) {
      out << " -inf <= " << nm << " <= " << number(hi) << '\n';
    } else if (std::isinf(hi)) {
      out << ' ' << nm << " >= " << number(lo) << '\n';
    } else {
      out << ' ' << number(lo) << " <= " << nm << " <= " << number(hi) << '\n';
    }
  }
  out << "End\n";
}

}  // namespace finebal::lp
