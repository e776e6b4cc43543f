/*
 * SPDX-FileCopyrightText: Copyright (c) 2026, The finebal Authors. All rights reserved.
 * SPDX-License-Identifier: Apache-2.0
 */
#include "finebal/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

namespace finebal {

using nlohmann::json;

int Covariate::find(const std::string& label) const {
  auto it = std::find(categories.begin(), categories.end(), label);
  return it == categories.end() ? -1 : static_cast<int>(it - categories.begin());
}

CovariateSchema::CovariateSchema(std::vector<Covariate> covariates)
    : covariates_(std::move(covariates)) {
  validate();
  rebuild_offsets();
}

void CovariateSchema::validate() const {
  if (covariates_.empty()) throw DataError("schema must declare at least one covariate");
  std::set<std::string> names;
  for (const auto& c : covariates_) {
    if (!names.insert(c.name).second) throw DataError("duplicate covariate '" + c.name + "'");
    if (c.categories.empty())
      throw DataError("covariate '" + c.name + "' has no categories");
    std::set<std::string> seen;
    for (const auto& k : c.categories) {
      if (!seen.insert(k).second)
        throw DataError("covariate '" + c.name + "' repeats category '" + k + "'");
    }
    if (c.missing_category && c.find(*c.missing_category) < 0)
      throw DataError("covariate '" + c.name + "': missing category '" + *c.missing_category +
                      "' is not one of its categories");
  }
}

void CovariateSchema::rebuild_offsets() {
  offsets_.assign(1, 0);
  for (const auto& c : covariates_) offsets_.push_back(offsets_.back() + c.num_categories());
}

int CovariateSchema::extend(int p, const std::string& label) {
  auto& c = covariates_.at(p);
  int k = c.find(label);
  if (k >= 0) return k;
  c.categories.push_back(label);
  rebuild_offsets();
  return c.num_categories() - 1;
}

bool CovariateSchema::operator==(const CovariateSchema& other) const {
  if (covariates_.size() != other.covariates_.size()) return false;
  for (std::size_t p = 0; p < covariates_.size(); ++p) {
    if (covariates_[p].name != other.covariates_[p].name ||
        covariates_[p].categories != other.covariates_[p].categories)
      return false;
  }
  return true;
}

Dataset::Dataset(CovariateSchema schema, std::vector<Unit> units,
                 std::vector<std::string> level_order)
    : schema_(std::move(schema)), units_(std::move(units)) {
  const int P = schema_.num_covariates();
  for (std::size_t i = 0; i < units_.size(); ++i) {
    const auto& u = units_[i];
    if (static_cast<int>(u.x.size()) != P)
      throw DataError("unit '" + u.id + "' has " + std::to_string(u.x.size()) +
                      " covariate values, expected " + std::to_string(P));
    for (int p = 0; p < P; ++p) {
      if (u.x[p] < 0 || u.x[p] >= schema_.covariate(p).num_categories())
        throw DataError("unit '" + u.id + "': category index out of range for '" +
                        schema_.covariate(p).name + "'");
    }
    if (!id_index_.emplace(u.id, static_cast<std::int32_t>(i)).second)
      throw DataError("duplicate unit id '" + u.id + "'");
    if (u.exposure) level_index_[*u.exposure].push_back(static_cast<std::int32_t>(i));
  }
  for (const auto& label : level_order) {
    if (!level_index_.count(label)) continue;  // declared but absent from this file
    if (std::find(level_order_.begin(), level_order_.end(), label) == level_order_.end())
      level_order_.push_back(label);
  }
  for (const auto& [label, _] : level_index_) {
    if (std::find(level_order_.begin(), level_order_.end(), label) == level_order_.end())
      level_order_.push_back(label);
  }
}

const UnitSet& Dataset::level(const std::string& label) const {
  auto it = level_index_.find(label);
  if (it == level_index_.end()) throw DataError("unknown exposure level '" + label + "'");
  return it->second;
}

UnitSet Dataset::all_units() const {
  UnitSet all(units_.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = static_cast<std::int32_t>(i);
  return all;
}

std::int32_t Dataset::find_id(const std::string& id) const {
  auto it = id_index_.find(id);
  return it == id_index_.end() ? -1 : it->second;
}

// ---------------------------------------------------------------------------
// Schema config

SchemaConfig SchemaConfig::from_json(const json& j) {
  SchemaConfig cfg;
  try {
    cfg.id_column = j.value("id_column", std::string("id"));
    if (j.contains("exposure_column") && !j["exposure_column"].is_null())
      cfg.exposure_column = j["exposure_column"].get<std::string>();
    cfg.level_order = j.value("level_order", std::vector<std::string>{});
    cfg.outcome_columns = j.value("outcomes", std::vector<std::string>{});
    cfg.missing_outcome_values =
        j.value("missing_outcome_values", std::vector<std::string>{"", "NA"});
    cfg.auto_extend = j.value("auto_extend", false);
    if (!j.contains("covariates") || !j["covariates"].is_array())
      throw DataError("schema config needs a 'covariates' array");
    for (const auto& c : j["covariates"]) {
      Covariate cov;
      cov.name = c.at("name").get<std::string>();
      cov.categories = c.value("categories", std::vector<std::string>{});
      if (c.contains("missing_category") && !c["missing_category"].is_null()) {
        cov.missing_category = c["missing_category"].get<std::string>();
        cov.missing_values = c.value("missing_values", std::vector<std::string>{"", "NA"});
        if (cov.find(*cov.missing_category) < 0) cov.categories.push_back(*cov.missing_category);
      }
      cfg.covariates.push_back(std::move(cov));
    }
  } catch (const json::exception& e) {
    throw DataError(std::string("invalid schema config: ") + e.what());
  }
  if (cfg.covariates.empty()) throw DataError("schema config declares no covariates");
  CovariateSchema check(cfg.covariates);
  return cfg;
}

SchemaConfig SchemaConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open schema config '" + path.string() + "'");
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw DataError("schema config '" + path.string() + "' is not valid JSON: " + e.what());
  }
  return from_json(j);
}

json SchemaConfig::to_json() const {
  json j;
  j["id_column"] = id_column;
  j["exposure_column"] = exposure_column ? json(*exposure_column) : json(nullptr);
  j["level_order"] = level_order;
  j["outcomes"] = outcome_columns;
  j["missing_outcome_values"] = missing_outcome_values;
  j["auto_extend"] = auto_extend;
  j["covariates"] = json::array();
  for (const auto& c : covariates) {
    json cj{{"name", c.name}, {"categories", c.categories}};
    if (c.missing_category) {
      cj["missing_category"] = *c.missing_category;
      cj["missing_values"] = c.missing_values;
    }
    j["covariates"].push_back(cj);
  }
  return j;
}

// ---------------------------------------------------------------------------
// CSV

std::vector<std::vector<std::string>> parse_csv_records(const std::string& text) {
  std::vector<std::vector<std::string>> records;
  std::vector<std::string> record;
  std::string field;
  bool in_quotes = false;
  bool field_started = false;
  std::size_t i = 0;
  if (text.size() >= 3 && text.compare(0, 3, "\xEF\xBB\xBF") == 0) i = 3;  // UTF-8 BOM
  auto end_record = [&] {
    record.push_back(std::move(field));
    field.clear();
    records.push_back(std::move(record));
    record.clear();
    field_started = false;
  };
  for (; i < text.size(); ++i) {
    char c = text[i];
    if (in_quotes) {
      if (c == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          field.push_back('"');
          ++i;
        } else {
          in_quotes = false;
        }
      } else {
        field.push_back(c);
      }
      continue;
    }
    switch (c) {
      case '"':
        in_quotes = true;
        field_started = true;
        break;
      case ',':
        record.push_back(std::move(field));
        field.clear();
        field_started = true;
        break;
      case '\r':
        if (i + 1 < text.size() && text[i + 1] == '\n') ++i;
        end_record();
        break;
      case '\n':
        end_record();
        break;
      default:
        field.push_back(c);
        field_started = true;
    }
  }
  if (in_quotes) throw DataError("unterminated quoted field at end of input");
  if (field_started || !record.empty()) end_record();
  return records;
}

std::string csv_escape(const std::string& field) {
  if (field.find_first_of(",\"\r\n") == std::string::npos) return field;
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out.push_back('"');
    out.push_back(c);
  }
  out.push_back('"');
  return out;
}

namespace {

bool contains(const std::vector<std::string>& v, const std::string& s) {
  return std::find(v.begin(), v.end(), s) != v.end();
}

double parse_number(const std::string& s, std::size_t row, const std::string& column) {
  double value = 0.0;
  const char* first = s.data();
  const char* last = s.data() + s.size();
  while (first < last && *first == ' ') ++first;
  while (last > first && last[-1] == ' ') --last;
  if (first < last && *first == '+') ++first;
  auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc() || ptr != last || !std::isfinite(value))
    throw DataError("row " + std::to_string(row) + ", column '" + column +
                    "': cannot parse number '" + s + "'");
  return value;
}

std::string format_number(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

}  // namespace

Dataset parse_csv(const std::string& text, const SchemaConfig& config) {
  auto records = parse_csv_records(text);
  // Drop trailing blank lines.
  while (!records.empty() && records.back().size() == 1 && records.back()[0].empty())
    records.pop_back();
  if (records.empty()) throw DataError("empty file");
  const auto& header = records[0];

  auto column_of = [&](const std::string& name) {
    auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw DataError("header has no column '" + name + "'");
    return static_cast<std::size_t>(it - header.begin());
  };
  const std::size_t id_col = column_of(config.id_column);
  std::vector<std::size_t> cov_cols;
  for (const auto& c : config.covariates) cov_cols.push_back(column_of(c.name));
  std::optional<std::size_t> exp_col;
  if (config.exposure_column) exp_col = column_of(*config.exposure_column);
  std::vector<std::size_t> out_cols;
  for (const auto& o : config.outcome_columns) out_cols.push_back(column_of(o));

  CovariateSchema schema(config.covariates);
  std::vector<Unit> units;
  units.reserve(records.size() - 1);
  for (std::size_t r = 1; r < records.size(); ++r) {
    const auto& rec = records[r];
    const std::size_t row = r + 1;  // 1-based, header is row 1
    if (rec.size() != header.size())
      throw DataError("row " + std::to_string(row) + ": expected " +
                      std::to_string(header.size()) + " fields, got " +
                      std::to_string(rec.size()));
    Unit u;
    u.id = rec[id_col];
    if (u.id.empty()) throw DataError("row " + std::to_string(row) + ": empty id");
    u.x.resize(cov_cols.size());
    for (std::size_t p = 0; p < cov_cols.size(); ++p) {
      const std::string& cell = rec[cov_cols[p]];
      const Covariate& cov = schema.covariate(static_cast<int>(p));
      int k = cov.find(cell);
      if (k < 0 && cov.missing_category && contains(cov.missing_values, cell))
        k = cov.find(*cov.missing_category);
      if (k < 0) {
        if (!config.auto_extend)
          throw DataError("row " + std::to_string(row) + ", column '" + cov.name +
                          "': unknown category '" + cell + "'");
        k = schema.extend(static_cast<int>(p), cell);
      }
      u.x[p] = k;
    }
    if (exp_col && !rec[*exp_col].empty()) u.exposure = rec[*exp_col];
    for (std::size_t o = 0; o < out_cols.size(); ++o) {
      const std::string& cell = rec[out_cols[o]];
      if (contains(config.missing_outcome_values, cell)) continue;
      u.outcomes[config.outcome_columns[o]] = parse_number(cell, row, config.outcome_columns[o]);
    }
    units.push_back(std::move(u));
  }
  return Dataset(std::move(schema), std::move(units), config.level_order);
}

Dataset load_csv(const std::filesystem::path& path, const SchemaConfig& config) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_csv(ss.str(), config);
}

std::string write_csv(const Dataset& data, const SchemaConfig& config) {
  const auto& schema = data.schema();
  std::ostringstream out;
  out << csv_escape(config.id_column);
  for (const auto& c : schema.covariates()) out << ',' << csv_escape(c.name);
  if (config.exposure_column) out << ',' << csv_escape(*config.exposure_column);
  for (const auto& o : config.outcome_columns) out << ',' << csv_escape(o);
  out << '\n';
  const std::string missing =
      config.missing_outcome_values.empty() ? std::string() : config.missing_outcome_values[0];
  for (const auto& u : data.units()) {
    out << csv_escape(u.id);
    for (int p = 0; p < schema.num_covariates(); ++p)
      out << ',' << csv_escape(schema.covariate(p).categories[u.x[p]]);
    if (config.exposure_column) out << ',' << csv_escape(u.exposure.value_or(""));
    for (const auto& o : config.outcome_columns) {
      auto it = u.outcomes.find(o);
      out << ',' << (it == u.outcomes.end() ? missing : format_number(it->second));
    }
    out << '\n';
  }
  return out.str();
}

// ---------------------------------------------------------------------------
// Binning and counts

std::vector<std::int32_t> bin_continuous(std::span<const double> values, const BinMode& mode) {
  if (values.empty()) throw DataError("bin_continuous: no values");
  for (double v : values) {
    if (!std::isfinite(v)) throw DataError("bin_continuous: non-finite value");
  }
  std::vector<double> cuts;
  bool ties_lower = false;
  if (const auto* t = std::get_if<Thresholds>(&mode)) {
    for (std::size_t j = 1; j < t->cuts.size(); ++j) {
      if (!(t->cuts[j] > t->cuts[j - 1]))
        throw DataError("bin_continuous: thresholds must be strictly increasing");
    }
    cuts = t->cuts;
  } else {
    const int q = std::get<Quantiles>(mode).count;
    if (q < 2) throw DataError("bin_continuous: quantile count must be at least 2");
    std::vector<double> sorted(values.begin(), values.end());
    std::sort(sorted.begin(), sorted.end());
    std::vector<double> uniq = sorted;
    uniq.erase(std::unique(uniq.begin(), uniq.end()), uniq.end());
    if (static_cast<int>(uniq.size()) < q)
      throw DataError("bin_continuous: " + std::to_string(q) + " quantiles requested but only " +
                      std::to_string(uniq.size()) + " distinct values");
    const std::size_t n = sorted.size();
    for (int j = 1; j < q; ++j) {
      // Inverse empirical CDF at j/q: the ceil(j n / q)-th order statistic.
      std::size_t pos = (static_cast<std::size_t>(j) * n + q - 1) / q;
      cuts.push_back(sorted[pos - 1]);
    }
    ties_lower = true;
  }
  std::vector<std::int32_t> bins(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double v = values[i];
    auto it = ties_lower ? std::lower_bound(cuts.begin(), cuts.end(), v)
                         : std::upper_bound(cuts.begin(), cuts.end(), v);
    bins[i] = static_cast<std::int32_t>(it - cuts.begin());
  }
  return bins;
}

CategoryCounts::CategoryCounts(const CovariateSchema& schema) {
  for (int p = 0; p < schema.num_covariates(); ++p)
    offsets_.push_back(offsets_.back() + schema.covariate(p).num_categories());
  counts_.assign(offsets_.back(), 0);
}

CategoryCounts category_counts(std::span<const Unit> units, std::span<const std::int32_t> subset,
                               const CovariateSchema& schema) {
  CategoryCounts counts(schema);
  const int P = schema.num_covariates();
  for (std::int32_t i : subset) {
    const auto& x = units[static_cast<std::size_t>(i)].x;
    for (int p = 0; p < P; ++p) ++counts.counts_[counts.offsets_[p] + x[p]];
  }
  counts.total_ = static_cast<int>(subset.size());
  return counts;
}

CategoryCounts category_counts(const Dataset& data, std::span<const std::int32_t> subset) {
  for (std::int32_t i : subset) {
    if (i < 0 || static_cast<std::size_t>(i) >= data.size())
      throw DataError("category_counts: unit index out of range");
  }
  return category_counts(data.units(), subset, data.schema());
}

}  // namespace finebal
