/*
 * SPDX-FileCopyrightText: Copyright (c) 2026, The finebal Authors. All rights reserved.
 * SPDX-License-Identifier: Apache-2.0
 */
#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "json.hpp"

namespace finebal {

/// Raised for malformed input files, schemas and configuration.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Ordered set of unit indices into a Dataset.
using UnitSet = std::vector<std::int32_t>;

struct Covariate {
  std::string name;
  std::vector<std::string> categories;
  // Raw cell values (e.g. "" or "NA") that map to the category named
  // `missing_category`. Empty when the covariate has no missing category.
  std::vector<std::string> missing_values;
  std::optional<std::string> missing_category;

  int num_categories() const { return static_cast<int>(categories.size()); }
  /// Index of `label`, or -1.
  int find(const std::string& label) const;
};

/// Categorical covariates; categories are stored as dense indices.
class CovariateSchema {
 public:
  CovariateSchema() = default;
  explicit CovariateSchema(std::vector<Covariate> covariates);

  int num_covariates() const { return static_cast<int>(covariates_.size()); }
  const Covariate& covariate(int p) const { return covariates_.at(p); }
  const std::vector<Covariate>& covariates() const { return covariates_; }

  /// Sum of K_p over all covariates.
  int total_categories() const { return offsets_.back(); }
  /// Flat index of (p, k) in the indicator expansion.
  int flat_index(int p, int k) const { return offsets_[p] + k; }
  int offset(int p) const { return offsets_[p]; }

  /// Adds `label` to covariate p and returns its index.
  int extend(int p, const std::string& label);

  bool operator==(const CovariateSchema& other) const;

 private:
  void validate() const;
  void rebuild_offsets();

  std::vector<Covariate> covariates_;
  std::vector<int> offsets_{0};
};

struct Unit {
  std::string id;
  std::vector<std::int32_t> x;  // one category index per covariate
  std::map<std::string, double> outcomes;
  std::optional<std::string> exposure;

  bool operator==(const Unit&) const = default;
};

/// Units plus the partition of exposed units into exposure levels.
class Dataset {
 public:
  Dataset(CovariateSchema schema, std::vector<Unit> units,
          std::vector<std::string> level_order = {});

  const CovariateSchema& schema() const { return schema_; }
  const std::vector<Unit>& units() const { return units_; }
  const Unit& unit(std::int32_t i) const { return units_.at(i); }
  std::size_t size() const { return units_.size(); }

  /// Level labels in their canonical order.
  const std::vector<std::string>& levels() const { return level_order_; }
  const UnitSet& level(const std::string& label) const;
  const std::map<std::string, UnitSet>& level_index() const { return level_index_; }

  /// All unit indices, in order.
  UnitSet all_units() const;
  /// Index of the unit with the given id, or -1.
  std::int32_t find_id(const std::string& id) const;

 private:
  CovariateSchema schema_;
  std::vector<Unit> units_;
  std::vector<std::string> level_order_;
  std::map<std::string, UnitSet> level_index_;
  std::map<std::string, std::int32_t> id_index_;
};

/// Column mapping and category orderings for load_csv.
struct SchemaConfig {
  std::string id_column = "id";
  std::optional<std::string> exposure_column;
  std::vector<std::string> level_order;  // optional explicit level ordering
  std::vector<std::string> outcome_columns;
  std::vector<std::string> missing_outcome_values{"", "NA"};
  std::vector<Covariate> covariates;
  bool auto_extend = false;

  static SchemaConfig from_json(const nlohmann::json& j);
  static SchemaConfig load(const std::filesystem::path& path);
  nlohmann::json to_json() const;
};

Dataset load_csv(const std::filesystem::path& path, const SchemaConfig& config);
Dataset parse_csv(const std::string& text, const SchemaConfig& config);
/// Writes the dataset in the layout load_csv reads with `config`.
std::string write_csv(const Dataset& data, const SchemaConfig& config);

/// Splits RFC 4180 text into records. Throws DataError on unterminated quotes.
std::vector<std::vector<std::string>> parse_csv_records(const std::string& text);
std::string csv_escape(const std::string& field);

struct Thresholds {
  std::vector<double> cuts;  // strictly increasing
};
struct Quantiles {
  int count = 0;  // >= 2
};
using BinMode = std::variant<Thresholds, Quantiles>;

/// Maps each value to a bin index. Thresholds are half-open [t_{j-1}, t_j);
/// quantile bins send ties to the lower bin.
std::vector<std::int32_t> bin_continuous(std::span<const double> values, const BinMode& mode);

/// Per-(p, k) counts over a set of units.
class CategoryCounts {
 public:
  CategoryCounts() = default;
  explicit CategoryCounts(const CovariateSchema& schema);

  int count(int p, int k) const { return counts_[offsets_[p] + k]; }
  int& at(int p, int k) { return counts_[offsets_[p] + k]; }
  int num_covariates() const { return static_cast<int>(offsets_.size()) - 1; }
  int num_categories(int p) const { return offsets_[p + 1] - offsets_[p]; }
  int total() const { return total_; }
  const std::vector<int>& flat() const { return counts_; }

  bool operator==(const CategoryCounts&) const = default;

 private:
  friend CategoryCounts category_counts(std::span<const Unit>, std::span<const std::int32_t>,
                                        const CovariateSchema&);
  std::vector<int> counts_;
  std::vector<int> offsets_{0};
  int total_ = 0;
};

CategoryCounts category_counts(std::span<const Unit> units, std::span<const std::int32_t> subset,
                               const CovariateSchema& schema);
CategoryCounts category_counts(const Dataset& data, std::span<const std::int32_t> subset);

}  // namespace finebal
