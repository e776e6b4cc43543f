#include <algorithm>
#include <filesystem>
#include <fstream>
#include <random>

#include "doctest.h"
#include "finebal/data.hpp"
#include "fixtures.hpp"

using namespace finebal;

namespace {

SchemaConfig gender_config() {
  return SchemaConfig::from_json(nlohmann::json::parse(R"({
    "id_column": "id",
    "covariates": [{"name": "gender", "categories": ["M", "F"]}]
  })"));
}

SchemaConfig rich_config() {
  return SchemaConfig::from_json(nlohmann::json::parse(R"({
    "id_column": "id",
    "exposure_column": "level",
    "level_order": ["low", "mid", "high"],
    "outcomes": ["attendance", "score"],
    "covariates": [
      {"name": "gender", "categories": ["M", "F"]},
      {"name": "mother_edu", "categories": ["Primary", "Secondary", "Tertiary"],
       "missing_category": "Missing", "missing_values": ["", "NA"]}
    ]
  })"));
}

}  // namespace

TEST_CASE("minimal three-row file") {
  const auto ds = parse_csv("id,gender\n1,M\n2,F\n3,M\n", gender_config());
  CHECK(ds.schema().num_covariates() == 1);
  CHECK(ds.schema().covariate(0).num_categories() == 2);
  CHECK(ds.size() == 3);
  CHECK(ds.unit(1).x[0] == 1);
}

TEST_CASE("blank cell maps to the declared missing category") {
  const auto ds = parse_csv(
      "id,gender,mother_edu,level,attendance,score\n"
      "a,M,,low,90,500\n"
      "b,F,Tertiary,high,NA,610.5\n",
      rich_config());
  const auto& cov = ds.schema().covariate(1);
  CHECK(cov.categories.back() == "Missing");
  CHECK(ds.unit(0).x[1] == cov.find("Missing"));
  CHECK(ds.unit(1).outcomes.count("attendance") == 0);
  CHECK(ds.unit(1).outcomes.at("score") == 610.5);
}

TEST_CASE("unknown category names row and column") {
  try {
    parse_csv("id,gender\n1,M\n2,Z\n", gender_config());
    FAIL("expected DataError");
  } catch (const DataError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("row 3") != std::string::npos);
    CHECK(msg.find("gender") != std::string::npos);
    CHECK(msg.find("'Z'") != std::string::npos);
  }
  auto cfg = gender_config();
  cfg.auto_extend = true;
  const auto ds = parse_csv("id,gender\n1,M\n2,Z\n", cfg);
  CHECK(ds.schema().covariate(0).num_categories() == 3);
  CHECK(ds.unit(1).x[0] == 2);
}

TEST_CASE("malformed inputs") {
  CHECK_THROWS_AS(parse_csv("", gender_config()), DataError);
  CHECK_THROWS_AS(parse_csv("id,gender\n1,M,extra\n", gender_config()), DataError);
  CHECK_THROWS_AS(parse_csv("id,sex\n1,M\n", gender_config()), DataError);
  CHECK_THROWS_AS(parse_csv("id,gender\n\"1,M\n", gender_config()), DataError);
  CHECK_THROWS_AS(load_csv("/nonexistent/file.csv", gender_config()), DataError);
  CHECK_THROWS_AS(SchemaConfig::from_json(nlohmann::json::parse(R"({"covariates": []})")),
                  DataError);
  CHECK_THROWS_AS(SchemaConfig::from_json(nlohmann::json::parse(
                      R"({"covariates": [{"name": "g", "categories": ["a", "a"]}]})")),
                  DataError);
}

TEST_CASE("quoted fields, CRLF and BOM") {
  const auto recs = parse_csv_records("\xEF\xBB\xBF" "a,\"b,c\",\"d\"\"e\"\r\n1,2,3\r\n");
  REQUIRE(recs.size() == 2);
  CHECK(recs[0][0] == "a");
  CHECK(recs[0][1] == "b,c");
  CHECK(recs[0][2] == "d\"e");
  CHECK(recs[1][2] == "3");
  CHECK(csv_escape("x,y") == "\"x,y\"");
  CHECK(csv_escape("plain") == "plain");
}

TEST_CASE("CSV round trip preserves units, schema and levels") {
  const auto cfg = rich_config();
  const auto ds = parse_csv(
      "id,gender,mother_edu,level,attendance,score\n"
      "a,M,,low,90,500\n"
      "\"b,2\",F,Tertiary,high,NA,610.5\n"
      "c,F,Primary,mid,0.1,1e-3\n"
      "d,M,Secondary,,88.25,\n",
      cfg);
  const auto again = parse_csv(write_csv(ds, cfg), cfg);
  CHECK(again.schema() == ds.schema());
  CHECK(again.units() == ds.units());
  CHECK(again.level_index() == ds.level_index());
  CHECK(again.levels() == ds.levels());
  CHECK(ds.level("mid").size() == 1);
  CHECK(ds.find_id("d") == 3);
  CHECK_FALSE(ds.unit(3).exposure.has_value());
}

TEST_CASE("file loading and schema json round trip") {
  const auto dir = std::filesystem::temp_directory_path() / "finebal_test_data";
  std::filesystem::create_directories(dir);
  const auto cfg = rich_config();
  {
    std::ofstream(dir / "schema.json") << cfg.to_json().dump(2);
    std::ofstream(dir / "d.csv") << "id,gender,mother_edu,level,attendance,score\nx,F,NA,low,1,2\n";
  }
  const auto loaded = SchemaConfig::load(dir / "schema.json");
  CHECK(loaded.to_json() == cfg.to_json());
  const auto ds = load_csv(dir / "d.csv", loaded);
  CHECK(ds.unit(0).x[1] == ds.schema().covariate(1).find("Missing"));
  std::filesystem::remove_all(dir);
}

TEST_CASE("threshold binning is half-open") {
  const std::vector<double> pga = {0.05, 0.10, 0.30, 0.08, 0.25};
  const auto bins = bin_continuous(pga, Thresholds{{0.08, 0.25}});
  CHECK(bins == std::vector<std::int32_t>{0, 1, 2, 1, 2});
  const std::vector<double> flat(4, 3.0);
  const auto one = bin_continuous(flat, Thresholds{{0.08, 0.25}});
  CHECK(std::all_of(one.begin(), one.end(), [&](int b) { return b == one[0]; }));
  CHECK_THROWS_AS(bin_continuous(pga, Thresholds{{0.3, 0.1}}), DataError);
  const std::vector<double> bad = {1.0, std::nan("")};
  CHECK_THROWS_AS(bin_continuous(bad, Thresholds{{0.5}}), DataError);
}

TEST_CASE("quantile binning") {
  const std::vector<double> ten = {9, 3, 7, 1, 5, 2, 8, 4, 10, 6};
  const auto bins = bin_continuous(ten, Quantiles{5});
  std::vector<int> per(5, 0);
  for (auto b : bins) ++per[b];
  CHECK(per == std::vector<int>{2, 2, 2, 2, 2});
  CHECK(bins[3] == 0);  // value 1
  CHECK(bins[8] == 4);  // value 10
  // Ties at a cut go to the lower bin.
  const std::vector<double> tied = {1, 2, 2, 2, 3, 4};
  const auto tb = bin_continuous(tied, Quantiles{2});
  CHECK(tb == std::vector<std::int32_t>{0, 0, 0, 0, 1, 1});
  CHECK_THROWS_AS(bin_continuous(tied, Quantiles{5}), DataError);
  CHECK_THROWS_AS(bin_continuous(tied, Quantiles{1}), DataError);
  CHECK_THROWS_AS(bin_continuous(std::vector<double>{}, Quantiles{2}), DataError);
}

TEST_CASE("binning is monotone") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int rep = 0; rep < 50; ++rep) {
    std::vector<double> v(40);
    for (auto& x : v) x = std::round(u(rng) * 20) / 20;
    const auto q = bin_continuous(v, Quantiles{4});
    const auto t = bin_continuous(v, Thresholds{{0.2, 0.5, 0.7}});
    for (std::size_t i = 0; i < v.size(); ++i) {
      for (std::size_t j = 0; j < v.size(); ++j) {
        if (v[i] <= v[j]) {
          CHECK(q[i] <= q[j]);
          CHECK(t[i] <= t[j]);
        }
      }
    }
  }
}

TEST_CASE("category counts") {
  const auto in = fixtures::nonintegral();
  const auto c = category_counts(in.units, in.level_units, in.schema);
  CHECK(c.count(0, 0) == 2);
  CHECK(c.count(0, 1) == 2);
  CHECK(c.count(0, 2) == 2);
  for (int p = 0; p < 3; ++p) {
    int s = 0;
    for (int k = 0; k < 3; ++k) s += c.count(p, k);
    CHECK(s == 6);
  }
  const auto empty = category_counts(in.units, UnitSet{}, in.schema);
  CHECK(std::all_of(empty.flat().begin(), empty.flat().end(), [](int v) { return v == 0; }));
  CHECK(empty.total() == 0);

  // A 1000-unit template with 490 units labelled M and 510 labelled F.
  std::vector<Unit> units;
  UnitSet all;
  for (int i = 0; i < 1000; ++i) {
    units.push_back(fixtures::make_unit(std::to_string(i), {i < 490 ? 0 : 1}));
    all.push_back(i);
  }
  const Dataset ds(CovariateSchema(gender_config().covariates), units);
  const auto g = category_counts(ds, all);
  CHECK(g.count(0, ds.schema().covariate(0).find("M")) == 490);
  CHECK(g.count(0, ds.schema().covariate(0).find("F")) == 510);
  CHECK_THROWS_AS(category_counts(ds, UnitSet{1000}), DataError);
}

TEST_CASE("dataset invariants") {
  auto schema = fixtures::make_schema({2});
  std::vector<Unit> units = {fixtures::make_unit("a", {0}), fixtures::make_unit("a", {1})};
  CHECK_THROWS_AS(Dataset(schema, units), DataError);  // duplicate id
  units[1].id = "b";
  units[1].x = {2};
  CHECK_THROWS_AS(Dataset(schema, units), DataError);  // category out of range
  units[1].x = {1};
  units[0].exposure = "u";
  units[1].exposure = "v";
  const Dataset ds(schema, units, {"v", "u"});
  CHECK(ds.levels() == std::vector<std::string>{"v", "u"});
  // Unlisted levels follow the listed ones; listed levels without units are skipped.
  CHECK(Dataset(schema, units, {"v"}).levels() == std::vector<std::string>{"v", "u"});
  CHECK(Dataset(schema, units, {"w", "u"}).levels() == std::vector<std::string>{"u", "v"});
}
