/*
 * SPDX-FileCopyrightText: Copyright (c) 2026, The finebal Authors. All rights reserved.
 * SPDX-License-Identifier: Apache-2.0
 */
// Batch driver. Every subcommand reads files, writes its artifacts under
// --out and a manifest.json with the resolved config, seeds and SHA-256 of
// inputs and outputs. Exit codes: 0 ok, 2 usage or config error, 3 solver
// failure.
#include <cmath>
#include <filesystem>
#include <functional>
#include <iostream>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "finebal/bench.hpp"
#include "finebal/design.hpp"
#include "finebal/diagnostics.hpp"
#include "finebal/inference.hpp"
#include "finebal/manifest.hpp"
#include "finebal/polytope.hpp"
#include "json.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace finebal;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitSolver = 3;

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct SolverFailure : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Options {
  std::string input, schema, out, template_file, design_file, level;
  int template_size = 1000;
  int candidates = 500;
  double alpha = 0.05;
  std::uint64_t seed = 1;
  int workers = 1;
  double time_limit = 0.0;  // 0: none
  long node_limit = 0;      // 0: none
  bool verbose = false;
  long mc_draws = 100000;
  std::vector<std::string> outcomes;
  // gen
  int levels = 3;
  double scale = 1.0;
  double attendance_effect = 1.5, psu_effect = 0.0, confounding = 0.5, noise = 1.0;
  int superset = 0, extra = 0;
  // bench
  std::vector<int> factors{1}, template_sizes{1000};
  // polytope
  bool nonintegral = false;
};

// Runs the solving part of a command; anything it throws is a solver failure.
template <class F>
auto solve_stage(F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const std::exception& e) {
    throw SolverFailure(e.what());
  }
}

class Run {
 public:
  Run(std::string command, const Options& o) : command_(std::move(command)), out_(o.out) {
    if (o.out.empty()) throw ConfigError("--out is required");
  }

  json& config() { return config_; }
  json& seeds() { return seeds_; }

  void input(const std::string& path) {
    if (path.empty()) return;
    if (!fs::is_regular_file(path)) throw ConfigError("input file not found: " + path);
    inputs_[path] = sha256_file(path);
  }

  void write(const std::string& name, const std::string& text) {
    write_text(out_ / name, text);
    outputs_[name] = sha256_hex(text);
  }
  void write(const std::string& name, const json& j) { write(name, j.dump(2) + "\n"); }

  void finish() {
    json m;
    m["command"] = command_;
    m["config"] = config_;
    m["seeds"] = seeds_.is_null() ? json::object() : seeds_;
    m["inputs"] = inputs_;
    m["outputs"] = outputs_;
    m["machine"] = machine_descriptor();
    write_text(out_ / "manifest.json", m.dump(2) + "\n");
  }

 private:
  std::string command_;
  fs::path out_;
  json config_ = json::object(), seeds_;
  std::map<std::string, std::string> inputs_, outputs_;
};

struct Loaded {
  SchemaConfig config;
  Dataset data;
};

Loaded load(const Options& o, Run& run) {
  if (o.input.empty() || o.schema.empty()) throw ConfigError("--input and --schema are required");
  run.input(o.schema);
  run.input(o.input);
  run.config()["input"] = o.input;
  run.config()["schema"] = o.schema;
  auto cfg = SchemaConfig::load(o.schema);
  auto data = load_csv(o.input, cfg);
  return {std::move(cfg), std::move(data)};
}

BnbConfig bnb_of(const Options& o, Run& run) {
  BnbConfig b;
  if (o.time_limit < 0.0) throw ConfigError("--time-limit must be non-negative");
  if (o.node_limit < 0) throw ConfigError("--node-limit must be non-negative");
  if (o.time_limit > 0.0) b.time_limit = o.time_limit;
  if (o.node_limit > 0) b.node_limit = o.node_limit;
  b.verbose = o.verbose;
  b.log = &std::cerr;
  run.config()["time_limit"] = o.time_limit;
  run.config()["node_limit"] = o.node_limit;
  return b;
}

void check_workers(const Options& o) {
  if (o.workers < 1) throw ConfigError("--workers must be at least 1");
}

void check_alpha(const Options& o) {
  if (!(o.alpha > 0.0 && o.alpha < 1.0)) throw ConfigError("--alpha must lie in (0, 1)");
}

json template_json(const TemplateChoice& tc, const Dataset& data) {
  json ids = json::array();
  for (auto i : tc.sample) ids.push_back(data.unit(i).id);
  return {{"ids", ids},
          {"distance", tc.distance},
          {"candidates_evaluated", tc.candidates_evaluated},
          {"seed", tc.rng_seed},
          {"winner", tc.winner},
          {"candidate_distances", tc.candidate_distances},
          {"excluded_columns", tc.excluded_columns}};
}

TemplateChoice read_template(const std::string& path, const Dataset& data) {
  const json j = json::parse(read_text(path));
  TemplateChoice tc;
  for (const auto& id : j.at("ids")) {
    const auto i = data.find_id(id.get<std::string>());
    if (i < 0) throw ConfigError("template references unknown unit id '" + id.get<std::string>() + "'");
    tc.sample.push_back(i);
  }
  std::sort(tc.sample.begin(), tc.sample.end());
  tc.distance = j.value("distance", 0.0);
  tc.candidates_evaluated = j.value("candidates_evaluated", 0);
  tc.rng_seed = j.value("seed", std::uint64_t{0});
  tc.winner = j.value("winner", 0);
  tc.candidate_distances = j.value("candidate_distances", std::vector<double>{});
  tc.excluded_columns = j.value("excluded_columns", std::vector<int>{});
  return tc;
}

std::vector<std::string> outcomes_of(const Options& o, const Loaded& in) {
  auto out = o.outcomes.empty() ? in.config.outcome_columns : o.outcomes;
  if (out.empty()) throw ConfigError("no outcome columns in the schema and none given with --outcomes");
  for (const auto& name : out) {
    if (std::find(in.config.outcome_columns.begin(), in.config.outcome_columns.end(), name) ==
        in.config.outcome_columns.end())
      throw ConfigError("outcome '" + name + "' is not declared in the schema");
  }
  return out;
}

MatchedDesign read_design(const Options& o, const Loaded& in, Run& run) {
  if (o.design_file.empty()) throw ConfigError("--design is required");
  run.input(o.design_file);
  run.config()["design"] = o.design_file;
  try {
    return MatchedDesign::from_json(json::parse(read_text(o.design_file)), in.data);
  } catch (const DesignError& e) {
    throw ConfigError(e.what());
  }
}

// ---------------------------------------------------------------- commands

int cmd_gen(const Options& o) {
  Run run("gen", o);
  if (o.superset > 0 && o.extra < 0) throw ConfigError("--extra must be non-negative");
  if (o.noise < 0.0) throw ConfigError("--noise must be non-negative");
  auto make = [&] {
    if (o.superset > 0) return superset_study(o.levels, o.superset, o.extra, o.seed);
    StudyConfig cfg = study_preset(o.levels, o.scale);
    cfg.seed = o.seed;
    cfg.attendance_effect = o.attendance_effect;
    cfg.psu_effect = o.psu_effect;
    cfg.confounding = o.confounding;
    cfg.noise = o.noise;
    return generate_study(cfg);
  };
  const Study st = make();
  run.config() = {{"levels", o.levels},         {"scale", o.scale},
                  {"attendance_effect", o.attendance_effect},
                  {"psu_effect", o.psu_effect}, {"confounding", o.confounding},
                  {"noise", o.noise},           {"superset", o.superset},
                  {"extra", o.extra}};
  run.seeds()["generator"] = o.seed;
  run.write("data.csv", write_csv(st.data, st.config));
  run.write("schema.json", st.config.to_json());
  if (o.superset > 0) {
    json ids = json::array();
    for (auto i : st.template_units) ids.push_back(st.data.unit(i).id);
    run.write("template.json", json{{"ids", ids}});
  }
  run.finish();
  std::cout << st.data.size() << " units in " << st.data.levels().size() << " levels\n";
  return 0;
}

int cmd_template(const Options& o) {
  Run run("template", o);
  const auto in = load(o, run);
  if (o.template_size < 1) throw ConfigError("--template-size must be positive");
  if (o.candidates < 1) throw ConfigError("--candidates must be positive");
  if (static_cast<std::size_t>(o.template_size) > in.data.size())
    throw ConfigError("--template-size exceeds the " + std::to_string(in.data.size()) + " units");
  run.config()["template_size"] = o.template_size;
  run.config()["candidates"] = o.candidates;
  run.seeds()["template"] = o.seed;
  const auto tc = solve_stage([&] {
    return select_template(in.data.units(), in.data.all_units(), o.template_size, o.candidates, o.seed,
                           in.data.schema());
  });
  run.write("template.json", template_json(tc, in.data));
  run.finish();
  std::cout << "template of " << tc.sample.size() << " units, distance " << tc.distance << "\n";
  return 0;
}

int cmd_match(const Options& o) {
  Run run("match", o);
  const auto in = load(o, run);
  check_workers(o);
  DesignConfig dc;
  dc.template_size = o.template_size;
  dc.candidates = o.candidates;
  dc.seed = o.seed;
  dc.workers = o.workers;
  dc.bnb = bnb_of(o, run);
  run.config()["workers"] = o.workers;

  std::optional<TemplateChoice> tc;
  if (!o.template_file.empty()) {
    run.input(o.template_file);
    run.config()["template"] = o.template_file;
    tc = read_template(o.template_file, in.data);
    if (tc->sample.empty()) throw ConfigError("template file lists no units");
    dc.template_size = static_cast<int>(tc->sample.size());
  } else {
    if (o.template_size < 1) throw ConfigError("--template-size must be positive");
    if (o.candidates < 1) throw ConfigError("--candidates must be positive");
    if (static_cast<std::size_t>(o.template_size) > in.data.size())
      throw ConfigError("--template-size exceeds the " + std::to_string(in.data.size()) + " units");
    run.config()["template_size"] = o.template_size;
    run.config()["candidates"] = o.candidates;
    run.seeds()["template"] = o.seed;
  }

  const auto design = solve_stage([&] {
    return tc ? build_design(in.data, *tc, dc) : build_design(in.data, dc);
  });
  for (const auto& lv : design.levels) {
    if (lv.match.status == MipStatus::Infeasible)
      throw SolverFailure("level '" + lv.label + "' has no feasible matching");
  }
  run.write("design.json", design.to_json(in.data));
  run.write("groups.csv", design.groups_csv(in.data));
  run.finish();
  for (const auto& lv : design.levels)
    std::cout << "level " << lv.label << ": imbalance " << lv.match.objective << " ("
              << to_string(lv.match.status) << ")\n";
  return 0;
}

int cmd_balance(const Options& o) {
  Run run("balance", o);
  const auto in = load(o, run);
  const auto design = read_design(o, in, run);
  const auto table = balance_table(design, in.data);
  const auto smd = smd_report(design, in.data);
  const auto& schema = in.data.schema();
  run.write("balance.csv", table.to_csv(schema));
  run.write("balance.json", table.to_json(schema));
  run.write("smd.csv", smd.to_csv(schema));
  run.write("smd_plot.csv", smd.plot_data(schema));
  run.finish();
  for (std::size_t u = 0; u < table.level_labels.size(); ++u)
    std::cout << "level " << table.level_labels[u] << ": total deviation " << table.total_deviation[u] << "\n";
  std::cout << "after-matching SMDs " << (smd.all_after_zero() ? "all zero" : "not all zero") << "\n";
  return 0;
}

int cmd_estimate(const Options& o) {
  Run run("estimate", o);
  const auto in = load(o, run);
  check_alpha(o);
  check_workers(o);
  if (o.mc_draws < 1000) throw ConfigError("--mc-draws must be at least 1000");
  const auto design = read_design(o, in, run);
  const auto outcomes = outcomes_of(o, in);
  ContrastOptions co;
  co.alpha = o.alpha;
  co.mc_draws = o.mc_draws;
  co.seed = o.seed;
  co.workers = o.workers;
  run.config()["alpha"] = o.alpha;
  run.config()["mc_draws"] = o.mc_draws;
  run.config()["workers"] = o.workers;
  run.config()["outcomes"] = outcomes;
  run.seeds()["null_distribution"] = o.seed;

  std::vector<ContrastResult> results;
  json details = json::array();
  for (const auto& name : outcomes) {
    const auto groups = MatchedGroups::from_design(design, in.data, name);
    results.push_back(simultaneous_contrasts(groups, co));
    const auto& r = results.back();
    json cs = json::array();
    for (const auto& c : r.contrasts)
      cs.push_back({{"level", c.level},
                    {"estimate", c.estimate},
                    {"ci_lo", c.lo},
                    {"ci_hi", c.hi},
                    {"rank_sum", c.rank_sum},
                    {"rank_difference", c.rank_difference},
                    {"significant", c.significant}});
    details.push_back({{"outcome", name},
                       {"baseline", r.baseline},
                       {"baseline_rank_sum", r.baseline_rank_sum},
                       {"critical_value", r.critical_value},
                       {"adjusted_alpha", r.adjusted_alpha},
                       {"mc_draws", r.mc_draws},
                       {"contrasts", cs}});
  }
  run.write("contrasts.csv", contrast_table(outcomes, results));
  run.write("contrasts.json", details);
  run.finish();
  std::cout << contrast_table(outcomes, results);
  return 0;
}

int cmd_sensitivity(const Options& o) {
  Run run("sensitivity", o);
  const auto in = load(o, run);
  check_alpha(o);
  const auto design = read_design(o, in, run);
  const auto outcomes = outcomes_of(o, in);
  run.config()["alpha"] = o.alpha;
  run.config()["outcomes"] = outcomes;

  std::vector<std::vector<SensitivityResult>> results;
  json details = json::array();
  for (const auto& name : outcomes) {
    const auto groups = MatchedGroups::from_design(design, in.data, name);
    std::vector<SensitivityResult> per;
    for (int u = 1; u < groups.num_levels(); ++u) {
      auto r = rosenbaum_gamma(pair_differences(groups, u), o.alpha);
      r.level = groups.levels[u];
      json g = r.gamma_critical ? json(*r.gamma_critical) : json(nullptr);
      details.push_back({{"outcome", name},
                         {"level", r.level},
                         {"gamma_critical", g},
                         {"capped", r.capped},
                         {"direction", r.direction},
                         {"p_value", r.p_value}});
      per.push_back(std::move(r));
    }
    results.push_back(std::move(per));
  }
  run.write("sensitivity.csv", sensitivity_table(outcomes, results));
  run.write("sensitivity.json", details);
  run.finish();
  std::cout << sensitivity_table(outcomes, results);
  return 0;
}

int cmd_bench(const Options& o) {
  Run run("bench", o);
  std::optional<Loaded> in;
  if (!o.input.empty() || !o.schema.empty()) {
    in = load(o, run);
  } else {
    StudyConfig cfg = study_preset(o.levels, o.scale);
    cfg.seed = o.seed;
    auto st = generate_study(cfg);
    in = Loaded{st.config, std::move(st.data)};
    run.config()["preset_levels"] = o.levels;
    run.config()["preset_scale"] = o.scale;
  }
  ScalingSpec spec;
  spec.level = o.level.empty() ? "2" : o.level;
  spec.copy_factors = o.factors;
  spec.template_sizes = o.template_sizes;
  spec.seed = o.seed;
  spec.candidates = o.candidates;
  spec.bnb = bnb_of(o, run);
  if (!in->data.level_index().count(spec.level))
    throw ConfigError("no exposure level '" + spec.level + "'");
  try {
    spec.validate(in->data);
  } catch (const DataError& e) {
    throw ConfigError(e.what());
  }
  const auto man = scaling_manifest(spec);
  run.config()["scaling"] = man["config"];
  run.config()["config_hash"] = man["config_hash"];
  run.seeds()["template"] = spec.seed;
  run.seeds()["perturbation"] = spec.seed;
  const auto records = run_scaling(in->data, spec);
  run.write("records.csv", records_csv(records));
  run.write("grid.csv", records_grid(records));
  run.finish();
  std::cout << records_grid(records);
  return 0;
}

int cmd_polytope(const Options& o) {
  Run run("polytope", o);
  run.config()["nonintegral"] = o.nonintegral;
  json report;
  if (o.nonintegral) {
    const auto inst = nonintegral_instance();
    const auto model = build_model(FormulationKind::UnitSelection, inst.units, inst.template_units,
                                   inst.level_units, inst.schema);
    report = solve_stage([&] { return polytope_report(model); });
    report["instance"] = "nonintegral";
  } else {
    const auto in = load(o, run);
    if (o.template_file.empty() || o.level.empty())
      throw ConfigError("polytope needs --nonintegral, or --template and --level with --input");
    run.input(o.template_file);
    run.config()["template"] = o.template_file;
    run.config()["level"] = o.level;
    const auto tc = read_template(o.template_file, in.data);
    if (!in.data.level_index().count(o.level)) throw ConfigError("no exposure level '" + o.level + "'");
    const auto model = build_model(FormulationKind::UnitSelection, in.data.units(), tc.sample,
                                   in.data.level(o.level), in.data.schema());
    report = solve_stage([&] { return polytope_report(model); });
    report["instance"] = o.level;
  }
  run.write("polytope.json", report);
  run.finish();
  for (const auto& c : report["conventions"])
    std::cout << "sum(z) = " << c["sum_z"] << ": " << c["vertices"] << " vertices, " << c["fractional"]
              << " fractional, all-halves vertex " << (c["all_halves"].get<int>() >= 0 ? "present" : "absent")
              << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Fine-balance matching and analysis of multi-level exposure studies"};
  app.require_subcommand(1);
  Options o;

  auto common = [&](CLI::App* c, bool data = true) {
    if (data) {
      c->add_option("--input", o.input, "data CSV");
      c->add_option("--schema", o.schema, "schema JSON");
    }
    c->add_option("--out", o.out, "output directory")->required();
    c->add_option("--seed", o.seed, "random seed")->capture_default_str();
  };
  auto limits = [&](CLI::App* c) {
    c->add_option("--time-limit", o.time_limit, "seconds per level solve (0: none)");
    c->add_option("--node-limit", o.node_limit, "nodes per level solve (0: none)");
    c->add_flag("--verbose", o.verbose, "branch-and-bound log on stderr");
  };

  auto* gen = app.add_subcommand("gen", "synthetic study");
  common(gen, false);
  gen->add_option("--levels", o.levels, "3, 5 or 10")->capture_default_str();
  gen->add_option("--scale", o.scale, "multiplies the preset level sizes")->capture_default_str();
  gen->add_option("--attendance-effect", o.attendance_effect)->capture_default_str();
  gen->add_option("--psu-effect", o.psu_effect)->capture_default_str();
  gen->add_option("--confounding", o.confounding)->capture_default_str();
  gen->add_option("--noise", o.noise)->capture_default_str();
  gen->add_option("--superset", o.superset, "template size of a superset study (0: off)");
  gen->add_option("--extra", o.extra, "extra units per level in a superset study");

  auto* tmpl = app.add_subcommand("template", "template sample selection");
  common(tmpl);
  tmpl->add_option("--template-size", o.template_size)->capture_default_str();
  tmpl->add_option("--candidates", o.candidates)->capture_default_str();

  auto* match = app.add_subcommand("match", "per-level fine-balance matching");
  common(match);
  match->add_option("--template", o.template_file, "template JSON; selected here when absent");
  match->add_option("--template-size", o.template_size)->capture_default_str();
  match->add_option("--candidates", o.candidates)->capture_default_str();
  match->add_option("--workers", o.workers)->capture_default_str();
  limits(match);

  auto* balance = app.add_subcommand("balance", "balance table and standardized differences");
  common(balance);
  balance->add_option("--design", o.design_file, "design JSON from match");

  auto* estimate = app.add_subcommand("estimate", "simultaneous contrasts against the baseline");
  common(estimate);
  estimate->add_option("--design", o.design_file, "design JSON from match");
  estimate->add_option("--alpha", o.alpha)->capture_default_str();
  estimate->add_option("--workers", o.workers)->capture_default_str();
  estimate->add_option("--mc-draws", o.mc_draws)->capture_default_str();
  estimate->add_option("--outcomes", o.outcomes, "outcome columns (default: all)");

  auto* sens = app.add_subcommand("sensitivity", "critical hidden-bias gamma per contrast");
  common(sens);
  sens->add_option("--design", o.design_file, "design JSON from match");
  sens->add_option("--alpha", o.alpha)->capture_default_str();
  sens->add_option("--outcomes", o.outcomes, "outcome columns (default: all)");

  auto* bench = app.add_subcommand("bench", "scaling grid of template size by level size");
  common(bench);
  bench->add_option("--level", o.level, "level to enlarge (default 2)");
  bench->add_option("--factors", o.factors, "copy factors")->delimiter(',');
  bench->add_option("--template-sizes", o.template_sizes, "template sizes")->delimiter(',');
  bench->add_option("--candidates", o.candidates)->capture_default_str();
  bench->add_option("--levels", o.levels, "preset used without --input")->capture_default_str();
  bench->add_option("--scale", o.scale, "preset scale used without --input")->capture_default_str();
  limits(bench);

  auto* poly = app.add_subcommand("polytope", "extreme points of a unit-selection relaxation");
  common(poly);
  poly->add_flag("--nonintegral", o.nonintegral, "use the built-in non-integral instance");
  poly->add_option("--template", o.template_file, "template JSON");
  poly->add_option("--level", o.level, "exposure level");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    std::cerr << app.help();
    return kExitConfig;
  }

  const std::map<CLI::App*, std::function<int(const Options&)>> commands = {
      {gen, cmd_gen},         {tmpl, cmd_template},        {match, cmd_match}, {balance, cmd_balance},
      {estimate, cmd_estimate}, {sens, cmd_sensitivity}, {bench, cmd_bench}, {poly, cmd_polytope}};
  try {
    for (const auto& [sub, fn] : commands) {
      if (sub->parsed()) return fn(o);
    }
  } catch (const SolverFailure& e) {
    std::cerr << "solver failure: " << e.what() << "\n";
    return kExitSolver;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  }
  return kExitConfig;
}
