// tacoord: command-line driver for the coordination pipeline.

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <json.hpp>

#include "tacoord/case_io.hpp"
#include "tacoord/coordinator.hpp"
#include "tacoord/errors.hpp"
#include "tacoord/experiment.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace tacoord;

namespace {

struct Flags {
  std::string config;
  std::string case_path;
  std::string grid;
  std::string dataset;
  std::string weights;
  std::string out;
  std::uint64_t seed = 0;
  std::string policies;
  std::string fixed_combo;
  std::string delays;
  int jobs = 0;
  std::string scenario;
  std::optional<int> fault_bus;
  double load_scale = 1.0;
  double duration = 0.05;
  bool quiet = false;
};

struct Options {
  CLI::Option* seed = nullptr;
  CLI::Option* jobs = nullptr;
};

ExperimentConfig resolve_config(const Flags& f, const Options& o) {
  ExperimentConfig c = f.config.empty() ? ExperimentConfig::from_json(json::object(), fs::current_path())
                                        : ExperimentConfig::load(f.config);
  if (!f.case_path.empty()) c.case_path = f.case_path;
  if (!f.grid.empty()) c.grid_path = f.grid;
  if (!f.dataset.empty()) c.dataset_path = f.dataset;
  if (!f.weights.empty()) c.weights_path = f.weights;
  if (!f.out.empty()) c.out_dir = f.out;
  if (o.seed->count() > 0) c.seed = f.seed;
  if (!f.policies.empty()) c.policies = parse_policies(f.policies);
  if (!f.fixed_combo.empty()) c.fixed_combo = parse_combo(f.fixed_combo);
  if (!f.delays.empty()) c.delays = parse_number_list(f.delays);
  if (o.jobs->count() > 0) c.jobs = f.jobs;
  if (!f.scenario.empty()) {
    c.scenarios = {scenario_from_json(read_json_file(f.scenario))};
  } else if (f.fault_bus) {
    Scenario s;
    s.disturbance = {*f.fault_bus, f.duration};
    s.condition.load_scale = f.load_scale;
    s.name = fmt::format("bus{}_load{}", *f.fault_bus, f.load_scale);
    c.scenarios = {s};
  }
  return c;
}

void require(const fs::path& p, const char* what) {
  if (p.empty()) throw InputError(fmt::format("no {} given (flag or config file)", what));
}

std::string with_hash(const std::string& csv, const std::string& hash) {
  return fmt::format("# config_hash={}\n{}", hash, csv);
}

std::string strip_comments(const std::string& csv, bool keep_header) {
  std::string out;
  std::size_t pos = 0;
  bool header_seen = false;
  while (pos < csv.size()) {
    const std::size_t end = csv.find('\n', pos);
    const std::string line = csv.substr(pos, end == std::string::npos ? std::string::npos : end - pos + 1);
    pos = end == std::string::npos ? csv.size() : end + 1;
    if (line.rfind('#', 0) == 0) continue;
    if (!header_seen) {
      header_seen = true;
      if (!keep_header) continue;
    }
    out += line;
  }
  return out;
}

int cmd_powerflow(const ExperimentConfig& cfg, bool write) {
  require(cfg.case_path, "case");
  const SystemCase c = load_case(cfg.case_path);
  const PowerFlowSolution pf = solve_power_flow(c);
  fmt::print("case {}  iterations {}  max mismatch {:.3e} pu\n", c.name, pf.iterations, pf.max_mismatch);
  fmt::print("{:>5} {:>6} {:>10} {:>10}\n", "bus", "type", "|V| pu", "angle deg");
  json buses = json::array();
  for (std::size_t k = 0; k < c.buses.size(); ++k) {
    const auto v = pf.voltage(static_cast<Eigen::Index>(k));
    const char* type = c.buses[k].type == BusType::Slack ? "slack" : c.buses[k].type == BusType::PV ? "PV" : "PQ";
    fmt::print("{:>5} {:>6} {:>10.6f} {:>10.4f}\n", c.buses[k].id, type, std::abs(v), std::arg(v) * 180.0 / M_PI);
    buses.push_back({{"id", c.buses[k].id}, {"vm", std::abs(v)}, {"va", std::arg(v)}});
  }
  const std::vector<double> flows = line_flows(c, pf);
  fmt::print("feature line flows (pu, from end):\n");
  for (std::size_t f = 0; f < flows.size(); ++f) fmt::print("  line {:>3} {:>12.6f}\n", c.feature_lines[f], flows[f]);
  if (write) {
    json j{{"config_hash", cfg.hash()}, {"case_hash", case_hash(c)}, {"iterations", pf.iterations},
           {"max_mismatch", pf.max_mismatch}, {"buses", buses}, {"feature_flows", flows}};
    write_text_file(cfg.out_dir / "powerflow.json", j.dump(2) + "\n");
  }
  return 0;
}

int cmd_collect(const ExperimentConfig& cfg, bool quiet) {
  require(cfg.case_path, "case");
  require(cfg.grid_path, "scenario grid");
  const SystemCase c = load_case(cfg.case_path);
  const ScenarioGrid grid = grid_from_json(read_json_file(cfg.grid_path));
  CollectOptions opts;
  opts.jobs = cfg.jobs;
  opts.seed = cfg.seed;
  if (!quiet) opts.log = [](const std::string& m) { std::fprintf(stderr, "%s\n", m.c_str()); };
  Dataset ds = collect(c, grid, cfg.timing, opts);
  if (quiet) {
    for (const auto& w : ds.warnings) fmt::print(stderr, "warning: {}\n", w);
  }
  ds.header["config_hash"] = cfg.hash();
  const fs::path path = cfg.dataset_path.empty() ? cfg.out_dir / "dataset.jsonl" : cfg.dataset_path;
  const std::string text = ds.to_jsonl();
  write_text_file(path, text);
  json manifest{{"config_hash", cfg.hash()},
                {"config", cfg.to_json()},
                {"dataset", path.string()},
                {"dataset_hash", fnv1a_hex(text)},
                {"samples", ds.samples.size()},
                {"usable", ds.usable().size()},
                {"warnings", ds.warnings}};
  write_text_file(fs::path(path.string() + ".manifest.json"), manifest.dump(2) + "\n");
  fmt::print("wrote {} samples ({} usable, {} warnings) to {}\n", ds.samples.size(), ds.usable().size(),
             ds.warnings.size(), path.string());
  if (ds.samples.empty() || ds.usable().empty()) {
    fmt::print(stderr, "error: every scenario failed\n");
    return 1;
  }
  return 0;
}

int cmd_train(const ExperimentConfig& cfg) {
  const fs::path data = cfg.dataset_path.empty() ? cfg.out_dir / "dataset.jsonl" : cfg.dataset_path;
  const Dataset ds = Dataset::from_jsonl(read_text_file(data));
  const TrainingOutcome t = train_from_dataset(cfg, ds);
  const fs::path path = cfg.weights_path.empty() ? cfg.out_dir / "weights.json" : cfg.weights_path;
  json j = t.model.to_json();
  j["experiment_hash"] = cfg.hash();
  j["dataset_hash"] = fnv1a_hex(read_text_file(data));
  if (t.cv) {
    json scores = json::array();
    for (double s : t.cv->scores) scores.push_back(std::isfinite(s) ? json(s) : json(nullptr));
    j["cross_validation"] = {{"best", t.cv->best}, {"scores", scores}};
  }
  write_text_file(path, j.dump(1) + "\n");
  fs::path curve = path;
  curve.replace_extension(".loss.csv");
  write_text_file(curve, with_hash(loss_curve_csv(t.model.meta), cfg.hash()));
  fmt::print("trained on {} samples, validated on {}; {} epochs (best {}), validation MSE {} (network units)\n",
             t.n_train, t.n_validation, t.model.meta.epochs_run, t.model.meta.best_epoch, t.model.meta.validation_loss);
  fmt::print("wrote {} and {}\n", path.string(), curve.string());
  return 0;
}

int cmd_coordinate(const ExperimentConfig& cfg) {
  require(cfg.case_path, "case");
  require(cfg.weights_path, "weights");
  if (cfg.scenarios.empty()) throw InputError("coordinate needs a scenario (--scenario or --fault-bus)");
  const SystemCase c = load_case(cfg.case_path);
  const MlpModel model = MlpModel::load(cfg.weights_path);
  const Scenario& sc = cfg.scenarios.front();
  const ScenarioContext ctx = prepare_scenario(c, sc, cfg.timing);
  const CoordinationResult r = dic_select(model, ctx.y0);
  fmt::print("scenario {}: selected {} ({})  decision {:.3f} ms\n", sc.name, combination_label(r.gamma), r.note,
             r.wall_ms);
  fmt::print("{}", r.predictions_csv());
  json decision{{"config_hash", cfg.hash()}, {"scenario", scenario_to_json(sc)}, {"y0", ctx.y0},
                {"gamma", r.gamma},          {"encoding", r.encoding},          {"note", r.note}};
  write_text_file(cfg.out_dir / "decision.json", decision.dump(2) + "\n");
  write_text_file(cfg.out_dir / "predictions.csv", with_hash(r.predictions_csv(), cfg.hash()));
  json timing{{"config_hash", cfg.hash()}, {"wall_ms", r.wall_ms}};
  write_text_file(cfg.out_dir / "decision_timing.json", timing.dump(2) + "\n");
  return 0;
}

EvaluationOptions evaluation_options(const ExperimentConfig& cfg, const MlpModel* model) {
  EvaluationOptions o;
  o.timing = cfg.timing;
  o.policies = cfg.policies;
  o.fixed_combo = cfg.fixed_combo;
  o.model = model;
  o.jobs = cfg.jobs;
  o.export_dir = cfg.out_dir / "trajectories";
  return o;
}

std::optional<MlpModel> maybe_model(const ExperimentConfig& cfg, bool needed) {
  if (!needed) return std::nullopt;
  require(cfg.weights_path, "weights");
  return MlpModel::load(cfg.weights_path);
}

int cmd_compare(const ExperimentConfig& cfg) {
  require(cfg.case_path, "case");
  if (cfg.scenarios.empty()) throw InputError("compare needs at least one scenario");
  const SystemCase c = load_case(cfg.case_path);
  const bool need_model = std::find(cfg.policies.begin(), cfg.policies.end(), Policy::DIC) != cfg.policies.end();
  const auto model = maybe_model(cfg, need_model);
  const EvaluationOptions opts = evaluation_options(cfg, model ? &*model : nullptr);
  std::string csv;
  json reports = json::array();
  bool ok = true;
  for (std::size_t s = 0; s < cfg.scenarios.size(); ++s) {
    const PolicyReport rep = evaluate_policies(c, cfg.scenarios[s], opts);
    csv += strip_comments(rep.csv(), s == 0);
    reports.push_back(rep.to_json());
    ok = ok && rep.ok();
    for (const auto& row : rep.rows) {
      fmt::print("{:<16} {:<4} {} TA {:>12.6g}  reduction {:>8.2f}%{}\n", cfg.scenarios[s].name, row.name,
                 combination_label(row.gamma), row.s_inf, row.reduction, row.error.empty() ? "" : "  ERROR " + row.error);
    }
  }
  write_text_file(cfg.out_dir / "compare.csv", with_hash(csv, cfg.hash()));
  write_text_file(cfg.out_dir / "compare.json",
                  json{{"config_hash", cfg.hash()}, {"reports", reports}}.dump(2) + "\n");
  return ok ? 0 : 1;
}

int cmd_delays(const ExperimentConfig& cfg) {
  require(cfg.case_path, "case");
  if (cfg.scenarios.empty()) throw InputError("delays needs a scenario");
  const SystemCase c = load_case(cfg.case_path);
  const auto model = maybe_model(cfg, true);
  const EvaluationOptions opts = evaluation_options(cfg, &*model);
  const DelayReport rep = delay_sweep(c, cfg.scenarios.front(), *model, cfg.delays, opts);
  for (const auto& row : rep.rows) {
    fmt::print("delay {:>8} s  TA {:>12.6g}  reduction {:>8.2f}%{}\n", fmt::format("{}", row.delay), row.s_inf,
               row.reduction, row.error.empty() ? "" : "  ERROR " + row.error);
  }
  write_text_file(cfg.out_dir / "delays.csv", with_hash(rep.csv(), cfg.hash()));
  json j = rep.to_json();
  j["config_hash"] = cfg.hash();
  write_text_file(cfg.out_dir / "delays.json", j.dump(2) + "\n");
  return rep.ok() ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Total-action coordination of damping controllers"};
  app.require_subcommand(1);
  Flags f;
  Options o;
  app.add_option("--config", f.config, "experiment config (JSON); flags override it");
  app.add_option("--case", f.case_path, "system case (JSON)");
  app.add_option("--grid", f.grid, "scenario grid (JSON)");
  app.add_option("--dataset", f.dataset, "dataset (JSONL)");
  app.add_option("--weights", f.weights, "approximator weights (JSON)");
  app.add_option("--out", f.out, "output directory");
  o.seed = app.add_option("--seed", f.seed, "global seed");
  app.add_option("--policies", f.policies, "comma list of NC,FC,DIC,MBC");
  app.add_option("--fixed-combo", f.fixed_combo, "FC combination, e.g. 111");
  app.add_option("--delays", f.delays, "comma list of activation delays (s); inf allowed");
  o.jobs = app.add_option("--jobs", f.jobs, "worker threads")->check(CLI::PositiveNumber);
  app.add_option("--scenario", f.scenario, "scenario (JSON)");
  app.add_option("--fault-bus", f.fault_bus, "scenario fault bus");
  app.add_option("--load-scale", f.load_scale, "scenario load scale");
  app.add_option("--fault-duration", f.duration, "scenario fault duration (s)");
  app.add_flag("--quiet", f.quiet, "suppress progress output");

  auto* powerflow = app.add_subcommand("powerflow", "solve the operating point and print bus voltages");
  auto* collect_cmd = app.add_subcommand("collect", "simulate the scenario grid into a dataset");
  auto* train_cmd = app.add_subcommand("train", "fit the total-action approximator");
  auto* coordinate = app.add_subcommand("coordinate", "select the DC combination for one scenario");
  auto* compare = app.add_subcommand("compare", "compare NC, FC, DIC and MBC");
  auto* delays = app.add_subcommand("delays", "sweep the DIC activation delay");
  for (auto* sub : app.get_subcommands({})) sub->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    const ExperimentConfig cfg = resolve_config(f, o);
    if (powerflow->parsed()) return cmd_powerflow(cfg, !f.out.empty());
    if (collect_cmd->parsed()) return cmd_collect(cfg, f.quiet);
    if (train_cmd->parsed()) return cmd_train(cfg);
    if (coordinate->parsed()) return cmd_coordinate(cfg);
    if (compare->parsed()) return cmd_compare(cfg);
    if (delays->parsed()) return cmd_delays(cfg);
  } catch (const InputError& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return 2;
  } catch (const DomainError& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return 1;
  } catch (const std::exception& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return 1;
  }
  return 2;
}
