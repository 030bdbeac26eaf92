#include "tacoord/experiment.hpp"

#include <cmath>
#include <limits>
#include <sstream>

#include <fmt/format.h>

#include "tacoord/case_io.hpp"
#include "tacoord/errors.hpp"

namespace tacoord {

using nlohmann::json;

namespace {

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
  if (p.empty()) return {};
  const std::filesystem::path path(p);
  return path.is_absolute() ? path : base / path;
}

json delay_json(double d) { return std::isinf(d) ? json("inf") : json(d); }

double delay_from_json(const json& j) {
  if (j.is_string()) {
    const auto s = j.get<std::string>();
    if (s == "inf" || s == "infinity") return std::numeric_limits<double>::infinity();
    throw InputError("delay '" + s + "' is not a number");
  }
  return j.get<double>();
}

}  // namespace

ExperimentConfig ExperimentConfig::from_json(const json& j, const std::filesystem::path& base_dir) {
  ExperimentConfig c;
  try {
    if (j.contains("schema") && j.at("schema") != kExperimentSchema) throw InputError("experiment config has an unknown schema");
    c.case_path = resolve(base_dir, j.value("case", ""));
    c.grid_path = resolve(base_dir, j.value("grid", ""));
    c.dataset_path = resolve(base_dir, j.value("dataset", ""));
    c.weights_path = resolve(base_dir, j.value("weights", ""));
    c.out_dir = resolve(base_dir, j.value("out", "out"));
    if (j.contains("timing")) c.timing = timing_from_json(j.at("timing"));
    c.mlp = j.value("mlp", json::object());
    for (const auto& cand : j.value("cv_candidates", json::array())) c.cv_candidates.push_back(cand);
    c.folds = j.value("folds", c.folds);
    c.validation_folds = j.value("validation_folds", c.validation_folds);
    if (j.contains("policies")) {
      c.policies.clear();
      for (const auto& p : j.at("policies")) c.policies.push_back(parse_policy(p.get<std::string>()));
    }
    c.fixed_combo = j.value("fixed_combo", c.fixed_combo);
    if (j.contains("delays")) {
      c.delays.clear();
      for (const auto& d : j.at("delays")) c.delays.push_back(delay_from_json(d));
    }
    for (const auto& s : j.value("scenarios", json::array())) c.scenarios.push_back(scenario_from_json(s));
    c.seed = j.value("seed", c.seed);
    c.jobs = j.value("jobs", c.jobs);
  } catch (const json::exception& e) {
    throw InputError(std::string("malformed experiment config: ") + e.what());
  }
  if (c.folds < 2 || c.validation_folds < 1 || c.validation_folds >= c.folds) {
    throw InputError("experiment config needs 2 <= folds and 1 <= validation_folds < folds");
  }
  for (int b : c.fixed_combo) {
    if (b != 0 && b != 1) throw InputError("fixed_combo entries must be 0 or 1");
  }
  for (double d : c.delays) {
    if (!(d >= 0.0)) throw InputError("delays must be non-negative");
  }
  return c;
}

ExperimentConfig ExperimentConfig::load(const std::filesystem::path& path) {
  return from_json(read_json_file(path), path.parent_path());
}

json ExperimentConfig::to_json() const {
  json j;
  j["schema"] = kExperimentSchema;
  j["case"] = case_path.string();
  j["grid"] = grid_path.string();
  j["dataset"] = dataset_path.string();
  j["weights"] = weights_path.string();
  j["out"] = out_dir.string();
  j["timing"] = timing_to_json(timing);
  j["mlp"] = mlp;
  j["cv_candidates"] = cv_candidates;
  j["folds"] = folds;
  j["validation_folds"] = validation_folds;
  j["policies"] = json::array();
  for (Policy p : policies) j["policies"].push_back(policy_name(p));
  j["fixed_combo"] = fixed_combo;
  j["delays"] = json::array();
  for (double d : delays) j["delays"].push_back(delay_json(d));
  j["scenarios"] = json::array();
  for (const auto& s : scenarios) j["scenarios"].push_back(scenario_to_json(s));
  j["seed"] = seed;
  return j;
}

std::string ExperimentConfig::hash() const {
  // Where inputs live and outputs go does not change the experiment.
  json j = to_json();
  j.erase("dataset");
  j.erase("weights");
  j.erase("out");
  j["case"] = case_path.filename().string();
  j["grid"] = grid_path.filename().string();
  return fnv1a_hex(j.dump());
}

MlpConfig ExperimentConfig::mlp_config(int n_inputs) const {
  json m = mlp;
  m["seed"] = seed;
  return MlpConfig::from_json(m, n_inputs);
}

std::vector<MlpConfig> ExperimentConfig::cv_configs(int n_inputs) const {
  std::vector<MlpConfig> out{mlp_config(n_inputs)};
  for (const auto& cand : cv_candidates) {
    json m = mlp;
    m.update(cand);
    m["seed"] = seed;
    out.push_back(MlpConfig::from_json(m, n_inputs));
  }
  return out;
}

std::vector<double> parse_number_list(const std::string& comma_list) {
  std::vector<double> out;
  std::stringstream in(comma_list);
  std::string item;
  while (std::getline(in, item, ',')) {
    if (item.empty()) continue;
    if (item == "inf" || item == "infinity") {
      out.push_back(std::numeric_limits<double>::infinity());
      continue;
    }
    try {
      std::size_t used = 0;
      out.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw InputError("'" + item + "' is not a number");
    }
  }
  return out;
}

std::vector<int> parse_combo(const std::string& bits) {
  std::vector<int> out;
  for (char ch : bits) {
    if (ch == ',' || ch == ' ') continue;
    if (ch != '0' && ch != '1') throw InputError("combination '" + bits + "' must contain only 0 and 1");
    out.push_back(ch - '0');
  }
  if (out.empty()) throw InputError("empty combination");
  return out;
}

TrainingOutcome train_from_dataset(const ExperimentConfig& cfg, const Dataset& ds) {
  const std::vector<Sample> usable = ds.usable();
  if (usable.size() < static_cast<std::size_t>(cfg.folds)) {
    throw InputError(fmt::format("dataset has {} usable samples, fewer than {} folds", usable.size(), cfg.folds));
  }
  const int ref = ds.header.value("reference_generator", 0);
  const int n_inputs = static_cast<int>(usable.front().y01.size() + usable.front().y02.size() + usable.front().gamma.size());

  TrainingOutcome out;
  MlpConfig chosen = cfg.mlp_config(n_inputs);
  if (!cfg.cv_candidates.empty()) {
    const std::vector<MlpConfig> configs = cfg.cv_configs(n_inputs);
    out.cv = cross_validate(configs, usable, cfg.folds, cfg.validation_folds, cfg.seed, ref, cfg.jobs);
    chosen = configs[out.cv->best];
  }
  const FoldSplit split = make_folds(usable.size(), cfg.folds, cfg.validation_folds, 0, cfg.seed);
  std::vector<Sample> tr;
  std::vector<Sample> va;
  for (auto i : split.train) tr.push_back(usable[i]);
  for (auto i : split.validation) va.push_back(usable[i]);
  out.model = train(chosen, tr, va, ref);
  out.n_train = tr.size();
  out.n_validation = va.size();
  return out;
}

std::string loss_curve_csv(const TrainingMetadata& meta) {
  std::string out = "epoch,train_loss,validation_loss\n";
  for (std::size_t e = 0; e < meta.train_curve.size(); ++e) {
    const double v = e < meta.validation_curve.size() ? meta.validation_curve[e] : std::nan("");
    out += fmt::format("{},{},{}\n", e + 1, meta.train_curve[e], std::isnan(v) ? std::string("nan") : fmt::format("{}", v));
  }
  return out;
}

}  // namespace tacoord
