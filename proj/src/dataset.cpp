#include "tacoord/dataset.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <mutex>
#include <numeric>
#include <random>
#include <sstream>
#include <thread>

#include <fmt/format.h>

#include "tacoord/case_io.hpp"
#include "tacoord/errors.hpp"

namespace tacoord {

using nlohmann::json;

std::vector<int> combination(std::uint32_t k, int n_dc) {
  if (n_dc < 1 || n_dc > 20) throw InputError("number of DCs must lie in [1, 20]");
  if (k >= (std::uint32_t{1} << n_dc)) throw InputError("combination index out of range");
  std::vector<int> gamma(n_dc);
  for (int l = 0; l < n_dc; ++l) gamma[l] = static_cast<int>((k >> (n_dc - 1 - l)) & 1U);
  return gamma;
}

std::uint32_t encode_combination(std::span<const int> gamma) {
  std::uint32_t k = 0;
  for (int q : gamma) k = (k << 1) | static_cast<std::uint32_t>(q != 0);
  return k;
}

std::string combination_label(std::span<const int> gamma) {
  std::string s;
  for (int q : gamma) s += q ? '1' : '0';
  return s;
}

json grid_to_json(const ScenarioGrid& g) {
  json j;
  j["conditions"] = json::array();
  for (const auto& c : g.conditions) {
    j["conditions"].push_back({{"load_scale", c.load_scale}, {"gen_scale", c.gen_scale}, {"ibr_scale", c.ibr_scale}});
  }
  j["disturbances"] = json::array();
  for (const auto& d : g.disturbances) j["disturbances"].push_back({{"fault_bus", d.fault_bus}, {"duration", d.duration}});
  return j;
}

ScenarioGrid grid_from_json(const json& j) {
  ScenarioGrid g;
  try {
    for (const auto& c : j.at("conditions")) {
      g.conditions.push_back({c.value("load_scale", 1.0), c.value("gen_scale", 1.0), c.value("ibr_scale", 1.0)});
    }
    for (const auto& d : j.at("disturbances")) {
      g.disturbances.push_back({d.at("fault_bus").get<int>(), d.value("duration", 0.05)});
    }
  } catch (const json::exception& e) {
    throw InputError(std::string("malformed scenario grid: ") + e.what());
  }
  if (g.conditions.empty() || g.disturbances.empty()) throw InputError("scenario grid needs conditions and disturbances");
  return g;
}

EventSchedule TimingTemplate::schedule(const Disturbance& d, std::span<const int> gamma) const {
  EventSchedule ev;
  ev.fault_bus = d.fault_bus;
  ev.t_fault = t_fault;
  ev.t_clear = t_fault + d.duration;
  ev.t_activate = ev.t_clear + activation_delay;
  ev.t_end = t_end;
  ev.gamma.assign(gamma.begin(), gamma.end());
  return ev;
}

json timing_to_json(const TimingTemplate& t) {
  return {{"t_fault", t.t_fault}, {"activation_delay", t.activation_delay}, {"t_end", t.t_end}};
}

TimingTemplate timing_from_json(const json& j) {
  TimingTemplate t;
  t.t_fault = j.value("t_fault", t.t_fault);
  t.activation_delay = j.value("activation_delay", t.activation_delay);
  t.t_end = j.value("t_end", t.t_end);
  if (!(t.t_fault >= 0.0 && t.activation_delay >= 0.0 && t.t_end > t.t_fault)) throw InputError("invalid timing template");
  return t;
}

SystemCase apply_condition(const SystemCase& base, const OperatingCondition& mu) {
  SystemCase c = base;
  for (auto& ld : c.loads) {
    ld.p *= mu.load_scale;
    ld.q *= mu.load_scale;
  }
  const int slack = c.slack_index();
  for (auto& g : c.generators) {
    if (c.bus_index(g.bus) != slack) g.pm *= mu.gen_scale;
  }
  for (auto& ibr : c.ibrs) ibr.p_ref *= mu.ibr_scale;
  return c;
}

json sample_to_json(const Sample& s) {
  json j;
  j["i"] = s.i;
  j["j"] = s.j;
  j["k"] = s.k;
  j["s_inf"] = std::isfinite(s.s_inf) ? json(s.s_inf) : json(nullptr);
  j["y01"] = s.y01;
  j["y02"] = s.y02;
  j["gamma"] = s.gamma;
  j["converged"] = s.converged;
  j["stable"] = s.stable;
  return j;
}

Sample sample_from_json(const json& j) {
  Sample s;
  try {
    s.i = j.at("i").get<int>();
    s.j = j.at("j").get<int>();
    s.k = j.at("k").get<int>();
    s.s_inf = j.at("s_inf").is_null() ? std::numeric_limits<double>::quiet_NaN() : j.at("s_inf").get<double>();
    s.y01 = j.at("y01").get<std::vector<double>>();
    s.y02 = j.at("y02").get<std::vector<double>>();
    s.gamma = j.at("gamma").get<std::vector<int>>();
    s.converged = j.at("converged").get<bool>();
    s.stable = j.at("stable").get<bool>();
  } catch (const json::exception& e) {
    throw InputError(std::string("malformed sample: ") + e.what());
  }
  return s;
}

std::vector<Sample> Dataset::usable() const {
  std::vector<Sample> out;
  for (const auto& s : samples) {
    if (s.converged && s.stable && std::isfinite(s.s_inf)) out.push_back(s);
  }
  return out;
}

std::string Dataset::to_jsonl() const {
  std::string out = header.dump();
  out += '\n';
  for (const auto& s : samples) {
    out += sample_to_json(s).dump();
    out += '\n';
  }
  return out;
}

Dataset Dataset::from_jsonl(const std::string& text) {
  Dataset d;
  std::istringstream in(text);
  std::string line;
  bool first = true;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw InputError(fmt::format("dataset line {}: invalid JSON ({})", line_no, e.what()));
    }
    if (first) {
      if (j.value("schema", "") != kDatasetSchema) throw InputError("dataset header has an unknown schema");
      d.header = std::move(j);
      first = false;
    } else {
      d.samples.push_back(sample_from_json(j));
    }
  }
  if (first) throw InputError("dataset is empty");
  return d;
}

ScenarioRun run_scenario(const DynamicModel& model, const Disturbance& d, const TimingTemplate& timing,
                         std::span<const int> gamma, const SimulationOptions& sim, const TotalActionOptions& ta_opts) {
  const EventSchedule ev = timing.schedule(d, gamma);
  ScenarioRun run;
  run.trajectory = simulate(model, ev, sim);
  const EnergySeries es = oscillation_energy(run.trajectory, model.system, ev.t_clear);
  run.ta = total_action(es, ta_opts);
  run.y02 = snapshot_features(run.trajectory, model.system, ev.t_clear);
  return run;
}

namespace {

// Runs body(0..n-1) on up to `jobs` threads; the first exception per task is
// left to the body to handle.
void parallel_for(std::size_t n, int jobs, const std::function<void(std::size_t)>& body) {
  const auto workers = static_cast<std::size_t>(std::max(1, jobs));
  if (workers == 1 || n < 2) {
    for (std::size_t t = 0; t < n; ++t) body(t);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::jthread> pool;
  for (std::size_t w = 0; w < std::min(workers, n); ++w) {
    pool.emplace_back([&] {
      for (std::size_t t = next++; t < n; t = next++) body(t);
    });
  }
}

}  // namespace

Dataset collect(const SystemCase& c, const ScenarioGrid& grid, const TimingTemplate& timing,
                const CollectOptions& opts) {
  c.validate();
  const int nc = c.n_dc();
  const std::uint32_t n_comb = std::uint32_t{1} << nc;
  auto log = [&](const std::string& msg) {
    if (opts.log) opts.log(msg);
  };

  Dataset ds;
  std::vector<std::optional<DynamicModel>> models(grid.conditions.size());
  std::vector<std::vector<double>> y01(grid.conditions.size());
  for (std::size_t i = 0; i < grid.conditions.size(); ++i) {
    try {
      const SystemCase ci = apply_condition(c, grid.conditions[i]);
      const PowerFlowSolution pf = solve_power_flow(ci);
      y01[i] = line_flows(ci, pf);
      models[i].emplace(build_dynamic_model(ci, pf));
    } catch (const DomainError& e) {
      ds.warnings.push_back(fmt::format("condition {} skipped: {}", i, e.what()));
      log(ds.warnings.back());
    }
  }
  std::vector<bool> disturbance_ok(grid.disturbances.size(), true);
  for (std::size_t j = 0; j < grid.disturbances.size(); ++j) {
    if (!c.find_bus(grid.disturbances[j].fault_bus) || !(grid.disturbances[j].duration > 0.0)) {
      disturbance_ok[j] = false;
      ds.warnings.push_back(fmt::format("disturbance {} skipped: fault bus {} not in case or bad duration", j,
                                        grid.disturbances[j].fault_bus));
      log(ds.warnings.back());
    }
  }

  struct Task {
    int i, j, k;
  };
  std::vector<Task> tasks;
  for (std::size_t i = 0; i < grid.conditions.size(); ++i) {
    if (!models[i]) continue;
    for (std::size_t j = 0; j < grid.disturbances.size(); ++j) {
      if (!disturbance_ok[j]) continue;
      for (std::uint32_t k = 0; k < n_comb; ++k) tasks.push_back({int(i), int(j), int(k)});
    }
  }

  std::vector<Sample> results(tasks.size());
  std::vector<std::string> failures(tasks.size());
  std::mutex log_mutex;
  std::atomic<std::size_t> done{0};
  parallel_for(tasks.size(), opts.jobs, [&](std::size_t t) {
    const Task& task = tasks[t];
    Sample& s = results[t];
    s.i = task.i;
    s.j = task.j;
    s.k = task.k;
    s.gamma = combination(static_cast<std::uint32_t>(task.k), nc);
    s.y01 = y01[task.i];
    try {
      const ScenarioRun run = run_scenario(*models[task.i], grid.disturbances[task.j], timing, s.gamma,
                                           opts.simulation, opts.total_action);
      s.s_inf = run.ta.value;
      s.converged = run.ta.converged;
      s.stable = !run.ta.growing;
      s.y02 = run.y02;
      if (!s.converged) failures[t] = fmt::format("sample ({},{},{}) total action not converged", task.i, task.j, task.k);
    } catch (const DomainError& e) {
      s.s_inf = std::numeric_limits<double>::quiet_NaN();
      s.converged = false;
      s.stable = false;
      s.y02.assign(static_cast<std::size_t>(c.n_gen()), std::numeric_limits<double>::quiet_NaN());
      failures[t] = fmt::format("sample ({},{},{}) failed: {}", task.i, task.j, task.k, e.what());
    }
    const std::size_t n_done = ++done;
    std::lock_guard lock(log_mutex);
    log(fmt::format("[{}/{}] condition {} disturbance {} combination {}", n_done, tasks.size(), task.i, task.j,
                    combination_label(s.gamma)));
  });

  for (std::size_t t = 0; t < tasks.size(); ++t) {
    if (!failures[t].empty()) {
      ds.warnings.push_back(failures[t]);
      log(failures[t]);
    }
  }
  // y02 of a failed run is unknown; borrow it from a sibling combination
  // (it does not depend on k).
  for (auto& s : results) {
    if (std::all_of(s.y02.begin(), s.y02.end(), [](double v) { return std::isfinite(v); })) continue;
    for (const auto& o : results) {
      if (o.i == s.i && o.j == s.j &&
          std::all_of(o.y02.begin(), o.y02.end(), [](double v) { return std::isfinite(v); })) {
        s.y02 = o.y02;
        break;
      }
    }
  }
  ds.samples = std::move(results);

  ds.header = {{"schema", kDatasetSchema},
               {"case", c.name},
               {"case_hash", case_hash(c)},
               {"grid", grid_to_json(grid)},
               {"timing", timing_to_json(timing)},
               {"seed", opts.seed},
               {"n_dc", nc},
               {"n_y01", c.feature_lines.size()},
               {"n_y02", c.n_gen()},
               {"reference_generator", c.reference_generator},
               {"std_convention", "population"},
               {"ordering", "condition-major, then disturbance, then combination"},
               {"warnings", ds.warnings.size()}};
  return ds;
}

Standardizer Standardizer::fit(const Eigen::MatrixXd& x, std::span<const std::string> names,
                               std::span<const int> passthrough) {
  if (x.rows() < 2) throw InputError("standardizer needs at least two samples");
  if (static_cast<Eigen::Index>(names.size()) != x.cols()) throw InputError("standardizer: column names mismatch");
  Standardizer s;
  s.names.assign(names.begin(), names.end());
  const double n = static_cast<double>(x.rows());
  for (Eigen::Index col = 0; col < x.cols(); ++col) {
    if (std::find(passthrough.begin(), passthrough.end(), static_cast<int>(col)) != passthrough.end()) {
      s.mean.push_back(0.0);
      s.stddev.push_back(1.0);
      continue;
    }
    const double mean = x.col(col).sum() / n;
    const double var = (x.col(col).array() - mean).square().sum() / n;
    const double sd = std::sqrt(var);
    if (!(sd > 1e-12 * std::max(1.0, std::abs(mean)))) {
      throw InputError(fmt::format("feature column '{}' is constant; cannot standardize", names[col]));
    }
    s.mean.push_back(mean);
    s.stddev.push_back(sd);
  }
  return s;
}

Eigen::VectorXd Standardizer::apply(const Eigen::VectorXd& x) const {
  if (x.size() != static_cast<Eigen::Index>(mean.size())) throw InputError("standardizer: dimension mismatch");
  Eigen::VectorXd z(x.size());
  for (Eigen::Index c = 0; c < x.size(); ++c) z(c) = (x(c) - mean[c]) / stddev[c];
  return z;
}

Eigen::VectorXd Standardizer::inverse(const Eigen::VectorXd& z) const {
  if (z.size() != static_cast<Eigen::Index>(mean.size())) throw InputError("standardizer: dimension mismatch");
  Eigen::VectorXd x(z.size());
  for (Eigen::Index c = 0; c < z.size(); ++c) x(c) = z(c) * stddev[c] + mean[c];
  return x;
}

Eigen::MatrixXd Standardizer::apply_rows(const Eigen::MatrixXd& x) const {
  Eigen::MatrixXd out(x.rows(), x.cols());
  for (Eigen::Index r = 0; r < x.rows(); ++r) out.row(r) = apply(x.row(r).transpose()).transpose();
  return out;
}

json Standardizer::to_json() const { return {{"mean", mean}, {"std", stddev}, {"names", names}}; }

Standardizer Standardizer::from_json(const json& j) {
  Standardizer s;
  s.mean = j.at("mean").get<std::vector<double>>();
  s.stddev = j.at("std").get<std::vector<double>>();
  s.names = j.at("names").get<std::vector<std::string>>();
  if (s.mean.size() != s.stddev.size() || s.mean.size() != s.names.size()) throw InputError("standardizer: inconsistent sizes");
  for (double sd : s.stddev) {
    if (!(sd > 1e-12)) throw InputError("standardizer: non-positive standard deviation");
  }
  return s;
}

Eigen::MatrixXd feature_matrix(std::span<const Sample> samples) {
  if (samples.empty()) return {};
  const auto n1 = samples.front().y01.size();
  const auto n2 = samples.front().y02.size();
  Eigen::MatrixXd x(samples.size(), n1 + n2);
  for (std::size_t r = 0; r < samples.size(); ++r) {
    if (samples[r].y01.size() != n1 || samples[r].y02.size() != n2) throw InputError("samples have inconsistent feature sizes");
    for (std::size_t c = 0; c < n1; ++c) x(r, c) = samples[r].y01[c];
    for (std::size_t c = 0; c < n2; ++c) x(r, n1 + c) = samples[r].y02[c];
  }
  return x;
}

std::vector<std::string> feature_names(std::size_t n_y01, std::size_t n_y02) {
  std::vector<std::string> names;
  for (std::size_t c = 0; c < n_y01; ++c) names.push_back(fmt::format("y01[{}]", c));
  for (std::size_t c = 0; c < n_y02; ++c) names.push_back(fmt::format("y02[{}]", c));
  return names;
}

Standardizer fit_standardizer(std::span<const Sample> samples, int reference_generator) {
  if (samples.size() < 2) throw InputError("standardizer needs at least two samples");
  const auto n1 = samples.front().y01.size();
  const auto n2 = samples.front().y02.size();
  const std::vector<int> passthrough{static_cast<int>(n1) + reference_generator};
  return Standardizer::fit(feature_matrix(samples), feature_names(n1, n2), passthrough);
}

Standardizer fit_standardizer(std::span<const Sample> samples, const SystemCase& c) {
  return fit_standardizer(samples, c.reference_generator);
}

FoldSplit make_folds(std::size_t n_samples, int n_folds, int n_validation, int rotation, std::uint64_t seed) {
  if (n_folds < 2) throw InputError("need at least two folds");
  if (n_validation < 1 || n_validation >= n_folds) throw InputError("validation fold count must lie in [1, N)");
  if (static_cast<std::size_t>(n_folds) > n_samples) throw InputError("more folds than samples");
  std::vector<std::size_t> order(n_samples);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);

  const int r0 = ((rotation % n_folds) + n_folds) % n_folds;
  std::vector<bool> is_val(static_cast<std::size_t>(n_folds), false);
  for (int p = 0; p < n_validation; ++p) is_val[static_cast<std::size_t>((r0 + p) % n_folds)] = true;

  FoldSplit split;
  for (int f = 0; f < n_folds; ++f) {
    const std::size_t lo = n_samples * static_cast<std::size_t>(f) / static_cast<std::size_t>(n_folds);
    const std::size_t hi = n_samples * static_cast<std::size_t>(f + 1) / static_cast<std::size_t>(n_folds);
    auto& dst = is_val[static_cast<std::size_t>(f)] ? split.validation : split.train;
    dst.insert(dst.end(), order.begin() + static_cast<std::ptrdiff_t>(lo), order.begin() + static_cast<std::ptrdiff_t>(hi));
  }
  return split;
}

}  // namespace tacoord
