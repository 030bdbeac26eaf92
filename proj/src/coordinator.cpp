#include "tacoord/coordinator.hpp"

#include <algorithm>
#include <atomic>
#include <bit>
#include <chrono>
#include <cmath>
#include <limits>
#include <sstream>
#include <thread>

#include <fmt/format.h>

#include "tacoord/case_io.hpp"
#include "tacoord/errors.hpp"

namespace tacoord {

using nlohmann::json;

namespace {

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

double reduction_percent(double nc, double s) { return nc != 0.0 ? 100.0 * (nc - s) / nc : 0.0; }

json number_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

std::string csv_number(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  return fmt::format("{}", v);
}

}  // namespace

json CoordinationResult::to_json() const {
  json p = json::array();
  for (double v : predictions) p.push_back(number_or_null(v));
  return {{"gamma", gamma},
          {"label", combination_label(gamma)},
          {"encoding", encoding},
          {"predictions", p},
          {"wall_ms", wall_ms},
          {"note", note}};
}

std::string CoordinationResult::predictions_csv() const {
  const int n_dc = static_cast<int>(gamma.size());
  std::string out = "k,combination,predicted_ta,selected\n";
  for (std::size_t k = 0; k < predictions.size(); ++k) {
    out += fmt::format("{},{},{},{}\n", k, combination_label(combination(static_cast<std::uint32_t>(k), n_dc)),
                       csv_number(predictions[k]), k == encoding ? 1 : 0);
  }
  return out;
}

CoordinationResult select_minimum(std::span<const double> predictions, int n_dc) {
  if (n_dc < 1 || n_dc > 20) throw InputError("exhaustive selection supports 1 to 20 DCs");
  if (predictions.size() != (std::size_t{1} << n_dc)) {
    throw InputError(fmt::format("expected {} predictions, got {}", std::size_t{1} << n_dc, predictions.size()));
  }
  std::uint32_t best = 0;
  double best_value = std::numeric_limits<double>::infinity();
  bool found = false;
  std::size_t ties = 0;
  for (std::uint32_t k = 0; k < predictions.size(); ++k) {
    const double v = predictions[k];
    if (std::isnan(v)) continue;
    if (!found || v < best_value) {
      best = k;
      best_value = v;
      found = true;
      ties = 1;
    } else if (v == best_value) {
      ++ties;
      if (std::popcount(k) < std::popcount(best)) best = k;
    }
  }
  if (!found) throw DomainError("all predictions are NaN");
  CoordinationResult r;
  r.encoding = best;
  r.gamma = combination(best, n_dc);
  r.predictions.assign(predictions.begin(), predictions.end());
  r.note = ties > 1 ? fmt::format("{} combinations tied; fewest active DCs, then lowest encoding", ties)
                    : "unique minimum";
  return r;
}

CoordinationResult dic_select(const MlpModel& model, std::span<const double> y0) {
  const auto start = std::chrono::steady_clock::now();
  const std::vector<double> pred = predict_batch(model, y0);
  CoordinationResult r = select_minimum(pred, model.n_dc);
  r.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
  return r;
}

std::string policy_name(Policy p) {
  switch (p) {
    case Policy::NC: return "NC";
    case Policy::FC: return "FC";
    case Policy::DIC: return "DIC";
    case Policy::MBC: return "MBC";
  }
  return "?";
}

Policy parse_policy(const std::string& name) {
  std::string up = name;
  std::transform(up.begin(), up.end(), up.begin(), [](unsigned char ch) { return std::toupper(ch); });
  if (up == "NC") return Policy::NC;
  if (up == "FC") return Policy::FC;
  if (up == "DIC") return Policy::DIC;
  if (up == "MBC") return Policy::MBC;
  throw InputError("unknown policy '" + name + "' (expected NC, FC, DIC or MBC)");
}

std::vector<Policy> parse_policies(const std::string& comma_list) {
  std::vector<Policy> out;
  std::stringstream in(comma_list);
  std::string item;
  while (std::getline(in, item, ',')) {
    if (item.empty()) continue;
    const Policy p = parse_policy(item);
    if (std::find(out.begin(), out.end(), p) == out.end()) out.push_back(p);
  }
  if (out.empty()) throw InputError("no policies requested");
  return out;
}

json scenario_to_json(const Scenario& s) {
  return {{"name", s.name},
          {"condition",
           {{"load_scale", s.condition.load_scale},
            {"gen_scale", s.condition.gen_scale},
            {"ibr_scale", s.condition.ibr_scale}}},
          {"disturbance", {{"fault_bus", s.disturbance.fault_bus}, {"duration", s.disturbance.duration}}}};
}

Scenario scenario_from_json(const json& j) {
  Scenario s;
  try {
    const json cond = j.value("condition", json::object());
    s.condition = {cond.value("load_scale", 1.0), cond.value("gen_scale", 1.0), cond.value("ibr_scale", 1.0)};
    const json& d = j.at("disturbance");
    s.disturbance = {d.at("fault_bus").get<int>(), d.value("duration", 0.05)};
    s.name = j.value("name", fmt::format("bus{}_load{}", s.disturbance.fault_bus, s.condition.load_scale));
  } catch (const json::exception& e) {
    throw InputError(std::string("malformed scenario: ") + e.what());
  }
  if (!(s.disturbance.duration > 0.0)) throw InputError("scenario fault duration must be positive");
  return s;
}

ScenarioContext prepare_scenario(const SystemCase& base, const Scenario& sc, const TimingTemplate& timing,
                                 const SimulationOptions& sim, const TotalActionOptions& ta) {
  if (!base.find_bus(sc.disturbance.fault_bus)) {
    throw InputError(fmt::format("fault bus {} not in case", sc.disturbance.fault_bus));
  }
  SystemCase system = apply_condition(base, sc.condition);
  const PowerFlowSolution pf = solve_power_flow(system);
  DynamicModel model = build_dynamic_model(system, pf);
  const std::vector<int> off(static_cast<std::size_t>(system.n_dc()), 0);
  ScenarioRun nc = run_scenario(model, sc.disturbance, timing, off, sim, ta);
  std::vector<double> y0 = line_flows(system, pf);
  y0.insert(y0.end(), nc.y02.begin(), nc.y02.end());
  ScenarioContext ctx{std::move(system), std::move(model), std::move(nc), std::move(y0),
                      timing.t_fault + sc.disturbance.duration};
  return ctx;
}

std::vector<int> mbc_select(const ScenarioContext& ctx, const TasOptions& opts) {
  const auto& traj = ctx.nc.trajectory;
  const Eigen::VectorXd x0 =
      to_deviation(ctx.model, traj.state(traj.index_of(ctx.t_clear)), ctx.system.reference_generator);
  const std::vector<double> q0(static_cast<std::size_t>(ctx.system.n_dc()), 0.0);
  const std::vector<double> s = tas(ctx.model, q0, x0, opts);
  const std::vector<int> current(q0.size(), 0);
  return mbc_switching(s, current);
}

bool PolicyReport::ok() const {
  return std::all_of(rows.begin(), rows.end(), [](const PolicyOutcome& r) { return r.error.empty(); });
}

const PolicyOutcome* PolicyReport::find(const std::string& name) const {
  for (const auto& r : rows) {
    if (r.name == name) return &r;
  }
  return nullptr;
}

std::string PolicyReport::csv() const {
  std::string out = "scenario,policy,combination,t_activate,ta,reduction_pct,converged,error,trajectory\n";
  for (const auto& r : rows) {
    out += fmt::format("{},{},{},{},{},{},{},\"{}\",{}\n", scenario.name, r.name, combination_label(r.gamma),
                       csv_number(r.t_activate), csv_number(r.s_inf), csv_number(r.reduction), r.converged ? 1 : 0,
                       r.error, r.trajectory_path);
  }
  return out;
}

json PolicyReport::to_json() const {
  json j;
  j["scenario"] = scenario_to_json(scenario);
  j["nc_ta"] = number_or_null(nc_s_inf);
  j["y0"] = y0;
  j["policies"] = json::array();
  for (const auto& r : rows) {
    j["policies"].push_back({{"name", r.name},
                             {"gamma", r.gamma},
                             {"t_activate", number_or_null(r.t_activate)},
                             {"ta", number_or_null(r.s_inf)},
                             {"reduction_pct", number_or_null(r.reduction)},
                             {"converged", r.converged},
                             {"error", r.error.empty() ? json(nullptr) : json(r.error)},
                             {"trajectory", r.trajectory_path}});
  }
  return j;
}

PolicyReport evaluate_policies(const SystemCase& base, const Scenario& sc, const EvaluationOptions& opts) {
  if (opts.model == nullptr && std::find(opts.policies.begin(), opts.policies.end(), Policy::DIC) != opts.policies.end()) {
    throw InputError("DIC requires a trained model");
  }
  const ScenarioContext ctx = prepare_scenario(base, sc, opts.timing, opts.simulation, opts.total_action);
  const int n_dc = ctx.system.n_dc();
  PolicyReport report;
  report.scenario = sc;
  report.nc_s_inf = ctx.nc.ta.value;
  report.y0 = ctx.y0;

  report.rows.resize(opts.policies.size());
  std::vector<std::optional<Trajectory>> trajectories(opts.policies.size());
  parallel_for(opts.policies.size(), opts.jobs, [&](std::size_t idx) {
    const Policy p = opts.policies[idx];
    PolicyOutcome& row = report.rows[idx];
    row.name = policy_name(p);
    try {
      switch (p) {
        case Policy::NC: row.gamma.assign(static_cast<std::size_t>(n_dc), 0); break;
        case Policy::FC:
          row.gamma = opts.fixed_combo.empty() ? std::vector<int>(static_cast<std::size_t>(n_dc), 1) : opts.fixed_combo;
          if (static_cast<int>(row.gamma.size()) != n_dc) {
            throw InputError(fmt::format("fixed combination has {} entries, case has {} DCs", row.gamma.size(), n_dc));
          }
          break;
        case Policy::DIC:
          row.gamma = dic_select(*opts.model, ctx.y0).gamma;
          break;
        case Policy::MBC: row.gamma = mbc_select(ctx, opts.tas); break;
      }
      row.t_activate = ctx.t_clear + opts.timing.activation_delay;
      if (p == Policy::NC) {
        row.s_inf = ctx.nc.ta.value;
        row.converged = ctx.nc.ta.converged;
        trajectories[idx] = ctx.nc.trajectory;
      } else {
        const ScenarioRun run =
            run_scenario(ctx.model, sc.disturbance, opts.timing, row.gamma, opts.simulation, opts.total_action);
        row.s_inf = run.ta.value;
        row.converged = run.ta.converged;
        trajectories[idx] = run.trajectory;
      }
      row.reduction = reduction_percent(ctx.nc.ta.value, row.s_inf);
    } catch (const std::exception& e) {
      row.s_inf = std::numeric_limits<double>::quiet_NaN();
      row.reduction = std::numeric_limits<double>::quiet_NaN();
      row.error = e.what();
    }
  });

  if (opts.export_dir) {
    for (std::size_t idx = 0; idx < report.rows.size(); ++idx) {
      if (!trajectories[idx]) continue;
      const auto path = *opts.export_dir / fmt::format("{}_{}.csv", sc.name, report.rows[idx].name);
      write_text_file(path, trajectory_csv(*trajectories[idx]));
      const EnergySeries es = oscillation_energy(*trajectories[idx], ctx.system, ctx.t_clear);
      write_text_file(*opts.export_dir / fmt::format("{}_{}_energy.csv", sc.name, report.rows[idx].name),
                      es.normalized_csv());
      report.rows[idx].trajectory_path = path.string();
    }
  }
  return report;
}

bool DelayReport::ok() const {
  return std::all_of(rows.begin(), rows.end(), [](const DelayRow& r) { return r.error.empty(); });
}

std::string DelayReport::csv() const {
  std::string out = "scenario,combination,delay,ta,reduction_pct,converged,error\n";
  for (const auto& r : rows) {
    out += fmt::format("{},{},{},{},{},{},\"{}\"\n", scenario.name, combination_label(gamma), csv_number(r.delay),
                       csv_number(r.s_inf), csv_number(r.reduction), r.converged ? 1 : 0, r.error);
  }
  return out;
}

json DelayReport::to_json() const {
  json j;
  j["scenario"] = scenario_to_json(scenario);
  j["gamma"] = gamma;
  j["nc_ta"] = number_or_null(nc_s_inf);
  j["delays"] = json::array();
  for (const auto& r : rows) {
    j["delays"].push_back({{"delay", std::isinf(r.delay) ? json("inf") : json(r.delay)},
                           {"ta", number_or_null(r.s_inf)},
                           {"reduction_pct", number_or_null(r.reduction)},
                           {"converged", r.converged},
                           {"error", r.error.empty() ? json(nullptr) : json(r.error)}});
  }
  return j;
}

DelayReport delay_sweep(const SystemCase& base, const Scenario& sc, const MlpModel& model,
                        std::span<const double> delays, const EvaluationOptions& opts) {
  std::vector<double> sweep(delays.begin(), delays.end());
  for (double d : sweep) {
    if (!(d >= 0.0)) throw InputError("delays must be non-negative");
  }
  if (std::none_of(sweep.begin(), sweep.end(), [](double d) { return std::isinf(d); })) {
    sweep.push_back(std::numeric_limits<double>::infinity());
  }
  const ScenarioContext ctx = prepare_scenario(base, sc, opts.timing, opts.simulation, opts.total_action);
  DelayReport report;
  report.scenario = sc;
  report.nc_s_inf = ctx.nc.ta.value;
  report.gamma = dic_select(model, ctx.y0).gamma;
  report.rows.resize(sweep.size());
  parallel_for(sweep.size(), opts.jobs, [&](std::size_t idx) {
    DelayRow& row = report.rows[idx];
    row.delay = sweep[idx];
    try {
      TimingTemplate timing = opts.timing;
      timing.activation_delay = sweep[idx];
      const ScenarioRun run =
          run_scenario(ctx.model, sc.disturbance, timing, report.gamma, opts.simulation, opts.total_action);
      row.s_inf = run.ta.value;
      row.converged = run.ta.converged;
      row.reduction = reduction_percent(ctx.nc.ta.value, row.s_inf);
    } catch (const std::exception& e) {
      row.s_inf = std::numeric_limits<double>::quiet_NaN();
      row.reduction = std::numeric_limits<double>::quiet_NaN();
      row.error = e.what();
    }
  });
  return report;
}

std::vector<double> exhaustive_total_action(const ScenarioContext& ctx, const Disturbance& d,
                                            const TimingTemplate& timing, const SimulationOptions& sim,
                                            const TotalActionOptions& ta, int jobs) {
  const int n_dc = ctx.system.n_dc();
  std::vector<double> out(std::size_t{1} << n_dc, std::numeric_limits<double>::quiet_NaN());
  parallel_for(out.size(), jobs, [&](std::size_t k) {
    try {
      out[k] = run_scenario(ctx.model, d, timing, combination(static_cast<std::uint32_t>(k), n_dc), sim, ta).ta.value;
    } catch (const DomainError&) {
    }
  });
  return out;
}

namespace {

std::vector<double> average_ranks(std::span<const double> v) {
  std::vector<std::size_t> order(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> rank(v.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]]) ++j;
    const double r = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t t = i; t <= j; ++t) rank[order[t]] = r;
    i = j + 1;
  }
  return rank;
}

}  // namespace

double spearman(std::span<const double> predicted, std::span<const double> actual) {
  if (predicted.size() != actual.size() || predicted.size() < 2) {
    throw InputError("spearman needs two vectors of equal length >= 2");
  }
  for (std::size_t i = 0; i < predicted.size(); ++i) {
    if (!std::isfinite(predicted[i]) || !std::isfinite(actual[i])) throw InputError("spearman input is not finite");
  }
  const auto rp = average_ranks(predicted);
  const auto ra = average_ranks(actual);
  const double n = static_cast<double>(rp.size());
  const double mean = (n + 1.0) / 2.0;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < rp.size(); ++i) {
    sxy += (rp[i] - mean) * (ra[i] - mean);
    sxx += (rp[i] - mean) * (rp[i] - mean);
    syy += (ra[i] - mean) * (ra[i] - mean);
  }
  if (sxx == 0.0 || syy == 0.0) throw DomainError("spearman is undefined for a constant vector");
  return sxy / std::sqrt(sxx * syy);
}

double mape(std::span<const double> predicted, std::span<const double> actual) {
  if (predicted.size() != actual.size() || predicted.empty()) throw InputError("mape needs two non-empty vectors of equal length");
  double sum = 0.0;
  for (std::size_t i = 0; i < actual.size(); ++i) {
    if (actual[i] == 0.0) throw DomainError(fmt::format("mape undefined: actual value {} is zero", i));
    sum += std::abs(predicted[i] - actual[i]) / std::abs(actual[i]);
  }
  return 100.0 * sum / static_cast<double>(actual.size());
}

}  // namespace tacoord
