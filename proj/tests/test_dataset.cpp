#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>

#include "fixtures.hpp"
#include "tacoord/dataset.hpp"
#include "tacoord/errors.hpp"

using namespace tacoord;

namespace {

TimingTemplate short_timing() { return {1.0, 0.5, 25.0}; }

ScenarioGrid small_grid() {
  ScenarioGrid g;
  g.conditions = {{0.9, 0.9, 1.0}, {1.0, 1.0, 1.0}, {1.1, 1.1, 1.0}};
  g.disturbances = {{1, 0.05}, {6, 0.05}, {8, 0.05}, {11, 0.05}};
  return g;
}

const Dataset& desk_dataset() {
  static const Dataset ds = [] {
    CollectOptions o;
    o.jobs = 4;
    return collect(fixtures::desk_case(), small_grid(), short_timing(), o);
  }();
  return ds;
}

}  // namespace

TEST_CASE("combination encoding puts the first DC in the top bit") {
  CHECK(combination(0b101, 3) == std::vector<int>{1, 0, 1});
  CHECK(combination(0b001, 3) == std::vector<int>{0, 0, 1});
  CHECK(combination(0, 2) == std::vector<int>{0, 0});
  for (std::uint32_t k = 0; k < 8; ++k) {
    const auto g = combination(k, 3);
    CHECK(encode_combination(g) == k);
  }
  CHECK(combination_label(std::vector<int>{1, 1, 0}) == "110");
}

TEST_CASE("one condition, one disturbance, two DCs gives four samples with shared features") {
  const SystemCase c = fixtures::three_machine();
  SystemCase two = c;
  Ibr second = two.ibrs.front();
  second.bus = 6;
  two.ibrs.push_back(second);
  ScenarioGrid g;
  g.conditions = {{}};
  g.disturbances = {{4, 0.05}};
  const Dataset ds = collect(two, g, short_timing());
  REQUIRE(ds.samples.size() == 4);
  for (int k = 0; k < 4; ++k) {
    CHECK(ds.samples[k].k == k);
    CHECK(ds.samples[k].y01 == ds.samples[0].y01);
    CHECK(ds.samples[k].y02 == ds.samples[0].y02);
  }
}

TEST_CASE("desk grid enumerates every sample in canonical order") {
  const Dataset& ds = desk_dataset();
  REQUIRE(ds.samples.size() == 3 * 4 * 8);
  CHECK(small_grid().n_samples(3) == 96);
  std::size_t t = 0;
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 4; ++j) {
      for (int k = 0; k < 8; ++k, ++t) {
        const Sample& s = ds.samples[t];
        CHECK(s.i == i);
        CHECK(s.j == j);
        CHECK(s.k == k);
        CHECK(s.gamma == combination(static_cast<std::uint32_t>(k), 3));
      }
    }
  }
  CHECK(ds.usable().size() == ds.samples.size());
  CHECK(ds.header.at("n_dc") == 3);
  CHECK(ds.header.at("std_convention") == "population");
}

TEST_CASE("features depend on the condition and disturbance but not the combination") {
  const Dataset& ds = desk_dataset();
  for (const Sample& s : ds.samples) {
    const Sample& base = ds.samples[static_cast<std::size_t>((s.i * 4 + s.j) * 8)];
    CHECK(s.y01 == base.y01);
    CHECK(s.y02 == base.y02);
  }
  CHECK(ds.samples[0].y01 != ds.samples[32].y01);
  CHECK(ds.samples[0].y02 != ds.samples[8].y02);
}

TEST_CASE("repeat collection is byte-identical regardless of thread count") {
  CollectOptions o;
  o.jobs = 1;
  const Dataset again = collect(fixtures::desk_case(), small_grid(), short_timing(), o);
  CHECK(again.to_jsonl() == desk_dataset().to_jsonl());
}

TEST_CASE("JSONL round trip preserves every value") {
  const std::string text = desk_dataset().to_jsonl();
  const Dataset back = Dataset::from_jsonl(text);
  CHECK(back.samples.size() == desk_dataset().samples.size());
  CHECK(back.to_jsonl() == text);
  CHECK_THROWS_AS(Dataset::from_jsonl(""), InputError);
  CHECK_THROWS_AS(Dataset::from_jsonl("{\"schema\":\"other\"}\n"), InputError);
  CHECK_THROWS_AS(Dataset::from_jsonl(text.substr(0, text.find('\n') + 1) + "{not json\n"), InputError);
}

TEST_CASE("resimulating a stored sample reproduces its total action") {
  const SystemCase base = fixtures::desk_case();
  const ScenarioGrid g = small_grid();
  const Dataset& ds = desk_dataset();
  for (std::size_t t : {std::size_t{5}, std::size_t{42}, std::size_t{95}}) {
    const Sample& s = ds.samples[t];
    const SystemCase ci = apply_condition(base, g.conditions[s.i]);
    const DynamicModel m = build_dynamic_model(ci, solve_power_flow(ci));
    const ScenarioRun run = run_scenario(m, g.disturbances[s.j], short_timing(), s.gamma);
    CHECK(std::abs(run.ta.value - s.s_inf) <= 1e-9 * s.s_inf);
  }
}

TEST_CASE("an unknown fault bus is skipped with a warning") {
  ScenarioGrid g;
  g.conditions = {{}};
  g.disturbances = {{1, 0.05}, {99, 0.05}};
  std::vector<std::string> logged;
  CollectOptions o;
  o.log = [&](const std::string& m) { logged.push_back(m); };
  const Dataset ds = collect(fixtures::desk_case(), g, short_timing(), o);
  CHECK(ds.samples.size() == 8);
  REQUIRE(ds.warnings.size() == 1);
  CHECK(ds.warnings[0].find("99") != std::string::npos);
  CHECK(std::any_of(logged.begin(), logged.end(), [](const std::string& m) { return m.find("99") != std::string::npos; }));
}

TEST_CASE("standardizer uses the population convention") {
  Eigen::MatrixXd x(3, 1);
  x << 1.0, 2.0, 3.0;
  const std::vector<std::string> names{"a"};
  const Standardizer s = Standardizer::fit(x, names);
  CHECK(s.mean[0] == doctest::Approx(2.0));
  CHECK(s.stddev[0] == doctest::Approx(std::sqrt(2.0 / 3.0)));
  const Eigen::MatrixXd z = s.apply_rows(x);
  CHECK(z(0, 0) == doctest::Approx(-1.224744871391589));
  CHECK(z(2, 0) == doctest::Approx(1.224744871391589));
}

TEST_CASE("standardizer round trip and constant-column error") {
  Eigen::MatrixXd x(4, 3);
  x << 1, 5, -2, 2, 5, 0, 4, 5, 3, 8, 5, 7;
  const std::vector<std::string> names{"p", "flat", "q"};
  try {
    (void)Standardizer::fit(x, names);
    FAIL("constant column accepted");
  } catch (const InputError& e) {
    CHECK(std::string(e.what()).find("flat") != std::string::npos);
  }
  const Standardizer s = Standardizer::fit(x, names, std::vector<int>{1});
  CHECK(s.mean[1] == 0.0);
  CHECK(s.stddev[1] == 1.0);
  const Eigen::VectorXd row = x.row(2).transpose();
  CHECK((s.inverse(s.apply(row)) - row).norm() <= 1e-12);
  const Standardizer back = Standardizer::from_json(s.to_json());
  CHECK(back.mean == s.mean);
  CHECK(back.stddev == s.stddev);
}

TEST_CASE("standardizer fitted on training folds leaves validation off-centre") {
  const std::vector<Sample> usable = desk_dataset().usable();
  const FoldSplit split = make_folds(usable.size(), 10, 3, 0, 7);
  std::vector<Sample> tr, va;
  for (auto i : split.train) tr.push_back(usable[i]);
  for (auto i : split.validation) va.push_back(usable[i]);
  const Standardizer s = fit_standardizer(tr, fixtures::desk_case());
  const Eigen::MatrixXd zt = s.apply_rows(feature_matrix(tr));
  const Eigen::MatrixXd zv = s.apply_rows(feature_matrix(va));
  const int ref_col = static_cast<int>(tr.front().y01.size()) + fixtures::desk_case().reference_generator;
  CHECK(s.mean[static_cast<std::size_t>(ref_col)] == 0.0);
  double max_train = 0.0, max_val = 0.0;
  for (Eigen::Index c = 0; c < zt.cols(); ++c) {
    if (c == ref_col) continue;
    max_train = std::max(max_train, std::abs(zt.col(c).mean()));
    max_val = std::max(max_val, std::abs(zv.col(c).mean()));
  }
  CHECK(max_train <= 1e-10);
  CHECK(max_val > 1e-6);
}

TEST_CASE("folds partition the samples and rotate validation") {
  const std::size_t n = 97;
  const FoldSplit s = make_folds(n, 10, 3, 0, 1);
  std::vector<std::size_t> all = s.train;
  all.insert(all.end(), s.validation.begin(), s.validation.end());
  std::sort(all.begin(), all.end());
  CHECK(all.size() == n);
  CHECK(std::adjacent_find(all.begin(), all.end()) == all.end());
  CHECK(all.back() == n - 1);
  CHECK(s.validation.size() >= 27);
  CHECK(s.validation.size() <= 30);

  std::vector<int> count(n, 0);
  for (int r = 0; r < 10; ++r) {
    for (auto i : make_folds(n, 10, 3, r, 1).validation) ++count[i];
  }
  CHECK(std::all_of(count.begin(), count.end(), [](int c) { return c == 3; }));
  CHECK(make_folds(n, 10, 3, 0, 1).validation == make_folds(n, 10, 3, 10, 1).validation);
  CHECK(make_folds(n, 10, 3, 0, 1).validation != make_folds(n, 10, 3, 0, 2).validation);
  CHECK_THROWS_AS(make_folds(5, 10, 3, 0, 1), InputError);
  CHECK_THROWS_AS(make_folds(50, 10, 10, 0, 1), InputError);
}

TEST_CASE("grid and timing JSON round trip") {
  const ScenarioGrid g = small_grid();
  const ScenarioGrid back = grid_from_json(grid_to_json(g));
  CHECK(back.conditions.size() == 3);
  CHECK(back.disturbances[2].fault_bus == 8);
  CHECK(grid_to_json(back) == grid_to_json(g));
  const TimingTemplate t = timing_from_json(timing_to_json(short_timing()));
  CHECK(t.t_end == 25.0);
  const EventSchedule ev = t.schedule({6, 0.08}, std::vector<int>{1, 0, 1});
  CHECK(ev.t_clear == doctest::Approx(1.08));
  CHECK(ev.fault_bus == 6);
}
