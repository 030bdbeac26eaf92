#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

namespace fs = std::filesystem;

namespace {

struct Run {
  int code;
  std::string output;
};

fs::path work_dir() {
  static const fs::path dir = [] {
    const fs::path d = fs::temp_directory_path() / "tacoord_cli_test";
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

Run run(const std::string& args) {
  const fs::path log = work_dir() / "last_run.log";
  const std::string cmd = std::string("\"") + TACOORD_CLI + "\" " + args + " > \"" + log.string() + "\" 2>&1";
  const int status = std::system(cmd.c_str());
  std::ifstream in(log);
  std::stringstream ss;
  ss << in.rdbuf();
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, ss.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::size_t count_lines(const std::string& s, bool skip_comments = true) {
  std::size_t n = 0;
  std::istringstream in(s);
  for (std::string line; std::getline(in, line);) {
    if (line.empty() || (skip_comments && line[0] == '#')) continue;
    ++n;
  }
  return n;
}

std::string case_path() { return std::string(TACOORD_DATA_DIR) + "/two_area.json"; }

// Small experiment: two conditions, one valid and one unknown fault bus.
fs::path write_config() {
  const fs::path dir = work_dir();
  std::ofstream(dir / "grid.json") << R"({"conditions":[{"load_scale":0.95,"gen_scale":0.95},{"load_scale":1.05,"gen_scale":1.05}],
    "disturbances":[{"fault_bus":1,"duration":0.05},{"fault_bus":99,"duration":0.05}]})";
  std::ofstream(dir / "experiment.json") << R"({"case":")" << case_path() << R"(","grid":"grid.json",
    "dataset":"dataset.jsonl","weights":"weights.json","out":"out",
    "timing":{"t_fault":1.0,"activation_delay":0.5,"t_end":25.0},
    "mlp":{"hidden":[8],"learning_rate":0.01,"momentum":0.9,"epochs":100,"patience":50},
    "folds":4,"validation_folds":1,"seed":3})";
  return dir / "experiment.json";
}

}  // namespace

TEST_CASE("missing input file exits with code 2 and names the path") {
  const Run r = run("powerflow --case /nonexistent/case.json");
  CHECK(r.code == 2);
  CHECK(r.output.find("/nonexistent/case.json") != std::string::npos);
}

TEST_CASE("unknown option is a usage error") {
  CHECK(run("powerflow --no-such-flag").code == 2);
  CHECK(run("--help").code == 0);
}

TEST_CASE("powerflow prints the operating point") {
  const Run r = run("powerflow --case \"" + case_path() + "\"");
  CHECK(r.code == 0);
  CHECK(r.output.find("bus") != std::string::npos);
}

TEST_CASE("collect, train, coordinate, compare and delays end to end") {
  const fs::path cfg = write_config();
  const std::string base = "--quiet --config \"" + cfg.string() + "\" ";
  const fs::path dir = work_dir();

  const Run c = run(base + "collect");
  REQUIRE(c.code == 0);
  CHECK(c.output.find("99") != std::string::npos);
  CHECK(count_lines(slurp(dir / "dataset.jsonl")) == 1 + 2 * 8);

  REQUIRE(run(base + "train").code == 0);
  CHECK(fs::exists(dir / "weights.json"));

  const Run k = run(base + "coordinate --fault-bus 1 --load-scale 1.0");
  REQUIRE(k.code == 0);
  CHECK(count_lines(slurp(dir / "out" / "predictions.csv")) == 1 + 8);
  CHECK(fs::exists(dir / "out" / "decision.json"));

  REQUIRE(run(base + "compare --fault-bus 1 --policies NC").code == 0);
  CHECK(count_lines(slurp(dir / "out" / "compare.csv")) == 2);

  REQUIRE(run(base + "delays --fault-bus 1 --delays 0.2").code == 0);
  const std::string delays = slurp(dir / "out" / "delays.csv");
  CHECK(count_lines(delays) == 3);
  CHECK(delays.find(",inf,") != std::string::npos);

  CHECK(run(base + "compare --fault-bus 99 --policies NC").code == 2);
  CHECK(run(base + "compare --fault-bus 1 --policies best").code == 2);
}
