#include <doctest.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "bathlab/error.hpp"
#include "bathlab/experiment.hpp"
#include "json.hpp"

using namespace bathlab;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

const std::string worked_model =
    R"("a": 9, "b": 1, "omega_sq": 0.3333333333333333, "coupling_rhs": 4, "kT": 1)";

std::string config(const std::string& kind, const std::string& extra = "") {
  return "{\"kind\": \"" + kind + "\", " + worked_model + (extra.empty() ? "" : ", " + extra) +
         "}";
}

// Field names reported by a ValidationError, or empty if none was thrown.
std::vector<std::string> rejected_fields(const std::string& text) {
  try {
    parse_config(text);
  } catch (const ValidationError& e) {
    std::vector<std::string> out;
    for (const auto& fe : e.errors()) out.push_back(fe.field);
    return out;
  }
  return {};
}

bool contains(const std::vector<std::string>& v, const std::string& s) {
  return std::find(v.begin(), v.end(), s) != v.end();
}

std::vector<std::vector<std::string>> csv_rows(const std::string& text) {
  std::vector<std::vector<std::string>> rows;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    std::vector<std::string> cells;
    std::istringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) cells.push_back(cell);
    rows.push_back(std::move(cells));
  }
  return rows;
}

fs::path scratch_dir(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("bathlab_cli_test_" + name);
  fs::remove_all(dir);
  return dir;
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(BATHLAB_CLI_PATH) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

void write_file(const fs::path& p, const std::string& text) {
  std::ofstream f(p);
  f << text;
}

}  // namespace

TEST_CASE("config parsing rejects malformed documents") {
  CHECK_THROWS_AS(parse_config("{not json"), ParseError);
  CHECK_THROWS_AS(parse_config("[1, 2]"), ParseError);
}

TEST_CASE("validation names the offending field") {
  // missing omega
  auto f = rejected_fields(R"({"kind": "roots", "a": 9, "b": 1, "epsilon": 1})");
  REQUIRE(f.size() == 1);
  CHECK(f[0] == "omega");

  f = rejected_fields(R"({"kind": "roots", "a": 9, "b": 1, "omega": 1, "epsilon": -0.5})");
  REQUIRE(f.size() == 1);
  CHECK(f[0] == "epsilon");

  // Errors are collected, not reported one at a time.
  f = rejected_fields(
      R"({"kind": "kernel", "a": -1, "b": 1, "omega": 1, "epsilon": 1, "kT": 0,
          "times": [1, 0.5], "colour": "red"})");
  CHECK(contains(f, "a"));
  CHECK(contains(f, "kT"));
  CHECK(contains(f, "times"));
  CHECK(contains(f, "colour"));

  // Keys belonging to another kind are unknown here.
  f = rejected_fields(config("roots", R"("times": [1, 2])"));
  CHECK(contains(f, "times"));

  CHECK(contains(rejected_fields(config("nonsense")), "kind"));
  CHECK(contains(rejected_fields(R"({"kind": "roots", "a": 9, "b": 1, "omega": 1,
                                     "epsilon": 1, "coupling_rhs": 4})"),
                 "coupling_rhs"));
  CHECK(contains(rejected_fields(config("ensemble", R"("times": [1], "sample_count": 1)")),
                 "sample_count"));
  CHECK(contains(rejected_fields(config("ensemble", R"("times": [1], "method": "euler")")),
                 "method"));
  CHECK(contains(rejected_fields(config("decay-fit", R"("times": [1, 2, 3])")), "times"));

  // Kind from the caller, and a mismatch between the two.
  const std::string no_kind = "{" + worked_model + "}";
  CHECK(parse_config(no_kind, ExperimentKind::Roots).kind == ExperimentKind::Roots);
  CHECK_THROWS_AS(parse_config(config("roots"), ExperimentKind::Kernel), ValidationError);
  CHECK_THROWS_AS(parse_config(no_kind), ValidationError);
}

TEST_CASE("ValidationError reports its first field") {
  try {
    parse_config(R"({"kind": "roots", "a": 9, "b": 1, "omega": 1, "epsilon": -1})");
    FAIL("expected ValidationError");
  } catch (const ValidationError& e) {
    CHECK(e.field() == "epsilon");
    CHECK(std::string(e.what()).find("epsilon") != std::string::npos);
  }
}

TEST_CASE("time grids and derived defaults are resolved at parse time") {
  auto cfg = parse_config(config("kernel", R"("times": {"start": 0, "stop": 2, "count": 5})"));
  REQUIRE(cfg.times.size() == 5);
  CHECK(cfg.times[2] == doctest::Approx(1.0));
  CHECK(cfg.times.back() == 2.0);

  cfg = parse_config(config("runaway"));
  CHECK(cfg.nu_max == doctest::Approx(150.0));  // 50·√(a/b)
  CHECK(cfg.epsilon == doctest::Approx(std::sqrt(8.0 / M_PI)));

  cfg = parse_config(config("regime-scan"));
  CHECK(cfg.eps_sq_max == doctest::Approx(2.0 * 2.0 * 3.0 / (3.0 * M_PI)));

  cfg = parse_config(config("decay-fit"));
  REQUIRE(cfg.times.size() == 11);
  CHECK(cfg.times.front() == doctest::Approx(10.0 / 0.84139987));
  CHECK(cfg.times.back() == doctest::Approx(20.0 / 0.84139987));

  // No default window without a runaway root.
  CHECK_THROWS_AS(parse_config(R"({"kind": "decay-fit", "a": 9, "b": 1, "omega": 1,
                                   "epsilon": 0.1})"),
                  ValidationError);
}

TEST_CASE("roots experiment reproduces the worked example") {
  const auto out = run_experiment(parse_config(config("roots")));
  CHECK(out.passed);
  const auto s = json::parse(out.summary);
  CHECK(s["derived"]["regime"] == "LargeCoupling");
  const auto& roots = s["derived"]["roots"];
  CHECK(roots[0]["re"].get<double>() == doctest::Approx(-2.27227008).epsilon(1e-8));
  CHECK(roots[1]["re"].get<double>() == doctest::Approx(-1.56912979).epsilon(1e-8));
  CHECK(roots[2]["re"].get<double>() == doctest::Approx(0.84139987).epsilon(1e-8));
  CHECK(s["derived"]["lambda3"].get<double>() == doctest::Approx(0.84139987).epsilon(1e-8));
  CHECK(s["derived"]["separation_hypothesis"] == true);
  CHECK(s["derived"]["positive_definite"] == false);

  const auto rows = csv_rows(out.csv);
  REQUIRE(rows.size() == 4);
  CHECK(rows[0] == std::vector<std::string>{"index", "re", "im"});
}

TEST_CASE("kernel and covariance experiments pass their checks") {
  auto out = run_experiment(parse_config(config("kernel", R"("times": [0, 0.5, 1, 3])")));
  CHECK(out.passed);
  auto rows = csv_rows(out.csv);
  CHECK(rows[0] == std::vector<std::string>{"t", "Q", "Q_numeric", "Q_prime", "error_estimate"});
  CHECK(rows.size() == 5);

  out = run_experiment(
      parse_config(config("covariance", R"("q0": 1, "times": [0, 0.5, 1, 2, 5])")));
  CHECK(out.passed);
  rows = csv_rows(out.csv);
  CHECK(rows[0] == std::vector<std::string>{"t", "A", "B", "C", "detACB2"});
  CHECK(rows[1][1] == "0");
  const auto s = json::parse(out.summary);
  bool closed_checked = false;
  for (const auto& c : s["checks"]) closed_checked |= c["name"] == "closed_form_agreement";
  CHECK(closed_checked);
}

TEST_CASE("decay-fit recovers the growing root") {
  const auto out = run_experiment(parse_config(config("decay-fit", R"("q0": 1)")));
  CHECK(out.passed);
  const auto s = json::parse(out.summary);
  CHECK(s["derived"]["fitted_rate"].get<double>() == doctest::Approx(-0.8414).epsilon(0.02));
}

TEST_CASE("density experiment is normalized and decays") {
  const auto out = run_experiment(parse_config(
      config("density", R"("q0": 1, "times": {"start": 4, "stop": 12, "count": 5})")));
  CHECK(out.passed);
  const auto s = json::parse(out.summary);
  CHECK(s["derived"]["fits"][0]["rate"].get<double>() ==
        doctest::Approx(-0.84139987).epsilon(0.02));
}

TEST_CASE("ensemble reruns are byte-identical") {
  const auto cfg = parse_config(config(
      "ensemble", R"("q0": 1, "times": [0.5, 1], "n": 64, "nu_max": 60, "sample_count": 2,
                     "seed": 7)"));
  const auto a = run_experiment(cfg);
  const auto b = run_experiment(cfg);
  CHECK(a.csv == b.csv);
  CHECK(a.summary == b.summary);
  const auto rows = csv_rows(a.csv);
  CHECK(rows[0] == std::vector<std::string>{"t", "mean_q", "se_q", "mean_p", "se_p", "var_q",
                                            "var_p", "cov_qp"});
  CHECK(rows.size() == 3);

  auto other = cfg;
  other.seed = 8;
  CHECK(run_experiment(other).csv != a.csv);

  // Small runs skip the statistical law check with a warning.
  const auto s = json::parse(a.summary);
  CHECK(s["warnings"].size() == 1);
}

TEST_CASE("ensemble warns past the recurrence time") {
  // n = 8 over [0, 8]: Δω = 1, recurrence 2π.
  const auto cfg = parse_config(config(
      "ensemble", R"("times": [1, 7], "n": 8, "nu_max": 8, "sample_count": 2)"));
  const auto s = json::parse(run_experiment(cfg).summary);
  bool found = false;
  for (const auto& w : s["warnings"]) {
    found |= w.get<std::string>().find("recurrence") != std::string::npos;
  }
  CHECK(found);
}

TEST_CASE("summary round trip reproduces the run") {
  for (const std::string text :
       {config("roots"), config("kernel", R"("times": [0.25, 1])"),
        config("ensemble", R"("times": [0.5], "n": 16, "nu_max": 20, "sample_count": 3)"),
        config("decay-fit", R"("q0": 1, "points": [[0, 0], [0.3, -0.2]])")}) {
    const auto cfg = parse_config(text);
    const auto first = run_experiment(cfg);
    const auto again = parse_config(first.summary);
    CHECK(config_to_json(again) == config_to_json(cfg));
    const auto second = run_experiment(again);
    CHECK(second.csv == first.csv);
    CHECK(second.summary == first.summary);
  }
}

TEST_CASE("regime scan flips at the positivity bound") {
  const auto out = run_experiment(parse_config(config("regime-scan")));
  CHECK(out.passed);
  const auto rows = csv_rows(out.csv);
  REQUIRE(rows.size() == 102);  // header + 101 points
  CHECK(rows[0][0] == "eps_sq");
  CHECK(rows[0][7] == "lambda3");

  // Point 51 is the bound itself; everything before is below, after is above.
  CHECK(rows[51][5] == "Boundary");
  for (std::size_t i = 1; i <= 50; ++i) CHECK(rows[i][5] == "SmallCoupling");
  for (std::size_t i = 52; i <= 101; ++i) CHECK(rows[i][5] == "LargeCoupling");
  for (std::size_t i = 1; i <= 101; ++i) CHECK(rows[i][6] == rows[i][11]);

  // ε = 0: the cubic factors as (x + κ)(x² + ω²).
  CHECK(std::stod(rows[1][0]) == 0.0);
  CHECK(std::stod(rows[1][2]) == doctest::Approx(-3.0));
  CHECK(std::stod(rows[1][3]) == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(std::abs(std::stod(rows[1][9])) == doctest::Approx(std::sqrt(1.0 / 3.0)));
  CHECK(rows[1][7] == "nan");
}

TEST_CASE("runaway experiment grows at the positive root") {
  const auto out = run_experiment(parse_config(config("runaway", R"("q0": 1, "n": 1000)")));
  CHECK(out.passed);
  const auto s = json::parse(out.summary);
  CHECK(s["derived"]["rate"].get<double>() == doctest::Approx(0.84139987).epsilon(0.02));

  // Runaway needs the runaway regime.
  CHECK_THROWS_AS(run_experiment(parse_config(
                      R"({"kind": "runaway", "a": 9, "b": 1, "omega": 1, "epsilon": 0.1})")),
                  RegimeMismatch);
}

TEST_CASE("outputs are written per format") {
  const auto cfg = parse_config(config("roots"));
  const auto out = run_experiment(cfg);
  const auto dir = scratch_dir("formats");

  auto paths = write_outputs(out, cfg, dir, OutputFormat::Both);
  REQUIRE(paths.size() == 2);
  CHECK(paths[0] == dir / "roots.csv");
  CHECK(paths[1] == dir / "roots.json");
  std::ifstream f(paths[0]);
  std::string text((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  CHECK(text == out.csv);

  fs::remove_all(dir);
  CHECK(write_outputs(out, cfg, dir, OutputFormat::Csv).size() == 1);
  CHECK_FALSE(fs::exists(dir / "roots.json"));

  // A regular file in the way of the output directory.
  const auto blocker = scratch_dir("blocker");
  write_file(blocker, "x");
  CHECK_THROWS_AS(write_outputs(out, cfg, blocker / "sub", OutputFormat::Both), IoError);
  fs::remove(blocker);
  fs::remove_all(dir);
}

TEST_CASE("command-line exit codes") {
  const auto dir = scratch_dir("exit");
  fs::create_directories(dir);
  const auto good = dir / "roots.json";
  write_file(good, config("roots"));
  const auto out = (dir / "out").string();

  CHECK(run_cli("roots -c " + good.string() + " -o " + out) == 0);
  CHECK(fs::exists(fs::path(out) / "roots.csv"));
  CHECK(fs::exists(fs::path(out) / "roots.json"));

  // usage and config errors
  CHECK(run_cli("") == 2);
  CHECK(run_cli("roots") == 2);
  CHECK(run_cli("kernel -c " + good.string() + " -o " + out) == 2);  // kind mismatch
  const auto bad = dir / "bad.json";
  write_file(bad, R"({"kind": "roots", "a": 9, "b": 1, "epsilon": 1})");
  CHECK(run_cli("roots -c " + bad.string() + " -o " + out) == 2);

  // model error: no runaway root
  const auto small = dir / "small.json";
  write_file(small, R"({"kind": "runaway", "a": 9, "b": 1, "omega": 1, "epsilon": 0.1})");
  CHECK(run_cli("runaway -c " + small.string() + " -o " + out) == 3);

  // I/O errors
  CHECK(run_cli("roots -c " + (dir / "missing.json").string()) == 4);
  CHECK(run_cli("roots -c " + good.string() + " -o " + good.string() + "/sub") == 4);

  // --seed overrides the config
  const auto ens = dir / "ensemble.json";
  write_file(ens, config("ensemble", R"("times": [0.5], "n": 16, "nu_max": 20,
                                        "sample_count": 2, "seed": 1)"));
  CHECK(run_cli("ensemble -c " + ens.string() + " -o " + out + " --seed 99 --format json") == 0);
  std::ifstream f(fs::path(out) / "ensemble.json");
  const auto s = json::parse(f);
  CHECK(s["config"]["seed"] == 99);

  fs::remove_all(dir);
}
