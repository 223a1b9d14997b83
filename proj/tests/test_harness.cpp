#include <doctest.h>

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <string>

#include "mtfqi/harness.hpp"

using namespace mtfqi;

namespace {

struct TempFile {
  std::string path;
  explicit TempFile(const std::string& name) : path("/tmp/mtfqi_harness_" + name) {}
  ~TempFile() { std::remove(path.c_str()); }
};

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  return std::string((std::istreambuf_iterator<char>(in)),
                     std::istreambuf_iterator<char>());
}

ExperimentConfig tiny_config() {
  ExperimentConfig config;
  config.axis = "n";
  config.values = {20, 40};
  config.fixed.num_states = 3;
  config.fixed.num_actions = 2;
  config.fixed.latent_dim = 2;
  config.fixed.num_tasks = 2;
  config.fixed.horizon = 2;
  config.fixed.num_encoders = 2;
  config.seeds = {1, 2, 3, 4, 5};
  return config;
}

int count_occurrences(const std::string& text, const std::string& needle) {
  int count = 0;
  for (std::size_t pos = text.find(needle); pos != std::string::npos;
       pos = text.find(needle, pos + needle.size()))
    ++count;
  return count;
}

}  // namespace

TEST_CASE("slope fit recovers exact power laws") {
  std::vector<double> x = {1, 2, 4, 8, 16, 32};
  std::vector<double> inv_sqrt, cubic;
  for (double v : x) {
    inv_sqrt.push_back(3.7 / std::sqrt(v));
    cubic.push_back(0.2 * v * v * v);
  }
  const SlopeFit a = fit_loglog_slope(x, inv_sqrt);
  CHECK(a.slope == doctest::Approx(-0.5).epsilon(1e-9));
  CHECK(a.r_squared == doctest::Approx(1.0).epsilon(1e-12));
  const SlopeFit b = fit_loglog_slope(x, cubic);
  CHECK(b.slope == doctest::Approx(3.0).epsilon(1e-9));
}

TEST_CASE("slope fit excludes non-positive responses and validates input") {
  const std::vector<double> x = {1, 2, 4, 8};
  const std::vector<double> y = {0.0, 1.0, 0.5, 0.25};
  const SlopeFit fit = fit_loglog_slope(x, y);
  CHECK(fit.excluded == 1);
  CHECK(fit.slope == doctest::Approx(-1.0).epsilon(1e-9));
  CHECK_THROWS_AS(fit_loglog_slope(std::vector<double>{1, 2}, {0.0, 0.0}),
                  std::runtime_error);
  CHECK_THROWS_AS(fit_loglog_slope(std::vector<double>{1}, {1.0, 2.0}),
                  std::invalid_argument);
}

TEST_CASE("experiment config validation") {
  ExperimentConfig config = tiny_config();
  CHECK_NOTHROW(config.validate());

  config.values = {20};
  CHECK_THROWS_AS(config.validate(), std::invalid_argument);
  config = tiny_config();
  config.values = {40, 20};
  CHECK_THROWS_AS(config.validate(), std::invalid_argument);
  config = tiny_config();
  config.seeds = {1, 2};
  CHECK_THROWS_AS(config.validate(), std::invalid_argument);
  config = tiny_config();
  config.axis = "gamma";
  CHECK_THROWS_AS(config.validate(), std::invalid_argument);
}

TEST_CASE("experiment config round trips through JSON") {
  TempFile file("config.json");
  ExperimentConfig config = tiny_config();
  config.fixed.corruption = 0.4;
  config.fixed.behavior = BehaviorSpec::parse("eps:0.3");
  save_experiment_config(config, file.path);
  const ExperimentConfig loaded = load_experiment_config(file.path);
  CHECK(loaded.axis == config.axis);
  CHECK(loaded.values == config.values);
  CHECK(loaded.seeds == config.seeds);
  CHECK(loaded.fixed.corruption == config.fixed.corruption);
  CHECK(loaded.fixed.behavior.to_string() == "eps:0.3");
  CHECK(loaded.fixed.num_states == 3);
}

TEST_CASE("run_cell survives failures by recording an error row") {
  const FixedParams fixed = tiny_config().fixed;
  const CellResult cell = run_cell(fixed, "T", -3, 1);  // invalid task count
  CHECK_FALSE(cell.row.ok);
  CHECK(!cell.row.error.empty());
  CHECK(std::isnan(cell.row.d1_opt));
}

TEST_CASE("sweep rows come back in deterministic order and rerun identically") {
  const ExperimentConfig config = tiny_config();
  const std::vector<CellResult> cells = run_sweep(config);
  REQUIRE(cells.size() == config.values.size() * config.seeds.size());
  std::size_t i = 0;
  for (int value : config.values)
    for (std::uint64_t seed : config.seeds) {
      CHECK(cells[i].row.axis_value == value);
      CHECK(cells[i].row.seed == seed);
      CHECK(cells[i].row.ok);
      ++i;
    }

  TempFile a("sweep_a.csv"), b("sweep_b.csv");
  write_csv(sweep_rows(cells), a.path);
  write_csv(sweep_rows(run_sweep(config)), b.path);
  CHECK(slurp(a.path) == slurp(b.path));
  CHECK(!slurp(a.path).empty());
}

TEST_CASE("thread count does not change the CSV bytes") {
  const ExperimentConfig config = tiny_config();
  TempFile one("threads1.csv"), many("threads4.csv");
  setenv("MTFQI_THREADS", "1", 1);
  write_csv(sweep_rows(run_sweep(config)), one.path);
  setenv("MTFQI_THREADS", "4", 1);
  write_csv(sweep_rows(run_sweep(config)), many.path);
  unsetenv("MTFQI_THREADS");
  CHECK(slurp(one.path) == slurp(many.path));
}

TEST_CASE("csv round trips") {
  const ExperimentConfig config = tiny_config();
  const std::vector<SweepRow> rows = sweep_rows(run_sweep(config));
  TempFile file("roundtrip.csv");
  write_csv(rows, file.path);
  const std::vector<SweepRow> loaded = read_csv(file.path);
  REQUIRE(loaded.size() == rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    CHECK(loaded[i].axis_value == rows[i].axis_value);
    CHECK(loaded[i].seed == rows[i].seed);
    CHECK(loaded[i].d1_opt == rows[i].d1_opt);
    CHECK(loaded[i].horizon_bound == rows[i].horizon_bound);
    CHECK(loaded[i].ok == rows[i].ok);
  }
  TempFile bad("bad.csv");
  {
    std::ofstream out(bad.path);
    out << "not,a,sweep\n";
  }
  CHECK_THROWS_AS(read_csv(bad.path), std::runtime_error);
}

TEST_CASE("plots are deterministic and reflect the data") {
  TempFile csv("plot.csv");
  {
    std::ofstream out(csv.path);
    out << "axis,axis_value,seed,d1_opt,d1_beh,stage_h_mse,fixed_stage_bound,"
           "horizon_bound,lambda_max,status\n";
    out << "T,2,1,0.5,0.6,0.1,nan,nan,2,ok\n";
    out << "T,8,1,0.25,0.3,0.05,nan,nan,2,ok\n";
  }
  TempFile svg1("plot1.svg"), svg2("plot2.svg");
  emit_plot(csv.path, "T", "d1_opt", svg1.path);
  emit_plot(csv.path, "T", "d1_opt", svg2.path);
  const std::string image = slurp(svg1.path);
  CHECK(image == slurp(svg2.path));
  CHECK(count_occurrences(image, "<circle") == 2);
  CHECK(count_occurrences(image, "class=\"mean\"") == 1);
  CHECK(count_occurrences(image, "slope = ") == 1);

  CHECK_THROWS_AS(emit_plot(csv.path, "n", "d1_opt", svg1.path), std::runtime_error);
}

TEST_CASE("missing response column is named in the error") {
  TempFile csv("cols.csv");
  {
    std::ofstream out(csv.path);
    out << "axis,axis_value,seed,d1_opt,d1_beh,stage_h_mse,fixed_stage_bound,"
           "horizon_bound,lambda_max,status\n";
    out << "T,2,1,0.5,0.6,0.1,1,1,2,ok\n";
    out << "T,4,1,0.4,0.5,0.1,1,1,2,ok\n";
  }
  TempFile svg("cols.svg");
  CHECK_THROWS_WITH_AS(emit_plot(csv.path, "T", "delta_matrix", svg.path),
                       doctest::Contains("delta_matrix"), std::invalid_argument);
}
