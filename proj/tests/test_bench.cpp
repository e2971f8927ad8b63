#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "adaguide/bench.hpp"
#include "adaguide/text.hpp"

using namespace adaguide;
using namespace adaguide::bench;

namespace {

std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("adaguide_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

RunConfig small_config() {
  RunConfig c;
  c.steps = 10;
  c.n_samples = 40;
  c.base_seed = 1000;
  return c;
}

std::string without_wall_time(const std::string& row) {
  auto fields = text::split(row, ',');
  fields.at(kWallTimeColumn).clear();
  return text::join(fields, ',');
}

std::vector<std::string> read_lines(const std::filesystem::path& path) {
  std::ifstream in(path);
  std::vector<std::string> lines;
  for (std::string line; std::getline(in, line);) lines.push_back(line);
  return lines;
}

}  // namespace

TEST_CASE("schedule spec strings") {
  CHECK(format_schedule_spec(parse_schedule_spec("vp-linear")) == "vp-linear:0.1:20");
  CHECK(format_schedule_spec(parse_schedule_spec("vp-linear:0.5:10")) == "vp-linear:0.5:10");
  CHECK(format_schedule_spec(parse_schedule_spec("vp-cosine")) == "vp-cosine:0.008");
  CHECK(format_schedule_spec(parse_schedule_spec("rectified-flow")) == "rectified-flow");
  CHECK_THROWS(parse_schedule_spec("vp-linear:1"));
  CHECK_THROWS(parse_schedule_spec("rectified-flow:2"));
  CHECK_THROWS(parse_schedule_spec("vp-linear:5:1"));
}

TEST_CASE("config file parsing") {
  const auto values = parse_config_json(R"({"schedule": "rectified-flow", "T": 12, "strategy": "step_ag",
      "p": 0.3, "w": 7, "late_score": "unconditional", "n": 5, "seed": 9, "diag": true, "condition": "class1"})");
  const auto c = run_config_from(values);
  CHECK(c.schedule == "rectified-flow");
  CHECK(c.steps == 12);
  CHECK(c.strategy.kind == StrategyKind::StepAg);
  CHECK(c.strategy.p == 0.3);
  CHECK(c.strategy.w == 7.0);
  CHECK(c.strategy.late_score == ScoreType::Unconditional);
  CHECK(c.n_samples == 5);
  CHECK(c.base_seed == 9);
  CHECK(c.diagnostic_dual_eval);
  CHECK(c.condition == "class1");

  CHECK_THROWS_AS(parse_config_json(R"({"bogus": 1})"), std::invalid_argument);
  CHECK_THROWS_AS(parse_config_json(R"([1, 2])"), std::invalid_argument);
  CHECK_THROWS_AS(parse_config_json(R"({"p": {"x": 1}})"), std::invalid_argument);
  CHECK_THROWS_AS(run_config_from(parse_config_json(R"({"p": [0.3, 0.5]})")), std::invalid_argument);
  CHECK_THROWS_AS(run_config_from(parse_config_json(R"({"p": 1.5})")), std::invalid_argument);
  CHECK_THROWS_AS(run_config_from(parse_config_json(R"({"T": 0})")), std::invalid_argument);
  CHECK_THROWS_AS(run_config_from(parse_config_json(R"({"strategy": "cfg"})")), std::invalid_argument);
}

TEST_CASE("sweep expansion over p and late score") {
  RunConfig base = small_config();
  base.strategy.kind = StrategyKind::StepAg;
  ConfigValues axes_values = {{"p", {"1.0", "0.5", "0.3"}}, {"late-score", {"conditional", "unconditional"}}};
  const auto cells = expand_sweep(base, sweep_axes_from(axes_values, base));
  REQUIRE(cells.size() == 5);
  CHECK(cells[0].strategy.p == 1.0);
  CHECK(cells[1].strategy.p == 0.5);
  CHECK(cells[1].strategy.late_score == ScoreType::Conditional);
  CHECK(cells[2].strategy.late_score == ScoreType::Unconditional);

  ConfigValues grid_values = {{"strategy", {"full_cfg", "step_ag"}},
                              {"p", {"0.5", "0.3"}},
                              {"late-score", {"conditional", "unconditional"}}};
  CHECK(expand_sweep(base, sweep_axes_from(grid_values, base)).size() == 5);

  ConfigValues w_values = {{"w", {"7", "15"}}};
  const auto w_cells = expand_sweep(base, sweep_axes_from(w_values, base));
  REQUIRE(w_cells.size() == 2);
  CHECK(w_cells[0].strategy.w == 7.0);
  CHECK(w_cells[1].strategy.w == 15.0);

  CHECK_THROWS_AS(sweep_axes_from({{"p", {}}}, base), std::invalid_argument);
  CHECK_THROWS_AS(sweep_axes_from({{"w", {""}}}, base), std::invalid_argument);
  SweepAxes empty = sweep_axes_from({}, base);
  empty.late_score.clear();
  CHECK_THROWS_AS(expand_sweep(base, empty), std::invalid_argument);
}

TEST_CASE("run_experiment accounting and CSV round trip") {
  const auto model = canonical_preset();
  RunConfig c = small_config();
  c.strategy = GuidanceStrategy::step_ag(0.5);
  const auto r = run_experiment(c, model);
  CHECK(r.cost.total_evals == 3LL * 40 * 15);
  CHECK(r.cost.evals_saved_ratio == 0.25);
  CHECK(r.quality.per_class.size() == 3);
  for (const auto& [label, q] : r.quality.per_class) {
    CHECK(q.n == 40);
    CHECK(q.w2.has_value());
  }
  CHECK(r.quality.alignment_acc >= 0.0);
  CHECK(r.quality.alignment_acc <= 1.0);

  const std::string row = format_csv_row(r, model);
  CHECK(text::split(row, ',').size() == csv_header(model).size());
  const auto parsed = parse_csv_row(row, model);
  CHECK(format_csv_row(parsed, model) == row);
  CHECK(parsed.cost.total_evals == r.cost.total_evals);
  CHECK(parsed.quality.per_class.at("class1").w2 == r.quality.per_class.at("class1").w2);
  CHECK_THROWS_AS(parse_csv_row("full_cfg,1", model), std::invalid_argument);
}

TEST_CASE("CSV header leading columns and per-class suffix") {
  const auto header = csv_header(canonical_preset());
  const std::vector<std::string> leading = {"strategy", "p", "w", "T", "scheduler", "late_score",
                                            "gamma_threshold", "lambda_threshold", "condition", "n_samples",
                                            "base_seed", "total_evals", "diagnostic_evals", "evals_saved_ratio",
                                            "mean_wall_ms", "alignment_acc"};
  CHECK(std::vector<std::string>(header.begin(), header.begin() + 16) == leading);
  CHECK(header[kWallTimeColumn] == "mean_wall_ms");
  CHECK(header[16] == "w2_class0");
  CHECK(header[17] == "mean_err_class0");
  CHECK(header[18] == "cov_err_class0");
}

TEST_CASE("identical runs give identical CSV rows and trace files") {
  const auto model = canonical_preset();
  const auto dir = scratch_dir("determinism");
  RunConfig c = small_config();
  c.strategy = GuidanceStrategy::similarity_ag(0.99);
  c.condition = "class2";
  c.diagnostic_dual_eval = true;

  c.csv_out = (dir / "a.csv").string();
  c.trace_dir = (dir / "traces_a").string();
  c.trace_count = 2;
  run_experiment(c, model);
  c.csv_out = (dir / "b.csv").string();
  c.trace_dir = (dir / "traces_b").string();
  run_experiment(c, model);

  const auto a = read_lines(dir / "a.csv");
  const auto b = read_lines(dir / "b.csv");
  REQUIRE(a.size() == 2);
  REQUIRE(b.size() == 2);
  CHECK(a[0] == b[0]);
  CHECK(without_wall_time(a[1]) == without_wall_time(b[1]));

  int traces = 0;
  for (const auto& entry : std::filesystem::directory_iterator(dir / "traces_a")) {
    const auto other = dir / "traces_b" / entry.path().filename();
    CHECK(read_lines(entry.path()) == read_lines(other));
    CHECK_NOTHROW(read_trace(entry.path()));
    ++traces;
  }
  CHECK(traces == 2);
  std::filesystem::remove_all(dir);
}

TEST_CASE("single-sample runs are flagged, not failed") {
  const auto model = canonical_preset();
  RunConfig c = small_config();
  c.n_samples = 1;
  const auto r = run_experiment(c, model);
  for (const auto& [label, q] : r.quality.per_class) {
    CHECK(q.n == 1);
    CHECK_FALSE(q.w2.has_value());
    CHECK_FALSE(q.cov_err.has_value());
  }
  const auto row = format_csv_row(r, model);
  CHECK(format_csv_row(parse_csv_row(row, model), model) == row);
}

TEST_CASE("cells differing only in strategy share prior noise") {
  const auto model = canonical_preset();
  RunConfig base = small_config();
  base.n_samples = 3;
  const auto dir = scratch_dir("seeds");
  base.trace_dir = dir.string();
  base.trace_count = 3;
  SweepAxes axes = sweep_axes_from({{"strategy", {"full_cfg", "step_ag"}}, {"p", {"0.3"}}, {"w", {"7", "15"}}}, base);
  const auto cells = expand_sweep(base, axes);
  REQUIRE(cells.size() == 4);
  const auto schedule = parse_schedule_spec(base.schedule);
  const auto grid = make_grid(schedule, base.steps);
  for (int k = 0; k < 3; ++k) {
    for (int i = 0; i < 3; ++i) {
      std::optional<Vector> reference;
      for (const auto& cell : cells) {
        const auto r = sample(model, schedule, grid, cell.strategy, model.component(k).label, sample_seed(cell, k, i));
        if (!reference) reference = r.trace.prior;
        CHECK(r.trace.prior == *reference);
      }
    }
  }
  std::filesystem::remove_all(dir);
}

TEST_CASE("SNR curve file") {
  std::stringstream out;
  emit_snr_curves(out, {NoiseSchedule::rectified_flow(), NoiseSchedule::vp_linear(), NoiseSchedule::vp_cosine()}, 50);
  std::string line;
  std::getline(out, line);
  CHECK(line == "grid,schedule,step_index,t,fraction,snr");
  std::map<std::string, std::vector<double>> curves;
  int rows = 0;
  while (std::getline(out, line)) {
    const auto f = text::split(line, ',');
    REQUIRE(f.size() == 6);
    const double t = text::parse_double(f[3]);
    const double snr = text::parse_double(f[5]);
    if (f[1] == "rectified-flow" && f[0] == "dense") CHECK(snr == (1.0 - t) / t);
    curves[f[0] + "/" + f[1]].push_back(snr);
    ++rows;
  }
  CHECK(rows == 3 * (1000 + 50));
  for (const auto& [name, curve] : curves) {
    for (std::size_t i = 1; i < curve.size(); ++i) REQUIRE(curve[i] > curve[i - 1]);
  }

  // Crossing of SNR = 1: half-way for rectified flow; the vp kinds cross where abar = 1/2.
  CHECK(snr_crossing_fraction(NoiseSchedule::rectified_flow(), 1000) == doctest::Approx(0.5).epsilon(5e-3));
  const double vp_fraction = snr_crossing_fraction(NoiseSchedule::vp_linear(), 1000);
  // abar = exp(-(0.1 t + 9.95 t^2)) = 1/2  =>  t* = root of 9.95 t^2 + 0.1 t - ln 2.
  const double t_star = (-0.1 + std::sqrt(0.01 + 4 * 9.95 * std::log(2.0))) / (2 * 9.95);
  CHECK(vp_fraction == doctest::Approx(1.0 - t_star).epsilon(2e-3));
}

TEST_CASE("gamma curves") {
  const MixtureModel single({{"only", Vector::Zero(2), Matrix::Identity(2, 2)}}, {1.0});
  RunConfig c = small_config();
  c.condition = "only";
  const auto rows = gamma_curves(c, single, 5);
  REQUIRE(rows.size() == 10);
  for (const auto& r : rows) {
    CHECK(r.mean_gamma == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(r.n == 5);
  }

  const auto model = canonical_preset();
  RunConfig one = small_config();
  one.condition = "class1";
  one.strategy = GuidanceStrategy::step_ag(0.5);
  const auto curve = gamma_curves(one, model, 1);
  const auto schedule = parse_schedule_spec(one.schedule);
  const auto traj = sample(model, schedule, make_grid(schedule, 10), one.strategy, "class1", one.base_seed, true);
  for (std::size_t i = 0; i < curve.size(); ++i) CHECK(curve[i].mean_gamma == *traj.trace.rows[i].gamma);

  std::stringstream buffer;
  write_gamma_curves(buffer, curve);
  const auto parsed = read_gamma_curves(buffer);
  REQUIRE(parsed.size() == curve.size());
  CHECK(parsed[3].mean_gamma == curve[3].mean_gamma);
  CHECK_THROWS_AS(gamma_curves(one, model, 0), std::invalid_argument);
}
