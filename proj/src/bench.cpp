#include "adaguide/bench.hpp"

#include <json.hpp>

#include <algorithm>
#include <fstream>
#include <limits>
#include <ostream>
#include <set>
#include <sstream>
#include <stdexcept>

#include "adaguide/sampler.hpp"
#include "adaguide/text.hpp"

namespace adaguide::bench {

namespace {

const std::set<std::string, std::less<>> kKnownKeys = {
    "model", "schedule", "T",    "strategy", "p",   "w",     "gamma",     "lambda",     "late-score",
    "condition", "n",   "seed", "diag",     "threads", "out", "trace-dir", "trace-count"};

std::string normalize_key(std::string key) {
  std::replace(key.begin(), key.end(), '_', '-');
  if (!kKnownKeys.contains(key)) throw std::invalid_argument("unknown config key '" + key + "'");
  return key;
}

bool parse_bool(std::string_view value) {
  if (value == "true" || value == "1" || value == "yes") return true;
  if (value == "false" || value == "0" || value == "no") return false;
  throw std::invalid_argument("not a boolean: '" + std::string(value) + "'");
}

int parse_positive_int(std::string_view value, std::string_view what) {
  const long long v = text::parse_int(value);
  if (v < 1 || v > std::numeric_limits<int>::max()) {
    throw std::invalid_argument(std::string(what) + " must be a positive integer");
  }
  return static_cast<int>(v);
}

bool uses_w(StrategyKind kind) {
  return kind != StrategyKind::ConditionalOnly && kind != StrategyKind::UnconditionalOnly;
}

bool uses_late_score(const GuidanceStrategy& s) {
  switch (s.kind) {
    case StrategyKind::StepAg: return s.p < 1.0;
    case StrategyKind::SnrAg:
    case StrategyKind::SimilarityAg: return true;
    default: return false;
  }
}

std::string field_if(bool present, double value) { return present ? text::format_double(value) : std::string(); }

std::optional<double> optional_double(const std::string& field) {
  if (field.empty()) return std::nullopt;
  return text::parse_double(field);
}

const std::string& single_value(const ConfigValues& values, const std::string& key) {
  const auto& list = values.at(key);
  if (list.size() != 1) throw std::invalid_argument("'" + key + "' expects a single value; use sweep for lists");
  return list.front();
}

template <typename T, typename Parse>
std::vector<T> axis(const ConfigValues& values, const std::string& key, T fallback, Parse parse) {
  const auto it = values.find(key);
  if (it == values.end()) return {fallback};
  std::vector<T> out;
  for (const auto& v : it->second) {
    if (!v.empty()) out.push_back(parse(v));
  }
  if (out.empty()) throw std::invalid_argument("sweep axis '" + key + "' is empty");
  return out;
}

}  // namespace

NoiseSchedule parse_schedule_spec(std::string_view spec) {
  const auto parts = text::split(spec, ':');
  const ScheduleKind kind = parse_schedule_kind(parts.front());
  switch (kind) {
    case ScheduleKind::VpLinear:
      if (parts.size() == 1) return NoiseSchedule::vp_linear();
      if (parts.size() == 3) return NoiseSchedule::vp_linear(text::parse_double(parts[1]), text::parse_double(parts[2]));
      break;
    case ScheduleKind::VpCosine:
      if (parts.size() == 1) return NoiseSchedule::vp_cosine();
      if (parts.size() == 2) return NoiseSchedule::vp_cosine(text::parse_double(parts[1]));
      break;
    case ScheduleKind::RectifiedFlow:
      if (parts.size() == 1) return NoiseSchedule::rectified_flow();
      break;
  }
  throw std::invalid_argument("malformed schedule spec '" + std::string(spec) + "'");
}

std::string format_schedule_spec(const NoiseSchedule& schedule) {
  switch (schedule.kind()) {
    case ScheduleKind::VpLinear:
      return "vp-linear:" + text::format_double(schedule.beta_min()) + ":" + text::format_double(schedule.beta_max());
    case ScheduleKind::VpCosine:
      return "vp-cosine:" + text::format_double(schedule.cosine_offset());
    case ScheduleKind::RectifiedFlow:
      return "rectified-flow";
  }
  throw std::logic_error("unreachable schedule kind");
}

void RunConfig::validate() const {
  parse_schedule_spec(schedule);
  if (steps < 1) throw std::invalid_argument("T must be >= 1");
  if (n_samples < 1) throw std::invalid_argument("n must be >= 1");
  if (threads < 0) throw std::invalid_argument("threads must be >= 0");
  if (trace_count < 0) throw std::invalid_argument("trace-count must be >= 0");
  if (condition.empty()) throw std::invalid_argument("condition must name a label or 'all'");
  strategy.validate();
}

ConfigValues parse_config_json(std::string_view source) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(source);
  } catch (const nlohmann::json::parse_error& e) {
    throw std::invalid_argument(std::string("malformed config: ") + e.what());
  }
  if (!doc.is_object()) throw std::invalid_argument("config must be a JSON object");
  auto scalar = [](const nlohmann::json& v, const std::string& key) -> std::string {
    if (v.is_string()) return v.get<std::string>();
    if (v.is_boolean()) return v.get<bool>() ? "true" : "false";
    if (v.is_number_integer()) return std::to_string(v.get<long long>());
    if (v.is_number()) return text::format_double(v.get<double>());
    throw std::invalid_argument("config key '" + key + "' must hold scalars");
  };
  ConfigValues values;
  for (const auto& [raw_key, value] : doc.items()) {
    const std::string key = normalize_key(raw_key);
    std::vector<std::string> list;
    if (value.is_array()) {
      for (const auto& v : value) list.push_back(scalar(v, key));
    } else {
      list.push_back(scalar(value, key));
    }
    values[key] = std::move(list);
  }
  return values;
}

ConfigValues load_config_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config file " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_config_json(buffer.str());
}

RunConfig run_config_from(const ConfigValues& values, RunConfig base) {
  RunConfig c = std::move(base);
  for (const auto& [raw_key, list] : values) {
    const std::string key = normalize_key(raw_key);
    const std::string& v = single_value(values, raw_key);
    if (key == "model") c.model_path = v;
    else if (key == "schedule") c.schedule = format_schedule_spec(parse_schedule_spec(v));
    else if (key == "T") c.steps = parse_positive_int(v, "T");
    else if (key == "strategy") c.strategy.kind = parse_strategy_kind(v);
    else if (key == "p") c.strategy.p = text::parse_double(v);
    else if (key == "w") c.strategy.w = text::parse_double(v);
    else if (key == "gamma") c.strategy.gamma_threshold = text::parse_double(v);
    else if (key == "lambda") c.strategy.lambda_threshold = text::parse_double(v);
    else if (key == "late-score") c.strategy.late_score = parse_score_type(v);
    else if (key == "condition") c.condition = v;
    else if (key == "n") c.n_samples = parse_positive_int(v, "n");
    else if (key == "seed") c.base_seed = static_cast<std::uint64_t>(text::parse_int(v));
    else if (key == "diag") c.diagnostic_dual_eval = parse_bool(v);
    else if (key == "threads") c.threads = static_cast<int>(text::parse_int(v));
    else if (key == "out") c.csv_out = v;
    else if (key == "trace-dir") c.trace_dir = v;
    else if (key == "trace-count") c.trace_count = static_cast<int>(text::parse_int(v));
  }
  c.strategy.validate();
  c.strategy = canonical_strategy(c.strategy);
  c.validate();
  return c;
}

GuidanceStrategy canonical_strategy(const GuidanceStrategy& s) {
  const GuidanceStrategy defaults;
  GuidanceStrategy c = defaults;
  c.kind = s.kind;
  switch (s.kind) {
    case StrategyKind::FullCfg:
      c.w = s.w;
      break;
    case StrategyKind::ConditionalOnly:
      break;
    case StrategyKind::UnconditionalOnly:
      c.late_score = ScoreType::Unconditional;
      break;
    case StrategyKind::StepAg:
      c.w = s.w;
      c.p = s.p;
      if (uses_late_score(s)) c.late_score = s.late_score;
      break;
    case StrategyKind::SnrAg:
      c.w = s.w;
      c.lambda_threshold = s.lambda_threshold;
      c.late_score = s.late_score;
      break;
    case StrategyKind::SimilarityAg:
      c.w = s.w;
      c.gamma_threshold = s.gamma_threshold;
      c.late_score = s.late_score;
      break;
  }
  return c;
}

std::uint64_t sample_seed(const RunConfig& config, int class_index, int i) {
  return config.base_seed + static_cast<std::uint64_t>(class_index) * static_cast<std::uint64_t>(config.n_samples) +
         static_cast<std::uint64_t>(i);
}

MixtureModel load_model(const RunConfig& config) {
  return config.model_path.empty() ? canonical_preset() : MixtureModel::load(config.model_path);
}

std::string cell_tag(const RunConfig& config) {
  const auto& s = config.strategy;
  std::string tag(to_string(s.kind));
  if (s.kind == StrategyKind::StepAg) tag += "_p" + text::format_double(s.p);
  if (s.kind == StrategyKind::SnrAg) tag += "_lambda" + text::format_double(s.lambda_threshold);
  if (s.kind == StrategyKind::SimilarityAg) tag += "_gamma" + text::format_double(s.gamma_threshold);
  if (uses_w(s.kind)) tag += "_w" + text::format_double(s.w);
  if (uses_late_score(s)) tag += "_" + std::string(to_string(s.late_score));
  tag += "_T" + std::to_string(config.steps) + "_" + config.schedule;
  std::replace(tag.begin(), tag.end(), ':', '_');
  return tag;
}

RunResult run_experiment(const RunConfig& config, const MixtureModel& model) {
  config.validate();
  const NoiseSchedule schedule = parse_schedule_spec(config.schedule);
  const TimestepGrid grid = make_grid(schedule, config.steps);

  std::vector<int> classes;
  if (config.condition == "all") {
    for (int k = 0; k < model.num_classes(); ++k) classes.push_back(k);
  } else {
    classes.push_back(model.class_index(config.condition));
  }

  std::vector<LabeledSample> samples;
  std::vector<SampleTrace> traces;
  SamplerOptions options{config.diagnostic_dual_eval, config.threads};
  for (int k : classes) {
    const std::string& label = model.component(k).label;
    auto batch = sample_batch(model, schedule, grid, config.strategy, label, config.n_samples,
                              sample_seed(config, k, 0), options);
    if (!config.trace_dir.empty()) {
      std::filesystem::create_directories(config.trace_dir);
      const int count = std::min(config.trace_count, config.n_samples);
      for (int i = 0; i < count; ++i) {
        const auto path = std::filesystem::path(config.trace_dir) /
                          (cell_tag(config) + "_" + label + "_" + std::to_string(i) + ".csv");
        write_trace(path, batch[static_cast<std::size_t>(i)].trace);
      }
    }
    for (auto& r : batch) {
      samples.push_back({std::move(r.x0), label});
      traces.push_back(std::move(r.trace));
    }
  }

  RunResult result{config, quality_report(samples, model), cost_report(traces, config.steps)};
  if (!config.csv_out.empty()) CsvWriter(config.csv_out, model).append(result);
  return result;
}

RunResult run_experiment(const RunConfig& config) { return run_experiment(config, load_model(config)); }

std::vector<std::string> csv_header(const MixtureModel& model) {
  std::vector<std::string> header = {"strategy",         "p",          "w",
                                     "T",                "scheduler",  "late_score",
                                     "gamma_threshold",  "lambda_threshold", "condition",
                                     "n_samples",        "base_seed",  "total_evals",
                                     "diagnostic_evals", "evals_saved_ratio", "mean_wall_ms",
                                     "alignment_acc"};
  for (const auto& component : model.classes()) {
    header.push_back("w2_" + component.label);
    header.push_back("mean_err_" + component.label);
    header.push_back("cov_err_" + component.label);
  }
  return header;
}

std::string format_csv_row(const RunResult& result, const MixtureModel& model) {
  const auto& c = result.config;
  const auto& s = c.strategy;
  std::vector<std::string> f = {
      std::string(to_string(s.kind)),
      field_if(s.kind == StrategyKind::StepAg, s.p),
      field_if(uses_w(s.kind), s.w),
      std::to_string(c.steps),
      c.schedule,
      uses_late_score(s) ? std::string(to_string(s.late_score)) : std::string(),
      field_if(s.kind == StrategyKind::SimilarityAg, s.gamma_threshold),
      field_if(s.kind == StrategyKind::SnrAg, s.lambda_threshold),
      c.condition,
      std::to_string(c.n_samples),
      std::to_string(c.base_seed),
      std::to_string(result.cost.total_evals),
      std::to_string(result.cost.diagnostic_evals),
      text::format_double(result.cost.evals_saved_ratio),
      text::format_double(result.cost.mean_wall_ms),
      text::format_double(result.quality.alignment_acc),
  };
  for (const auto& component : model.classes()) {
    const auto it = result.quality.per_class.find(component.label);
    if (it == result.quality.per_class.end()) {
      f.insert(f.end(), {"", "", ""});
      continue;
    }
    const auto& q = it->second;
    f.push_back(q.w2 ? text::format_double(*q.w2) : "");
    f.push_back(text::format_double(q.mean_err));
    f.push_back(q.cov_err ? text::format_double(*q.cov_err) : "");
  }
  return text::join(f, ',');
}

RunResult parse_csv_row(std::string_view row, const MixtureModel& model) {
  const auto f = text::split(row, ',');
  const std::size_t expected = 16 + 3 * static_cast<std::size_t>(model.num_classes());
  if (f.size() != expected) {
    throw std::invalid_argument("CSV row has " + std::to_string(f.size()) + " fields, expected " +
                                std::to_string(expected));
  }
  RunResult r;
  auto& c = r.config;
  auto& s = c.strategy;
  s.kind = parse_strategy_kind(f[0]);
  if (!f[1].empty()) s.p = text::parse_double(f[1]);
  if (!f[2].empty()) s.w = text::parse_double(f[2]);
  c.steps = static_cast<int>(text::parse_int(f[3]));
  c.schedule = format_schedule_spec(parse_schedule_spec(f[4]));
  if (!f[5].empty()) s.late_score = parse_score_type(f[5]);
  if (!f[6].empty()) s.gamma_threshold = text::parse_double(f[6]);
  if (!f[7].empty()) s.lambda_threshold = text::parse_double(f[7]);
  s = canonical_strategy(s);
  c.condition = f[8];
  c.n_samples = static_cast<int>(text::parse_int(f[9]));
  c.base_seed = static_cast<std::uint64_t>(text::parse_int(f[10]));
  r.cost.total_evals = text::parse_int(f[11]);
  r.cost.diagnostic_evals = text::parse_int(f[12]);
  r.cost.evals_saved_ratio = text::parse_double(f[13]);
  r.cost.mean_wall_ms = text::parse_double(f[14]);
  r.quality.alignment_acc = text::parse_double(f[15]);
  std::size_t i = 16;
  for (const auto& component : model.classes()) {
    const std::string& mean_err = f[i + 1];
    if (!mean_err.empty()) {
      ClassQuality q;
      q.n = c.n_samples;
      q.w2 = optional_double(f[i]);
      q.mean_err = text::parse_double(mean_err);
      q.cov_err = optional_double(f[i + 2]);
      r.quality.per_class.emplace(component.label, q);
    }
    i += 3;
  }
  return r;
}

CsvWriter::CsvWriter(const std::filesystem::path& path, const MixtureModel& model) : path_(path), model_(&model) {}

void CsvWriter::append(const RunResult& result) {
  const bool fresh = !std::filesystem::exists(path_) || std::filesystem::file_size(path_) == 0;
  if (path_.has_parent_path()) std::filesystem::create_directories(path_.parent_path());
  std::ofstream out(path_, std::ios::app | std::ios::binary);
  if (!out) throw std::runtime_error("cannot write CSV " + path_.string());
  if (fresh) out << text::join(csv_header(*model_), ',') << '\n';
  out << format_csv_row(result, *model_) << '\n';
}

SweepAxes sweep_axes_from(const ConfigValues& values, const RunConfig& base) {
  SweepAxes axes;
  const auto& s = base.strategy;
  axes.strategies = axis(values, "strategy", s.kind, [](const std::string& v) { return parse_strategy_kind(v); });
  axes.p = axis(values, "p", s.p, [](const std::string& v) { return text::parse_double(v); });
  axes.w = axis(values, "w", s.w, [](const std::string& v) { return text::parse_double(v); });
  axes.steps = axis(values, "T", base.steps, [](const std::string& v) { return parse_positive_int(v, "T"); });
  axes.gamma = axis(values, "gamma", s.gamma_threshold, [](const std::string& v) { return text::parse_double(v); });
  axes.lambda =
      axis(values, "lambda", s.lambda_threshold, [](const std::string& v) { return text::parse_double(v); });
  axes.late_score =
      axis(values, "late-score", s.late_score, [](const std::string& v) { return parse_score_type(v); });
  return axes;
}

std::vector<RunConfig> expand_sweep(const RunConfig& base, const SweepAxes& axes) {
  if (axes.strategies.empty() || axes.p.empty() || axes.w.empty() || axes.steps.empty() || axes.gamma.empty() ||
      axes.lambda.empty() || axes.late_score.empty()) {
    throw std::invalid_argument("every sweep axis needs at least one value");
  }
  std::vector<RunConfig> cells;
  std::set<std::string> seen;
  for (auto kind : axes.strategies)
    for (int steps : axes.steps)
      for (double w : axes.w)
        for (double p : axes.p)
          for (double gamma : axes.gamma)
            for (double lambda : axes.lambda)
              for (auto late : axes.late_score) {
                RunConfig cell = base;
                cell.steps = steps;
                GuidanceStrategy s;
                s.kind = kind;
                s.w = w;
                s.p = p;
                s.gamma_threshold = gamma;
                s.lambda_threshold = lambda;
                s.late_score = late;
                cell.strategy = canonical_strategy(s);
                cell.validate();
                if (seen.insert(cell_tag(cell)).second) cells.push_back(std::move(cell));
              }
  return cells;
}

std::vector<RunResult> sweep(const RunConfig& base, const SweepAxes& axes, const MixtureModel& model) {
  std::vector<RunResult> results;
  for (const auto& cell : expand_sweep(base, axes)) results.push_back(run_experiment(cell, model));
  return results;
}

void emit_snr_curves(std::ostream& out, const std::vector<NoiseSchedule>& schedules, int steps) {
  if (schedules.empty()) throw std::invalid_argument("no schedules given");
  out << "grid,schedule,step_index,t,fraction,snr\n";
  for (const auto& [grid_name, grid_steps] : {std::pair{"dense", kDenseSteps}, std::pair{"inference", steps}}) {
    for (const auto& schedule : schedules) {
      const auto grid = make_grid(schedule, grid_steps);
      for (int i = 1; i <= grid.size(); ++i) {
        const double t = grid.at_step(i);
        out << grid_name << ',' << format_schedule_spec(schedule) << ',' << i << ',' << text::format_double(t) << ','
            << text::format_double(static_cast<double>(i) / grid_steps) << ','
            << text::format_double(schedule.snr(t)) << '\n';
      }
    }
  }
}

void emit_snr_curves(const std::filesystem::path& path, const std::vector<NoiseSchedule>& schedules, int steps) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  emit_snr_curves(out, schedules, steps);
}

double snr_crossing_fraction(const NoiseSchedule& schedule, int steps, double lambda_threshold) {
  return static_cast<double>(snr_crossing_step(schedule, make_grid(schedule, steps), lambda_threshold)) / steps;
}

std::vector<GammaCurveRow> gamma_curves(const RunConfig& config, const MixtureModel& model, int n_avg) {
  if (n_avg < 1) throw std::invalid_argument("n_avg must be >= 1");
  config.validate();
  const NoiseSchedule schedule = parse_schedule_spec(config.schedule);
  const TimestepGrid grid = make_grid(schedule, config.steps);

  std::vector<GammaCurveRow> rows(static_cast<std::size_t>(grid.size()));
  std::vector<double> sums(rows.size(), 0.0);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    rows[i].min_gamma = std::numeric_limits<double>::infinity();
    rows[i].max_gamma = -std::numeric_limits<double>::infinity();
  }
  for (int j = 0; j < n_avg; ++j) {
    const std::string& label = config.condition == "all" ? model.component(j % model.num_classes()).label
                                                         : config.condition;
    const auto result = sample(model, schedule, grid, config.strategy, label,
                               config.base_seed + static_cast<std::uint64_t>(j), true);
    for (std::size_t i = 0; i < rows.size(); ++i) {
      const auto& rec = result.trace.rows[i];
      auto& row = rows[i];
      row.step_index = rec.step_index;
      row.t = rec.t;
      row.snr = rec.snr;
      if (!rec.gamma) continue;
      sums[i] += *rec.gamma;
      row.min_gamma = std::min(row.min_gamma, *rec.gamma);
      row.max_gamma = std::max(row.max_gamma, *rec.gamma);
      ++row.n;
    }
  }
  for (std::size_t i = 0; i < rows.size(); ++i) {
    rows[i].mean_gamma = rows[i].n > 0 ? sums[i] / rows[i].n : std::numeric_limits<double>::quiet_NaN();
  }
  return rows;
}

void write_gamma_curves(std::ostream& out, const std::vector<GammaCurveRow>& rows) {
  out << kGammaHeader << '\n';
  for (const auto& r : rows) {
    out << r.step_index << ',' << text::format_double(r.t) << ',' << text::format_double(r.snr) << ','
        << text::format_double(r.mean_gamma) << ',' << text::format_double(r.min_gamma) << ','
        << text::format_double(r.max_gamma) << ',' << r.n << '\n';
  }
}

std::vector<GammaCurveRow> read_gamma_curves(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line != kGammaHeader) throw std::invalid_argument("gamma curve header mismatch");
  std::vector<GammaCurveRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto f = text::split(line, ',');
    if (f.size() != 7) throw std::invalid_argument("gamma curve row has wrong field count");
    rows.push_back({static_cast<int>(text::parse_int(f[0])), text::parse_double(f[1]), text::parse_double(f[2]),
                    text::parse_double(f[3]), text::parse_double(f[4]), text::parse_double(f[5]),
                    static_cast<int>(text::parse_int(f[6]))});
  }
  return rows;
}

}  // namespace adaguide::bench
