#include "adaguide/sampler.hpp"

#include <algorithm>
#include <chrono>
#include <exception>
#include <fstream>
#include <istream>
#include <mutex>
#include <ostream>
#include <random>
#include <stdexcept>
#include <thread>

#include "adaguide/text.hpp"

namespace adaguide {

namespace {

std::vector<TimeSlice> slices_for(const MixtureModel& model, const NoiseSchedule& schedule,
                                  const TimestepGrid& grid) {
  std::vector<TimeSlice> slices;
  slices.reserve(grid.steps.size());
  for (double t : grid.steps) slices.emplace_back(model, schedule, t);
  return slices;
}

SampleResult run_trajectory(const std::vector<TimeSlice>& slices, const NoiseSchedule& schedule,
                            const TimestepGrid& grid, const GuidanceStrategy& strategy, int class_index,
                            int dim, std::uint64_t seed, bool diagnostic) {
  const int steps = grid.size();
  SampleResult result;
  auto& trace = result.trace;
  trace.rows.reserve(static_cast<std::size_t>(steps));

  const auto start = std::chrono::steady_clock::now();
  Vector x = draw_prior(dim, slices.front().sigma(), seed);
  trace.prior = x;

  SimilarityState sim_state;
  std::optional<double> previous_gamma;
  int cum_evals = 0;
  for (int step = 1; step <= steps; ++step) {
    const TimeSlice& slice = slices[static_cast<std::size_t>(step - 1)];
    const StepDecision decision = decide(strategy, step, grid, schedule, sim_state, previous_gamma);

    const bool need_cond = decision.mode == StepMode::Guided || decision.single_score == ScoreType::Conditional;
    const bool need_uncond =
        decision.mode == StepMode::Guided || decision.single_score == ScoreType::Unconditional;
    const bool dual = decision.mode == StepMode::Guided || diagnostic;

    std::optional<Vector> eps_c;
    std::optional<Vector> eps_u;
    if (need_cond || dual) eps_c = slice.eps_conditional(x, class_index).eps;
    if (need_uncond || dual) eps_u = slice.eps_unconditional(x).eps;
    if (decision.mode == StepMode::Single && diagnostic) ++trace.diagnostic_evals;

    std::optional<double> gamma;
    if (eps_c && eps_u) {
      try {
        gamma = cosine_similarity(*eps_c, *eps_u);
      } catch (const std::domain_error&) {
        gamma.reset();
      }
    }

    const Vector eps = decision.mode == StepMode::Guided ? cfg_combine(*eps_u, *eps_c, strategy.w)
                       : decision.single_score == ScoreType::Conditional ? *eps_c
                                                                         : *eps_u;
    cum_evals += decision.evals();
    const std::optional<double> t_next =
        step < steps ? std::optional<double>(grid.steps[static_cast<std::size_t>(step)]) : std::nullopt;
    x = ddim_step(x, eps, slice.t(), t_next, schedule);

    trace.rows.push_back({step, slice.t(), slice.alpha(), slice.sigma(), slice.alpha() / slice.sigma(), gamma,
                          decision, cum_evals});
    previous_gamma = gamma;
  }
  trace.total_evals = cum_evals;
  trace.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
  result.x0 = std::move(x);
  return result;
}

std::string optional_field(const std::optional<double>& value) {
  return value ? text::format_double(*value) : std::string();
}

}  // namespace

Vector draw_prior(int dim, double sigma_start, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Vector x(dim);
  for (int i = 0; i < dim; ++i) x[i] = sigma_start * normal(rng);
  return x;
}

Vector ddim_step(const Vector& x_t, const Vector& eps, double t, std::optional<double> t_next,
                 const NoiseSchedule& schedule) {
  if (x_t.size() != eps.size()) throw std::invalid_argument("sample and score differ in length");
  const auto [alpha, sigma] = schedule.alpha_sigma(t);
  Vector x0_hat = (x_t - sigma * eps) / alpha;
  if (!t_next) return x0_hat;
  if (!(*t_next < t)) throw std::invalid_argument("DDIM step must move to an earlier time");
  const auto [alpha_next, sigma_next] = schedule.alpha_sigma(*t_next);
  return alpha_next * x0_hat + sigma_next * eps;
}

SampleResult sample(const MixtureModel& model, const NoiseSchedule& schedule, const TimestepGrid& grid,
                    const GuidanceStrategy& strategy, std::string_view condition, std::uint64_t seed,
                    bool diagnostic_dual_eval) {
  strategy.validate();
  const int class_index = model.class_index(condition);
  const auto slices = slices_for(model, schedule, grid);
  return run_trajectory(slices, schedule, grid, strategy, class_index, model.dim(), seed, diagnostic_dual_eval);
}

std::vector<SampleResult> sample_batch(const MixtureModel& model, const NoiseSchedule& schedule,
                                       const TimestepGrid& grid, const GuidanceStrategy& strategy,
                                       std::string_view condition, int n, std::uint64_t base_seed,
                                       const SamplerOptions& options) {
  if (n < 1) throw std::invalid_argument("batch size must be >= 1");
  strategy.validate();
  const int class_index = model.class_index(condition);
  const auto slices = slices_for(model, schedule, grid);

  std::vector<SampleResult> results(static_cast<std::size_t>(n));
  int threads = options.threads > 0 ? options.threads : static_cast<int>(std::thread::hardware_concurrency());
  threads = std::clamp(threads, 1, n);

  auto work = [&](int worker) {
    for (int i = worker; i < n; i += threads) {
      results[static_cast<std::size_t>(i)] =
          run_trajectory(slices, schedule, grid, strategy, class_index, model.dim(),
                         base_seed + static_cast<std::uint64_t>(i), options.diagnostic_dual_eval);
    }
  };

  if (threads == 1) {
    work(0);
    return results;
  }
  std::exception_ptr failure;
  std::mutex failure_mutex;
  {
    std::vector<std::jthread> pool;
    for (int worker = 0; worker < threads; ++worker) {
      pool.emplace_back([&, worker] {
        try {
          work(worker);
        } catch (...) {
          std::lock_guard lock(failure_mutex);
          if (!failure) failure = std::current_exception();
        }
      });
    }
  }
  if (failure) std::rethrow_exception(failure);
  return results;
}

void write_trace(std::ostream& out, const SampleTrace& trace) {
  out << kTraceHeader << '\n';
  for (const auto& row : trace.rows) {
    const bool single = row.decision.mode == StepMode::Single;
    out << row.step_index << ',' << text::format_double(row.t) << ',' << text::format_double(row.alpha) << ','
        << text::format_double(row.sigma) << ',' << text::format_double(row.snr) << ','
        << optional_field(row.gamma) << ',' << to_string(row.decision.mode) << ','
        << (single ? to_string(row.decision.single_score) : std::string_view()) << ',' << row.decision.evals()
        << ',' << row.cum_evals << '\n';
  }
}

void write_trace(const std::filesystem::path& path, const SampleTrace& trace) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write trace file " + path.string());
  write_trace(out, trace);
}

SampleTrace read_trace(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line != kTraceHeader) throw std::invalid_argument("trace header mismatch");
  SampleTrace trace;
  int previous_cum = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto f = text::split(line, ',');
    if (f.size() != 10) throw std::invalid_argument("trace row has " + std::to_string(f.size()) + " fields");
    StepRecord row;
    row.step_index = static_cast<int>(text::parse_int(f[0]));
    row.t = text::parse_double(f[1]);
    row.alpha = text::parse_double(f[2]);
    row.sigma = text::parse_double(f[3]);
    row.snr = text::parse_double(f[4]);
    if (!f[5].empty()) row.gamma = text::parse_double(f[5]);
    if (f[6] == "guided") {
      row.decision = StepDecision::guided();
      if (!f[7].empty()) throw std::invalid_argument("guided row carries a single_score");
    } else if (f[6] == "single") {
      row.decision = StepDecision::single(parse_score_type(f[7]));
    } else {
      throw std::invalid_argument("unknown mode '" + f[6] + "'");
    }
    if (text::parse_int(f[8]) != row.decision.evals()) throw std::invalid_argument("evals_this_step mismatch");
    row.cum_evals = static_cast<int>(text::parse_int(f[9]));
    if (row.cum_evals != previous_cum + row.decision.evals()) throw std::invalid_argument("cum_evals mismatch");
    previous_cum = row.cum_evals;
    trace.rows.push_back(row);
  }
  trace.total_evals = previous_cum;
  return trace;
}

SampleTrace read_trace(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open trace file " + path.string());
  return read_trace(in);
}

}  // namespace adaguide
