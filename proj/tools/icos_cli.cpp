// Benchmark harness and one-shot solver front-end for the icos library.
//
// Subcommands: bench-rotation, bench-registration, bench-scale, solve, synth.
// Benchmarks derive one instance per (outlier ratio, run) cell from the
// master seed, run every selected solver on that identical instance, and
// emit one row per solve plus per-ratio aggregates. Cells may execute in
// parallel (ICOS_THREADS caps the worker count); output order is always
// (ratio, run, solver). Exit codes: 0 success, 2 configuration error,
// 3 I/O error.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <iostream>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "icos/core.hpp"
#include "icos/geometry.hpp"
#include "icos/instance_io.hpp"
#include "icos/ply.hpp"
#include "icos/random.hpp"
#include "icos/ransac.hpp"
#include "icos/sampling.hpp"
#include "icos/synth.hpp"

namespace {

using namespace icos;

constexpr const char* kBenchSchema = "icos-bench/1";
constexpr const char* kSolveSchema = "icos-solve/1";

// ---------------------------------------------------------------------------
// Parameter overrides (--override key=value). Every key maps to a documented
// solver or success-threshold parameter; unknown keys are configuration
// errors.

struct Overrides {
  std::optional<int> icos_x, icos_itr1, icos_itr2, icos_itr3, icos_itr4;
  std::optional<int> icos_restarts;
  std::optional<double> icos_confidence, icos_assumed_ratio;
  std::optional<bool> icos_scale_residual;
  long ransac_iterations = 1000;
  double ransac_time_budget = 60.0;
  std::optional<double> ransac_confidence, ransac_threshold;
  std::optional<double> success_rotation, success_translation, success_scale;

  void apply(IcosParams& p) const {
    if (icos_x) p.x = *icos_x;
    if (icos_itr1) p.max_itr1 = *icos_itr1;
    if (icos_itr2) p.max_itr2 = *icos_itr2;
    if (icos_itr3) p.max_itr3 = *icos_itr3;
    if (icos_itr4) p.max_itr4 = *icos_itr4;
    if (icos_restarts) p.max_restarts = *icos_restarts;
    if (icos_confidence) p.confidence = *icos_confidence;
    if (icos_assumed_ratio) p.assumed_outlier_ratio = *icos_assumed_ratio;
    if (icos_scale_residual)
      p.bounds.scale_point_residual_with_estimate = *icos_scale_residual;
  }

  void apply(RansacParams& p) const {
    if (ransac_confidence) p.confidence = *ransac_confidence;
    if (ransac_threshold) p.inlier_threshold = *ransac_threshold;
  }
};

double parse_number(const std::string& key, const std::string& text) {
  try {
    size_t used = 0;
    const double value = std::stod(text, &used);
    if (used != text.size()) throw std::invalid_argument(text);
    return value;
  } catch (const std::exception&) {
    throw InvalidParameter("override " + key + ": cannot parse number '" +
                           text + "'");
  }
}

int parse_int(const std::string& key, const std::string& text) {
  const double value = parse_number(key, text);
  if (value != std::floor(value))
    throw InvalidParameter("override " + key + ": expected an integer");
  return static_cast<int>(value);
}

bool parse_bool(const std::string& key, const std::string& text) {
  if (text == "1" || text == "true") return true;
  if (text == "0" || text == "false") return false;
  throw InvalidParameter("override " + key + ": expected 0/1/true/false");
}

Overrides parse_overrides(const std::vector<std::string>& entries) {
  Overrides ov;
  for (const std::string& entry : entries) {
    const size_t eq = entry.find('=');
    if (eq == std::string::npos)
      throw InvalidParameter("override '" + entry + "' is not key=value");
    const std::string key = entry.substr(0, eq);
    const std::string value = entry.substr(eq + 1);
    if (key == "icos.x")
      ov.icos_x = parse_int(key, value);
    else if (key == "icos.max_itr1")
      ov.icos_itr1 = parse_int(key, value);
    else if (key == "icos.max_itr2")
      ov.icos_itr2 = parse_int(key, value);
    else if (key == "icos.max_itr3")
      ov.icos_itr3 = parse_int(key, value);
    else if (key == "icos.max_itr4")
      ov.icos_itr4 = parse_int(key, value);
    else if (key == "icos.max_restarts")
      ov.icos_restarts = parse_int(key, value);
    else if (key == "icos.confidence")
      ov.icos_confidence = parse_number(key, value);
    else if (key == "icos.assumed_outlier_ratio")
      ov.icos_assumed_ratio = parse_number(key, value);
    else if (key == "icos.scale_point_residual_with_estimate")
      ov.icos_scale_residual = parse_bool(key, value);
    else if (key == "ransac.iterations")
      ov.ransac_iterations = parse_int(key, value);
    else if (key == "ransac.time_budget")
      ov.ransac_time_budget = parse_number(key, value);
    else if (key == "ransac.confidence")
      ov.ransac_confidence = parse_number(key, value);
    else if (key == "ransac.inlier_threshold")
      ov.ransac_threshold = parse_number(key, value);
    else if (key == "success.rotation_deg")
      ov.success_rotation = parse_number(key, value);
    else if (key == "success.translation")
      ov.success_translation = parse_number(key, value);
    else if (key == "success.scale")
      ov.success_scale = parse_number(key, value);
    else
      throw InvalidParameter("unknown override key '" + key + "'");
  }
  return ov;
}

// ---------------------------------------------------------------------------
// Flag parsing helpers.

std::vector<double> parse_ratios(const std::string& text) {
  std::vector<double> ratios;
  if (text.find(':') != std::string::npos) {
    double start = 0, step = 0, stop = 0;
    char extra = 0;
    if (std::sscanf(text.c_str(), "%lf:%lf:%lf%c", &start, &step, &stop,
                    &extra) != 3 ||
        step <= 0.0)
      throw InvalidParameter("outlier-ratios sweep must be start:step:stop");
    for (int k = 0;; ++k) {
      const double value = start + k * step;
      if (value > stop + 1e-12) break;
      ratios.push_back(std::min(value, stop));
    }
  } else {
    std::istringstream stream(text);
    std::string item;
    while (std::getline(stream, item, ','))
      if (!item.empty()) ratios.push_back(parse_number("outlier-ratios", item));
  }
  if (ratios.empty()) throw InvalidParameter("outlier-ratios list is empty");
  for (double r : ratios)
    if (!(r >= 0.0 && r <= 0.99))
      throw InvalidParameter("outlier ratios must lie in [0, 0.99]");
  return ratios;
}

ScaleRange parse_scale(const std::vector<std::string>& tokens) {
  if (tokens.empty()) return ScaleRange::uniform(1.0, 5.0);
  if (tokens[0] == "fixed") {
    if (tokens.size() == 1) return ScaleRange::fixed(1.0);
    if (tokens.size() == 2)
      return ScaleRange::fixed(parse_number("scale", tokens[1]));
  } else if (tokens[0] == "range" && tokens.size() == 3) {
    return ScaleRange::uniform(parse_number("scale", tokens[1]),
                               parse_number("scale", tokens[2]));
  }
  throw InvalidParameter("--scale expects 'fixed [s]' or 'range lo hi'");
}

int resolve_thread_count(size_t cells) {
  long cap = 0;
  if (const char* env = std::getenv("ICOS_THREADS"); env && *env) {
    try {
      size_t used = 0;
      cap = std::stol(env, &used);
      if (used != std::strlen(env) || cap < 1) throw std::invalid_argument("");
    } catch (const std::exception&) {
      throw InvalidParameter("ICOS_THREADS must be a positive integer");
    }
  }
  unsigned hw = std::thread::hardware_concurrency();
  if (hw == 0) hw = 1;
  const long workers = cap > 0 ? cap : static_cast<long>(hw);
  return static_cast<int>(
      std::max<long>(1, std::min<long>(workers, static_cast<long>(cells))));
}

std::string format_number(double value) {
  char buffer[40];
  std::snprintf(buffer, sizeof buffer, "%.9g", value);
  return buffer;
}

const char* status_name(SolveStatus status) {
  return status == SolveStatus::Converged ? "converged" : "budget_exhausted";
}

// ---------------------------------------------------------------------------
// Benchmark execution.

struct SuccessRule {
  std::optional<double> rotation_deg;
  std::optional<double> translation;
  std::optional<double> scale;

  bool passes(const Metrics& m) const {
    if (rotation_deg && !(m.rotation_error_deg < *rotation_deg)) return false;
    if (translation && !(m.translation_error < *translation)) return false;
    if (scale && !(m.scale_error < *scale)) return false;
    return true;
  }
};

struct Outcome {
  Metrics metrics;
  SolveStatus status = SolveStatus::BudgetExhausted;
  double runtime = 0.0;
};

struct BenchSetup {
  std::string command;
  std::string kind;
  int n = 1000;
  double sigma = 0.01;
  std::vector<double> ratios;
  int runs = 50;
  std::uint64_t master_seed = 0;
  std::vector<std::string> solvers = {"icos"};
  SuccessRule success;
  std::string out_path;
  std::string format = "csv";
};

struct BenchRow {
  double ratio = 0.0;
  int run = 0;
  std::uint64_t seed = 0;
  std::string solver;
  Outcome outcome;
  bool success = false;
};

void validate_bench(const BenchSetup& setup) {
  if (setup.runs < 1) throw InvalidParameter("--runs must be >= 1");
  if (setup.n < 3) throw InvalidParameter("--n must be >= 3");
  if (!(setup.sigma >= 0.0)) throw InvalidParameter("--sigma must be >= 0");
  if (setup.format != "csv" && setup.format != "json")
    throw InvalidParameter("--format must be csv or json");
  if (setup.solvers.empty()) throw InvalidParameter("--solvers is empty");
  for (const std::string& s : setup.solvers)
    if (s != "icos" && s != "ransac-k" && s != "ransac-time")
      throw InvalidParameter("unknown solver '" + s +
                             "' (expected icos, ransac-k, ransac-time)");
}

// Runs all (ratio, run) cells, each solving with every selected solver on the
// identical instance, and returns rows in deterministic (ratio, run, solver)
// order regardless of scheduling.
template <class CellFn>
std::vector<BenchRow> run_cells(const BenchSetup& setup, CellFn&& cell_fn) {
  const size_t solver_count = setup.solvers.size();
  const size_t cells = setup.ratios.size() * setup.runs;
  std::vector<BenchRow> rows(cells * solver_count);

  std::atomic<size_t> next{0};
  std::atomic<bool> failed{false};
  std::string failure;
  std::mutex failure_mutex;

  const auto worker = [&] {
    for (size_t cell = next.fetch_add(1); cell < cells;
         cell = next.fetch_add(1)) {
      if (failed.load()) return;
      const size_t ratio_index = cell / setup.runs;
      const int run = static_cast<int>(cell % setup.runs);
      const double ratio = setup.ratios[ratio_index];
      const std::uint64_t cell_seed =
          derive_seed(setup.master_seed, ratio_index, run);
      try {
        for (size_t s = 0; s < solver_count; ++s) {
          BenchRow& row = rows[cell * solver_count + s];
          row.ratio = ratio;
          row.run = run;
          row.seed = cell_seed;
          row.solver = setup.solvers[s];
          row.outcome = cell_fn(ratio, cell_seed, setup.solvers[s],
                                derive_seed(cell_seed, s + 1, 0));
          row.success = setup.success.passes(row.outcome.metrics);
        }
      } catch (const std::exception& e) {
        const std::lock_guard<std::mutex> lock(failure_mutex);
        failed = true;
        failure = e.what();
        return;
      }
    }
  };

  const int workers = resolve_thread_count(cells);
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (int t = 0; t < workers; ++t) pool.emplace_back(worker);
  for (std::thread& t : pool) t.join();
  if (failed) throw std::runtime_error("benchmark cell failed: " + failure);
  return rows;
}

double mean_of(const std::vector<double>& values) {
  double sum = 0.0;
  for (double v : values) sum += v;
  return values.empty() ? 0.0 : sum / values.size();
}

double median_of(std::vector<double> values) {
  if (values.empty()) return 0.0;
  std::sort(values.begin(), values.end());
  const size_t mid = values.size() / 2;
  return values.size() % 2 ? values[mid]
                           : 0.5 * (values[mid - 1] + values[mid]);
}

struct Aggregate {
  double ratio = 0.0;
  std::string solver;
  Metrics mean, median;
  double mean_runtime = 0.0, median_runtime = 0.0;
  double success_rate = 0.0;
};

std::vector<Aggregate> aggregate_rows(const BenchSetup& setup,
                                      const std::vector<BenchRow>& rows) {
  std::vector<Aggregate> aggregates;
  for (double ratio : setup.ratios) {
    for (const std::string& solver : setup.solvers) {
      std::vector<double> rot, trans, scale, recall, precision, runtime;
      int successes = 0, total = 0;
      for (const BenchRow& row : rows) {
        if (row.ratio != ratio || row.solver != solver) continue;
        rot.push_back(row.outcome.metrics.rotation_error_deg);
        trans.push_back(row.outcome.metrics.translation_error);
        scale.push_back(row.outcome.metrics.scale_error);
        recall.push_back(row.outcome.metrics.recall);
        precision.push_back(row.outcome.metrics.precision);
        runtime.push_back(row.outcome.runtime);
        successes += row.success;
        ++total;
      }
      Aggregate agg;
      agg.ratio = ratio;
      agg.solver = solver;
      agg.mean = {mean_of(rot), mean_of(trans), mean_of(scale),
                  mean_of(recall), mean_of(precision)};
      agg.median = {median_of(rot), median_of(trans), median_of(scale),
                    median_of(recall), median_of(precision)};
      agg.mean_runtime = mean_of(runtime);
      agg.median_runtime = median_of(runtime);
      agg.success_rate = total == 0 ? 0.0 : double(successes) / total;
      aggregates.push_back(agg);
    }
  }
  return aggregates;
}

class OutputSink {
 public:
  explicit OutputSink(const std::string& path) {
    if (!path.empty() && path != "-") {
      file_.open(path);
      if (!file_) throw IoError(path + ": cannot open for writing");
      stream_ = &file_;
      path_ = path;
    }
  }
  std::ostream& stream() { return *stream_; }
  void finish() {
    stream_->flush();
    if (stream_->fail())
      throw IoError((path_.empty() ? "<stdout>" : path_) + ": write failed");
  }

 private:
  std::ofstream file_;
  std::ostream* stream_ = &std::cout;
  std::string path_;
};

void write_bench_csv(std::ostream& out, const BenchSetup& setup,
                     const std::vector<BenchRow>& rows,
                     const std::vector<Aggregate>& aggregates) {
  out << "schema,record,command,kind,solver,n,sigma,outlier_ratio,run,seed,"
         "status,e_rot_deg,e_translation,e_scale,recall,precision,"
         "runtime_seconds,success\n";
  const std::string prefix = std::string(kBenchSchema);
  for (const BenchRow& row : rows) {
    const Metrics& m = row.outcome.metrics;
    out << prefix << ",run," << setup.command << ',' << setup.kind << ','
        << row.solver << ',' << setup.n << ',' << format_number(setup.sigma)
        << ',' << format_number(row.ratio) << ',' << row.run << ',' << row.seed
        << ',' << status_name(row.outcome.status) << ','
        << format_number(m.rotation_error_deg) << ','
        << format_number(m.translation_error) << ','
        << format_number(m.scale_error) << ',' << format_number(m.recall)
        << ',' << format_number(m.precision) << ','
        << format_number(row.outcome.runtime) << ',' << (row.success ? 1 : 0)
        << '\n';
  }
  for (const Aggregate& agg : aggregates) {
    const auto stat_row = [&](const char* record, const Metrics& m,
                              double runtime) {
      out << prefix << ',' << record << ',' << setup.command << ','
          << setup.kind << ',' << agg.solver << ',' << setup.n << ','
          << format_number(setup.sigma) << ',' << format_number(agg.ratio)
          << ",,,," << format_number(m.rotation_error_deg) << ','
          << format_number(m.translation_error) << ','
          << format_number(m.scale_error) << ',' << format_number(m.recall)
          << ',' << format_number(m.precision) << ',' << format_number(runtime)
          << ",\n";
    };
    stat_row("mean", agg.mean, agg.mean_runtime);
    stat_row("median", agg.median, agg.median_runtime);
    out << prefix << ",success_rate," << setup.command << ',' << setup.kind
        << ',' << agg.solver << ',' << setup.n << ','
        << format_number(setup.sigma) << ',' << format_number(agg.ratio)
        << ",,,,,,,,,," << format_number(agg.success_rate) << '\n';
  }
}

nlohmann::json metrics_to_json(const Metrics& m) {
  return {{"e_rot_deg", m.rotation_error_deg},
          {"e_translation", m.translation_error},
          {"e_scale", m.scale_error},
          {"recall", m.recall},
          {"precision", m.precision}};
}

void write_bench_json(std::ostream& out, const BenchSetup& setup,
                      const std::vector<BenchRow>& rows,
                      const std::vector<Aggregate>& aggregates) {
  nlohmann::json doc;
  doc["schema"] = kBenchSchema;
  doc["command"] = setup.command;
  doc["kind"] = setup.kind;
  doc["n"] = setup.n;
  doc["sigma"] = setup.sigma;
  doc["runs"] = setup.runs;
  doc["seed"] = setup.master_seed;
  nlohmann::json json_rows = nlohmann::json::array();
  for (const BenchRow& row : rows) {
    nlohmann::json r = metrics_to_json(row.outcome.metrics);
    r["solver"] = row.solver;
    r["outlier_ratio"] = row.ratio;
    r["run"] = row.run;
    r["seed"] = row.seed;
    r["status"] = status_name(row.outcome.status);
    r["runtime_seconds"] = row.outcome.runtime;
    r["success"] = row.success;
    json_rows.push_back(std::move(r));
  }
  doc["rows"] = std::move(json_rows);
  nlohmann::json json_aggregates = nlohmann::json::array();
  for (const Aggregate& agg : aggregates) {
    nlohmann::json a;
    a["solver"] = agg.solver;
    a["outlier_ratio"] = agg.ratio;
    a["mean"] = metrics_to_json(agg.mean);
    a["mean"]["runtime_seconds"] = agg.mean_runtime;
    a["median"] = metrics_to_json(agg.median);
    a["median"]["runtime_seconds"] = agg.median_runtime;
    a["success_rate"] = agg.success_rate;
    json_aggregates.push_back(std::move(a));
  }
  doc["aggregates"] = std::move(json_aggregates);
  out << doc.dump(2) << "\n";
}

void emit_bench(const BenchSetup& setup, const std::vector<BenchRow>& rows) {
  const std::vector<Aggregate> aggregates = aggregate_rows(setup, rows);
  OutputSink sink(setup.out_path);
  if (setup.format == "csv")
    write_bench_csv(sink.stream(), setup, rows, aggregates);
  else
    write_bench_json(sink.stream(), setup, rows, aggregates);
  sink.finish();
}

// ---------------------------------------------------------------------------
// Solver dispatch.

RotationReport solve_rotation_with(const std::string& solver,
                                   const CorrespondenceSet& set, int n,
                                   double sigma, std::uint64_t seed,
                                   const Overrides& ov) {
  if (solver == "icos") {
    IcosParams params = IcosParams::rotation_search(n, sigma);
    ov.apply(params);
    params.seed = seed;
    return icos_rotation_search(set, params);
  }
  RansacParams params =
      solver == "ransac-k"
          ? RansacParams::iteration_capped(ov.ransac_iterations, sigma)
          : RansacParams::time_capped(ov.ransac_time_budget, sigma);
  ov.apply(params);
  params.seed = seed;
  return ransac_rotation(set, params);
}

TransformReport solve_registration_with(const std::string& solver,
                                        const CorrespondenceSet& set,
                                        bool known_scale, double sigma,
                                        std::uint64_t seed,
                                        const Overrides& ov) {
  if (solver == "icos") {
    IcosParams params = IcosParams::registration(sigma);
    ov.apply(params);
    params.seed = seed;
    return known_scale ? icos_registration_known_scale(set, params)
                       : icos_registration_unknown_scale(set, params);
  }
  RansacParams params =
      solver == "ransac-k"
          ? RansacParams::iteration_capped(ov.ransac_iterations, sigma)
          : RansacParams::time_capped(ov.ransac_time_budget, sigma);
  ov.apply(params);
  params.seed = seed;
  return ransac_registration(set, params, known_scale);
}

// ---------------------------------------------------------------------------
// Subcommand drivers.

int run_bench_rotation(BenchSetup setup, const Overrides& ov) {
  setup.command = "bench-rotation";
  setup.kind = "rotation";
  if (!setup.success.rotation_deg) setup.success.rotation_deg = 1.0;
  validate_bench(setup);
  const std::vector<BenchRow> rows = run_cells(
      setup, [&](double ratio, std::uint64_t cell_seed,
                 const std::string& solver, std::uint64_t solver_seed) {
        const Instance inst =
            gen_rotation_instance(setup.n, setup.sigma, ratio, cell_seed);
        const RotationReport report = solve_rotation_with(
            solver, inst.set, setup.n, setup.sigma, solver_seed, ov);
        return Outcome{metrics(report, inst.truth), report.status,
                       report.elapsed_seconds};
      });
  emit_bench(setup, rows);
  return 0;
}

int run_bench_registration(BenchSetup setup, const Overrides& ov,
                           const ScaleRange& scale, bool known_mode) {
  setup.command = "bench-registration";
  setup.kind = known_mode ? "registration-known" : "registration-unknown";
  if (!setup.success.rotation_deg) setup.success.rotation_deg = 1.0;
  if (!setup.success.translation)
    setup.success.translation = known_mode ? 0.05 : 0.1;
  if (!setup.success.scale && !known_mode) setup.success.scale = 0.02;
  validate_bench(setup);
  const std::vector<BenchRow> rows = run_cells(
      setup, [&](double ratio, std::uint64_t cell_seed,
                 const std::string& solver, std::uint64_t solver_seed) {
        const Instance inst = gen_registration_instance(
            setup.n, setup.sigma, ratio, scale, cell_seed);
        TransformReport report;
        if (known_mode) {
          // The generated scale is handed to the solver by reducing to the
          // unit-scale problem; rotation, translation, and inlier indices
          // carry over unchanged.
          const CorrespondenceSet reduced =
              apply_known_scale(inst.set, inst.truth.transform.scale);
          report = solve_registration_with(solver, reduced, true, setup.sigma,
                                           solver_seed, ov);
          report.estimate.scale = inst.truth.transform.scale;
        } else {
          report = solve_registration_with(solver, inst.set, false,
                                           setup.sigma, solver_seed, ov);
        }
        return Outcome{metrics(report, inst.truth), report.status,
                       report.elapsed_seconds};
      });
  emit_bench(setup, rows);
  return 0;
}

int run_bench_scale(BenchSetup setup, const Overrides& ov,
                    const ScaleRange& scale) {
  setup.command = "bench-scale";
  setup.kind = "scale";
  if (!setup.success.scale) setup.success.scale = 0.05;
  validate_bench(setup);
  const std::vector<BenchRow> rows = run_cells(
      setup, [&](double ratio, std::uint64_t cell_seed,
                 const std::string& solver, std::uint64_t solver_seed) {
        const Instance inst = gen_registration_instance(
            setup.n, setup.sigma, ratio, scale, cell_seed);
        const TransformReport report = solve_registration_with(
            solver, inst.set, false, setup.sigma, solver_seed, ov);
        return Outcome{metrics(report, inst.truth), report.status,
                       report.elapsed_seconds};
      });
  emit_bench(setup, rows);
  return 0;
}

struct SolveOptions {
  std::string instance_path;
  std::string src_ply, dst_ply, pairs_path;
  std::string kind = "points";
  std::string mode = "unknown";
  std::string solver = "icos";
  double sigma = 0.01;
  bool sigma_given = false;
  std::uint64_t seed = 0;
  std::string out_path;
  std::vector<std::string> overrides;
};

nlohmann::json report_to_json(const SimilarityTransform& estimate,
                              const std::vector<int>& inliers,
                              const std::vector<int>& collected,
                              const StageCounters& counters, int restarts,
                              double runtime, SolveStatus status) {
  nlohmann::json doc;
  doc["schema"] = kSolveSchema;
  doc["status"] = status_name(status);
  doc["estimate"]["scale"] = estimate.scale;
  nlohmann::json rotation = nlohmann::json::array();
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) rotation.push_back(estimate.rotation(r, c));
  doc["estimate"]["rotation"] = rotation;
  Eigen::Quaterniond q(estimate.rotation);
  if (q.w() < 0) q.coeffs() *= -1.0;
  doc["estimate"]["quaternion"] = {q.w(), q.x(), q.y(), q.z()};
  doc["estimate"]["translation"] = {estimate.translation.x(),
                                    estimate.translation.y(),
                                    estimate.translation.z()};
  doc["inliers"] = inliers;
  doc["collected"] = collected;
  doc["iterations"] = {{"seed_draws", counters.seed_draws},
                       {"completion_draws", counters.completion_draws},
                       {"collection_draws", counters.collection_draws},
                       {"excursions", counters.excursions}};
  doc["restarts"] = restarts;
  doc["runtime_seconds"] = runtime;
  return doc;
}

int run_solve(const SolveOptions& opt) {
  const Overrides ov = parse_overrides(opt.overrides);
  const bool from_instance = !opt.instance_path.empty();
  const bool from_ply =
      !opt.src_ply.empty() || !opt.dst_ply.empty() || !opt.pairs_path.empty();
  if (from_instance == from_ply)
    throw InvalidParameter(
        "solve needs either --in or the --src-ply/--dst-ply/--pairs triple");

  CorrespondenceSet set;
  double sigma = opt.sigma;
  if (from_instance) {
    const Instance inst = load_instance(opt.instance_path);
    set = inst.set;
    if (!opt.sigma_given) sigma = inst.truth.sigma;
  } else {
    if (opt.src_ply.empty() || opt.dst_ply.empty() || opt.pairs_path.empty())
      throw InvalidParameter("solve needs all of --src-ply, --dst-ply, --pairs");
    const std::vector<Eigen::Vector3d> src_points = load_ply(opt.src_ply);
    const std::vector<Eigen::Vector3d> dst_points = load_ply(opt.dst_ply);
    std::vector<Eigen::Vector3d> src, dst;
    for (const auto& [i, j] : load_index_pairs(opt.pairs_path)) {
      if (i >= static_cast<int>(src_points.size()) ||
          j >= static_cast<int>(dst_points.size()))
        throw UnsupportedFormat(opt.pairs_path + ": index out of range");
      src.push_back(src_points[i]);
      dst.push_back(dst_points[j]);
    }
    set = CorrespondenceSet::from_pairs(src, dst,
                                        opt.kind == "vectors"
                                            ? PairKind::VectorPairs
                                            : PairKind::PointPairs);
  }

  nlohmann::json doc;
  if (set.kind() == PairKind::VectorPairs) {
    const RotationReport report = solve_rotation_with(
        opt.solver, set, set.size(), sigma, opt.seed, ov);
    SimilarityTransform estimate;
    estimate.rotation = report.estimate;
    doc = report_to_json(estimate, report.inliers, report.collected,
                         report.iterations, report.restarts,
                         report.elapsed_seconds, report.status);
    doc["kind"] = "rotation";
  } else {
    const bool known = opt.mode == "known";
    const TransformReport report = solve_registration_with(
        opt.solver, set, known, sigma, opt.seed, ov);
    doc = report_to_json(report.estimate, report.inliers, report.collected,
                         report.iterations, report.restarts,
                         report.elapsed_seconds, report.status);
    doc["kind"] = known ? "registration-known" : "registration-unknown";
  }
  doc["solver"] = opt.solver;
  doc["n"] = set.size();
  doc["sigma"] = sigma;

  OutputSink sink(opt.out_path);
  sink.stream() << doc.dump(2) << "\n";
  sink.finish();
  return 0;
}

struct SynthOptions {
  std::string kind;
  int n = 1000;
  double sigma = 0.01;
  std::string ratios = "0";
  std::vector<std::string> scale_tokens;
  std::uint64_t seed = 0;
  std::string out_path;
};

int run_synth(const SynthOptions& opt) {
  const std::vector<double> ratios = parse_ratios(opt.ratios);
  if (ratios.size() != 1)
    throw InvalidParameter("synth generates one instance: give one ratio");
  if (opt.out_path.empty()) throw InvalidParameter("synth requires --out");
  Instance inst;
  if (opt.kind == "rotation") {
    inst = gen_rotation_instance(opt.n, opt.sigma, ratios[0], opt.seed);
  } else if (opt.kind == "registration") {
    inst = gen_registration_instance(opt.n, opt.sigma, ratios[0],
                                     parse_scale(opt.scale_tokens), opt.seed);
  } else {
    throw InvalidParameter("--kind must be rotation or registration");
  }
  save_instance(opt.out_path, inst);
  return 0;
}

// ---------------------------------------------------------------------------

void add_bench_flags(CLI::App* cmd, BenchSetup& setup, std::string& ratios,
                     std::vector<std::string>& overrides, int default_n) {
  setup.n = default_n;
  cmd->add_option("--n", setup.n, "Correspondence count per instance");
  cmd->add_option("--sigma", setup.sigma, "Noise standard deviation");
  cmd->add_option("--outlier-ratios", ratios,
                  "Sweep start:step:stop or comma list, each in [0, 0.99]")
      ->required();
  cmd->add_option("--runs", setup.runs, "Monte Carlo runs per ratio");
  cmd->add_option("--seed", setup.master_seed, "Master seed");
  cmd->add_option("--solvers", setup.solvers,
                  "Solvers: icos, ransac-k, ransac-time")
      ->delimiter(',');
  cmd->add_option("--out", setup.out_path, "Output path (default stdout)");
  cmd->add_option("--format", setup.format, "csv or json");
  cmd->add_option("--override", overrides,
                  "Parameter override key=value (repeatable)");
}

void apply_success_overrides(BenchSetup& setup, const Overrides& ov) {
  if (ov.success_rotation) setup.success.rotation_deg = ov.success_rotation;
  if (ov.success_translation) setup.success.translation = ov.success_translation;
  if (ov.success_scale) setup.success.scale = ov.success_scale;
}

int dispatch(int argc, char** argv) {
  CLI::App app{
      "Rotation search and point-cloud registration benchmarks.\n"
      "Cell seeds derive as seed(master, ratio_index, run_index); solver\n"
      "seeds derive from the cell seed and the solver's position in\n"
      "--solvers. ICOS_THREADS caps parallel benchmark cells."};
  app.require_subcommand(1);

  BenchSetup rot_setup, reg_setup, scale_setup;
  std::string rot_ratios, reg_ratios, scale_ratios;
  std::vector<std::string> rot_ov, reg_ov, scale_ov;
  std::vector<std::string> reg_scale_tokens, scale_scale_tokens;
  std::string reg_mode = "known";

  CLI::App* bench_rot =
      app.add_subcommand("bench-rotation", "Rotation-search benchmark");
  add_bench_flags(bench_rot, rot_setup, rot_ratios, rot_ov, 1000);

  CLI::App* bench_reg =
      app.add_subcommand("bench-registration", "Registration benchmark");
  add_bench_flags(bench_reg, reg_setup, reg_ratios, reg_ov, 1000);
  bench_reg->add_option("--mode", reg_mode, "known or unknown scale")
      ->check(CLI::IsMember({"known", "unknown"}));
  bench_reg
      ->add_option("--scale", reg_scale_tokens,
                   "Generated scale: 'fixed [s]' or 'range lo hi' "
                   "(default range 1 5)")
      ->expected(1, 3);

  CLI::App* bench_scale =
      app.add_subcommand("bench-scale", "Scale-estimation benchmark");
  add_bench_flags(bench_scale, scale_setup, scale_ratios, scale_ov, 100);
  bench_scale
      ->add_option("--scale", scale_scale_tokens,
                   "Generated scale: 'fixed [s]' or 'range lo hi' "
                   "(default range 1 5)")
      ->expected(1, 3);

  SolveOptions solve_opt;
  CLI::App* solve = app.add_subcommand("solve", "Solve one problem instance");
  solve->add_option("--in", solve_opt.instance_path, "Instance dump (JSON)");
  solve->add_option("--src-ply", solve_opt.src_ply, "Source point cloud");
  solve->add_option("--dst-ply", solve_opt.dst_ply, "Target point cloud");
  solve->add_option("--pairs", solve_opt.pairs_path,
                    "Correspondence file: one 'i j' pair per line");
  solve->add_option("--kind", solve_opt.kind, "points or vectors (PLY input)")
      ->check(CLI::IsMember({"points", "vectors"}));
  solve->add_option("--mode", solve_opt.mode, "known or unknown scale")
      ->check(CLI::IsMember({"known", "unknown"}));
  solve->add_option("--solver", solve_opt.solver,
                    "icos, ransac-k, or ransac-time")
      ->check(CLI::IsMember({"icos", "ransac-k", "ransac-time"}));
  CLI::Option* sigma_opt =
      solve->add_option("--sigma", solve_opt.sigma, "Noise level");
  solve->add_option("--seed", solve_opt.seed, "Solver seed");
  solve->add_option("--out", solve_opt.out_path, "Output path (default stdout)");
  solve->add_option("--override", solve_opt.overrides,
                    "Parameter override key=value (repeatable)");

  SynthOptions synth_opt;
  CLI::App* synth =
      app.add_subcommand("synth", "Generate and dump one instance");
  synth->add_option("--kind", synth_opt.kind, "rotation or registration")
      ->required();
  synth->add_option("--n", synth_opt.n, "Correspondence count");
  synth->add_option("--sigma", synth_opt.sigma, "Noise standard deviation");
  synth->add_option("--outlier-ratios", synth_opt.ratios,
                    "Outlier ratio (single value)");
  synth
      ->add_option("--scale", synth_opt.scale_tokens,
                   "Generated scale: 'fixed [s]' or 'range lo hi'")
      ->expected(1, 3);
  synth->add_option("--seed", synth_opt.seed, "Generation seed");
  synth->add_option("--out", synth_opt.out_path, "Output path")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  if (bench_rot->parsed()) {
    const Overrides ov = parse_overrides(rot_ov);
    rot_setup.ratios = parse_ratios(rot_ratios);
    apply_success_overrides(rot_setup, ov);
    return run_bench_rotation(rot_setup, ov);
  }
  if (bench_reg->parsed()) {
    const Overrides ov = parse_overrides(reg_ov);
    reg_setup.ratios = parse_ratios(reg_ratios);
    apply_success_overrides(reg_setup, ov);
    return run_bench_registration(reg_setup, ov, parse_scale(reg_scale_tokens),
                                  reg_mode == "known");
  }
  if (bench_scale->parsed()) {
    const Overrides ov = parse_overrides(scale_ov);
    scale_setup.ratios = parse_ratios(scale_ratios);
    apply_success_overrides(scale_setup, ov);
    return run_bench_scale(scale_setup, ov, parse_scale(scale_scale_tokens));
  }
  if (solve->parsed()) {
    solve_opt.sigma_given = sigma_opt->count() > 0;
    return run_solve(solve_opt);
  }
  if (synth->parsed()) return run_synth(synth_opt);
  return 2;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return dispatch(argc, argv);
  } catch (const IoError& e) {
    std::cerr << "I/O error: " << e.what() << "\n";
    return 3;
  } catch (const UnsupportedFormat& e) {
    std::cerr << "format error: " << e.what() << "\n";
    return 3;
  } catch (const InvalidParameter& e) {
    std::cerr << "configuration error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
