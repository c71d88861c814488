#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "ope/simulator.hpp"

namespace ope {

/// Geometric grid of count points from lo to hi inclusive.
struct ScalePoolSpec {
  int count = 30;
  double lo = 0.001;
  double hi = 0.05;
};

std::vector<double> make_scale_pool(const ScalePoolSpec& spec);

struct ExperimentConfig {
  std::vector<Eigen::Index> n_grid;
  std::vector<int> t_grid;
  int repeats = 1;
  std::uint64_t base_seed = 0;
  ScalePoolSpec scale_pool;
  int folds = 5;
  std::int64_t mc_rollouts = 50000;
  SimParams sim = SimParams::defaults();  // defaults with overrides applied
  std::string output_path;
};

struct RunRecord {
  Eigen::Index n = 0;
  int T = 0;
  int repeat_index = 0;
  std::uint64_t seed = 0;
  double value_estimate = 0.0;
  double oracle_value = 0.0;
  double abs_error = 0.0;
  double wall_time_seconds = 0.0;
  std::vector<double> per_step_scales;  // selected scale at t = 1..T
};

struct SummaryRow {
  Eigen::Index n = 0;
  int T = 0;
  double mae = 0.0;
  double se = 0.0;
  std::optional<double> slope_vs_T;  // shared by rows with the same n
  std::optional<double> slope_vs_n;  // shared by rows with the same T
};

struct ExperimentOutput {
  std::vector<RunRecord> records;
  std::vector<SummaryRow> summary;
};

/// Full sweep over n_grid x t_grid x repeats. The MC oracle runs once per
/// horizon; cells execute on a worker pool capped by OPE_WORKERS; records
/// stream to output_path in grid order with a flush per line, a resolved
/// config sidecar is written up front, and the summary lands next to the
/// records when the sweep finishes.
ExperimentOutput run_experiment(const ExperimentConfig& config);

/// Per-(n,T) MAE and standard error plus log-log slopes of MAE against n
/// (at fixed T) and against T (at fixed n); slopes need two distinct grid
/// points with positive MAE, otherwise they stay empty.
std::vector<SummaryRow> summarize(const std::vector<RunRecord>& records);

/// JSON config mirroring ExperimentConfig; unknown keys are rejected.
ExperimentConfig parse_experiment_config(const std::string& path);

void save_records_csv(const std::vector<RunRecord>& records,
                      const std::string& path);
std::vector<RunRecord> load_records_csv(const std::string& path);
void save_summary_csv(const std::vector<SummaryRow>& summary,
                      const std::string& path);

/// min(hardware threads, OPE_WORKERS); at least 1.
int worker_budget();

namespace detail {

std::uint64_t run_seed(std::uint64_t base_seed, Eigen::Index n, int T,
                       int repeat);
std::uint64_t oracle_seed(std::uint64_t base_seed, int T);
std::string records_header();
std::string format_record(const RunRecord& record);

/// Sibling path: output stem with its .csv suffix (if any) replaced.
std::string sibling_path(const std::string& output_path,
                         const std::string& suffix);

}  // namespace detail

}  // namespace ope
