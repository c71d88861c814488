#include <algorithm>
#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <exception>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "ope/errors.hpp"
#include "ope/experiment.hpp"
#include "ope/rng.hpp"
#include "ope/simulator.hpp"
#include "ope/tabular.hpp"
#include "ope/version.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitNumerical = 3;

int cmd_run(const std::string& config_path) {
  const ope::ExperimentConfig config =
      ope::parse_experiment_config(config_path);
  const ope::ExperimentOutput output = ope::run_experiment(config);
  std::printf("wrote %zu records to %s\n", output.records.size(),
              config.output_path.c_str());
  for (const ope::SummaryRow& row : output.summary)
    std::printf("n=%lld T=%d mae=%.6g se=%.6g\n",
                static_cast<long long>(row.n), row.T, row.mae, row.se);
  return kExitOk;
}

int cmd_oracle(int T, std::int64_t rollouts, std::uint64_t seed) {
  const ope::SimParams params = ope::SimParams::defaults();
  const ope::McValue value =
      ope::mc_policy_value(params, T, rollouts, seed);
  std::printf("value,std_error\n%.17g,%.17g\n", value.value, value.std_error);
  return kExitOk;
}

int cmd_tabular_check(int instances, std::uint64_t seed,
                      const std::string& file) {
  double max_err = 0.0;
  int checked = 0;

  if (!file.empty()) {
    const ope::TabularInstance instance = ope::load_tabular_json(file);
    const ope::TabularPolicy target =
        instance.target ? *instance.target
                        : ope::uniform_tabular_policy(instance.pomdp);
    const ope::RankReport report = ope::check_rank_conditions(instance.pomdp);
    if (!report.passed) {
      std::printf("rank conditions fail: %zu deficient matrices\n",
                  report.deficiencies.size());
      for (const ope::RankIssue& issue : report.deficiencies)
        std::printf("  kind=%c t=%d s=%d a=%d rank=%d required=%d\n",
                    issue.kind, issue.t, issue.s, issue.a, issue.rank,
                    issue.required);
      return kExitNumerical;
    }
    const double dp = ope::true_value_dp(instance.pomdp, target);
    const double bridge = ope::ope_via_bridges(instance.pomdp, target);
    const double err = std::abs(bridge - dp);
    std::printf("file=%s dp=%.12g bridge=%.12g abs_err=%.3g\n", file.c_str(),
                dp, bridge, err);
    max_err = err;
    checked = 1;
  } else {
    for (int i = 0; i < instances; ++i) {
      ope::Rng dims_rng = ope::Rng::derive(
          seed, {ope::stream::kInstance, 3, static_cast<std::uint64_t>(i)});
      ope::TabularDims dims;
      dims.nU = 2 + static_cast<int>(dims_rng.below(2));
      dims.nW = dims.nU;
      dims.nZ = dims.nU;
      dims.nS = 1 + static_cast<int>(dims_rng.below(3));
      dims.nA = 2;
      dims.T = 1 + static_cast<int>(dims_rng.below(4));

      const std::uint64_t instance_seed = ope::derive_seed(
          seed, {ope::stream::kInstance, 4, static_cast<std::uint64_t>(i)});
      const ope::TabularPomdp pomdp = ope::random_pomdp(dims, instance_seed);
      const ope::TabularPolicy target =
          ope::random_tabular_policy(pomdp, instance_seed);
      const double dp = ope::true_value_dp(pomdp, target);
      const double bridge = ope::ope_via_bridges(pomdp, target);
      const double err = std::abs(bridge - dp);
      max_err = std::max(max_err, err);
      ++checked;
      std::printf("instance=%d nS=%d nU=%d T=%d dp=%.12g bridge=%.12g "
                  "abs_err=%.3g\n",
                  i, dims.nS, dims.nU, dims.T, dp, bridge, err);
    }
  }

  std::printf("checked=%d max_abs_err=%.3g\n", checked, max_err);
  if (max_err > 1e-6) {
    std::printf("identification mismatch above 1e-6\n");
    return kExitNumerical;
  }
  return kExitOk;
}

int cmd_summarize(const std::string& in_path, const std::string& out_path) {
  const std::vector<ope::RunRecord> records = ope::load_records_csv(in_path);
  const std::vector<ope::SummaryRow> summary = ope::summarize(records);
  ope::save_summary_csv(summary, out_path);
  std::printf("wrote %zu summary rows to %s\n", summary.size(),
              out_path.c_str());
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Off-policy evaluation for confounded POMDPs"};
  app.set_version_flag("--version", ope::kVersion);
  app.require_subcommand(1);

  std::string config_path;
  CLI::App* run = app.add_subcommand("run", "Run a configured experiment sweep");
  run->add_option("--config", config_path, "JSON experiment config")
      ->required();

  int oracle_T = 3;
  std::int64_t oracle_rollouts = 50000;
  std::uint64_t oracle_seed = 0;
  CLI::App* oracle =
      app.add_subcommand("oracle", "Monte Carlo value of the target policy");
  oracle->add_option("--T", oracle_T, "Horizon")->required();
  oracle->add_option("--rollouts", oracle_rollouts, "Number of rollouts")
      ->required();
  oracle->add_option("--seed", oracle_seed, "RNG seed")->required();

  int tab_instances = 100;
  std::uint64_t tab_seed = 0;
  std::string tab_file;
  CLI::App* tabular = app.add_subcommand(
      "tabular-check", "Verify bridge identification on tabular instances");
  tabular->add_option("--instances", tab_instances, "Random instance count");
  tabular->add_option("--seed", tab_seed, "RNG seed");
  tabular->add_option("--file", tab_file,
                      "Check a single instance loaded from JSON");

  std::string sum_in, sum_out;
  CLI::App* sum = app.add_subcommand("summarize", "Summarize a records CSV");
  sum->add_option("--in", sum_in, "Records CSV path")->required();
  sum->add_option("--out", sum_out, "Summary CSV path")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run) return cmd_run(config_path);
    if (*oracle) return cmd_oracle(oracle_T, oracle_rollouts, oracle_seed);
    if (*tabular) return cmd_tabular_check(tab_instances, tab_seed, tab_file);
    if (*sum) return cmd_summarize(sum_in, sum_out);
  } catch (const ope::InvalidInput& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kExitConfig;
  } catch (const ope::IoError& e) {
    std::fprintf(stderr, "io error: %s\n", e.what());
    return kExitConfig;
  } catch (const ope::OpeError& e) {
    std::fprintf(stderr, "numerical error: %s\n", e.what());
    return kExitNumerical;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitNumerical;
  }
  return kExitOk;
}
