#include "ope/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <condition_variable>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <fstream>
#include <limits>
#include <map>
#include <memory>
#include <mutex>
#include <sstream>
#include <thread>
#include <utility>

#include "json.hpp"

#include "ope/errors.hpp"
#include "ope/fqe.hpp"
#include "ope/rng.hpp"
#include "ope/version.hpp"

namespace ope {

namespace {

std::string format_double(double x) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  return buf;
}

void validate_config(const ExperimentConfig& config) {
  if (config.n_grid.empty() || config.t_grid.empty())
    throw InvalidInput("n_grid and t_grid must be nonempty");
  for (Eigen::Index n : config.n_grid)
    if (n < 1) throw InvalidInput("n_grid values must be at least 1");
  for (int t : config.t_grid)
    if (t < 1) throw InvalidInput("t_grid values must be at least 1");
  if (config.repeats < 1) throw InvalidInput("repeats must be at least 1");
  if (config.folds < 2) throw InvalidInput("folds must be at least 2");
  if (config.mc_rollouts < 1)
    throw InvalidInput("mc_rollouts must be at least 1");
  if (config.output_path.empty()) throw InvalidInput("output_path is empty");
  make_scale_pool(config.scale_pool);
}

nlohmann::json sim_params_json(const SimParams& sim) {
  nlohmann::json j;
  j["alpha0"] = sim.alpha0;
  j["alpha_a"] = sim.alpha_a;
  j["alpha_s"] = {sim.alpha_s(0), sim.alpha_s(1)};
  j["mu0"] = sim.mu0;
  j["mu_a"] = sim.mu_a;
  j["mu_s"] = {sim.mu_s(0), sim.mu_s(1)};
  j["kappa0"] = sim.kappa0;
  j["kappa_a"] = sim.kappa_a;
  j["kappa_s"] = {sim.kappa_s(0), sim.kappa_s(1)};
  nlohmann::json sigma = nlohmann::json::array();
  for (int i = 0; i < 3; ++i)
    sigma.push_back({sim.sigma(i, 0), sim.sigma(i, 1), sim.sigma(i, 2)});
  j["sigma"] = std::move(sigma);
  j["t0"] = sim.t0;
  j["tu"] = sim.tu;
  j["ts"] = {sim.ts(0), sim.ts(1)};
  j["reward_noise_halfwidth"] = sim.reward_noise_halfwidth;
  j["epsilon_greedy"] = sim.epsilon_greedy;
  j["s1_sampler"] = sim.s1_sampler == InitialStateSampler::StdNormal
                        ? "std_normal"
                        : "std_uniform_box";
  return j;
}

void write_meta_sidecar(const ExperimentConfig& config, const std::string& path) {
  nlohmann::json j;
  nlohmann::json n_grid = nlohmann::json::array();
  for (Eigen::Index n : config.n_grid) n_grid.push_back(static_cast<std::int64_t>(n));
  j["n_grid"] = std::move(n_grid);
  j["t_grid"] = config.t_grid;
  j["repeats"] = config.repeats;
  j["base_seed"] = config.base_seed;
  j["scale_pool"] = {{"count", config.scale_pool.count},
                     {"lo", config.scale_pool.lo},
                     {"hi", config.scale_pool.hi},
                     {"spacing", "log"}};
  j["folds"] = config.folds;
  j["mc_rollouts"] = config.mc_rollouts;
  j["sim"] = sim_params_json(config.sim);
  j["output_path"] = config.output_path;
  j["version"] = kVersion;

  std::ofstream out(path);
  if (!out) throw IoError("cannot open for writing: " + path);
  out << j.dump(1) << "\n";
  if (!out.flush()) throw IoError("write failed: " + path);
}

RunRecord run_cell(const ExperimentConfig& config,
                   const std::vector<double>& pool, Eigen::Index n, int T,
                   int repeat, double oracle_value) {
  RunRecord rec;
  rec.n = n;
  rec.T = T;
  rec.repeat_index = repeat;
  rec.seed = detail::run_seed(config.base_seed, n, T, repeat);
  rec.oracle_value = oracle_value;

  const auto start = std::chrono::steady_clock::now();
  const TrajectoryBatch batch = sample_batch(
      config.sim, n, T, derive_seed(rec.seed, {stream::kBatch}));
  const PolicySpec policy = target_policy_spec(config.sim);
  const OpeResult result =
      estimate_v_bridges(batch, policy, std::nullopt, pool, config.folds,
                         derive_seed(rec.seed, {stream::kFqe}));
  const auto stop = std::chrono::steady_clock::now();

  rec.value_estimate = result.value_estimate;
  rec.abs_error = std::abs(rec.value_estimate - rec.oracle_value);
  rec.wall_time_seconds = std::chrono::duration<double>(stop - start).count();
  rec.per_step_scales.reserve(result.per_step.size());
  for (const VBridgeStep& step : result.per_step)
    rec.per_step_scales.push_back(step.selected_scale);
  return rec;
}

double slope_or_nan(const std::vector<std::pair<double, double>>& log_points) {
  if (log_points.size() < 2) return std::numeric_limits<double>::quiet_NaN();
  double mx = 0.0, my = 0.0;
  for (const auto& [x, y] : log_points) {
    mx += x;
    my += y;
  }
  mx /= static_cast<double>(log_points.size());
  my /= static_cast<double>(log_points.size());
  double sxx = 0.0, sxy = 0.0;
  for (const auto& [x, y] : log_points) {
    sxx += (x - mx) * (x - mx);
    sxy += (x - mx) * (y - my);
  }
  if (sxx == 0.0) return std::numeric_limits<double>::quiet_NaN();
  return sxy / sxx;
}

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> parts;
  std::string::size_type from = 0;
  while (true) {
    const auto to = line.find(sep, from);
    if (to == std::string::npos) {
      parts.push_back(line.substr(from));
      return parts;
    }
    parts.push_back(line.substr(from, to - from));
    from = to + 1;
  }
}

double parse_double(const std::string& text, const std::string& what) {
  char* end = nullptr;
  const double value = std::strtod(text.c_str(), &end);
  if (end == text.c_str() || *end != '\0')
    throw IoError("cannot parse " + what + " from '" + text + "'");
  return value;
}

long long parse_int(const std::string& text, const std::string& what) {
  char* end = nullptr;
  const long long value = std::strtoll(text.c_str(), &end, 10);
  if (end == text.c_str() || *end != '\0')
    throw IoError("cannot parse " + what + " from '" + text + "'");
  return value;
}

std::uint64_t parse_uint(const std::string& text, const std::string& what) {
  char* end = nullptr;
  const unsigned long long value = std::strtoull(text.c_str(), &end, 10);
  if (end == text.c_str() || *end != '\0')
    throw IoError("cannot parse " + what + " from '" + text + "'");
  return value;
}

}  // namespace

std::vector<double> make_scale_pool(const ScalePoolSpec& spec) {
  if (spec.count < 1) throw InvalidInput("scale pool count must be at least 1");
  if (!(spec.lo > 0.0) || !(spec.hi > 0.0) || !std::isfinite(spec.lo) ||
      !std::isfinite(spec.hi))
    throw InvalidInput("scale pool bounds must be positive reals");
  if (spec.lo > spec.hi)
    throw InvalidInput("scale pool lower bound exceeds upper bound");

  std::vector<double> pool;
  pool.reserve(static_cast<std::size_t>(spec.count));
  if (spec.count == 1) {
    pool.push_back(spec.lo);
    return pool;
  }
  const double log_lo = std::log(spec.lo);
  const double log_hi = std::log(spec.hi);
  for (int j = 0; j < spec.count; ++j) {
    const double frac = static_cast<double>(j) / (spec.count - 1);
    pool.push_back(std::exp(log_lo + frac * (log_hi - log_lo)));
  }
  pool.front() = spec.lo;
  pool.back() = spec.hi;
  return pool;
}

ExperimentOutput run_experiment(const ExperimentConfig& config) {
  validate_config(config);
  const std::vector<double> pool = make_scale_pool(config.scale_pool);

  std::ofstream records_out(config.output_path);
  if (!records_out)
    throw IoError("cannot open for writing: " + config.output_path);
  write_meta_sidecar(config,
                     detail::sibling_path(config.output_path, ".meta.json"));

  records_out << detail::records_header() << "\n";
  if (!records_out.flush())
    throw IoError("write failed: " + config.output_path);

  std::map<int, double> oracle_by_horizon;
  for (int T : config.t_grid) {
    if (oracle_by_horizon.count(T)) continue;
    const McValue oracle =
        mc_policy_value(config.sim, T, config.mc_rollouts,
                        detail::oracle_seed(config.base_seed, T));
    oracle_by_horizon[T] = oracle.value;
  }

  struct Cell {
    Eigen::Index n;
    int T;
    int repeat;
  };
  std::vector<Cell> cells;
  for (Eigen::Index n : config.n_grid)
    for (int T : config.t_grid)
      for (int r = 0; r < config.repeats; ++r) cells.push_back({n, T, r});

  const std::size_t total = cells.size();
  std::vector<std::unique_ptr<RunRecord>> results(total);
  const int budget =
      std::min<int>(worker_budget(), static_cast<int>(std::max<std::size_t>(total, 1)));

  if (budget <= 1) {
    ExperimentOutput out;
    out.records.reserve(total);
    for (const Cell& cell : cells) {
      RunRecord rec = run_cell(config, pool, cell.n, cell.T, cell.repeat,
                               oracle_by_horizon.at(cell.T));
      records_out << detail::format_record(rec) << "\n";
      if (!records_out.flush())
        throw IoError("write failed: " + config.output_path);
      out.records.push_back(std::move(rec));
    }
    out.summary = summarize(out.records);
    save_summary_csv(out.summary,
                     detail::sibling_path(config.output_path, ".summary.csv"));
    return out;
  }

  std::mutex mu;
  std::condition_variable cv;
  std::vector<char> ready(total, 0);
  std::exception_ptr failure;
  std::atomic<std::size_t> next{0};
  std::atomic<bool> abort{false};

  auto worker = [&]() {
    while (!abort.load()) {
      const std::size_t i = next.fetch_add(1);
      if (i >= total) return;
      try {
        auto rec = std::make_unique<RunRecord>(
            run_cell(config, pool, cells[i].n, cells[i].T, cells[i].repeat,
                     oracle_by_horizon.at(cells[i].T)));
        std::lock_guard<std::mutex> lock(mu);
        results[i] = std::move(rec);
        ready[i] = 1;
      } catch (...) {
        std::lock_guard<std::mutex> lock(mu);
        if (!failure) failure = std::current_exception();
        abort.store(true);
      }
      cv.notify_all();
    }
  };

  std::vector<std::thread> threads;
  threads.reserve(static_cast<std::size_t>(budget));
  for (int i = 0; i < budget; ++i) threads.emplace_back(worker);

  ExperimentOutput out;
  out.records.reserve(total);
  {
    std::unique_lock<std::mutex> lock(mu);
    for (std::size_t i = 0; i < total; ++i) {
      cv.wait(lock, [&] { return ready[i] || failure; });
      if (failure) break;
      lock.unlock();
      records_out << detail::format_record(*results[i]) << "\n";
      if (!records_out.flush()) {
        lock.lock();
        if (!failure)
          failure = std::make_exception_ptr(
              IoError("write failed: " + config.output_path));
        abort.store(true);
        break;
      }
      out.records.push_back(std::move(*results[i]));
      lock.lock();
    }
  }
  for (std::thread& t : threads) t.join();
  if (failure) std::rethrow_exception(failure);

  out.summary = summarize(out.records);
  save_summary_csv(out.summary,
                   detail::sibling_path(config.output_path, ".summary.csv"));
  return out;
}

std::vector<SummaryRow> summarize(const std::vector<RunRecord>& records) {
  std::map<std::pair<long long, int>, std::vector<double>> groups;
  for (const RunRecord& rec : records)
    groups[{static_cast<long long>(rec.n), rec.T}].push_back(rec.abs_error);

  std::vector<SummaryRow> rows;
  rows.reserve(groups.size());
  for (const auto& [key, errors] : groups) {
    SummaryRow row;
    row.n = key.first;
    row.T = key.second;
    const double count = static_cast<double>(errors.size());
    double sum = 0.0;
    for (double e : errors) sum += e;
    row.mae = sum / count;
    if (errors.size() > 1) {
      double ss = 0.0;
      for (double e : errors) ss += (e - row.mae) * (e - row.mae);
      row.se = std::sqrt(ss / (count - 1.0)) / std::sqrt(count);
    }
    rows.push_back(row);
  }

  for (SummaryRow& row : rows) {
    std::vector<std::pair<double, double>> vs_n, vs_t;
    for (const SummaryRow& other : rows) {
      if (other.T == row.T && other.mae > 0.0)
        vs_n.emplace_back(std::log(static_cast<double>(other.n)),
                          std::log(other.mae));
      if (other.n == row.n && other.mae > 0.0)
        vs_t.emplace_back(std::log(static_cast<double>(other.T)),
                          std::log(other.mae));
    }
    const double sn = slope_or_nan(vs_n);
    const double st = slope_or_nan(vs_t);
    if (std::isfinite(sn)) row.slope_vs_n = sn;
    if (std::isfinite(st)) row.slope_vs_T = st;
  }
  return rows;
}

ExperimentConfig parse_experiment_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config: " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw InvalidInput("cannot parse config " + path + ": " + e.what());
  }
  if (!j.is_object()) throw InvalidInput("config root must be a JSON object");

  static const char* known_keys[] = {"n_grid",     "t_grid",    "repeats",
                                     "base_seed",  "scale_pool", "folds",
                                     "mc_rollouts", "sim_overrides",
                                     "output_path"};
  for (const auto& [key, _] : j.items()) {
    bool ok = false;
    for (const char* k : known_keys) ok = ok || key == k;
    if (!ok) throw InvalidInput("unknown config key: " + key);
  }

  ExperimentConfig config;
  try {
    if (!j.contains("n_grid") || !j.contains("t_grid") ||
        !j.contains("output_path"))
      throw InvalidInput("config requires n_grid, t_grid and output_path");
    for (const auto& v : j.at("n_grid"))
      config.n_grid.push_back(static_cast<Eigen::Index>(v.get<std::int64_t>()));
    config.t_grid = j.at("t_grid").get<std::vector<int>>();
    config.repeats = j.value("repeats", 1);
    config.base_seed = j.value("base_seed", std::uint64_t{0});
    config.folds = j.value("folds", 5);
    config.mc_rollouts = j.value("mc_rollouts", std::int64_t{50000});
    config.output_path = j.at("output_path").get<std::string>();

    if (j.contains("scale_pool")) {
      const nlohmann::json& sp = j.at("scale_pool");
      for (const auto& [key, _] : sp.items())
        if (key != "count" && key != "lo" && key != "hi" && key != "spacing")
          throw InvalidInput("unknown scale_pool key: " + key);
      config.scale_pool.count = sp.value("count", 30);
      config.scale_pool.lo = sp.value("lo", 0.001);
      config.scale_pool.hi = sp.value("hi", 0.05);
      const std::string spacing = sp.value("spacing", std::string("log"));
      if (spacing != "log")
        throw InvalidInput("scale_pool.spacing must be \"log\"");
    }

    if (j.contains("sim_overrides")) {
      const nlohmann::json& so = j.at("sim_overrides");
      if (!so.is_object())
        throw InvalidInput("sim_overrides must be an object");
      SimParams& sim = config.sim;
      const auto read_vec2 = [](const nlohmann::json& v, const std::string& key) {
        if (!v.is_array() || v.size() != 2)
          throw InvalidInput(key + " must be a 2-element array");
        return Eigen::Vector2d(v[0].get<double>(), v[1].get<double>());
      };
      for (const auto& [key, value] : so.items()) {
        if (key == "alpha0") sim.alpha0 = value.get<double>();
        else if (key == "alpha_a") sim.alpha_a = value.get<double>();
        else if (key == "alpha_s") sim.alpha_s = read_vec2(value, key);
        else if (key == "mu0") sim.mu0 = value.get<double>();
        else if (key == "mu_a") sim.mu_a = value.get<double>();
        else if (key == "mu_s") sim.mu_s = read_vec2(value, key);
        else if (key == "kappa0") sim.kappa0 = value.get<double>();
        else if (key == "kappa_a") sim.kappa_a = value.get<double>();
        else if (key == "kappa_s") sim.kappa_s = read_vec2(value, key);
        else if (key == "sigma") {
          if (!value.is_array() || value.size() != 3)
            throw InvalidInput("sigma must be a 3x3 array");
          for (int r = 0; r < 3; ++r) {
            const nlohmann::json& row = value[static_cast<std::size_t>(r)];
            if (!row.is_array() || row.size() != 3)
              throw InvalidInput("sigma must be a 3x3 array");
            for (int c = 0; c < 3; ++c)
              sim.sigma(r, c) = row[static_cast<std::size_t>(c)].get<double>();
          }
        } else if (key == "t0") sim.t0 = value.get<double>();
        else if (key == "tu") sim.tu = value.get<double>();
        else if (key == "ts") sim.ts = read_vec2(value, key);
        else if (key == "reward_noise_halfwidth")
          sim.reward_noise_halfwidth = value.get<double>();
        else if (key == "epsilon_greedy")
          sim.epsilon_greedy = value.get<double>();
        else if (key == "s1_sampler") {
          const std::string name = value.get<std::string>();
          if (name == "std_normal")
            sim.s1_sampler = InitialStateSampler::StdNormal;
          else if (name == "std_uniform_box")
            sim.s1_sampler = InitialStateSampler::StdUniformBox;
          else
            throw InvalidInput("unknown s1_sampler: " + name);
        } else {
          throw InvalidInput("unknown sim_overrides key: " + key);
        }
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw InvalidInput("malformed config " + path + ": " + e.what());
  }

  validate_config(config);
  return config;
}

void save_records_csv(const std::vector<RunRecord>& records,
                      const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open for writing: " + path);
  out << detail::records_header() << "\n";
  for (const RunRecord& rec : records) out << detail::format_record(rec) << "\n";
  if (!out.flush()) throw IoError("write failed: " + path);
}

std::vector<RunRecord> load_records_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open for reading: " + path);
  std::string line;
  if (!std::getline(in, line) || line != detail::records_header())
    throw IoError("unexpected header in " + path);

  std::vector<RunRecord> records;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const std::vector<std::string> parts = split(line, ',');
    if (parts.size() != 9)
      throw IoError("expected 9 columns at row " + std::to_string(line_no) +
                    " in " + path);
    RunRecord rec;
    rec.n = parse_int(parts[0], "n");
    rec.T = static_cast<int>(parse_int(parts[1], "T"));
    rec.repeat_index = static_cast<int>(parse_int(parts[2], "repeat_index"));
    rec.seed = parse_uint(parts[3], "seed");
    rec.value_estimate = parse_double(parts[4], "value_estimate");
    rec.oracle_value = parse_double(parts[5], "oracle_value");
    rec.abs_error = parse_double(parts[6], "abs_error");
    rec.wall_time_seconds = parse_double(parts[7], "wall_time_seconds");
    if (!parts[8].empty())
      for (const std::string& s : split(parts[8], ';'))
        rec.per_step_scales.push_back(parse_double(s, "per_step_scales"));
    records.push_back(std::move(rec));
  }
  return records;
}

void save_summary_csv(const std::vector<SummaryRow>& summary,
                      const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open for writing: " + path);
  out << "n,T,mae,se,slope_vs_T,slope_vs_n\n";
  for (const SummaryRow& row : summary) {
    out << row.n << "," << row.T << "," << format_double(row.mae) << ","
        << format_double(row.se) << ",";
    if (row.slope_vs_T) out << format_double(*row.slope_vs_T);
    out << ",";
    if (row.slope_vs_n) out << format_double(*row.slope_vs_n);
    out << "\n";
  }
  if (!out.flush()) throw IoError("write failed: " + path);
}

int worker_budget() {
  int budget = static_cast<int>(std::thread::hardware_concurrency());
  if (budget < 1) budget = 1;
  const char* env = std::getenv("OPE_WORKERS");
  if (env && *env) {
    char* end = nullptr;
    const long cap = std::strtol(env, &end, 10);
    if (end == env || *end != '\0' || cap < 1)
      throw InvalidInput("OPE_WORKERS must be a positive integer");
    budget = std::min<int>(budget, static_cast<int>(cap));
  }
  return budget;
}

namespace detail {

std::uint64_t run_seed(std::uint64_t base_seed, Eigen::Index n, int T,
                       int repeat) {
  return derive_seed(base_seed,
                     {stream::kRun, static_cast<std::uint64_t>(n),
                      static_cast<std::uint64_t>(T),
                      static_cast<std::uint64_t>(repeat)});
}

std::uint64_t oracle_seed(std::uint64_t base_seed, int T) {
  return derive_seed(base_seed,
                     {stream::kOracle, static_cast<std::uint64_t>(T)});
}

std::string records_header() {
  return "n,T,repeat_index,seed,value_estimate,oracle_value,abs_error,"
         "wall_time_seconds,per_step_scales";
}

std::string format_record(const RunRecord& record) {
  std::ostringstream out;
  out << record.n << "," << record.T << "," << record.repeat_index << ","
      << record.seed << "," << format_double(record.value_estimate) << ","
      << format_double(record.oracle_value) << ","
      << format_double(record.abs_error) << ",";
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.6f", record.wall_time_seconds);
  out << buf << ",";
  for (std::size_t i = 0; i < record.per_step_scales.size(); ++i) {
    if (i > 0) out << ";";
    out << format_double(record.per_step_scales[i]);
  }
  return out.str();
}

std::string sibling_path(const std::string& output_path,
                         const std::string& suffix) {
  const std::string ext = ".csv";
  if (output_path.size() > ext.size() &&
      output_path.compare(output_path.size() - ext.size(), ext.size(), ext) == 0)
    return output_path.substr(0, output_path.size() - ext.size()) + suffix;
  return output_path + suffix;
}

}  // namespace detail

}  // namespace ope
