#pragma once

// Configuration, sweep execution, CSV emission and trace replay behind the
// `mvgmp` command-line tool.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "mvgmp/sim.hpp"

namespace mvgmp::cli {

inline constexpr std::string_view kToolVersion = "0.1.0";

/// Invalid configuration, arguments or script; maps to exit code 2.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct SweepConfig {
  /// One of: "" (single point), dibr_range, views, loading_ratio,
  /// population, initial_users, arrival_prob, departure_prob,
  /// view_change_prob, failure_threshold.
  std::string parameter;
  std::vector<double> values;
  double load_sum = 0.5;         // lambda + mu held fixed across a loading_ratio sweep
  double population_rate = 0.25;  // lambda = mu for a population sweep
  std::vector<std::uint64_t> seeds{1};
};

struct OutputConfig {
  std::string dir = "out";
  bool frames_csv = true;
};

struct RunConfig {
  sim::ScenarioConfig scenario;
  SweepConfig sweep;
  OutputConfig output;
};

/// Parses a TOML document; unknown keys are rejected. Throws ConfigError.
RunConfig parse_config(std::string_view text, std::string_view source_name = "<config>");
RunConfig load_config(const std::filesystem::path& path);
/// The fully resolved configuration as TOML; parse_config reads it back.
std::string to_toml(const RunConfig& cfg);

std::string format_double(double x);

struct SweepPoint {
  std::string parameter;  // empty for a single-point run
  double value = 0.0;
  sim::ScenarioConfig scenario;
};

/// Expands and validates every sweep point. Throws ConfigError.
std::vector<SweepPoint> expand_sweep(const RunConfig& cfg);

struct SeedRun {
  std::size_t point = 0;
  std::uint64_t seed = 0;
  sim::ScenarioResult result;
};

/// Runs every (point, seed) pair on up to `jobs` threads; results come back
/// in (point, seed) order whatever the thread count.
std::vector<SeedRun> run_sweep(const std::vector<SweepPoint>& points,
                               const std::vector<std::uint64_t>& seeds, int jobs);

void write_frames_csv(std::ostream& out, const std::vector<SweepPoint>& points,
                      const std::vector<SeedRun>& runs);
void write_summary_csv(std::ostream& out, const std::vector<SweepPoint>& points,
                       const std::vector<SeedRun>& runs);

/// Parses "1,2,3". Throws ConfigError.
std::vector<std::uint64_t> parse_seed_list(std::string_view text);

struct SimulateOptions {
  std::optional<std::filesystem::path> config_path;
  std::vector<std::uint64_t> seeds;  // empty: environment, then config
  std::optional<std::string> out_dir;
  std::optional<std::int64_t> frames;
  std::optional<sim::Scheme> scheme;
  int jobs = 1;
};

/// Full `simulate` flow: manifest.toml, then frames.csv and summary.csv.
/// Removes what it wrote if anything fails. Returns the output directory.
std::filesystem::path simulate(const SimulateOptions& opts);

struct AnalyticOptions {
  std::string formula;  // theorem1, corollary1, theorem2, corollary2, theorem3
  std::vector<double> p;
  std::vector<int> R;
  std::vector<int> Rtilde;
  std::vector<int> m;
  std::vector<double> s;
  std::vector<double> c;
  std::vector<int> views;  // theorem1: grid of desired views; corollary1: the set
  int M = 16;
  int n = 1;
  double p_select = 1.0;
  bool oracle = false;
  std::uint64_t samples = 100000;
  std::uint64_t seed = 1;
};

/// Writes the closed-form grid (and oracle columns) as CSV.
void run_analytic(const AnalyticOptions& opts, std::ostream& out);

/// Replays a trace script through the protocol and returns the trace
/// lines. Malformed lines raise ConfigError naming the line number.
std::vector<std::string> replay_trace(std::istream& script);

}  // namespace mvgmp::cli
