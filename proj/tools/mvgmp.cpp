// mvgmp: analytic tables, workload simulation and protocol trace replay.

#include <CLI11.hpp>

#include <fstream>
#include <iostream>

#include "mvgmp/cell.hpp"
#include "mvgmp/cli.hpp"

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitInvariant = 3;

}  // namespace

int main(int argc, char** argv) {
  using namespace mvgmp;

  CLI::App app{"Multi-view 3D video multicast: analysis, simulation and protocol traces"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(cli::kToolVersion));

  cli::AnalyticOptions an;
  std::string an_out;
  CLI::App* analytic = app.add_subcommand("analytic", "Closed-form values with optional oracle");
  analytic->add_option("formula", an.formula, "theorem1|corollary1|theorem2|corollary2|theorem3")
      ->required();
  analytic->add_option("--p", an.p, "Loss probability (success for theorem3)")->delimiter(',');
  analytic->add_option("--R", an.R, "DIBR range")->delimiter(',');
  analytic->add_option("--Rtilde", an.Rtilde, "Delivery spacing")->delimiter(',');
  analytic->add_option("--m", an.m, "Zipf period")->delimiter(',');
  analytic->add_option("--s", an.s, "Zipf exponent")->delimiter(',');
  analytic->add_option("--c", an.c, "Zipf normalizer")->delimiter(',');
  analytic->add_option("--M", an.M, "Total views (theorem1, corollary1)");
  analytic->add_option("--view", an.views, "Desired view(s)")->delimiter(',');
  analytic->add_option("--n", an.n, "Broadcasts per view (theorem1, corollary1)");
  analytic->add_option("--pselect", an.p_select, "Subscription probability (theorem2 oracle)");
  analytic->add_flag("--oracle", an.oracle, "Add the matching oracle columns");
  analytic->add_option("--samples", an.samples, "Oracle sample count (views)");
  analytic->add_option("--seed", an.seed, "Oracle seed");
  analytic->add_option("--out", an_out, "Write CSV here instead of stdout");

  cli::SimulateOptions sim;
  std::string sim_config, sim_seeds, sim_out, sim_scheme;
  std::int64_t sim_frames = 0;
  CLI::App* simulate = app.add_subcommand("simulate", "Run the workload simulation");
  simulate->add_option("--config", sim_config, "TOML configuration file");
  simulate->add_option("--seed", sim_seeds, "Seed list, e.g. 1,2,3 (else $MVGMP_SIM_SEED)");
  simulate->add_option("--out", sim_out, "Output directory");
  CLI::Option* frames_opt = simulate->add_option("--frames", sim_frames, "Frames per run");
  simulate->add_option("--scheme", sim_scheme, "mvgmp|baseline|both")
      ->check(CLI::IsMember({"mvgmp", "baseline", "both"}));
  simulate->add_option("--jobs", sim.jobs, "Worker threads");

  std::string trace_script, trace_out;
  CLI::App* trace = app.add_subcommand("trace", "Replay a protocol event script");
  trace->add_option("script", trace_script, "Event script")->required();
  trace->add_option("--out", trace_out, "Output directory for trace.txt");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  try {
    if (*analytic) {
      if (an_out.empty()) {
        cli::run_analytic(an, std::cout);
      } else {
        std::ofstream f(an_out, std::ios::binary);
        if (!f) throw cli::ConfigError("cannot write " + an_out);
        cli::run_analytic(an, f);
      }
    } else if (*simulate) {
      if (!sim_config.empty()) sim.config_path = sim_config;
      if (!sim_seeds.empty()) sim.seeds = cli::parse_seed_list(sim_seeds);
      if (!sim_out.empty()) sim.out_dir = sim_out;
      if (frames_opt->count() > 0) sim.frames = sim_frames;
      if (sim_scheme == "mvgmp") sim.scheme = sim::Scheme::kMvgmp;
      if (sim_scheme == "baseline") sim.scheme = sim::Scheme::kBaseline;
      if (sim_scheme == "both") sim.scheme = sim::Scheme::kBoth;
      const auto dir = cli::simulate(sim);
      std::cerr << "wrote " << dir.string() << '\n';
    } else if (*trace) {
      std::ifstream in(trace_script);
      if (!in) throw cli::ConfigError("cannot read " + trace_script);
      const std::vector<std::string> lines = cli::replay_trace(in);
      if (trace_out.empty()) {
        for (const std::string& l : lines) std::cout << l << '\n';
      } else {
        std::filesystem::create_directories(trace_out);
        std::ofstream f(std::filesystem::path(trace_out) / "trace.txt", std::ios::binary);
        for (const std::string& l : lines) f << l << '\n';
        if (!f) throw cli::ConfigError("cannot write trace.txt");
      }
    }
  } catch (const cli::ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const protocol::InvariantViolation& e) {
    std::cerr << "invariant violated: " << e.what() << '\n';
    return kExitInvariant;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
