#include "mvgmp/cli.hpp"

#include <toml.hpp>

#include <algorithm>
#include <atomic>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <set>
#include <sstream>
#include <thread>

#include "mvgmp/analytics.hpp"
#include "mvgmp/cell.hpp"
#include "mvgmp/oracle.hpp"

namespace mvgmp::cli {
namespace {

// ---------------------------------------------------------------- config

class Section {
 public:
  Section(const toml::table* table, std::string name) : table_(table), name_(std::move(name)) {}

  const toml::node* node(const char* key) {
    seen_.insert(key);
    return table_ == nullptr ? nullptr : table_->get(key);
  }

  std::string where(const char* key) const {
    return name_.empty() ? std::string(key) : name_ + "." + key;
  }

  void read(const char* key, double& out) {
    if (const toml::node* n = node(key)) {
      if (!n->is_number()) throw ConfigError(where(key) + " must be a number");
      out = n->value<double>().value();
    }
  }

  template <typename Int>
    requires std::is_integral_v<Int>
  void read(const char* key, Int& out) {
    if (const toml::node* n = node(key)) {
      if (!n->is_integer()) throw ConfigError(where(key) + " must be an integer");
      const std::int64_t v = n->value<std::int64_t>().value();
      if (v < static_cast<std::int64_t>(std::numeric_limits<Int>::min()) ||
          static_cast<std::uint64_t>(std::max<std::int64_t>(v, 0)) >
              static_cast<std::uint64_t>(std::numeric_limits<Int>::max()))
        throw ConfigError(where(key) + " is out of range");
      out = static_cast<Int>(v);
    }
  }

  void read(const char* key, bool& out) {
    if (const toml::node* n = node(key)) {
      if (!n->is_boolean()) throw ConfigError(where(key) + " must be true or false");
      out = n->value<bool>().value();
    }
  }

  void read(const char* key, std::string& out) {
    if (const toml::node* n = node(key)) {
      if (!n->is_string()) throw ConfigError(where(key) + " must be a string");
      out = n->value<std::string>().value();
    }
  }

  void read(const char* key, std::vector<double>& out) {
    if (const toml::node* n = node(key)) out = numbers(*n, where(key));
  }

  static std::vector<double> numbers(const toml::node& n, const std::string& where) {
    const toml::array* arr = n.as_array();
    if (arr == nullptr) throw ConfigError(where + " must be an array of numbers");
    std::vector<double> out;
    for (const toml::node& x : *arr) {
      if (!x.is_number()) throw ConfigError(where + " must be an array of numbers");
      out.push_back(x.value<double>().value());
    }
    return out;
  }

  const toml::table* sub(const char* key) {
    const toml::node* n = node(key);
    if (n == nullptr) return nullptr;
    if (!n->is_table()) throw ConfigError(where(key) + " must be a table");
    return n->as_table();
  }

  void finish() const {
    if (table_ == nullptr) return;
    for (auto&& [k, v] : *table_)
      if (!seen_.contains(std::string(k.str())))
        throw ConfigError("unknown key " + where(std::string(k.str()).c_str()));
  }

 private:
  const toml::table* table_;
  std::string name_;
  std::set<std::string> seen_;
};

const std::map<std::string, sim::Preference::Kind> kPreferences{
    {"uniform", sim::Preference::Kind::kUniform},
    {"zipf", sim::Preference::Kind::kZipf},
    {"normal", sim::Preference::Kind::kNormal}};

const std::map<std::string, sim::Scheme> kSchemes{
    {"mvgmp", sim::Scheme::kMvgmp}, {"baseline", sim::Scheme::kBaseline}, {"both", sim::Scheme::kBoth}};

const std::set<std::string> kSweepParams{"",
                                         "dibr_range",
                                         "views",
                                         "loading_ratio",
                                         "population",
                                         "initial_users",
                                         "arrival_prob",
                                         "departure_prob",
                                         "view_change_prob",
                                         "failure_threshold"};

template <typename Map>
std::string name_of(const Map& map, typename Map::mapped_type value) {
  for (const auto& [k, v] : map)
    if (v == value) return k;
  return "?";
}

void read_loss(Section& sec, channel::LossModel& loss) {
  std::string model = loss.is_explicit() ? "explicit" : "sigmoid";
  sec.read("model", model);
  if (model == "sigmoid") {
    channel::SigmoidLoss s = loss.is_explicit() ? channel::SigmoidLoss{} : loss.sigmoid();
    sec.read("cell_radius_m", s.cell_radius_m);
    sec.read("width_m", s.width_m);
    sec.read("midpoint_m", s.midpoint_m);
    sec.read("channel_offset_m", s.channel_offset_m);
    loss = channel::LossModel(std::move(s));
  } else if (model == "explicit") {
    channel::ExplicitLossMatrix m;
    const toml::node* rows = sec.node("rows");
    if (rows == nullptr || !rows->is_array())
      throw ConfigError("phy.loss.rows must be an array of users");
    for (const toml::node& user : *rows->as_array()) {
      if (!user.is_array()) throw ConfigError("phy.loss.rows entries must be arrays of channels");
      std::vector<std::vector<double>> row;
      for (const toml::node& ch : *user.as_array())
        row.push_back(Section::numbers(ch, "phy.loss.rows"));
      m.rows.push_back(std::move(row));
    }
    loss = channel::LossModel(std::move(m));
  } else {
    throw ConfigError("phy.loss.model must be \"sigmoid\" or \"explicit\"");
  }
  sec.finish();
}

void validate_scenario(const sim::ScenarioConfig& sc) {
  try {
    sc.workload.validate();
    sc.phy.validate();
    sc.loss.validate(sc.phy);
    sc.protocol.validate();
    if (sc.warmup < 0) throw std::invalid_argument("warmup must be >= 0");
    if (sc.loss.is_explicit() && sc.loss.matrix().rows.empty())
      throw std::invalid_argument("explicit loss matrix has no rows");
    const int ranks = sc.workload.preference.zipf_ranks;
    if (ranks > sc.synthesis.total_views())
      throw std::invalid_argument("zipf ranks exceed the view count");
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
}

// ------------------------------------------------------------ formatting

std::string fmt(std::uint64_t x) { return std::to_string(x); }
std::string fmt(std::int64_t x) { return std::to_string(x); }
std::string fmt_opt(double x) { return std::isfinite(x) ? format_double(x) : std::string(); }

// Across-seed mean and 95% half-width.
std::pair<double, double> mean_ci(const std::vector<double>& xs) {
  if (xs.empty()) return {std::nan(""), std::nan("")};
  double sum = 0;
  for (double x : xs) sum += x;
  const double mean = sum / static_cast<double>(xs.size());
  if (xs.size() < 2) return {mean, 0.0};
  double ss = 0;
  for (double x : xs) ss += (x - mean) * (x - mean);
  const double n = static_cast<double>(xs.size());
  return {mean, 1.96 * std::sqrt(ss / (n - 1) / n)};
}

double frame_alpha(const std::map<UserId, double>& success) {
  if (success.empty()) return std::nan("");
  double sum = 0;
  for (const auto& [u, x] : success) sum += x;
  return sum / static_cast<double>(success.size());
}

}  // namespace

// ---------------------------------------------------------------- config

RunConfig parse_config(std::string_view text, std::string_view source_name) {
  toml::table root;
  try {
    root = toml::parse(text, source_name);
  } catch (const toml::parse_error& e) {
    std::ostringstream os;
    os << source_name << ":" << e.source().begin.line << ": " << e.description();
    throw ConfigError(os.str());
  }

  RunConfig cfg;
  sim::ScenarioConfig& sc = cfg.scenario;
  Section top(&root, "");

  {
    Section sec(top.sub("phy"), "phy");
    channel::PhyConfig& phy = sc.phy;
    sec.read("bandwidth_mhz", phy.channel_bandwidth_mhz);
    sec.read("carrier_ghz", phy.carrier_ghz);
    sec.read("channels", phy.num_channels);
    sec.read("rates_mbps", phy.rates_mbps);
    sec.read("view_size_bits", phy.view_size_bits);
    sec.read("time_unit_s", phy.time_unit_s);
    sec.read("ofdm_data_symbols", phy.ofdm_data_symbols);
    sec.read("subcarriers", phy.subcarriers);
    sec.read("tx_power_dbm", phy.tx_power_dbm);
    sec.read("overhead_units", phy.overhead_units);
    Section loss(sec.sub("loss"), "phy.loss");
    read_loss(loss, sc.loss);
    sec.finish();
  }
  {
    Section sec(top.sub("workload"), "workload");
    sim::WorkloadConfig& w = sc.workload;
    int views = sc.synthesis.total_views();
    int range = sc.synthesis.dibr_range();
    int spacing = sc.synthesis.spacing();
    sec.read("views", views);
    sec.read("dibr_range", range);
    sec.read("spacing", spacing);
    try {
      sc.synthesis = SynthesisConfig(views, range, spacing);
    } catch (const std::invalid_argument& e) {
      throw ConfigError(std::string("workload: ") + e.what());
    }
    sec.read("initial_users", w.initial_users);
    sec.read("arrival_prob", w.arrival_prob);
    sec.read("departure_prob", w.departure_prob);
    sec.read("view_change_prob", w.view_change_prob);
    sec.read("frames", w.frames);
    sec.read("warmup", sc.warmup);
    std::string pref = name_of(kPreferences, w.preference.kind);
    sec.read("preference", pref);
    if (!kPreferences.contains(pref))
      throw ConfigError("workload.preference must be uniform, zipf or normal");
    w.preference.kind = kPreferences.at(pref);
    sec.read("zipf_exponent", w.preference.zipf_exponent);
    sec.read("zipf_ranks", w.preference.zipf_ranks);
    sec.read("normal_mean", w.preference.normal_mean);
    sec.read("normal_variance", w.preference.normal_variance);
    std::string sub = w.subscription == sim::Subscribe::kAllViews ? "all" : "single";
    sec.read("subscription", sub);
    if (sub != "single" && sub != "all")
      throw ConfigError("workload.subscription must be single or all");
    w.subscription = sub == "all" ? sim::Subscribe::kAllViews : sim::Subscribe::kSingleView;
    sec.read("silent_departure_fraction", w.silent_departure_fraction);
    sec.read("channel_reroll_prob", w.channel_reroll_prob);
    std::string scheme = name_of(kSchemes, sc.scheme);
    sec.read("scheme", scheme);
    if (!kSchemes.contains(scheme))
      throw ConfigError("workload.scheme must be mvgmp, baseline or both");
    sc.scheme = kSchemes.at(scheme);
    sec.finish();
  }
  {
    Section sec(top.sub("protocol"), "protocol");
    protocol::ProtocolParams& p = sc.protocol;
    sec.read("failure_threshold", p.failure_threshold);
    sec.read("max_aux_views", p.max_aux_views);
    sec.read("max_tx_count", p.max_tx_count);
    sec.read("soft_state_timeout", p.soft_state_timeout);
    sec.finish();
  }
  {
    Section sec(top.sub("sweep"), "sweep");
    SweepConfig& s = cfg.sweep;
    sec.read("parameter", s.parameter);
    sec.read("values", s.values);
    sec.read("load_sum", s.load_sum);
    sec.read("population_rate", s.population_rate);
    if (const toml::node* n = sec.node("seeds")) {
      const toml::array* arr = n->as_array();
      if (arr == nullptr || arr->empty()) throw ConfigError("sweep.seeds must be a non-empty array");
      s.seeds.clear();
      for (const toml::node& x : *arr) {
        if (!x.is_integer() || x.value<std::int64_t>().value() < 0)
          throw ConfigError("sweep.seeds must hold non-negative integers");
        s.seeds.push_back(static_cast<std::uint64_t>(x.value<std::int64_t>().value()));
      }
    }
    sec.finish();
  }
  {
    Section sec(top.sub("output"), "output");
    sec.read("dir", cfg.output.dir);
    sec.read("frames_csv", cfg.output.frames_csv);
    sec.finish();
  }
  top.finish();
  validate_scenario(sc);
  expand_sweep(cfg);
  return cfg;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read config " + path.string());
  std::ostringstream text;
  text << in.rdbuf();
  return parse_config(text.str(), path.string());
}

namespace {

toml::table config_table(const RunConfig& cfg) {
  const sim::ScenarioConfig& sc = cfg.scenario;
  auto array_of = [](const std::vector<double>& xs) {
    toml::array a;
    for (double x : xs) a.push_back(x);
    return a;
  };

  toml::table loss;
  if (sc.loss.is_explicit()) {
    loss.insert("model", "explicit");
    toml::array rows;
    for (const auto& user : sc.loss.matrix().rows) {
      toml::array row;
      for (const auto& ch : user) row.push_back(array_of(ch));
      rows.push_back(std::move(row));
    }
    loss.insert("rows", std::move(rows));
  } else {
    const channel::SigmoidLoss& s = sc.loss.sigmoid();
    loss.insert("model", "sigmoid");
    loss.insert("cell_radius_m", s.cell_radius_m);
    loss.insert("width_m", s.width_m);
    loss.insert("midpoint_m", array_of(s.midpoint_m));
    loss.insert("channel_offset_m", array_of(s.channel_offset_m));
  }

  const channel::PhyConfig& phy = sc.phy;
  toml::table phy_t;
  phy_t.insert("bandwidth_mhz", phy.channel_bandwidth_mhz);
  phy_t.insert("carrier_ghz", phy.carrier_ghz);
  phy_t.insert("channels", phy.num_channels);
  phy_t.insert("rates_mbps", array_of(phy.rates_mbps));
  phy_t.insert("view_size_bits", phy.view_size_bits);
  phy_t.insert("time_unit_s", phy.time_unit_s);
  phy_t.insert("ofdm_data_symbols", phy.ofdm_data_symbols);
  phy_t.insert("subcarriers", phy.subcarriers);
  phy_t.insert("tx_power_dbm", phy.tx_power_dbm);
  phy_t.insert("overhead_units", phy.overhead_units);
  phy_t.insert("loss", std::move(loss));

  const sim::WorkloadConfig& w = sc.workload;
  toml::table work;
  work.insert("views", sc.synthesis.total_views());
  work.insert("dibr_range", sc.synthesis.dibr_range());
  work.insert("spacing", sc.synthesis.spacing());
  work.insert("initial_users", w.initial_users);
  work.insert("arrival_prob", w.arrival_prob);
  work.insert("departure_prob", w.departure_prob);
  work.insert("view_change_prob", w.view_change_prob);
  work.insert("frames", w.frames);
  work.insert("warmup", sc.warmup);
  work.insert("preference", name_of(kPreferences, w.preference.kind));
  work.insert("zipf_exponent", w.preference.zipf_exponent);
  work.insert("zipf_ranks", w.preference.zipf_ranks);
  work.insert("normal_mean", w.preference.normal_mean);
  work.insert("normal_variance", w.preference.normal_variance);
  work.insert("subscription", w.subscription == sim::Subscribe::kAllViews ? "all" : "single");
  work.insert("silent_departure_fraction", w.silent_departure_fraction);
  work.insert("channel_reroll_prob", w.channel_reroll_prob);
  work.insert("scheme", name_of(kSchemes, sc.scheme));

  toml::table proto;
  proto.insert("failure_threshold", sc.protocol.failure_threshold);
  proto.insert("max_aux_views", sc.protocol.max_aux_views);
  proto.insert("max_tx_count", sc.protocol.max_tx_count);
  proto.insert("soft_state_timeout", sc.protocol.soft_state_timeout);

  toml::table sweep;
  sweep.insert("parameter", cfg.sweep.parameter);
  sweep.insert("values", array_of(cfg.sweep.values));
  sweep.insert("load_sum", cfg.sweep.load_sum);
  sweep.insert("population_rate", cfg.sweep.population_rate);
  toml::array seeds;
  for (std::uint64_t s : cfg.sweep.seeds) seeds.push_back(static_cast<std::int64_t>(s));
  sweep.insert("seeds", std::move(seeds));

  toml::table out;
  out.insert("dir", cfg.output.dir);
  out.insert("frames_csv", cfg.output.frames_csv);

  toml::table root;
  root.insert("phy", std::move(phy_t));
  root.insert("workload", std::move(work));
  root.insert("protocol", std::move(proto));
  root.insert("sweep", std::move(sweep));
  root.insert("output", std::move(out));
  return root;
}

}  // namespace

std::string to_toml(const RunConfig& cfg) {
  std::ostringstream os;
  os << config_table(cfg) << '\n';
  return os.str();
}

std::string format_double(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, res.ptr);
}

// ----------------------------------------------------------------- sweep

std::vector<SweepPoint> expand_sweep(const RunConfig& cfg) {
  const SweepConfig& s = cfg.sweep;
  if (!kSweepParams.contains(s.parameter))
    throw ConfigError("unknown sweep.parameter \"" + s.parameter + "\"");
  if (s.seeds.empty()) throw ConfigError("sweep.seeds must not be empty");
  for (std::uint64_t seed : s.seeds)
    if (seed > static_cast<std::uint64_t>(std::numeric_limits<std::int64_t>::max()))
      throw ConfigError("seeds must be below 2^63");
  if (s.parameter.empty()) {
    if (!s.values.empty()) throw ConfigError("sweep.values given without sweep.parameter");
    validate_scenario(cfg.scenario);
    return {SweepPoint{"", 0.0, cfg.scenario}};
  }
  if (s.values.empty()) throw ConfigError("sweep.values must not be empty");

  auto integral = [&](double v) {
    if (v != std::floor(v) || v < 0 || v > 1e9)
      throw ConfigError("sweep value " + format_double(v) + " for " + s.parameter +
                        " must be a non-negative integer");
    return static_cast<int>(v);
  };

  std::vector<SweepPoint> points;
  for (double v : s.values) {
    SweepPoint pt{s.parameter, v, cfg.scenario};
    sim::ScenarioConfig& sc = pt.scenario;
    sim::WorkloadConfig& w = sc.workload;
    try {
      if (s.parameter == "dibr_range") {
        const int spacing = std::min(sc.synthesis.spacing(), std::max(integral(v), 1));
        sc.synthesis = SynthesisConfig(sc.synthesis.total_views(), integral(v), spacing);
      } else if (s.parameter == "views") {
        sc.synthesis =
            SynthesisConfig(integral(v), sc.synthesis.dibr_range(), sc.synthesis.spacing());
      } else if (s.parameter == "loading_ratio") {
        if (!(v > 0)) throw ConfigError("loading ratio must be positive");
        w.arrival_prob = s.load_sum * v / (1.0 + v);
        w.departure_prob = s.load_sum / (1.0 + v);
      } else if (s.parameter == "population") {
        w.initial_users = integral(v);
        w.arrival_prob = s.population_rate;
        w.departure_prob = s.population_rate;
      } else if (s.parameter == "initial_users") {
        w.initial_users = integral(v);
      } else if (s.parameter == "arrival_prob") {
        w.arrival_prob = v;
      } else if (s.parameter == "departure_prob") {
        w.departure_prob = v;
      } else if (s.parameter == "view_change_prob") {
        w.view_change_prob = v;
      } else if (s.parameter == "failure_threshold") {
        sc.protocol.failure_threshold = v;
      }
    } catch (const std::invalid_argument& e) {
      throw ConfigError("sweep " + s.parameter + "=" + format_double(v) + ": " + e.what());
    }
    validate_scenario(sc);
    points.push_back(std::move(pt));
  }
  return points;
}

std::vector<SeedRun> run_sweep(const std::vector<SweepPoint>& points,
                               const std::vector<std::uint64_t>& seeds, int jobs) {
  std::vector<SeedRun> runs;
  for (std::size_t p = 0; p < points.size(); ++p)
    for (std::uint64_t seed : seeds) runs.push_back({p, seed, {}});
  std::vector<std::exception_ptr> errors(runs.size());

  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < runs.size(); i = next++) {
      try {
        sim::ScenarioConfig sc = points[runs[i].point].scenario;
        sc.workload.seed = runs[i].seed;
        runs[i].result = sim::run_scenario(sc);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const int n = std::clamp(jobs, 1, static_cast<int>(std::max<std::size_t>(runs.size(), 1)));
  if (n == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < n; ++t) pool.emplace_back(worker);
    for (std::thread& t : pool) t.join();
  }
  for (const std::exception_ptr& e : errors)
    if (e) std::rethrow_exception(e);
  return runs;
}

void write_frames_csv(std::ostream& out, const std::vector<SweepPoint>& points,
                      const std::vector<SeedRun>& runs) {
  out << "sweep_param,sweep_value,seed,frame,population,channel_time_mvgmp,"
         "channel_time_baseline,makespan_mvgmp,makespan_baseline,transmitted_views,"
         "baseline_streams,alpha_mvgmp,alpha_baseline\n";
  for (const SeedRun& run : runs) {
    const SweepPoint& pt = points[run.point];
    const bool m = pt.scenario.runs_mvgmp();
    const bool b = pt.scenario.runs_baseline();
    const std::string prefix = (pt.parameter.empty() ? "none" : pt.parameter) + "," +
                               (pt.parameter.empty() ? "" : format_double(pt.value)) + "," +
                               fmt(run.seed) + ",";
    for (const sim::FrameOutcome& f : run.result.frames) {
      out << prefix << f.frame << ',' << f.population << ','
          << (m ? fmt(f.channel_time_mvgmp) : "") << ','
          << (b ? fmt(f.channel_time_baseline) : "") << ','
          << (m ? fmt(f.makespan_mvgmp) : "") << ',' << (b ? fmt(f.makespan_baseline) : "")
          << ',' << (m ? fmt(static_cast<std::uint64_t>(f.transmitted_views)) : "") << ','
          << (b ? fmt(static_cast<std::uint64_t>(f.baseline_streams)) : "") << ','
          << (m ? fmt_opt(frame_alpha(f.success_mvgmp)) : "") << ','
          << (b ? fmt_opt(frame_alpha(f.success_baseline)) : "") << '\n';
    }
  }
}

void write_summary_csv(std::ostream& out, const std::vector<SweepPoint>& points,
                       const std::vector<SeedRun>& runs) {
  out << "sweep_param,sweep_value,seed,status,frames,mean_population,mean_ct_mvgmp,"
         "ci95_ct_mvgmp,mean_ct_baseline,ci95_ct_baseline,ct_ratio,mean_makespan_mvgmp,"
         "mean_makespan_baseline,alpha_mvgmp,alpha_baseline,failure_rate_mvgmp,"
         "failure_rate_baseline\n";

  struct Row {
    std::string status;
    std::string frames;
    double pop, ct_m, ci_m, ct_b, ci_b, ms_m, ms_b, a_m, a_b;
  };
  auto emit = [&](const SweepPoint& pt, const std::string& seed, const Row& r) {
    const bool m = pt.scenario.runs_mvgmp();
    const bool b = pt.scenario.runs_baseline();
    const double ratio = (m && b && r.ct_b > 0) ? r.ct_m / r.ct_b : std::nan("");
    out << (pt.parameter.empty() ? "none" : pt.parameter) << ','
        << (pt.parameter.empty() ? "" : format_double(pt.value)) << ',' << seed << ','
        << r.status << ',' << r.frames << ',' << fmt_opt(r.pop) << ','
        << (m ? fmt_opt(r.ct_m) : "") << ',' << (m ? fmt_opt(r.ci_m) : "") << ','
        << (b ? fmt_opt(r.ct_b) : "") << ',' << (b ? fmt_opt(r.ci_b) : "") << ','
        << fmt_opt(ratio) << ',' << (m ? fmt_opt(r.ms_m) : "") << ','
        << (b ? fmt_opt(r.ms_b) : "") << ',' << (m ? fmt_opt(r.a_m) : "") << ','
        << (b ? fmt_opt(r.a_b) : "") << ',' << (m ? fmt_opt(1.0 - r.a_m) : "") << ','
        << (b ? fmt_opt(1.0 - r.a_b) : "") << '\n';
  };

  const double nan = std::nan("");
  for (std::size_t p = 0; p < points.size(); ++p) {
    std::vector<double> pop, ct_m, ct_b, ms_m, ms_b, a_m, a_b;
    std::size_t frames = 0;
    for (const SeedRun& run : runs) {
      if (run.point != p) continue;
      const sim::Summary& s = run.result.summary;
      if (!s.sufficient) {
        emit(points[p], fmt(run.seed),
             Row{"insufficient data", "0", nan, nan, nan, nan, nan, nan, nan, nan, nan});
        continue;
      }
      frames += s.frames;
      emit(points[p], fmt(run.seed),
           Row{"ok", fmt(static_cast<std::uint64_t>(s.frames)), s.mean_population,
               s.mean_ct_mvgmp, s.ci95_ct_mvgmp, s.mean_ct_baseline, s.ci95_ct_baseline,
               s.mean_makespan_mvgmp, s.mean_makespan_baseline, s.alpha_mvgmp, s.alpha_baseline});
      pop.push_back(s.mean_population);
      ct_m.push_back(s.mean_ct_mvgmp);
      ct_b.push_back(s.mean_ct_baseline);
      ms_m.push_back(s.mean_makespan_mvgmp);
      ms_b.push_back(s.mean_makespan_baseline);
      if (std::isfinite(s.alpha_mvgmp)) a_m.push_back(s.alpha_mvgmp);
      if (std::isfinite(s.alpha_baseline)) a_b.push_back(s.alpha_baseline);
    }
    if (ct_m.empty()) {
      emit(points[p], "all",
           Row{"insufficient data", "0", nan, nan, nan, nan, nan, nan, nan, nan, nan});
      continue;
    }
    const auto [cm, cim] = mean_ci(ct_m);
    const auto [cb, cib] = mean_ci(ct_b);
    emit(points[p], "all",
         Row{"ok", fmt(static_cast<std::uint64_t>(frames)), mean_ci(pop).first, cm, cim, cb, cib,
             mean_ci(ms_m).first, mean_ci(ms_b).first, mean_ci(a_m).first,
             mean_ci(a_b).first});
  }
}

std::vector<std::uint64_t> parse_seed_list(std::string_view text) {
  std::vector<std::uint64_t> seeds;
  std::size_t start = 0;
  while (start <= text.size()) {
    const std::size_t end = std::min(text.find(',', start), text.size());
    const std::string_view tok = text.substr(start, end - start);
    std::uint64_t v = 0;
    const auto res = std::from_chars(tok.data(), tok.data() + tok.size(), v);
    if (tok.empty() || res.ec != std::errc() || res.ptr != tok.data() + tok.size() ||
        v > static_cast<std::uint64_t>(std::numeric_limits<std::int64_t>::max()))
      throw ConfigError("invalid seed \"" + std::string(tok) + "\"");
    seeds.push_back(v);
    start = end + 1;
  }
  return seeds;
}

// -------------------------------------------------------------- simulate

std::filesystem::path simulate(const SimulateOptions& opts) {
  namespace fs = std::filesystem;
  RunConfig cfg = opts.config_path ? load_config(*opts.config_path) : parse_config("");
  if (opts.frames) cfg.scenario.workload.frames = *opts.frames;
  if (opts.scheme) cfg.scenario.scheme = *opts.scheme;
  if (!opts.seeds.empty()) {
    cfg.sweep.seeds = opts.seeds;
  } else if (const char* env = std::getenv("MVGMP_SIM_SEED"); env != nullptr && *env != '\0') {
    cfg.sweep.seeds = parse_seed_list(env);
  }
  if (opts.out_dir) cfg.output.dir = *opts.out_dir;
  if (opts.jobs < 1) throw ConfigError("--jobs must be >= 1");
  const std::vector<SweepPoint> points = expand_sweep(cfg);

  const fs::path dir = cfg.output.dir;
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw ConfigError("cannot create output directory " + dir.string());

  std::vector<fs::path> written;
  auto open = [&](const char* name) {
    const fs::path path = dir / name;
    written.push_back(path);
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw std::runtime_error("cannot write " + path.string());
    return f;
  };
  try {
    {
      std::ofstream f = open("manifest.toml");
      const auto now = std::chrono::system_clock::now();
      toml::array seeds;
      for (std::uint64_t seed : cfg.sweep.seeds) seeds.push_back(static_cast<std::int64_t>(seed));
      toml::table manifest;
      manifest.insert("tool", "mvgmp");
      manifest.insert("version", std::string(kToolVersion));
      manifest.insert("timestamp_unix", static_cast<std::int64_t>(
          std::chrono::duration_cast<std::chrono::seconds>(now.time_since_epoch()).count()));
      manifest.insert("config_path",
                      opts.config_path ? opts.config_path->generic_string() : std::string());
      manifest.insert("output_dir", dir.generic_string());
      manifest.insert("seeds", std::move(seeds));
      manifest.insert("config", config_table(cfg));
      f << manifest << '\n';
      if (!f) throw std::runtime_error("failed writing manifest");
    }
    const std::vector<SeedRun> runs = run_sweep(points, cfg.sweep.seeds, opts.jobs);
    if (cfg.output.frames_csv) {
      std::ofstream f = open("frames.csv");
      write_frames_csv(f, points, runs);
      if (!f) throw std::runtime_error("failed writing frames.csv");
    }
    {
      std::ofstream f = open("summary.csv");
      write_summary_csv(f, points, runs);
      if (!f) throw std::runtime_error("failed writing summary.csv");
    }
  } catch (...) {
    for (const fs::path& p : written) fs::remove(p, ec);
    throw;
  }
  return dir;
}

// -------------------------------------------------------------- analytic

void run_analytic(const AnalyticOptions& o, std::ostream& out) {
  static const std::set<std::string> kFormulas{"theorem1", "corollary1", "theorem2", "corollary2",
                                               "theorem3"};
  if (!kFormulas.contains(o.formula)) throw ConfigError("unknown formula \"" + o.formula + "\"");
  auto need = [&](bool ok, const char* flag) {
    if (!ok) throw ConfigError(o.formula + " needs " + flag);
  };
  need(!o.p.empty(), "--p");
  need(!o.R.empty(), "--R");
  if (o.oracle && o.samples == 0) throw ConfigError("--samples must be positive");

  const Link link{0, 0};
  auto user_with = [&](double p) { return UserChannelState(0, {{link, p}}); };
  auto full_plan = [&](int M) {
    TransmissionPlan plan(M);
    for (ViewIndex v = 1; v <= M; ++v) plan.set(v, link, o.n);
    return plan;
  };
  const std::string oracle_cols = o.oracle ? ",oracle,oracle_se,samples,seed" : "";
  auto oracle_tail = [&](double mean, double se, std::uint64_t samples) {
    return "," + format_double(mean) + "," + format_double(se) + "," + fmt(samples) + "," +
           fmt(o.seed);
  };

  try {
    if (o.formula == "theorem1") {
      need(!o.views.empty(), "--view");
      out << "formula,p,R,M,n,view,analytic" << oracle_cols << '\n';
      for (double p : o.p)
        for (int R : o.R)
          for (ViewIndex v : o.views) {
            const SynthesisConfig cfg(o.M, R);
            const TransmissionPlan plan = full_plan(o.M);
            out << "theorem1," << format_double(p) << ',' << R << ',' << o.M << ',' << o.n << ','
                << v << ','
                << format_double(analytics::view_failure_prob(cfg, user_with(p), plan, v));
            if (o.oracle)
              out << oracle_tail(oracle::enumerate_failure_prob(cfg, user_with(p), plan, v), 0.0,
                                 0);
            out << '\n';
          }
    } else if (o.formula == "corollary1") {
      need(!o.views.empty(), "--view");
      out << "formula,p,R,M,n,views,analytic" << oracle_cols << '\n';
      std::string set;
      for (std::size_t i = 0; i < o.views.size(); ++i)
        set += (i ? ";" : "") + std::to_string(o.views[i]);
      for (double p : o.p)
        for (int R : o.R) {
          const SynthesisConfig cfg(o.M, R);
          const TransmissionPlan plan = full_plan(o.M);
          const Subscription sub(0, o.views, o.M);
          out << "corollary1," << format_double(p) << ',' << R << ',' << o.M << ',' << o.n << ','
              << set << ','
              << format_double(analytics::expected_alpha_exact(cfg, user_with(p), plan, sub).value);
          if (o.oracle) {
            double success = 0;
            for (ViewIndex v : sub.desired())
              success += 1.0 - oracle::enumerate_failure_prob(cfg, user_with(p), plan, v);
            out << oracle_tail(success / static_cast<double>(sub.desired().size()), 0.0, 0);
          }
          out << '\n';
        }
    } else if (o.formula == "theorem2") {
      out << "formula,p,R,analytic" << oracle_cols << '\n';
      for (double p : o.p)
        for (int R : o.R) {
          out << "theorem2," << format_double(p) << ',' << R << ','
              << format_double(analytics::alpha_asymptotic_uniform(p, R).value);
          if (o.oracle) {
            const oracle::McEstimate e = oracle::mc_alpha_uniform(p, R, o.samples, o.p_select, o.seed);
            out << oracle_tail(e.mean, e.std_error, e.samples);
          }
          out << '\n';
        }
    } else if (o.formula == "corollary2") {
      need(!o.Rtilde.empty(), "--Rtilde");
      out << "formula,p,R,Rtilde,analytic" << oracle_cols << '\n';
      for (double p : o.p)
        for (int R : o.R)
          for (int rt : o.Rtilde) {
            out << "corollary2," << format_double(p) << ',' << R << ',' << rt << ','
                << format_double(analytics::alpha_asymptotic_spaced(p, R, rt).value);
            if (o.oracle) {
              const oracle::McEstimate e = oracle::mc_alpha_spaced(p, R, rt, o.samples, o.seed);
              out << oracle_tail(e.mean, e.std_error, e.samples);
            }
            out << '\n';
          }
    } else {  // theorem3
      need(!o.m.empty(), "--m");
      need(!o.s.empty(), "--s");
      const std::vector<double> cs = o.c.empty() ? std::vector<double>{1.0} : o.c;
      out << "formula,p,R,m,s,c,analytic" << oracle_cols << '\n';
      for (double p : o.p)
        for (int R : o.R)
          for (int m : o.m)
            for (double s : o.s)
              for (double c : cs) {
                const analytics::ZipfPeriodicSubscription zipf(m, s, c);
                out << "theorem3," << format_double(p) << ',' << R << ',' << m << ','
                    << format_double(s) << ',' << format_double(c) << ','
                    << format_double(
                           analytics::alpha_asymptotic_zipf_consecutive(p, R, zipf).value);
                if (o.oracle) {
                  const oracle::McEstimate e =
                      oracle::mc_alpha_zipf_consecutive(p, R, zipf, o.samples, o.seed);
                  out << oracle_tail(e.mean, e.std_error, e.samples);
                }
                out << '\n';
              }
    }
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  } catch (const std::out_of_range& e) {
    throw ConfigError(e.what());
  } catch (const std::length_error& e) {
    throw ConfigError(e.what());
  }
}

// ----------------------------------------------------------------- trace

namespace {

struct ScriptLine {
  int number;
  std::vector<std::string> words;
  [[noreturn]] void fail(const std::string& msg) const {
    throw ConfigError("line " + std::to_string(number) + ": " + msg);
  }
};

template <typename T>
T parse_number(const ScriptLine& line, std::string_view text) {
  T v{};
  const auto res = std::from_chars(text.data(), text.data() + text.size(), v);
  if (text.empty() || res.ec != std::errc() || res.ptr != text.data() + text.size())
    line.fail("bad number \"" + std::string(text) + "\"");
  return v;
}

std::vector<std::string_view> split(std::string_view text, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t end = text.find(sep, start);
    out.push_back(text.substr(start, end == std::string_view::npos ? text.npos : end - start));
    if (end == std::string_view::npos) return out;
    start = end + 1;
  }
}

// key=value arguments after the positional ones.
std::map<std::string, std::string> key_values(const ScriptLine& line, std::size_t from) {
  std::map<std::string, std::string> kv;
  for (std::size_t i = from; i < line.words.size(); ++i) {
    const std::string& w = line.words[i];
    const std::size_t eq = w.find('=');
    if (eq == std::string::npos || eq == 0) line.fail("expected key=value, got \"" + w + "\"");
    if (!kv.emplace(w.substr(0, eq), w.substr(eq + 1)).second)
      line.fail("repeated key " + w.substr(0, eq));
  }
  return kv;
}

void reject_unknown(const ScriptLine& line, const std::map<std::string, std::string>& kv,
                    std::initializer_list<const char*> allowed) {
  for (const auto& [k, v] : kv)
    if (std::none_of(allowed.begin(), allowed.end(), [&](const char* a) { return k == a; }))
      line.fail("unknown key " + k);
}

std::vector<ViewIndex> parse_views(const ScriptLine& line, std::string_view text) {
  std::vector<ViewIndex> views;
  for (std::string_view v : split(text, ',')) views.push_back(parse_number<int>(line, v));
  return views;
}

// "c:r=p,..." with '*' wildcards; later items override earlier ones.
UserChannelState parse_loss(const ScriptLine& line, UserId user, std::string_view text,
                            int channels, int rates) {
  std::map<Link, double> loss;
  for (std::string_view item : split(text, ',')) {
    const std::size_t colon = item.find(':');
    const std::size_t eq = item.find('=');
    if (colon == item.npos || eq == item.npos || eq < colon)
      line.fail("loss item must look like c:r=p, got \"" + std::string(item) + "\"");
    const std::string_view cs = item.substr(0, colon);
    const std::string_view rs = item.substr(colon + 1, eq - colon - 1);
    const double p = parse_number<double>(line, item.substr(eq + 1));
    if (!(p >= 0.0 && p <= 1.0)) line.fail("loss probability outside [0,1]");
    const int c0 = cs == "*" ? 0 : parse_number<int>(line, cs);
    const int c1 = cs == "*" ? channels - 1 : c0;
    const int r0 = rs == "*" ? 0 : parse_number<int>(line, rs);
    const int r1 = rs == "*" ? rates - 1 : r0;
    if (c0 < 0 || c1 >= channels || r0 < 0 || r1 >= rates) line.fail("loss link out of range");
    for (int c = c0; c <= c1; ++c)
      for (int r = r0; r <= r1; ++r) loss[{c, r}] = p;
  }
  return UserChannelState(user, std::move(loss));
}

}  // namespace

std::vector<std::string> replay_trace(std::istream& script) {
  int views = 16, range = 3;
  channel::PhyConfig phy;
  protocol::ProtocolParams params;
  std::optional<protocol::Cell> cell;
  std::vector<std::string> trace;
  protocol::FrameEvents pending;
  std::optional<protocol::Frame> current;
  protocol::Frame processed = -1;

  auto process = [&](protocol::Frame upto) {
    // Empty frames in between still run refresh and expiry.
    for (protocol::Frame f = processed + 1; f < upto; ++f) {
      cell->process_frame(f, {});
      cell->check_invariants();
    }
    cell->process_frame(upto, std::move(pending));
    cell->check_invariants();
    pending = {};
    processed = upto;
  };

  std::string text;
  int number = 0;
  while (std::getline(script, text)) {
    ++number;
    if (const std::size_t hash = text.find('#'); hash != std::string::npos) text.resize(hash);
    ScriptLine line{number, {}};
    std::istringstream words(text);
    for (std::string w; words >> w;) line.words.push_back(w);
    if (line.words.empty()) continue;
    const std::string& cmd = line.words[0];

    if (cmd == "set") {
      if (cell) line.fail("set must come before the first frame");
      const auto kv = key_values(line, 1);
      reject_unknown(line, kv,
                     {"views", "R", "threshold", "max_aux", "max_tx", "timeout", "channels"});
      for (const auto& [k, v] : kv) {
        if (k == "views") views = parse_number<int>(line, v);
        if (k == "R") range = parse_number<int>(line, v);
        if (k == "threshold") params.failure_threshold = parse_number<double>(line, v);
        if (k == "max_aux") params.max_aux_views = parse_number<int>(line, v);
        if (k == "max_tx") params.max_tx_count = parse_number<int>(line, v);
        if (k == "timeout") params.soft_state_timeout = parse_number<protocol::Frame>(line, v);
        if (k == "channels") phy.num_channels = parse_number<int>(line, v);
      }
      continue;
    }

    if (cmd == "frame") {
      if (line.words.size() != 2) line.fail("usage: frame <n>");
      const auto f = parse_number<protocol::Frame>(line, line.words[1]);
      if (!cell) {
        try {
          cell.emplace(SynthesisConfig(views, range), phy, params);
        } catch (const std::invalid_argument& e) {
          line.fail(e.what());
        }
        cell->set_trace(&trace);
      }
      if (current) {
        try {
          process(*current);
        } catch (const std::invalid_argument& e) {
          line.fail("applying frame " + std::to_string(*current) + ": " + e.what());
        }
      }
      if (f <= processed) line.fail("frame numbers must increase");
      current = f;
      continue;
    }

    if (!current) line.fail("event before the first frame line");
    if (line.words.size() < 2) line.fail(cmd + " needs a user id");
    const auto user = parse_number<UserId>(line, line.words[1]);
    const auto kv = key_values(line, 2);
    auto required = [&](const char* key) -> const std::string& {
      auto it = kv.find(key);
      if (it == kv.end()) line.fail(cmd + " needs " + key + "=");
      return it->second;
    };

    if (cmd == "arrive") {
      reject_unknown(line, kv, {"views", "loss"});
      std::vector<ViewIndex> vs = parse_views(line, required("views"));
      for (ViewIndex v : vs)
        if (v < 1 || v > views) line.fail("view out of range");
      const auto same = [&](const auto& e) { return e.user == user; };
      const bool leaving = std::any_of(pending.departures.begin(), pending.departures.end(),
                                       [&](const auto& d) { return d.user == user && !d.silent; });
      if (std::any_of(pending.arrivals.begin(), pending.arrivals.end(), same) ||
          (cell->clients().contains(user) && !leaving))
        line.fail("user " + std::to_string(user) + " already present");
      pending.arrivals.push_back(
          {user, parse_loss(line, user, required("loss"), phy.num_channels, phy.num_rates()),
           std::move(vs)});
    } else if (cmd == "leave" || cmd == "silent") {
      reject_unknown(line, kv, {});
      pending.departures.push_back({user, cmd == "silent"});
    } else if (cmd == "change") {
      reject_unknown(line, kv, {"view"});
      const int v = parse_number<int>(line, required("view"));
      if (v < 1 || v > views) line.fail("view out of range");
      pending.view_changes.push_back({user, v});
    } else if (cmd == "move") {
      reject_unknown(line, kv, {"loss"});
      pending.channel_changes.push_back(
          {user, parse_loss(line, user, required("loss"), phy.num_channels, phy.num_rates())});
    } else {
      line.fail("unknown command \"" + cmd + "\"");
    }
  }
  if (current) {
    try {
      process(*current);
    } catch (const std::invalid_argument& e) {
      throw ConfigError("line " + std::to_string(number) + ": applying frame " +
                        std::to_string(*current) + ": " + e.what());
    }
  }
  return trace;
}

}  // namespace mvgmp::cli
