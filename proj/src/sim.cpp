#include "mvgmp/sim.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <tuple>

namespace mvgmp::sim {
namespace {

// Substream ids. Workload streams never see protocol state, so the same
// seed yields the same population history under every scheme and R.
enum StreamId : std::uint64_t {
  kArrivals = 1,
  kDepartures = 2,
  kViewChanges = 3,
  kPreferences = 4,
  kPositions = 5,
  kReceptions = 6,
  kMobility = 7,
};

void require_prob(double p, const char* name) {
  if (!(p >= 0.0 && p <= 1.0))
    throw std::invalid_argument(std::string(name) + " must be in [0, 1]");
}

}  // namespace

std::vector<ViewIndex> zipf_rank_order(int total_views) {
  if (total_views < 1) throw std::invalid_argument("total_views must be >= 1");
  std::vector<ViewIndex> order;
  const ViewIndex center = (total_views + 1) / 2;
  order.push_back(center);
  for (int step = 1; static_cast<int>(order.size()) < total_views; ++step) {
    if (center + step <= total_views) order.push_back(center + step);
    if (center - step >= 1) order.push_back(center - step);
  }
  return order;
}

ViewIndex sample_preference(const Preference& pref, int total_views, Stream& rng) {
  if (total_views < 1) throw std::invalid_argument("total_views must be >= 1");
  switch (pref.kind) {
    case Preference::Kind::kUniform:
      return 1 + static_cast<ViewIndex>(rng.below(static_cast<std::uint64_t>(total_views)));
    case Preference::Kind::kZipf: {
      const int ranks = pref.zipf_ranks == 0 ? total_views : pref.zipf_ranks;
      if (ranks < 1 || ranks > total_views)
        throw std::invalid_argument("zipf ranks must be in 1..M");
      double norm = 0.0;
      for (int k = 1; k <= ranks; ++k) norm += std::pow(k, -pref.zipf_exponent);
      const double u = rng.uniform() * norm;
      double acc = 0.0;
      int rank = ranks;
      for (int k = 1; k <= ranks; ++k) {
        acc += std::pow(k, -pref.zipf_exponent);
        if (u < acc) {
          rank = k;
          break;
        }
      }
      return zipf_rank_order(total_views)[static_cast<std::size_t>(rank - 1)];
    }
    case Preference::Kind::kNormal: {
      // Centered on view ceil(mean*M), spread in view units.
      const double center = std::ceil(pref.normal_mean * total_views);
      const double x = center + std::sqrt(pref.normal_variance) * rng.normal();
      const double v = std::clamp(std::round(x), 1.0, static_cast<double>(total_views));
      return static_cast<ViewIndex>(v);
    }
  }
  throw std::logic_error("unknown preference kind");
}

void WorkloadConfig::validate() const {
  if (initial_users < 0) throw std::invalid_argument("initial_users must be >= 0");
  require_prob(arrival_prob, "arrival_prob");
  require_prob(departure_prob, "departure_prob");
  require_prob(view_change_prob, "view_change_prob");
  require_prob(silent_departure_fraction, "silent_departure_fraction");
  require_prob(channel_reroll_prob, "channel_reroll_prob");
  if (frames < 1) throw std::invalid_argument("frames must be >= 1");
  if (preference.zipf_exponent < 0.0) throw std::invalid_argument("zipf exponent must be >= 0");
  if (preference.zipf_ranks < 0) throw std::invalid_argument("zipf ranks must be >= 0");
  if (!(preference.normal_variance > 0.0))
    throw std::invalid_argument("normal variance must be positive");
}

double obtained_fraction(const SynthesisConfig& cfg, const std::vector<ViewIndex>& desired,
                         const std::vector<char>& received) {
  if (desired.empty()) return 1.0;
  const int m = cfg.total_views();
  const int r = cfg.dibr_range();
  int obtained = 0;
  for (ViewIndex d : desired) {
    if (received[static_cast<std::size_t>(d)]) {
      ++obtained;
      continue;
    }
    if (d == 1 || d == m) continue;
    int left = 0;
    for (int a = d - 1; a >= std::max(1, d - r + 1); --a)
      if (received[static_cast<std::size_t>(a)]) {
        left = a;
        break;
      }
    if (left == 0) continue;
    for (int b = d + 1; b <= std::min(m, left + r); ++b)
      if (received[static_cast<std::size_t>(b)]) {
        ++obtained;
        break;
      }
  }
  return static_cast<double>(obtained) / static_cast<double>(desired.size());
}

std::vector<BaselineStream> baseline_plan(const std::map<UserId, UserInfo>& users,
                                          const channel::PhyConfig& phy, double threshold) {
  std::map<ViewIndex, std::vector<const UserChannelState*>> groups;
  for (const auto& [id, info] : users)
    for (ViewIndex v : info.views) groups[v].push_back(&info.channel);

  std::vector<ChannelTime> load(static_cast<std::size_t>(phy.num_channels), 0);
  std::vector<BaselineStream> plan;
  for (const auto& [view, members] : groups) {
    // Candidate order: (not qualifying, worst loss if not qualifying,
    // slower rate, channel load, channel).
    using Rank = std::tuple<bool, double, int, ChannelTime, int>;
    Rank best{true, 2.0, 0, 0, 0};
    Link chosen{};
    bool have = false;
    for (int c = 0; c < phy.num_channels; ++c)
      for (int r = 0; r < phy.num_rates(); ++r) {
        const Link link{c, r};
        double worst = 0.0;
        for (const UserChannelState* u : members) worst = std::max(worst, u->loss_at(link));
        const bool ok = worst <= threshold + 1e-12;
        Rank rank{!ok, ok ? 0.0 : worst, -r, load[static_cast<std::size_t>(c)], c};
        if (!have || rank < best) {
          best = rank;
          chosen = link;
          have = true;
        }
      }
    load[static_cast<std::size_t>(chosen.channel)] += channel::tx_duration(phy, chosen.rate);
    plan.push_back({view, chosen});
  }
  return plan;
}

Simulator::Simulator(ScenarioConfig cfg)
    : cfg_(std::move(cfg)),
      arrivals_(cfg_.workload.seed, kArrivals),
      departures_(cfg_.workload.seed, kDepartures),
      changes_(cfg_.workload.seed, kViewChanges),
      preferences_(cfg_.workload.seed, kPreferences),
      mobility_(cfg_.workload.seed, kMobility),
      position_seed_(derive_seed(cfg_.workload.seed, kPositions)),
      reception_seed_(derive_seed(cfg_.workload.seed, kReceptions)) {
  cfg_.workload.validate();
  cfg_.phy.validate();
  cfg_.loss.validate(cfg_.phy);
  cfg_.protocol.validate();
  if (cfg_.warmup < 0) throw std::invalid_argument("warmup must be >= 0");
  if (cfg_.loss.is_explicit() && cfg_.loss.matrix().rows.empty())
    throw std::invalid_argument("explicit loss matrix has no rows");
  if (cfg_.runs_mvgmp())
    cell_ = std::make_unique<protocol::Cell>(cfg_.synthesis, cfg_.phy, cfg_.protocol);

  protocol::FrameEvents initial;
  for (int i = 0; i < cfg_.workload.initial_users; ++i) {
    const UserId id = next_user_++;
    UserInfo info = new_user(id);
    initial.arrivals.push_back({id, info.channel, info.views});
    users_.emplace(id, std::move(info));
  }
  if (cell_) {
    cell_->process_frame(0, std::move(initial));
    if (cfg_.check_invariants) cell_->check_invariants();
  }
}

UserInfo Simulator::new_user(UserId id) {
  const int m = cfg_.synthesis.total_views();
  std::vector<ViewIndex> views;
  if (cfg_.workload.subscription == Subscribe::kAllViews) {
    for (ViewIndex v = 1; v <= m; ++v) views.push_back(v);
  } else {
    views.push_back(sample_preference(cfg_.workload.preference, m, preferences_));
  }
  return {std::move(views), user_channel(id, position_seed_)};
}

UserChannelState Simulator::user_channel(UserId id, std::uint64_t seed) const {
  if (cfg_.loss.is_explicit()) {
    // Matrix rows are reused cyclically when users outnumber them.
    const auto rows = static_cast<UserId>(cfg_.loss.matrix().rows.size());
    const UserChannelState row = channel::assign_user_loss(cfg_.loss, id % rows, cfg_.phy, seed);
    return UserChannelState(id, row.loss());
  }
  return channel::assign_user_loss(cfg_.loss, id, cfg_.phy, seed);
}

ViewIndex Simulator::draw_new_view(ViewIndex current) {
  const int m = cfg_.synthesis.total_views();
  // Redraw until the view differs; bounded for degenerate preferences.
  for (int attempt = 0; attempt < 1000; ++attempt) {
    const ViewIndex v = sample_preference(cfg_.workload.preference, m, preferences_);
    if (v != current) return v;
  }
  return current;
}

std::vector<char> Simulator::receive(UserId user, const UserChannelState& ch,
                                     const std::map<protocol::EntryKey, int>& streams) const {
  std::vector<char> received(static_cast<std::size_t>(cfg_.synthesis.total_views()) + 1, 0);
  for (const auto& [key, n] : streams) {
    if (!ch.can_use(key.link)) continue;
    const double loss = ch.loss_at(key.link);
    for (int b = 0; b < n; ++b) {
      const double u = counter_uniform(
          reception_seed_,
          {static_cast<std::uint64_t>(frame_), user, static_cast<std::uint64_t>(key.view),
           static_cast<std::uint64_t>(key.link.channel),
           static_cast<std::uint64_t>(key.link.rate), static_cast<std::uint64_t>(b)});
      if (u >= loss) {
        received[static_cast<std::size_t>(key.view)] = 1;
        break;
      }
    }
  }
  return received;
}

FrameOutcome Simulator::step_frame() {
  ++frame_;
  const WorkloadConfig& w = cfg_.workload;
  protocol::FrameEvents events;

  std::vector<UserId> present;
  present.reserve(users_.size());
  for (const auto& [id, info] : users_) present.push_back(id);

  if (arrivals_.bernoulli(w.arrival_prob)) {
    const UserId id = next_user_++;
    UserInfo info = new_user(id);
    events.arrivals.push_back({id, info.channel, info.views});
    users_.emplace(id, std::move(info));
  }

  // Departure draws are made every frame so the stream stays aligned.
  const bool depart = departures_.bernoulli(w.departure_prob);
  const bool silent = departures_.bernoulli(w.silent_departure_fraction);
  if (depart && !present.empty()) {
    const auto pick = departures_.below(present.size());
    const UserId id = present[pick];
    present.erase(present.begin() + static_cast<std::ptrdiff_t>(pick));
    users_.erase(id);
    events.departures.push_back({id, silent});
  }

  for (UserId id : present) {
    if (!changes_.bernoulli(w.view_change_prob)) continue;
    if (w.subscription != Subscribe::kSingleView || cfg_.synthesis.total_views() < 2) continue;
    UserInfo& info = users_.at(id);
    const ViewIndex v = draw_new_view(info.views.front());
    if (v == info.views.front()) continue;
    info.views = {v};
    events.view_changes.push_back({id, v});
  }

  if (w.channel_reroll_prob > 0.0) {
    for (UserId id : present) {
      if (!mobility_.bernoulli(w.channel_reroll_prob)) continue;
      UserInfo& info = users_.at(id);
      info.channel =
          user_channel(id, derive_seed(position_seed_, static_cast<std::uint64_t>(frame_)));
      events.channel_changes.push_back({id, info.channel});
    }
  }

  FrameOutcome out;
  out.frame = frame_;
  out.population = users_.size();

  if (cell_) {
    cell_->process_frame(frame_, std::move(events));
    if (cfg_.check_invariants) {
      cell_->check_invariants();
      if (cell_->clients().size() != users_.size())
        throw protocol::InvariantViolation("cell and workload populations differ");
    }
    const protocol::ViewTable& table = cell_->table();
    out.channel_time_mvgmp = table.airtime(cfg_.phy);
    out.makespan_mvgmp = table.makespan(cfg_.phy);
    out.transmitted_views = table.size();
    for (const auto& [id, client] : cell_->clients()) {
      std::map<protocol::EntryKey, int> streams;
      for (const auto& [key, n] : client.receiving) {
        const protocol::ViewTableEntry* e = table.find(key);
        if (e != nullptr) streams[key] = e->tx_count();
      }
      const UserInfo& info = users_.at(id);
      out.success_mvgmp[id] =
          obtained_fraction(cfg_.synthesis, info.views, receive(id, info.channel, streams));
    }
  }

  if (cfg_.runs_baseline()) {
    baseline_ = baseline_plan(users_, cfg_.phy, cfg_.protocol.failure_threshold);
    std::map<ViewIndex, Link> by_view;
    std::vector<ChannelTime> per_channel(static_cast<std::size_t>(cfg_.phy.num_channels), 0);
    for (const BaselineStream& s : baseline_) {
      by_view.emplace(s.view, s.link);
      const ChannelTime d = channel::tx_duration(cfg_.phy, s.link.rate);
      out.channel_time_baseline += d;
      per_channel[static_cast<std::size_t>(s.link.channel)] += d;
    }
    out.makespan_baseline = *std::max_element(per_channel.begin(), per_channel.end());
    out.baseline_streams = baseline_.size();
    for (const auto& [id, info] : users_) {
      std::map<protocol::EntryKey, int> streams;
      for (ViewIndex v : info.views) streams[{v, by_view.at(v)}] = 1;
      out.success_baseline[id] =
          obtained_fraction(cfg_.synthesis, info.views, receive(id, info.channel, streams));
    }
  }
  return out;
}

Summary summarize(const std::vector<FrameOutcome>& frames, Frame warmup) {
  Summary s;
  double ct_m = 0, ct_b = 0, ct_m2 = 0, ct_b2 = 0, ms_m = 0, ms_b = 0, pop = 0;
  double succ_m = 0, succ_b = 0;
  std::size_t users_m = 0, users_b = 0;
  for (const FrameOutcome& f : frames) {
    if (f.frame <= warmup) continue;
    ++s.frames;
    const auto m = static_cast<double>(f.channel_time_mvgmp);
    const auto b = static_cast<double>(f.channel_time_baseline);
    ct_m += m;
    ct_b += b;
    ct_m2 += m * m;
    ct_b2 += b * b;
    ms_m += static_cast<double>(f.makespan_mvgmp);
    ms_b += static_cast<double>(f.makespan_baseline);
    pop += static_cast<double>(f.population);
    for (const auto& [u, x] : f.success_mvgmp) succ_m += x;
    for (const auto& [u, x] : f.success_baseline) succ_b += x;
    users_m += f.success_mvgmp.size();
    users_b += f.success_baseline.size();
  }
  if (s.frames == 0) return s;
  s.sufficient = true;
  const auto n = static_cast<double>(s.frames);
  auto ci = [n](double sum, double sum2) {
    if (n < 2) return 0.0;
    const double mean = sum / n;
    const double var = std::max(0.0, (sum2 - n * mean * mean) / (n - 1));
    return 1.96 * std::sqrt(var / n);
  };
  s.mean_population = pop / n;
  s.mean_ct_mvgmp = ct_m / n;
  s.mean_ct_baseline = ct_b / n;
  s.ci95_ct_mvgmp = ci(ct_m, ct_m2);
  s.ci95_ct_baseline = ci(ct_b, ct_b2);
  s.mean_makespan_mvgmp = ms_m / n;
  s.mean_makespan_baseline = ms_b / n;
  s.user_frames = std::max(users_m, users_b);
  const double nan = std::numeric_limits<double>::quiet_NaN();
  s.alpha_mvgmp = users_m > 0 ? succ_m / static_cast<double>(users_m) : nan;
  s.alpha_baseline = users_b > 0 ? succ_b / static_cast<double>(users_b) : nan;
  s.failure_rate_mvgmp = 1.0 - s.alpha_mvgmp;
  s.failure_rate_baseline = 1.0 - s.alpha_baseline;
  return s;
}

ScenarioResult run_scenario(const ScenarioConfig& cfg) {
  Simulator sim(cfg);
  ScenarioResult result;
  result.frames.reserve(static_cast<std::size_t>(cfg.workload.frames));
  for (Frame t = 0; t < cfg.workload.frames; ++t) result.frames.push_back(sim.step_frame());
  result.summary = summarize(result.frames, cfg.warmup);
  return result;
}

}  // namespace mvgmp::sim
