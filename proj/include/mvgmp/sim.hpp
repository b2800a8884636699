#pragma once

// Frame-stepped simulation of a dynamic multi-view multicast workload,
// running MVGMP and a conventional per-view multicast baseline over the
// same users, positions, preferences and reception draws.

#include <cstdint>
#include <map>
#include <memory>
#include <vector>

#include "mvgmp/cell.hpp"
#include "mvgmp/channel.hpp"
#include "mvgmp/model.hpp"
#include "mvgmp/protocol.hpp"
#include "mvgmp/rng.hpp"

namespace mvgmp::sim {

using channel::ChannelTime;
using protocol::Frame;

struct Preference {
  enum class Kind { kUniform, kZipf, kNormal };
  Kind kind = Kind::kUniform;
  double zipf_exponent = 2.0;
  int zipf_ranks = 0;          // N; 0 means N = M
  double normal_mean = 0.5;    // normalized position of the preferred view
  double normal_variance = 1.0;  // in view-index units
};

/// Zipf ranks laid out center-outward: rank 1 is view ceil(M/2), then
/// +1, -1, +2, -2, ...
std::vector<ViewIndex> zipf_rank_order(int total_views);

ViewIndex sample_preference(const Preference& pref, int total_views, Stream& rng);

enum class Subscribe { kSingleView, kAllViews };

struct WorkloadConfig {
  int initial_users = 50;
  double arrival_prob = 0.2;
  double departure_prob = 0.3;
  double view_change_prob = 0.4;
  Preference preference;
  Frame frames = 1000;
  std::uint64_t seed = 1;
  double silent_departure_fraction = 0.0;
  double channel_reroll_prob = 0.0;  // per user per frame; new position
  Subscribe subscription = Subscribe::kSingleView;

  void validate() const;
};

enum class Scheme { kMvgmp, kBaseline, kBoth };

struct ScenarioConfig {
  WorkloadConfig workload;
  channel::PhyConfig phy;
  channel::LossModel loss{channel::SigmoidLoss{}};
  SynthesisConfig synthesis{16, 3};
  protocol::ProtocolParams protocol;
  Scheme scheme = Scheme::kBoth;
  Frame warmup = 100;
  bool check_invariants = true;

  bool runs_mvgmp() const { return scheme != Scheme::kBaseline; }
  bool runs_baseline() const { return scheme != Scheme::kMvgmp; }
};

struct FrameOutcome {
  Frame frame = 0;
  ChannelTime channel_time_mvgmp = 0;
  ChannelTime channel_time_baseline = 0;
  ChannelTime makespan_mvgmp = 0;
  ChannelTime makespan_baseline = 0;
  /// Fraction of each user's desired views obtained this frame.
  std::map<UserId, double> success_mvgmp;
  std::map<UserId, double> success_baseline;
  std::size_t transmitted_views = 0;  // MVGMP ViewTable entries
  std::size_t baseline_streams = 0;
  std::size_t population = 0;
};

struct Summary {
  bool sufficient = false;  // false when no frame remains after warmup
  std::size_t frames = 0;
  std::size_t user_frames = 0;  // alpha is NaN when zero
  double mean_population = 0.0;
  double mean_ct_mvgmp = 0.0;
  double ci95_ct_mvgmp = 0.0;
  double mean_ct_baseline = 0.0;
  double ci95_ct_baseline = 0.0;
  double mean_makespan_mvgmp = 0.0;
  double mean_makespan_baseline = 0.0;
  double alpha_mvgmp = 0.0;     // pooled per-user success fraction
  double alpha_baseline = 0.0;
  double failure_rate_mvgmp = 0.0;
  double failure_rate_baseline = 0.0;
};

struct ScenarioResult {
  std::vector<FrameOutcome> frames;
  Summary summary;
};

/// One baseline stream per subscribed view.
struct BaselineStream {
  ViewIndex view;
  Link link;
};

struct UserInfo {
  std::vector<ViewIndex> views;
  UserChannelState channel;
};

/// Each subscribed view on the fastest link whose worst-subscriber loss
/// meets the threshold, otherwise on the most robust link. Ties go to the
/// less loaded channel, then the lower channel index.
std::vector<BaselineStream> baseline_plan(const std::map<UserId, UserInfo>& users,
                                          const channel::PhyConfig& phy, double threshold);

/// Share of `desired` obtained directly or by synthesis from `received`
/// (indexed by view, entry 0 unused).
double obtained_fraction(const SynthesisConfig& cfg, const std::vector<ViewIndex>& desired,
                         const std::vector<char>& received);

class Simulator {
 public:
  explicit Simulator(ScenarioConfig cfg);

  /// Advances one frame: arrivals, departures, view changes, transmission,
  /// reception and accounting.
  FrameOutcome step_frame();

  Frame frame() const { return frame_; }
  const std::map<UserId, UserInfo>& users() const { return users_; }
  /// Null when the scenario runs only the baseline.
  const protocol::Cell* cell() const { return cell_.get(); }
  const std::vector<BaselineStream>& last_baseline() const { return baseline_; }
  const ScenarioConfig& config() const { return cfg_; }

 private:
  UserInfo new_user(UserId id);
  UserChannelState user_channel(UserId id, std::uint64_t seed) const;
  ViewIndex draw_new_view(ViewIndex current);
  std::vector<char> receive(UserId user, const UserChannelState& ch,
                            const std::map<protocol::EntryKey, int>& streams) const;

  ScenarioConfig cfg_;
  std::unique_ptr<protocol::Cell> cell_;
  std::map<UserId, UserInfo> users_;
  std::vector<BaselineStream> baseline_;
  Frame frame_ = 0;
  UserId next_user_ = 0;
  Stream arrivals_;
  Stream departures_;
  Stream changes_;
  Stream preferences_;
  Stream mobility_;
  std::uint64_t position_seed_;
  std::uint64_t reception_seed_;
};

Summary summarize(const std::vector<FrameOutcome>& frames, Frame warmup);

ScenarioResult run_scenario(const ScenarioConfig& cfg);

}  // namespace mvgmp::sim
