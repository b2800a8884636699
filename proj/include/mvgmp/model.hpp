#pragma once

// Core domain types: views, links, per-user loss, transmission plans.
// Views are indexed 1..M. Channels and rate indices are 0-based.

#include <compare>
#include <cstdint>
#include <map>
#include <optional>
#include <vector>

namespace mvgmp {

using ViewIndex = int;
using UserId = std::uint32_t;

/// A (channel, rate index) pair.
struct Link {
  int channel = 0;
  int rate = 0;
  auto operator<=>(const Link&) const = default;
};

/// Total view count M, DIBR range R and delivery spacing R~.
class SynthesisConfig {
 public:
  SynthesisConfig(int total_views, int dibr_range, int spacing = 1);

  int total_views() const { return total_views_; }
  int dibr_range() const { return dibr_range_; }
  int spacing() const { return spacing_; }
  bool contains(ViewIndex v) const { return v >= 1 && v <= total_views_; }

 private:
  int total_views_;
  int dibr_range_;
  int spacing_;
};

/// Per-user loss probability p_{i,c,r} for every link the user can decode.
/// Links absent from the map are outside the user's channel/rate sets and
/// behave as certain loss.
class UserChannelState {
 public:
  UserChannelState(UserId user, std::map<Link, double> loss);

  UserId user() const { return user_; }
  const std::map<Link, double>& loss() const { return loss_; }
  bool can_use(Link link) const { return loss_.contains(link); }
  /// Loss of one broadcast on `link`; 1 when the link is unusable.
  double loss_at(Link link) const;

 private:
  UserId user_;
  std::map<Link, double> loss_;
};

/// Broadcast counts n_{j,c,r} for one frame time.
class TransmissionPlan {
 public:
  explicit TransmissionPlan(int total_views);

  int total_views() const { return total_views_; }
  void set(ViewIndex view, Link link, int count);
  void add(ViewIndex view, Link link, int count);
  int count(ViewIndex view, Link link) const;
  bool transmitted(ViewIndex view) const;
  /// Non-zero counts of one view, keyed by link.
  const std::map<Link, int>& counts(ViewIndex view) const;

 private:
  int total_views_;
  std::vector<std::map<Link, int>> counts_;  // index view-1
};

/// p^AP_{c,r}(n): distribution of the broadcast count per link.
class APTransmissionDistribution {
 public:
  explicit APTransmissionDistribution(std::map<Link, std::vector<double>> probs);

  /// Probability vector indexed by count n, or nullptr if the link is absent.
  const std::vector<double>* at(Link link) const;
  const std::map<Link, std::vector<double>>& probs() const { return probs_; }

 private:
  std::map<Link, std::vector<double>> probs_;
};

/// Desired views K_i of one user, ascending and unique.
class Subscription {
 public:
  Subscription(UserId user, std::vector<ViewIndex> desired, int total_views);

  UserId user() const { return user_; }
  const std::vector<ViewIndex>& desired() const { return desired_; }
  bool contains(ViewIndex v) const;

 private:
  UserId user_;
  std::vector<ViewIndex> desired_;
};

/// Probability the user receives none of the view's broadcasts:
/// product over usable links of p^n. Untransmitted views give 1.
double combined_view_loss_prob(const UserChannelState& user,
                               const TransmissionPlan& plan, ViewIndex view);

/// Per-view loss when the AP's broadcast count is itself random:
/// product over the user's links of sum_n p^AP(n) p^n.
double combined_loss_prob_randomized(const UserChannelState& user,
                                     const APTransmissionDistribution& ap_dist);

}  // namespace mvgmp
