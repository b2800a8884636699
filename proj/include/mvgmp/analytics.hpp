#pragma once

// Closed-form view-failure and obtained-view-fraction results.

#include "mvgmp/model.hpp"

namespace mvgmp::analytics {

enum class AlphaKind { kExactExpectation, kAsymptotic };

struct AlphaResult {
  double value = 0.0;
  AlphaKind kind = AlphaKind::kAsymptotic;
};

/// Periodic Zipf subscription: view k is subscribed independently with
/// probability c / phase(k)^s, phase(k) = ((k - 1) mod m) + 1.
class ZipfPeriodicSubscription {
 public:
  ZipfPeriodicSubscription(int period, double exponent, double normalizer);

  int period() const { return period_; }
  double exponent() const { return exponent_; }
  double normalizer() const { return normalizer_; }
  /// Subscription probability of a view at `phase` in 1..m.
  double weight(int phase) const;
  /// Sum of weight(1..m).
  double period_mass() const;

 private:
  int period_;
  double exponent_;
  double normalizer_;
};

/// How the asymptotic Zipf formula rewards a reception gap longer than R.
enum class GapReward {
  /// The view that closes the gap is received directly and counts.
  kDirectEndpoint,
  /// Gaps longer than R earn nothing (literal reward function of the
  /// consecutive-subscription derivation). Kept for comparison only.
  kNothing,
};

/// P(user neither receives `desired` nor can synthesize it).
///
/// Evaluated as L(desired) * sum_{k=0}^{R-1} P(B_k), where B_0 means no left
/// view within R-1 is received and B_k (k >= 1) means the nearest received
/// left view is desired-k and no right view within R-k is received. Boundary
/// views 1 and M cannot be synthesized, so the bracket is 1 there.
double view_failure_prob(const SynthesisConfig& cfg, const UserChannelState& user,
                         const TransmissionPlan& plan, ViewIndex desired);

/// Mean fraction of subscribed views obtained: mean of 1 - P_fail(k).
AlphaResult expected_alpha_exact(const SynthesisConfig& cfg, const UserChannelState& user,
                                 const TransmissionPlan& plan, const Subscription& sub);

/// Limit of the obtained fraction when every view is multicast and each is
/// lost independently with probability loss_p:
/// (1-p) * (sum_{k=1}^R k (1-p) p^{k-1} + p^R).
AlphaResult alpha_asymptotic_uniform(double loss_p, int dibr_range);

/// Limit when only one view in every `spacing` views is multicast.
AlphaResult alpha_asymptotic_spaced(double loss_p, int dibr_range, int spacing);

/// Limit for periodic Zipf subscription, success_p being the per-view
/// reception probability.
AlphaResult alpha_asymptotic_zipf_consecutive(
    double success_p, int dibr_range, const ZipfPeriodicSubscription& zipf,
    GapReward gap_reward = GapReward::kDirectEndpoint);

/// Expected subscribed mass among the x positions that follow a received
/// view at phase j: rest of the current period, whole periods, remainder.
double zipf_window_mass(const ZipfPeriodicSubscription& zipf, int phase, int length);

}  // namespace mvgmp::analytics
