#pragma once

// Brute-force and Monte Carlo references for the closed forms in
// analytics. Nothing here calls into analytics: the synthesis rule
// (received a < v < b with b - a <= R) is re-derived locally.

#include <cstdint>

#include "mvgmp/analytics.hpp"
#include "mvgmp/model.hpp"

namespace mvgmp::oracle {

struct McEstimate {
  double mean = 0.0;
  double std_error = 0.0;
  std::uint64_t samples = 0;
  std::uint64_t rng_seed = 0;
};

/// Largest number of individual broadcasts enumerate_failure_prob accepts.
inline constexpr int kMaxEnumeratedBroadcasts = 24;

/// Sums the probability of every joint reception outcome of every broadcast
/// in which the desired view is neither received nor synthesizable.
double enumerate_failure_prob(const SynthesisConfig& cfg, const UserChannelState& user,
                              const TransmissionPlan& plan, ViewIndex desired);

/// Every view multicast, each received with probability 1 - loss_p, each
/// subscribed with probability p_select. Returns the obtained fraction of
/// subscribed views.
McEstimate mc_alpha_uniform(double loss_p, int dibr_range, std::uint64_t total_views,
                            double p_select, std::uint64_t seed);

/// Periodic Zipf subscription, every view multicast, reception Bernoulli(success_p).
McEstimate mc_alpha_zipf_consecutive(double success_p, int dibr_range,
                                     const analytics::ZipfPeriodicSubscription& zipf,
                                     std::uint64_t total_views, std::uint64_t seed);

/// Only views 1, 1+R~, 1+2R~, ... are multicast; every view is subscribed.
McEstimate mc_alpha_spaced(double loss_p, int dibr_range, int spacing,
                           std::uint64_t total_views, std::uint64_t seed);

}  // namespace mvgmp::oracle
