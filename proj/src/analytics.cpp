#include "mvgmp/analytics.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace mvgmp::analytics {

namespace {

void check_probability(double p, const char* name) {
  if (!(p >= 0.0 && p <= 1.0))
    throw std::invalid_argument(std::string(name) + " must lie in [0,1]");
}

void check_plan(const SynthesisConfig& cfg, const TransmissionPlan& plan) {
  if (plan.total_views() != cfg.total_views())
    throw std::invalid_argument("plan and config disagree on total views");
}

}  // namespace

ZipfPeriodicSubscription::ZipfPeriodicSubscription(int period, double exponent,
                                                   double normalizer)
    : period_(period), exponent_(exponent), normalizer_(normalizer) {
  if (period < 1) throw std::invalid_argument("zipf period must be >= 1");
  if (!(exponent >= 0.0)) throw std::invalid_argument("zipf exponent must be >= 0");
  // weight(1) = c is the largest weight since s >= 0.
  if (!(normalizer > 0.0 && normalizer <= 1.0))
    throw std::invalid_argument("zipf normalizer must make every c/k^s a probability");
}

double ZipfPeriodicSubscription::weight(int phase) const {
  return normalizer_ / std::pow(static_cast<double>(phase), exponent_);
}

double ZipfPeriodicSubscription::period_mass() const {
  double total = 0.0;
  for (int t = 1; t <= period_; ++t) total += weight(t);
  return total;
}

double view_failure_prob(const SynthesisConfig& cfg, const UserChannelState& user,
                         const TransmissionPlan& plan, ViewIndex desired) {
  check_plan(cfg, plan);
  const int m = cfg.total_views();
  if (!cfg.contains(desired))
    throw std::out_of_range("desired view " + std::to_string(desired) + " outside 1.." +
                            std::to_string(m));

  auto lost = [&](ViewIndex v) { return combined_view_loss_prob(user, plan, v); };

  const double direct = lost(desired);
  if (desired == 1 || desired == m) return direct;

  const int r = cfg.dibr_range();

  // B_0: every left view within distance R-1 is lost.
  double no_synthesis = 1.0;
  for (int q = 1; q <= std::min(r - 1, desired - 1); ++q) no_synthesis *= lost(desired - q);

  // B_k: nearest received left view is desired-k, no right view within R-k.
  double left_gap = 1.0;  // views desired-1 .. desired-(k-1) all lost
  for (int k = 1; k <= std::min(r - 1, desired - 1); ++k) {
    const double left_received = 1.0 - lost(desired - k);
    double right_lost = 1.0;
    for (int l = 1; l <= std::min(r - k, m - desired); ++l) right_lost *= lost(desired + l);
    no_synthesis += left_received * left_gap * right_lost;
    left_gap *= lost(desired - k);
  }
  return direct * no_synthesis;
}

AlphaResult expected_alpha_exact(const SynthesisConfig& cfg, const UserChannelState& user,
                                 const TransmissionPlan& plan, const Subscription& sub) {
  double obtained = 0.0;
  for (ViewIndex v : sub.desired()) obtained += 1.0 - view_failure_prob(cfg, user, plan, v);
  return {obtained / static_cast<double>(sub.desired().size()), AlphaKind::kExactExpectation};
}

AlphaResult alpha_asymptotic_uniform(double loss_p, int dibr_range) {
  check_probability(loss_p, "loss_p");
  if (dibr_range < 1) throw std::invalid_argument("dibr_range must be >= 1");
  const double p = loss_p;
  const double q = 1.0 - p;
  double bracket = 0.0;
  for (int k = 1; k <= dibr_range; ++k)
    bracket += static_cast<double>(k) * q * std::pow(p, k - 1);
  bracket += std::pow(p, dibr_range);
  return {q * bracket, AlphaKind::kAsymptotic};
}

AlphaResult alpha_asymptotic_spaced(double loss_p, int dibr_range, int spacing) {
  check_probability(loss_p, "loss_p");
  if (dibr_range < 1) throw std::invalid_argument("dibr_range must be >= 1");
  if (spacing < 1 || spacing > dibr_range)
    throw std::invalid_argument("spacing must satisfy 1 <= spacing <= dibr_range");
  const double p = loss_p;
  const double q = 1.0 - p;
  const int hops = dibr_range / spacing;
  const double rt = static_cast<double>(spacing);
  double bracket = 0.0;
  for (int k = 1; k <= hops; ++k)
    bracket += rt * static_cast<double>(k) * q * std::pow(p, k - 1);
  bracket += std::pow(p, hops);
  return {q * bracket / rt, AlphaKind::kAsymptotic};
}

double zipf_window_mass(const ZipfPeriodicSubscription& zipf, int phase, int length) {
  const int m = zipf.period();
  if (phase < 1 || phase > m) throw std::out_of_range("phase outside 1..m");
  if (length < 0) throw std::invalid_argument("negative window length");
  const int rest_of_period = m - phase;

  double mass = 0.0;
  for (int l = 1; l <= std::min(length, rest_of_period); ++l) mass += zipf.weight(phase + l);
  if (length > rest_of_period) {
    const int beyond = length - rest_of_period;
    mass += zipf.period_mass() * static_cast<double>(beyond / m);
    for (int l = 1; l <= beyond % m; ++l) mass += zipf.weight(l);
  }
  return mass;
}

AlphaResult alpha_asymptotic_zipf_consecutive(double success_p, int dibr_range,
                                              const ZipfPeriodicSubscription& zipf,
                                              GapReward gap_reward) {
  check_probability(success_p, "success_p");
  if (dibr_range < 1) throw std::invalid_argument("dibr_range must be >= 1");
  const double p = success_p;
  const double miss = 1.0 - p;
  const double period_mass = zipf.period_mass();

  // Embedded phase chain is doubly stochastic, so its stationary law is
  // uniform and the per-phase rewards are simply summed.
  double reward = 0.0;
  for (int j = 1; j <= zipf.period(); ++j)
    for (int x = 1; x <= dibr_range; ++x)
      reward += zipf_window_mass(zipf, j, x) * p * std::pow(miss, x - 1);

  // A gap longer than R still ends in a directly received view; summed over
  // all starting phases that endpoint carries one full period of mass.
  if (gap_reward == GapReward::kDirectEndpoint)
    reward += period_mass * std::pow(miss, dibr_range);

  return {p * reward / period_mass, AlphaKind::kAsymptotic};
}

}  // namespace mvgmp::analytics
