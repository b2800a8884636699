#include "mvgmp/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

#include "mvgmp/rng.hpp"

namespace mvgmp::oracle {

namespace {

struct Broadcast {
  ViewIndex view;
  double loss;
};

// Direct reception or a received pair a < v < b with b - a <= R.
std::vector<char> obtainable(const std::vector<char>& received, int dibr_range) {
  const auto n = static_cast<std::int64_t>(received.size());
  constexpr std::int64_t kNone = std::numeric_limits<std::int64_t>::min() / 4;
  std::vector<std::int64_t> next(received.size());
  std::int64_t upcoming = std::numeric_limits<std::int64_t>::max() / 4;
  for (std::int64_t v = n - 1; v >= 0; --v) {
    next[v] = upcoming;
    if (received[v]) upcoming = v;
  }
  std::vector<char> ok(received.size(), 0);
  std::int64_t previous = kNone;
  for (std::int64_t v = 0; v < n; ++v) {
    if (received[v]) {
      ok[v] = 1;
      previous = v;
    } else if (previous != kNone && next[v] - previous <= dibr_range) {
      ok[v] = 1;
    }
  }
  return ok;
}

// Ratio-of-totals estimate with a batch delta-method standard error.
McEstimate ratio_estimate(const std::vector<char>& ok, const std::vector<char>& subscribed,
                          std::uint64_t seed) {
  const std::size_t n = ok.size();
  const std::size_t batches = std::min<std::size_t>(100, n);
  std::vector<double> got(batches, 0.0), wanted(batches, 0.0);
  for (std::size_t v = 0; v < n; ++v) {
    const std::size_t b = v * batches / n;
    if (subscribed[v]) {
      wanted[b] += 1.0;
      if (ok[v]) got[b] += 1.0;
    }
  }
  double total_got = 0.0, total_wanted = 0.0;
  for (std::size_t b = 0; b < batches; ++b) {
    total_got += got[b];
    total_wanted += wanted[b];
  }
  McEstimate est;
  est.samples = n;
  est.rng_seed = seed;
  if (total_wanted == 0.0) return est;
  est.mean = total_got / total_wanted;
  if (batches > 1) {
    double ss = 0.0;
    for (std::size_t b = 0; b < batches; ++b) {
      const double e = got[b] - est.mean * wanted[b];
      ss += e * e;
    }
    const double mean_wanted = total_wanted / static_cast<double>(batches);
    const double bsz = static_cast<double>(batches);
    est.std_error = std::sqrt(ss / (bsz * (bsz - 1.0))) / mean_wanted;
  }
  return est;
}

void check_probability(double p) {
  if (!(p >= 0.0 && p <= 1.0)) throw std::invalid_argument("probability outside [0,1]");
}

}  // namespace

double enumerate_failure_prob(const SynthesisConfig& cfg, const UserChannelState& user,
                              const TransmissionPlan& plan, ViewIndex desired) {
  const int m = cfg.total_views();
  if (plan.total_views() != m) throw std::invalid_argument("plan and config disagree on M");
  if (!cfg.contains(desired)) throw std::out_of_range("desired view out of range");

  std::vector<Broadcast> casts;
  for (ViewIndex v = 1; v <= m; ++v)
    for (const auto& [link, n] : plan.counts(v)) {
      if (static_cast<int>(casts.size()) + n > kMaxEnumeratedBroadcasts)
        throw std::length_error("outcome space too large to enumerate");
      for (int i = 0; i < n; ++i) casts.push_back({v, user.loss_at(link)});
    }

  const std::uint32_t outcomes = 1U << casts.size();
  double failure = 0.0;
  double total = 0.0;
  std::vector<char> received(static_cast<std::size_t>(m) + 1);
  for (std::uint32_t mask = 0; mask < outcomes; ++mask) {
    std::fill(received.begin(), received.end(), 0);
    double prob = 1.0;
    for (std::size_t i = 0; i < casts.size(); ++i) {
      if (mask & (1U << i)) {
        prob *= 1.0 - casts[i].loss;
        received[casts[i].view] = 1;
      } else {
        prob *= casts[i].loss;
      }
    }
    total += prob;
    if (received[desired]) continue;
    bool synthesized = false;
    for (ViewIndex a = 1; a < desired && !synthesized; ++a)
      for (ViewIndex b = desired + 1; b <= m && b - a <= cfg.dibr_range(); ++b)
        if (received[a] && received[b]) {
          synthesized = true;
          break;
        }
    if (!synthesized) failure += prob;
  }
  if (std::abs(total - 1.0) > 1e-9)
    throw std::logic_error("enumerated outcome probabilities do not sum to 1");
  return failure;
}

McEstimate mc_alpha_uniform(double loss_p, int dibr_range, std::uint64_t total_views,
                            double p_select, std::uint64_t seed) {
  check_probability(loss_p);
  check_probability(p_select);
  if (dibr_range < 1 || total_views < 1) throw std::invalid_argument("bad R or M");
  Stream rng(seed);
  std::vector<char> received(total_views), subscribed(total_views);
  for (std::uint64_t v = 0; v < total_views; ++v) {
    received[v] = !rng.bernoulli(loss_p);
    subscribed[v] = rng.bernoulli(p_select);
  }
  return ratio_estimate(obtainable(received, dibr_range), subscribed, seed);
}

McEstimate mc_alpha_zipf_consecutive(double success_p, int dibr_range,
                                     const analytics::ZipfPeriodicSubscription& zipf,
                                     std::uint64_t total_views, std::uint64_t seed) {
  check_probability(success_p);
  if (dibr_range < 1 || total_views < 1) throw std::invalid_argument("bad R or M");
  const auto m = static_cast<std::uint64_t>(zipf.period());
  Stream rng(seed);
  std::vector<char> received(total_views), subscribed(total_views);
  for (std::uint64_t v = 0; v < total_views; ++v) {
    // View index v+1 sits at phase ((v+1) mod m) mapped into 1..m.
    const double c_over_phase = zipf.normalizer() /
        std::pow(static_cast<double>(v % m + 1), zipf.exponent());
    received[v] = rng.bernoulli(success_p);
    subscribed[v] = rng.bernoulli(c_over_phase);
  }
  return ratio_estimate(obtainable(received, dibr_range), subscribed, seed);
}

McEstimate mc_alpha_spaced(double loss_p, int dibr_range, int spacing,
                           std::uint64_t total_views, std::uint64_t seed) {
  check_probability(loss_p);
  if (dibr_range < 1 || total_views < 1) throw std::invalid_argument("bad R or M");
  if (spacing < 1 || spacing > dibr_range)
    throw std::invalid_argument("spacing must satisfy 1 <= spacing <= dibr_range");
  Stream rng(seed);
  std::vector<char> received(total_views, 0), subscribed(total_views, 1);
  for (std::uint64_t v = 0; v < total_views; v += static_cast<std::uint64_t>(spacing))
    received[v] = !rng.bernoulli(loss_p);
  return ratio_estimate(obtainable(received, dibr_range), subscribed, seed);
}

}  // namespace mvgmp::oracle
