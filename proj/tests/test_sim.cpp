#include <doctest.h>

#include <cmath>
#include <stdexcept>

#include "mvgmp/sim.hpp"

using namespace mvgmp;
using namespace mvgmp::sim;

namespace {

std::vector<int> histogram(const Preference& pref, int M, int draws, std::uint64_t seed) {
  Stream rng(seed);
  std::vector<int> h(M + 1, 0);
  for (int i = 0; i < draws; ++i) ++h.at(sample_preference(pref, M, rng));
  return h;
}

// Every user sees every link loss-free.
channel::LossModel lossless(const channel::PhyConfig& phy) {
  channel::ExplicitLossMatrix m;
  m.rows.assign(1, std::vector<std::vector<double>>(phy.num_channels,
                                                     std::vector<double>(phy.num_rates(), 0.0)));
  return channel::LossModel(m);
}

ScenarioConfig frozen(int users, Frame frames) {
  ScenarioConfig cfg;
  cfg.workload.initial_users = users;
  cfg.workload.arrival_prob = 0.0;
  cfg.workload.departure_prob = 0.0;
  cfg.workload.view_change_prob = 0.0;
  cfg.workload.frames = frames;
  cfg.warmup = 0;
  return cfg;
}

}  // namespace

TEST_CASE("zipf ranks start at the center") {
  CHECK(zipf_rank_order(16) ==
        std::vector<ViewIndex>{8, 9, 7, 10, 6, 11, 5, 12, 4, 13, 3, 14, 2, 15, 1, 16});
  CHECK(zipf_rank_order(5) == std::vector<ViewIndex>{3, 4, 2, 5, 1});
  CHECK(zipf_rank_order(1) == std::vector<ViewIndex>{1});
}

TEST_CASE("preference sampling") {
  const int n = 100000;
  SUBCASE("uniform") {
    const auto h = histogram(Preference{}, 16, n, 3);
    const double p = 1.0 / 16;
    const double sd = std::sqrt(n * p * (1 - p));
    for (int v = 1; v <= 16; ++v) CHECK(std::abs(h[v] - n * p) <= 3 * sd);
  }
  SUBCASE("zipf") {
    Preference z;
    z.kind = Preference::Kind::kZipf;
    const auto h = histogram(z, 16, n, 4);
    // Rank 1 is view 8 and rank 2 is view 9.
    const double ratio = static_cast<double>(h[8]) / h[9];
    CHECK(ratio == doctest::Approx(4.0).epsilon(0.05));
    double norm = 0.0;
    for (int k = 1; k <= 16; ++k) norm += 1.0 / (k * k);
    CHECK(static_cast<double>(h[8]) / n == doctest::Approx(1.0 / norm).epsilon(0.02));
  }
  SUBCASE("normal") {
    Preference g;
    g.kind = Preference::Kind::kNormal;
    const auto h = histogram(g, 16, n, 5);
    for (int v = 1; v <= 16; ++v)
      if (v != 8) CHECK(h[8] > h[v]);
    for (int k = 1; k <= 3; ++k) {
      const double a = h[8 - k], b = h[8 + k];
      CHECK(std::abs(a - b) <= 4 * std::sqrt(a + b));
    }
  }
}

TEST_CASE("obtained fraction") {
  const SynthesisConfig cfg(8, 3);
  std::vector<char> rx(9, 0);
  rx[2] = rx[5] = 1;
  CHECK(obtained_fraction(cfg, {2}, rx) == 1.0);
  CHECK(obtained_fraction(cfg, {3, 4}, rx) == 1.0);
  CHECK(obtained_fraction(cfg, {1, 6}, rx) == 0.0);
  CHECK(obtained_fraction(cfg, {1, 3, 5, 8}, rx) == 0.5);
  CHECK(obtained_fraction(SynthesisConfig(8, 2), {3}, rx) == 0.0);
}

TEST_CASE("baseline link choice") {
  const channel::PhyConfig phy;
  std::map<UserId, UserInfo> users;
  users.emplace(1, UserInfo{{4}, UserChannelState(1, {{{0, 2}, 0.01}, {{0, 6}, 0.2},
                                                      {{1, 2}, 0.01}, {{1, 6}, 0.01}})});
  users.emplace(2, UserInfo{{4}, UserChannelState(2, {{{0, 2}, 0.02}, {{0, 6}, 0.01},
                                                      {{1, 2}, 0.03}, {{1, 6}, 0.04}})});
  users.emplace(3, UserInfo{{7}, UserChannelState(3, {{{0, 0}, 0.5}, {{1, 0}, 0.4}})});
  const auto plan = baseline_plan(users, phy, 0.05);
  REQUIRE(plan.size() == 2);
  // View 4: rate 6 meets the threshold only on channel 1 for both users.
  CHECK(plan[0].view == 4);
  CHECK(plan[0].link == Link{1, 6});
  // View 7: nothing qualifies, so the most robust link.
  CHECK(plan[1].view == 7);
  CHECK(plan[1].link == Link{1, 0});
}

TEST_CASE("static lossless fixture") {
  ScenarioConfig cfg = frozen(6, 50);
  cfg.loss = lossless(cfg.phy);
  const ScenarioResult res = run_scenario(cfg);
  REQUIRE(res.frames.size() == 50);
  for (const FrameOutcome& f : res.frames) {
    CHECK(f.channel_time_mvgmp == res.frames.front().channel_time_mvgmp);
    CHECK(f.channel_time_baseline == res.frames.front().channel_time_baseline);
    CHECK(f.population == 6);
    for (const auto& [u, s] : f.success_mvgmp) CHECK(s == 1.0);
    for (const auto& [u, s] : f.success_baseline) CHECK(s == 1.0);
  }
  CHECK(res.summary.alpha_mvgmp == 1.0);
  CHECK(res.summary.failure_rate_baseline == 0.0);
}

TEST_CASE("single boundary user costs the same under both schemes") {
  ScenarioConfig cfg = frozen(1, 20);
  cfg.loss = lossless(cfg.phy);
  cfg.workload.preference.kind = Preference::Kind::kNormal;
  cfg.workload.preference.normal_mean = 0.0;
  cfg.workload.preference.normal_variance = 1e-6;
  Simulator sim(cfg);
  REQUIRE(sim.users().at(0).views == std::vector<ViewIndex>{1});
  for (int i = 0; i < 20; ++i) {
    const FrameOutcome f = sim.step_frame();
    CHECK(f.channel_time_mvgmp == f.channel_time_baseline);
    CHECK(f.channel_time_mvgmp == channel::tx_duration(cfg.phy, 7));
  }
}

TEST_CASE("fifty users favour the protocol in nearly every frame") {
  // Population held at 50 while views keep changing.
  ScenarioConfig cfg;
  cfg.workload.arrival_prob = 0.0;
  cfg.workload.departure_prob = 0.0;
  const ScenarioResult res = run_scenario(cfg);
  std::size_t counted = 0, cheaper = 0;
  for (const FrameOutcome& f : res.frames) {
    if (f.frame <= cfg.warmup) continue;
    ++counted;
    cheaper += f.channel_time_mvgmp < f.channel_time_baseline;
  }
  CHECK(counted == 900);
  CHECK(static_cast<double>(cheaper) >= 0.95 * static_cast<double>(counted));
}

TEST_CASE("default workload costs less on average") {
  // Departures outpace arrivals here, so the cell is often nearly empty and
  // both schemes then carry the same single stream.
  const ScenarioResult res = run_scenario(ScenarioConfig{});
  std::size_t counted = 0, cheaper = 0;
  for (const FrameOutcome& f : res.frames) {
    if (f.frame <= 100) continue;
    ++counted;
    cheaper += f.channel_time_mvgmp < f.channel_time_baseline;
  }
  MESSAGE("cheaper in " << cheaper << " of " << counted << " frames");
  CHECK(res.summary.mean_ct_mvgmp < res.summary.mean_ct_baseline);
}

TEST_CASE("table size is the transmitted view count") {
  ScenarioConfig cfg;
  cfg.workload.frames = 200;
  cfg.scheme = Scheme::kMvgmp;
  Simulator sim(cfg);
  for (int i = 0; i < 200; ++i) {
    const FrameOutcome f = sim.step_frame();
    CHECK(f.transmitted_views == sim.cell()->table().size());
    CHECK(f.population == sim.users().size());
    CHECK(f.success_mvgmp.size() == f.population);
    CHECK(f.success_baseline.empty());
  }
}

TEST_CASE("summary and determinism") {
  ScenarioConfig cfg;
  cfg.workload.frames = 100;
  const ScenarioResult short_run = run_scenario(cfg);
  CHECK_FALSE(short_run.summary.sufficient);
  CHECK(short_run.summary.frames == 0);

  cfg.workload.frames = 300;
  const ScenarioResult a = run_scenario(cfg);
  const ScenarioResult b = run_scenario(cfg);
  REQUIRE(a.frames.size() == b.frames.size());
  for (std::size_t i = 0; i < a.frames.size(); ++i) {
    CHECK(a.frames[i].channel_time_mvgmp == b.frames[i].channel_time_mvgmp);
    CHECK(a.frames[i].channel_time_baseline == b.frames[i].channel_time_baseline);
    CHECK(a.frames[i].success_mvgmp == b.frames[i].success_mvgmp);
    CHECK(a.frames[i].success_baseline == b.frames[i].success_baseline);
  }
  CHECK(a.summary.sufficient);
  CHECK(a.summary.frames == 200);

  cfg.workload.seed = 2;
  const ScenarioResult c = run_scenario(cfg);
  bool differs = false;
  for (std::size_t i = 0; i < a.frames.size(); ++i)
    differs |= a.frames[i].channel_time_mvgmp != c.frames[i].channel_time_mvgmp;
  CHECK(differs);
}

TEST_CASE("heavier load costs more airtime") {
  std::vector<double> ct_m, ct_b;
  for (double rho : {0.125, 1.0, 8.0}) {
    double m = 0, b = 0;
    for (std::uint64_t seed = 1; seed <= 3; ++seed) {
      ScenarioConfig cfg;
      cfg.workload.arrival_prob = 0.5 * rho / (1 + rho);
      cfg.workload.departure_prob = 0.5 / (1 + rho);
      cfg.workload.frames = 600;
      cfg.workload.seed = seed;
      const Summary s = run_scenario(cfg).summary;
      m += s.mean_ct_mvgmp;
      b += s.mean_ct_baseline;
    }
    ct_m.push_back(m);
    ct_b.push_back(b);
  }
  CHECK(ct_m[0] <= ct_m[1]);
  CHECK(ct_m[1] <= ct_m[2]);
  CHECK(ct_b[0] <= ct_b[1]);
  CHECK(ct_b[1] <= ct_b[2]);
}

TEST_CASE("baseline direct reception matches the link loss") {
  ScenarioConfig cfg = frozen(12, 4000);
  cfg.synthesis = SynthesisConfig(16, 1);  // no synthesis: direct only
  cfg.scheme = Scheme::kBaseline;
  Simulator sim(cfg);
  std::map<UserId, double> hits;
  for (int i = 0; i < 4000; ++i)
    for (const auto& [u, s] : sim.step_frame().success_baseline) hits[u] += s;
  std::map<ViewIndex, Link> link_of;
  for (const BaselineStream& st : sim.last_baseline()) link_of[st.view] = st.link;
  for (const auto& [u, info] : sim.users()) {
    const double p = info.channel.loss_at(link_of.at(info.views[0]));
    const double se = std::sqrt(p * (1 - p) / 4000);
    CAPTURE(u);
    CHECK(std::abs(hits[u] / 4000 - (1 - p)) <= 3 * se + 1e-12);
  }
}

TEST_CASE("workload validation") {
  ScenarioConfig cfg;
  cfg.workload.arrival_prob = 1.5;
  CHECK_THROWS_AS(Simulator{cfg}, std::invalid_argument);
  cfg = ScenarioConfig{};
  cfg.workload.frames = 0;
  CHECK_THROWS_AS(Simulator{cfg}, std::invalid_argument);
  cfg = ScenarioConfig{};
  cfg.loss = channel::LossModel(channel::ExplicitLossMatrix{});
  CHECK_THROWS_AS(Simulator{cfg}, std::invalid_argument);
}
