#include <doctest.h>

#include <algorithm>
#include <set>

#include "mvgmp/cell.hpp"
#include "mvgmp/rng.hpp"

using namespace mvgmp;
using namespace mvgmp::protocol;

namespace {

const channel::PhyConfig kPhy{};

UserChannelState random_channel(Stream& rng, UserId id) {
  std::map<Link, double> loss;
  for (int c = 0; c < kPhy.num_channels; ++c)
    for (int r = 0; r < kPhy.num_rates(); ++r)
      loss[{c, r}] = std::min(1.0, 0.02 * r + 0.4 * rng.uniform() * rng.uniform());
  return UserChannelState(id, loss);
}

// Random churn: arrivals, clean and silent departures, view and channel changes.
FrameEvents random_events(Stream& rng, std::set<UserId>& present, UserId& next_id, int M) {
  FrameEvents ev;
  for (UserId u : present) {
    const double x = rng.uniform();
    if (x < 0.08)
      ev.departures.push_back({u, rng.bernoulli(0.3)});
    else if (x < 0.3)
      ev.view_changes.push_back({u, 1 + static_cast<ViewIndex>(rng.below(M))});
    else if (x < 0.35)
      ev.channel_changes.push_back({u, random_channel(rng, u)});
  }
  for (const Departure& d : ev.departures) present.erase(d.user);
  const int arrivals = static_cast<int>(rng.below(3));
  for (int i = 0; i < arrivals; ++i) {
    const UserId u = next_id++;
    ev.arrivals.push_back({u, random_channel(rng, u), {1 + static_cast<ViewIndex>(rng.below(M))}});
    present.insert(u);
  }
  return ev;
}

template <typename T>
void shuffle(std::vector<T>& v, Stream& rng) {
  for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[rng.below(i)]);
}

std::string snapshot(const Cell& cell) {
  std::string out = format_table(cell.table(), 0);
  for (const auto& [k, e] : cell.table().entries()) out += " " + std::to_string(e.multicast_address);
  for (const auto& [id, c] : cell.clients())
    for (const auto& [k, n] : c.receiving) out += " " + std::to_string(id) + "@" + format_key(k);
  return out;
}

}  // namespace

TEST_CASE("random churn keeps the table consistent") {
  for (std::uint64_t seed = 1; seed <= 40; ++seed) {
    Stream rng(seed);
    const int M = 12;
    ProtocolParams params;
    params.max_aux_views = 2 + static_cast<int>(seed % 3);
    Cell cell(SynthesisConfig(M, 3), kPhy, params);
    std::set<UserId> present;
    UserId next_id = 0;
    for (Frame f = 0; f < 600; ++f) {
      cell.process_frame(f, random_events(rng, present, next_id, M));
      CAPTURE(seed);
      CAPTURE(f);
      REQUIRE_NOTHROW(cell.check_invariants());
      REQUIRE(cell.clients().size() == present.size());
      for (const auto& [id, c] : cell.clients()) {
        int aux = 0;
        for (const auto& [k, n] : c.receiving) aux += !c.subscription.contains(k.view);
        CHECK(aux <= params.max_aux_views);
        if (!cell.saturated().contains(id))
          CHECK(failure_over(cell.config(), c.channel, c.receiving, c.subscription.desired()[0]) <=
                params.failure_threshold + 1e-12);
      }
    }
  }
}

TEST_CASE("event order within a frame does not matter") {
  Stream gen(9);
  Stream mix(10);
  const int M = 10;
  Cell a(SynthesisConfig(M, 3), kPhy, ProtocolParams{});
  Cell b(SynthesisConfig(M, 3), kPhy, ProtocolParams{});
  std::set<UserId> present;
  UserId next_id = 0;
  for (Frame f = 0; f < 200; ++f) {
    FrameEvents ev = random_events(gen, present, next_id, M);
    FrameEvents perm = ev;
    shuffle(perm.arrivals, mix);
    shuffle(perm.departures, mix);
    shuffle(perm.view_changes, mix);
    shuffle(perm.channel_changes, mix);
    a.process_frame(f, std::move(ev));
    b.process_frame(f, std::move(perm));
    REQUIRE(snapshot(a) == snapshot(b));
  }
}

TEST_CASE("silent departure lingers until expiry") {
  ProtocolParams params;
  params.soft_state_timeout = 3;
  Cell cell(SynthesisConfig(8, 3), kPhy, params);
  const UserChannelState ch(1, {{{0, 7}, 0.01}});
  FrameEvents start;
  start.arrivals.push_back({1, ch, {4}});
  cell.process_frame(0, start);
  REQUIRE(cell.table().size() == 1);

  FrameEvents gone;
  gone.departures.push_back({1, true});
  cell.process_frame(1, gone);
  CHECK(cell.clients().empty());
  CHECK(cell.table().size() == 1);
  CHECK_NOTHROW(cell.check_invariants());

  FrameEvents back;
  back.arrivals.push_back({1, ch, {4}});
  CHECK_THROWS_AS(cell.process_frame(2, back), std::invalid_argument);

  // Last refresh was frame 0; dropped once now - 3 > 0.
  Cell fresh(SynthesisConfig(8, 3), kPhy, params);
  fresh.process_frame(0, start);
  fresh.process_frame(1, gone);
  fresh.process_frame(2, {});
  fresh.process_frame(3, {});
  CHECK(fresh.table().size() == 1);
  fresh.process_frame(4, {});
  CHECK(fresh.table().empty());
  CHECK_NOTHROW(fresh.process_frame(5, back));
  CHECK(fresh.table().size() == 1);
}

TEST_CASE("clean departure stops unshared streams") {
  Cell cell(SynthesisConfig(8, 3), kPhy, ProtocolParams{});
  std::vector<std::string> trace;
  cell.set_trace(&trace);
  FrameEvents start;
  start.arrivals.push_back({1, UserChannelState(1, {{{0, 7}, 0.01}}), {4}});
  start.arrivals.push_back({2, UserChannelState(2, {{{1, 7}, 0.01}}), {4}});
  cell.process_frame(0, start);
  CHECK(cell.table().size() == 2);

  FrameEvents leave;
  leave.departures.push_back({1, false});
  cell.process_frame(1, leave);
  CHECK(cell.table().size() == 1);
  CHECK(cell.table().find(EntryKey{4, {1, 7}}) != nullptr);
  CHECK(std::find(trace.begin(), trace.end(), "LEAVE user=1 views=4:0:7") != trace.end());
  CHECK(trace.back() == "TABLE frame=1 entries=4:1:7:1:[2]");

  FrameEvents dup;
  dup.arrivals.push_back({2, UserChannelState(2, {{{1, 7}, 0.01}}), {4}});
  CHECK_THROWS_AS(cell.process_frame(2, dup), std::invalid_argument);
}
