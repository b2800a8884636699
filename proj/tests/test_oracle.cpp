#include <doctest.h>

#include <cmath>
#include <cstring>
#include <stdexcept>

#include "mvgmp/oracle.hpp"

using namespace mvgmp;

namespace {
const Link kL{0, 0};
}

TEST_CASE("enumeration examples") {
  const UserChannelState u(0, {{kL, 0.3}, {{1, 1}, 0.6}});
  TransmissionPlan plan(4);
  plan.set(1, kL, 2);
  plan.set(1, {1, 1}, 1);
  plan.set(2, kL, 1);
  CHECK(oracle::enumerate_failure_prob(SynthesisConfig(4, 3), u, plan, 1) ==
        doctest::Approx(0.3 * 0.3 * 0.6).epsilon(1e-15));

  const UserChannelState half(0, {{kL, 0.5}});
  TransmissionPlan three(3);
  for (ViewIndex v = 1; v <= 3; ++v) three.set(v, kL, 1);
  CHECK(oracle::enumerate_failure_prob(SynthesisConfig(3, 2), half, three, 2) ==
        doctest::Approx(0.375).epsilon(1e-15));

  TransmissionPlan two(2);
  two.set(1, kL, 1);
  two.set(2, kL, 1);
  CHECK(oracle::enumerate_failure_prob(SynthesisConfig(2, 2), half, two, 1) ==
        doctest::Approx(0.5).epsilon(1e-15));
}

TEST_CASE("enumeration refuses oversized outcome spaces") {
  const UserChannelState u(0, {{kL, 0.5}});
  TransmissionPlan plan(5);
  for (ViewIndex v = 1; v <= 5; ++v) plan.set(v, kL, 5);
  CHECK_THROWS_AS(oracle::enumerate_failure_prob(SynthesisConfig(5, 2), u, plan, 3),
                  std::length_error);
  plan.set(5, kL, 4);
  CHECK_NOTHROW(oracle::enumerate_failure_prob(SynthesisConfig(5, 2), u, plan, 3));
}

TEST_CASE("uniform oracle examples") {
  const auto zero = oracle::mc_alpha_uniform(0.0, 3, 20000, 0.5, 1);
  CHECK(zero.mean == 1.0);
  CHECK(zero.std_error == 0.0);
  CHECK(zero.samples == 20000);
  CHECK(zero.rng_seed == 1);
  CHECK(oracle::mc_alpha_uniform(1.0, 3, 20000, 0.5, 1).mean == 0.0);
  const auto r1 = oracle::mc_alpha_uniform(0.3, 1, 100000, 1.0, 2);
  CHECK(std::abs(r1.mean - 0.7) <= 3 * r1.std_error);
}

TEST_CASE("zipf oracle examples") {
  const analytics::ZipfPeriodicSubscription z(5, 2.0, 1.0);
  CHECK(oracle::mc_alpha_zipf_consecutive(1.0, 2, z, 100000, 3).mean == 1.0);
  const analytics::ZipfPeriodicSubscription flat(1, 0.0, 1.0);
  const auto a = oracle::mc_alpha_zipf_consecutive(0.6, 3, flat, 200000, 4);
  const auto b = oracle::mc_alpha_uniform(0.4, 3, 200000, 1.0, 5);
  CHECK(std::abs(a.mean - b.mean) <= 3 * std::hypot(a.std_error, b.std_error));
}

TEST_CASE("spaced oracle examples") {
  // Lengths chosen so the last view is transmitted.
  CHECK(oracle::mc_alpha_spaced(0.0, 4, 2, 20001, 1).mean == 1.0);
  CHECK(oracle::mc_alpha_spaced(0.0, 3, 3, 20002, 1).mean == 1.0);
  const auto a = oracle::mc_alpha_spaced(0.35, 3, 1, 200000, 6);
  const auto b = oracle::mc_alpha_uniform(0.35, 3, 200000, 1.0, 7);
  CHECK(std::abs(a.mean - b.mean) <= 3 * std::hypot(a.std_error, b.std_error));
  CHECK_THROWS_AS(oracle::mc_alpha_spaced(0.5, 2, 3, 1000, 1), std::invalid_argument);
}

TEST_CASE("oracles are deterministic given the seed") {
  auto same = [](const oracle::McEstimate& x, const oracle::McEstimate& y) {
    return std::memcmp(&x.mean, &y.mean, sizeof(double)) == 0 &&
           std::memcmp(&x.std_error, &y.std_error, sizeof(double)) == 0;
  };
  const analytics::ZipfPeriodicSubscription z(5, 2.0, 1.0);
  CHECK(same(oracle::mc_alpha_uniform(0.4, 3, 50000, 0.3, 9),
             oracle::mc_alpha_uniform(0.4, 3, 50000, 0.3, 9)));
  CHECK(same(oracle::mc_alpha_zipf_consecutive(0.4, 3, z, 50000, 9),
             oracle::mc_alpha_zipf_consecutive(0.4, 3, z, 50000, 9)));
  CHECK(same(oracle::mc_alpha_spaced(0.4, 3, 2, 50000, 9),
             oracle::mc_alpha_spaced(0.4, 3, 2, 50000, 9)));
  CHECK_FALSE(same(oracle::mc_alpha_uniform(0.4, 3, 50000, 0.3, 9),
                   oracle::mc_alpha_uniform(0.4, 3, 50000, 0.3, 10)));
}

TEST_CASE("doubling the sample count shrinks the standard error by about sqrt 2") {
  // Averaged over seeds so the ratio is stable.
  double small = 0, large = 0;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    small += oracle::mc_alpha_uniform(0.5, 2, 100000, 1.0, seed).std_error;
    large += oracle::mc_alpha_uniform(0.5, 2, 200000, 1.0, seed + 100).std_error;
  }
  CHECK(small / large == doctest::Approx(std::sqrt(2.0)).epsilon(0.05));
}
