#include "mvgmp/channel.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

#include "mvgmp/rng.hpp"

namespace mvgmp::channel {

namespace {

constexpr std::uint64_t kPositionStream = 0x706F736974696F6EULL;  // "position"

}  // namespace

void PhyConfig::validate() const {
  if (num_channels < 1) throw std::invalid_argument("num_channels must be >= 1");
  if (rates_mbps.size() != 8) throw std::invalid_argument("exactly 8 data rates required");
  for (std::size_t i = 0; i < rates_mbps.size(); ++i) {
    if (!(rates_mbps[i] > 0.0)) throw std::invalid_argument("data rates must be positive");
    if (i > 0 && !(rates_mbps[i] > rates_mbps[i - 1]))
      throw std::invalid_argument("data rates must be strictly increasing");
  }
  if (!(view_size_bits > 0.0)) throw std::invalid_argument("view_size must be positive");
  if (!(time_unit_s > 0.0)) throw std::invalid_argument("time_unit must be positive");
  if (overhead_units < 0) throw std::invalid_argument("overhead must be non-negative");
}

ChannelTime tx_duration(const PhyConfig& phy, int rate_index) {
  if (rate_index < 0 || rate_index >= phy.num_rates())
    throw std::out_of_range("rate index " + std::to_string(rate_index) + " out of range");
  const double bits_per_unit = phy.rates_mbps[rate_index] * 1e6 * phy.time_unit_s;
  const double units = phy.view_size_bits / bits_per_unit;
  // Absorb representation error of exact quotients (64000 / 64 must be 1000).
  return static_cast<ChannelTime>(std::ceil(units - 1e-9)) + phy.overhead_units;
}

void LossModel::validate(const PhyConfig& phy) const {
  if (is_explicit()) {
    for (const auto& row : matrix().rows) {
      if (static_cast<int>(row.size()) != phy.num_channels)
        throw std::invalid_argument("loss matrix row must have one entry per channel");
      for (const auto& per_rate : row) {
        if (per_rate.empty() || static_cast<int>(per_rate.size()) > phy.num_rates() ||
            per_rate.size() != row.front().size())
          throw std::invalid_argument("loss matrix has inconsistent rate dimension");
        for (double p : per_rate)
          if (!(p >= 0.0 && p <= 1.0))
            throw std::invalid_argument("loss matrix probability outside [0,1]");
      }
    }
    return;
  }
  const SigmoidLoss& s = sigmoid();
  if (!(s.cell_radius_m > 0.0) || !(s.width_m > 0.0))
    throw std::invalid_argument("sigmoid radius and width must be positive");
  if (static_cast<int>(s.midpoint_m.size()) != phy.num_rates())
    throw std::invalid_argument("sigmoid needs one midpoint per rate");
  for (std::size_t i = 1; i < s.midpoint_m.size(); ++i)
    if (s.midpoint_m[i] > s.midpoint_m[i - 1])
      throw std::invalid_argument("sigmoid midpoints must not increase with rate");
  if (!s.channel_offset_m.empty() &&
      static_cast<int>(s.channel_offset_m.size()) != phy.num_channels)
    throw std::invalid_argument("sigmoid channel offsets must match num_channels");
}

double sigmoid_loss(const SigmoidLoss& model, double distance_m, Link link) {
  const double offset = model.channel_offset_m.empty()
                            ? 0.0
                            : model.channel_offset_m.at(static_cast<std::size_t>(link.channel));
  const double midpoint = model.midpoint_m.at(static_cast<std::size_t>(link.rate)) + offset;
  return 1.0 / (1.0 + std::exp(-(distance_m - midpoint) / model.width_m));
}

double user_distance(const SigmoidLoss& model, UserId user, std::uint64_t seed) {
  // Uniform in the disk: radius scales with the square root of a uniform.
  const double u = counter_uniform(seed, {kPositionStream, user});
  return model.cell_radius_m * std::sqrt(u);
}

UserChannelState user_loss_at_distance(const SigmoidLoss& model, UserId user,
                                       double distance_m, const PhyConfig& phy) {
  std::map<Link, double> loss;
  for (int c = 0; c < phy.num_channels; ++c)
    for (int r = 0; r < phy.num_rates(); ++r) loss[{c, r}] = sigmoid_loss(model, distance_m, {c, r});
  return UserChannelState(user, std::move(loss));
}

UserChannelState assign_user_loss(const LossModel& model, UserId user, const PhyConfig& phy,
                                  std::uint64_t seed) {
  model.validate(phy);
  if (model.is_explicit()) {
    const auto& rows = model.matrix().rows;
    if (user >= rows.size())
      throw std::out_of_range("no loss matrix row for user " + std::to_string(user));
    std::map<Link, double> loss;
    const auto& row = rows[user];
    for (int c = 0; c < static_cast<int>(row.size()); ++c)
      for (int r = 0; r < static_cast<int>(row[c].size()); ++r) loss[{c, r}] = row[c][r];
    return UserChannelState(user, std::move(loss));
  }
  return user_loss_at_distance(model.sigmoid(), user, user_distance(model.sigmoid(), user, seed),
                               phy);
}

}  // namespace mvgmp::channel
