#pragma once

// 802.11n cell timing and per-user loss assignment.

#include <cstdint>
#include <variant>
#include <vector>

#include "mvgmp/model.hpp"

namespace mvgmp::channel {

using ChannelTime = std::int64_t;  // in PhyConfig::time_unit_s increments

struct PhyConfig {
  double channel_bandwidth_mhz = 40.0;
  double carrier_ghz = 5.0;
  int num_channels = 2;
  // 40 MHz, one spatial stream, long guard interval, MCS 0-7.
  std::vector<double> rates_mbps{13.5, 27.0, 40.5, 54.0, 81.0, 108.0, 121.5, 135.0};
  double view_size_bits = 64000.0;
  double time_unit_s = 1e-6;
  int ofdm_data_symbols = 7;
  int subcarriers = 108;
  double tx_power_dbm = 16.0;
  // Fixed preamble/padding cost added to every broadcast.
  ChannelTime overhead_units = 0;

  int num_rates() const { return static_cast<int>(rates_mbps.size()); }
  void validate() const;
};

/// Airtime of one broadcast of one view at `rate_index`.
ChannelTime tx_duration(const PhyConfig& phy, int rate_index);

/// Explicit per-user loss: rows[user][channel][rate].
struct ExplicitLossMatrix {
  std::vector<std::vector<std::vector<double>>> rows;
};

/// p(d, r) = 1 / (1 + exp(-(d - midpoint[r] - channel_offset[c]) / width)).
struct SigmoidLoss {
  double cell_radius_m = 60.0;
  double width_m = 4.0;
  std::vector<double> midpoint_m{110.0, 90.0, 76.0, 66.0, 52.0, 42.0, 38.0, 34.0};
  std::vector<double> channel_offset_m{};  // empty means 0 for every channel
};

class LossModel {
 public:
  explicit LossModel(ExplicitLossMatrix matrix) : model_(std::move(matrix)) {}
  explicit LossModel(SigmoidLoss sigmoid) : model_(std::move(sigmoid)) {}

  bool is_explicit() const { return std::holds_alternative<ExplicitLossMatrix>(model_); }
  const ExplicitLossMatrix& matrix() const { return std::get<ExplicitLossMatrix>(model_); }
  const SigmoidLoss& sigmoid() const { return std::get<SigmoidLoss>(model_); }

  void validate(const PhyConfig& phy) const;

 private:
  std::variant<ExplicitLossMatrix, SigmoidLoss> model_;
};

/// Loss of the sigmoid model at distance d on (channel, rate).
double sigmoid_loss(const SigmoidLoss& model, double distance_m, Link link);

/// Distance from the AP of a user placed uniformly in the cell disk.
double user_distance(const SigmoidLoss& model, UserId user, std::uint64_t seed);

/// Loss state for a user: the matrix row in explicit mode, or a seeded
/// uniform position in the cell mapped through the sigmoid.
UserChannelState assign_user_loss(const LossModel& model, UserId user, const PhyConfig& phy,
                                  std::uint64_t seed);

/// Sigmoid loss of a user at a known distance (positions fixed by caller).
UserChannelState user_loss_at_distance(const SigmoidLoss& model, UserId user,
                                       double distance_m, const PhyConfig& phy);

}  // namespace mvgmp::channel
