#pragma once

// MVGMP: AP-side ViewTable maintenance and client-side view selection.

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "mvgmp/channel.hpp"
#include "mvgmp/model.hpp"

namespace mvgmp::protocol {

using Frame = std::int64_t;

/// Identifies one multicast stream: a view carried on one (channel, rate).
struct EntryKey {
  ViewIndex view = 1;
  Link link;
  auto operator<=>(const EntryKey&) const = default;
};

struct Subscriber {
  int requested_tx = 1;  // broadcasts per frame this subscriber relies on
  Frame last_refresh = 0;
};

struct ViewTableEntry {
  EntryKey key;
  std::uint64_t multicast_address = 0;
  std::map<UserId, Subscriber> subscribers;

  /// Broadcasts per frame: the largest count any subscriber relies on.
  int tx_count() const;
};

/// A join request for one stream. For an existing entry the count is the
/// one the client evaluated with; for a new entry it is the proposal.
struct ViewRequest {
  EntryKey key;
  int tx_count = 1;
  auto operator<=>(const ViewRequest&) const = default;
};

struct JoinMessage {
  UserId user = 0;
  std::vector<ViewRequest> views;
  bool empty() const { return views.empty(); }
};

struct LeaveMessage {
  UserId user = 0;
  std::vector<EntryKey> views;
  bool empty() const { return views.empty(); }
};

class ViewTable {
 public:
  ViewTable(int total_views, int num_channels, int num_rates);

  int total_views() const { return total_views_; }
  const std::map<EntryKey, ViewTableEntry>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }
  const ViewTableEntry* find(EntryKey key) const;
  bool valid_key(EntryKey key) const;

  /// Adds or refreshes the user on every requested entry.
  void apply_join(const JoinMessage& msg, Frame now);
  /// Removes the user from the listed entries; returns the stopped entries.
  std::vector<EntryKey> apply_leave(const LeaveMessage& msg);
  /// Touches every refresh timestamp of the user.
  void refresh(UserId user, Frame now);
  /// Drops subscribers with last_refresh < now - timeout.
  std::set<UserId> apply_expiry(Frame now, Frame timeout);

  std::vector<EntryKey> entries_of(UserId user) const;
  channel::ChannelTime airtime(const channel::PhyConfig& phy) const;
  channel::ChannelTime channel_airtime(const channel::PhyConfig& phy, int channel) const;
  /// Longest per-channel airtime (channels transmit in parallel).
  channel::ChannelTime makespan(const channel::PhyConfig& phy) const;

 private:
  int total_views_;
  int num_channels_;
  int num_rates_;
  std::uint64_t next_address_ = 1;
  std::map<EntryKey, ViewTableEntry> entries_;
};

struct ProtocolParams {
  double failure_threshold = 0.05;
  int max_aux_views = 4;
  int max_tx_count = 3;
  Frame soft_state_timeout = 3;

  void validate() const;
};

struct ClientState {
  UserId id = 0;
  Subscription subscription;
  UserChannelState channel;
  /// Joined entries and the broadcast count this client relies on.
  std::map<EntryKey, int> receiving;
  double failure_threshold = 0.05;
  int max_aux_views = 4;
};

struct JoinSelection {
  std::vector<ViewRequest> joins;        // existing entries at their current count
  std::vector<ViewRequest> new_entries;  // new streams, or count upgrades
  std::map<EntryKey, int> selected;      // the full resulting receive set
  double residual_failure = 0.0;         // worst failure prob over desired views
  bool saturated = false;                // threshold unreachable
};

/// Failure probability of one desired view over a set of joined streams.
double failure_over(const SynthesisConfig& cfg, const UserChannelState& user,
                    const std::map<EntryKey, int>& joined, ViewIndex desired);

/// Greedy Join-time selection: join the subscribed view if carried, add
/// left/right pairs by largest failure decrement, propose a direct stream
/// if still above threshold, then prune auxiliary streams.
JoinSelection select_views_on_join(const ClientState& client, const ViewTable& table,
                                   const SynthesisConfig& cfg, const channel::PhyConfig& phy,
                                   const ProtocolParams& params);

JoinMessage to_join_message(UserId user, const JoinSelection& selection);

ViewTable ap_handle_join(ViewTable table, const JoinMessage& msg, Frame now);

std::pair<ViewTable, std::vector<EntryKey>> ap_handle_leave(ViewTable table,
                                                            const LeaveMessage& msg);

/// A staying client that became the only subscriber of a released stream
/// swaps it for another carried stream when that keeps it within threshold.
/// `table` is the table after the departing Leave was applied.
std::optional<std::pair<LeaveMessage, JoinMessage>> client_reorganize_on_leave(
    const ClientState& client, const LeaveMessage& departing, const ViewTable& table,
    const SynthesisConfig& cfg, const channel::PhyConfig& phy, const ProtocolParams& params);

std::pair<ViewTable, std::set<UserId>> expire_soft_state(ViewTable table, Frame now,
                                                         Frame timeout);

struct ViewChange {
  LeaveMessage leave;
  JoinMessage join;
  JoinSelection selection;
};

/// Leave for streams useless to the new view, Join for the new selection.
/// Streams useful to both views are kept.
ViewChange change_view(const ClientState& client, ViewIndex new_view, const ViewTable& table,
                       const SynthesisConfig& cfg, const channel::PhyConfig& phy,
                       const ProtocolParams& params);

/// Re-runs selection for the same subscription (e.g. after the channel
/// state changed), keeping every still-useful stream.
ViewChange reselect(const ClientState& client, const ViewTable& table,
                    const SynthesisConfig& cfg, const channel::PhyConfig& phy,
                    const ProtocolParams& params);

// Line-based trace serialization.
std::string format_key(EntryKey key);
std::string format_join(const JoinMessage& msg);
std::string format_leave(const LeaveMessage& msg);
std::string format_table(const ViewTable& table, Frame frame);
JoinMessage parse_join(std::string_view line);
LeaveMessage parse_leave(std::string_view line);

}  // namespace mvgmp::protocol
