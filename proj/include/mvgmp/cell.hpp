#pragma once

// Single-writer MVGMP event loop for one WiFi cell.
//
// Per-frame processing order:
//   1. departures (Leave), each followed by the reorganizations it triggers
//   2. view changes and re-selections, in user-id order, each an atomic
//      Leave -> reorganizations -> Join against the current table
//   3. arrivals (Join), in user-id order
//   4. soft-state refresh of every live client, then expiry
// Messages are sorted by user id inside each phase, so the resulting table
// does not depend on the order events were submitted in.

#include <map>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "mvgmp/protocol.hpp"

namespace mvgmp::protocol {

/// Raised when a protocol invariant is breached; always a bug.
class InvariantViolation : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

struct Arrival {
  UserId user = 0;
  UserChannelState channel;
  std::vector<ViewIndex> views;
};

struct Departure {
  UserId user = 0;
  bool silent = false;  // no Leave sent; soft state expires the entries
};

struct ViewChangeEvent {
  UserId user = 0;
  ViewIndex view = 1;
};

struct ChannelChange {
  UserId user = 0;
  UserChannelState channel;
};

struct FrameEvents {
  std::vector<Arrival> arrivals;
  std::vector<Departure> departures;
  std::vector<ViewChangeEvent> view_changes;
  std::vector<ChannelChange> channel_changes;
};

class Cell {
 public:
  Cell(SynthesisConfig cfg, channel::PhyConfig phy, ProtocolParams params);

  const ViewTable& table() const { return table_; }
  const std::map<UserId, ClientState>& clients() const { return clients_; }
  const SynthesisConfig& config() const { return cfg_; }
  const ProtocolParams& params() const { return params_; }
  /// Users whose last selection could not reach the threshold.
  const std::set<UserId>& saturated() const { return saturated_; }

  /// Every applied JOIN/LEAVE line and one TABLE line per frame are
  /// appended here when set.
  void set_trace(std::vector<std::string>* sink) { trace_ = sink; }

  void process_frame(Frame now, FrameEvents events);

  /// Throws InvariantViolation if the table and client views disagree.
  void check_invariants() const;

 private:
  void depart(const Departure& d, Frame now);
  void join(Arrival a, Frame now);
  void apply_change(UserId user, ViewChange change, Frame now);
  void send_leave(const LeaveMessage& msg);
  void reorganize_after(const LeaveMessage& msg, Frame now);
  void record_selection(ClientState& client, const JoinSelection& sel);
  void emit(std::string line);

  SynthesisConfig cfg_;
  channel::PhyConfig phy_;
  ProtocolParams params_;
  ViewTable table_;
  std::map<UserId, ClientState> clients_;
  std::set<UserId> silent_;  // departed without Leave, awaiting expiry
  std::set<UserId> saturated_;
  std::vector<std::string>* trace_ = nullptr;
};

}  // namespace mvgmp::protocol
