#include "mvgmp/cell.hpp"

#include <algorithm>
#include <tuple>

namespace mvgmp::protocol {

Cell::Cell(SynthesisConfig cfg, channel::PhyConfig phy, ProtocolParams params)
    : cfg_(cfg),
      phy_(std::move(phy)),
      params_(params),
      table_(cfg.total_views(), phy_.num_channels, phy_.num_rates()) {
  phy_.validate();
  params_.validate();
}

void Cell::emit(std::string line) {
  if (trace_ != nullptr) trace_->push_back(std::move(line));
}

void Cell::send_leave(const LeaveMessage& msg) {
  table_.apply_leave(msg);
  emit(format_leave(msg));
}

void Cell::record_selection(ClientState& client, const JoinSelection& sel) {
  client.receiving = sel.selected;
  if (sel.saturated)
    saturated_.insert(client.id);
  else
    saturated_.erase(client.id);
}

void Cell::reorganize_after(const LeaveMessage& msg, Frame now) {
  for (auto& [id, client] : clients_) {
    if (id == msg.user) continue;
    auto swap = client_reorganize_on_leave(client, msg, table_, cfg_, phy_, params_);
    if (!swap) continue;
    const auto& [leave, join] = *swap;
    send_leave(leave);
    table_.apply_join(join, now);
    emit(format_join(join));
    for (EntryKey key : leave.views) client.receiving.erase(key);
    for (const ViewRequest& req : join.views) client.receiving[req.key] = req.tx_count;
  }
}

void Cell::depart(const Departure& d, Frame now) {
  auto it = clients_.find(d.user);
  if (it == clients_.end()) return;
  saturated_.erase(d.user);
  if (d.silent) {
    silent_.insert(d.user);
    clients_.erase(it);
    return;
  }
  LeaveMessage msg{d.user, table_.entries_of(d.user)};
  clients_.erase(it);
  if (msg.empty()) return;
  send_leave(msg);
  reorganize_after(msg, now);
}

void Cell::apply_change(UserId user, ViewChange change, Frame now) {
  if (!change.leave.empty()) {
    send_leave(change.leave);
    reorganize_after(change.leave, now);
  }
  if (!change.join.empty()) {
    table_.apply_join(change.join, now);
    emit(format_join(change.join));
  }
  record_selection(clients_.at(user), change.selection);
}

void Cell::join(Arrival a, Frame now) {
  if (clients_.contains(a.user) || silent_.contains(a.user))
    throw std::invalid_argument("user " + std::to_string(a.user) + " already present");
  ClientState client{a.user,
                     Subscription(a.user, std::move(a.views), cfg_.total_views()),
                     std::move(a.channel),
                     {},
                     params_.failure_threshold,
                     params_.max_aux_views};
  const JoinSelection sel = select_views_on_join(client, table_, cfg_, phy_, params_);
  const JoinMessage msg = to_join_message(client.id, sel);
  if (!msg.empty()) {
    table_.apply_join(msg, now);
    emit(format_join(msg));
  }
  record_selection(client, sel);
  clients_.emplace(client.id, std::move(client));
}

void Cell::process_frame(Frame now, FrameEvents events) {
  auto by_user = [](const auto& a, const auto& b) { return a.user < b.user; };

  std::sort(events.departures.begin(), events.departures.end(), by_user);
  for (const Departure& d : events.departures) depart(d, now);

  // Channel changes (kind 0) go before view changes (kind 1) of the same user.
  std::vector<std::tuple<UserId, int, std::size_t>> changes;
  for (std::size_t i = 0; i < events.channel_changes.size(); ++i)
    changes.emplace_back(events.channel_changes[i].user, 0, i);
  for (std::size_t i = 0; i < events.view_changes.size(); ++i)
    changes.emplace_back(events.view_changes[i].user, 1, i);
  std::sort(changes.begin(), changes.end());
  for (const auto& [user, kind, index] : changes) {
    auto it = clients_.find(user);
    if (it == clients_.end()) continue;
    ClientState& client = it->second;
    if (kind == 0) {
      client.channel = std::move(events.channel_changes[index].channel);
      apply_change(user, reselect(client, table_, cfg_, phy_, params_), now);
    } else {
      const ViewIndex v = events.view_changes[index].view;
      if (client.subscription.desired() == std::vector<ViewIndex>{v}) continue;
      ViewChange change = change_view(client, v, table_, cfg_, phy_, params_);
      client.subscription = Subscription(user, {v}, cfg_.total_views());
      apply_change(user, std::move(change), now);
    }
  }

  std::sort(events.arrivals.begin(), events.arrivals.end(), by_user);
  for (Arrival& a : events.arrivals) join(std::move(a), now);

  for (const auto& [id, client] : clients_) table_.refresh(id, now);
  table_.apply_expiry(now, params_.soft_state_timeout);
  std::erase_if(silent_, [&](UserId u) { return table_.entries_of(u).empty(); });

  emit(format_table(table_, now));
}

void Cell::check_invariants() const {
  for (const auto& [key, entry] : table_.entries()) {
    if (entry.subscribers.empty())
      throw InvariantViolation("entry " + format_key(key) + " has no subscriber");
    for (const auto& [user, sub] : entry.subscribers)
      if (!clients_.contains(user) && !silent_.contains(user))
        throw InvariantViolation("entry " + format_key(key) + " lists unknown user " +
                                 std::to_string(user));
  }
  for (const auto& [id, client] : clients_) {
    std::vector<EntryKey> listed = table_.entries_of(id);
    std::vector<EntryKey> held;
    for (const auto& [key, n] : client.receiving) {
      held.push_back(key);
      const ViewTableEntry* e = table_.find(key);
      if (e == nullptr || e->tx_count() < n)
        throw InvariantViolation("client " + std::to_string(id) + " relies on stream " +
                                 format_key(key) + " the AP does not carry as expected");
    }
    if (listed != held)
      throw InvariantViolation("table and client " + std::to_string(id) +
                               " disagree on joined streams");
  }
}

}  // namespace mvgmp::protocol
