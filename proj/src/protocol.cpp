#include "mvgmp/protocol.hpp"

#include <algorithm>
#include <charconv>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <tuple>

#include "mvgmp/analytics.hpp"

namespace mvgmp::protocol {

namespace {

using Joined = std::map<EntryKey, int>;
using channel::ChannelTime;

constexpr double kProbEps = 1e-12;

bool within(double failure, double threshold) { return failure <= threshold + kProbEps; }

// Shared evaluation context for one client's selection decisions.
class Selector {
 public:
  Selector(const ClientState& client, const ViewTable& table, const SynthesisConfig& cfg,
           const channel::PhyConfig& phy, const ProtocolParams& params)
      : client_(client), table_(table), cfg_(cfg), phy_(phy), params_(params) {}

  double fail(ViewIndex d, const Joined& joined) const {
    return failure_over(cfg_, client_.channel, joined, d);
  }

  ChannelTime cost(EntryKey key, int n) const {
    return static_cast<ChannelTime>(n) * channel::tx_duration(phy_, key.link.rate);
  }

  int table_tx(EntryKey key) const {
    const ViewTableEntry* e = table_.find(key);
    return e == nullptr ? 0 : e->tx_count();
  }

  bool usable(EntryKey key) const {
    return table_.valid_key(key) && client_.channel.can_use(key.link);
  }

  bool is_aux(EntryKey key) const { return !client_.subscription.contains(key.view); }

  int aux_count(const Joined& joined) const {
    return static_cast<int>(std::count_if(joined.begin(), joined.end(),
                                          [&](const auto& kv) { return is_aux(kv.first); }));
  }

  double threshold() const { return client_.failure_threshold; }
  int max_aux() const { return client_.max_aux_views; }

  // Step 1: join the best carried stream of the desired view.
  void join_direct(ViewIndex d, Joined& joined) const {
    for (const auto& [key, n] : joined)
      if (key.view == d) return;
    std::optional<std::tuple<double, ChannelTime, EntryKey>> best;
    for (const auto& [key, entry] : table_.entries()) {
      if (key.view != d || !usable(key)) continue;
      const int n = entry.tx_count();
      double loss = 1.0;
      for (int i = 0; i < n; ++i) loss *= client_.channel.loss_at(key.link);
      std::tuple<double, ChannelTime, EntryKey> cand{loss, cost(key, n), key};
      if (!best || cand < *best) best = cand;
    }
    if (best) joined[std::get<2>(*best)] = table_tx(std::get<2>(*best));
  }

  // Step 2: add carried left/right pairs by largest failure decrement.
  void add_pairs(ViewIndex d, Joined& joined) const {
    const int r = cfg_.dibr_range();
    const int m = cfg_.total_views();
    if (d == 1 || d == m || r < 2) return;
    std::vector<EntryKey> left, right;
    for (const auto& [key, entry] : table_.entries()) {
      if (!usable(key)) continue;
      if (key.view < d && key.view >= d - (r - 1)) left.push_back(key);
      if (key.view > d && key.view <= d + (r - 1)) right.push_back(key);
    }
    double current = fail(d, joined);
    while (!within(current, threshold())) {
      struct Best {
        double decrement;
        ChannelTime added_cost;
        EntryKey l, rk;
        double failure;
      };
      std::optional<Best> best;
      for (EntryKey l : left) {
        for (EntryKey rk : right) {
          if (rk.view - l.view > r) continue;
          const bool have_l = joined.contains(l);
          const bool have_r = joined.contains(rk);
          if (have_l && have_r) continue;
          int added_aux = 0;
          ChannelTime added_cost = 0;
          Joined trial = joined;
          if (!have_l) {
            trial[l] = table_tx(l);
            added_aux += is_aux(l) ? 1 : 0;
            added_cost += cost(l, table_tx(l));
          }
          if (!have_r) {
            trial[rk] = table_tx(rk);
            added_aux += is_aux(rk) ? 1 : 0;
            added_cost += cost(rk, table_tx(rk));
          }
          if (aux_count(joined) + added_aux > max_aux()) continue;
          const double f = fail(d, trial);
          Best cand{current - f, added_cost, l, rk, f};
          const bool better =
              !best || cand.decrement > best->decrement ||
              (cand.decrement == best->decrement &&
               std::tie(cand.added_cost, cand.l, cand.rk) <
                   std::tie(best->added_cost, best->l, best->rk));
          if (better) best = cand;
        }
      }
      if (!best || best->decrement <= 0.0) return;
      joined.try_emplace(best->l, table_tx(best->l));
      joined.try_emplace(best->rk, table_tx(best->rk));
      current = best->failure;
    }
  }

  // Step 3: carry the desired view on the cheapest link meeting the
  // threshold, or on the most robust option when none does.
  void propose_direct(ViewIndex d, Joined& joined) const {
    if (within(fail(d, joined), threshold())) return;
    Joined base = joined;
    std::erase_if(base, [&](const auto& kv) { return kv.first.view == d; });

    struct Option {
      double failure;
      ChannelTime cost;
      int rate;
      int tx;
      ChannelTime load;
      int channel;
    };
    std::optional<Option> best;
    bool best_ok = false;
    for (const auto& [link, p] : client_.channel.loss()) {
      const EntryKey key{d, link};
      if (!usable(key)) continue;
      const ChannelTime load = table_.channel_airtime(phy_, link.channel);
      for (int n = 1; n <= params_.max_tx_count; ++n) {
        const int eff = std::max(n, table_tx(key));
        Joined trial = base;
        trial[key] = eff;
        Option cand{fail(d, trial), cost(key, eff), link.rate, eff, load, link.channel};
        const bool ok = within(cand.failure, threshold());
        // Qualifying options: cheapest, then fastest rate, then fewest
        // broadcasts, then least loaded channel. Otherwise most robust first.
        auto rank_ok = [](const Option& o) {
          return std::make_tuple(o.cost, -o.rate, o.tx, o.load, o.channel);
        };
        auto rank_bad = [](const Option& o) {
          return std::make_tuple(o.failure, o.cost, -o.rate, o.tx, o.load, o.channel);
        };
        bool better;
        if (!best)
          better = true;
        else if (ok != best_ok)
          better = ok;
        else
          better = ok ? rank_ok(cand) < rank_ok(*best) : rank_bad(cand) < rank_bad(*best);
        if (better) {
          best = cand;
          best_ok = ok;
        }
      }
    }
    if (!best) return;
    joined = std::move(base);
    joined[EntryKey{d, Link{best->channel, best->rate}}] = best->tx;
  }

  // Step 4: drop auxiliary streams that are no longer needed, largest
  // airtime first.
  void prune(Joined& joined) const {
    std::vector<EntryKey> aux;
    for (const auto& [key, n] : joined)
      if (is_aux(key)) aux.push_back(key);
    std::sort(aux.begin(), aux.end(), [&](EntryKey a, EntryKey b) {
      const auto ca = cost(a, joined.at(a));
      const auto cb = cost(b, joined.at(b));
      return ca != cb ? ca > cb : b < a;
    });
    for (EntryKey key : aux) {
      Joined trial = joined;
      trial.erase(key);
      bool ok = true;
      for (ViewIndex v : client_.subscription.desired()) {
        if (!within(fail(v, trial), std::max(threshold(), fail(v, joined)))) {
          ok = false;
          break;
        }
      }
      if (ok) joined = std::move(trial);
    }
  }

  // Streams carried over from an earlier selection may exceed the cap;
  // drop the auxiliaries whose loss hurts least until it holds.
  void cap_aux(Joined& joined) const {
    while (aux_count(joined) > max_aux()) {
      std::optional<std::pair<double, EntryKey>> best;
      for (const auto& [key, n] : joined) {
        if (!is_aux(key)) continue;
        Joined trial = joined;
        trial.erase(key);
        double worst = 0.0;
        for (ViewIndex v : client_.subscription.desired()) worst = std::max(worst, fail(v, trial));
        if (!best || worst < best->first) best = {worst, key};
      }
      joined.erase(best->second);
    }
  }

  JoinSelection select(Joined joined) const {
    cap_aux(joined);
    for (ViewIndex d : client_.subscription.desired()) {
      join_direct(d, joined);
      add_pairs(d, joined);
      propose_direct(d, joined);
    }
    prune(joined);

    JoinSelection sel;
    for (const auto& [key, n] : joined) {
      const int t = table_tx(key);
      if (t > 0 && n <= t)
        sel.joins.push_back({key, t});
      else
        sel.new_entries.push_back({key, n});
    }
    for (ViewIndex d : client_.subscription.desired())
      sel.residual_failure = std::max(sel.residual_failure, fail(d, joined));
    sel.saturated = !within(sel.residual_failure, threshold());
    sel.selected = std::move(joined);
    return sel;
  }

 private:
  const ClientState& client_;
  const ViewTable& table_;
  const SynthesisConfig& cfg_;
  const channel::PhyConfig& phy_;
  const ProtocolParams& params_;
};

Joined effective_receiving(const ClientState& client, const ViewTable& table) {
  Joined out;
  for (const auto& [key, n] : client.receiving) {
    const ViewTableEntry* e = table.find(key);
    out[key] = std::max(n, e == nullptr ? 0 : e->tx_count());
  }
  return out;
}

ViewChange diff_selection(const ClientState& client, JoinSelection sel) {
  ViewChange change;
  change.leave.user = client.id;
  change.join.user = client.id;
  for (const auto& [key, n] : client.receiving)
    if (!sel.selected.contains(key)) change.leave.views.push_back(key);
  for (const auto& [key, n] : sel.selected) {
    auto it = client.receiving.find(key);
    if (it == client.receiving.end() || n > it->second) change.join.views.push_back({key, n});
  }
  change.selection = std::move(sel);
  return change;
}

// --- text helpers ----------------------------------------------------------

std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = s.find(sep, start);
    out.push_back(s.substr(start, pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

long long to_int(std::string_view s, std::string_view line) {
  long long v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size())
    throw std::invalid_argument("malformed number '" + std::string(s) + "' in: " +
                                std::string(line));
  return v;
}

std::string_view field(std::string_view line, std::string_view name) {
  for (std::string_view tok : split(line, ' ')) {
    if (tok.size() > name.size() && tok.substr(0, name.size()) == name &&
        tok[name.size()] == '=')
      return tok.substr(name.size() + 1);
  }
  throw std::invalid_argument("missing field '" + std::string(name) + "' in: " +
                              std::string(line));
}

template <typename T>
std::vector<T> parse_views(std::string_view line, std::string_view verb, bool allow_count) {
  if (line.substr(0, verb.size()) != verb)
    throw std::invalid_argument("expected " + std::string(verb) + ": " + std::string(line));
  std::vector<T> out;
  const std::string_view views = field(line, "views");
  if (views.empty()) return out;
  for (std::string_view item : split(views, ',')) {
    const auto parts = split(item, ':');
    if (parts.size() != 3 && !(allow_count && parts.size() == 4))
      throw std::invalid_argument("malformed view item '" + std::string(item) + "'");
    EntryKey key{static_cast<ViewIndex>(to_int(parts[0], line)),
                 Link{static_cast<int>(to_int(parts[1], line)),
                      static_cast<int>(to_int(parts[2], line))}};
    if constexpr (std::is_same_v<T, ViewRequest>) {
      const int n = parts.size() == 4 ? static_cast<int>(to_int(parts[3], line)) : 1;
      out.push_back(ViewRequest{key, n});
    } else {
      out.push_back(key);
    }
  }
  return out;
}

}  // namespace

int ViewTableEntry::tx_count() const {
  int n = 0;
  for (const auto& [user, sub] : subscribers) n = std::max(n, sub.requested_tx);
  return n;
}

ViewTable::ViewTable(int total_views, int num_channels, int num_rates)
    : total_views_(total_views), num_channels_(num_channels), num_rates_(num_rates) {
  if (total_views < 1 || num_channels < 1 || num_rates < 1)
    throw std::invalid_argument("view table dimensions must be positive");
}

const ViewTableEntry* ViewTable::find(EntryKey key) const {
  auto it = entries_.find(key);
  return it == entries_.end() ? nullptr : &it->second;
}

bool ViewTable::valid_key(EntryKey key) const {
  return key.view >= 1 && key.view <= total_views_ && key.link.channel >= 0 &&
         key.link.channel < num_channels_ && key.link.rate >= 0 && key.link.rate < num_rates_;
}

void ViewTable::apply_join(const JoinMessage& msg, Frame now) {
  for (const ViewRequest& req : msg.views) {
    if (!valid_key(req.key))
      throw std::invalid_argument("join references malformed stream " + format_key(req.key));
    if (req.tx_count < 1) throw std::invalid_argument("join requests no broadcasts");
  }
  for (const ViewRequest& req : msg.views) {
    auto [it, created] = entries_.try_emplace(req.key);
    if (created) {
      it->second.key = req.key;
      it->second.multicast_address = next_address_++;
    }
    it->second.subscribers[msg.user] = Subscriber{req.tx_count, now};
  }
}

std::vector<EntryKey> ViewTable::apply_leave(const LeaveMessage& msg) {
  std::vector<EntryKey> stopped;
  for (EntryKey key : msg.views) {
    auto it = entries_.find(key);
    if (it == entries_.end()) continue;
    it->second.subscribers.erase(msg.user);
    if (it->second.subscribers.empty()) {
      entries_.erase(it);
      stopped.push_back(key);
    }
  }
  return stopped;
}

void ViewTable::refresh(UserId user, Frame now) {
  for (auto& [key, entry] : entries_) {
    auto it = entry.subscribers.find(user);
    if (it != entry.subscribers.end()) it->second.last_refresh = now;
  }
}

std::set<UserId> ViewTable::apply_expiry(Frame now, Frame timeout) {
  if (timeout < 1) throw std::invalid_argument("soft-state timeout must be >= 1");
  std::set<UserId> dropped;
  for (auto it = entries_.begin(); it != entries_.end();) {
    auto& subs = it->second.subscribers;
    for (auto s = subs.begin(); s != subs.end();) {
      if (s->second.last_refresh < now - timeout) {
        dropped.insert(s->first);
        s = subs.erase(s);
      } else {
        ++s;
      }
    }
    it = subs.empty() ? entries_.erase(it) : std::next(it);
  }
  return dropped;
}

std::vector<EntryKey> ViewTable::entries_of(UserId user) const {
  std::vector<EntryKey> out;
  for (const auto& [key, entry] : entries_)
    if (entry.subscribers.contains(user)) out.push_back(key);
  return out;
}

channel::ChannelTime ViewTable::airtime(const channel::PhyConfig& phy) const {
  ChannelTime total = 0;
  for (const auto& [key, entry] : entries_)
    total += entry.tx_count() * channel::tx_duration(phy, key.link.rate);
  return total;
}

channel::ChannelTime ViewTable::channel_airtime(const channel::PhyConfig& phy,
                                                int channel) const {
  ChannelTime total = 0;
  for (const auto& [key, entry] : entries_)
    if (key.link.channel == channel)
      total += entry.tx_count() * channel::tx_duration(phy, key.link.rate);
  return total;
}

channel::ChannelTime ViewTable::makespan(const channel::PhyConfig& phy) const {
  ChannelTime longest = 0;
  for (int c = 0; c < num_channels_; ++c) longest = std::max(longest, channel_airtime(phy, c));
  return longest;
}

void ProtocolParams::validate() const {
  if (!(failure_threshold >= 0.0 && failure_threshold <= 1.0))
    throw std::invalid_argument("failure threshold must lie in [0,1]");
  if (max_aux_views < 0) throw std::invalid_argument("max_aux_views must be >= 0");
  if (max_tx_count < 1) throw std::invalid_argument("max_tx_count must be >= 1");
  if (soft_state_timeout < 1) throw std::invalid_argument("soft-state timeout must be >= 1");
}

double failure_over(const SynthesisConfig& cfg, const UserChannelState& user,
                    const std::map<EntryKey, int>& joined, ViewIndex desired) {
  TransmissionPlan plan(cfg.total_views());
  for (const auto& [key, n] : joined) plan.add(key.view, key.link, n);
  return analytics::view_failure_prob(cfg, user, plan, desired);
}

JoinSelection select_views_on_join(const ClientState& client, const ViewTable& table,
                                   const SynthesisConfig& cfg, const channel::PhyConfig& phy,
                                   const ProtocolParams& params) {
  return Selector(client, table, cfg, phy, params).select(effective_receiving(client, table));
}

JoinMessage to_join_message(UserId user, const JoinSelection& selection) {
  JoinMessage msg{user, {}};
  msg.views = selection.joins;
  msg.views.insert(msg.views.end(), selection.new_entries.begin(), selection.new_entries.end());
  std::sort(msg.views.begin(), msg.views.end());
  return msg;
}

ViewTable ap_handle_join(ViewTable table, const JoinMessage& msg, Frame now) {
  table.apply_join(msg, now);
  return table;
}

std::pair<ViewTable, std::vector<EntryKey>> ap_handle_leave(ViewTable table,
                                                            const LeaveMessage& msg) {
  auto stopped = table.apply_leave(msg);
  return {std::move(table), std::move(stopped)};
}

std::optional<std::pair<LeaveMessage, JoinMessage>> client_reorganize_on_leave(
    const ClientState& client, const LeaveMessage& departing, const ViewTable& table,
    const SynthesisConfig& cfg, const channel::PhyConfig& phy, const ProtocolParams& params) {
  const Selector sel(client, table, cfg, phy, params);
  // Judge swaps on the counts this client asked for; a higher count held by
  // another subscriber can disappear when that subscriber leaves.
  Joined joined = client.receiving;

  std::vector<EntryKey> shared;
  for (EntryKey key : departing.views)
    if (joined.contains(key)) shared.push_back(key);
  std::sort(shared.begin(), shared.end());
  shared.erase(std::unique(shared.begin(), shared.end()), shared.end());
  if (shared.empty()) return std::nullopt;

  LeaveMessage leave{client.id, {}};
  JoinMessage join{client.id, {}};
  for (EntryKey key : shared) {
    const ViewTableEntry* entry = table.find(key);
    if (entry == nullptr || entry->subscribers.size() != 1 ||
        !entry->subscribers.contains(client.id))
      continue;

    Joined without = joined;
    without.erase(key);
    std::optional<EntryKey> best;
    for (const auto& [alt, alt_entry] : table.entries()) {
      if (alt == key || joined.contains(alt) || !sel.usable(alt)) continue;
      if (alt_entry.subscribers.empty() || alt_entry.subscribers.contains(client.id)) continue;
      Joined trial = without;
      trial[alt] = alt_entry.tx_count();
      if (sel.aux_count(trial) > sel.max_aux()) continue;
      bool ok = true;
      for (ViewIndex v : client.subscription.desired())
        if (!within(sel.fail(v, trial), sel.threshold())) {
          ok = false;
          break;
        }
      // Every valid swap removes the same sole stream, so network airtime
      // after the swap is equal; prefer the smaller view index.
      if (ok && (!best || alt < *best)) best = alt;
    }
    if (!best) continue;
    joined = std::move(without);
    joined[*best] = table.find(*best)->tx_count();
    leave.views.push_back(key);
    join.views.push_back({*best, joined[*best]});
  }
  if (leave.empty()) return std::nullopt;
  return std::make_pair(std::move(leave), std::move(join));
}

std::pair<ViewTable, std::set<UserId>> expire_soft_state(ViewTable table, Frame now,
                                                         Frame timeout) {
  auto dropped = table.apply_expiry(now, timeout);
  return {std::move(table), std::move(dropped)};
}

ViewChange change_view(const ClientState& client, ViewIndex new_view, const ViewTable& table,
                       const SynthesisConfig& cfg, const channel::PhyConfig& phy,
                       const ProtocolParams& params) {
  if (!cfg.contains(new_view)) throw std::out_of_range("new view outside 1..M");
  if (client.subscription.desired() == std::vector<ViewIndex>{new_view})
    throw std::invalid_argument("new view equals the current view");

  ClientState next{client.id,
                   Subscription(client.id, {new_view}, cfg.total_views()),
                   client.channel,
                   {},
                   client.failure_threshold,
                   client.max_aux_views};
  const bool boundary = new_view == 1 || new_view == cfg.total_views();
  for (const auto& [key, n] : client.receiving) {
    const int dist = std::abs(key.view - new_view);
    if (key.view == new_view || (!boundary && dist <= cfg.dibr_range() - 1))
      next.receiving.emplace(key, n);
  }
  return diff_selection(client, select_views_on_join(next, table, cfg, phy, params));
}

ViewChange reselect(const ClientState& client, const ViewTable& table,
                    const SynthesisConfig& cfg, const channel::PhyConfig& phy,
                    const ProtocolParams& params) {
  return diff_selection(client, select_views_on_join(client, table, cfg, phy, params));
}

std::string format_key(EntryKey key) {
  return std::to_string(key.view) + ":" + std::to_string(key.link.channel) + ":" +
         std::to_string(key.link.rate);
}

std::string format_join(const JoinMessage& msg) {
  std::string out = "JOIN user=" + std::to_string(msg.user) + " views=";
  for (std::size_t i = 0; i < msg.views.size(); ++i) {
    if (i > 0) out += ',';
    out += format_key(msg.views[i].key);
    if (msg.views[i].tx_count != 1) out += ":" + std::to_string(msg.views[i].tx_count);
  }
  return out;
}

std::string format_leave(const LeaveMessage& msg) {
  std::string out = "LEAVE user=" + std::to_string(msg.user) + " views=";
  for (std::size_t i = 0; i < msg.views.size(); ++i) {
    if (i > 0) out += ',';
    out += format_key(msg.views[i]);
  }
  return out;
}

std::string format_table(const ViewTable& table, Frame frame) {
  std::string out = "TABLE frame=" + std::to_string(frame) + " entries=";
  bool first = true;
  for (const auto& [key, entry] : table.entries()) {
    if (!first) out += ',';
    first = false;
    out += format_key(key) + ":" + std::to_string(entry.tx_count()) + ":[";
    bool first_sub = true;
    for (const auto& [user, sub] : entry.subscribers) {
      if (!first_sub) out += ';';
      first_sub = false;
      out += std::to_string(user);
    }
    out += ']';
  }
  return out;
}

JoinMessage parse_join(std::string_view line) {
  JoinMessage msg;
  msg.user = static_cast<UserId>(to_int(field(line, "user"), line));
  msg.views = parse_views<ViewRequest>(line, "JOIN ", true);
  return msg;
}

LeaveMessage parse_leave(std::string_view line) {
  LeaveMessage msg;
  msg.user = static_cast<UserId>(to_int(field(line, "user"), line));
  msg.views = parse_views<EntryKey>(line, "LEAVE ", false);
  return msg;
}

}  // namespace mvgmp::protocol
