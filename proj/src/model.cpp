#include "mvgmp/model.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace mvgmp {

namespace {

bool is_probability(double p) { return p >= 0.0 && p <= 1.0; }

void check_view(ViewIndex view, int total_views) {
  if (view < 1 || view > total_views)
    throw std::out_of_range("view " + std::to_string(view) + " outside 1.." +
                            std::to_string(total_views));
}

}  // namespace

SynthesisConfig::SynthesisConfig(int total_views, int dibr_range, int spacing)
    : total_views_(total_views), dibr_range_(dibr_range), spacing_(spacing) {
  if (total_views < 1) throw std::invalid_argument("total_views must be >= 1");
  if (dibr_range < 1) throw std::invalid_argument("dibr_range must be >= 1");
  if (spacing < 1 || spacing > dibr_range)
    throw std::invalid_argument("spacing must satisfy 1 <= spacing <= dibr_range");
}

UserChannelState::UserChannelState(UserId user, std::map<Link, double> loss)
    : user_(user), loss_(std::move(loss)) {
  if (loss_.empty()) throw std::invalid_argument("user has no usable link");
  for (const auto& [link, p] : loss_) {
    if (!is_probability(p)) throw std::invalid_argument("loss probability outside [0,1]");
    if (link.channel < 0 || link.rate < 0) throw std::invalid_argument("negative link index");
  }
}

double UserChannelState::loss_at(Link link) const {
  auto it = loss_.find(link);
  return it == loss_.end() ? 1.0 : it->second;
}

TransmissionPlan::TransmissionPlan(int total_views)
    : total_views_(total_views), counts_(total_views > 0 ? total_views : 0) {
  if (total_views < 1) throw std::invalid_argument("total_views must be >= 1");
}

void TransmissionPlan::set(ViewIndex view, Link link, int count) {
  check_view(view, total_views_);
  if (count < 0) throw std::invalid_argument("negative broadcast count");
  auto& m = counts_[view - 1];
  if (count == 0)
    m.erase(link);
  else
    m[link] = count;
}

void TransmissionPlan::add(ViewIndex view, Link link, int count) {
  set(view, link, this->count(view, link) + count);
}

int TransmissionPlan::count(ViewIndex view, Link link) const {
  check_view(view, total_views_);
  const auto& m = counts_[view - 1];
  auto it = m.find(link);
  return it == m.end() ? 0 : it->second;
}

bool TransmissionPlan::transmitted(ViewIndex view) const {
  check_view(view, total_views_);
  return !counts_[view - 1].empty();
}

const std::map<Link, int>& TransmissionPlan::counts(ViewIndex view) const {
  check_view(view, total_views_);
  return counts_[view - 1];
}

APTransmissionDistribution::APTransmissionDistribution(
    std::map<Link, std::vector<double>> probs)
    : probs_(std::move(probs)) {
  for (const auto& [link, dist] : probs_) {
    double total = 0.0;
    for (double p : dist) {
      if (!is_probability(p)) throw std::invalid_argument("AP count probability outside [0,1]");
      total += p;
    }
    if (std::abs(total - 1.0) > 1e-9)
      throw std::invalid_argument("AP count distribution does not sum to 1");
  }
}

const std::vector<double>* APTransmissionDistribution::at(Link link) const {
  auto it = probs_.find(link);
  return it == probs_.end() ? nullptr : &it->second;
}

Subscription::Subscription(UserId user, std::vector<ViewIndex> desired, int total_views)
    : user_(user), desired_(std::move(desired)) {
  if (desired_.empty()) throw std::invalid_argument("subscription must name a view");
  for (ViewIndex v : desired_) check_view(v, total_views);
  std::sort(desired_.begin(), desired_.end());
  if (std::adjacent_find(desired_.begin(), desired_.end()) != desired_.end())
    throw std::invalid_argument("duplicate view in subscription");
}

bool Subscription::contains(ViewIndex v) const {
  return std::binary_search(desired_.begin(), desired_.end(), v);
}

double combined_view_loss_prob(const UserChannelState& user,
                               const TransmissionPlan& plan, ViewIndex view) {
  double loss = 1.0;
  for (const auto& [link, n] : plan.counts(view)) loss *= std::pow(user.loss_at(link), n);
  return loss;
}

double combined_loss_prob_randomized(const UserChannelState& user,
                                     const APTransmissionDistribution& ap_dist) {
  double loss = 1.0;
  for (const auto& [link, p] : user.loss()) {
    const std::vector<double>* dist = ap_dist.at(link);
    if (dist == nullptr)
      throw std::invalid_argument("AP distribution missing link (" +
                                  std::to_string(link.channel) + "," +
                                  std::to_string(link.rate) + ")");
    double per_link = 0.0;
    for (std::size_t n = 0; n < dist->size(); ++n)
      per_link += (*dist)[n] * std::pow(p, static_cast<double>(n));
    loss *= per_link;
  }
  return loss;
}

}  // namespace mvgmp
