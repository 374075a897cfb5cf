#include "cffe/aggregate.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "cffe/errors.hpp"
#include "cffe/inference.hpp"

namespace cffe::agg {

namespace {

constexpr double kZ975 = 1.959963984540054;
constexpr double kNan = std::numeric_limits<double>::quiet_NaN();

// Rows of ever-treated countries that are actually under treatment. Every
// curve in this module averages over (subsets of) these.
std::vector<std::size_t> treated_rows(const PanelDataset& data) {
  std::vector<std::size_t> rows;
  for (std::size_t i = 0; i < data.observations.size(); ++i) {
    const Observation& obs = data.observations[i];
    if (obs.treated && obs.event_time.has_value()) rows.push_back(i);
  }
  return rows;
}

// Mean prediction per event time with country-clustered SEs. Horizons backed
// by a single country get a NaN standard error rather than a fake zero.
AttCurve curve_over_rows(const forest::ForestModel& model,
                         const PanelDataset& data,
                         const std::vector<std::size_t>& rows,
                         std::string label) {
  std::map<int, std::vector<std::size_t>> rows_at_k;
  for (std::size_t i : rows) rows_at_k[*data.observations[i].event_time].push_back(i);

  AttCurve curve;
  curve.label = std::move(label);
  for (const auto& [k, members] : rows_at_k) {
    std::vector<double> effects;
    std::vector<std::string> countries;
    effects.reserve(members.size());
    countries.reserve(members.size());
    for (std::size_t i : members) {
      const Observation& obs = data.observations[i];
      effects.push_back(forest::predict_cate(model, k, obs.features));
      countries.push_back(obs.country);
    }
    double sum = 0.0;
    for (double e : effects) sum += e;
    AttPoint pt;
    pt.att = sum / static_cast<double>(effects.size());
    pt.n = static_cast<int>(effects.size());
    std::set<std::string> distinct(countries.begin(), countries.end());
    pt.se = distinct.size() < 2
                ? kNan
                : std::sqrt(infer::cluster_robust_var(effects, countries));
    curve.by_k.emplace(k, pt);
  }
  return curve;
}

}  // namespace

AttCurve dynamic_att(const forest::ForestModel& model, const PanelDataset& data,
                     std::optional<std::pair<int, int>> k_range) {
  std::vector<std::size_t> rows = treated_rows(data);
  if (k_range.has_value()) {
    auto [lo, hi] = *k_range;
    std::erase_if(rows, [&](std::size_t i) {
      int k = *data.observations[i].event_time;
      return k < lo || k > hi;
    });
    if (rows.empty()) {
      std::ostringstream msg;
      msg << "no treated observations at event times " << lo << ".." << hi;
      throw EmptyHorizon(msg.str());
    }
  }
  return curve_over_rows(model, data, rows, "all treated");
}

std::map<std::string, AttCurve> group_att(const forest::ForestModel& model,
                                          const PanelDataset& data,
                                          const GroupLabeler& labeler) {
  // Label whole countries from their (pre-treatment) feature vector only.
  std::map<std::string, std::string> label_of;
  std::set<std::string> labels;
  for (const auto& [country, idx] : data.country_index) {
    const std::vector<double>& x = data.observations[idx.front()].features;
    std::string label = labeler(std::span<const double>(x.data(), x.size()));
    label_of.emplace(country, label);
    labels.insert(std::move(label));
  }

  std::map<std::string, std::vector<std::size_t>> rows_by_label;
  for (std::size_t i : treated_rows(data))
    rows_by_label[label_of.at(data.observations[i].country)].push_back(i);

  std::map<std::string, AttCurve> out;
  for (const std::string& label : labels) {
    auto it = rows_by_label.find(label);
    if (it == rows_by_label.end())
      throw EmptyGroup("group '" + label + "' has no treated observations");
    out.emplace(label, curve_over_rows(model, data, it->second, label));
  }
  return out;
}

CumulativeEffects cumulative_effects(const AttCurve& curve) {
  auto first_post = curve.by_k.lower_bound(0);
  if (first_post == curve.by_k.end())
    throw GapInSupport("curve has no post-treatment entries");
  if (first_post->first != 0)
    throw GapInSupport("cumulative effects need support starting at k = 0");

  // Walk the contiguous run from k = 0; anything beyond a hole is
  // unreachable by compounding and therefore an error, not silently skipped.
  std::vector<double> atts;
  std::vector<double> ses;
  int expected = 0;
  for (auto it = first_post; it != curve.by_k.end(); ++it, ++expected) {
    if (it->first != expected) {
      std::ostringstream msg;
      msg << "support gap: k = " << expected << " missing but k = " << it->first
          << " present";
      throw GapInSupport(msg.str());
    }
    atts.push_back(it->second.att);
    ses.push_back(it->second.se);
  }

  CumulativeEffects out;
  double simple = 0.0;
  double growth = 1.0;
  for (std::size_t horizon = 0; horizon < atts.size(); ++horizon) {
    simple += atts[horizon];
    growth *= 1.0 + atts[horizon] / 100.0;

    CumulativePoint pt;
    pt.simple_sum = simple;
    pt.compounded = (growth - 1.0) * 100.0;
    // delta method, diagonal covariance: dC/datt_j = prod_{m != j}(1+att_m/100)
    double var = 0.0;
    for (std::size_t j = 0; j <= horizon; ++j) {
      double partial = 1.0;
      for (std::size_t m = 0; m <= horizon; ++m)
        if (m != j) partial *= 1.0 + atts[m] / 100.0;
      var += partial * partial * ses[j] * ses[j];
    }
    double band = kZ975 * std::sqrt(var);
    pt.ci_low = pt.compounded - band;
    pt.ci_high = pt.compounded + band;
    out.by_horizon.emplace(static_cast<int>(horizon), pt);
  }
  return out;
}

std::vector<CountryTrajectory> country_trajectories(
    const forest::ForestModel& model, const PanelDataset& data) {
  std::vector<CountryTrajectory> out;
  for (const std::string& country : data.treated_countries()) {
    CountryTrajectory traj;
    traj.country = country;
    traj.curve.label = country;
    double sum = 0.0;
    int n = 0;
    for (std::size_t i : data.country_index.at(country)) {
      const Observation& obs = data.observations[i];
      if (!obs.treated || !obs.event_time.has_value()) continue;
      int k = *obs.event_time;
      AttPoint pt;
      pt.att = forest::predict_cate(model, k, obs.features);
      pt.se = std::sqrt(forest::forest_variance(model, k, obs.features));
      pt.n = 1;
      traj.curve.by_k.emplace(k, pt);
      sum += pt.att;
      ++n;
    }
    if (n == 0) continue;  // treated on paper but no post row survived
    traj.post_average = sum / n;
    out.push_back(std::move(traj));
  }
  return out;
}

AttCurve counterfactual_predict(const forest::ForestModel& model,
                                std::span<const double> x_profile,
                                std::pair<int, int> k_range) {
  auto [lo, hi] = k_range;
  if (lo > hi) {
    std::ostringstream msg;
    msg << "requested horizon " << lo << ".." << hi << " is empty";
    throw EmptyHorizon(msg.str());
  }
  AttCurve curve;
  curve.label = "counterfactual (extrapolative)";
  for (int k = lo; k <= hi; ++k) {
    AttPoint pt;
    pt.att = forest::predict_cate(model, k, x_profile);
    pt.se = std::sqrt(forest::forest_variance(model, k, x_profile));
    pt.n = 1;
    curve.by_k.emplace(k, pt);
    if (k < model.k_min || k > model.k_max) curve.extrapolative_ks.insert(k);
  }
  return curve;
}

}  // namespace cffe::agg
