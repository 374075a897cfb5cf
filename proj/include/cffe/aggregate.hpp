#pragma once

#include <functional>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "cffe/forest.hpp"
#include "cffe/panel.hpp"

namespace cffe::agg {

struct AttPoint {
  double att = 0.0;  // percentage points per year
  double se = 0.0;
  int n = 0;  // treated observations at this event time
};

struct AttCurve {
  std::string label;
  std::map<int, AttPoint> by_k;
  // event times predicted beyond the model's treated-row support
  std::set<int> extrapolative_ks;

  std::pair<int, int> k_range() const {
    return by_k.empty() ? std::pair<int, int>{0, -1}
                        : std::pair<int, int>{by_k.begin()->first,
                                              by_k.rbegin()->first};
  }
};

// Average prediction over treated observations at each event time, with
// cluster-robust (by country) standard errors. Horizons with no treated rows
// are omitted, never zero-filled. When `k_range` is given, output is
// restricted to it; an entirely unsupported range is an error.
AttCurve dynamic_att(const forest::ForestModel& model, const PanelDataset& data,
                     std::optional<std::pair<int, int>> k_range = std::nullopt);

// One curve per group label. The labeler sees only the country's
// pre-treatment feature vector, so treatment-era variables cannot leak into
// the grouping.
using GroupLabeler = std::function<std::string(std::span<const double>)>;
std::map<std::string, AttCurve> group_att(const forest::ForestModel& model,
                                          const PanelDataset& data,
                                          const GroupLabeler& labeler);

struct CumulativePoint {
  double simple_sum = 0.0;  // pp, sum of annual effects
  double compounded = 0.0;  // percent of the level after compounding
  double ci_low = 0.0;      // delta-method CI for the compounded effect
  double ci_high = 0.0;
};

struct CumulativeEffects {
  std::map<int, CumulativePoint> by_horizon;  // horizon K covers k = 0..K
};

// Requires contiguous support 0..K for every reported horizon K. The
// compounded effect applies each annual effect to the already-shifted base:
// (prod(1 + att_k/100) - 1) * 100.
CumulativeEffects cumulative_effects(const AttCurve& curve);

struct CountryTrajectory {
  std::string country;
  AttCurve curve;  // per observed post event time, se from the forest variance
  double post_average = 0.0;
};
std::vector<CountryTrajectory> country_trajectories(
    const forest::ForestModel& model, const PanelDataset& data);

// Predicted effect path for a hypothetical adopter with the given
// pre-treatment profile. Event times outside the model's treated-row support
// are still predicted but land in extrapolative_ks.
AttCurve counterfactual_predict(const forest::ForestModel& model,
                                std::span<const double> x_profile,
                                std::pair<int, int> k_range);

}  // namespace cffe::agg
