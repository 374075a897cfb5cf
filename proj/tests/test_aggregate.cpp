#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "cffe/aggregate.hpp"
#include "cffe/dgp.hpp"
#include "cffe/errors.hpp"
#include "cffe/forest.hpp"

using namespace cffe;
using agg::AttCurve;
using agg::AttPoint;
using forest::ForestConfig;
using forest::ForestModel;

namespace {

dgp::DgpSpec constant_spec() {
  dgp::DgpSpec s;
  s.n_treated = 6;
  s.n_control = 8;
  s.year_start = 1985;
  s.year_end = 2015;
  s.adoption_year = 2000;
  s.n_features = 3;
  s.sigma_eps = 0.0;
  s.seed = 11;
  return s;
}

dgp::DgpSpec two_group_spec() {
  dgp::DgpSpec s;
  s.n_treated = 30;
  s.n_control = 30;
  s.year_start = 1985;
  s.year_end = 2015;
  s.adoption_year = 2000;
  s.n_features = 3;
  s.cate.kind = dgp::CateKind::kTwoGroup;
  s.cate.tau_low = -1.0;
  s.cate.tau_high = -0.1;
  s.cate.threshold = 0.0;
  s.sigma_eps = 0.05;
  s.seed = 17;
  return s;
}

ForestConfig small_config() {
  ForestConfig c;
  c.n_trees = 60;
  c.min_leaf = 20;
  c.max_depth = 3;
  c.min_treated_per_leaf = 3;
  c.min_control_per_leaf = 3;
  return c;
}

// per-country feature value (features are time-invariant)
std::map<std::string, std::vector<double>> country_features(
    const PanelDataset& data) {
  std::map<std::string, std::vector<double>> out;
  for (const auto& [country, idx] : data.country_index)
    out[country] = data.observations[idx.front()].features;
  return out;
}

AttCurve hand_curve(const std::vector<double>& atts,
                    const std::vector<double>& ses) {
  AttCurve c;
  for (std::size_t k = 0; k < atts.size(); ++k) {
    AttPoint pt;
    pt.att = atts[k];
    pt.se = ses[k];
    pt.n = 1;
    c.by_k.emplace(static_cast<int>(k), pt);
  }
  return c;
}

}  // namespace

TEST_CASE("dynamic ATT is flat under a constant effect") {
  auto [data, truth] = dgp::generate_panel(constant_spec());
  ForestModel model = forest::fit_forest(data, small_config(), 2);
  AttCurve curve = agg::dynamic_att(model, data);

  CHECK(curve.label == "all treated");
  CHECK(curve.k_range().first == 0);
  CHECK(curve.k_range().second == 15);
  CHECK(curve.by_k.size() == 16);
  CHECK(curve.extrapolative_ks.empty());
  for (const auto& [k, pt] : curve.by_k) {
    CHECK(std::fabs(pt.att + 0.35) < 1e-6);
    CHECK(pt.n == 6);
    CHECK(std::isfinite(pt.se));
    CHECK(pt.se < 1e-6);  // identical predictions have no cluster spread
  }
}

TEST_CASE("requested horizons restrict the curve and must be supported") {
  auto [data, truth] = dgp::generate_panel(constant_spec());
  ForestModel model = forest::fit_forest(data, small_config(), 2);

  AttCurve trimmed = agg::dynamic_att(model, data, {{0, 5}});
  CHECK(trimmed.by_k.size() == 6);
  CHECK(trimmed.k_range() == std::pair<int, int>{0, 5});

  // pre-treatment ks never enter: only rows under treatment are averaged
  AttCurve with_pre = agg::dynamic_att(model, data, {{-5, 3}});
  CHECK(with_pre.k_range().first == 0);
  CHECK(with_pre.by_k.size() == 4);

  CHECK_THROWS_AS(agg::dynamic_att(model, data, {{40, 50}}), EmptyHorizon);
}

TEST_CASE("horizons carried by one country get NaN standard errors") {
  dgp::DgpSpec s;
  s.adoption_schedule = {{"A", 1995}, {"B", 2005}};
  s.n_control = 4;
  s.year_start = 1990;
  s.year_end = 2010;
  s.n_features = 2;
  s.sigma_eps = 0.2;
  s.seed = 23;
  auto [data, truth] = dgp::generate_panel(s);
  ForestModel model = forest::fit_forest(data, small_config(), 2);

  AttCurve curve = agg::dynamic_att(model, data);
  CHECK(curve.k_range() == std::pair<int, int>{0, 15});
  for (const auto& [k, pt] : curve.by_k) {
    if (k <= 5) {
      CHECK(pt.n == 2);
      CHECK(std::isfinite(pt.se));
    } else {
      CHECK(pt.n == 1);  // only the 1995 adopter reaches this horizon
      CHECK(std::isnan(pt.se));
    }
  }
}

TEST_CASE("group curves aggregate back to the overall curve") {
  auto [data, truth] = dgp::generate_panel(constant_spec());
  ForestModel model = forest::fit_forest(data, small_config(), 2);

  // median split over the treated countries' second feature: 3 vs 3
  std::vector<double> treated_x1;
  auto features = country_features(data);
  for (const std::string& c : data.treated_countries())
    treated_x1.push_back(features.at(c)[1]);
  std::sort(treated_x1.begin(), treated_x1.end());
  const double thr = 0.5 * (treated_x1[2] + treated_x1[3]);
  auto labeler = [thr](std::span<const double> x) {
    return x[1] > thr ? std::string("hi") : std::string("lo");
  };

  auto groups = agg::group_att(model, data, labeler);
  REQUIRE(groups.size() == 2);
  AttCurve overall = agg::dynamic_att(model, data);

  for (const auto& [k, pt] : overall.by_k) {
    double weighted = 0.0;
    int n = 0;
    for (const auto& [label, curve] : groups) {
      auto it = curve.by_k.find(k);
      if (it == curve.by_k.end()) continue;
      weighted += it->second.att * it->second.n;
      n += it->second.n;
    }
    REQUIRE(n == pt.n);
    CHECK(std::fabs(weighted / n - pt.att) < 1e-10);
  }
}

TEST_CASE("two-group effects separate the group curves") {
  auto [data, truth] = dgp::generate_panel(two_group_spec());
  ForestModel model = forest::fit_forest(data, small_config(), 2);

  auto labeler = [](std::span<const double> x) {
    return x[0] <= 0.0 ? std::string("low") : std::string("high");
  };
  auto groups = agg::group_att(model, data, labeler);
  REQUIRE(groups.count("low") == 1);
  REQUIRE(groups.count("high") == 1);
  for (int k : {0, 5, 10}) {
    double low = groups.at("low").by_k.at(k).att;
    double high = groups.at("high").by_k.at(k).att;
    CHECK(low < high - 0.5);
  }
}

TEST_CASE("a label that captures no treated country is an error") {
  auto [data, truth] = dgp::generate_panel(constant_spec());
  ForestModel model = forest::fit_forest(data, small_config(), 2);

  auto features = country_features(data);
  double treated_max = -1e300;
  double treated_min = 1e300;
  for (const std::string& c : data.treated_countries()) {
    treated_max = std::max(treated_max, features.at(c)[0]);
    treated_min = std::min(treated_min, features.at(c)[0]);
  }
  bool control_above = false;
  bool control_below = false;
  for (const std::string& c : data.never_treated_countries()) {
    control_above = control_above || features.at(c)[0] > treated_max;
    control_below = control_below || features.at(c)[0] < treated_min;
  }
  REQUIRE((control_above || control_below));

  auto labeler = [&](std::span<const double> x) {
    bool edge = control_above ? x[0] > treated_max : x[0] < treated_min;
    return edge ? std::string("edge") : std::string("core");
  };
  CHECK_THROWS_AS(agg::group_att(model, data, labeler), EmptyGroup);
}

TEST_CASE("cumulative effects match an explicit product loop") {
  std::vector<double> atts = {-0.35, -0.50, 0.20, -1.10, -0.35};
  std::vector<double> ses = {0.10, 0.20, 0.05, 0.30, 0.15};
  agg::CumulativeEffects cum = agg::cumulative_effects(hand_curve(atts, ses));
  REQUIRE(cum.by_horizon.size() == atts.size());

  constexpr double kZ = 1.959963984540054;
  for (std::size_t horizon = 0; horizon < atts.size(); ++horizon) {
    double simple = 0.0;
    double level = 1.0;
    for (std::size_t k = 0; k <= horizon; ++k) {
      simple += atts[k];
      level *= 1.0 + atts[k] / 100.0;
    }
    double compounded = (level - 1.0) * 100.0;
    double var = 0.0;
    for (std::size_t j = 0; j <= horizon; ++j) {
      double partial = 1.0;
      for (std::size_t m = 0; m <= horizon; ++m)
        if (m != j) partial *= 1.0 + atts[m] / 100.0;
      var += partial * partial * ses[j] * ses[j];
    }
    const agg::CumulativePoint& pt = cum.by_horizon.at(static_cast<int>(horizon));
    CHECK(std::fabs(pt.simple_sum - simple) < 1e-12);
    CHECK(std::fabs(pt.compounded - compounded) < 1e-12);
    CHECK(std::fabs(pt.ci_low - (compounded - kZ * std::sqrt(var))) < 1e-12);
    CHECK(std::fabs(pt.ci_high - (compounded + kZ * std::sqrt(var))) < 1e-12);
  }
}

TEST_CASE("a persistent negative effect compounds to less than its sum") {
  std::vector<double> atts(21, -0.35);
  std::vector<double> ses(21, 0.0);
  agg::CumulativeEffects cum = agg::cumulative_effects(hand_curve(atts, ses));

  const agg::CumulativePoint& last = cum.by_horizon.at(20);
  CHECK(last.simple_sum == doctest::Approx(-7.35).epsilon(1e-12));
  CHECK(last.compounded > -7.11);
  CHECK(last.compounded < -7.09);
  for (const auto& [k, pt] : cum.by_horizon) {
    CHECK(std::fabs(pt.compounded) <= std::fabs(pt.simple_sum) + 1e-12);
    if (k >= 1) CHECK(std::fabs(pt.compounded) < std::fabs(pt.simple_sum));
    CHECK(pt.ci_low == pt.compounded);  // zero SEs collapse the band
    CHECK(pt.ci_high == pt.compounded);
  }
}

TEST_CASE("an all-zero curve accumulates to zero") {
  agg::CumulativeEffects cum =
      agg::cumulative_effects(hand_curve({0.0, 0.0, 0.0}, {0.0, 0.0, 0.0}));
  for (const auto& [k, pt] : cum.by_horizon) {
    CHECK(pt.simple_sum == 0.0);
    CHECK(pt.compounded == 0.0);
  }
}

TEST_CASE("gaps in post-treatment support are rejected") {
  AttCurve no_k0;
  no_k0.by_k[1] = {-0.3, 0.1, 4};
  CHECK_THROWS_AS(agg::cumulative_effects(no_k0), GapInSupport);

  AttCurve hole = hand_curve({-0.3, -0.3}, {0.0, 0.0});
  hole.by_k[3] = {-0.3, 0.0, 4};
  CHECK_THROWS_AS(agg::cumulative_effects(hole), GapInSupport);

  AttCurve pre_only;
  pre_only.by_k[-2] = {0.1, 0.1, 4};
  pre_only.by_k[-1] = {0.0, 0.1, 4};
  CHECK_THROWS_AS(agg::cumulative_effects(pre_only), GapInSupport);

  // pre-treatment entries are ignored, not compounded
  AttCurve mixed = hand_curve({-0.5, -0.5}, {0.0, 0.0});
  mixed.by_k[-2] = {9.9, 0.0, 4};
  agg::CumulativeEffects cum = agg::cumulative_effects(mixed);
  CHECK(cum.by_horizon.size() == 2);
  CHECK(cum.by_horizon.at(1).simple_sum == doctest::Approx(-1.0));
}

TEST_CASE("country trajectories are flat under a constant effect") {
  auto [data, truth] = dgp::generate_panel(constant_spec());
  ForestModel model = forest::fit_forest(data, small_config(), 2);

  auto trajectories = agg::country_trajectories(model, data);
  REQUIRE(trajectories.size() == 6);
  std::vector<std::string> treated = data.treated_countries();
  for (std::size_t i = 0; i < trajectories.size(); ++i) {
    const agg::CountryTrajectory& traj = trajectories[i];
    CHECK(traj.country == treated[i]);
    CHECK(traj.curve.label == traj.country);
    CHECK(traj.curve.by_k.size() == 16);  // adopts 2000, observed through 2015
    for (const auto& [k, pt] : traj.curve.by_k) {
      CHECK(std::fabs(pt.att + 0.35) < 1e-6);
      CHECK(pt.n == 1);
      CHECK(std::isfinite(pt.se));
      CHECK(pt.se >= 0.0);
    }
    CHECK(std::fabs(traj.post_average + 0.35) < 1e-6);
  }
}

TEST_CASE("trajectory support follows each country's observed years") {
  dgp::DgpSpec s;
  s.adoption_schedule = {{"A", 1995}, {"B", 2005}};
  s.n_control = 4;
  s.year_start = 1990;
  s.year_end = 2010;
  s.n_features = 2;
  s.sigma_eps = 0.2;
  s.seed = 23;
  auto [data, truth] = dgp::generate_panel(s);
  ForestModel model = forest::fit_forest(data, small_config(), 2);

  auto trajectories = agg::country_trajectories(model, data);
  REQUIRE(trajectories.size() == 2);
  CHECK(trajectories[0].country == "A");
  CHECK(trajectories[0].curve.by_k.size() == 16);  // k = 0..15
  CHECK(trajectories[1].country == "B");
  CHECK(trajectories[1].curve.by_k.size() == 6);  // k = 0..5
}

TEST_CASE("counterfactual at a training profile matches that trajectory") {
  auto [data, truth] = dgp::generate_panel(constant_spec());
  ForestModel model = forest::fit_forest(data, small_config(), 2);

  auto trajectories = agg::country_trajectories(model, data);
  const agg::CountryTrajectory& traj = trajectories.front();
  const std::vector<double>& x =
      data.observations[data.country_index.at(traj.country).front()].features;

  AttCurve cf = agg::counterfactual_predict(model, x, {0, 15});
  CHECK(cf.label == "counterfactual (extrapolative)");
  CHECK(cf.extrapolative_ks.empty());  // the training support is k = 0..15
  REQUIRE(cf.by_k.size() == traj.curve.by_k.size());
  for (const auto& [k, pt] : traj.curve.by_k) {
    CHECK(cf.by_k.at(k).att == pt.att);
    CHECK(cf.by_k.at(k).se == pt.se);
  }
}

TEST_CASE("out-of-support horizons are flagged, not refused") {
  auto [data, truth] = dgp::generate_panel(constant_spec());
  ForestModel model = forest::fit_forest(data, small_config(), 2);
  std::vector<double> x = data.observations.front().features;

  AttCurve cf = agg::counterfactual_predict(model, x, {-3, 20});
  CHECK(cf.by_k.size() == 24);
  std::set<int> expect = {-3, -2, -1, 16, 17, 18, 19, 20};
  CHECK(cf.extrapolative_ks == expect);
  for (const auto& [k, pt] : cf.by_k) CHECK(std::isfinite(pt.att));

  CHECK_THROWS_AS(agg::counterfactual_predict(model, x, {5, 4}), EmptyHorizon);
  std::vector<double> short_x = {0.0};
  CHECK_THROWS_AS(agg::counterfactual_predict(model, short_x, {0, 5}),
                  DimensionMismatch);
}

TEST_CASE("a median control profile predicts between the group levels") {
  auto [data, truth] = dgp::generate_panel(two_group_spec());
  ForestModel model = forest::fit_forest(data, small_config(), 2);

  auto features = country_features(data);
  std::vector<std::string> controls = data.never_treated_countries();
  std::vector<double> profile;
  for (std::size_t j = 0; j < data.feature_names.size(); ++j) {
    std::vector<double> vals;
    for (const std::string& c : controls) vals.push_back(features.at(c)[j]);
    std::sort(vals.begin(), vals.end());
    profile.push_back(vals[vals.size() / 2]);
  }

  auto labeler = [](std::span<const double> x) {
    return x[0] <= 0.0 ? std::string("low") : std::string("high");
  };
  auto groups = agg::group_att(model, data, labeler);
  double low = groups.at("low").by_k.at(5).att;
  double high = groups.at("high").by_k.at(5).att;
  double p = agg::counterfactual_predict(model, profile, {5, 5}).by_k.at(5).att;
  CHECK(p >= low - 0.05);
  CHECK(p <= high + 0.05);
}
