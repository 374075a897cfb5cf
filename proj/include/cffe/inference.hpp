#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "cffe/estimators.hpp"
#include "cffe/forest.hpp"
#include "cffe/panel.hpp"

namespace cffe::infer {

// Country-clustered variance of a mean effect:
//   Var = (1/N^2) * sum_c ( sum over c's rows of (effect_i - mean) )^2
// with N the total number of rows passed in. Robust to arbitrary
// within-country correlation; invariant to duplicating rows within a country.
double cluster_robust_var(std::span<const double> effects,
                          std::span<const std::string> countries);

// Estimators the resampling machinery can re-run. Each produces an event-time
// curve; the interactive-FE "curve" is its single pooled coefficient at k = 0.
enum class CurveEstimator { kCffe, kTwfe, kSunAbraham, kCallawaySantanna, kIfe };

// accepts cffe, twfe, sa, cs, ife
CurveEstimator parse_curve_estimator(const std::string& name);
std::string curve_estimator_name(CurveEstimator est);

struct EstimatorSettings {
  forest::ForestConfig forest;                // kCffe
  IfeOptions ife;                             // kIfe
  std::pair<int, int> report_range{-10, 20};  // kTwfe / kSunAbraham
  unsigned threads = 1;                       // forest fitting only
};

std::map<int, double> estimate_curve(CurveEstimator est,
                                     const PanelDataset& data,
                                     const EstimatorSettings& settings = {});

struct BootstrapOptions {
  int n_replicates = 200;
  std::uint64_t seed = 42;
  unsigned threads = 1;  // across replicates; per-replicate fits are serial
  EstimatorSettings settings;
};

struct BootstrapResult {
  std::vector<int> ks;  // column order of `estimates`
  // row-major n_valid x ks.size(); NaN where a replicate's curve lacks k
  std::vector<double> estimates;
  std::map<int, double> point;  // full-sample curve
  // percentile 2.5% / 97.5% over the replicates that produced k
  std::map<int, std::pair<double, double>> ci_by_k;
  int n_replicates = 0;  // requested
  int n_valid = 0;
  std::vector<int> failed_replicates;  // replicate indices whose estimator errored
  std::uint64_t seed = 0;

  int n_failed() const { return static_cast<int>(failed_replicates.size()); }
};

// Resamples whole countries with replacement (time series stay intact),
// relabeling duplicates so fixed-effects designs keep full rank, and re-runs
// the estimator once per replicate. Replicates where the estimator throws are
// excluded and recorded. Deterministic in (seed, replicate index) regardless
// of thread count.
BootstrapResult block_bootstrap(const PanelDataset& data, CurveEstimator est,
                                const BootstrapOptions& opts = {});

struct FakeDatePlacebo {
  // event study on the re-dated panel, where treated countries keep only
  // their rows before the true adoption
  EventStudyResult event_study;
  int fake_year = 0;
  double att = 0.0;  // observation-weighted mean of the fake post coefficients
  double se = 0.0;
  double t_stat = 0.0;
  double p_value = 0.0;  // two-sided, t distribution with G-1 df
};

// Re-dates every treated country's adoption to `fake_adoption_year` and drops
// their rows from the true adoption onward, so any "effect" found in the
// fake post window is spurious by construction.
FakeDatePlacebo placebo_fake_dates(const PanelDataset& data,
                                   int fake_adoption_year);

struct PlaceboCountryEffect {
  std::string country;
  int pseudo_adoption = 0;
  double effect = 0.0;  // mean predicted effect over the pseudo-post rows
  double se = 0.0;
  double p_value = 0.0;  // two-sided normal
  int n_post = 0;
};

struct NontreatedPlacebo {
  std::vector<PlaceboCountryEffect> by_country;
  double joint_stat = 0.0;  // sum of squared z scores
  int joint_df = 0;
  double joint_p = 0.0;  // chi-square upper tail
  std::string note;      // records the independence assumption of the joint test
};

// Drops the truly treated countries, pretends the assigned controls adopted
// at the given years, and re-fits the forest. Effects near zero are the
// desired outcome.
NontreatedPlacebo placebo_nontreated(
    const PanelDataset& data, const std::map<std::string, int>& assignment,
    const forest::ForestConfig& config = {}, unsigned threads = 1);

struct LooRow {
  std::string dropped;
  double ate = 0.0;
  double se = 0.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
  bool within_full_ci = false;
};

struct LooResult {
  double full_ate = 0.0;
  double full_se = 0.0;
  double full_ci_low = 0.0;
  double full_ci_high = 0.0;
  std::vector<LooRow> rows;  // one per dropped treated country, name order
};

// Re-estimates the pooled post-treatment ATE with each treated country
// removed in turn. Supports estimators with analytic standard errors
// (cffe, twfe, sa); cs and ife are rejected.
LooResult leave_one_out(const PanelDataset& data, CurveEstimator est,
                        const EstimatorSettings& settings = {},
                        unsigned threads = 1);

struct PretrendsTest {
  double wald_stat = 0.0;
  double f_stat = 0.0;
  double p_value = 1.0;
  int df_num = 0;
  int df_den = 0;
  double avg_pre_effect = 0.0;
  double avg_pre_se = 0.0;
  // vcov of the pre block was rank deficient; Wald used its pseudo-inverse
  bool used_pseudo_inverse = false;
};

// Joint Wald/F test that every pre-treatment coefficient is zero, using the
// event study's cluster-robust covariance; F = Wald/q against F(q, G-1).
PretrendsTest pretrends_test(const EventStudyResult& result);

}  // namespace cffe::infer
