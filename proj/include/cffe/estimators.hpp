#pragma once

#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "cffe/panel.hpp"

namespace cffe {

struct EventStudyPoint {
  double estimate = 0.0;
  double std_error = 0.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
  int n_treated_obs = 0;
};

// Dynamic treatment-effect estimates relative to the omitted event time.
// `coef_ks` gives the row/column order of `vcov` (row-major), which covers
// exactly the reported coefficients; empty when the estimator does not
// produce an analytic covariance.
struct EventStudyResult {
  std::string estimator;
  int reference_k = -1;
  std::map<int, EventStudyPoint> by_k;
  std::vector<int> coef_ks;
  std::vector<double> vcov;
  int n_clusters = 0;

  bool has_vcov() const { return !vcov.empty(); }
  double vcov_at(int k_row, int k_col) const;
};

// Two-way fixed effects event study. Event-time indicators saturate every
// observed event time except the reference k = -1 (so no treated row is left
// uncontrolled), while `report_range` only restricts which coefficients are
// returned. Standard errors are cluster-robust by country with the
// G/(G-1) * (n-1)/(n-K) small-sample factor.
EventStudyResult twfe_event_study(const PanelDataset& data,
                                  std::pair<int, int> report_range = {-10, 20});

// Interaction-weighted event study: cohort x event-time saturation, then
// per-k aggregation weighted by each cohort's share of observations at k,
// with delta-method standard errors.
EventStudyResult sun_abraham(const PanelDataset& data,
                             std::pair<int, int> report_range = {-10, 20});

struct GroupTimeAtt {
  int cohort = 0;  // adoption year
  int year = 0;
  int event_time = 0;
  double att = 0.0;
  int n_treated = 0;  // cohort rows at `year`
};

// Group-time average treatment effects from 2x2 mean differences against the
// never-treated pool, plus a cohort-size-weighted dynamic aggregation.
// Standard errors are left to the block bootstrap (`with_bootstrap_se`).
struct CsResult {
  std::vector<GroupTimeAtt> group_time;
  EventStudyResult aggregated;  // vcov empty, std_error = NaN until bootstrapped
};
CsResult callaway_santanna(const PanelDataset& data);

struct IfeOptions {
  int n_factors = 2;
  int max_iter = 1000;
  double tol = 1e-8;
  // inclusive year window to rectangularize over; defaults to the full range
  std::optional<std::pair<int, int>> window;
};

struct IfeResult {
  double tau_hat = 0.0;
  int n_factors = 0;
  int iterations = 0;
  bool converged = false;
  std::vector<std::string> countries;  // kept after balancing
  std::vector<int> years;
  std::vector<double> factors;   // row-major years.size() x n_factors, orthonormal columns
  std::vector<double> loadings;  // row-major countries.size() x n_factors
  std::vector<std::string> warnings;
};

// Interactive fixed effects: Y_it = alpha_i + lambda_i'f_t + tau * D_it,
// estimated by alternating least squares and principal components on the
// balanced window. Never throws on non-convergence; `converged` says so.
IfeResult interactive_fe(const PanelDataset& data, const IfeOptions& opts = {});

// Single-coefficient two-way FE regression of the outcome on the treatment
// dummy; returns (tau_hat, cluster-robust se).
std::pair<double, double> static_twfe(const PanelDataset& data);

}  // namespace cffe
