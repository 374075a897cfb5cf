#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "cffe/panel.hpp"

namespace cffe::dgp {

enum class CateKind { kConstant, kTwoGroup, kRamp, kLinearInX };

// Treatment-effect surface tau(k, x) in outcome percentage points.
// two_group thresholds on the first feature (standardized scale); ramp phases
// the constant `level` in linearly over event times 0..ramp_years;
// linear_in_x is coef[0] + sum_j coef[1+j] * x[j].
struct CateSpec {
  CateKind kind = CateKind::kConstant;
  double tau0 = -0.35;
  double tau_low = -0.53;
  double tau_high = -0.31;
  double threshold = 0.0;
  double level = -0.40;
  int ramp_years = 4;
  std::vector<double> coef;

  double operator()(int k, const std::vector<double>& x) const;
  std::string describe() const;
};

struct FactorConfounding {
  int n_factors = 1;
  double loading_corr = 0.8;  // in [-1, 1]; correlation of loadings with treatment
};

// Everything that defines the synthetic panel. Identical specs (same seed
// included) generate bit-identical datasets. Noise streams are separated, so
// changing sigma_eps never changes features, fixed effects, or the CATE.
struct DgpSpec {
  int n_treated = 11;
  int n_control = 24;
  int year_start = 1970;
  int year_end = 2023;
  int adoption_year = 1999;  // used when adoption_schedule is empty
  // optional explicit country -> adoption year map (overrides n_treated)
  std::map<std::string, int> adoption_schedule;
  int n_features = 4;
  CateSpec cate;
  double sigma_alpha = 1.0;
  double sigma_gamma = 1.0;
  double sigma_eps = 2.0;
  double pretrend_slope = 0.0;
  std::optional<FactorConfounding> factor_confounding;
  std::uint64_t seed = 42;
};

struct DgpGroundTruth {
  std::string cate_description;
  std::function<double(int, const std::vector<double>&)> cate;
  std::map<std::string, double> alpha;
  std::map<int, double> gamma;
  // exact mean of cate over treated (post) rows at each supported k >= 0
  std::map<int, double> true_att_by_k;
};

std::pair<PanelDataset, DgpGroundTruth> generate_panel(const DgpSpec& spec);

// Looks up true ATT at k; rejects horizons with no treated observations.
double true_att(const DgpGroundTruth& truth, int k);

// The staggered adoption calendar used throughout: 11 founders at 1999 plus
// nine late cohorts (2001, 2007, 2008 x2, 2009, 2011, 2014, 2015, 2023).
std::map<std::string, int> staggered_adoption_schedule();

// Flat key=value form of DgpSpec (same keys as the CLI flags).
DgpSpec parse_dgp_config(std::istream& in);
void write_ground_truth_json(const DgpGroundTruth& truth, std::ostream& out);

}  // namespace cffe::dgp
