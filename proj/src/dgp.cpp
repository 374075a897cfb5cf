#include "cffe/dgp.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <ostream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "cffe/errors.hpp"
#include "cffe/rng.hpp"

namespace cffe::dgp {

double CateSpec::operator()(int k, const std::vector<double>& x) const {
  switch (kind) {
    case CateKind::kConstant:
      return tau0;
    case CateKind::kTwoGroup:
      if (x.empty()) throw DimensionMismatch("two_group cate needs at least one feature");
      return x[0] <= threshold ? tau_low : tau_high;
    case CateKind::kRamp: {
      int phase = std::min(k + 1, ramp_years + 1);
      return level * static_cast<double>(phase) / (ramp_years + 1);
    }
    case CateKind::kLinearInX: {
      if (coef.size() != x.size() + 1) {
        throw DimensionMismatch("linear_in_x expects " + std::to_string(x.size() + 1) +
                                " coefficients (intercept first), got " +
                                std::to_string(coef.size()));
      }
      double v = coef[0];
      for (std::size_t j = 0; j < x.size(); ++j) v += coef[j + 1] * x[j];
      return v;
    }
  }
  throw InvalidSpec("unknown cate kind");
}

std::string CateSpec::describe() const {
  std::ostringstream os;
  switch (kind) {
    case CateKind::kConstant:
      os << "constant(" << tau0 << ")";
      break;
    case CateKind::kTwoGroup:
      os << "two_group(low=" << tau_low << ", high=" << tau_high
         << ", threshold=" << threshold << " on feature 1)";
      break;
    case CateKind::kRamp:
      os << "ramp(level=" << level << ", ramp_years=" << ramp_years << ")";
      break;
    case CateKind::kLinearInX: {
      os << "linear_in_x(";
      for (std::size_t i = 0; i < coef.size(); ++i) os << (i ? "," : "") << coef[i];
      os << ")";
      break;
    }
  }
  return os.str();
}

std::map<std::string, int> staggered_adoption_schedule() {
  std::map<std::string, int> schedule;
  for (int i = 1; i <= 11; ++i) {
    char id[16];
    std::snprintf(id, sizeof(id), "T%02d", i);
    schedule[id] = 1999;
  }
  const int late_years[] = {2001, 2007, 2008, 2008, 2009, 2011, 2014, 2015, 2023};
  for (int i = 0; i < 9; ++i) {
    char id[16];
    std::snprintf(id, sizeof(id), "L%02d", i + 1);
    schedule[id] = late_years[i];
  }
  return schedule;
}

namespace {

void validate(const DgpSpec& spec) {
  if (spec.year_end <= spec.year_start)
    throw InvalidSpec("year_end must be after year_start");
  if (spec.n_control < 1) throw InvalidSpec("need at least one control country");
  if (spec.adoption_schedule.empty() && spec.n_treated < 1)
    throw InvalidSpec("need at least one treated country");
  if (spec.n_features < 1) throw InvalidSpec("need at least one feature");
  if (spec.sigma_alpha < 0 || spec.sigma_gamma < 0 || spec.sigma_eps < 0)
    throw InvalidSpec("noise scales must be non-negative");
  if (spec.cate.kind == CateKind::kRamp && spec.cate.ramp_years < 0)
    throw InvalidSpec("ramp_years must be non-negative");
  if (spec.cate.kind == CateKind::kLinearInX &&
      spec.cate.coef.size() != static_cast<std::size_t>(spec.n_features) + 1) {
    throw InvalidSpec("linear_in_x needs n_features + 1 coefficients (intercept first)");
  }
  if (spec.factor_confounding) {
    const auto& fc = *spec.factor_confounding;
    if (fc.n_factors < 1) throw InvalidSpec("factor confounding needs n_factors >= 1");
    if (fc.loading_corr < -1.0 || fc.loading_corr > 1.0)
      throw InvalidSpec("loading correlation must lie in [-1, 1]");
  }
}

}  // namespace

std::pair<PanelDataset, DgpGroundTruth> generate_panel(const DgpSpec& spec) {
  validate(spec);

  // country list: adopters first (schedule order), then controls
  std::map<std::string, int> schedule = spec.adoption_schedule;
  if (schedule.empty()) {
    for (int i = 1; i <= spec.n_treated; ++i) {
      char id[16];
      std::snprintf(id, sizeof(id), "T%02d", i);
      schedule[id] = spec.adoption_year;
    }
  }
  for (const auto& [country, year] : schedule) {
    if (year < spec.year_start || year > spec.year_end) {
      throw InvalidSpec("adoption year " + std::to_string(year) + " for " +
                        country + " outside the calendar");
    }
  }
  std::vector<std::string> countries;
  for (const auto& [country, year] : schedule) countries.push_back(country);
  for (int i = 1; i <= spec.n_control; ++i) {
    char id[16];
    std::snprintf(id, sizeof(id), "C%02d", i);
    countries.push_back(id);
  }
  const int n_countries = static_cast<int>(countries.size());
  if (n_countries < 2) throw InvalidSpec("need at least two countries");
  const int n_years = spec.year_end - spec.year_start + 1;
  const int p = spec.n_features;

  // features: one vector per country, standardized in-sample per column
  auto feat_rng = rng::engine(spec.seed, "features");
  std::normal_distribution<double> stdnorm(0.0, 1.0);
  std::vector<std::vector<double>> X(n_countries, std::vector<double>(p));
  for (int i = 0; i < n_countries; ++i)
    for (int j = 0; j < p; ++j) X[i][j] = stdnorm(feat_rng);
  for (int j = 0; j < p; ++j) {
    double mean = 0.0;
    for (int i = 0; i < n_countries; ++i) mean += X[i][j];
    mean /= n_countries;
    double ss = 0.0;
    for (int i = 0; i < n_countries; ++i) ss += (X[i][j] - mean) * (X[i][j] - mean);
    double sd = std::sqrt(ss / (n_countries - 1));
    if (sd <= 0.0) throw InvalidSpec("degenerate feature draw (zero variance)");
    for (int i = 0; i < n_countries; ++i) X[i][j] = (X[i][j] - mean) / sd;
  }

  DgpGroundTruth truth;
  truth.cate_description = spec.cate.describe();
  truth.cate = [cate = spec.cate](int k, const std::vector<double>& x) {
    return cate(k, x);
  };

  auto alpha_rng = rng::engine(spec.seed, "alpha");
  for (int i = 0; i < n_countries; ++i)
    truth.alpha[countries[i]] = spec.sigma_alpha * stdnorm(alpha_rng);
  auto gamma_rng = rng::engine(spec.seed, "gamma");
  for (int t = 0; t < n_years; ++t)
    truth.gamma[spec.year_start + t] = spec.sigma_gamma * stdnorm(gamma_rng);

  // common factors and loadings, only under confounding
  std::vector<std::vector<double>> factors;  // [t][m]
  std::vector<std::vector<double>> loadings; // [i][m]
  if (spec.factor_confounding) {
    const auto& fc = *spec.factor_confounding;
    auto f_rng = rng::engine(spec.seed, "factors");
    constexpr double rho_f = 0.9;
    factors.assign(n_years, std::vector<double>(fc.n_factors, 0.0));
    for (int m = 0; m < fc.n_factors; ++m) {
      double f = stdnorm(f_rng);
      factors[0][m] = f;
      for (int t = 1; t < n_years; ++t) {
        f = rho_f * f + std::sqrt(1.0 - rho_f * rho_f) * stdnorm(f_rng);
        factors[t][m] = f;
      }
    }
    loadings.assign(n_countries, std::vector<double>(fc.n_factors, 0.0));
    const double c = fc.loading_corr;
    const double mix = std::sqrt(1.0 - c * c);
    for (int i = 0; i < n_countries; ++i) {
      const double sign = schedule.count(countries[i]) ? 1.0 : -1.0;
      for (int m = 0; m < fc.n_factors; ++m)
        loadings[i][m] = c * sign + mix * stdnorm(f_rng);
    }
  }

  auto eps_rng = rng::engine(spec.seed, "eps");
  std::vector<Observation> rows;
  rows.reserve(static_cast<std::size_t>(n_countries) * n_years);
  for (int i = 0; i < n_countries; ++i) {
    const std::string& country = countries[i];
    auto adopted = schedule.find(country);
    for (int t = 0; t < n_years; ++t) {
      const int year = spec.year_start + t;
      Observation obs;
      obs.country = country;
      obs.year = year;
      obs.features = X[i];
      double y = truth.alpha[country] + truth.gamma[year];
      if (adopted != schedule.end()) {
        obs.adoption_year = adopted->second;
        const int k = year - adopted->second;
        y += spec.pretrend_slope * k;
        if (k >= 0) y += truth.cate(k, obs.features);
      }
      if (!factors.empty()) {
        for (std::size_t m = 0; m < factors[t].size(); ++m)
          y += loadings[i][m] * factors[t][m];
      }
      y += spec.sigma_eps * stdnorm(eps_rng);
      obs.outcome = y;
      rows.push_back(std::move(obs));
    }
  }

  std::vector<std::string> feature_names;
  for (int j = 1; j <= p; ++j) feature_names.push_back("x" + std::to_string(j));
  PanelDataset data = build_dataset(std::move(rows), std::move(feature_names));

  // exact ATT(k): average cate over treated rows at each horizon
  std::map<int, std::pair<double, int>> acc;
  for (const auto& obs : data.observations) {
    if (!obs.treated || !obs.event_time) continue;
    auto& [s, n] = acc[*obs.event_time];
    s += truth.cate(*obs.event_time, obs.features);
    n += 1;
  }
  for (const auto& [k, sn] : acc) truth.true_att_by_k[k] = sn.first / sn.second;

  return {std::move(data), std::move(truth)};
}

double true_att(const DgpGroundTruth& truth, int k) {
  auto it = truth.true_att_by_k.find(k);
  if (it == truth.true_att_by_k.end()) {
    throw NoObservationsAtK("no treated observations at event time " +
                            std::to_string(k));
  }
  return it->second;
}

DgpSpec parse_dgp_config(std::istream& in) {
  DgpSpec spec;
  std::string line;
  std::size_t lineno = 0;
  auto fail = [&](const std::string& why) {
    throw InvalidSpec("dgp config line " + std::to_string(lineno) + ": " + why);
  };
  while (std::getline(in, line)) {
    ++lineno;
    std::string t = line;
    if (auto pos = t.find('#'); pos != std::string::npos) t = t.substr(0, pos);
    auto notspace = t.find_first_not_of(" \t\r\n");
    if (notspace == std::string::npos) continue;
    auto eq = t.find('=');
    if (eq == std::string::npos) fail("expected key=value");
    auto strip = [](std::string s) {
      auto b = s.find_first_not_of(" \t\r\n");
      auto e = s.find_last_not_of(" \t\r\n");
      return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
    };
    std::string key = strip(t.substr(0, eq));
    std::string value = strip(t.substr(eq + 1));
    try {
      if (key == "n_treated") spec.n_treated = std::stoi(value);
      else if (key == "n_control") spec.n_control = std::stoi(value);
      else if (key == "year_start") spec.year_start = std::stoi(value);
      else if (key == "year_end") spec.year_end = std::stoi(value);
      else if (key == "adoption_year") spec.adoption_year = std::stoi(value);
      else if (key == "n_features") spec.n_features = std::stoi(value);
      else if (key == "sigma_alpha") spec.sigma_alpha = std::stod(value);
      else if (key == "sigma_gamma") spec.sigma_gamma = std::stod(value);
      else if (key == "sigma_eps") spec.sigma_eps = std::stod(value);
      else if (key == "pretrend_slope") spec.pretrend_slope = std::stod(value);
      else if (key == "seed") spec.seed = std::stoull(value);
      else if (key == "cate") {
        if (value == "constant") spec.cate.kind = CateKind::kConstant;
        else if (value == "two_group") spec.cate.kind = CateKind::kTwoGroup;
        else if (value == "ramp") spec.cate.kind = CateKind::kRamp;
        else if (value == "linear_in_x") spec.cate.kind = CateKind::kLinearInX;
        else fail("unknown cate kind '" + value + "'");
      } else if (key == "tau0") spec.cate.tau0 = std::stod(value);
      else if (key == "tau_low") spec.cate.tau_low = std::stod(value);
      else if (key == "tau_high") spec.cate.tau_high = std::stod(value);
      else if (key == "threshold") spec.cate.threshold = std::stod(value);
      else if (key == "ramp_level") spec.cate.level = std::stod(value);
      else if (key == "ramp_years") spec.cate.ramp_years = std::stoi(value);
      else if (key == "cate_coef") {
        spec.cate.coef.clear();
        std::stringstream ss(value);
        std::string item;
        while (std::getline(ss, item, ',')) spec.cate.coef.push_back(std::stod(item));
      } else if (key == "staggered") {
        if (value == "true" || value == "1") spec.adoption_schedule = staggered_adoption_schedule();
      } else if (key == "factor_confounding") {
        // "n_factors,corr"
        std::stringstream ss(value);
        std::string a, b;
        if (!std::getline(ss, a, ',') || !std::getline(ss, b, ','))
          fail("factor_confounding wants 'n_factors,corr'");
        spec.factor_confounding = FactorConfounding{std::stoi(a), std::stod(b)};
      } else if (key == "adoption") {
        // "COUNTRY:YEAR" entries separated by commas
        std::stringstream ss(value);
        std::string item;
        while (std::getline(ss, item, ',')) {
          auto colon = item.find(':');
          if (colon == std::string::npos) fail("adoption wants COUNTRY:YEAR entries");
          spec.adoption_schedule[strip(item.substr(0, colon))] =
              std::stoi(item.substr(colon + 1));
        }
      } else {
        fail("unknown key '" + key + "'");
      }
    } catch (const std::invalid_argument&) {
      fail("cannot parse value '" + value + "' for key '" + key + "'");
    } catch (const std::out_of_range&) {
      fail("value '" + value + "' out of range for key '" + key + "'");
    }
  }
  return spec;
}

void write_ground_truth_json(const DgpGroundTruth& truth, std::ostream& out) {
  nlohmann::json j;
  j["cate"] = truth.cate_description;
  j["alpha"] = truth.alpha;
  nlohmann::json gamma = nlohmann::json::object();
  for (const auto& [year, g] : truth.gamma) gamma[std::to_string(year)] = g;
  j["gamma"] = gamma;
  nlohmann::json att = nlohmann::json::object();
  for (const auto& [k, v] : truth.true_att_by_k) att[std::to_string(k)] = v;
  j["true_att_by_k"] = att;
  out << j.dump(2) << '\n';
}

}  // namespace cffe::dgp
