#include "cffe/inference.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <random>
#include <set>
#include <sstream>

#include <Eigen/Dense>
#include <boost/math/distributions/chi_squared.hpp>
#include <boost/math/distributions/fisher_f.hpp>
#include <boost/math/distributions/normal.hpp>
#include <boost/math/distributions/students_t.hpp>

#include "cffe/aggregate.hpp"
#include "cffe/errors.hpp"
#include "cffe/parallel.hpp"
#include "cffe/rng.hpp"

namespace cffe::infer {

namespace {

constexpr double kZ975 = 1.959963984540054;
constexpr double kNan = std::numeric_limits<double>::quiet_NaN();

double two_sided_t_p(double t, int df) {
  if (!std::isfinite(t)) return 0.0;
  boost::math::students_t dist(df);
  return 2.0 * boost::math::cdf(boost::math::complement(dist, std::fabs(t)));
}

double two_sided_normal_p(double z) {
  if (!std::isfinite(z)) return 0.0;
  boost::math::normal dist;
  return 2.0 * boost::math::cdf(boost::math::complement(dist, std::fabs(z)));
}

// mean and delta-method variance of the observation-weighted average of the
// post coefficients of an event study
std::pair<double, double> weighted_post_average(const EventStudyResult& res) {
  std::vector<int> post;
  double total = 0.0;
  for (const auto& [k, pt] : res.by_k) {
    if (k < 0) continue;
    post.push_back(k);
    total += pt.n_treated_obs;
  }
  if (post.empty() || total <= 0.0)
    throw InsufficientData("event study has no post-period coefficients");
  double mean = 0.0;
  for (int k : post) {
    const EventStudyPoint& pt = res.by_k.at(k);
    mean += pt.n_treated_obs / total * pt.estimate;
  }
  double var = 0.0;
  for (int j : post)
    for (int l : post)
      var += (res.by_k.at(j).n_treated_obs / total) *
             (res.by_k.at(l).n_treated_obs / total) * res.vcov_at(j, l);
  return {mean, var};
}

// pooled over every treated observation, for leave-one-out comparisons
std::pair<double, double> pooled_post_ate(CurveEstimator est,
                                          const PanelDataset& data,
                                          const EstimatorSettings& settings,
                                          unsigned forest_threads) {
  constexpr int kAllPost = 1 << 20;
  switch (est) {
    case CurveEstimator::kCffe: {
      forest::ForestModel model =
          forest::fit_forest(data, settings.forest, forest_threads);
      std::vector<double> effects;
      std::vector<std::string> countries;
      double fit_var = 0.0;
      for (const Observation& obs : data.observations) {
        if (!obs.treated || !obs.event_time.has_value()) continue;
        effects.push_back(
            forest::predict_cate(model, *obs.event_time, obs.features));
        fit_var += forest::forest_variance(model, *obs.event_time, obs.features);
        countries.push_back(obs.country);
      }
      if (effects.empty())
        throw InsufficientData("no treated observations to average over");
      double mean = 0.0;
      for (double e : effects) mean += e;
      mean /= static_cast<double>(effects.size());
      // Two variance sources: dispersion of predicted effects across
      // countries, plus the forest's own estimation variance. The latter is
      // averaged, not divided by N, because predictions share trees and are
      // strongly positively correlated across rows.
      fit_var /= static_cast<double>(effects.size());
      return {mean, cluster_robust_var(effects, countries) + fit_var};
    }
    case CurveEstimator::kTwfe:
      return weighted_post_average(twfe_event_study(data, {0, kAllPost}));
    case CurveEstimator::kSunAbraham:
      return weighted_post_average(sun_abraham(data, {0, kAllPost}));
    default:
      throw InvalidSpec(
          "pooled ATE needs analytic standard errors; use cffe, twfe, or sa");
  }
}

// type-7 quantile (linear interpolation) of an already-sorted sample
double quantile_sorted(const std::vector<double>& v, double p) {
  if (v.size() == 1) return v.front();
  double h = (static_cast<double>(v.size()) - 1.0) * p;
  std::size_t lo = static_cast<std::size_t>(h);
  if (lo + 1 >= v.size()) return v.back();
  double frac = h - static_cast<double>(lo);
  return v[lo] + frac * (v[lo + 1] - v[lo]);
}

int adoption_year_of(const PanelDataset& data, const std::string& country) {
  std::size_t row = data.country_index.at(country).front();
  return *data.observations[row].adoption_year;
}

}  // namespace

double cluster_robust_var(std::span<const double> effects,
                          std::span<const std::string> countries) {
  if (effects.size() != countries.size())
    throw DimensionMismatch("effects and country labels differ in length");
  std::map<std::string, double> dev_sum;
  double mean = 0.0;
  for (double e : effects) mean += e;
  const double n = static_cast<double>(effects.size());
  mean /= n;
  for (std::size_t i = 0; i < effects.size(); ++i)
    dev_sum[std::string(countries[i])] += effects[i] - mean;
  if (dev_sum.size() < 2)
    throw SingleCluster("clustered variance needs at least two countries");
  double acc = 0.0;
  for (const auto& [country, s] : dev_sum) acc += s * s;
  return acc / (n * n);
}

CurveEstimator parse_curve_estimator(const std::string& name) {
  if (name == "cffe") return CurveEstimator::kCffe;
  if (name == "twfe") return CurveEstimator::kTwfe;
  if (name == "sa") return CurveEstimator::kSunAbraham;
  if (name == "cs") return CurveEstimator::kCallawaySantanna;
  if (name == "ife") return CurveEstimator::kIfe;
  throw InvalidSpec("unknown estimator '" + name +
                    "' (expected cffe, twfe, sa, cs, or ife)");
}

std::string curve_estimator_name(CurveEstimator est) {
  switch (est) {
    case CurveEstimator::kCffe: return "cffe";
    case CurveEstimator::kTwfe: return "twfe";
    case CurveEstimator::kSunAbraham: return "sa";
    case CurveEstimator::kCallawaySantanna: return "cs";
    case CurveEstimator::kIfe: return "ife";
  }
  throw InvalidSpec("unknown estimator enum value");
}

std::map<int, double> estimate_curve(CurveEstimator est,
                                     const PanelDataset& data,
                                     const EstimatorSettings& settings) {
  if (data.treated_countries().empty())
    throw InsufficientData("panel has no treated countries");
  std::map<int, double> curve;
  switch (est) {
    case CurveEstimator::kCffe: {
      forest::ForestModel model =
          forest::fit_forest(data, settings.forest, settings.threads);
      for (const auto& [k, pt] : agg::dynamic_att(model, data).by_k)
        curve.emplace(k, pt.att);
      break;
    }
    case CurveEstimator::kTwfe:
      for (const auto& [k, pt] :
           twfe_event_study(data, settings.report_range).by_k)
        curve.emplace(k, pt.estimate);
      break;
    case CurveEstimator::kSunAbraham:
      for (const auto& [k, pt] : sun_abraham(data, settings.report_range).by_k)
        curve.emplace(k, pt.estimate);
      break;
    case CurveEstimator::kCallawaySantanna:
      for (const auto& [k, pt] : callaway_santanna(data).aggregated.by_k)
        curve.emplace(k, pt.estimate);
      break;
    case CurveEstimator::kIfe:
      curve.emplace(0, interactive_fe(data, settings.ife).tau_hat);
      break;
  }
  return curve;
}

BootstrapResult block_bootstrap(const PanelDataset& data, CurveEstimator est,
                                const BootstrapOptions& opts) {
  if (opts.n_replicates < 50)
    throw InvalidSpec("block bootstrap needs at least 50 replicates");
  std::vector<std::string> countries;
  countries.reserve(data.country_index.size());
  for (const auto& [name, idx] : data.country_index) countries.push_back(name);
  if (countries.size() < 2)
    throw TooFewClusters("block bootstrap needs at least two countries");

  BootstrapResult out;
  out.n_replicates = opts.n_replicates;
  out.seed = opts.seed;
  out.point = estimate_curve(est, data, opts.settings);

  const std::size_t n_reps = static_cast<std::size_t>(opts.n_replicates);
  std::vector<std::optional<std::map<int, double>>> reps(n_reps);
  parallel_for(n_reps, opts.threads, [&](std::size_t r) {
    std::mt19937_64 gen = rng::engine(opts.seed, "bootstrap", r);
    std::uniform_int_distribution<std::size_t> pick(0, countries.size() - 1);
    std::map<std::string, int> occurrences;
    std::vector<Observation> rows;
    for (std::size_t g = 0; g < countries.size(); ++g) {
      const std::string& name = countries[pick(gen)];
      int occ = ++occurrences[name];
      std::string label =
          occ == 1 ? name : name + "#" + std::to_string(occ);
      for (std::size_t i : data.country_index.at(name)) {
        Observation obs = data.observations[i];
        obs.country = label;
        rows.push_back(std::move(obs));
      }
    }
    try {
      PanelDataset resampled = build_dataset(
          std::move(rows), data.feature_names, data.extra_outcome_names);
      // draws with no treated or no control countries are discarded, not
      // retried, so the replicate stream stays deterministic
      if (resampled.treated_countries().empty() ||
          resampled.never_treated_countries().empty())
        return;
      EstimatorSettings settings = opts.settings;
      settings.threads = 1;  // replicates already run in parallel
      reps[r] = estimate_curve(est, resampled, settings);
    } catch (const Error&) {
      // estimator rejected the draw: excluded, counted below
    }
  });

  std::set<int> k_union;
  for (const auto& [k, v] : out.point) k_union.insert(k);
  for (std::size_t r = 0; r < n_reps; ++r) {
    if (!reps[r].has_value()) {
      out.failed_replicates.push_back(static_cast<int>(r));
      continue;
    }
    ++out.n_valid;
    for (const auto& [k, v] : *reps[r]) k_union.insert(k);
  }
  if (5 * out.n_valid < 4 * opts.n_replicates) {
    std::ostringstream msg;
    msg << "only " << out.n_valid << " of " << opts.n_replicates
        << " replicates succeeded";
    throw TooFewValidReplicates(msg.str());
  }

  out.ks.assign(k_union.begin(), k_union.end());
  out.estimates.assign(static_cast<std::size_t>(out.n_valid) * out.ks.size(),
                       kNan);
  std::size_t row = 0;
  for (std::size_t r = 0; r < n_reps; ++r) {
    if (!reps[r].has_value()) continue;
    for (std::size_t c = 0; c < out.ks.size(); ++c) {
      auto it = reps[r]->find(out.ks[c]);
      if (it != reps[r]->end()) out.estimates[row * out.ks.size() + c] = it->second;
    }
    ++row;
  }

  for (std::size_t c = 0; c < out.ks.size(); ++c) {
    std::vector<double> values;
    for (int v = 0; v < out.n_valid; ++v) {
      double x = out.estimates[static_cast<std::size_t>(v) * out.ks.size() + c];
      if (std::isfinite(x)) values.push_back(x);
    }
    if (values.size() < 2) continue;
    std::sort(values.begin(), values.end());
    out.ci_by_k.emplace(out.ks[c],
                        std::pair<double, double>{quantile_sorted(values, 0.025),
                                                  quantile_sorted(values, 0.975)});
  }
  return out;
}

FakeDatePlacebo placebo_fake_dates(const PanelDataset& data,
                                   int fake_adoption_year) {
  std::vector<std::string> treated = data.treated_countries();
  if (treated.empty())
    throw InsufficientData("panel has no treated countries to re-date");
  if (fake_adoption_year < data.year_range.first) {
    std::ostringstream msg;
    msg << "fake adoption year " << fake_adoption_year
        << " precedes the panel start " << data.year_range.first;
    throw YearOutOfRange(msg.str());
  }
  int max_actual = data.year_range.first;
  for (const std::string& c : treated) {
    int actual = adoption_year_of(data, c);
    if (fake_adoption_year >= actual) {
      std::ostringstream msg;
      msg << "fake adoption year " << fake_adoption_year << " is not before "
          << c << "'s actual adoption in " << actual;
      throw FakeDateTooLate(msg.str());
    }
    max_actual = std::max(max_actual, actual);
  }

  // Treated countries keep only their pre-adoption history; the fake "post"
  // window therefore ends where real treatment begins.
  std::vector<Observation> rows;
  rows.reserve(data.observations.size());
  for (const Observation& obs : data.observations) {
    if (!obs.adoption_year.has_value()) {
      rows.push_back(obs);
      continue;
    }
    if (obs.year >= *obs.adoption_year) continue;
    Observation fake = obs;
    fake.adoption_year = fake_adoption_year;
    rows.push_back(std::move(fake));
  }
  PanelDataset redated = build_dataset(std::move(rows), data.feature_names,
                                       data.extra_outcome_names);
  if (redated.treated_countries().empty())
    throw InsufficientData("no pre-adoption rows left after re-dating");

  FakeDatePlacebo out;
  out.fake_year = fake_adoption_year;
  out.event_study = twfe_event_study(
      redated, {data.year_range.first - fake_adoption_year,
                max_actual - 1 - fake_adoption_year});
  auto [att, var] = weighted_post_average(out.event_study);
  out.att = att;
  out.se = std::sqrt(std::max(0.0, var));
  if (out.se > 0.0) {
    out.t_stat = out.att / out.se;
    out.p_value = two_sided_t_p(out.t_stat, out.event_study.n_clusters - 1);
  } else {
    out.t_stat = out.att == 0.0
                     ? 0.0
                     : std::copysign(std::numeric_limits<double>::infinity(),
                                     out.att);
    out.p_value = out.att == 0.0 ? 1.0 : 0.0;
  }
  return out;
}

NontreatedPlacebo placebo_nontreated(const PanelDataset& data,
                                     const std::map<std::string, int>& assignment,
                                     const forest::ForestConfig& config,
                                     unsigned threads) {
  if (assignment.empty())
    throw InvalidSpec("placebo assignment is empty");
  const std::vector<std::string> never_list = data.never_treated_countries();
  const std::set<std::string> never(never_list.begin(), never_list.end());
  for (const auto& [country, year] : assignment) {
    if (!data.country_index.count(country))
      throw InvalidSpec("unknown country '" + country + "'");
    if (!never.count(country))
      throw AssignedCountryIsTreated(country + " already adopts in the data");
    if (year < data.year_range.first || year > data.year_range.second) {
      std::ostringstream msg;
      msg << "pseudo adoption year " << year << " for " << country
          << " is outside the panel years " << data.year_range.first << ".."
          << data.year_range.second;
      throw YearOutOfRange(msg.str());
    }
  }
  if (assignment.size() >= never.size())
    throw InsufficientData("placebo assignment leaves no control pool");

  // Truly treated countries are removed so their real effects cannot leak
  // into the pseudo-treatment fit.
  std::vector<Observation> rows;
  for (const Observation& obs : data.observations) {
    if (obs.adoption_year.has_value()) continue;
    Observation copy = obs;
    auto it = assignment.find(obs.country);
    if (it != assignment.end()) copy.adoption_year = it->second;
    rows.push_back(std::move(copy));
  }
  PanelDataset pseudo = build_dataset(std::move(rows), data.feature_names,
                                      data.extra_outcome_names);
  forest::ForestModel model = forest::fit_forest(pseudo, config, threads);

  NontreatedPlacebo out;
  out.note =
      "joint test treats country placebo effects as independent "
      "(diagonal covariance)";
  double stat = 0.0;
  for (const auto& [country, year] : assignment) {
    PlaceboCountryEffect row;
    row.country = country;
    row.pseudo_adoption = year;
    double sum = 0.0;
    double var = 0.0;
    for (std::size_t i : pseudo.country_index.at(country)) {
      const Observation& obs = pseudo.observations[i];
      if (!obs.treated || !obs.event_time.has_value()) continue;
      sum += forest::predict_cate(model, *obs.event_time, obs.features);
      var += forest::forest_variance(model, *obs.event_time, obs.features);
      ++row.n_post;
    }
    if (row.n_post == 0) {
      std::ostringstream msg;
      msg << country << " has no observations at or after its pseudo adoption "
          << year;
      throw YearOutOfRange(msg.str());
    }
    row.effect = sum / row.n_post;
    row.se = std::sqrt(var) / row.n_post;
    double z = row.se > 0.0 ? row.effect / row.se
               : row.effect == 0.0
                   ? 0.0
                   : std::numeric_limits<double>::infinity();
    row.p_value = two_sided_normal_p(z);
    stat += z * z;
    out.by_country.push_back(std::move(row));
  }
  out.joint_stat = stat;
  out.joint_df = static_cast<int>(out.by_country.size());
  if (std::isfinite(stat)) {
    boost::math::chi_squared dist(out.joint_df);
    out.joint_p = boost::math::cdf(boost::math::complement(dist, stat));
  } else {
    out.joint_p = 0.0;
  }
  return out;
}

LooResult leave_one_out(const PanelDataset& data, CurveEstimator est,
                        const EstimatorSettings& settings, unsigned threads) {
  if (est == CurveEstimator::kCallawaySantanna ||
      est == CurveEstimator::kIfe)
    throw InvalidSpec(
        "leave-one-out needs analytic standard errors; use cffe, twfe, or sa");
  std::vector<std::string> treated = data.treated_countries();
  if (treated.size() < 3) {
    std::ostringstream msg;
    msg << "leave-one-out needs at least 3 treated countries, have "
        << treated.size();
    throw TooFewTreated(msg.str());
  }

  LooResult out;
  auto [full_ate, full_var] =
      pooled_post_ate(est, data, settings, settings.threads);
  out.full_ate = full_ate;
  out.full_se = std::sqrt(std::max(0.0, full_var));
  out.full_ci_low = out.full_ate - kZ975 * out.full_se;
  out.full_ci_high = out.full_ate + kZ975 * out.full_se;

  out.rows.resize(treated.size());
  parallel_for(treated.size(), threads, [&](std::size_t i) {
    PanelDataset sub = drop_country(data, treated[i]);
    auto [ate, var] = pooled_post_ate(est, sub, settings, 1);
    LooRow& row = out.rows[i];
    row.dropped = treated[i];
    row.ate = ate;
    row.se = std::sqrt(std::max(0.0, var));
    row.ci_low = row.ate - kZ975 * row.se;
    row.ci_high = row.ate + kZ975 * row.se;
    row.within_full_ci =
        row.ate >= out.full_ci_low && row.ate <= out.full_ci_high;
  });
  return out;
}

PretrendsTest pretrends_test(const EventStudyResult& result) {
  if (!result.has_vcov())
    throw InvalidSpec("event study carries no covariance matrix");
  std::vector<int> pre;
  for (int k : result.coef_ks)
    if (k < 0 && k != result.reference_k) pre.push_back(k);
  if (pre.empty())
    throw NoPrePeriods("event study has no pre-treatment coefficients");
  if (result.n_clusters < 2)
    throw TooFewClusters("pre-trends test needs at least two countries");

  const int q = static_cast<int>(pre.size());
  Eigen::VectorXd beta(q);
  Eigen::MatrixXd vcov(q, q);
  for (int i = 0; i < q; ++i) {
    beta(i) = result.by_k.at(pre[i]).estimate;
    for (int j = 0; j < q; ++j) vcov(i, j) = result.vcov_at(pre[i], pre[j]);
  }

  PretrendsTest out;
  out.df_num = q;
  out.df_den = result.n_clusters - 1;
  out.avg_pre_effect = beta.mean();
  out.avg_pre_se =
      std::sqrt(std::max(0.0, vcov.sum() / (static_cast<double>(q) * q)));

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(vcov);
  const Eigen::VectorXd& lambda = eig.eigenvalues();
  double lambda_max = lambda.cwiseAbs().maxCoeff();
  if (lambda_max <= 0.0) {
    if (beta.norm() > 0.0)
      throw SingularVcov("pre-period covariance is zero but coefficients are not");
    out.used_pseudo_inverse = true;
    out.wald_stat = 0.0;
    out.f_stat = 0.0;
    out.p_value = 1.0;
    return out;
  }
  double tol = lambda_max * q * std::numeric_limits<double>::epsilon() * 64;
  int rank = 0;
  Eigen::VectorXd inv = Eigen::VectorXd::Zero(q);
  for (int i = 0; i < q; ++i) {
    if (lambda(i) > tol) {
      inv(i) = 1.0 / lambda(i);
      ++rank;
    }
  }
  out.used_pseudo_inverse = rank < q;
  Eigen::VectorXd rotated = eig.eigenvectors().transpose() * beta;
  out.wald_stat = std::max(0.0, (rotated.array().square() * inv.array()).sum());
  out.f_stat = out.wald_stat / q;
  boost::math::fisher_f dist(q, out.df_den);
  out.p_value = std::isfinite(out.f_stat)
                    ? boost::math::cdf(boost::math::complement(dist, out.f_stat))
                    : 0.0;
  return out;
}

}  // namespace cffe::infer
