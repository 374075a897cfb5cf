#include "cffe/estimators.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <set>
#include <sstream>

#include <Eigen/Dense>

#include "cffe/errors.hpp"
#include "demean.hpp"

namespace cffe {

namespace {

constexpr double kZ975 = 1.959963984540054;

struct CodedPanel {
  std::vector<double> y;
  std::vector<int> country;  // dense codes
  std::vector<int> year;
  std::vector<int> event_time;  // INT_MIN when absent
  std::vector<char> treated;
  std::vector<std::string> country_names;
  std::vector<int> year_values;
  int n_countries = 0;
  int n_years = 0;
};

constexpr int kNoEvent = std::numeric_limits<int>::min();

CodedPanel code_panel(const PanelDataset& data) {
  CodedPanel cp;
  std::map<std::string, int> cmap;
  std::map<int, int> ymap;
  for (const auto& [c, rows] : data.country_index) {
    cmap[c] = static_cast<int>(cp.country_names.size());
    cp.country_names.push_back(c);
  }
  std::set<int> years;
  for (const auto& obs : data.observations) years.insert(obs.year);
  for (int y : years) {
    ymap[y] = static_cast<int>(cp.year_values.size());
    cp.year_values.push_back(y);
  }
  cp.n_countries = static_cast<int>(cp.country_names.size());
  cp.n_years = static_cast<int>(cp.year_values.size());
  const std::size_t n = data.n_rows();
  cp.y.reserve(n);
  cp.country.reserve(n);
  cp.year.reserve(n);
  cp.event_time.reserve(n);
  cp.treated.reserve(n);
  for (const auto& obs : data.observations) {
    cp.y.push_back(obs.outcome);
    cp.country.push_back(cmap[obs.country]);
    cp.year.push_back(ymap[obs.year]);
    cp.event_time.push_back(obs.event_time ? *obs.event_time : kNoEvent);
    cp.treated.push_back(obs.treated ? 1 : 0);
  }
  return cp;
}

// Shared core of the saturated event-study regressions: within-transform the
// outcome and the given indicator columns, run OLS, and return coefficients
// plus a cluster-robust covariance with the small-sample factor
// G/(G-1) * (n-1)/(n-K), where K counts indicator columns plus absorbed
// fixed effects.
struct WithinOls {
  Eigen::VectorXd beta;
  Eigen::MatrixXd vcov;
  int n_clusters = 0;
};

WithinOls within_ols(const CodedPanel& cp, std::vector<std::vector<double>>& cols,
                     const std::vector<std::string>& col_names) {
  const std::size_t n = cp.y.size();
  const int K = static_cast<int>(cols.size());
  if (cp.n_countries < 2) throw TooFewClusters("need at least 2 countries");

  detail::TwoWayScratch scratch;
  std::vector<double> ytil = cp.y;
  detail::two_way_demean(ytil, cp.country, cp.year, cp.n_countries, cp.n_years,
                         scratch);
  for (auto& col : cols) {
    detail::two_way_demean(col, cp.country, cp.year, cp.n_countries, cp.n_years,
                           scratch);
  }

  Eigen::MatrixXd B(n, K);
  for (int j = 0; j < K; ++j)
    B.col(j) = Eigen::Map<const Eigen::VectorXd>(cols[j].data(), n);
  Eigen::Map<const Eigen::VectorXd> yv(ytil.data(), n);

  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(B);
  qr.setThreshold(1e-9);
  if (qr.rank() < K) {
    const auto& perm = qr.colsPermutation().indices();
    std::ostringstream os;
    os << "collinear event-time columns:";
    for (int j = qr.rank(); j < K; ++j) os << ' ' << col_names[perm[j]];
    throw RankDeficient(os.str());
  }
  Eigen::VectorXd beta = qr.solve(yv);
  Eigen::VectorXd u = yv - B * beta;

  Eigen::MatrixXd xtx_inv =
      (B.transpose() * B).ldlt().solve(Eigen::MatrixXd::Identity(K, K));
  Eigen::MatrixXd meat = Eigen::MatrixXd::Zero(K, K);
  {
    std::vector<Eigen::VectorXd> scores(cp.n_countries,
                                        Eigen::VectorXd::Zero(K));
    for (std::size_t r = 0; r < n; ++r)
      scores[cp.country[r]] += u[r] * B.row(r).transpose();
    for (const auto& s : scores) meat += s * s.transpose();
  }
  const double G = cp.n_countries;
  const double K_total = K + cp.n_countries + cp.n_years - 1;
  if (static_cast<double>(n) <= K_total) {
    throw RankDeficient("not enough rows for the absorbed design (n <= K)");
  }
  const double c = (G / (G - 1.0)) * ((n - 1.0) / (n - K_total));
  WithinOls out;
  out.beta = std::move(beta);
  out.vcov = c * xtx_inv * meat * xtx_inv;
  out.n_clusters = cp.n_countries;
  return out;
}

std::map<int, int> rows_per_event_time(const CodedPanel& cp) {
  std::map<int, int> n_at_k;
  for (std::size_t r = 0; r < cp.y.size(); ++r)
    if (cp.event_time[r] != kNoEvent) n_at_k[cp.event_time[r]] += 1;
  return n_at_k;
}

}  // namespace

double EventStudyResult::vcov_at(int k_row, int k_col) const {
  auto find = [&](int k) {
    auto it = std::find(coef_ks.begin(), coef_ks.end(), k);
    if (it == coef_ks.end())
      throw NoObservationsAtK("no covariance entry for event time " +
                              std::to_string(k));
    return static_cast<std::size_t>(it - coef_ks.begin());
  };
  return vcov[find(k_row) * coef_ks.size() + find(k_col)];
}

EventStudyResult twfe_event_study(const PanelDataset& data,
                                  std::pair<int, int> report_range) {
  if (report_range.first > report_range.second)
    throw InvalidSpec("event-study window is empty");
  CodedPanel cp = code_panel(data);
  const std::size_t n = cp.y.size();
  auto n_at_k = rows_per_event_time(cp);
  if (n_at_k.empty()) throw InsufficientData("no treated-country rows");

  std::vector<int> dummy_ks;
  for (const auto& [k, cnt] : n_at_k)
    if (k != -1) dummy_ks.push_back(k);
  if (dummy_ks.empty()) throw InsufficientData("only the reference event time is observed");

  std::vector<std::vector<double>> cols(dummy_ks.size(),
                                        std::vector<double>(n, 0.0));
  std::vector<std::string> names;
  for (std::size_t j = 0; j < dummy_ks.size(); ++j)
    names.push_back("k=" + std::to_string(dummy_ks[j]));
  for (std::size_t r = 0; r < n; ++r) {
    if (cp.event_time[r] == kNoEvent || cp.event_time[r] == -1) continue;
    auto it = std::lower_bound(dummy_ks.begin(), dummy_ks.end(), cp.event_time[r]);
    cols[it - dummy_ks.begin()][r] = 1.0;
  }

  WithinOls ols = within_ols(cp, cols, names);

  EventStudyResult res;
  res.estimator = "twfe";
  res.n_clusters = ols.n_clusters;
  std::vector<std::size_t> report_idx;
  for (std::size_t j = 0; j < dummy_ks.size(); ++j) {
    const int k = dummy_ks[j];
    if (k < report_range.first || k > report_range.second) continue;
    EventStudyPoint pt;
    pt.estimate = ols.beta[j];
    pt.std_error = std::sqrt(std::max(0.0, ols.vcov(j, j)));
    pt.ci_low = pt.estimate - kZ975 * pt.std_error;
    pt.ci_high = pt.estimate + kZ975 * pt.std_error;
    pt.n_treated_obs = n_at_k[k];
    res.by_k[k] = pt;
    res.coef_ks.push_back(k);
    report_idx.push_back(j);
  }
  res.vcov.resize(report_idx.size() * report_idx.size());
  for (std::size_t a = 0; a < report_idx.size(); ++a)
    for (std::size_t b = 0; b < report_idx.size(); ++b)
      res.vcov[a * report_idx.size() + b] = ols.vcov(report_idx[a], report_idx[b]);
  return res;
}

EventStudyResult sun_abraham(const PanelDataset& data,
                             std::pair<int, int> report_range) {
  if (report_range.first > report_range.second)
    throw InvalidSpec("event-study window is empty");
  CodedPanel cp = code_panel(data);
  const std::size_t n = cp.y.size();

  // cohort = adoption year; rebuild per row from event time and year
  std::vector<int> cohort(n, kNoEvent);
  std::set<int> cohorts;
  for (std::size_t r = 0; r < n; ++r) {
    if (cp.event_time[r] == kNoEvent) continue;
    cohort[r] = cp.year_values[cp.year[r]] - cp.event_time[r];
    cohorts.insert(cohort[r]);
  }
  if (cohorts.empty()) throw InsufficientData("no treated-country rows");
  if (data.never_treated_countries().empty())
    throw NoNeverTreated("cohort interactions need a never-treated control pool");

  // (cohort, k) cells, k = -1 omitted within every cohort
  std::map<std::pair<int, int>, int> cell_count;
  for (std::size_t r = 0; r < n; ++r) {
    if (cohort[r] == kNoEvent || cp.event_time[r] == -1) continue;
    cell_count[{cohort[r], cp.event_time[r]}] += 1;
  }
  std::vector<std::pair<int, int>> cells;
  for (const auto& [cell, cnt] : cell_count) cells.push_back(cell);
  if (cells.empty()) throw InsufficientData("only reference event times observed");

  std::map<std::pair<int, int>, std::size_t> cell_col;
  std::vector<std::vector<double>> cols(cells.size(), std::vector<double>(n, 0.0));
  std::vector<std::string> names;
  for (std::size_t j = 0; j < cells.size(); ++j) {
    cell_col[cells[j]] = j;
    names.push_back("g=" + std::to_string(cells[j].first) +
                    ",k=" + std::to_string(cells[j].second));
  }
  for (std::size_t r = 0; r < n; ++r) {
    if (cohort[r] == kNoEvent || cp.event_time[r] == -1) continue;
    cols[cell_col[{cohort[r], cp.event_time[r]}]][r] = 1.0;
  }

  WithinOls ols = within_ols(cp, cols, names);

  // aggregate to event time with observation-share weights
  auto n_at_k = rows_per_event_time(cp);
  EventStudyResult res;
  res.estimator = "sun_abraham";
  res.n_clusters = ols.n_clusters;
  std::vector<int> ks;
  for (const auto& [k, cnt] : n_at_k)
    if (k != -1 && k >= report_range.first && k <= report_range.second)
      ks.push_back(k);

  Eigen::MatrixXd W = Eigen::MatrixXd::Zero(ks.size(), cells.size());
  for (std::size_t a = 0; a < ks.size(); ++a) {
    const int k = ks[a];
    double total = 0.0;
    for (const auto& [cell, cnt] : cell_count)
      if (cell.second == k) total += cnt;
    for (const auto& [cell, cnt] : cell_count)
      if (cell.second == k) W(a, cell_col[cell]) = cnt / total;
  }
  Eigen::VectorXd agg = W * ols.beta;
  Eigen::MatrixXd agg_vcov = W * ols.vcov * W.transpose();

  for (std::size_t a = 0; a < ks.size(); ++a) {
    EventStudyPoint pt;
    pt.estimate = agg[a];
    pt.std_error = std::sqrt(std::max(0.0, agg_vcov(a, a)));
    pt.ci_low = pt.estimate - kZ975 * pt.std_error;
    pt.ci_high = pt.estimate + kZ975 * pt.std_error;
    pt.n_treated_obs = n_at_k[ks[a]];
    res.by_k[ks[a]] = pt;
    res.coef_ks.push_back(ks[a]);
  }
  res.vcov.resize(ks.size() * ks.size());
  for (std::size_t a = 0; a < ks.size(); ++a)
    for (std::size_t b = 0; b < ks.size(); ++b)
      res.vcov[a * ks.size() + b] = agg_vcov(a, b);
  return res;
}

CsResult callaway_santanna(const PanelDataset& data) {
  // cohort -> countries; control pool = never treated
  std::map<int, std::set<std::string>> cohorts;
  std::set<std::string> controls;
  for (const auto& [c, rows] : data.country_index) {
    const auto& first = data.observations[rows.front()];
    if (first.adoption_year) {
      cohorts[*first.adoption_year].insert(c);
    } else {
      controls.insert(c);
    }
  }
  if (controls.empty())
    throw NoNeverTreated("group-time effects need a never-treated control pool");
  if (cohorts.empty()) throw InsufficientData("no treated cohorts");

  // per-(group, year) means; group key: cohort year, or -1 for controls
  std::map<std::pair<int, int>, std::pair<double, int>> sums;
  for (const auto& obs : data.observations) {
    int g = obs.adoption_year ? *obs.adoption_year : -1;
    auto& [s, cnt] = sums[{g, obs.year}];
    s += obs.outcome;
    cnt += 1;
  }
  auto mean_at = [&](int g, int year) -> std::optional<std::pair<double, int>> {
    auto it = sums.find({g, year});
    if (it == sums.end() || it->second.second == 0) return std::nullopt;
    return std::make_pair(it->second.first / it->second.second,
                          it->second.second);
  };

  CsResult out;
  std::set<int> years;
  for (const auto& obs : data.observations) years.insert(obs.year);

  for (const auto& [g, members] : cohorts) {
    auto base_treat = mean_at(g, g - 1);
    auto base_ctrl = mean_at(-1, g - 1);
    if (!base_treat || !base_ctrl) {
      throw NoPrePeriod("cohort " + std::to_string(g) +
                        " has no usable base year " + std::to_string(g - 1));
    }
    for (int year : years) {
      if (year == g - 1) continue;
      auto mt = mean_at(g, year);
      auto mc = mean_at(-1, year);
      if (!mt || !mc) continue;
      GroupTimeAtt cell;
      cell.cohort = g;
      cell.year = year;
      cell.event_time = year - g;
      cell.att = (mt->first - base_treat->first) - (mc->first - base_ctrl->first);
      cell.n_treated = mt->second;
      out.group_time.push_back(cell);
    }
  }

  // dynamic aggregation, cohort-size (country count) weights
  std::map<int, std::pair<double, double>> agg;  // k -> (weighted sum, weight)
  std::map<int, int> n_at_k;
  for (const auto& cell : out.group_time) {
    const double w = static_cast<double>(cohorts[cell.cohort].size());
    auto& [s, wsum] = agg[cell.event_time];
    s += w * cell.att;
    wsum += w;
    n_at_k[cell.event_time] += cell.n_treated;
  }
  out.aggregated.estimator = "callaway_santanna";
  for (const auto& [k, sw] : agg) {
    EventStudyPoint pt;
    pt.estimate = sw.first / sw.second;
    pt.std_error = std::numeric_limits<double>::quiet_NaN();
    pt.ci_low = pt.ci_high = std::numeric_limits<double>::quiet_NaN();
    pt.n_treated_obs = n_at_k[k];
    out.aggregated.by_k[k] = pt;
  }
  return out;
}

IfeResult interactive_fe(const PanelDataset& data, const IfeOptions& opts) {
  if (opts.n_factors < 1)
    throw InvalidSpec("interactive fixed effects need n_factors >= 1");
  std::pair<int, int> window = opts.window.value_or(data.year_range);
  if (window.first > window.second) throw InvalidSpec("empty year window");

  IfeResult res;
  res.n_factors = opts.n_factors;
  for (int y = window.first; y <= window.second; ++y) res.years.push_back(y);
  const int T = static_cast<int>(res.years.size());

  // keep countries that cover the whole window
  std::map<int, int> year_pos;
  for (int t = 0; t < T; ++t) year_pos[res.years[t]] = t;
  for (const auto& [c, rows] : data.country_index) {
    int covered = 0;
    for (std::size_t idx : rows) {
      if (year_pos.count(data.observations[idx].year)) ++covered;
    }
    if (covered == T) {
      res.countries.push_back(c);
    } else {
      res.warnings.push_back("country " + c +
                             " dropped (incomplete window coverage)");
    }
  }
  const int N = static_cast<int>(res.countries.size());
  if (N < 2 || T < 2) {
    throw WindowTooSparse("balanced window keeps " + std::to_string(N) +
                          " countries and " + std::to_string(T) + " years");
  }
  if (opts.n_factors >= std::min(N, T))
    throw InvalidSpec("n_factors must be below min(countries, years)");

  Eigen::MatrixXd Y(T, N), D(T, N);
  {
    std::map<std::string, int> cpos;
    for (int i = 0; i < N; ++i) cpos[res.countries[i]] = i;
    for (const auto& obs : data.observations) {
      auto ci = cpos.find(obs.country);
      auto ti = year_pos.find(obs.year);
      if (ci == cpos.end() || ti == year_pos.end()) continue;
      Y(ti->second, ci->second) = obs.outcome;
      D(ti->second, ci->second) = obs.treated ? 1.0 : 0.0;
    }
  }
  // country-demeaned treatment must vary
  Eigen::MatrixXd Dw = D.rowwise() - D.colwise().mean();
  const double d_ss = Dw.squaredNorm();
  if (d_ss < 1e-12)
    throw RankDeficient("treatment has no within-country variation in the window");

  const int r = opts.n_factors;
  double tau = 0.0;
  Eigen::MatrixXd F = Eigen::MatrixXd::Zero(T, r);
  Eigen::MatrixXd L = Eigen::MatrixXd::Zero(N, r);
  int iter = 0;
  bool converged = false;
  for (; iter < opts.max_iter; ++iter) {
    // principal components of the residual matrix at the current tau
    Eigen::MatrixXd R = Y - tau * D;
    Eigen::VectorXd alpha = R.colwise().mean();
    R.rowwise() -= alpha.transpose();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(R * R.transpose());
    // eigenvalues ascending; take the top r, sign-fixed for determinism
    for (int m = 0; m < r; ++m) {
      Eigen::VectorXd v = eig.eigenvectors().col(T - 1 - m);
      int lead = 0;
      for (int t = 1; t < T; ++t)
        if (std::abs(v[t]) > std::abs(v[lead])) lead = t;
      if (v[lead] < 0) v = -v;
      F.col(m) = v;
    }
    L = R.transpose() * F;

    // OLS of (Y - F L') on country intercepts and D
    Eigen::MatrixXd Z = Y - F * L.transpose();
    Eigen::MatrixXd Zw = Z.rowwise() - Z.colwise().mean();
    double tau_new = (Dw.array() * Zw.array()).sum() / d_ss;
    if (std::abs(tau_new - tau) < opts.tol) {
      tau = tau_new;
      converged = true;
      ++iter;
      break;
    }
    tau = tau_new;
  }
  res.tau_hat = tau;
  res.iterations = iter;
  res.converged = converged;
  // Eigen stores column-major; flatten row-major for the public result
  res.factors.resize(static_cast<std::size_t>(T) * r);
  for (int t = 0; t < T; ++t)
    for (int m = 0; m < r; ++m) res.factors[static_cast<std::size_t>(t) * r + m] = F(t, m);
  res.loadings.resize(static_cast<std::size_t>(N) * r);
  for (int i = 0; i < N; ++i)
    for (int m = 0; m < r; ++m) res.loadings[static_cast<std::size_t>(i) * r + m] = L(i, m);
  return res;
}

std::pair<double, double> static_twfe(const PanelDataset& data) {
  CodedPanel cp = code_panel(data);
  const std::size_t n = cp.y.size();
  if (cp.n_countries < 2) throw TooFewClusters("need at least 2 countries");
  detail::TwoWayScratch scratch;
  std::vector<double> ytil = cp.y;
  std::vector<double> dtil(n);
  for (std::size_t r = 0; r < n; ++r) dtil[r] = cp.treated[r] ? 1.0 : 0.0;
  detail::two_way_demean(ytil, cp.country, cp.year, cp.n_countries, cp.n_years, scratch);
  detail::two_way_demean(dtil, cp.country, cp.year, cp.n_countries, cp.n_years, scratch);
  double dss = 0.0, dy = 0.0;
  for (std::size_t r = 0; r < n; ++r) {
    dss += dtil[r] * dtil[r];
    dy += dtil[r] * ytil[r];
  }
  if (dss < 1e-12) throw RankDeficient("treatment indicator has no within variation");
  const double tau = dy / dss;

  std::vector<double> score(cp.n_countries, 0.0);
  for (std::size_t r = 0; r < n; ++r)
    score[cp.country[r]] += dtil[r] * (ytil[r] - tau * dtil[r]);
  double meat = 0.0;
  for (double s : score) meat += s * s;
  const double G = cp.n_countries;
  const double K_total = 1.0 + cp.n_countries + cp.n_years - 1.0;
  const double c = (G / (G - 1.0)) * ((n - 1.0) / (n - K_total));
  const double var = c * meat / (dss * dss);
  return {tau, std::sqrt(std::max(0.0, var))};
}

}  // namespace cffe
