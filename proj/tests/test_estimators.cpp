#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>
#include <map>
#include <set>
#include <vector>

#include "cffe/dgp.hpp"
#include "cffe/errors.hpp"
#include "cffe/estimators.hpp"

using namespace cffe;

namespace {

dgp::DgpSpec oracle_spec() {
  dgp::DgpSpec s;
  s.n_treated = 4;
  s.n_control = 4;
  s.year_start = 1995;
  s.year_end = 2005;
  s.adoption_year = 2000;
  s.n_features = 2;
  s.sigma_eps = 1.0;
  s.seed = 5;
  return s;
}

// Dense event-study regression with explicit indicator columns and the same
// clustered sandwich. Used as the numerical oracle for the within-transform
// implementation.
struct DenseFit {
  std::vector<int> ks;
  Eigen::VectorXd beta;      // event-dummy block
  Eigen::MatrixXd vcov;      // event-dummy block
};

DenseFit dense_event_study(const PanelDataset& data) {
  std::map<std::string, int> cidx;
  std::map<int, int> yidx;
  std::set<int> kset;
  for (const auto& obs : data.observations) {
    cidx.emplace(obs.country, static_cast<int>(cidx.size()));
    yidx.emplace(obs.year, static_cast<int>(yidx.size()));
    if (obs.event_time && *obs.event_time != -1) kset.insert(*obs.event_time);
  }
  std::map<int, int> kcol;
  for (int k : kset) kcol.emplace(k, static_cast<int>(kcol.size()));

  const int n = static_cast<int>(data.n_rows());
  const int N = static_cast<int>(cidx.size());
  const int T = static_cast<int>(yidx.size());
  const int K = static_cast<int>(kcol.size());
  const int P = 1 + (N - 1) + (T - 1) + K;

  Eigen::MatrixXd X = Eigen::MatrixXd::Zero(n, P);
  Eigen::VectorXd y(n);
  std::vector<int> cluster(n);
  for (int i = 0; i < n; ++i) {
    const auto& obs = data.observations[i];
    y(i) = obs.outcome;
    cluster[i] = cidx.at(obs.country);
    X(i, 0) = 1.0;
    const int c = cidx.at(obs.country);
    if (c > 0) X(i, c) = 1.0;  // columns 1..N-1
    const int t = yidx.at(obs.year);
    if (t > 0) X(i, N - 1 + t) = 1.0;  // columns N..N+T-2
    if (obs.event_time && *obs.event_time != -1)
      X(i, N + T - 1 + kcol.at(*obs.event_time)) = 1.0;
  }

  Eigen::VectorXd beta = X.colPivHouseholderQr().solve(y);
  Eigen::VectorXd u = y - X * beta;
  Eigen::MatrixXd bread = (X.transpose() * X).inverse();
  Eigen::MatrixXd meat = Eigen::MatrixXd::Zero(P, P);
  for (int g = 0; g < N; ++g) {
    Eigen::VectorXd m = Eigen::VectorXd::Zero(P);
    for (int i = 0; i < n; ++i)
      if (cluster[i] == g) m += X.row(i).transpose() * u(i);
    meat += m * m.transpose();
  }
  const double c = (static_cast<double>(N) / (N - 1)) *
                   (static_cast<double>(n - 1) / (n - P));
  Eigen::MatrixXd V = c * bread * meat * bread;

  DenseFit fit;
  for (int k : kset) fit.ks.push_back(k);
  fit.beta = beta.segment(N + T - 1, K);
  fit.vcov = V.block(N + T - 1, N + T - 1, K, K);
  return fit;
}

// Hand-built noiseless panel: outcome = effect(cohort) on post rows, zero
// fixed effects. Countries C* never adopt.
PanelDataset toy_panel(const std::map<std::string, int>& adoption,
                       const std::map<std::string, double>& effect,
                       int y0, int y1, int n_controls) {
  std::vector<Observation> rows;
  auto add = [&](const std::string& c, std::optional<int> a, double eff) {
    for (int y = y0; y <= y1; ++y) {
      Observation o;
      o.country = c;
      o.year = y;
      o.adoption_year = a;
      o.outcome = (a && y >= *a) ? eff : 0.0;
      o.features = {0.0};
      rows.push_back(o);
    }
  };
  for (const auto& [c, a] : adoption) add(c, a, effect.at(c));
  for (int i = 0; i < n_controls; ++i)
    add("C" + std::to_string(i), std::nullopt, 0.0);
  return build_dataset(std::move(rows), {"x1"});
}

}  // namespace

TEST_CASE("within-transform event study equals the dense oracle") {
  auto [p, truth] = dgp::generate_panel(oracle_spec());
  EventStudyResult r = twfe_event_study(p);
  DenseFit oracle = dense_event_study(p);

  REQUIRE(r.coef_ks == oracle.ks);
  REQUIRE(r.n_clusters == 8);
  for (std::size_t a = 0; a < oracle.ks.size(); ++a) {
    const int k = oracle.ks[a];
    CHECK(r.by_k.at(k).estimate ==
          doctest::Approx(oracle.beta(a)).epsilon(1e-9));
    for (std::size_t b = 0; b < oracle.ks.size(); ++b) {
      CHECK(r.vcov_at(k, oracle.ks[b]) ==
            doctest::Approx(oracle.vcov(a, b)).epsilon(1e-7));
    }
    CHECK(r.by_k.at(k).std_error ==
          doctest::Approx(std::sqrt(oracle.vcov(a, a))).epsilon(1e-7));
  }
}

TEST_CASE("event study recovers noiseless effects exactly") {
  dgp::DgpSpec s = oracle_spec();
  s.sigma_eps = 0.0;

  SUBCASE("constant") {
    auto [p, truth] = dgp::generate_panel(s);
    EventStudyResult r = twfe_event_study(p);
    for (const auto& [k, pt] : r.by_k) {
      const double want = k >= 0 ? -0.35 : 0.0;
      CHECK(pt.estimate == doctest::Approx(want).epsilon(1e-8));
      CHECK(pt.ci_low <= pt.estimate);
      CHECK(pt.estimate <= pt.ci_high);
    }
    CHECK(r.by_k.count(-1) == 0);
    CHECK(r.reference_k == -1);
  }
  SUBCASE("null") {
    s.cate.tau0 = 0.0;
    auto [p, truth] = dgp::generate_panel(s);
    for (const auto& [k, pt] : twfe_event_study(p).by_k)
      CHECK(pt.estimate == doctest::Approx(0.0).epsilon(1e-8));
  }
  SUBCASE("ramp is a pure function of event time, still exact") {
    s.cate.kind = dgp::CateKind::kRamp;
    auto [p, truth] = dgp::generate_panel(s);
    EventStudyResult r = twfe_event_study(p);
    for (const auto& [k, pt] : r.by_k) {
      const double want = k >= 0 ? dgp::true_att(truth, k) : 0.0;
      CHECK(pt.estimate == doctest::Approx(want).epsilon(1e-8));
    }
  }
}

TEST_CASE("event study invariances and bookkeeping") {
  auto [p, truth] = dgp::generate_panel(oracle_spec());
  EventStudyResult r1 = twfe_event_study(p);

  // level shifts are absorbed by the intercept space
  PanelDataset shifted = p;
  for (auto& obs : shifted.observations) obs.outcome += 5.0;
  EventStudyResult r2 = twfe_event_study(shifted);
  for (const auto& [k, pt] : r1.by_k)
    CHECK(pt.estimate == doctest::Approx(r2.by_k.at(k).estimate).epsilon(1e-10));

  // n_treated_obs counts rows at each event time
  CHECK(r1.by_k.at(0).n_treated_obs == 4);
  CHECK(r1.by_k.at(5).n_treated_obs == 4);

  // report range trims output, not the underlying regression
  EventStudyResult narrow = twfe_event_study(p, {0, 2});
  CHECK(narrow.by_k.size() == 3);
  CHECK(narrow.by_k.at(0).estimate ==
        doctest::Approx(r1.by_k.at(0).estimate).epsilon(1e-12));
}

TEST_CASE("event study named errors") {
  {
    // one country only: nothing to cluster on
    std::vector<Observation> rows;
    for (int y = 1995; y <= 2005; ++y) {
      Observation o;
      o.country = "A";
      o.year = y;
      o.adoption_year = 2000;
      o.outcome = y * 0.1;
      rows.push_back(o);
    }
    PanelDataset p = build_dataset(std::move(rows), {});
    CHECK_THROWS_AS(twfe_event_study(p), TooFewClusters);
  }
  {
    // an always-treated country makes its event dummies sum to its own
    // country indicator
    std::vector<Observation> rows;
    for (int y = 1995; y <= 2005; ++y) {
      for (const std::string& c : {"A", "B", "C"}) {
        Observation o;
        o.country = c;
        o.year = y;
        if (c == "A") o.adoption_year = 1995;
        o.outcome = 0.01 * y + (c == "A" && y >= 1995 ? -0.3 : 0.0);
        rows.push_back(o);
      }
    }
    PanelDataset p = build_dataset(std::move(rows), {});
    CHECK_THROWS_AS(twfe_event_study(p), RankDeficient);
  }
}

TEST_CASE("sun-abraham collapses to twfe with a single cohort") {
  auto [p, truth] = dgp::generate_panel(oracle_spec());
  EventStudyResult tw = twfe_event_study(p);
  EventStudyResult sa = sun_abraham(p);
  REQUIRE(sa.coef_ks == tw.coef_ks);
  for (const auto& [k, pt] : tw.by_k) {
    CHECK(sa.by_k.at(k).estimate == doctest::Approx(pt.estimate).epsilon(1e-8));
    CHECK(sa.by_k.at(k).std_error == doctest::Approx(pt.std_error).epsilon(1e-8));
  }
}

TEST_CASE("sun-abraham aggregates equal-size cohorts by simple average") {
  PanelDataset p = toy_panel({{"A", 2000}, {"B", 2002}},
                             {{"A", -0.2}, {"B", -0.4}}, 1998, 2005, 2);
  EventStudyResult sa = sun_abraham(p);
  // both cohorts observed at k in 0..3, one row each
  for (int k = 0; k <= 3; ++k)
    CHECK(sa.by_k.at(k).estimate == doctest::Approx(-0.3).epsilon(1e-8));
  // only cohort A reaches k = 4, 5
  CHECK(sa.by_k.at(4).estimate == doctest::Approx(-0.2).epsilon(1e-8));
  CHECK(sa.by_k.at(5).estimate == doctest::Approx(-0.2).epsilon(1e-8));
  // pre periods are clean
  CHECK(sa.by_k.at(-2).estimate == doctest::Approx(0.0).epsilon(1e-8));
}

TEST_CASE("sun-abraham requires a never-treated pool") {
  PanelDataset p = toy_panel({{"A", 2000}, {"B", 2002}},
                             {{"A", -0.2}, {"B", -0.4}}, 1998, 2005, 0);
  CHECK_THROWS_AS(sun_abraham(p), NoNeverTreated);
}

TEST_CASE("callaway-santanna 2x2 equals the textbook double difference") {
  std::vector<Observation> rows;
  auto add = [&](const std::string& c, int y, double v, std::optional<int> a) {
    Observation o;
    o.country = c;
    o.year = y;
    o.outcome = v;
    o.adoption_year = a;
    rows.push_back(o);
  };
  add("T", 1, 3.0, 2);
  add("T", 2, 7.0, 2);
  add("C", 1, 1.0, std::nullopt);
  add("C", 2, 2.0, std::nullopt);
  PanelDataset p = build_dataset(std::move(rows), {});
  CsResult cs = callaway_santanna(p);
  REQUIRE(cs.group_time.size() >= 1);
  bool found = false;
  for (const auto& gt : cs.group_time) {
    if (gt.cohort == 2 && gt.year == 2) {
      CHECK(gt.att == doctest::Approx((7.0 - 3.0) - (2.0 - 1.0)).epsilon(1e-12));
      CHECK(gt.event_time == 0);
      found = true;
    }
  }
  CHECK(found);
}

TEST_CASE("callaway-santanna is exact on noiseless panels") {
  dgp::DgpSpec s = oracle_spec();
  s.sigma_eps = 0.0;
  auto [p, truth] = dgp::generate_panel(s);
  CsResult cs = callaway_santanna(p);
  for (const auto& gt : cs.group_time) {
    const double want = gt.year >= gt.cohort ? -0.35 : 0.0;
    CHECK(gt.att == doctest::Approx(want).epsilon(1e-10));
  }
  for (const auto& [k, pt] : cs.aggregated.by_k) {
    const double want = k >= 0 ? -0.35 : 0.0;
    CHECK(pt.estimate == doctest::Approx(want).epsilon(1e-10));
    CHECK(std::isnan(pt.std_error));  // SEs arrive via the bootstrap
  }
}

TEST_CASE("callaway-santanna aggregation weights cohorts by country count") {
  PanelDataset p = toy_panel({{"A", 2000}, {"B", 2000}, {"E", 2002}},
                             {{"A", -0.2}, {"B", -0.2}, {"E", -0.5}},
                             1998, 2005, 2);
  CsResult cs = callaway_santanna(p);
  // k=0: cohort 2000 (2 countries, att -0.2) and cohort 2002 (1, -0.5)
  CHECK(cs.aggregated.by_k.at(0).estimate ==
        doctest::Approx((2.0 * -0.2 + 1.0 * -0.5) / 3.0).epsilon(1e-10));
  // k=4..5 reachable only by cohort 2000
  CHECK(cs.aggregated.by_k.at(5).estimate == doctest::Approx(-0.2).epsilon(1e-10));
}

TEST_CASE("callaway-santanna named errors") {
  {
    PanelDataset p = toy_panel({{"A", 2000}}, {{"A", -0.2}}, 1998, 2005, 0);
    CHECK_THROWS_AS(callaway_santanna(p), NoNeverTreated);
  }
  {
    // cohort adopting at the first observed year has no g-1 base period
    PanelDataset p = toy_panel({{"A", 1998}}, {{"A", -0.2}}, 1998, 2005, 2);
    CHECK_THROWS_AS(callaway_santanna(p), NoPrePeriod);
  }
}

TEST_CASE("interactive fe fits noiseless data exactly") {
  dgp::DgpSpec s = oracle_spec();
  s.sigma_eps = 0.0;
  auto [p, truth] = dgp::generate_panel(s);
  IfeOptions opts;
  opts.n_factors = 1;  // absorbs the common year shock
  IfeResult r = interactive_fe(p, opts);
  CHECK(r.converged);
  CHECK(r.tau_hat == doctest::Approx(-0.35).epsilon(1e-6));
  // orthonormal factor columns
  const int T = static_cast<int>(r.years.size());
  for (int a = 0; a < r.n_factors; ++a) {
    for (int b = 0; b <= a; ++b) {
      double g = 0.0;
      for (int t = 0; t < T; ++t)
        g += r.factors[t * r.n_factors + a] * r.factors[t * r.n_factors + b];
      CHECK(g == doctest::Approx(a == b ? 1.0 : 0.0).epsilon(1e-10));
    }
  }
}

TEST_CASE("interactive fe tracks twfe when there is no factor structure") {
  // small-noise limit: the extracted factor tilts away from the common year
  // shock by O(sigma_eps), so the agreement bound is a limit statement
  dgp::DgpSpec s = oracle_spec();
  s.sigma_eps = 0.003;
  auto [p, truth] = dgp::generate_panel(s);
  auto [tau_twfe, se_twfe] = static_twfe(p);
  IfeOptions opts;
  opts.n_factors = 1;
  IfeResult r = interactive_fe(p, opts);
  CHECK(r.converged);
  CHECK(std::abs(r.tau_hat - tau_twfe) <= 1e-4);
}

TEST_CASE("interactive fe balancing and errors") {
  dgp::DgpSpec s = oracle_spec();
  auto [p, truth] = dgp::generate_panel(s);

  IfeOptions bad;
  bad.n_factors = 0;
  CHECK_THROWS_AS(interactive_fe(p, bad), InvalidSpec);

  // a country missing a year inside the window is excluded, with a warning
  PanelDataset holed = p;
  {
    std::vector<Observation> rows;
    for (const auto& obs : holed.observations) {
      if (obs.country == p.observations[0].country && obs.year == 1999) continue;
      rows.push_back(obs);
    }
    holed = build_dataset(std::move(rows), p.feature_names);
  }
  IfeResult r = interactive_fe(holed, {});
  CHECK(r.countries.size() == 7);
  CHECK(!r.warnings.empty());

  // a window no country fills completely
  IfeOptions w;
  w.window = {{2004, 2006}};  // 2006 beyond the panel
  CHECK_THROWS_AS(interactive_fe(holed, w), WindowTooSparse);
}

TEST_CASE("static twfe recovers a homogeneous effect without noise") {
  dgp::DgpSpec s = oracle_spec();
  s.sigma_eps = 0.0;
  auto [p, truth] = dgp::generate_panel(s);
  auto [tau, se] = static_twfe(p);
  CHECK(tau == doctest::Approx(-0.35).epsilon(1e-10));
  CHECK(se == doctest::Approx(0.0).epsilon(1e-8));
}
