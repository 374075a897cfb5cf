#include "cffe/forest.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <numeric>

#include <nlohmann/json.hpp>

#include "cffe/errors.hpp"
#include "cffe/kernels.hpp"
#include "cffe/parallel.hpp"
#include "cffe/rng.hpp"
#include "demean.hpp"

namespace cffe::forest {

namespace {

constexpr int kNoEvent = std::numeric_limits<int>::min();
// Below this, sum(d_tilde^2) carries no identification: the node's treatment
// indicator is absorbed by its fixed effects. Real contrasts sit orders of
// magnitude higher (>= min_treated * within-variance).
constexpr double kIdentEps = 1e-4;

// Column view of the training data, with dense country/year codes.
struct Columns {
  std::vector<double> y;
  std::vector<double> d;
  std::vector<int> country;
  std::vector<int> year;
  std::vector<int> k;  // kNoEvent when never treated
  std::vector<double> x;  // n * p, row-major
  int n_countries = 0;
  int n_years = 0;
  int p = 0;

  std::size_t n() const { return y.size(); }
  double xval(std::size_t row, int j) const { return x[row * p + j]; }
};

Columns make_columns(const PanelDataset& data) {
  Columns c;
  std::map<std::string, int> cmap;
  std::map<int, int> ymap;
  for (const auto& [name, rows] : data.country_index)
    cmap.emplace(name, static_cast<int>(cmap.size()));
  for (const auto& obs : data.observations) ymap.emplace(obs.year, 0);
  {
    int code = 0;
    for (auto& [year, v] : ymap) v = code++;
  }
  c.n_countries = static_cast<int>(cmap.size());
  c.n_years = static_cast<int>(ymap.size());
  c.p = static_cast<int>(data.feature_names.size());
  const std::size_t n = data.n_rows();
  c.y.reserve(n);
  c.d.reserve(n);
  c.country.reserve(n);
  c.year.reserve(n);
  c.k.reserve(n);
  c.x.reserve(n * c.p);
  for (const auto& obs : data.observations) {
    c.y.push_back(obs.outcome);
    c.d.push_back(obs.treated ? 1.0 : 0.0);
    c.country.push_back(cmap[obs.country]);
    c.year.push_back(ymap[obs.year]);
    c.k.push_back(obs.event_time ? *obs.event_time : kNoEvent);
    for (int j = 0; j < c.p; ++j) c.x.push_back(obs.features[j]);
  }
  return c;
}

// Node-local residualization working on gathered buffers.
struct NodeWork {
  std::vector<double> y_til, d_til;
  std::vector<int> ci, yi;
  detail::TwoWayScratch scratch;
  bool degenerate = false;

  // Residualizes the node rows; returns false when the node is empty.
  bool run(const Columns& cols, std::span<const int> rows) {
    const std::size_t m = rows.size();
    if (m == 0) return false;
    y_til.resize(m);
    d_til.resize(m);
    ci.resize(m);
    yi.resize(m);
    for (std::size_t r = 0; r < m; ++r) {
      y_til[r] = cols.y[rows[r]];
      d_til[r] = cols.d[rows[r]];
      ci[r] = cols.country[rows[r]];
      yi[r] = cols.year[rows[r]];
    }
    int distinct_c = count_distinct(ci, cols.n_countries);
    int distinct_y = count_distinct(yi, cols.n_years);
    degenerate = distinct_c < 2 || distinct_y < 2;
    if (degenerate) {
      // demean on whatever dimension still varies (grand mean if neither)
      if (distinct_c >= 2) {
        one_way(y_til, ci, cols.n_countries);
        one_way(d_til, ci, cols.n_countries);
      } else {
        one_way(y_til, yi, cols.n_years);
        one_way(d_til, yi, cols.n_years);
      }
    } else {
      detail::two_way_demean(y_til, ci, yi, cols.n_countries, cols.n_years, scratch);
      detail::two_way_demean(d_til, ci, yi, cols.n_countries, cols.n_years, scratch);
    }
    return true;
  }

  static int count_distinct(const std::vector<int>& codes, int domain) {
    std::vector<char> seen(domain, 0);
    int distinct = 0;
    for (int c : codes) {
      if (!seen[c]) {
        seen[c] = 1;
        ++distinct;
      }
    }
    return distinct;
  }

  void one_way(std::vector<double>& v, const std::vector<int>& codes, int domain) {
    std::vector<double> sum(domain, 0.0);
    std::vector<int> cnt(domain, 0);
    for (std::size_t r = 0; r < v.size(); ++r) {
      sum[codes[r]] += v[r];
      cnt[codes[r]] += 1;
    }
    for (int g = 0; g < domain; ++g)
      if (cnt[g]) sum[g] /= cnt[g];
    for (std::size_t r = 0; r < v.size(); ++r) v[r] -= sum[codes[r]];
  }
};

struct NodeEstimate {
  double effect = 0.0;
  bool valid = false;
  bool degenerate = false;
  int n_treated = 0;
  int n_control = 0;
};

NodeEstimate estimate_node(const Columns& cols, std::span<const int> rows,
                           const ForestConfig& config, NodeWork& work) {
  NodeEstimate est;
  for (int r : rows) {
    if (cols.d[r] > 0.5) {
      ++est.n_treated;
    } else {
      ++est.n_control;
    }
  }
  if (est.n_treated < config.min_treated_per_leaf ||
      est.n_control < config.min_control_per_leaf) {
    return est;
  }
  if (!work.run(cols, rows)) return est;
  est.degenerate = work.degenerate;
  const double dss = kernels::sumsq(work.d_til);
  if (dss < kIdentEps) return est;
  est.effect = kernels::dot(work.d_til, work.y_til) / dss;
  est.valid = true;
  return est;
}

struct SplitChoice {
  int feature = -1;
  double threshold = 0.0;
  double score = -1.0;
};

struct Grower {
  const Columns& cols;
  const ForestConfig& config;
  Tree& tree;
  NodeWork work;
  std::vector<double> res_y, res_d;  // parent residuals indexed by global row

  Grower(const Columns& c, const ForestConfig& cfg, Tree& t)
      : cols(c), config(cfg), tree(t) {
    res_y.resize(cols.n());
    res_d.resize(cols.n());
  }

  // Candidate split scan on one feature. `value_of` must return the sort
  // value for a row that HAS one; event-time lookups on never-treated rows
  // are handled by the caller through `both_sides`.
  struct SideTotals {
    double dy = 0.0, dd = 0.0;
    int n = 0, n_treated = 0, n_control = 0;
  };

  void scan_feature(int feature, std::span<const int> rows,
                    SplitChoice& best) {
    // rows that route by value vs rows broadcast to both children
    thread_local std::vector<std::pair<double, int>> order;
    order.clear();
    SideTotals broadcast;
    for (int r : rows) {
      double v;
      if (feature == 0) {
        if (cols.k[r] == kNoEvent) {
          broadcast.dy += res_d[r] * res_y[r];
          broadcast.dd += res_d[r] * res_d[r];
          broadcast.n += 1;
          if (cols.d[r] > 0.5) broadcast.n_treated += 1; else broadcast.n_control += 1;
          continue;
        }
        v = static_cast<double>(cols.k[r]);
      } else {
        v = cols.xval(r, feature - 1);
      }
      order.emplace_back(v, r);
    }
    if (order.size() < 2) return;
    std::sort(order.begin(), order.end());

    SideTotals total = broadcast;
    for (const auto& [v, r] : order) {
      total.dy += res_d[r] * res_y[r];
      total.dd += res_d[r] * res_d[r];
      total.n += 1;
      if (cols.d[r] > 0.5) total.n_treated += 1; else total.n_control += 1;
    }

    SideTotals left = broadcast;
    for (std::size_t i = 0; i + 1 < order.size(); ++i) {
      const auto& [v, r] = order[i];
      left.dy += res_d[r] * res_y[r];
      left.dd += res_d[r] * res_d[r];
      left.n += 1;
      if (cols.d[r] > 0.5) left.n_treated += 1; else left.n_control += 1;
      if (order[i + 1].first <= v) continue;  // not a boundary between distinct values

      SideTotals right;
      right.dy = total.dy - left.dy + broadcast.dy;
      right.dd = total.dd - left.dd + broadcast.dd;
      right.n = total.n - left.n + broadcast.n;
      right.n_treated = total.n_treated - left.n_treated + broadcast.n_treated;
      right.n_control = total.n_control - left.n_control + broadcast.n_control;

      if (left.n < config.min_leaf || right.n < config.min_leaf) continue;
      if (left.n_treated < config.min_treated_per_leaf ||
          right.n_treated < config.min_treated_per_leaf)
        continue;
      if (left.n_control < config.min_control_per_leaf ||
          right.n_control < config.min_control_per_leaf)
        continue;
      if (left.dd < kIdentEps || right.dd < kIdentEps) continue;

      const double tau_l = left.dy / left.dd;
      const double tau_r = right.dy / right.dd;
      const double nl = left.n, nr = right.n;
      const double gap = tau_l - tau_r;
      const double score = nl * nr / ((nl + nr) * (nl + nr)) * gap * gap;
      if (score > best.score) {
        best.score = score;
        best.feature = feature;
        best.threshold = 0.5 * (v + order[i + 1].first);
      }
    }
  }

  int grow(std::vector<int> rows, int depth) {
    const int self = static_cast<int>(tree.nodes.size());
    tree.nodes.emplace_back();

    if (depth < config.max_depth &&
        rows.size() >= static_cast<std::size_t>(2 * config.min_leaf)) {
      // residualize at this node; the scan scores children on these residuals
      if (work.run(cols, rows) && kernels::sumsq(work.d_til) >= kIdentEps) {
        for (std::size_t i = 0; i < rows.size(); ++i) {
          res_y[rows[i]] = work.y_til[i];
          res_d[rows[i]] = work.d_til[i];
        }
        SplitChoice best;
        for (int f = 0; f <= cols.p; ++f) scan_feature(f, rows, best);
        if (best.feature >= 0) {
          std::vector<int> left_rows, right_rows;
          partition(rows, best.feature, best.threshold, left_rows, right_rows);
          rows.clear();
          rows.shrink_to_fit();
          tree.nodes[self].feature = best.feature;
          tree.nodes[self].threshold = best.threshold;
          const int left = grow(std::move(left_rows), depth + 1);
          const int right = grow(std::move(right_rows), depth + 1);
          tree.nodes[self].left = left;
          tree.nodes[self].right = right;
          return self;
        }
      }
    }
    return self;  // leaf
  }

  void partition(const std::vector<int>& rows, int feature, double threshold,
                 std::vector<int>& left, std::vector<int>& right) const {
    for (int r : rows) {
      if (feature == 0) {
        if (cols.k[r] == kNoEvent) {
          left.push_back(r);
          right.push_back(r);
          continue;
        }
        (cols.k[r] <= threshold ? left : right).push_back(r);
      } else {
        (cols.xval(r, feature - 1) <= threshold ? left : right).push_back(r);
      }
    }
  }
};

// Routes estimation rows through the fixed structure and fills node effects;
// unidentified nodes inherit the nearest identified ancestor's estimate.
struct Populator {
  const Columns& cols;
  const ForestConfig& config;
  Tree& tree;
  NodeWork work;

  void fill(int node, std::vector<int> rows, double inherited, bool has_inherited) {
    NodeEstimate est = estimate_node(cols, rows, config, work);
    TreeNode& tn = tree.nodes[node];
    tn.n_treated = est.n_treated;
    tn.n_control = est.n_control;
    tn.degenerate_residualization = est.degenerate;
    if (est.valid) {
      tn.effect = est.effect;
      tn.effect_from_ancestor = false;
      inherited = est.effect;
      has_inherited = true;
    } else if (has_inherited) {
      tn.effect = inherited;
      tn.effect_from_ancestor = true;
    } else if (node == 0) {
      tree.valid = false;  // root unidentified; tree contributes nothing
      tn.effect = 0.0;
      tn.effect_from_ancestor = false;
    }
    if (tn.feature < 0) return;
    std::vector<int> left, right;
    for (int r : rows) {
      if (tn.feature == 0) {
        if (cols.k[r] == kNoEvent) {
          left.push_back(r);
          right.push_back(r);
          continue;
        }
        (cols.k[r] <= tn.threshold ? left : right).push_back(r);
      } else {
        (cols.xval(r, tn.feature - 1) <= tn.threshold ? left : right).push_back(r);
      }
    }
    rows.clear();
    rows.shrink_to_fit();
    fill(tree.nodes[node].left, std::move(left), inherited, has_inherited);
    fill(tree.nodes[node].right, std::move(right), inherited, has_inherited);
  }
};

// Deterministic partial Fisher-Yates draw of m indices from `pool`.
std::vector<int> draw_without_replacement(std::vector<int> pool, std::size_t m,
                                          std::mt19937_64& rng) {
  m = std::min(m, pool.size());
  for (std::size_t i = 0; i < m; ++i) {
    std::size_t j = i + static_cast<std::size_t>(rng() % (pool.size() - i));
    std::swap(pool[i], pool[j]);
  }
  pool.resize(m);
  return pool;
}

int walk(const Tree& tree, int k, std::span<const double> x) {
  int node = 0;
  while (tree.nodes[node].feature >= 0) {
    const TreeNode& tn = tree.nodes[node];
    double v = tn.feature == 0 ? static_cast<double>(k) : x[tn.feature - 1];
    node = v <= tn.threshold ? tn.left : tn.right;
  }
  return node;
}

void check_query(const ForestModel& model, std::span<const double> x) {
  if (x.size() != model.n_features()) {
    throw DimensionMismatch("query has " + std::to_string(x.size()) +
                            " features, model expects " +
                            std::to_string(model.n_features()));
  }
  if (model.trees.empty()) throw InsufficientData("model has no trees");
}

}  // namespace

NodeResiduals residualize_node(std::span<const double> y,
                               std::span<const double> d,
                               std::span<const int> country,
                               std::span<const int> year) {
  if (y.size() != d.size() || y.size() != country.size() ||
      y.size() != year.size()) {
    throw DimensionMismatch("residualize_node inputs differ in length");
  }
  // compact codes
  std::map<int, int> cmap, ymap;
  std::vector<int> ci(country.size()), yi(year.size());
  for (std::size_t r = 0; r < country.size(); ++r)
    ci[r] = cmap.emplace(country[r], static_cast<int>(cmap.size())).first->second;
  for (std::size_t r = 0; r < year.size(); ++r)
    yi[r] = ymap.emplace(year[r], static_cast<int>(ymap.size())).first->second;

  NodeResiduals out;
  out.y_tilde.assign(y.begin(), y.end());
  out.d_tilde.assign(d.begin(), d.end());
  out.degenerate = cmap.size() < 2 || ymap.size() < 2;
  detail::TwoWayScratch scratch;
  if (out.degenerate) {
    // one-dimensional fallback on whichever dimension still varies
    const bool by_country = cmap.size() >= 2;
    const auto& codes = by_country ? ci : yi;
    const int domain = static_cast<int>(by_country ? cmap.size() : ymap.size());
    std::vector<int> ones(y.size(), 0);
    out.sweeps = detail::two_way_demean(out.y_tilde, codes, ones, domain, 1, scratch);
    detail::two_way_demean(out.d_tilde, codes, ones, domain, 1, scratch);
  } else {
    out.sweeps = detail::two_way_demean(out.y_tilde, ci, yi,
                                        static_cast<int>(cmap.size()),
                                        static_cast<int>(ymap.size()), scratch);
    detail::two_way_demean(out.d_tilde, ci, yi, static_cast<int>(cmap.size()),
                           static_cast<int>(ymap.size()), scratch);
  }
  return out;
}

SubsamplePlan subsample_plan(const ForestConfig& config, std::size_t n_rows,
                             int tree_index) {
  if (tree_index < 0 || tree_index >= config.n_trees)
    throw InvalidSpec("tree index outside [0, n_trees)");
  if (n_rows < 2) throw InsufficientData("need at least two rows");

  // the tree's group half-sample, then the tree's own subsample from it
  std::vector<int> all(n_rows);
  std::iota(all.begin(), all.end(), 0);
  auto grng = rng::engine(config.seed, "halfsample",
                          tree_index / variance_group_size(config.n_trees));
  std::vector<int> pool = draw_without_replacement(std::move(all), n_rows / 2, grng);

  auto rng = rng::engine(config.seed, "tree", tree_index);
  const std::size_t m = std::max<std::size_t>(
      2, static_cast<std::size_t>(config.subsample_fraction * pool.size()));
  std::vector<int> sample = draw_without_replacement(std::move(pool), m, rng);

  SubsamplePlan plan;
  if (config.honesty) {
    const std::size_t n_struct = std::max<std::size_t>(
        1, static_cast<std::size_t>(config.honesty_fraction * sample.size()));
    plan.structure_rows.assign(sample.begin(), sample.begin() + n_struct);
    plan.estimation_rows.assign(sample.begin() + n_struct, sample.end());
  } else {
    plan.structure_rows = sample;
    plan.estimation_rows = std::move(sample);
  }
  return plan;
}

ForestModel fit_forest(const PanelDataset& data, const ForestConfig& config,
                       unsigned threads) {
  if (config.n_trees < 1) throw InvalidSpec("n_trees must be positive");
  if (config.min_leaf < 1) throw InvalidSpec("min_leaf must be positive");
  if (config.max_depth < 1) throw InvalidSpec("max_depth must be positive");
  if (config.subsample_fraction <= 0.0 || config.subsample_fraction > 1.0)
    throw InvalidSpec("subsample_fraction must lie in (0, 1]");
  if (config.honesty &&
      (config.honesty_fraction <= 0.0 || config.honesty_fraction >= 1.0))
    throw InvalidSpec("honesty_fraction must lie in (0, 1)");

  Columns cols = make_columns(data);
  const std::size_t n = cols.n();
  std::size_t n_treated_rows = 0;
  for (double d : cols.d) n_treated_rows += d > 0.5;
  const auto need_treated =
      std::max<std::size_t>(1, static_cast<std::size_t>(config.min_treated_per_leaf));
  const auto need_control =
      std::max<std::size_t>(1, static_cast<std::size_t>(config.min_control_per_leaf));
  if (n_treated_rows < need_treated || n - n_treated_rows < need_control) {
    throw InsufficientData("dataset cannot satisfy per-leaf treated/control minima");
  }

  ForestModel model;
  model.config = config;
  model.feature_names = data.feature_names;
  model.trees.resize(config.n_trees);
  model.trees_per_group = variance_group_size(config.n_trees);
  model.k_min = std::numeric_limits<int>::max();
  model.k_max = std::numeric_limits<int>::min();
  for (std::size_t r = 0; r < n; ++r) {
    if (cols.d[r] > 0.5) {
      model.k_min = std::min(model.k_min, cols.k[r]);
      model.k_max = std::max(model.k_max, cols.k[r]);
    }
  }

  parallel_for(config.n_trees, threads, [&](std::size_t t) {
    SubsamplePlan plan = subsample_plan(config, n, static_cast<int>(t));
    Tree& tree = model.trees[t];
    Grower grower(cols, config, tree);
    grower.grow(std::move(plan.structure_rows), 0);
    Populator pop{cols, config, tree, {}};
    pop.fill(0, std::move(plan.estimation_rows), 0.0, false);
  });

  bool any_valid = false;
  for (const auto& tree : model.trees) any_valid |= tree.valid;
  if (!any_valid)
    throw InsufficientData("no tree produced an identified root estimate");
  return model;
}

double predict_cate(const ForestModel& model, int k, std::span<const double> x) {
  check_query(model, x);
  double sum = 0.0;
  int used = 0;
  for (const auto& tree : model.trees) {
    if (!tree.valid) continue;
    sum += tree.nodes[walk(tree, k, x)].effect;
    ++used;
  }
  if (used == 0) throw InsufficientData("no valid trees");
  return sum / used;
}

double forest_variance(const ForestModel& model, int k, std::span<const double> x) {
  check_query(model, x);
  if (model.config.n_trees < 50)
    throw TooFewTrees("variance estimation needs at least 50 trees");
  std::vector<double> group_means;
  const int per = model.trees_per_group;
  for (std::size_t start = 0; start < model.trees.size();
       start += static_cast<std::size_t>(per)) {
    double sum = 0.0;
    int used = 0;
    const std::size_t end = std::min(model.trees.size(), start + per);
    for (std::size_t t = start; t < end; ++t) {
      if (!model.trees[t].valid) continue;
      sum += model.trees[t].nodes[walk(model.trees[t], k, x)].effect;
      ++used;
    }
    if (used > 0) group_means.push_back(sum / used);
  }
  if (group_means.size() < 2)
    throw TooFewTrees("variance estimation needs at least 2 tree groups");
  double mean = kernels::sum(group_means) / group_means.size();
  kernels::shift(-mean, group_means);
  const double var_between =
      kernels::sumsq(group_means) / (group_means.size() - 1);
  // group means are half-sample estimates; halve to rescale to the full sample
  return 0.5 * var_between;
}

FeatureImportance feature_importance(const ForestModel& model) {
  FeatureImportance imp;
  imp.names.push_back("event_time");
  for (const auto& f : model.feature_names) imp.names.push_back(f);
  imp.count.assign(imp.names.size(), 0);
  long total = 0;
  for (const auto& tree : model.trees) {
    for (const auto& node : tree.nodes) {
      if (node.feature >= 0) {
        imp.count[node.feature] += 1;
        ++total;
      }
    }
  }
  if (total == 0) throw NoSplits("forest contains no internal nodes");
  imp.proportion.resize(imp.count.size());
  for (std::size_t j = 0; j < imp.count.size(); ++j)
    imp.proportion[j] = static_cast<double>(imp.count[j]) / total;
  return imp;
}

namespace {

nlohmann::json node_to_json(const TreeNode& n) {
  nlohmann::json j;
  j["f"] = n.feature;
  j["thr"] = n.threshold;
  j["l"] = n.left;
  j["r"] = n.right;
  j["eff"] = n.effect;
  j["nt"] = n.n_treated;
  j["nc"] = n.n_control;
  j["anc"] = n.effect_from_ancestor;
  j["deg"] = n.degenerate_residualization;
  return j;
}

TreeNode node_from_json(const nlohmann::json& j) {
  TreeNode n;
  n.feature = j.at("f").get<int>();
  n.threshold = j.at("thr").get<double>();
  n.left = j.at("l").get<int>();
  n.right = j.at("r").get<int>();
  n.effect = j.at("eff").get<double>();
  n.n_treated = j.at("nt").get<int>();
  n.n_control = j.at("nc").get<int>();
  n.effect_from_ancestor = j.at("anc").get<bool>();
  n.degenerate_residualization = j.at("deg").get<bool>();
  return n;
}

}  // namespace

void save_forest(const ForestModel& model, std::ostream& out) {
  nlohmann::json j;
  j["format"] = "cffe-forest";
  j["format_version"] = 1;
  j["config"] = {
      {"n_trees", model.config.n_trees},
      {"min_leaf", model.config.min_leaf},
      {"max_depth", model.config.max_depth},
      {"honesty", model.config.honesty},
      {"honesty_fraction", model.config.honesty_fraction},
      {"subsample_fraction", model.config.subsample_fraction},
      {"min_treated_per_leaf", model.config.min_treated_per_leaf},
      {"min_control_per_leaf", model.config.min_control_per_leaf},
      {"seed", model.config.seed},
  };
  j["feature_names"] = model.feature_names;
  j["k_min"] = model.k_min;
  j["k_max"] = model.k_max;
  j["trees_per_group"] = model.trees_per_group;
  nlohmann::json trees = nlohmann::json::array();
  for (const auto& tree : model.trees) {
    nlohmann::json tj;
    tj["valid"] = tree.valid;
    nlohmann::json nodes = nlohmann::json::array();
    for (const auto& node : tree.nodes) nodes.push_back(node_to_json(node));
    tj["nodes"] = std::move(nodes);
    trees.push_back(std::move(tj));
  }
  j["trees"] = std::move(trees);
  out << j.dump() << '\n';
  if (!out) throw IoFailure("forest serialization stream went bad");
}

ForestModel load_forest(std::istream& in) {
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw MalformedCsv(std::string("forest file is not valid JSON: ") + e.what());
  }
  if (j.value("format", "") != "cffe-forest")
    throw SchemaMismatch("not a forest model file");
  if (j.value("format_version", -1) != 1)
    throw SchemaMismatch("unsupported forest format version");
  ForestModel model;
  const auto& cfg = j.at("config");
  model.config.n_trees = cfg.at("n_trees").get<int>();
  model.config.min_leaf = cfg.at("min_leaf").get<int>();
  model.config.max_depth = cfg.at("max_depth").get<int>();
  model.config.honesty = cfg.at("honesty").get<bool>();
  model.config.honesty_fraction = cfg.at("honesty_fraction").get<double>();
  model.config.subsample_fraction = cfg.at("subsample_fraction").get<double>();
  model.config.min_treated_per_leaf = cfg.at("min_treated_per_leaf").get<int>();
  model.config.min_control_per_leaf = cfg.at("min_control_per_leaf").get<int>();
  model.config.seed = cfg.at("seed").get<std::uint64_t>();
  model.feature_names = j.at("feature_names").get<std::vector<std::string>>();
  model.k_min = j.at("k_min").get<int>();
  model.k_max = j.at("k_max").get<int>();
  model.trees_per_group = j.at("trees_per_group").get<int>();
  for (const auto& tj : j.at("trees")) {
    Tree tree;
    tree.valid = tj.at("valid").get<bool>();
    for (const auto& nj : tj.at("nodes")) tree.nodes.push_back(node_from_json(nj));
    model.trees.push_back(std::move(tree));
  }
  return model;
}

void save_forest_file(const ForestModel& model, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoFailure("cannot open '" + path + "' for writing");
  save_forest(model, out);
}

ForestModel load_forest_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoFailure("cannot open '" + path + "' for reading");
  return load_forest(in);
}

}  // namespace cffe::forest
