#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "cffe/panel.hpp"

namespace cffe::forest {

struct ForestConfig {
  int n_trees = 500;
  int min_leaf = 30;
  int max_depth = 5;
  bool honesty = true;
  double honesty_fraction = 0.5;
  double subsample_fraction = 0.5;
  int min_treated_per_leaf = 5;
  int min_control_per_leaf = 5;
  std::uint64_t seed = 42;
};

// Splitting feature 0 is event time; features 1..p are the dataset's
// country-level covariates. Never-treated rows carry no event time and flow
// down both children of an event-time split, so every node keeps its control
// pool.
struct TreeNode {
  int feature = -1;  // -1 marks a leaf
  double threshold = 0.0;
  int left = -1;
  int right = -1;
  double effect = 0.0;
  // estimation-half composition of the node
  int n_treated = 0;
  int n_control = 0;
  // the node's own estimate was unidentified; `effect` inherited from the
  // nearest identified ancestor
  bool effect_from_ancestor = false;
  // residualization fell back to one-dimensional demeaning (single country
  // or single year among the node's estimation rows)
  bool degenerate_residualization = false;
};

struct Tree {
  std::vector<TreeNode> nodes;  // index 0 is the root
  bool valid = true;            // root estimate identified
};

// Trees are organized into (about) kVarianceGroups groups for the
// half-sample variance estimator: each group subsamples from its own half of
// the rows, so the group count stays fixed while groups grow with n_trees and
// the group means converge to their half-sample expectations.
inline constexpr int kVarianceGroups = 25;
inline int variance_group_size(int n_trees) {
  return n_trees <= kVarianceGroups
             ? 1
             : (n_trees + kVarianceGroups - 1) / kVarianceGroups;
}

struct ForestModel {
  ForestConfig config;
  std::vector<std::string> feature_names;  // covariate names, excluding event time
  std::vector<Tree> trees;
  // event-time support of treated rows in the training data
  int k_min = 0;
  int k_max = 0;
  int trees_per_group = 1;  // variance grouping chosen at fit time

  std::size_t n_features() const { return feature_names.size(); }
};

// Row assignment for one tree, reproducible from (config.seed, tree_index)
// alone. Structure rows choose splits; estimation rows fill leaf effects and
// never influence thresholds.
struct SubsamplePlan {
  std::vector<int> structure_rows;
  std::vector<int> estimation_rows;
};
SubsamplePlan subsample_plan(const ForestConfig& config, std::size_t n_rows,
                             int tree_index);

// Residuals of y and d after node-level two-way fixed-effects removal
// (least-squares projection via alternating demeaning on the subset only).
struct NodeResiduals {
  std::vector<double> y_tilde;
  std::vector<double> d_tilde;
  bool degenerate = false;
  int sweeps = 0;
};
NodeResiduals residualize_node(std::span<const double> y,
                               std::span<const double> d,
                               std::span<const int> country,
                               std::span<const int> year);

// Honest causal forest on the panel. Trees are grown on a structure half and
// populated on an estimation half; per-tree randomness depends only on
// (config.seed, tree index), so results are identical for any thread count.
ForestModel fit_forest(const PanelDataset& data, const ForestConfig& config,
                       unsigned threads = 1);

double predict_cate(const ForestModel& model, int k, std::span<const double> x);

// Half-sample group variance of the prediction: trees were fit in groups of
// `trees_per_group`, each group drawing from its own half of the rows;
// between-group variance of the group means, halved, estimates the sampling
// variance of the forest prediction.
double forest_variance(const ForestModel& model, int k, std::span<const double> x);

struct FeatureImportance {
  std::vector<std::string> names;  // "event_time" first, then covariates
  std::vector<double> proportion;
  std::vector<long> count;
};
FeatureImportance feature_importance(const ForestModel& model);

void save_forest(const ForestModel& model, std::ostream& out);
ForestModel load_forest(std::istream& in);
void save_forest_file(const ForestModel& model, const std::string& path);
ForestModel load_forest_file(const std::string& path);

}  // namespace cffe::forest
