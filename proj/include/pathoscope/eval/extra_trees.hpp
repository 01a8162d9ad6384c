#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace pathoscope::eval {

struct ExtraTreesConfig {
  int n_trees = 100;
  int k_candidate_features = 4;  // ceil(sqrt(14))
  int n_min_leaf = 2;            // nodes with this many samples or fewer become leaves
  std::uint64_t seed = 0;

  /// ConfigInvalid unless n_trees >= 1, k >= 1, n_min_leaf >= 1.
  void validate() const;
};

struct TreeNode {
  int feature = -1;  // -1 marks a leaf
  double threshold = 0.0;  // left when value <= threshold
  int left = -1;
  int right = -1;
  double positive_fraction = 0.0;
  friend bool operator==(const TreeNode&, const TreeNode&) = default;
};

struct Tree {
  std::vector<TreeNode> nodes;  // nodes[0] is the root
  double predict(std::span<const double> x) const;
  friend bool operator==(const Tree&, const Tree&) = default;
};

struct Forest {
  std::size_t n_features = 0;
  std::vector<Tree> trees;
  /// Mean over trees of the leaf positive fraction.
  double predict(std::span<const double> x) const;
  friend bool operator==(const Forest&, const Forest&) = default;
};

/// Rows are samples. Every tree sees the full training set. EmptyTraining on
/// no rows or ragged rows, SingleClass unless both labels are present.
Forest extra_trees_train(const std::vector<std::vector<double>>& features, const std::vector<std::uint8_t>& labels,
                         const ExtraTreesConfig& config);

double extra_trees_predict(const Forest& forest, std::span<const double> x);

}  // namespace pathoscope::eval
