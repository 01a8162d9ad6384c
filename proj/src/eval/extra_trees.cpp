#include "pathoscope/eval/extra_trees.hpp"

#include <algorithm>
#include <numeric>

#include "pathoscope/core/error.hpp"
#include "pathoscope/core/rng.hpp"

namespace pathoscope::eval {

namespace {

double gini(double pos, double n) {
  if (n == 0) return 0.0;
  const double p = pos / n;
  return 2 * p * (1 - p);
}

class Grower {
 public:
  Grower(const std::vector<std::vector<double>>& x, const std::vector<std::uint8_t>& y, const ExtraTreesConfig& cfg,
         Rng& rng)
      : x_(x), y_(y), cfg_(cfg), rng_(rng) {}

  Tree grow() {
    std::vector<std::size_t> idx(x_.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    Tree tree;
    build(tree, idx);
    return tree;
  }

 private:
  int build(Tree& tree, std::vector<std::size_t>& idx) {
    const int id = static_cast<int>(tree.nodes.size());
    tree.nodes.emplace_back();
    double pos = 0;
    for (auto i : idx) pos += y_[i];
    const double n = static_cast<double>(idx.size());
    tree.nodes[static_cast<std::size_t>(id)].positive_fraction = pos / n;
    if (idx.size() <= static_cast<std::size_t>(cfg_.n_min_leaf) || pos == 0 || pos == n) return id;

    // Features that still vary at this node, with their ranges.
    std::vector<std::size_t> live;
    std::vector<std::pair<double, double>> range(x_[0].size());
    for (std::size_t f = 0; f < range.size(); ++f) {
      double lo = x_[idx[0]][f], hi = lo;
      for (auto i : idx) lo = std::min(lo, x_[i][f]), hi = std::max(hi, x_[i][f]);
      range[f] = {lo, hi};
      if (lo < hi) live.push_back(f);
    }
    if (live.empty()) return id;

    const std::size_t k = std::min(live.size(), static_cast<std::size_t>(cfg_.k_candidate_features));
    for (std::size_t j = 0; j < k; ++j) {
      const auto pick = j + static_cast<std::size_t>(uniform_int(rng_, 0, static_cast<std::int64_t>(live.size() - j - 1)));
      std::swap(live[j], live[pick]);
    }

    const double parent = gini(pos, n);
    double best_gain = -1.0, best_t = 0.0;
    std::size_t best_f = 0;
    for (std::size_t j = 0; j < k; ++j) {
      const std::size_t f = live[j];
      const auto [lo, hi] = range[f];
      double t = lo + uniform01(rng_) * (hi - lo);
      if (t >= hi) t = lo;
      double nl = 0, pl = 0;
      for (auto i : idx)
        if (x_[i][f] <= t) nl += 1, pl += y_[i];
      const double nr = n - nl, pr = pos - pl;
      const double gain = parent - (nl / n) * gini(pl, nl) - (nr / n) * gini(pr, nr);
      if (gain > best_gain) best_gain = gain, best_t = t, best_f = f;
    }

    std::vector<std::size_t> left, right;
    for (auto i : idx) (x_[i][best_f] <= best_t ? left : right).push_back(i);
    idx.clear();
    idx.shrink_to_fit();
    const int l = build(tree, left);
    const int r = build(tree, right);
    auto& node = tree.nodes[static_cast<std::size_t>(id)];
    node.feature = static_cast<int>(best_f);
    node.threshold = best_t;
    node.left = l;
    node.right = r;
    return id;
  }

  const std::vector<std::vector<double>>& x_;
  const std::vector<std::uint8_t>& y_;
  const ExtraTreesConfig& cfg_;
  Rng& rng_;
};

}  // namespace

void ExtraTreesConfig::validate() const {
  if (n_trees < 1) throw Error(ErrorCode::ConfigInvalid, "n_trees must be >= 1");
  if (k_candidate_features < 1) throw Error(ErrorCode::ConfigInvalid, "k_candidate_features must be >= 1");
  if (n_min_leaf < 1) throw Error(ErrorCode::ConfigInvalid, "n_min_leaf must be >= 1");
}

double Tree::predict(std::span<const double> x) const {
  std::size_t i = 0;
  while (nodes[i].feature >= 0) {
    i = static_cast<std::size_t>(x[static_cast<std::size_t>(nodes[i].feature)] <= nodes[i].threshold ? nodes[i].left
                                                                                                      : nodes[i].right);
  }
  return nodes[i].positive_fraction;
}

double Forest::predict(std::span<const double> x) const {
  if (x.size() != n_features) throw Error(ErrorCode::ShapeMismatch, "feature vector length differs from training");
  double sum = 0.0;
  for (const auto& t : trees) sum += t.predict(x);
  return sum / static_cast<double>(trees.size());
}

Forest extra_trees_train(const std::vector<std::vector<double>>& x, const std::vector<std::uint8_t>& y,
                         const ExtraTreesConfig& cfg) {
  cfg.validate();
  if (x.empty() || x[0].empty()) throw Error(ErrorCode::EmptyTraining, "no training samples");
  if (x.size() != y.size()) throw Error(ErrorCode::LengthMismatch, "features and labels differ in length");
  for (const auto& row : x) {
    if (row.size() != x[0].size()) throw Error(ErrorCode::EmptyTraining, "ragged feature rows");
  }
  const auto pos = std::count(y.begin(), y.end(), std::uint8_t{1});
  if (pos == 0 || pos == static_cast<std::ptrdiff_t>(y.size())) {
    throw Error(ErrorCode::SingleClass, "extra-trees training needs both classes");
  }
  Forest forest{x[0].size(), {}};
  for (int t = 0; t < cfg.n_trees; ++t) {
    Rng rng(derive_seed(cfg.seed, static_cast<std::uint64_t>(t)));
    forest.trees.push_back(Grower(x, y, cfg, rng).grow());
  }
  return forest;
}

double extra_trees_predict(const Forest& forest, std::span<const double> x) { return forest.predict(x); }

}  // namespace pathoscope::eval
