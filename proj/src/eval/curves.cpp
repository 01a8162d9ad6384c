#include "pathoscope/eval/curves.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "pathoscope/core/error.hpp"

namespace pathoscope::eval {

namespace {

std::vector<std::size_t> descending_order(const ScoredSet& set) {
  std::vector<std::size_t> order(set.scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return set.scores[a] > set.scores[b]; });
  return order;
}

}  // namespace

void ScoredSet::validate() const {
  if (scores.size() != labels.size()) {
    throw Error(ErrorCode::LengthMismatch, std::to_string(scores.size()) + " scores vs " +
                                               std::to_string(labels.size()) + " labels");
  }
  for (auto l : labels) {
    if (l > 1) throw Error(ErrorCode::InvalidArgument, "labels must be 0 or 1");
  }
  for (double s : scores) {
    if (!std::isfinite(s)) throw Error(ErrorCode::InvalidArgument, "non-finite score");
  }
}

std::size_t ScoredSet::positives() const {
  return static_cast<std::size_t>(std::count(labels.begin(), labels.end(), std::uint8_t{1}));
}

RocCurve roc_curve(const ScoredSet& set) {
  set.validate();
  const std::uint64_t pos = set.positives(), neg = set.labels.size() - pos;
  if (pos == 0 || neg == 0) throw Error(ErrorCode::SingleClass, "ROC needs both classes");
  const auto order = descending_order(set);
  RocCurve c;
  c.points.push_back({std::numeric_limits<double>::infinity(), 0.0, 0.0});
  std::uint64_t tp = 0, fp = 0, twice_area = 0;
  for (std::size_t i = 0; i < order.size();) {
    const double s = set.scores[order[i]];
    const std::uint64_t tp0 = tp, fp0 = fp;
    for (; i < order.size() && set.scores[order[i]] == s; ++i) (set.labels[order[i]] ? tp : fp) += 1;
    twice_area += (fp - fp0) * (tp + tp0);
    c.points.push_back({s, static_cast<double>(fp) / static_cast<double>(neg),
                        static_cast<double>(tp) / static_cast<double>(pos)});
  }
  c.auc = static_cast<double>(twice_area) / (2.0 * static_cast<double>(pos) * static_cast<double>(neg));
  return c;
}

PrCurve pr_curve(const ScoredSet& set) {
  set.validate();
  const std::size_t pos = set.positives();
  if (pos == 0) throw Error(ErrorCode::NoPositives, "PR needs at least one positive");
  const auto order = descending_order(set);
  PrCurve c;
  std::size_t tp = 0;
  double sum = 0.0;
  for (std::size_t rank = 1; rank <= order.size(); ++rank) {
    const std::size_t i = order[rank - 1];
    if (set.labels[i]) {
      ++tp;
      sum += static_cast<double>(tp) / static_cast<double>(rank);
    }
    c.points.push_back({set.scores[i], static_cast<double>(tp) / static_cast<double>(pos),
                        static_cast<double>(tp) / static_cast<double>(rank)});
  }
  c.ap = sum / static_cast<double>(pos);
  return c;
}

CurveReport evaluate(const ScoredSet& set) {
  CurveReport r{roc_curve(set), pr_curve(set), set.scores.size(), 0.0};
  r.positive_fraction = static_cast<double>(set.positives()) / static_cast<double>(set.scores.size());
  return r;
}

}  // namespace pathoscope::eval
