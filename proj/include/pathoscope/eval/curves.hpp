#pragma once

#include <cstdint>
#include <vector>

namespace pathoscope::eval {

struct ScoredSet {
  std::vector<double> scores;
  std::vector<std::uint8_t> labels;  // 1 = positive

  /// LengthMismatch on unequal lengths; InvalidArgument on a label outside
  /// {0,1} or a non-finite score.
  void validate() const;
  std::size_t positives() const;
};

struct RocPoint {
  double threshold;  // +inf for the (0,0) origin
  double fpr;
  double tpr;
  friend bool operator==(const RocPoint&, const RocPoint&) = default;
};

struct PrPoint {
  double threshold;
  double recall;
  double precision;
  friend bool operator==(const PrPoint&, const PrPoint&) = default;
};

struct RocCurve {
  std::vector<RocPoint> points;
  double auc = 0.0;
};

struct PrCurve {
  std::vector<PrPoint> points;
  double ap = 0.0;
};

/// One point per distinct score, highest first; tied scores move together so
/// AUC equals the Mann-Whitney statistic with half credit for ties.
/// SingleClass unless both labels are present.
RocCurve roc_curve(const ScoredSet& set);

/// Step-wise (non-interpolated) AP: mean over positives of the precision at
/// their rank. Ranks order by score descending, ties kept in input order.
/// One point per rank. NoPositives without a positive label.
PrCurve pr_curve(const ScoredSet& set);

struct CurveReport {
  RocCurve roc;
  PrCurve pr;
  std::size_t n = 0;
  double positive_fraction = 0.0;
};

CurveReport evaluate(const ScoredSet& set);

}  // namespace pathoscope::eval
