#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "pathoscope/eval/curves.hpp"

namespace pathoscope::eval {

struct MethodReport {
  std::string method;  // e.g. "cnn", "extra-trees/shape-features-v1"
  CurveReport report;
};

/// Both methods must score the same test patches: LengthMismatch when the
/// sets differ in length, InvalidArgument when their labels disagree.
std::vector<MethodReport> compare_methods(const ScoredSet& cnn, const ScoredSet& baseline);

std::string roc_csv(const RocCurve& roc);  // threshold,fpr,tpr
std::string pr_csv(const PrCurve& pr);     // threshold,recall,precision
std::string summary_csv(const std::vector<MethodReport>& reports);  // method,auc,ap,n,positive_fraction

struct SummaryRow {
  std::string method;
  double auc = 0.0;
  double ap = 0.0;
  std::size_t n = 0;
  double positive_fraction = 0.0;
  friend bool operator==(const SummaryRow&, const SummaryRow&) = default;
};

std::vector<RocPoint> parse_roc_csv(const std::string& text);
std::vector<PrPoint> parse_pr_csv(const std::string& text);
std::vector<SummaryRow> parse_summary_csv(const std::string& text);

/// Directory part of a method name: everything before the first '/'.
std::string method_dir(const std::string& method);

/// <dir>/summary.csv plus <dir>/<method_dir>/roc.csv and pr.csv per method.
void write_reports(const std::filesystem::path& dir, const std::vector<MethodReport>& reports);

}  // namespace pathoscope::eval
