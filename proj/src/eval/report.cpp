#include "pathoscope/eval/report.hpp"

#include <cstdio>
#include <sstream>

#include "pathoscope/core/binary_io.hpp"
#include "pathoscope/core/error.hpp"
#include "pathoscope/eval/shape_features.hpp"

namespace pathoscope::eval {

namespace {

std::string num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::vector<std::vector<std::string>> rows(const std::string& text, const std::string& header) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != header) throw Error(ErrorCode::ParseError, "expected header " + header);
  std::vector<std::vector<std::string>> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::istringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) cells.push_back(cell);
    out.push_back(std::move(cells));
  }
  return out;
}

double to_double(const std::string& s) {
  std::size_t used = 0;
  double v = 0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    throw Error(ErrorCode::ParseError, "bad number '" + s + "'");
  }
  if (used != s.size()) throw Error(ErrorCode::ParseError, "bad number '" + s + "'");
  return v;
}

void expect_columns(const std::vector<std::string>& r, std::size_t n) {
  if (r.size() != n) throw Error(ErrorCode::ParseError, "expected " + std::to_string(n) + " columns");
}

}  // namespace

std::vector<MethodReport> compare_methods(const ScoredSet& cnn, const ScoredSet& baseline) {
  cnn.validate();
  baseline.validate();
  if (cnn.scores.size() != baseline.scores.size()) {
    throw Error(ErrorCode::LengthMismatch, "score sets differ in length: " + std::to_string(cnn.scores.size()) +
                                               " vs " + std::to_string(baseline.scores.size()));
  }
  if (cnn.labels != baseline.labels) throw Error(ErrorCode::InvalidArgument, "score sets have different labels");
  return {{"cnn", evaluate(cnn)}, {"extra-trees/" + std::string(kShapeFeatureVersion), evaluate(baseline)}};
}

std::string roc_csv(const RocCurve& roc) {
  std::string out = "threshold,fpr,tpr\n";
  for (const auto& p : roc.points) out += num(p.threshold) + "," + num(p.fpr) + "," + num(p.tpr) + "\n";
  return out;
}

std::string pr_csv(const PrCurve& pr) {
  std::string out = "threshold,recall,precision\n";
  for (const auto& p : pr.points) out += num(p.threshold) + "," + num(p.recall) + "," + num(p.precision) + "\n";
  return out;
}

std::string summary_csv(const std::vector<MethodReport>& reports) {
  std::string out = "method,auc,ap,n,positive_fraction\n";
  for (const auto& r : reports) {
    out += r.method + "," + num(r.report.roc.auc) + "," + num(r.report.pr.ap) + "," + std::to_string(r.report.n) + "," +
           num(r.report.positive_fraction) + "\n";
  }
  return out;
}

std::vector<RocPoint> parse_roc_csv(const std::string& text) {
  std::vector<RocPoint> out;
  for (const auto& r : rows(text, "threshold,fpr,tpr")) {
    expect_columns(r, 3);
    out.push_back({to_double(r[0]), to_double(r[1]), to_double(r[2])});
  }
  return out;
}

std::vector<PrPoint> parse_pr_csv(const std::string& text) {
  std::vector<PrPoint> out;
  for (const auto& r : rows(text, "threshold,recall,precision")) {
    expect_columns(r, 3);
    out.push_back({to_double(r[0]), to_double(r[1]), to_double(r[2])});
  }
  return out;
}

std::vector<SummaryRow> parse_summary_csv(const std::string& text) {
  std::vector<SummaryRow> out;
  for (const auto& r : rows(text, "method,auc,ap,n,positive_fraction")) {
    expect_columns(r, 5);
    out.push_back({r[0], to_double(r[1]), to_double(r[2]), static_cast<std::size_t>(to_double(r[3])), to_double(r[4])});
  }
  return out;
}

std::string method_dir(const std::string& method) { return method.substr(0, method.find('/')); }

void write_reports(const std::filesystem::path& dir, const std::vector<MethodReport>& reports) {
  for (const auto& r : reports) {
    const auto sub = dir / method_dir(r.method);
    std::filesystem::create_directories(sub);
    write_file_atomic(sub / "roc.csv", roc_csv(r.report.roc));
    write_file_atomic(sub / "pr.csv", pr_csv(r.report.pr));
  }
  std::filesystem::create_directories(dir);
  write_file_atomic(dir / "summary.csv", summary_csv(reports));
}

}  // namespace pathoscope::eval
